import pathlib
import subprocess
import sys

import pytest

from posform.cli import Options, main, run
from posform.dsl import parse

DOCS = pathlib.Path(__file__).parent / "documents"


def cli(capsys, *args):
    code = main([str(a) for a in args])
    out = capsys.readouterr()
    return code, out.out, out.err


def kv(text):
    return dict(line.split("=", 1) for line in text.splitlines())


def test_loop_evaluates_to_basis_dim(capsys):
    code, out, _ = cli(capsys, "eval", DOCS / "loop.pf", "--report", "kv")
    assert code == 0
    assert kv(out)["value"] == "4.0"
    assert kv(out)["orientation"] == "cyclic"


def test_single_probe_plan(capsys):
    code, out, _ = cli(capsys, "plan", DOCS / "single_probe.pf")
    assert code == 0
    assert "steps: 0\n" in out


def test_plan_strategies(capsys):
    for strategy in ["greedy", "baseline", "random:3"]:
        code, out, _ = cli(capsys, "plan", DOCS / "teleport2.pf", "--plan", strategy, "--report", "kv")
        assert code == 0 and kv(out)["strategy"] == strategy
    code, out, _ = cli(capsys, "plan", DOCS / "teleport2.pf", "--plan", "clever")
    assert code == 2


def test_teleport_document_fidelity_one(capsys, tmp_path):
    code, text, _ = cli(capsys, "examples", "teleport", "--dim", "3", "--emit")
    assert code == 0
    doc = tmp_path / "t.pf"
    doc.write_text(text)
    code, out, _ = cli(capsys, "eval", doc, "--report", "kv")
    r = kv(out)
    assert float(r["value"]) == pytest.approx(1.0, abs=1e-12)
    assert float(r["value.sliced"]) == pytest.approx(float(r["value"]), abs=1e-10)


def test_directed_document_matches_undirected(capsys):
    code, out, _ = cli(capsys, "eval", DOCS / "kraus_chain.pf", "--report", "kv")
    r = kv(out)
    assert code == 0 and r["orientation"] == "acyclic"
    assert float(r["value.sliced"]) == pytest.approx(float(r["value"]), abs=1e-10)
    assert float(r["value"]) == pytest.approx(0.32, abs=1e-12)


def test_zero_denominator_exit_code(capsys):
    code, out, _ = cli(capsys, "prob", DOCS / "zero_denominator.pf", "--report", "kv")
    r = kv(out)
    assert code == 1
    assert r["query.2.kind"] == "undefined"
    assert r["query.2.reason"] == "denominator_zero"
    assert r["query.1.value"] == "0.0"


def test_prob_and_expect_values(capsys):
    code, out, _ = cli(capsys, "prob", DOCS / "instrument.pf", "--report", "kv")
    r = kv(out)
    assert code == 0
    assert float(r["query.1.value"]) == pytest.approx(0.25)
    assert float(r["query.2.value"]) == pytest.approx(0.75)
    assert r["query.1.hierarchy"] == "true"
    code, out, _ = cli(capsys, "expect", DOCS / "instrument.pf", "--report", "kv")
    assert float(kv(out)["query.3.value"]) == pytest.approx(0.25)
    code, out, _ = cli(capsys, "prob", DOCS / "classical_theory.pf", "--report", "kv")
    assert float(kv(out)["query.1.value"]) == pytest.approx(1 / 1.75)
    code, out, _ = cli(capsys, "prob", DOCS / "amplitude.pf", "--report", "kv")
    assert float(kv(out)["query.1.value"]) == pytest.approx(1.0)


def test_causality_report(capsys):
    code, out, _ = cli(capsys, "causality", DOCS / "kraus_chain.pf", "--report", "kv")
    r = kv(out)
    assert code == 0
    assert r["query.2.forward_preserving"] == "true"
    assert r["query.2.backward_preserving"] == "false"


def test_check_report(capsys):
    code, out, err = cli(capsys, "check", DOCS / "kraus_chain.pf", "--report", "kv")
    r = kv(out)
    assert code == 0 and r["status"] == "ok"
    assert r["probe.D.primitive"] == "true" and r["probe.K.active"] == "false"
    assert "comment" in err


def test_errors_exit_two(capsys, tmp_path):
    bad = tmp_path / "bad.pf"
    bad.write_text("space q quantum 2\nlink a : q\nprobe P region M links a data 1 2\n")
    code, out, _ = cli(capsys, "eval", bad, "--report", "kv")
    r = kv(out)
    assert code == 2 and r["status"] == "error" and r["line"] == "3"
    open_doc = tmp_path / "open.pf"
    open_doc.write_text("space q quantum 2\nlink a : q\nprobe P region M links a data 1 0 0 1\n")
    code, out, _ = cli(capsys, "eval", open_doc, "--report", "kv")
    assert code == 2 and "a" in kv(out)["error"]
    code, out, _ = cli(capsys, "eval", tmp_path / "missing.pf")
    assert code == 2


def test_fmt_is_canonical_and_notes_comments(capsys):
    code, out, err = cli(capsys, "fmt", DOCS / "loop.pf")
    assert code == 0
    assert "#" not in out and "dropped 1 comment" in err
    assert out == run("fmt", parse(out)).body


def test_examples(capsys):
    code, out, _ = cli(capsys, "examples", "teleport", "--dim", "4", "--report", "kv")
    r = kv(out)
    assert code == 0 and float(r["max_deviation"]) <= 1e-12
    code, out, _ = cli(capsys, "examples", "process", "--report", "kv")
    assert float(kv(out)["total"]) == pytest.approx(1.0)
    code, out, _ = cli(capsys, "examples", "threelab", "--report", "kv")
    r = kv(out)
    assert r["item7_matches_item6"] == "true"
    assert float(r["item.6.value"]) == pytest.approx(float(r["item.7.value"]), abs=1e-9)
    code, out, _ = cli(capsys, "examples", "nothing")
    assert code == 2


def test_reports_are_deterministic(capsys):
    for path in sorted(DOCS.glob("*.pf")):
        for command in ("check", "plan", "eval", "prob"):
            first = cli(capsys, command, path)
            second = cli(capsys, command, path)
            assert first == second


def test_parallel_within_tolerance(capsys):
    _, serial, _ = cli(capsys, "eval", DOCS / "hybrid.pf", "--report", "kv")
    _, threaded, _ = cli(capsys, "eval", DOCS / "hybrid.pf", "--report", "kv", "--parallel", "4")
    a, b = float(kv(serial)["value"]), float(kv(threaded)["value"])
    assert abs(a - b) <= 1e-9 * max(1.0, abs(a))


def test_run_without_document():
    assert run("eval", None, Options()).exit_code == 2


def test_module_entry_point():
    res = subprocess.run(
        [sys.executable, "-m", "posform", "plan", str(DOCS / "single_probe.pf")], capture_output=True, text=True
    )
    assert res.returncode == 0 and "steps: 0" in res.stdout
