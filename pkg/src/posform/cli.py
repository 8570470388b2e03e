"""Command-line front end: ``posform <command> [file] [options]``.

Reports are flat ``key: value`` (text) or ``key=value`` (kv) blocks.
Exit status is 0 on success, 1 when a requested quantity is undefined
and 2 on errors.
"""

from __future__ import annotations

import argparse
import math
import sys
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dsl import DSLError, Document, Model, build, format_complex, network_document, parse, serialize
from .errors import CyclicOrientationError, PosformError
from .network import Network, evaluate, evaluate_sliced, plan_contraction
from .operational import Outcome, causality_class, check_hierarchy, quotient
from .probes import is_primitive
from .spaces import DEFAULT_TOL

EXIT_OK, EXIT_UNDEFINED, EXIT_ERROR = 0, 1, 2


@dataclass
class Options:
    tol: float = DEFAULT_TOL
    plan: str = "greedy"
    parallel: int = 1
    example: str = ""
    dim: int = 2
    emit: bool = False


@dataclass
class Report:
    entries: list[tuple[str, str]] = field(default_factory=list)
    exit_code: int = EXIT_OK
    body: Optional[str] = None  # raw output (fmt, emitted documents)
    notes: list[str] = field(default_factory=list)

    def add(self, key: str, value):
        self.entries.append((key, _fmt(value)))

    def get(self, key: str) -> Optional[str]:
        for k, v in self.entries:
            if k == key:
                return v
        return None

    def render(self, style: str = "text") -> str:
        if self.body is not None:
            return self.body
        sep = "=" if style == "kv" else ": "
        return "".join(f"{k}{sep}{v}\n" for k, v in self.entries)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, complex):
        return format_complex(v)
    return str(v)


def _scale(n: Network) -> float:
    s = math.prod(float(np.linalg.norm(p.tensor)) for p in n.probes.values())
    return s * math.prod(float(np.linalg.norm(b.coeffs)) for b in n.boundaries.values())


def _value(n: Network, opts: Options) -> float:
    return evaluate(n, plan_contraction(n, opts.plan), parallel=opts.parallel)


def _put_outcome(rep: Report, key: str, out: Outcome):
    if out.defined:
        rep.add(f"{key}.kind", out.kind)
        rep.add(f"{key}.value", out.value)
    else:
        rep.add(f"{key}.kind", "undefined")
        rep.add(f"{key}.reason", out.reason)
        rep.exit_code = max(rep.exit_code, EXIT_UNDEFINED)


def _check(doc: Document, model: Model, opts: Options, rep: Report):
    n = model.network()
    rep.add("status", "ok")
    rep.add("spaces", len(model.spaces))
    rep.add("links", len(model.links))
    rep.add("probes", len(model.probes))
    rep.add("queries", len(model.queries))
    rep.add("regions", " ".join(model.defaults) or "-")
    rep.add("open_links", " ".join(n.open_links) or "-")
    rep.add("closed", n.is_closed)
    for pid, p in model.probes.items():
        rep.add(f"probe.{pid}.region", p.region)
        rep.add(f"probe.{pid}.active", model.defaults[p.region] == pid)
        rep.add(f"probe.{pid}.primitive", is_primitive(p, opts.tol))
    if doc.comments:
        rep.notes.append(f"{doc.comments} comment line(s) not part of the document")


def _plan(model: Model, opts: Options, rep: Report):
    n = model.network()
    plan = plan_contraction(n, opts.plan)
    rep.add("strategy", opts.plan)
    rep.add("steps", len(plan.steps))
    for i, s in enumerate(plan.steps, 1):
        rep.add(f"step.{i}", f"({' '.join(s.left)}) x ({' '.join(s.right)}) over [{' '.join(s.links)}] -> {s.size}")
    rep.add("peak", plan.peak)


def _eval(model: Model, opts: Options, rep: Report):
    n = model.network()
    rep.add("value", _value(n, opts))
    orient = model.orientation(n)
    if orient is None or not n.probes:
        rep.add("orientation", "none")
        return
    try:
        sliced = evaluate_sliced(n, orient)
    except CyclicOrientationError:
        rep.add("orientation", "cyclic")
        return
    rep.add("orientation", "acyclic")
    rep.add("value.sliced", sliced)


def _quotient_queries(model: Model, opts: Options, rep: Report, kind: str):
    base = model.network()
    count = 0
    for k, q in enumerate(model.queries, 1):
        if q.kind != kind:
            continue
        count += 1
        p_, q_ = (model.probes[x] for x in q.probes)
        key = f"query.{k}"
        rep.add(f"{key}.probes", " ".join(q.probes))
        if kind == "prob" and p_.region == q_.region and p_.signature == q_.signature:
            rep.add(f"{key}.hierarchy", check_hierarchy(p_, q_, opts.tol))
        num_net = base.with_probe(p_)
        den_net = base.with_probe(q_)
        num = _value(num_net, opts)
        den = _value(den_net, opts)
        out = quotient(num, den, _scale(den_net), "probability" if kind == "prob" else "expectation", opts.tol)
        _put_outcome(rep, key, out)
    rep.add("queries", count)


def _causality(model: Model, opts: Options, rep: Report):
    count = 0
    for k, q in enumerate(model.queries, 1):
        if q.kind != "causality":
            continue
        count += 1
        flags = causality_class(model.probes[q.probes[0]], q.in_links, q.out_links, opts.tol)
        rep.add(f"query.{k}.probe", q.probes[0])
        for name, v in flags.as_dict().items():
            rep.add(f"query.{k}.{name}", v)
    rep.add("queries", count)


def _teleport(opts: Options, rep: Report):
    from .examples import teleport_channel, teleportation_network

    n = opts.dim
    if n < 1:
        raise ValueError("--dim must be positive")
    rng = np.random.default_rng(n)
    psi = rng.normal(size=n) + 1j * rng.normal(size=n)
    psi /= np.linalg.norm(psi)
    pure = np.outer(psi, psi.conj())
    if opts.emit:
        rep.body = serialize(network_document(teleportation_network(n, pure, pure)))
        return
    m = teleport_channel(n).matrix
    rep.add("dim", n)
    rep.add("max_deviation", float(np.abs(m - np.eye(m.shape[0])).max()))
    rep.add("fidelity", evaluate(teleportation_network(n, pure, pure)))


def _process(opts: Options, rep: Report):
    from .examples import default_process_setting, process_probability

    s = default_process_setting(opts.dim)
    total = 0.0
    for i in s.alice.labels:
        for j in s.bob.labels:
            out = process_probability(s, i, j)
            _put_outcome(rep, f"p.{i}.{j}", out)
            total += out.value if out.defined else 0.0
    rep.add("total", total)


def _threelab(opts: Options, rep: Report):
    from .examples import threelab_example, threelab_quantum_instance, threelab_sliced_value

    probes, b = threelab_quantum_instance(seed=0, d=opts.dim)
    r = threelab_example(probes, b, tol=opts.tol)
    for k, out in r.items.items():
        _put_outcome(rep, f"item.{k}", out)
    rep.add("mu", r.mu)
    rep.add("independence_gap", r.independence_gap if r.independence_gap is not None else "undefined")
    rep.add("item7_matches_item6", bool(r.item7_matches_item6))
    rep.add("value.sliced", threelab_sliced_value(probes, b))


_EXAMPLES = {"teleport": _teleport, "process": _process, "threelab": _threelab}
COMMANDS = ("check", "plan", "eval", "prob", "expect", "causality", "fmt", "examples")


def run(command: str, document: Optional[Document] = None, options: Optional[Options] = None) -> Report:
    """Execute one command and return its report (never raises for bad input)."""
    opts = options or Options()
    rep = Report()
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            if command == "examples":
                if opts.example not in _EXAMPLES:
                    raise ValueError(f"unknown example {opts.example!r} ({', '.join(_EXAMPLES)})")
                _EXAMPLES[opts.example](opts, rep)
                return rep
            if command not in COMMANDS:
                raise ValueError(f"unknown command {command!r}")
            if document is None:
                raise ValueError(f"{command} needs a document")
            if command == "fmt":
                rep.body = serialize(document)
                if document.comments:
                    rep.notes.append(f"dropped {document.comments} comment line(s)")
                return rep
            model = build(document)
            if command == "check":
                _check(document, model, opts, rep)
            elif command == "plan":
                _plan(model, opts, rep)
            elif command == "eval":
                _eval(model, opts, rep)
            elif command in ("prob", "expect"):
                _quotient_queries(model, opts, rep, command)
            else:
                _causality(model, opts, rep)
    except DSLError as e:
        return _error(e.message, e.line, e.col)
    except (PosformError, ValueError) as e:
        return _error(str(e))
    return rep


def _error(message: str, line: Optional[int] = None, col: Optional[int] = None) -> Report:
    rep = Report(exit_code=EXIT_ERROR)
    rep.add("status", "error")
    if line is not None:
        rep.add("line", line)
        rep.add("col", col)
    rep.add("error", message)
    return rep


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="posform", description="Evaluate probe networks written in the posform text format.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("target", nargs="?", default="-",
                    help="document file ('-' for stdin), or the example name for 'examples'")
    ap.add_argument("--tol", type=float, default=DEFAULT_TOL, help="positivity and clamping tolerance")
    ap.add_argument("--plan", default="greedy", help="greedy | baseline | random:<seed>")
    ap.add_argument("--parallel", type=int, default=1,
                    help="threads for evaluation; results may differ from serial by float rounding (<= 1e-9 relative)")
    ap.add_argument("--report", choices=("text", "kv"), default="text")
    ap.add_argument("--dim", type=int, default=2, help="dimension for examples")
    ap.add_argument("--emit", action="store_true", help="examples teleport: print the network as a document")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    opts = Options(tol=args.tol, plan=args.plan, parallel=args.parallel, dim=args.dim, emit=args.emit)
    doc = None
    if args.command == "examples":
        opts.example = args.target
        rep = run("examples", None, opts)
    else:
        try:
            if args.target == "-":
                data = sys.stdin.buffer.read()
            else:
                with open(args.target, "rb") as f:
                    data = f.read()
            doc = parse(data)
        except DSLError as e:
            rep = _error(e.message, e.line, e.col)
        except OSError as e:
            rep = _error(str(e))
        else:
            rep = run(args.command, doc, opts)
    sys.stdout.write(rep.render(args.report))
    for note in rep.notes:
        print(f"note: {note}", file=sys.stderr)
    return rep.exit_code


if __name__ == "__main__":
    sys.exit(main())
