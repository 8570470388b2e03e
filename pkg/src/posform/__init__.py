"""Probes, boundary spaces and contraction networks at finite dimension."""

from .errors import (
    CyclicOrientationError,
    ExactnessError,
    HierarchyError,
    InvalidSpaceError,
    MissingBoundaryError,
    NetworkError,
    NormalizationError,
    PosformError,
    SignatureError,
    SpaceMismatchError,
)
from .network import (
    Network,
    Plan,
    compose,
    evaluate,
    evaluate_by_gluing,
    evaluate_einsum,
    evaluate_sliced,
    glue_disjoint,
    optimal_peak,
    plan_contraction,
    self_glue,
)
from .operational import Outcome, causality_class, expectation, probability
from .probes import Instrument, Port, Probe, from_kraus, is_primitive, null_probe_slice, pair, probe_map
from .spaces import (
    Element,
    StateSpace,
    inner,
    is_positive,
    make_classical,
    make_quantum,
    max_uncertainty,
    tensor,
)

__version__ = "0.1.0"
