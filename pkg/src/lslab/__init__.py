"""Numerical best constants of the log-Sobolev functional on 1D model domains."""

from .construction import (
    Certificate,
    ComponentSpec,
    assemble_counterexample,
    build_component_sequence,
    choose_neck_length,
    disconnected_infimum,
    find_pinch_exponent,
    no_extremal_certificate,
)
from .errors import LSLabError
from .functional import (
    FunctionalValue,
    el_residual,
    evaluate_log_sobolev,
    evaluate_w_entropy,
    functional_gradient,
    l2_norm_sq,
)
from .geometry import (
    DisconnectedDomain,
    DomainChain,
    FiberProfile,
    PinchFamily,
    Segment,
    apply_pinch,
    chain,
    chain_from_spec,
    chain_to_spec,
    concatenate,
    disjoint_union,
    handbag_pinch,
    make_core_surrogate,
    make_flat_tube,
    make_handbag,
    make_line,
    make_round_neck,
    make_segment,
)
from .grid import DiscreteField, Grid, build_grid, sample
from .solver import SolverOptions, SpectralResult, lambda_at_infinity, minimize_log_sobolev
from .verification import DecayFit, LemmaReport

__version__ = "0.1.0"
