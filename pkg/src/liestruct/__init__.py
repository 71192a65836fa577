"""Numerical geometry of manifolds with a Lie structure at infinity."""

__version__ = "0.1.0"

from .algebroid import Algebroid, SamplingPlan, builtin, custom, structure_functions, validate
from .chart import Chart, boundary_depth, defining_function
from .expr import parse_expr, to_string
from .forms import AForm, SpinorField, clifford_rep, codifferential, deRham_d, dirac, hodge_laplacian
from .geoflow import GeodesicState, integrate, make_state
from .jets import Bump, eval_jet
from .riemann import MetricOnA, curvature, koszul, sectional_curvature

__all__ = [
    "AForm",
    "Algebroid",
    "Bump",
    "Chart",
    "GeodesicState",
    "MetricOnA",
    "SamplingPlan",
    "SpinorField",
    "boundary_depth",
    "builtin",
    "clifford_rep",
    "codifferential",
    "curvature",
    "custom",
    "deRham_d",
    "defining_function",
    "dirac",
    "eval_jet",
    "hodge_laplacian",
    "integrate",
    "koszul",
    "make_state",
    "parse_expr",
    "sectional_curvature",
    "structure_functions",
    "to_string",
    "validate",
]
