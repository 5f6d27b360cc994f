"""Finite-time coherent sets of volume-preserving planar dynamics.

Build the box-transfer matrix of a flow, combine it with a five-point
stencil into the dynamics-averaged operator, take the leading eigenvectors,
and optimize the combined before/after boundary-length-to-volume ratio over
their level sets.  A smoothing-operator module verifies the small-radius
limit connecting the probabilistic transfer-operator construction to the
same operator.
"""

from .accel import get_backend, set_backend
from .coherent import (
    CoherentSetResult,
    ContourSet,
    Polyline,
    cheeger_upper_bound,
    curve_length,
    marching_squares,
    optimize_cheeger,
    pushforward_contour,
    sobolev_ratio,
    transport_curve,
    volumes,
)
from .difflimit import (
    LimitReport,
    SmoothingKernel,
    apply_smoothing,
    make_kernel,
    verify_limit,
)
from .dynamics import (
    FlowMap,
    builtin_identity,
    builtin_shear,
    builtin_standard_map,
    builtin_torus_shear,
    builtin_transitory_flow,
    check_volume_preservation,
    compose,
    integrate_rk4,
    ode_flow,
    parse_expression,
    parse_vector_field,
    transitory_velocity,
)
from .errors import *  # noqa: F401,F403 - small, curated exception module
from .grid import Domain, Grid, ScalarField, box_of, intra_box_points
from .operators import (
    DiscreteOperator,
    ObjectivityReport,
    assemble_dynamic_laplacian,
    assemble_laplacian,
    assemble_multistep,
    objectivity_check,
    save_operator,
    sparse_identity,
    symmetrize,
)
from .pipeline import (
    CASE_CONFIGS,
    REFERENCES,
    PipelineResult,
    RunConfig,
    run_case_study,
    run_pipeline,
    separatrix_comparison,
)
from .render import render_heatmap
from .spectral import Spectrum, rayleigh_quotient, solve_leading
from .transfer import TransitionMatrix, build_ulam, load_transition, pushforward, save_transition

__version__ = "0.1.0"
