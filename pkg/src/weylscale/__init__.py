"""Weyl-Sims disks, M-functions and resolvents for linear Hamiltonian systems on time scales."""

from .errors import *  # noqa: F401,F403
from .hamiltonian import (
    CoefficientSystem,
    FundamentalTrajectory,
    J_matrix,
    fundamental_pair,
    greens_residual,
    propagate,
    propagate_adjoint,
    regressivity_check,
    transfer_K,
    transform_slices,
    unhat,
    unhat_trajectory,
)
from .mfunction import (
    MEstimate,
    WeylSolutionPair,
    coupling_identities,
    default_anchor,
    identity_m_difference,
    m_estimate,
    stable_weyl_solutions,
    tail_coupling,
    w_norm_bound,
    weyl_solutions,
)
from .problems import (
    Problem,
    ScalarProblemSpec,
    build_even_order,
    build_fourth_order,
    build_orr_sommerfeld,
    build_sturm_liouville,
    reconstruct_scalar,
)
from .resolvent import (
    GreenKernel,
    ResolventResult,
    apply_adjoint_resolvent,
    apply_resolvent,
    green_kernel,
    kernel_eval,
    norm_inequalities,
    operator_residual,
    resolvent_residual,
)
from .timescale import TimeScale, make_continuous, make_discrete, make_uniform_discrete
from .weylsims import (
    RotationU,
    WeylDisk,
    admissible,
    cone_margin,
    disk,
    disk_at,
    make_rotation,
    membership,
    nesting_report,
    rotation_from_eta,
    stp,
    weight_W,
)

__version__ = "0.1.0"
