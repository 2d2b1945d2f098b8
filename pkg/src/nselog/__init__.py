"""nselog: nested-logarithm regularity criteria evaluated on real spectral data.

A numerics toolkit pairing exact scalar evaluation of nested-logarithm
formulas (critical exponents, commutator weights, dimension bounds, the
limiting ODE) with a pseudo-spectral periodic 3D incompressible
Navier-Stokes solver, so the inequalities and identities those formulas
enter can be monitored along actual numerical trajectories.
"""

__version__ = "0.1.0"

from .nestedlog import (
    CriticalConstants,
    DeltaSequence,
    DivergentDeltaError,
    InterpExponents,
    ProductValue,
    SumClass,
    alpha,
    delta_sequence_from_record,
    f1_inf,
    f2_inf,
    h_func,
    interp_exponents,
    log_fixed_point,
    nested_log,
    optimal_deltas,
    phi_threshold,
    psi,
    truncated_product,
)
from .spectral import (
    Grid3,
    SpectralField,
    VectorField,
    advection_commutator,
    frac_laplacian,
    grad_sup_norm,
    leray_project,
    lp_norm,
    lp_projection,
    sobolev_norm,
    to_physical,
    to_spectral,
)
from .nse_solver import (
    BlowUpError,
    CflDt,
    DiagnosticsRow,
    FixedDt,
    SolverConfig,
    SolverState,
    commutator_bound_check,
    energy_identity_residual,
    run,
    shear_mode,
    step,
    taylor_green,
)
from .criterion import (
    CriterionVerdict,
    LogDecay,
    LogGrowth,
    NormInfiniteError,
    admissibility,
    loglebesgue_norm,
    synth_radial_profile,
)
from .limit_ode import OdeParams, OdeTrajectory, integrate, osgood_bound, z_star
from .hausdorff import (
    ExceptionalSet,
    box_counting_dim,
    dim_bound,
    dim_bound_scan,
    lambda_threshold,
)
from .fieldio import read_field, read_mask, write_field, write_mask
