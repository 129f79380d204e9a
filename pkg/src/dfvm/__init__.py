"""Mesh-free PDE solver trained with control-volume flux losses.

Small dense networks are fit to second-order PDEs by minimizing either the
control-volume loss (surface-flux quadrature of -A grad u over a per-point
sphere or cube, no second derivatives anywhere) or the pointwise strong
residual baseline. Everything runs on a first-order reverse-mode tape over
dense float64 numpy arrays.
"""

from .autodiff import Gradients, ShapeError, Tape, one_minus_square
from .bench import BenchRow, bench_ad, bench_method_step, time_call
from .divest import (
    ANALYTIC_FIELDS,
    ESTIMATORS,
    AnalyticField,
    CoefficientField,
    brute_divergence,
    brute_divergence_batch,
    identity_coefficients,
    q1_sphere_ad,
    q2_sphere_diff,
    q3_sphere_onesided,
    q4_constant_alpha,
    q5_split,
)
from .loss import (
    LossConfig,
    ResidualBatch,
    dfvm_loss,
    flux_cube,
    flux_cube_batch,
    flux_from_faces,
    flux_sphere,
    lower_order_values,
    pinn_loss,
)
from .network import (
    Network,
    NetworkConfig,
    NetField,
    as_field,
    eval_fcnn,
    eval_resnet,
    init_params,
    input_gradient,
    load_params,
    make_network,
    save_params,
)
from .problems import (
    PdeProblem,
    black_scholes,
    get_problem,
    nonlinear_elliptic,
    poisson_highdim,
    poisson_lshape,
    problem_names,
)
from .sampling import (
    ControlVolumeSpec,
    FaceSet,
    Hypercube,
    LShape,
    SpaceTime,
    axis_directions,
    box_face_points,
    cube_face_points,
    face_offsets,
    sample_boundary,
    sample_interior,
    sobol,
    sphere_directions,
)
from .train import (
    AdamState,
    MetricsRow,
    TrainConfig,
    TrainDiverged,
    adam_init,
    adam_step,
    relative_l2,
    train,
)

__version__ = "0.1.0"
