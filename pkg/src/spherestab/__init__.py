"""Sample-and-hold stabilization laboratory on the embedded unit sphere."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DegenerateNearestPointError,
    DomainError,
    ParameterError,
    TubeMembershipError,
    UndefinedDirectionError,
)
from .geometry import (
    ATTRACTOR,
    MARKED,
    Q,
    R,
    SPHERE_TUBE,
    TubeConfig,
    base_fields,
    bump_m1,
    fibonacci_sphere,
    geodesic_direction,
    geodesic_distance,
    phi,
    require_unit,
    smoothstep,
    sphere_project,
    tube_decompose,
)
from .dynamics import ExtendedControl, f1, f2, f_sphere
from .sampling import (
    NoiseModel,
    Partition,
    PiTrajectory,
    integrate_pi_solution_noisy,
    integrate_pi_trajectory,
    make_partition,
    sphere_drift,
    ultimate_radius,
)
from .feedback import (
    ControlSchedule,
    ProofBounds,
    approach_control,
    build_extension_controls,
    compute_bounds,
    held_control,
    k_sphere,
    v_schedule,
    w_schedule,
)
from .lyapunov import (
    V,
    V_q,
    V_r,
    attractor_distance,
    check_decay,
    check_gauss,
    check_integral_decay,
    default_alpha3,
    mu,
)
from .kernels import (
    ClosedLoopBatch,
    ExtensionBatch,
    run_closed_loop_batch,
    run_extension_batch,
    warm_up,
)
from .harness import (
    MONOTONE_TIE_RESOLUTION,
    RunReport,
    ScenarioConfig,
    aggregate_runs,
    calibrate_alpha3,
    config_from_dict,
    config_from_toml,
    richardson_ratio,
    run_extend,
    run_iss_sweep,
    run_scenario,
    run_stabilize,
    run_verify,
    shell_sample,
    trajectory_csv,
)

__all__ = [
    "ATTRACTOR",
    "MARKED",
    "Q",
    "R",
    "SPHERE_TUBE",
    "ClosedLoopBatch",
    "ConfigError",
    "ControlSchedule",
    "DegenerateNearestPointError",
    "DomainError",
    "ExtendedControl",
    "ExtensionBatch",
    "MONOTONE_TIE_RESOLUTION",
    "NoiseModel",
    "ParameterError",
    "Partition",
    "PiTrajectory",
    "ProofBounds",
    "RunReport",
    "ScenarioConfig",
    "TubeConfig",
    "TubeMembershipError",
    "UndefinedDirectionError",
    "V",
    "V_q",
    "V_r",
    "aggregate_runs",
    "approach_control",
    "attractor_distance",
    "base_fields",
    "build_extension_controls",
    "bump_m1",
    "calibrate_alpha3",
    "check_decay",
    "check_gauss",
    "check_integral_decay",
    "compute_bounds",
    "config_from_dict",
    "config_from_toml",
    "default_alpha3",
    "f1",
    "f2",
    "f_sphere",
    "fibonacci_sphere",
    "geodesic_direction",
    "geodesic_distance",
    "held_control",
    "integrate_pi_solution_noisy",
    "integrate_pi_trajectory",
    "k_sphere",
    "make_partition",
    "mu",
    "phi",
    "require_unit",
    "richardson_ratio",
    "run_closed_loop_batch",
    "run_extend",
    "run_extension_batch",
    "run_iss_sweep",
    "run_scenario",
    "run_stabilize",
    "run_verify",
    "shell_sample",
    "smoothstep",
    "sphere_drift",
    "sphere_project",
    "trajectory_csv",
    "tube_decompose",
    "ultimate_radius",
    "v_schedule",
    "w_schedule",
    "warm_up",
]
