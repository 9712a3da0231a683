"""Runtime-assured lane-change control toolkit.

A velocity-obstacle baseline safe controller for car-like vehicles, a
pluggable unverified performance controller, and a verified mode manager
that switches authority between them, exercised inside a deterministic
highway simulator with a batch experiment harness.
"""

from .config import ConfigError, EpisodeConfig, config_from_dict, config_to_dict, default_config
from .dynamics import (
    ControlAction,
    KinematicLimits,
    VehicleState,
    VelocityRegion,
    reachable_velocity_set,
    step_bicycle,
    velocity_to_action,
)
from .highway import (
    IdmParams,
    ObstacleVehicle,
    RewardConfig,
    RoadGeometry,
    SafeSetSpec,
    ScenarioError,
    WorldState,
    check_collision,
    idm_acceleration,
    in_safe_set,
    spawn_scenario,
    step_reward,
    step_world,
)
from .modes import (
    ControlMode,
    ModeManager,
    ModeTrace,
    MonitorError,
    ReachEnvelope,
    ReachabilityConfig,
    invariant_monitor,
    is_recoverable,
    reach_envelope,
    reach_safe,
)
from .orca import (
    BcConfig,
    OrcaDriveController,
    OrcaPlane,
    VelocityObstacle,
    VelocityOverlapError,
    bounding_radius,
    build_orca_planes,
    fallback_weighted_sample,
    min_exit_change,
    minkowski_sum,
    solve_optimal,
    velocity_obstacle,
)
from .policies import (
    DummyConstant,
    MlpController,
    MlpPolicy,
    PolicyFormatError,
    ScriptedLaneChange,
    build_observation,
    load_policy,
    make_controller,
    mlp_forward,
    zero_policy,
)
from .simulation import (
    EpisodeResult,
    EpisodeRun,
    MetricsSummary,
    TakeoverStudy,
    dummy_takeover_study,
    emit_trace,
    run_batch,
    run_episode,
    summary_to_csv,
    trace_to_csv,
)

__version__ = "0.1.0"
