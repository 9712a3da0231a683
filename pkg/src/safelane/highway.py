"""Deterministic seeded highway world: lanes, IDM traffic, collision
detection, the safe set, and the per-step reward."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import geometry
from .dynamics import (
    ControlAction,
    KinematicLimits,
    VehicleState,
    clamp,
    clamp_action,
    normalize_angle,
    step_bicycle,
)

VEHICLE_LENGTH = 5.0
VEHICLE_WIDTH = 2.0

# lane-keeping gains for background traffic (critically damped at 15 m/s)
LANE_KEEP_KY = 0.1
LANE_KEEP_KTHETA = 1.0
LANE_KEEP_MAX_STEER = 0.06

DESPAWN_RADIUS = 200.0
RESPAWN_OFFSET = 195.0


class ScenarioError(ValueError):
    """Raised when a scenario cannot be constructed as requested."""


@dataclass(frozen=True)
class RoadGeometry:
    lane_count: int = 3
    lane_width: float = 2.5
    length: float = 2000.0

    def __post_init__(self):
        if self.lane_count < 2:
            raise ValueError("road needs at least 2 lanes")
        if self.lane_width <= 0.0 or self.length <= 0.0:
            raise ValueError("lane width and length must be positive")

    @property
    def width(self) -> float:
        return self.lane_count * self.lane_width

    def lane_center(self, lane: int) -> float:
        return (lane + 0.5) * self.lane_width

    def lane_index(self, y: float) -> int:
        return int(clamp(math.floor(y / self.lane_width), 0, self.lane_count - 1))


@dataclass(frozen=True)
class IdmParams:
    desired_speed: float = 15.0
    time_headway: float = 1.5
    min_gap: float = 5.0
    max_accel: float = 3.0
    comfortable_decel: float = 3.0
    exponent: float = 4.0

    def validate(self) -> None:
        for name in (
            "desired_speed",
            "time_headway",
            "min_gap",
            "max_accel",
            "comfortable_decel",
            "exponent",
        ):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"IDM parameter {name} must be positive")


@dataclass(frozen=True)
class ObstacleVehicle:
    state: VehicleState
    length: float = VEHICLE_LENGTH
    width: float = VEHICLE_WIDTH
    idm: IdmParams = field(default_factory=IdmParams)
    crashed: bool = False


@dataclass(frozen=True)
class WorldState:
    ego: VehicleState
    obstacles: tuple[ObstacleVehicle, ...]
    road: RoadGeometry
    time: float = 0.0
    step_index: int = 0
    rng_seed: int = 0
    ego_length: float = VEHICLE_LENGTH
    ego_width: float = VEHICLE_WIDTH


@dataclass(frozen=True)
class SafeSetSpec:
    min_separation: float = 1.0  # longitudinal headway margin
    lateral_separation: float = 0.4  # lateral margin; 2.5 m lanes with
    # 2.0 m vehicles leave only 0.5 m between adjacent-lane traffic
    lateral_margin: float = 0.25
    road_width: float = 7.5

    def __post_init__(self):
        if self.min_separation <= 0.0:
            raise ValueError("min_separation must be positive")
        if self.lateral_separation <= 0.0:
            raise ValueError("lateral_separation must be positive")


@dataclass(frozen=True)
class RewardConfig:
    r1: float = 2.0  # target lane reached
    r2: float = -5.0  # collision
    r5: float = -2.0  # heading / lane-border violation
    lambda1: float = -0.2  # stored but unused by the default composition
    lambda2: float = 0.2
    v_target: float = 20.0


TARGET_LANE_TOLERANCE = 0.3
TARGET_HEADING_TOLERANCE = 0.1


def spawn_scenario(
    density: float,
    seed: int,
    crashed_count: int = 0,
    road: RoadGeometry = RoadGeometry(),
    idm: IdmParams = IdmParams(),
    ego_lane: int = 0,
    v_ego: float = 20.0,
    min_spacing: float = 15.0,
    window: tuple[float, float] = (15.0, 135.0),
) -> WorldState:
    """Build a deterministic traffic scenario.

    round(density * lane_count) obstacles (half-up rounding) are placed
    ahead of the ego with pairwise center distances >= min_spacing, all
    at the IDM desired speed. Crashed vehicles are placed first, on the
    ego's lane, at fixed offsets.
    """
    if density < 0.0:
        raise ScenarioError("density must be non-negative")
    n_total = int(density * road.lane_count + 0.5)
    if crashed_count > n_total:
        raise ScenarioError("crashed_count exceeds the obstacle budget")

    rng = np.random.default_rng(seed)
    ego = VehicleState(x=0.0, y=road.lane_center(ego_lane), speed=v_ego, heading=0.0)

    placed: list[tuple[float, float]] = [(ego.x, ego.y)]
    obstacles: list[ObstacleVehicle] = []

    for j in range(crashed_count):
        x = ego.x + 60.0 + 20.0 * j
        y = road.lane_center(ego_lane)
        placed.append((x, y))
        obstacles.append(
            ObstacleVehicle(
                state=VehicleState(x=x, y=y, speed=0.0, heading=0.0),
                idm=idm,
                crashed=True,
            )
        )

    crashed_xs = [o.state.x for o in obstacles]
    for j in range(n_total - crashed_count):
        lane = j % road.lane_count
        y = road.lane_center(lane)
        for _ in range(200):
            x = ego.x + rng.uniform(window[0], window[1])
            if any(math.hypot(x - px, y - py) < min_spacing for px, py in placed):
                continue
            # a moving vehicle spawned close behind a crashed one in the
            # same lane cannot brake in time; keep a stopping gap
            if lane == ego_lane and any(0.0 < cx - x < 45.0 for cx in crashed_xs):
                continue
            break
        else:
            raise ScenarioError(
                f"could not place obstacle {j} with spacing {min_spacing} m; density too high"
            )
        placed.append((x, y))
        obstacles.append(
            ObstacleVehicle(
                state=VehicleState(x=x, y=y, speed=idm.desired_speed, heading=0.0),
                idm=idm,
            )
        )

    return WorldState(ego=ego, obstacles=tuple(obstacles), road=road, rng_seed=seed)


def idm_acceleration(follower: ObstacleVehicle, leader: ObstacleVehicle | None) -> float:
    """Intelligent Driver Model acceleration, clamped to
    [-2 * comfortable_decel, max_accel]."""
    p = follower.idm
    v = follower.state.speed
    free = 1.0 - (v / p.desired_speed) ** p.exponent
    interaction = 0.0
    if leader is not None:
        gap = (leader.state.x - follower.state.x) - 0.5 * (leader.length + follower.length)
        gap = max(gap, 1e-3)
        dv = v - leader.state.speed
        dynamic = v * p.time_headway + v * dv / (2.0 * math.sqrt(p.max_accel * p.comfortable_decel))
        s_star = p.min_gap + max(0.0, dynamic)
        interaction = (s_star / gap) ** 2
    accel = p.max_accel * (free - interaction)
    return clamp(accel, -2.0 * p.comfortable_decel, p.max_accel)


def lane_keep_steer(state: VehicleState, road: RoadGeometry) -> float:
    """Proportional lane-centering steering for background traffic."""
    y_center = road.lane_center(road.lane_index(state.y))
    steer = LANE_KEEP_KY * (y_center - state.y) + LANE_KEEP_KTHETA * (0.0 - state.heading)
    return clamp(steer, -LANE_KEEP_MAX_STEER, LANE_KEEP_MAX_STEER)


def _all_rectangles(world: WorldState) -> list[np.ndarray]:
    rects = [
        geometry.rect_corners(
            world.ego.x, world.ego.y, world.ego.heading, world.ego_length, world.ego_width
        )
    ]
    for obs in world.obstacles:
        rects.append(
            geometry.rect_corners(obs.state.x, obs.state.y, obs.state.heading, obs.length, obs.width)
        )
    return rects


def _pairwise_overlap(states, dims, grow_length: float, grow_width: float,
                      ego_pairs_only: bool) -> bool:
    n = len(states)
    rects = [
        geometry.rect_corners(
            s.x, s.y, s.heading, dims[i][0] + grow_length, dims[i][1] + grow_width
        )
        for i, s in enumerate(states)
    ]
    radii = [
        0.5 * math.hypot(dims[i][0] + grow_length, dims[i][1] + grow_width) for i in range(n)
    ]
    for i in range(n):
        if ego_pairs_only and i > 0:
            break
        for j in range(i + 1, n):
            dx = states[i].x - states[j].x
            dy = states[i].y - states[j].y
            if dx * dx + dy * dy > (radii[i] + radii[j]) ** 2:
                continue
            if geometry.rects_overlap(rects[i], rects[j]):
                return True
    return False


def check_collision(world: WorldState) -> bool:
    """True iff any pair of vehicle rectangles overlaps (strictly), or
    the ego's center leaves the road laterally."""
    if world.ego.y < 0.0 or world.ego.y > world.road.width:
        return True
    dims = [(world.ego_length, world.ego_width)] + [(o.length, o.width) for o in world.obstacles]
    states = [world.ego] + [o.state for o in world.obstacles]
    return _pairwise_overlap(states, dims, 0.0, 0.0, ego_pairs_only=False)


def in_safe_set(world: WorldState, spec: SafeSetSpec) -> bool:
    """phi_safe: no collision anywhere, the ego separated from every
    obstacle by margin-inflated rectangles, and the ego center inside the
    road bounds minus the lateral margin.

    The separation margins are anisotropic (min_separation along the
    vehicle, lateral_separation across it) and apply to ego pairs only:
    background traffic in adjacent lanes sits 0.5 m apart by road
    geometry, which no ego action can influence.
    """
    if check_collision(world):
        return False
    dims = [(world.ego_length, world.ego_width)] + [(o.length, o.width) for o in world.obstacles]
    states = [world.ego] + [o.state for o in world.obstacles]
    if _pairwise_overlap(
        states, dims, spec.min_separation, spec.lateral_separation, ego_pairs_only=True
    ):
        return False
    if world.ego.y < spec.lateral_margin or world.ego.y > spec.road_width - spec.lateral_margin:
        return False
    return True


def lane_reached(world: WorldState, target_lane: int) -> bool:
    dy = abs(world.ego.y - world.road.lane_center(target_lane))
    return dy <= TARGET_LANE_TOLERANCE and abs(world.ego.heading) < TARGET_HEADING_TOLERANCE


def step_reward(
    prev: WorldState,
    action: ControlAction,
    next_world: WorldState,
    cfg: RewardConfig,
    target_lane: int,
) -> float:
    """Reward composition:
    r1*[target lane entered this step] + r2*[collision]
    + lambda2*(v - v_target) + lambda2*cos(heading)
    + r5*[|heading| > pi/4 or center off the road]."""
    reward = 0.0
    if lane_reached(next_world, target_lane) and not lane_reached(prev, target_lane):
        reward += cfg.r1
    if check_collision(next_world):
        reward += cfg.r2
    reward += cfg.lambda2 * (next_world.ego.speed - cfg.v_target)
    reward += cfg.lambda2 * math.cos(next_world.ego.heading)
    off_road = next_world.ego.y < 0.0 or next_world.ego.y > next_world.road.width
    if abs(next_world.ego.heading) > math.pi / 4.0 or off_road:
        reward += cfg.r5
    return reward


def find_leader(
    position_x: float,
    lane: int,
    world: WorldState,
    skip_index: int | None = None,
) -> ObstacleVehicle | None:
    """Nearest vehicle ahead in the given lane (the ego counts too)."""
    best = None
    best_dx = math.inf
    ego_lane = world.road.lane_index(world.ego.y)
    if ego_lane == lane and world.ego.x > position_x:
        best_dx = world.ego.x - position_x
        best = ObstacleVehicle(state=world.ego, length=world.ego_length, width=world.ego_width)
    for i, other in enumerate(world.obstacles):
        if i == skip_index:
            continue
        if world.road.lane_index(other.state.y) != lane:
            continue
        dx = other.state.x - position_x
        if 0.0 < dx < best_dx:
            best_dx = dx
            best = other
    return best


def _respawn_ahead(obs: ObstacleVehicle, world: WorldState) -> ObstacleVehicle:
    lane = world.road.lane_index(obs.state.y)
    y = world.road.lane_center(lane)
    x = world.ego.x + RESPAWN_OFFSET
    same_lane_x = [
        o.state.x for o in world.obstacles if world.road.lane_index(o.state.y) == lane and o is not obs
    ]
    for _ in range(16):
        if all(abs(x - ox) >= 15.0 for ox in same_lane_x):
            break
        x += 15.0
    return replace(
        obs,
        state=VehicleState(x=x, y=y, speed=obs.idm.desired_speed, heading=0.0),
    )


def step_world(
    world: WorldState,
    ego_action: ControlAction,
    dt: float,
    limits: KinematicLimits = KinematicLimits(),
) -> WorldState:
    """Advance the full world by dt: ego by the given action, obstacles
    by IDM + lane keeping, crashed vehicles frozen."""
    ego_next = step_bicycle(world.ego, clamp_action(ego_action, limits), dt, limits)
    new_obstacles = []
    for i, obs in enumerate(world.obstacles):
        if obs.crashed:
            new_obstacles.append(obs)
            continue
        lane = world.road.lane_index(obs.state.y)
        leader = find_leader(obs.state.x, lane, world, skip_index=i)
        accel = idm_acceleration(obs, leader)
        steer = lane_keep_steer(obs.state, world.road)
        state_next = step_bicycle(obs.state, ControlAction(accel, steer), dt, limits)
        new_obs = replace(obs, state=state_next)
        if abs(state_next.x - ego_next.x) > DESPAWN_RADIUS:
            new_obs = _respawn_ahead(new_obs, world)
        new_obstacles.append(new_obs)
    return WorldState(
        ego=ego_next,
        obstacles=tuple(new_obstacles),
        road=world.road,
        time=world.time + dt,
        step_index=world.step_index + 1,
        rng_seed=world.rng_seed,
        ego_length=world.ego_length,
        ego_width=world.ego_width,
    )


def min_obstacle_distance(world: WorldState) -> float:
    """Center-to-center distance from the ego to the nearest obstacle."""
    if not world.obstacles:
        return math.inf
    return min(
        math.hypot(o.state.x - world.ego.x, o.state.y - world.ego.y) for o in world.obstacles
    )
