"""Velocity-obstacle baseline safe controller: truncated-cone velocity
obstacles, Minkowski dilation by the obstacle's reachable velocities,
half-plane constraints, optimal velocity selection, and the weighted
sampling fallback when no feasible velocity exists."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import geometry
from .dynamics import (
    ControlAction,
    KinematicLimits,
    VehicleState,
    VelocityRegion,
    clamp,
    clamp_action,
    reachable_velocity_set,
    velocity_to_action,
)
from .highway import ObstacleVehicle, RoadGeometry, WorldState

# membership queries are guaranteed covered up to this speed (m/s); the
# VO polygon is closed with a far chord beyond it
VO_COVER_RADIUS = 60.0


class VelocityOverlapError(ValueError):
    """The bounding circles already overlap; no velocity obstacle exists."""


def bounding_radius(length: float, width: float) -> float:
    """Radius of the minimum bounding circle of a length x width box."""
    if length < 0.0 or width < 0.0 or (length <= 0.0 and width <= 0.0):
        raise ValueError("box dimensions must be positive")
    return math.hypot(length / 2.0, width / 2.0)


@dataclass(frozen=True)
class VelocityObstacle:
    apex: np.ndarray  # relative position P (m)
    radius: float  # combined bounding radius r (m)
    tau: float  # time window (s)
    polygon: np.ndarray  # CCW superset of the exact truncated cone
    cover_radius: float = VO_COVER_RADIUS


def _rotate(v: np.ndarray, angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])


def velocity_obstacle(P, r: float, tau: float, arc_vertices: int = 16) -> VelocityObstacle:
    """Polygonal superset of {v : exists t in (0, tau], ||P - v t|| <= r}.

    The exact set is the cone tangent to the disc of radius r around P,
    truncated near the origin by the disc centered at P/tau with radius
    r/tau. The near arc is circumscribed; the legs extend until their
    closing chord lies beyond the cover radius.
    """
    P = np.asarray(P, dtype=float)
    d = float(np.hypot(P[0], P[1]))
    if not (r > 0.0 and tau > 0.0):
        raise ValueError("r and tau must be positive")
    if d <= r:
        raise VelocityOverlapError(f"relative distance {d:.3f} <= combined radius {r:.3f}")
    arc_vertices = max(4, int(arc_vertices))

    alpha = math.asin(r / d)  # half opening angle of the cone
    u = P / d
    leg_left = _rotate(u, alpha)
    leg_right = _rotate(u, -alpha)

    center = P / tau
    rho = r / tau
    # legs (lines through the origin) are tangent to every disc of the
    # family; tangency point = projection of the disc center on the leg
    t_left = leg_left * float(center @ leg_left)
    t_right = leg_right * float(center @ leg_right)

    # near arc from the right tangency to the left tangency through the
    # point of the truncation disc facing the origin
    beta_right = math.atan2(t_right[1] - center[1], t_right[0] - center[0])
    beta_left = math.atan2(t_left[1] - center[1], t_left[0] - center[0])
    beta_mid = math.atan2(-u[1], -u[0])
    # unwrap so the sweep passes through beta_mid
    def _unwrap(target, reference):
        while target < reference - math.pi:
            target += 2.0 * math.pi
        while target > reference + math.pi:
            target -= 2.0 * math.pi
        return target

    beta_mid = _unwrap(beta_mid, beta_right)
    beta_left = _unwrap(beta_left, beta_mid)
    sweep = np.linspace(beta_right, beta_left, arc_vertices)
    half_step = abs(sweep[1] - sweep[0]) / 2.0 if arc_vertices > 1 else 0.0
    rho_out = rho / math.cos(half_step) if half_step < math.pi / 2.0 else rho * 2.0
    arc = center + rho_out * np.column_stack([np.cos(sweep), np.sin(sweep)])

    cos_alpha = math.cos(alpha)
    far = max(200.0, 1.05 * VO_COVER_RADIUS / max(cos_alpha, 1e-6))
    far = min(far, 1e7)
    far_left = leg_left * far
    far_right = leg_right * far

    polygon = geometry.convex_hull(np.vstack([arc, [far_left], [far_right]]))
    return VelocityObstacle(apex=P, radius=r, tau=tau, polygon=polygon)


def minkowski_sum(a: VelocityRegion, b: VelocityRegion) -> VelocityRegion:
    """Minkowski sum of two convex velocity regions."""
    return VelocityRegion(geometry.minkowski_sum(a.vertices, b.vertices))


def min_exit_change(region: VelocityRegion, v, away_direction=None) -> np.ndarray:
    """Minimal velocity change moving v out of a convex region.

    Zero when v is already outside. Ties between equally close boundary
    points break toward `away_direction` (the caller passes -P so the
    exit moves away from the obstacle).
    """
    v = np.asarray(v, dtype=float)
    if not region.contains(v, tol=-1e-12):
        return np.zeros(2)
    verts = region.vertices
    n = len(verts)
    if n == 1:
        return verts[0] - v
    candidates = []
    for i in range(n):
        a = verts[i]
        b = verts[(i + 1) % n] if n > 2 else verts[1 - i]
        c = geometry.closest_point_on_segment(v, a, b)
        candidates.append((float(np.hypot(*(c - v))), c))
    best_d = min(d for d, _ in candidates)
    ties = [c for d, c in candidates if d <= best_d + 1e-9]
    if len(ties) > 1 and away_direction is not None:
        away = np.asarray(away_direction, dtype=float)
        ties.sort(key=lambda c: -float((c - v) @ away))
    return ties[0] - v


@dataclass(frozen=True)
class OrcaPlane:
    """Half-plane constraint in velocity space; the allowed side is
    {v : (v - point) . normal >= 0}."""

    point: np.ndarray
    normal: np.ndarray
    dv: np.ndarray

    def signed_distance(self, v) -> float:
        v = np.asarray(v, dtype=float)
        return float((v - self.point) @ self.normal)

    def satisfied(self, v, tol: float = 1e-9) -> bool:
        return self.signed_distance(v) >= -tol


@dataclass(frozen=True)
class BcConfig:
    tau: float = 2.0
    dt_pred: float = 0.5  # prediction / replanning period
    w_orca: float = 0.7
    w_current: float = 0.3
    n_samples: int = 256  # fallback sample budget (16 x 16 grid)
    arc_vertices: int = 16
    sensing_radius: float = 60.0
    separation_margin: float = 2.2  # m, added to the combined radius so
    # the controller maintains the safe-set separation (plus the
    # reachability disturbance margin), not bare collision distance
    lateral_accel_cap: float = 6.0  # m/s^2, shrinks the ego's planning V_A
    obstacle_pred_accel: float = 6.0
    obstacle_pred_steer: float = 0.01  # lane-keeping traffic drifts laterally
    # at most ~0.5 m/s within a prediction period
    road_margin: float = 0.8  # m, kept between the ego center and road edges
    target_blend: float = 0.2  # preferred-heading blend toward the target lane
    lookahead: float = 20.0

    def validate(self) -> None:
        if abs(self.w_orca + self.w_current - 1.0) > 1e-9:
            raise ValueError("w_orca + w_current must equal 1")
        if self.n_samples < 64:
            raise ValueError("fallback needs at least 64 samples")
        if self.tau <= 0.0 or self.dt_pred <= 0.0:
            raise ValueError("tau and dt_pred must be positive")


def _obstacle_pred_limits(cfg: BcConfig, limits: KinematicLimits) -> KinematicLimits:
    return KinematicLimits(
        max_accel=cfg.obstacle_pred_accel,
        max_steer=cfg.obstacle_pred_steer,
        wheelbase=limits.wheelbase,
        v_max=limits.v_max,
    )


def ego_planning_limits(
    state: VehicleState, cfg: BcConfig, limits: KinematicLimits
) -> KinematicLimits:
    """Ego limits used to build the planning V_A: steering shrunk so the
    lateral acceleration stays below the comfort cap. A subset of the
    physical limits, so any planned velocity stays realizable."""
    v = max(state.speed, 1.0)
    steer_cap = math.atan(cfg.lateral_accel_cap * limits.wheelbase / (v * v))
    return KinematicLimits(
        max_accel=limits.max_accel,
        max_steer=min(limits.max_steer, steer_cap),
        wheelbase=limits.wheelbase,
        v_max=limits.v_max,
    )


def _braking_plane(rel_pos: np.ndarray, v_ego: np.ndarray, cfg: BcConfig,
                   limits: KinematicLimits) -> OrcaPlane:
    d = float(np.hypot(rel_pos[0], rel_pos[1]))
    normal = -rel_pos / d if d > 1e-9 else np.array([-1.0, 0.0])
    dv = normal * limits.max_accel * cfg.dt_pred
    return OrcaPlane(point=v_ego + dv, normal=normal, dv=dv)


def build_orca_planes(
    world: WorldState,
    cfg: BcConfig = BcConfig(),
    limits: KinematicLimits = KinematicLimits(),
) -> list[OrcaPlane]:
    """One half-plane per obstacle within the sensing radius whose
    dilated velocity obstacle contains the current ego velocity.

    The plane is anchored at v_ego + dv with normal dv/||dv|| (full
    responsibility: background traffic does not cooperate). Overlapping
    starts degrade to a braking plane opposing the relative position.
    """
    v_ego = world.ego.velocity
    ego_radius = bounding_radius(world.ego_length, world.ego_width)
    pred_limits = _obstacle_pred_limits(cfg, limits)
    planes: list[OrcaPlane] = []
    for obs in world.obstacles:
        rel = obs.state.position - world.ego.position
        dist = float(np.hypot(rel[0], rel[1]))
        if dist > cfg.sensing_radius:
            continue
        r = ego_radius + bounding_radius(obs.length, obs.width) + cfg.separation_margin
        try:
            vo = velocity_obstacle(rel, r, cfg.tau, cfg.arc_vertices)
        except VelocityOverlapError:
            planes.append(_braking_plane(rel, v_ego, cfg, limits))
            continue
        if obs.crashed:
            v_region = VelocityRegion(np.array([[0.0, 0.0]]))
        else:
            v_region = reachable_velocity_set(obs.state, pred_limits, cfg.dt_pred)
        combined = minkowski_sum(VelocityRegion(vo.polygon), v_region)
        if not combined.contains(v_ego, tol=-1e-12):
            continue
        dv = min_exit_change(combined, v_ego, away_direction=-rel)
        norm = float(np.hypot(dv[0], dv[1]))
        if norm < 1e-12:
            continue
        planes.append(OrcaPlane(point=v_ego + dv, normal=dv / norm, dv=dv))
    return planes


def road_velocity_band(world: WorldState, cfg: BcConfig) -> tuple[float, float]:
    """Admissible lateral velocity range keeping the ego center inside
    the road margins within tau."""
    y = world.ego.y
    top_rate = (world.road.width - cfg.road_margin - y) / cfg.tau
    bot_rate = (y - cfg.road_margin) / cfg.tau
    return -bot_rate, top_rate


def road_edge_planes(world: WorldState, cfg: BcConfig) -> list[OrcaPlane]:
    """Half-planes limiting lateral velocity so the ego center cannot
    cross the road margin within tau. Not part of the per-obstacle plane
    contract, appended by the controller before solving."""
    vy_min, vy_max = road_velocity_band(world, cfg)
    zero = np.zeros(2)
    return [
        OrcaPlane(point=np.array([0.0, vy_max]), normal=np.array([0.0, -1.0]), dv=zero),
        OrcaPlane(point=np.array([0.0, vy_min]), normal=np.array([0.0, 1.0]), dv=zero),
    ]


def solve_optimal(
    v_a: VelocityRegion, planes: list[OrcaPlane], v_pref
) -> np.ndarray | None:
    """Point of V_A intersected with all half-planes closest to v_pref,
    or None when the intersection is empty."""
    v_pref = np.asarray(v_pref, dtype=float)
    verts = v_a.vertices
    for plane in planes:
        verts = geometry.clip_halfplane(verts, plane.point, plane.normal)
        if len(verts) == 0:
            return None
    return geometry.closest_point_in_polygon(verts, v_pref)


def fallback_weighted_sample(
    v_a: VelocityRegion,
    planes: list[OrcaPlane],
    v_current,
    cfg: BcConfig = BcConfig(),
) -> np.ndarray:
    """Deterministic grid sampling of V_A scored by
    w_orca * sum(signed plane distances) + w_current * (-distance to the
    current velocity). Violations count negative, satisfied constraints
    contribute positive slack."""
    v_current = np.asarray(v_current, dtype=float)
    if v_a.is_point:
        return v_a.vertices[0].copy()
    side = max(8, int(math.sqrt(cfg.n_samples)))
    xmin, ymin, xmax, ymax = v_a.bounding_box()
    gx, gy = np.meshgrid(np.linspace(xmin, xmax, side), np.linspace(ymin, ymax, side))
    samples = np.column_stack([gx.ravel(), gy.ravel()])
    inside = v_a.contains_many(samples)
    if inside.any():
        samples = samples[inside]
    else:
        samples = v_a.vertices.copy()
    score = np.zeros(len(samples))
    for plane in planes:
        score += cfg.w_orca * ((samples - plane.point) @ plane.normal)
    dist_current = np.hypot(samples[:, 0] - v_current[0], samples[:, 1] - v_current[1])
    score -= cfg.w_current * dist_current
    best = 0
    for i in range(1, len(samples)):
        if score[i] > score[best] or (
            score[i] == score[best] and dist_current[i] < dist_current[best]
        ):
            best = i
    return samples[best].copy()


def preferred_velocity(
    world: WorldState,
    target_lane: int,
    cfg: BcConfig,
    limits: KinematicLimits,
) -> np.ndarray:
    """Current speed (capped at v_max) along the current heading blended
    toward the target-lane centerline direction."""
    ego = world.ego
    speed = clamp(ego.speed, 0.0, limits.v_max)
    dy = world.road.lane_center(target_lane) - ego.y
    to_lane = np.array([cfg.lookahead, dy])
    to_lane /= np.hypot(to_lane[0], to_lane[1])
    heading_dir = np.array([math.cos(ego.heading), math.sin(ego.heading)])
    blend = (1.0 - cfg.target_blend) * heading_dir + cfg.target_blend * to_lane
    norm = float(np.hypot(blend[0], blend[1]))
    if norm < 1e-9:
        blend, norm = heading_dir, 1.0
    return speed * blend / norm


class OrcaDriveController:
    """Baseline safe controller. Replans every cfg.dt_pred seconds and
    holds the resulting action between replans.

    A single instance must not be shared across concurrent simulations
    (it caches the last plan); create one per closed loop.
    """

    def __init__(
        self,
        target_lane: int,
        cfg: BcConfig = BcConfig(),
        limits: KinematicLimits = KinematicLimits(),
        keep_debug: bool = False,
    ):
        cfg.validate()
        self.target_lane = target_lane
        self.cfg = cfg
        self.limits = limits
        self.keep_debug = keep_debug
        self._next_replan: float | None = None
        self._held_action = ControlAction(0.0, 0.0)
        self.last_feasible = True
        self.all_feasible = True
        self.last_debug: dict | None = None

    def notify_takeover(self) -> None:
        """Force a replan at the next call (mode switch onto the BC)."""
        self._next_replan = None

    def reset(self) -> None:
        self._next_replan = None
        self._held_action = ControlAction(0.0, 0.0)
        self.last_feasible = True
        self.all_feasible = True
        self.last_debug = None

    def act(self, world: WorldState) -> ControlAction:
        if self._next_replan is not None and world.time < self._next_replan - 1e-9:
            return self._held_action
        self._replan(world)
        self._next_replan = world.time + self.cfg.dt_pred
        return self._held_action

    def _replan(self, world: WorldState) -> None:
        cfg = self.cfg
        plan_limits = ego_planning_limits(world.ego, cfg, self.limits)
        v_a = reachable_velocity_set(world.ego, plan_limits, cfg.dt_pred, cfg.arc_vertices)
        obstacle_planes = build_orca_planes(world, cfg, self.limits)
        planes = obstacle_planes + road_edge_planes(world, cfg)
        v_pref = preferred_velocity(world, self.target_lane, cfg, self.limits)
        v_opt = solve_optimal(v_a, planes, v_pref)
        self.last_feasible = v_opt is not None
        self.all_feasible = self.all_feasible and self.last_feasible
        if v_opt is None:
            v_opt = fallback_weighted_sample(v_a, planes, world.ego.velocity, cfg)
            # road keeping is non-negotiable: leaving the road is as fatal
            # as a collision, so the fallback pick is clamped to the road
            # band even when that deepens an obstacle-plane violation
            vy_min, vy_max = road_velocity_band(world, cfg)
            v_opt = np.array([v_opt[0], clamp(v_opt[1], vy_min, vy_max)])
        action, _ = velocity_to_action(world.ego, v_opt, self.limits, cfg.dt_pred)
        self._held_action = clamp_action(action, self.limits)
        if self.keep_debug:
            self.last_debug = {
                "time": world.time,
                "v_a": v_a.vertices.tolist(),
                "v_pref": v_pref.tolist(),
                "v_opt": np.asarray(v_opt).tolist(),
                "feasible": self.last_feasible,
                "planes": [
                    {"point": p.point.tolist(), "normal": p.normal.tolist(), "dv": p.dv.tolist()}
                    for p in planes
                ],
            }
