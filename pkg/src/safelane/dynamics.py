"""Kinematic bicycle model: state propagation, action limits, reachable
velocity sets, and the inverse map from a desired velocity to an action."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import geometry

MAX_SUBSTEP = 0.05  # s, bounds curvature error of the Euler integration
VELOCITY_TOLERANCE = 0.1  # m/s, velocity_to_action round-trip contract


def normalize_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = (theta + math.pi) % (2.0 * math.pi) - math.pi
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


@dataclass(frozen=True)
class VehicleState:
    x: float
    y: float
    speed: float  # m/s, >= 0
    heading: float  # rad, in (-pi, pi]

    @property
    def velocity(self) -> np.ndarray:
        return np.array(
            [self.speed * math.cos(self.heading), self.speed * math.sin(self.heading)]
        )

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class ControlAction:
    accel: float  # m/s^2
    steer: float  # rad, front wheel angle


@dataclass(frozen=True)
class KinematicLimits:
    max_accel: float = 5.0
    max_steer: float = math.pi / 6.0
    wheelbase: float = 2.5
    v_max: float = 20.0

    @property
    def min_turn_radius(self) -> float:
        return self.wheelbase / math.tan(self.max_steer)

    def validate(self) -> None:
        for name in ("max_accel", "max_steer", "wheelbase", "v_max"):
            if not (getattr(self, name) > 0.0) or not math.isfinite(getattr(self, name)):
                raise ValueError(f"kinematic limit {name} must be positive and finite")
        if self.max_steer >= math.pi / 2.0:
            raise ValueError("max_steer must be below pi/2")


def clamp(value: float, lo: float, hi: float) -> float:
    return lo if value < lo else hi if value > hi else value


def clamp_action(action: ControlAction, limits: KinematicLimits) -> ControlAction:
    return ControlAction(
        accel=clamp(action.accel, -limits.max_accel, limits.max_accel),
        steer=clamp(action.steer, -limits.max_steer, limits.max_steer),
    )


@dataclass(frozen=True)
class VelocityRegion:
    """Convex polygon in 2-D velocity space, CCW, possibly degenerate."""

    vertices: np.ndarray

    def __post_init__(self):
        if len(self.vertices) < 1:
            raise ValueError("velocity region needs at least one vertex")

    def contains(self, v, tol: float = 1e-9) -> bool:
        return geometry.contains_point(self.vertices, v, tol)

    def contains_many(self, vs: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        return geometry.contains_points(self.vertices, vs, tol)

    def bounding_box(self) -> tuple[float, float, float, float]:
        return geometry.bounding_box(self.vertices)

    @property
    def is_point(self) -> bool:
        return len(self.vertices) == 1


def _check_finite(state: VehicleState, action: ControlAction, dt: float) -> None:
    values = (state.x, state.y, state.speed, state.heading, action.accel, action.steer, dt)
    if not all(math.isfinite(v) for v in values):
        raise ValueError("non-finite input to vehicle dynamics")
    if dt <= 0.0:
        raise ValueError("dt must be positive")


def step_bicycle(
    state: VehicleState,
    action: ControlAction,
    dt: float,
    limits: KinematicLimits = KinematicLimits(),
) -> VehicleState:
    """Propagate one vehicle by dt with sub-stepped Euler integration.

    Rear-axle kinematic bicycle: the position advances along the current
    heading, the heading rate is v/L * tan(steer), and the speed is
    clamped to [0, v_max] after each sub-step.
    """
    _check_finite(state, action, dt)
    action = clamp_action(action, limits)
    n = max(1, math.ceil(dt / MAX_SUBSTEP - 1e-12))
    h = dt / n
    x, y, v, th = state.x, state.y, state.speed, state.heading
    tan_steer = math.tan(action.steer)
    inv_l = 1.0 / limits.wheelbase
    for _ in range(n):
        x += v * math.cos(th) * h
        y += v * math.sin(th) * h
        th += v * inv_l * tan_steer * h
        v = clamp(v + action.accel * h, 0.0, limits.v_max)
    return VehicleState(x=x, y=y, speed=v, heading=normalize_angle(th))


def reachable_velocity_set(
    state: VehicleState,
    limits: KinematicLimits,
    dt: float,
    arc_vertices: int = 12,
) -> VelocityRegion:
    """Convex over-approximation of the ego velocity vectors achievable
    at t + dt under bounded acceleration and steering.

    Speeds span [max(0, v - a*dt), min(v_max, v + a*dt)]; headings span
    the maximum heading change at the highest speed in the interval. The
    outer arc is circumscribed so the polygon is a superset of the exact
    sector, then a small margin (scaled down with dt, so the dt -> 0
    limit degenerates to the current velocity) is added.
    """
    _check_finite(state, ControlAction(0.0, 0.0), dt)
    arc_vertices = max(8, int(arc_vertices))
    v = clamp(state.speed, 0.0, limits.v_max)
    v_lo = max(0.0, v - limits.max_accel * dt)
    v_hi = min(limits.v_max, v + limits.max_accel * dt)
    dtheta = (v_hi / limits.wheelbase) * math.tan(limits.max_steer) * dt
    dtheta = min(dtheta, math.pi)
    th = state.heading

    if v_hi <= 0.0:
        return VelocityRegion(np.array([[0.0, 0.0]]))

    angles = np.linspace(th - dtheta, th + dtheta, arc_vertices)
    if dtheta > 0.0:
        half_step = (angles[1] - angles[0]) / 2.0
        r_out = v_hi / math.cos(half_step) if half_step < math.pi / 2.0 else v_hi * 2.0
    else:
        r_out = v_hi
    outer = np.column_stack([r_out * np.cos(angles), r_out * np.sin(angles)])

    pts = [outer]
    if dtheta < math.pi / 2.0:
        # inner chord between the two extreme low-speed corners
        inner = np.array(
            [
                [v_lo * math.cos(th - dtheta), v_lo * math.sin(th - dtheta)],
                [v_lo * math.cos(th + dtheta), v_lo * math.sin(th + dtheta)],
            ]
        )
        pts.append(inner)
    # with dtheta >= pi/2 the hull of the outer arc already covers the
    # low-speed corners
    hull = geometry.convex_hull(np.vstack(pts))
    margin = 1e-3 * min(1.0, dt / 0.5)
    return VelocityRegion(geometry.inflate_polygon(hull, margin))


def velocity_to_action(
    state: VehicleState,
    desired_v,
    limits: KinematicLimits,
    dt: float,
) -> tuple[ControlAction, bool]:
    """Constant action that reaches `desired_v` after `dt`.

    The steering angle has a closed form: the realized heading change is
    tan(steer)/L times the integrated path length, which depends only on
    the acceleration profile. Returns (action, feasible); infeasible
    targets get the limit-clamped best effort and feasible=False.
    """
    desired = np.asarray(desired_v, dtype=float)
    _check_finite(state, ControlAction(0.0, 0.0), dt)
    if not np.all(np.isfinite(desired)):
        raise ValueError("non-finite desired velocity")

    target_speed = float(np.hypot(desired[0], desired[1]))
    accel = clamp((target_speed - state.speed) / dt, -limits.max_accel, limits.max_accel)

    # integrated path length under the sub-stepped speed profile
    n = max(1, math.ceil(dt / MAX_SUBSTEP - 1e-12))
    h = dt / n
    v = state.speed
    path = 0.0
    for _ in range(n):
        path += v * h
        v = clamp(v + accel * h, 0.0, limits.v_max)

    if target_speed < 1e-9:
        dtheta = 0.0
    else:
        target_heading = math.atan2(desired[1], desired[0])
        dtheta = normalize_angle(target_heading - state.heading)
    if path > 1e-12:
        steer = math.atan(dtheta * limits.wheelbase / path)
    else:
        steer = 0.0
    steer = clamp(steer, -limits.max_steer, limits.max_steer)

    action = ControlAction(accel=accel, steer=steer)
    reached = step_bicycle(state, action, dt, limits).velocity
    feasible = float(np.hypot(*(reached - desired))) <= VELOCITY_TOLERANCE
    return action, feasible
