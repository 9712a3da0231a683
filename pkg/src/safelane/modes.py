"""Verified mode management: sampled conservative reachability, the
recoverable-region test, the bidirectional switching automaton, and the
runtime invariant monitor.

Reachability is realized as corner-behavior simulation: for each nearby
obstacle, the closed loop is re-simulated with that obstacle driving an
extremal behavior (constant acceleration replacing its car-following
law, plus a steering bias inside its lane-keeping loop) while all others
stay nominal. Per-step axis-aligned boxes over all runs, inflated by a
disturbance margin, form the envelope. This is conservative with respect
to the declared behavior family by construction; the gap versus true
reachability is a documented approximation, not a proof artifact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .dynamics import KinematicLimits, VehicleState, clamp_action, normalize_angle
from .highway import (
    LANE_KEEP_KTHETA,
    LANE_KEEP_KY,
    LANE_KEEP_MAX_STEER,
    SafeSetSpec,
    WorldState,
    check_collision,
    in_safe_set,
)

HEADING_MARGIN = 0.02  # rad, slack added to recorded heading bounds


class ControlMode(str, Enum):
    AC = "AC"
    BC = "BC"


class MonitorError(ValueError):
    """Raised when an episode trace is incomplete or inconsistent."""


@dataclass(frozen=True)
class ReachabilityConfig:
    dt_mm: float = 0.5  # mode-management decision period
    k: int = 2  # look-ahead multiplier for the AC check (k > 1)
    accel_bound: float = 5.0  # obstacle behavior envelope, m/s^2
    steer_bound: float = 0.06  # lane-keeping steering bias envelope, rad
    inflation: float = 0.5  # disturbance margin added to every box, m
    t_rec: float = 5.0  # finite-horizon stand-in for the infinite BC horizon
    t_ac: float = 0.1  # AC control interval
    t_bc: float = 0.1  # BC control interval
    sim_dt: float = 0.1
    controller_period: float = 0.1
    corner_radius: float = 60.0  # obstacles beyond this stay nominal
    max_corner_obstacles: int = 4
    max_combinations: int = 256
    max_horizon: float = 20.0

    def validate(self) -> None:
        if not (isinstance(self.k, int) and self.k > 1):
            raise ValueError("k must be an integer greater than 1")
        if not (self.dt_mm > self.t_ac and self.dt_mm > self.t_bc):
            raise ValueError("decision period must exceed both controller intervals")
        if self.inflation < 0.0:
            raise ValueError("inflation must be non-negative")
        if self.t_rec <= 0.0 or self.sim_dt <= 0.0:
            raise ValueError("t_rec and sim_dt must be positive")
        steps = self.dt_mm / self.sim_dt
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError("dt_mm must be a multiple of sim_dt")
        if self.controller_period > self.dt_mm:
            raise ValueError("controller period cannot exceed the decision period")


@dataclass(frozen=True)
class ReachEnvelope:
    """Per-step position boxes (xmin, ymin, xmax, ymax), already inflated
    by the disturbance margin, plus per-step heading bounds used to bound
    each vehicle's footprint."""

    dt: float
    ego_boxes: np.ndarray  # (steps + 1, 4)
    obstacle_boxes: np.ndarray  # (steps + 1, n, 4)
    ego_heading: np.ndarray  # (steps + 1, 2) min/max
    obstacle_heading: np.ndarray  # (steps + 1, n, 2)
    ego_half_dims: tuple[float, float]  # (half length, half width)
    obstacle_half_dims: np.ndarray  # (n, 2)
    inflation: float
    controller_feasible: bool
    nominal_end: WorldState

    @property
    def steps(self) -> int:
        return len(self.ego_boxes) - 1

    def truncated(self, steps: int) -> "ReachEnvelope":
        steps = min(steps, self.steps)
        return replace(
            self,
            ego_boxes=self.ego_boxes[: steps + 1],
            obstacle_boxes=self.obstacle_boxes[: steps + 1],
            ego_heading=self.ego_heading[: steps + 1],
            obstacle_heading=self.obstacle_heading[: steps + 1],
        )


def _corner_runs(world: WorldState, cfg: ReachabilityConfig) -> list[tuple[int, float, float]]:
    """Nominal run plus the 9 corner behaviors of each nearby obstacle."""
    runs: list[tuple[int, float, float]] = [(-1, 0.0, 0.0)]
    scored = []
    for j, obs in enumerate(world.obstacles):
        if obs.crashed:
            continue
        d = math.hypot(obs.state.x - world.ego.x, obs.state.y - world.ego.y)
        if d <= cfg.corner_radius:
            scored.append((d, j))
    scored.sort()
    a, s = cfg.accel_bound, cfg.steer_bound
    for _, j in scored[: cfg.max_corner_obstacles]:
        for da in (-a, 0.0, a):
            for ds in (-s, 0.0, s):
                if len(runs) >= cfg.max_combinations:
                    return runs
                runs.append((j, da, ds))
    return runs


class _BatchRuns:
    """Vectorized closed-loop simulation of many runs of one world.

    A run is (deviating obstacle index or -1, constant acceleration
    override, lane-keeping steer bias). Crashed obstacles stay frozen.
    """

    def __init__(self, world: WorldState, runs, controllers, limits: KinematicLimits,
                 cfg: ReachabilityConfig):
        self.world = world
        self.limits = limits
        self.cfg = cfg
        self.controllers = controllers
        n = len(world.obstacles)
        r = len(runs)
        self.n, self.r = n, r
        self.crashed = np.array([o.crashed for o in world.obstacles], dtype=bool)
        self.lengths = np.array([o.length for o in world.obstacles])
        self.widths = np.array([o.width for o in world.obstacles])
        self.v0 = np.array([o.idm.desired_speed for o in world.obstacles])
        self.headway = np.array([o.idm.time_headway for o in world.obstacles])
        self.s0 = np.array([o.idm.min_gap for o in world.obstacles])
        self.a_idm = np.array([o.idm.max_accel for o in world.obstacles])
        self.b_idm = np.array([o.idm.comfortable_decel for o in world.obstacles])
        self.delta = np.array([o.idm.exponent for o in world.obstacles])
        self.two_sqrt_ab = 2.0 * np.sqrt(self.a_idm * self.b_idm)
        self.lengths_all = np.append(self.lengths, world.ego_length)

        self.ox = np.tile([o.state.x for o in world.obstacles], (r, 1))
        self.oy = np.tile([o.state.y for o in world.obstacles], (r, 1))
        self.ov = np.tile([o.state.speed for o in world.obstacles], (r, 1))
        self.oh = np.tile([o.state.heading for o in world.obstacles], (r, 1))
        self.ex = np.full(r, world.ego.x)
        self.ey = np.full(r, world.ego.y)
        self.ev = np.full(r, world.ego.speed)
        self.eh = np.full(r, world.ego.heading)
        self.ea = np.zeros(r)
        self.es = np.zeros(r)
        self.dev_idx = np.array([run[0] for run in runs], dtype=int)
        self.dev_a = np.array([run[1] for run in runs])
        self.dev_s = np.array([run[2] for run in runs])

    def world_of(self, run: int, t: float, step_index: int) -> WorldState:
        obstacles = tuple(
            replace(
                self.world.obstacles[j],
                state=VehicleState(
                    x=float(self.ox[run, j]),
                    y=float(self.oy[run, j]),
                    speed=float(self.ov[run, j]),
                    heading=normalize_angle(float(self.oh[run, j])),
                ),
            )
            for j in range(self.n)
        )
        ego = VehicleState(
            x=float(self.ex[run]),
            y=float(self.ey[run]),
            speed=float(self.ev[run]),
            heading=normalize_angle(float(self.eh[run])),
        )
        return replace(self.world, ego=ego, obstacles=obstacles, time=t, step_index=step_index)

    def update_ego_actions(self, t: float, step_index: int) -> None:
        for run, ctrl in enumerate(self.controllers):
            needs = getattr(ctrl, "needs_world", None)
            if needs is not None and not needs(t):
                continue  # controller holds its plan; keep the held action
            action = clamp_action(
                ctrl.act(self.world_of(run, t, step_index)), self.limits
            )
            self.ea[run] = action.accel
            self.es[run] = action.steer

    def step(self, dt: float) -> None:
        lim = self.limits
        road = self.world.road
        w = road.lane_width
        n = self.n
        if n:
            li = np.clip(np.floor(self.oy / w).astype(int), 0, road.lane_count - 1)
            eli = np.clip(np.floor(self.ey / w).astype(int), 0, road.lane_count - 1)
            x_all = np.concatenate([self.ox, self.ex[:, None]], axis=1)
            v_all = np.concatenate([self.ov, self.ev[:, None]], axis=1)
            li_all = np.concatenate([li, eli[:, None]], axis=1)
            dx = x_all[:, None, :] - self.ox[:, :, None]
            not_self = ~np.eye(n, n + 1, dtype=bool)[None]
            mask = (li_all[:, None, :] == li[:, :, None]) & (dx > 0.0) & not_self
            dxm = np.where(mask, dx, np.inf)
            kmin = np.argmin(dxm, axis=2)
            dmin = np.take_along_axis(dxm, kmin[..., None], axis=2)[..., 0]
            has_leader = np.isfinite(dmin)
            lead_v = np.take_along_axis(v_all, kmin, axis=1)
            lead_len = self.lengths_all[kmin]
            gap = np.maximum(dmin - 0.5 * (self.lengths[None, :] + lead_len), 1e-3)
            dv = self.ov - lead_v
            dynamic = self.ov * self.headway[None, :] + self.ov * dv / self.two_sqrt_ab[None, :]
            s_star = self.s0[None, :] + np.maximum(0.0, dynamic)
            interaction = np.where(has_leader, (s_star / np.where(has_leader, gap, 1.0)) ** 2, 0.0)
            accel = self.a_idm[None, :] * (
                1.0 - (self.ov / self.v0[None, :]) ** self.delta[None, :] - interaction
            )
            accel = np.clip(accel, -2.0 * self.b_idm[None, :], self.a_idm[None, :])
            y_center = (li + 0.5) * w
            lane_keep = LANE_KEEP_KY * (y_center - self.oy) + LANE_KEEP_KTHETA * (0.0 - self.oh)
            steer = np.clip(lane_keep, -LANE_KEEP_MAX_STEER, LANE_KEEP_MAX_STEER)
            deviating = np.nonzero(self.dev_idx >= 0)[0]
            if len(deviating):
                cols = self.dev_idx[deviating]
                accel[deviating, cols] = self.dev_a[deviating]
                steer[deviating, cols] = np.clip(
                    lane_keep[deviating, cols] + self.dev_s[deviating],
                    -LANE_KEEP_MAX_STEER,
                    LANE_KEEP_MAX_STEER,
                )
            accel = np.clip(accel, -lim.max_accel, lim.max_accel)
            tan_osteer = np.tan(np.clip(steer, -lim.max_steer, lim.max_steer))

        tan_esteer = np.tan(self.es)
        substeps = max(1, math.ceil(dt / 0.05 - 1e-12))
        h = dt / substeps
        inv_l = 1.0 / lim.wheelbase
        moving = ~self.crashed
        for _ in range(substeps):
            if n:
                cos_t = np.cos(self.oh)
                sin_t = np.sin(self.oh)
                self.ox[:, moving] += (self.ov * cos_t * h)[:, moving]
                self.oy[:, moving] += (self.ov * sin_t * h)[:, moving]
                self.oh[:, moving] += (self.ov * inv_l * tan_osteer * h)[:, moving]
                self.ov[:, moving] = np.clip(
                    (self.ov + accel * h)[:, moving], 0.0, lim.v_max
                )
            self.ex += self.ev * np.cos(self.eh) * h
            self.ey += self.ev * np.sin(self.eh) * h
            self.eh += self.ev * inv_l * tan_esteer * h
            self.ev = np.clip(self.ev + self.ea * h, 0.0, lim.v_max)

    def ego_box(self) -> np.ndarray:
        return np.array([self.ex.min(), self.ey.min(), self.ex.max(), self.ey.max()])

    def obstacle_box(self) -> np.ndarray:
        if not self.n:
            return np.zeros((0, 4))
        return np.stack(
            [self.ox.min(axis=0), self.oy.min(axis=0), self.ox.max(axis=0), self.oy.max(axis=0)],
            axis=1,
        )

    def ego_heading_bounds(self) -> np.ndarray:
        return np.array([self.eh.min(), self.eh.max()])

    def obstacle_heading_bounds(self) -> np.ndarray:
        if not self.n:
            return np.zeros((0, 2))
        return np.stack([self.oh.min(axis=0), self.oh.max(axis=0)], axis=1)

    def feasible(self) -> bool:
        return all(getattr(c, "all_feasible", True) for c in self.controllers)


def _axis_extents(half_dims: np.ndarray, heading_bounds: np.ndarray,
                  grow_length: float, grow_width: float) -> tuple[np.ndarray, np.ndarray]:
    """Worst-case AABB half extents of a margin-inflated rotated
    rectangle whose heading lies within the given bounds.

    half_dims: (..., 2), heading_bounds: (..., 2); returns (ext_x, ext_y).
    """
    hl = half_dims[..., 0] + grow_length / 2.0
    hw = half_dims[..., 1] + grow_width / 2.0
    theta = np.minimum(
        np.maximum(np.abs(heading_bounds[..., 0]), np.abs(heading_bounds[..., 1]))
        + HEADING_MARGIN,
        math.pi / 2.0,
    )
    cx = np.minimum(theta, np.arctan2(hw, hl))
    cy = np.minimum(theta, np.arctan2(hl, hw))
    ext_x = hl * np.cos(cx) + hw * np.sin(cx)
    ext_y = hl * np.sin(cy) + hw * np.cos(cy)
    return ext_x, ext_y


def _boxes_safe(
    ego_boxes: np.ndarray,
    ego_heading: np.ndarray,
    ego_half_dims: tuple[float, float],
    obstacle_boxes: np.ndarray,
    obstacle_heading: np.ndarray,
    obstacle_half_dims: np.ndarray,
    spec: SafeSetSpec,
) -> bool:
    """Vectorized safety check of (T, ...) box arrays: the ego footprint
    box must stay inside the road margins and be separated from every
    obstacle footprint box along at least one axis."""
    e_ext_x, e_ext_y = _axis_extents(
        np.asarray(ego_half_dims)[None, :], ego_heading, spec.min_separation, spec.lateral_separation
    )
    if np.any(ego_boxes[:, 1] < spec.lateral_margin) or np.any(
        ego_boxes[:, 3] > spec.road_width - spec.lateral_margin
    ):
        return False
    if obstacle_boxes.shape[1] == 0:
        return True
    o_ext_x, o_ext_y = _axis_extents(
        obstacle_half_dims[None, :, :], obstacle_heading, spec.min_separation, spec.lateral_separation
    )
    e, o = ego_boxes, obstacle_boxes
    sep_x = (e[:, None, 2] + e_ext_x[:, None] <= o[:, :, 0] - o_ext_x) | (
        o[:, :, 2] + o_ext_x <= e[:, None, 0] - e_ext_x[:, None]
    )
    sep_y = (e[:, None, 3] + e_ext_y[:, None] <= o[:, :, 1] - o_ext_y) | (
        o[:, :, 3] + o_ext_y <= e[:, None, 1] - e_ext_y[:, None]
    )
    return bool(np.all(sep_x | sep_y))


def _validate_horizon(horizon: float, cfg: ReachabilityConfig) -> int:
    if horizon < 0.0:
        raise ValueError("horizon must be non-negative")
    if horizon > cfg.max_horizon:
        raise ValueError(f"horizon {horizon} s exceeds the {cfg.max_horizon} s cost guard")
    steps = round(horizon / cfg.sim_dt)
    if abs(steps * cfg.sim_dt - horizon) > 1e-9:
        raise ValueError("horizon must be a multiple of the simulation step")
    return steps


def _simulate(
    world: WorldState,
    controller_factory,
    horizon: float,
    cfg: ReachabilityConfig,
    limits: KinematicLimits,
    abort_spec: SafeSetSpec | None = None,
):
    """Run all corner behaviors; returns (envelope, safe, fail_step).

    With `abort_spec`, per-step box safety is checked during simulation
    and the simulation stops at the first unsafe step (the returned
    envelope is truncated there)."""
    steps = _validate_horizon(horizon, cfg)
    runs = _corner_runs(world, cfg)
    controllers = [controller_factory() for _ in runs]
    batch = _BatchRuns(world, runs, controllers, limits, cfg)
    half_e = (world.ego_length / 2.0, world.ego_width / 2.0)
    half_o = np.array([[o.length / 2.0, o.width / 2.0] for o in world.obstacles]).reshape(-1, 2)

    ego_boxes = [batch.ego_box()]
    obstacle_boxes = [batch.obstacle_box()]
    ego_heading = [batch.ego_heading_bounds()]
    obstacle_heading = [batch.obstacle_heading_bounds()]
    safe = True
    fail_step = None

    def unsafe_now() -> bool:
        if abort_spec is None:
            return False
        return not _boxes_safe(
            _inflate_boxes(ego_boxes[-1][None, :], cfg.inflation),
            ego_heading[-1][None, :],
            half_e,
            _inflate_boxes(obstacle_boxes[-1][None, :, :], cfg.inflation),
            obstacle_heading[-1][None, :, :],
            half_o,
            abort_spec,
        )

    if unsafe_now():
        safe, fail_step = False, 0
    ctrl_every = max(1, round(cfg.controller_period / cfg.sim_dt))
    i = 0
    while i < steps and safe:
        t = world.time + i * cfg.sim_dt
        if i % ctrl_every == 0:
            batch.update_ego_actions(t, world.step_index + i)
        batch.step(cfg.sim_dt)
        ego_boxes.append(batch.ego_box())
        obstacle_boxes.append(batch.obstacle_box())
        ego_heading.append(batch.ego_heading_bounds())
        obstacle_heading.append(batch.obstacle_heading_bounds())
        i += 1
        if unsafe_now():
            safe, fail_step = False, i

    env = ReachEnvelope(
        dt=cfg.sim_dt,
        ego_boxes=_inflate_boxes(np.array(ego_boxes), cfg.inflation),
        obstacle_boxes=_inflate_boxes(np.array(obstacle_boxes), cfg.inflation),
        ego_heading=np.array(ego_heading),
        obstacle_heading=np.array(obstacle_heading),
        ego_half_dims=half_e,
        obstacle_half_dims=half_o,
        inflation=cfg.inflation,
        controller_feasible=batch.feasible(),
        nominal_end=batch.world_of(0, world.time + i * cfg.sim_dt, world.step_index + i),
    )
    return env, safe, fail_step


def _inflate_boxes(boxes: np.ndarray, margin: float) -> np.ndarray:
    return boxes + np.array([-margin, -margin, margin, margin])


def simulate_deviation(
    world: WorldState,
    controller_factory,
    horizon: float,
    deviation: tuple[int, float, float],
    cfg: ReachabilityConfig = ReachabilityConfig(),
    limits: KinematicLimits = KinematicLimits(),
) -> tuple[np.ndarray, np.ndarray]:
    """Closed-loop trajectory for a single behavior of the envelope
    family (one obstacle with a constant acceleration override and a
    lane-keeping steer bias). Returns per-step positions for the ego
    (steps+1, 2) and the obstacles (steps+1, n, 2); used by containment
    checks."""
    steps = _validate_horizon(horizon, cfg)
    batch = _BatchRuns(world, [deviation], [controller_factory()], limits, cfg)
    ego = [np.array([batch.ex[0], batch.ey[0]])]
    obs = [np.stack([batch.ox[0], batch.oy[0]], axis=1)]
    ctrl_every = max(1, round(cfg.controller_period / cfg.sim_dt))
    for i in range(steps):
        if i % ctrl_every == 0:
            batch.update_ego_actions(world.time + i * cfg.sim_dt, world.step_index + i)
        batch.step(cfg.sim_dt)
        ego.append(np.array([batch.ex[0], batch.ey[0]]))
        obs.append(np.stack([batch.ox[0], batch.oy[0]], axis=1))
    return np.array(ego), np.array(obs)


def reach_envelope(
    world: WorldState,
    controller_factory,
    horizon: float,
    cfg: ReachabilityConfig = ReachabilityConfig(),
    limits: KinematicLimits = KinematicLimits(),
) -> ReachEnvelope:
    """Conservative per-step position boxes for the ego and every
    obstacle over the horizon, under the given ego controller and the
    obstacle corner-behavior family.

    `controller_factory` is a zero-argument callable returning a fresh
    controller per run (a shared instance is fine for stateless ones).
    """
    env, _, _ = _simulate(world, controller_factory, horizon, cfg, limits)
    return env


def reach_safe(env: ReachEnvelope, spec: SafeSetSpec) -> bool:
    """True iff at every step the ego footprint box stays within the road
    margins and clears every obstacle footprint box by the anisotropic
    separation margins along at least one axis."""
    return _boxes_safe(
        env.ego_boxes,
        env.ego_heading,
        env.ego_half_dims,
        env.obstacle_boxes,
        env.obstacle_heading,
        env.obstacle_half_dims,
        spec,
    )


def _box_corners(box: np.ndarray) -> list[tuple[float, float]]:
    xmin, ymin, xmax, ymax = box
    return [(xmin, ymin), (xmin, ymax), (xmax, ymin), (xmax, ymax)]


def is_recoverable(
    world: WorldState,
    ac_factory,
    bc_factory,
    cfg: ReachabilityConfig,
    spec: SafeSetSpec,
    limits: KinematicLimits = KinematicLimits(),
) -> bool:
    """Recoverable-region membership:
    (1) one more AC interval stays safe,
    (2) the BC keeps the system safe over the recovery horizon with a
        feasible velocity program at every replan, and
    (3) the same BC property holds from every corner endpoint of the AC
        interval envelope."""
    if not in_safe_set(world, spec):
        return False
    env_ac, _, _ = _simulate(world, ac_factory, cfg.dt_mm, cfg, limits)
    if not reach_safe(env_ac, spec):
        return False
    envb, safe, _ = _simulate(world, bc_factory, cfg.t_rec, cfg, limits, abort_spec=spec)
    if not safe or not envb.controller_feasible:
        return False
    end = env_ac.nominal_end
    for cx, cy in _box_corners(env_ac.ego_boxes[-1]):
        corner_world = replace(
            end,
            ego=VehicleState(x=cx, y=cy, speed=end.ego.speed, heading=end.ego.heading),
        )
        envc, safe, _ = _simulate(corner_world, bc_factory, cfg.t_rec, cfg, limits, abort_spec=spec)
        if not safe or not envc.controller_feasible:
            return False
    return True


@dataclass(frozen=True)
class ModeDecision:
    time: float
    mode_before: str
    mode_after: str
    switched: bool
    safe: bool
    reach_ok_k: bool | None = None
    reach_ok_dt: bool | None = None
    recoverable: bool | None = None


@dataclass
class ModeTrace:
    dt: float
    decisions: list[ModeDecision] = field(default_factory=list)

    def append(self, decision: ModeDecision) -> None:
        if self.decisions and decision.time <= self.decisions[-1].time:
            raise ValueError("mode trace timestamps must strictly increase")
        self.decisions.append(decision)


class ModeManager:
    """Owns the switching authority. `decide` must be called exactly once
    per decision period, in simulation order."""

    def __init__(
        self,
        ac_factory,
        bc_factory,
        cfg: ReachabilityConfig = ReachabilityConfig(),
        spec: SafeSetSpec = SafeSetSpec(),
        limits: KinematicLimits = KinematicLimits(),
        initial_mode: ControlMode = ControlMode.AC,
    ):
        cfg.validate()
        self.ac_factory = ac_factory
        self.bc_factory = bc_factory
        self.cfg = cfg
        self.spec = spec
        self.limits = limits
        self.mode = initial_mode
        self.trace = ModeTrace(dt=cfg.dt_mm)

    def decide(self, world: WorldState) -> ControlMode:
        cfg = self.cfg
        before = self.mode
        safe_now = in_safe_set(world, self.spec)
        reach_ok_k = reach_ok_dt = recoverable = None
        if before is ControlMode.AC:
            _, ok, fail_step = _simulate(
                world, self.ac_factory, cfg.k * cfg.dt_mm, cfg, self.limits, abort_spec=self.spec
            )
            steps_dt = round(cfg.dt_mm / cfg.sim_dt)
            reach_ok_k = ok
            reach_ok_dt = ok or (fail_step is not None and fail_step > steps_dt)
            after = ControlMode.BC if not reach_ok_k else ControlMode.AC
        else:
            recoverable = is_recoverable(
                world, self.ac_factory, self.bc_factory, cfg, self.spec, self.limits
            )
            after = ControlMode.AC if recoverable else ControlMode.BC
        self.mode = after
        self.trace.append(
            ModeDecision(
                time=world.time,
                mode_before=before.value,
                mode_after=after.value,
                switched=before is not after,
                safe=safe_now,
                reach_ok_k=reach_ok_k,
                reach_ok_dt=reach_ok_dt,
                recoverable=recoverable,
            )
        )
        return after


def invariant_monitor(
    trace: ModeTrace,
    worlds: list[WorldState],
    spec: SafeSetSpec,
    sim_dt: float = 0.1,
) -> bool:
    """Check the runtime-assurance invariant over a complete episode:
    at every decision instant either the BC held authority in a safe
    state, or the AC held authority with its one-interval reach check
    recorded safe; additionally no recorded step may collide."""
    if not worlds:
        raise MonitorError("empty episode")
    n_steps = len(worlds) - 1
    every = max(1, round(trace.dt / sim_dt))
    expected = [i for i in range(n_steps) if i % every == 0]
    if len(trace.decisions) != len(expected):
        raise MonitorError(
            f"trace has {len(trace.decisions)} decisions, episode implies {len(expected)}"
        )
    for d, i in zip(trace.decisions, expected):
        if abs(d.time - i * sim_dt) > 1e-6:
            raise MonitorError(f"decision at {d.time} does not align with step {i}")
    for world in worlds:
        if check_collision(world):
            return False
    for d in trace.decisions:
        if d.mode_before == ControlMode.BC.value:
            if not d.safe:
                return False
        else:
            if not d.reach_ok_dt:
                return False
    return True
