"""Episode runner, batch experiment harness, takeover study, and trace
emission. Everything is deterministic given (config, seed)."""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

from .config import ConfigError, EpisodeConfig, config_to_dict
from .dynamics import ControlAction, clamp_action
from .highway import (
    SafeSetSpec,
    WorldState,
    check_collision,
    in_safe_set,
    lane_reached,
    min_obstacle_distance,
    spawn_scenario,
    step_reward,
    step_world,
)
from .modes import ControlMode, ModeDecision, ModeManager, ModeTrace, invariant_monitor
from .orca import OrcaDriveController
from .policies import make_controller

CONTROLLER_KINDS = ("simplex", "orca", "ac-only")

TRACE_BASE_COLUMNS = (
    "time",
    "mode",
    "ego_x",
    "ego_y",
    "ego_v",
    "ego_heading",
    "accel",
    "steer",
    "reward",
    "safe",
    "min_dis",
)


@dataclass(frozen=True)
class EpisodeResult:
    reached_target_lane: bool
    collided: bool
    avg_speed: float
    min_dis: float
    avg_min_dis: float
    bc_active_ratio: float
    switch_count: int
    steps: int


@dataclass(frozen=True)
class TraceRecord:
    time: float
    mode: str
    ego_x: float
    ego_y: float
    ego_v: float
    ego_heading: float
    accel: float
    steer: float
    reward: float
    safe: bool
    min_dis: float
    obstacles: tuple[tuple[float, float, float, float], ...]


@dataclass
class EpisodeRun:
    result: EpisodeResult
    records: list[TraceRecord]
    mode_trace: ModeTrace
    monitor_ok: bool | None
    seed: int
    controller: str
    ac: str
    worlds: list[WorldState] | None = None  # kept only on request


def _num(value: float) -> str:
    """Shortest round-trip decimal form; keeps CSV bytes deterministic
    and reload-exact."""
    return repr(float(value))


def run_episode(
    config: EpisodeConfig,
    seed: int,
    controller: str = "simplex",
    ac: str = "scripted",
    keep_worlds: bool = False,
) -> EpisodeRun:
    """Run one closed-loop episode.

    controller: "simplex" (mode-managed AC/BC), "orca" (BC only), or
    "ac-only" (unverified controller without the safety layer).
    """
    if controller not in CONTROLLER_KINDS:
        raise ConfigError(f"controller must be one of {CONTROLLER_KINDS}")
    config.validate()
    sim = config.sim
    world = spawn_scenario(
        density=sim.density,
        seed=seed,
        crashed_count=sim.crashed_count,
        road=config.road,
        idm=config.idm,
        ego_lane=sim.ego_lane,
        v_ego=sim.v_ego,
        min_spacing=sim.spawn_min_gap,
        window=sim.spawn_window,
    )
    spec = config.safety

    ac_controller = make_controller(
        ac, sim.target_lane, v_target=config.reward.v_target, limits=config.limits
    )
    bc_controller = OrcaDriveController(sim.target_lane, cfg=config.bc, limits=config.limits)

    manager: ModeManager | None = None
    if controller == "simplex":
        manager = ModeManager(
            ac_factory=lambda: ac_controller,
            bc_factory=lambda: OrcaDriveController(
                sim.target_lane, cfg=config.bc, limits=config.limits
            ),
            cfg=config.reach,
            spec=spec,
            limits=config.limits,
            initial_mode=ControlMode.AC,
        )
    mode = ControlMode.BC if controller == "orca" else ControlMode.AC

    mm_every = round(sim.mm_period / sim.dt)
    records: list[TraceRecord] = []
    worlds = [world]
    mode_trace = manager.trace if manager else ModeTrace(dt=sim.mm_period)
    switch_count = 0
    collided = False
    reached = False
    hold = 0
    running_min_dis = min_obstacle_distance(world)

    for i in range(sim.max_steps):
        if i % mm_every == 0:
            if manager is not None:
                previous = manager.mode
                mode = manager.decide(world)
                if mode is not previous:
                    switch_count += 1
                    if mode is ControlMode.BC:
                        bc_controller.notify_takeover()
            else:
                # fixed-authority episodes still record per-interval
                # evidence so the invariant monitor can run on them
                mode_trace.append(
                    ModeDecision(
                        time=world.time,
                        mode_before=mode.value,
                        mode_after=mode.value,
                        switched=False,
                        safe=in_safe_set(world, spec),
                        reach_ok_k=None,
                        reach_ok_dt=None,
                        recoverable=None,
                    )
                )

        if mode is ControlMode.BC:
            action = bc_controller.act(world)
        else:
            action = clamp_action(ac_controller.act(world), config.limits)

        next_world = step_world(world, action, sim.dt, config.limits)
        reward = step_reward(world, action, next_world, config.reward, sim.target_lane)
        records.append(
            TraceRecord(
                time=world.time,
                mode=mode.value,
                ego_x=world.ego.x,
                ego_y=world.ego.y,
                ego_v=world.ego.speed,
                ego_heading=world.ego.heading,
                accel=action.accel,
                steer=action.steer,
                reward=reward,
                safe=in_safe_set(world, spec),
                min_dis=min_obstacle_distance(world),
                obstacles=tuple(
                    (o.state.x, o.state.y, o.state.speed, o.state.heading)
                    for o in world.obstacles
                ),
            )
        )
        running_min_dis = min(running_min_dis, min_obstacle_distance(next_world))
        world = next_world
        worlds.append(world)

        if check_collision(world):
            collided = True
            break
        if lane_reached(world, sim.target_lane):
            hold += 1
            if hold >= sim.success_hold_steps:
                reached = True
                break
        else:
            hold = 0

    steps = len(records)
    avg_speed = sum(r.ego_v for r in records) / steps if steps else world.ego.speed
    min_dis = min((r.min_dis for r in records), default=running_min_dis)
    min_dis = min(min_dis, running_min_dis)
    avg_min_dis = sum(r.min_dis for r in records) / steps if steps else running_min_dis
    bc_ratio = sum(1 for r in records if r.mode == ControlMode.BC.value) / steps if steps else 0.0

    monitor_ok: bool | None = None
    if controller in ("simplex", "orca"):
        monitor_ok = invariant_monitor(mode_trace, worlds, spec, sim_dt=sim.dt)

    result = EpisodeResult(
        reached_target_lane=reached,
        collided=collided,
        avg_speed=avg_speed,
        min_dis=min_dis,
        avg_min_dis=avg_min_dis,
        bc_active_ratio=bc_ratio,
        switch_count=switch_count,
        steps=steps,
    )
    run = EpisodeRun(
        result=result,
        records=records,
        mode_trace=mode_trace,
        monitor_ok=monitor_ok,
        seed=seed,
        controller=controller,
        ac=ac,
    )
    if keep_worlds:
        run.worlds = worlds
    return run


@dataclass(frozen=True)
class SummaryCell:
    density: float
    controller: str
    ac: str
    trials: int
    target_lane_rate: float
    collision_rate: float
    avg_speed: float
    min_dis: float
    avg_min_dis: float
    bc_active_ratio: float
    monitor_pass_rate: float


@dataclass
class MetricsSummary:
    cells: list[SummaryCell] = field(default_factory=list)

    def cell(self, density: float, controller: str, ac: str | None = None) -> SummaryCell:
        for c in self.cells:
            if c.density == density and c.controller == controller and (ac is None or c.ac == ac):
                return c
        raise KeyError((density, controller, ac))


def _episode_job(args) -> EpisodeResult | tuple:
    config_dict, seed, controller, ac, density = args
    from .config import config_from_dict, with_overrides

    config = with_overrides(config_from_dict(config_dict), sim={"density": density})
    run = run_episode(config, seed, controller=controller, ac=ac)
    return run.result, run.monitor_ok


def _aggregate(
    density: float, controller: str, ac: str, outcomes: list[tuple[EpisodeResult, bool | None]]
) -> SummaryCell:
    n = len(outcomes)
    results = [r for r, _ in outcomes]
    monitors = [m for _, m in outcomes]
    return SummaryCell(
        density=density,
        controller=controller,
        ac=ac,
        trials=n,
        target_lane_rate=sum(r.reached_target_lane for r in results) / n,
        collision_rate=sum(r.collided for r in results) / n,
        avg_speed=sum(r.avg_speed for r in results) / n,
        min_dis=sum(r.min_dis for r in results) / n,
        avg_min_dis=sum(r.avg_min_dis for r in results) / n,
        bc_active_ratio=sum(r.bc_active_ratio for r in results) / n,
        monitor_pass_rate=(
            sum(1 for m in monitors if m) / n if all(m is not None for m in monitors) else math.nan
        ),
    )


def run_batch(
    config: EpisodeConfig,
    densities: tuple[float, ...] = (1.0, 1.5, 2.0),
    controllers: tuple[str, ...] = ("orca", "simplex"),
    trials: int = 50,
    base_seed: int = 0,
    ac: str = "scripted",
    parallel: bool = False,
) -> MetricsSummary:
    """Seeded batch over the (density, controller) grid; seeds are
    base_seed .. base_seed + trials - 1 in every cell. Parallel execution
    gives identical summaries to sequential (results are keyed by job)."""
    if trials < 1:
        raise ConfigError("trials must be at least 1")
    config.validate()
    config_dict = config_to_dict(config)
    jobs = []
    for controller in controllers:
        for density in densities:
            for t in range(trials):
                jobs.append((config_dict, base_seed + t, controller, ac, density))
    if parallel:
        workers = min(os.cpu_count() or 1, 8)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_episode_job, jobs, chunksize=max(1, trials // 8)))
    else:
        outcomes = [_episode_job(job) for job in jobs]
    summary = MetricsSummary()
    idx = 0
    for controller in controllers:
        for density in densities:
            cell_outcomes = outcomes[idx : idx + trials]
            idx += trials
            summary.cells.append(_aggregate(density, controller, ac, cell_outcomes))
    return summary


def summary_to_csv(summary: MetricsSummary) -> str:
    header = (
        "density,controller,ac,trials,target_lane_rate,collision_rate,"
        "avg_speed,min_dis,avg_min_dis,bc_active_ratio,monitor_pass_rate"
    )
    lines = [header]
    for c in summary.cells:
        lines.append(
            ",".join(
                [
                    _num(c.density),
                    c.controller,
                    c.ac,
                    str(c.trials),
                    _num(c.target_lane_rate),
                    _num(c.collision_rate),
                    _num(c.avg_speed),
                    _num(c.min_dis),
                    _num(c.avg_min_dis),
                    _num(c.bc_active_ratio),
                    _num(c.monitor_pass_rate),
                ]
            )
        )
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class StudyRow:
    level: float
    density: float
    bc_active_ratio: float
    collision_rate: float
    monitor_pass_rate: float


@dataclass
class TakeoverStudy:
    rows: list[StudyRow]
    directionality_ok: bool
    violations: list[str]

    def ratio(self, level: float, density: float) -> float:
        for row in self.rows:
            if row.level == level and row.density == density:
                return row.bc_active_ratio
        raise KeyError((level, density))


def dummy_takeover_study(
    config: EpisodeConfig,
    levels: tuple[float, ...] = (1.0, 5.0),
    densities: tuple[float, ...] = (1.0, 1.5, 2.0),
    trials: int = 50,
    base_seed: int = 0,
    parallel: bool = False,
) -> TakeoverStudy:
    """Fraction of time the safe controller holds authority when the
    performance controller is a constant-acceleration dummy. Asserts the
    expected directionality: more aggressive dummies and denser traffic
    hand more time to the safe controller."""
    rows: list[StudyRow] = []
    for level in levels:
        summary = run_batch(
            config,
            densities=densities,
            controllers=("simplex",),
            trials=trials,
            base_seed=base_seed,
            ac=f"dummy:{level}",
            parallel=parallel,
        )
        for c in summary.cells:
            rows.append(
                StudyRow(
                    level=level,
                    density=c.density,
                    bc_active_ratio=c.bc_active_ratio,
                    collision_rate=c.collision_rate,
                    monitor_pass_rate=c.monitor_pass_rate,
                )
            )
    violations: list[str] = []
    ordered_levels = sorted(levels)
    for hi, lo in zip(ordered_levels[1:], ordered_levels[:-1]):
        for density in densities:
            r_hi = next(r.bc_active_ratio for r in rows if r.level == hi and r.density == density)
            r_lo = next(r.bc_active_ratio for r in rows if r.level == lo and r.density == density)
            if not r_hi > r_lo:
                violations.append(
                    f"level {hi} ratio {r_hi:.3f} not above level {lo} ratio {r_lo:.3f} at density {density}"
                )
    for level in levels:
        per_density = [r.bc_active_ratio for r in rows if r.level == level]
        for a, b in zip(per_density, per_density[1:]):
            if b < a - 1e-12:
                violations.append(f"level {level}: ratio decreases with density ({a:.3f} -> {b:.3f})")
    return TakeoverStudy(rows=rows, directionality_ok=not violations, violations=violations)


def trace_to_csv(records: list[TraceRecord]) -> str:
    """Fixed-order CSV: the base columns, then x/y/speed/heading
    quadruples for however many obstacles the scenario has."""
    n_obs = max((len(r.obstacles) for r in records), default=0)
    header = list(TRACE_BASE_COLUMNS)
    for j in range(n_obs):
        header += [f"obs{j}_x", f"obs{j}_y", f"obs{j}_v", f"obs{j}_heading"]
    lines = [",".join(header)]
    for r in records:
        row = [
            _num(r.time),
            r.mode,
            _num(r.ego_x),
            _num(r.ego_y),
            _num(r.ego_v),
            _num(r.ego_heading),
            _num(r.accel),
            _num(r.steer),
            _num(r.reward),
            str(int(r.safe)),
            _num(r.min_dis),
        ]
        for obs in r.obstacles:
            row += [_num(v) for v in obs]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def emit_trace(run: EpisodeRun, path: str, config: EpisodeConfig) -> None:
    """Write the per-step CSV plus a sidecar metadata JSON holding the
    full configuration, the seed, the result, and the mode trace."""
    csv_text = trace_to_csv(run.records)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(csv_text)
        with open(str(path) + ".meta.json", "w", encoding="utf-8") as fh:
            json.dump(trace_metadata(run, config), fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"failed writing trace to {path}: {exc}") from exc


def trace_metadata(run: EpisodeRun, config: EpisodeConfig) -> dict:
    return {
        "config": config_to_dict(config),
        "seed": run.seed,
        "controller": run.controller,
        "ac": run.ac,
        "result": asdict(run.result),
        "monitor_ok": run.monitor_ok,
        "mode_trace": [asdict(d) for d in run.mode_trace.decisions],
    }
