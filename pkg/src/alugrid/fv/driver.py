"""Time loops of the three example programs, run on simulated ranks.

Each driver follows the same outline: build the macro grid, refine
``start_level`` times uniformly, refine by the indicator up to
``max_level``, then loop {mark, adapt, maybe rebalance, step} while
collecting one metrics row per step.
"""

from __future__ import annotations

import hashlib
import math
import struct
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import partition as part
from ..adapt import adapt_callback
from ..mesh.grid import Grid
from ..parallel.comm import World
from ..parallel.ghosts import ContainerHandle
from .flux import pressure
from .marking import ball_mark, ball_unresolved, jump_mark
from .problems import Problem, get_problem
from .scheme import FVScheme

METRICS_HEADER = (
    "step,t,dt,time_solve,time_comm,time_adapt,time_lb,leaf_count_per_rank,"
    "imbalance_ratio,messages_total,bytes_total,est_bytes_per_element"
)


@dataclass
class RunConfig:
    kind: str
    problem: int = 0
    start_level: int = 0
    max_level: int = 2
    ranks: int = 1
    steps: int | None = None
    final_time: float | None = None
    lb_every: int = 1
    method: int | None = None
    lb_config: part.LBConfig | None = None
    output: str | None = None
    vtk: bool = False
    mode: str = "deterministic"
    overlap: bool = False
    timings: bool = True
    tol_refine: float | None = None
    tol_coarsen: float | None = None
    adapt: bool = True
    collect_fields: bool = True
    plan_log: bool = False

    def resolved_lb(self) -> part.LBConfig:
        cfg = self.lb_config if self.lb_config is not None else part.load_config()
        if self.method is not None:
            part.check_method(self.method)
            cfg = part.LBConfig(cfg.lb_under, cfg.lb_over, self.method)
        return cfg


@dataclass
class StepRow:
    step: int
    t: float
    dt: float
    time_solve: float
    time_comm: float
    time_adapt: float
    time_lb: float
    leaf_counts: list[int]
    messages_total: int
    bytes_total: int
    est_bytes_per_element: float

    @property
    def imbalance_ratio(self) -> float:
        return part.imbalance_ratio(self.leaf_counts)

    def csv(self) -> str:
        return ",".join([
            str(self.step), repr(self.t), repr(self.dt),
            f"{self.time_solve:.6f}", f"{self.time_comm:.6f}", f"{self.time_adapt:.6f}", f"{self.time_lb:.6f}",
            ";".join(str(c) for c in self.leaf_counts),
            f"{self.imbalance_ratio:.6f}", str(self.messages_total), str(self.bytes_total),
            f"{self.est_bytes_per_element:.1f}",
        ])


@dataclass
class RankResult:
    rank: int
    rows: list[StepRow] = field(default_factory=list)
    fields: dict = field(default_factory=dict)
    masses: list[float] = field(default_factory=list)
    positive: bool = True
    initial_leaves: int = 0
    resolved: list[bool] = field(default_factory=list)
    global_leaves: list[int] = field(default_factory=list)
    empty_rank_seen: bool = False
    plans: list = field(default_factory=list)
    final_time: float = 0.0


@dataclass
class RunResult:
    config: RunConfig
    ranks: list[RankResult]
    tally: dict = field(default_factory=dict)  # category -> (messages, bytes)

    @property
    def rows(self) -> list[StepRow]:
        return self.ranks[0].rows

    @property
    def fields(self) -> dict:
        out = {}
        for r in self.ranks:
            out.update(r.fields)
        return out

    def digest(self) -> str:
        h = hashlib.sha256()
        for gid, val in sorted(self.fields.items()):
            h.update(repr(gid).encode())
            h.update(struct.pack(f"<{len(val)}d", *val))
        return h.hexdigest()

    def metrics_csv(self) -> str:
        return "\n".join([METRICS_HEADER] + [r.csv() for r in self.rows]) + "\n"


class _Clock:
    def __init__(self, enabled: bool):
        self.enabled = enabled

    def now(self) -> float:
        return time.perf_counter() if self.enabled else 0.0


def estimate_bytes_per_element(grid: Grid, containers=()) -> float:
    """Rough memory footprint of the local hierarchy per leaf element."""
    leaves = len(grid.leaves)
    if leaves == 0:
        return 0.0
    sample = grid.leaves[0]
    per_node = sys.getsizeof(sample) + sys.getsizeof(sample.path) + sys.getsizeof(sample.idx or sample.verts)
    nodes = grid.hierarchy_size - len(grid._free)
    total = per_node * nodes
    total += sum(sys.getsizeof(m) + 64 * len(m.gids) for m in grid.macros)
    total += sum(c.data.nbytes for c in containers)
    return total / leaves


def _uniform_refine(grid: Grid, times: int) -> None:
    for _ in range(times):
        for e in grid.leaves:
            grid.mark(e, 1)
        adapt_callback(grid)


def _metrics(grid: Grid, res: RankResult, step: int, t: float, dt: float, times, containers) -> None:
    comm = grid.comm
    # per-rank counters taken at the same collective give totals that do not
    # depend on how far other ranks have run ahead
    sent = (comm.sent_messages, comm.sent_bytes)
    counts = comm.allgather(len(grid.leaves), "metrics")
    tmax = comm.allgather((tuple(times), sent), "metrics")
    if 0 in counts:
        res.empty_rank_seen = True
    res.global_leaves.append(sum(counts))
    if comm.rank != 0:
        return
    worst = [max(x[0][k] for x in tmax) for k in range(4)]
    messages = sum(x[1][0] for x in tmax)
    nbytes = sum(x[1][1] for x in tmax)
    res.rows.append(StepRow(step, t, dt, *worst, counts, messages, nbytes,
                            estimate_bytes_per_element(grid, containers)))


def _balance(grid: Grid, cfg: RunConfig, handle, res: RankResult) -> bool:
    """Rebalance; true if the local grid changed (ghosts may be rebuilt even when nothing moved)."""
    seq = grid.sequence
    moved = grid.loadBalance(handle)
    if cfg.plan_log and grid.last_plan is not None:
        res.plans.append(dict(grid.last_plan.destination))
        grid.last_plan = None
    return moved or grid.sequence != seq


def _vtk(grid: Grid, values: np.ndarray | None, path: Path) -> None:
    from ..io.vtk import write_vtk

    write_vtk(grid, path, values)


# ----------------------------------------------------------------------
# PDE drivers


def _solver_rank(comm, cfg: RunConfig, prob: Problem) -> RankResult:
    res = RankResult(comm.rank)
    clock = _Clock(cfg.timings)
    lb = cfg.resolved_lb()
    grid = prob.make_grid(comm, max_level=cfg.max_level, lb_config=lb)
    model = prob.model()
    scheme = FVScheme(grid, model)
    tol_r = cfg.tol_refine if cfg.tol_refine is not None else prob.tol_refine
    tol_c = cfg.tol_coarsen if cfg.tol_coarsen is not None else prob.tol_coarsen
    migrate = ContainerHandle(scheme.u)
    restrict = scheme.restrict_prolong

    _uniform_refine(grid, cfg.start_level)
    if grid.size > 1:
        _balance(grid, cfg, None, res)
    scheme.project(prob.initial)
    if cfg.adapt:
        for _ in range(cfg.max_level - cfg.start_level):
            scheme.sync_ghosts()
            jump_mark(grid, scheme.dense(), tol_r, tol_c, min_level=cfg.max_level + 1, relative=prob.relative_jump)
            adapt_callback(grid)
            if grid.size > 1:
                _balance(grid, cfg, None, res)
            scheme.project(prob.initial)
    scheme.sync_ghosts()
    res.masses.append(float(scheme.total_mass()[0]))

    T = cfg.final_time if cfg.final_time is not None else (None if cfg.steps is not None else prob.final_time)
    out = Path(cfg.output) if cfg.output else None
    if cfg.vtk and out is not None:
        _vtk(grid, scheme.dense()[: len(grid.leaves)], out / f"{prob.kind}-{0:05d}.r{comm.rank}.vtk")
    t = 0.0
    step = 0
    while True:
        if cfg.steps is not None and step >= cfg.steps:
            break
        if T is not None and t >= T * (1.0 - 1e-12):
            break
        step += 1
        t0 = clock.now()
        if cfg.adapt:
            jump_mark(grid, scheme.dense(), tol_r, tol_c, min_level=cfg.start_level, relative=prob.relative_jump)
            adapt_callback(grid, restrict)
            scheme.sync_ghosts()
        t1 = clock.now()
        if grid.size > 1 and cfg.lb_every > 0 and step % cfg.lb_every == 0:
            if _balance(grid, cfg, migrate, res):
                scheme.sync_ghosts()
        t2 = clock.now()
        scheme.time_comm = 0.0
        dt_max = None if T is None else T - t
        dt = scheme.step_overlapped(t, dt_max) if cfg.overlap else scheme.step(t, dt_max)
        t3 = clock.now()
        t += dt
        if model.name == "euler":
            u = scheme.dense()[: len(grid.leaves)]
            ok = bool(np.all(u[:, 0] > 0.0) and np.all(pressure(u) > 0.0))
            res.positive = res.positive and bool(comm.global_min(1.0 if ok else 0.0) > 0.0)
        res.masses.append(float(scheme.total_mass()[0]))
        _metrics(grid, res, step, t, dt, (t3 - t2, scheme.time_comm if cfg.timings else 0.0, t1 - t0, t2 - t1),
                 [scheme.u])
        if cfg.vtk and out is not None and (step % 10 == 0):
            _vtk(grid, scheme.dense()[: len(grid.leaves)], out / f"{prob.kind}-{step:05d}.r{comm.rank}.vtk")
    res.final_time = t
    if cfg.vtk and out is not None:
        _vtk(grid, scheme.dense()[: len(grid.leaves)], out / f"{prob.kind}-final.r{comm.rank}.vtk")
    if cfg.collect_fields:
        res.fields = {k: tuple(float(x) for x in v) for k, v in scheme.leaf_values().items()}
    return res


# ----------------------------------------------------------------------
# ball benchmark


def _ball_adapt_loop(grid: Grid, t: float, start_level: int, coarsen: bool = True) -> bool:
    """Mark and adapt until nothing changes; returns whether every leaf with indicator 1 is at maxLevel."""
    comm = grid.comm
    for _ in range(2 * grid.max_level + 4):
        ball_mark(grid, t, coarsen=coarsen, min_level=start_level)
        adapt_callback(grid)
        st = grid.last_adapt_stats
        if comm.global_sum(st.refined + st.coarsened) == 0:
            break
    return comm.global_sum(ball_unresolved(grid, t)) == 0


def _ball_rank(comm, cfg: RunConfig, prob: Problem) -> RankResult:
    res = RankResult(comm.rank)
    clock = _Clock(cfg.timings)
    lb = cfg.resolved_lb()
    grid = prob.make_grid(comm, max_level=cfg.max_level, lb_config=lb)
    _uniform_refine(grid, cfg.start_level)
    res.resolved.append(_ball_adapt_loop(grid, 0.0, cfg.start_level, coarsen=False))
    if grid.size > 1:
        _balance(grid, cfg, None, res)
    res.initial_leaves = grid.global_leaf_count()
    steps = cfg.steps if cfg.steps is not None else 50
    T = cfg.final_time if cfg.final_time is not None else 1.0
    out = Path(cfg.output) if cfg.output else None
    if cfg.vtk and out is not None:
        _vtk(grid, None, out / f"ball-{0:05d}.r{comm.rank}.vtk")
    dt = T / steps
    for step in range(1, steps + 1):
        t = T * step / steps
        t0 = clock.now()
        res.resolved.append(_ball_adapt_loop(grid, t, cfg.start_level))
        t1 = clock.now()
        if grid.size > 1 and cfg.lb_every > 0 and step % cfg.lb_every == 0:
            _balance(grid, cfg, None, res)
        t2 = clock.now()
        _metrics(grid, res, step, t, dt, (0.0, 0.0, t1 - t0, t2 - t1), [])
        if cfg.vtk and out is not None and step % 10 == 0:
            _vtk(grid, None, out / f"ball-{step:05d}.r{comm.rank}.vtk")
    res.final_time = T
    if cfg.collect_fields:
        res.fields = {e.global_id: (float(e.level),) for e in grid.leaves}
    return res


def _rank_main(comm, cfg: RunConfig) -> RankResult:
    prob = get_problem(cfg.kind, cfg.problem)
    if cfg.max_level < cfg.start_level:
        raise ValueError("maxLevel must be >= startLevel")
    if prob.kind == "ball":
        return _ball_rank(comm, cfg, prob)
    return _solver_rank(comm, cfg, prob)


def run(cfg: RunConfig) -> RunResult:
    """Run a configuration on ``cfg.ranks`` simulated ranks."""
    get_problem(cfg.kind, cfg.problem)
    cfg.resolved_lb()
    world = World(cfg.ranks, cfg.mode)
    results = world.run(_rank_main, cfg)
    return RunResult(cfg, results, world.tally.snapshot())


def mass_drift(result: RunResult) -> float:
    m = result.ranks[0].masses
    return abs(m[-1] - m[0]) if m else math.nan
