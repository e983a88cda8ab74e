"""Registry of desk-scale test problems: macro grid, initial data and solver settings."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..io.factory import structured_grid
from .flux import primitive_to_conservative
from .scheme import BND_INFLOW, BND_OUTFLOW, BND_WALL, EulerModel, TransportModel


@dataclass(frozen=True)
class Problem:
    nr: int
    name: str
    kind: str  # transport | euler | ball
    dim: int
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    cells: tuple[int, ...]
    final_time: float = 1.0
    initial: Callable | None = None
    tol_refine: float = 0.1
    tol_coarsen: float = 0.02
    relative_jump: bool = False
    keep: Callable | None = None
    boundary_id: Callable | None = None
    inflow: tuple[float, ...] | None = None
    notes: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def macro_count(self) -> int:
        if self.keep is None:
            return int(np.prod(self.cells))
        import itertools

        return sum(1 for c in itertools.product(*[range(n) for n in self.cells]) if self.keep(c))

    def make_grid(self, comm=None, max_level: int | None = None, lb_config=None):
        return structured_grid(self.lower, self.upper, self.cells, comm=comm, max_level=max_level,
                               lb_config=lb_config, keep=self.keep, boundary_id=self.boundary_id)

    def model(self):
        if self.kind == "transport":
            return TransportModel(self.dim)
        if self.kind == "euler":
            inflow = None if self.inflow is None else np.asarray(self.inflow)
            return EulerModel(self.dim, inflow=inflow)
        return None


# ----------------------------------------------------------------------
# initial data


def bump(center, radius: float):
    """Compactly supported ``(1 - (r/R)^2)^2`` bump."""
    c = np.asarray(center, dtype=float)

    def f(x):
        r2 = ((x - c[: x.shape[1]]) ** 2).sum(axis=1) / (radius * radius)
        return np.where(r2 < 1.0, (1.0 - r2) ** 2, 0.0)

    return f


def sod(x0: float = 0.5):
    def f(x):
        left = x[:, 0] < x0
        dim = x.shape[1]
        rho = np.where(left, 1.0, 0.125)
        p = np.where(left, 1.0, 0.1)
        return primitive_to_conservative(rho, np.zeros((len(x), dim)), p)

    return f


def shock_bubble(x):
    """Mach 1.22 shock in air hitting a light circular bubble."""
    dim = x.shape[1]
    n = len(x)
    rho = np.ones(n)
    p = np.ones(n)
    vel = np.zeros((n, dim))
    post = x[:, 0] < 0.3
    rho[post] = 1.3764
    p[post] = 1.5698
    vel[post, 0] = 0.394
    bub = ((x[:, 0] - 0.8) ** 2 + (x[:, 1] - 0.5) ** 2) < 0.2**2
    rho[bub] = 0.1358
    return primitive_to_conservative(rho, vel, p)


STEP_STATE = (1.4, 3.0, 0.0, 1.0)


def forward_step(x):
    dim = x.shape[1]
    n = len(x)
    rho, u, v, p = STEP_STATE
    vel = np.zeros((n, dim))
    vel[:, 0] = u
    return primitive_to_conservative(np.full(n, rho), vel, np.full(n, p))


def _sod_boundary(cell, face):
    return BND_OUTFLOW


def _channel_walls(cell, face):
    return BND_WALL if face >> 1 == 1 else BND_OUTFLOW


def _step_keep(cell):
    return not (cell[0] >= 3 and cell[1] == 0)


def _step_boundary(cell, face):
    if face == 0:
        return BND_INFLOW
    if face == 1 and cell[0] == 14:
        return BND_OUTFLOW
    return BND_WALL  # channel walls and the three faces of the step


_STEP_INFLOW = tuple(float(v) for v in primitive_to_conservative(
    np.array([STEP_STATE[0]]), np.array([[STEP_STATE[1], STEP_STATE[2]]]), np.array([STEP_STATE[3]]))[0])

PROBLEMS: dict[str, dict[int, Problem]] = {
    "transport": {
        0: Problem(0, "bump-16x16", "transport", 2, (0.0, 0.0), (1.0, 1.0), (16, 16), final_time=0.25,
                   initial=bump((0.3, 0.3), 0.15), tol_refine=0.04, tol_coarsen=0.01,
                   notes="compact bump advected diagonally"),
        1: Problem(1, "bump-8x8", "transport", 2, (0.0, 0.0), (1.0, 1.0), (8, 8), final_time=0.25,
                   initial=bump((0.3, 0.3), 0.15), tol_refine=0.04, tol_coarsen=0.01,
                   notes="small variant for smoke runs"),
        2: Problem(2, "bump-3d", "transport", 3, (0.0, 0.0, 0.0), (1.0, 1.0, 1.0), (4, 4, 4), final_time=0.2,
                   initial=bump((0.3, 0.3, 0.5), 0.2), tol_refine=0.05, tol_coarsen=0.01,
                   notes="3D hexahedral bump"),
    },
    "euler": {
        0: Problem(0, "sod", "euler", 2, (0.0, 0.0), (1.0, 0.125), (8, 1), final_time=0.2,
                   initial=sod(0.5), relative_jump=True, boundary_id=_sod_boundary,
                   notes="Sod shock tube on a strip, transmissive ends"),
        1: Problem(1, "shock-bubble", "euler", 2, (0.0, 0.0), (2.0, 1.0), (8, 4), final_time=0.3,
                   initial=shock_bubble, relative_jump=True, boundary_id=_channel_walls,
                   notes="Mach 1.22 shock meets a light bubble; walls top and bottom"),
        2: Problem(2, "forward-step", "euler", 2, (0.0, 0.0), (3.0, 1.0), (15, 5), final_time=0.5,
                   initial=forward_step, relative_jump=True, keep=_step_keep, boundary_id=_step_boundary,
                   inflow=_STEP_INFLOW, notes="Mach 3 channel with a forward-facing step"),
    },
    "ball": {
        0: Problem(0, "ball-32x32", "ball", 2, (0.0, 0.0), (1.0, 1.0), (32, 32),
                   notes="rotating ball indicator, 2D slice"),
        1: Problem(1, "ball-16x16", "ball", 2, (0.0, 0.0), (1.0, 1.0), (16, 16), notes="smaller 2D variant"),
        2: Problem(2, "ball-3d", "ball", 3, (0.0, 0.0, 0.0), (1.0, 1.0, 1.0), (6, 6, 6), notes="3D hexahedra"),
    },
}


def get_problem(kind: str, nr: int) -> Problem:
    try:
        return PROBLEMS[kind][nr]
    except KeyError:
        raise KeyError(f"unknown problem {nr} for {kind}") from None


def registry_table(kind: str | None = None) -> str:
    rows = []
    for k, probs in PROBLEMS.items():
        if kind is not None and k != kind:
            continue
        for p in probs.values():
            size = "x".join(str(c) for c in p.cells)
            rows.append(f"{k:9s} {p.nr:3d}  {p.name:14s} {p.dim}D  macro {size:8s} ({p.macro_count} cells)  {p.notes}")
    return "\n".join(rows)
