"""Refinement indicators: neighbour jumps of the solution and the rotating ball."""

from __future__ import annotations

import math

import numpy as np

from ..mesh.grid import Grid
from .faces import face_set

BALL_INNER = 0.15
BALL_OUTER = 0.25


def jump_indicator(grid: Grid, u: np.ndarray, relative: bool = False) -> np.ndarray:
    """Per interior leaf, the largest jump to any face neighbour.

    ``u`` holds one row per cell in leaf-index order (ghosts included).  The
    scalar jump is ``|uK - uN|`` on the first component; with ``relative``
    it is ``|uK - uN| / max(uK, uN)`` (used for the density).
    """
    fs = face_set(grid)
    ind = np.zeros(fs.n_cells)
    sel = np.flatnonzero(fs.interior)
    if len(sel):
        a = u[fs.left[sel], 0]
        b = u[fs.right[sel], 0]
        jump = np.abs(a - b)
        if relative:
            jump = jump / np.maximum(a, b)
        np.maximum.at(ind, fs.left[sel], jump)
        np.maximum.at(ind, fs.right[sel], jump)
    return ind[: fs.n_interior]


def jump_mark(grid: Grid, u: np.ndarray, tol_refine: float, tol_coarsen: float, min_level: int = 0,
              relative: bool = False) -> tuple[int, int]:
    """Mark leaves by the jump indicator; returns the numbers of refine and coarsen marks.

    Both sides of a border face see the same ghost values, so they compute the
    same jump and no extra exchange is needed.
    """
    if not tol_coarsen < tol_refine:
        raise ValueError("tolCoarsen must be smaller than tolRefine")
    ind = jump_indicator(grid, u, relative)
    nref = ncoarse = 0
    for e, eta in zip(grid.leaves, ind.tolist()):
        if eta > tol_refine:
            nref += grid.mark(e, 1)
        elif eta < tol_coarsen and e.level > min_level:
            ncoarse += grid.mark(e, -1)
        else:
            e.mark = 0
    return nref, ncoarse


def ball_center(t: float) -> tuple[float, float, float]:
    w = 2.0 * math.pi * t
    return (0.5 + math.cos(w) / 3.0, 0.5 + math.sin(w) / 3.0, 0.5)


def ball_indicator(x, t: float) -> int:
    """1 iff ``0.15 < |x - y(t)| < 0.25``; 2D points get the third coordinate 1/2."""
    y = ball_center(t)
    p = tuple(x) + (0.5,) * (3 - len(x))
    d = math.sqrt(sum((p[k] - y[k]) ** 2 for k in range(3)))
    return 1 if BALL_INNER < d < BALL_OUTER else 0


def ball_indicator_array(centers: np.ndarray, t: float) -> np.ndarray:
    y = ball_center(t)
    d2 = np.zeros(len(centers))
    for k in range(3):
        c = centers[:, k] if k < centers.shape[1] else 0.5
        d2 = d2 + (c - y[k]) ** 2
    d = np.sqrt(d2)
    return ((d > BALL_INNER) & (d < BALL_OUTER)).astype(np.int64)


def _centers(grid: Grid) -> np.ndarray:
    return np.array([e.center for e in grid.leaves], dtype=float).reshape(len(grid.leaves), grid.dim)


def ball_mark(grid: Grid, t: float, coarsen: bool = True, min_level: int = 0) -> int:
    """Mark +1 where the indicator is 1 (below maxLevel) and -1 elsewhere.

    A leaf is not marked for coarsening when its father's barycenter has
    indicator 1: the father would be refined again right away.  Returns the
    number of leaves marked for refinement.
    """
    eta = ball_indicator_array(_centers(grid), t)
    top = grid.max_level
    n = 0
    fathers = {}
    for e, v in zip(grid.leaves, eta.tolist()):
        if v:
            if e.level < top:
                e.mark = 1
                n += 1
            else:
                e.mark = 0
            continue
        e.mark = 0
        if not coarsen or e.level <= min_level:
            continue
        f = e.father
        fe = fathers.get(id(f))
        if fe is None:
            fe = fathers[id(f)] = ball_indicator(f.center, t)
        if fe == 0:
            e.mark = -1
    return n


def ball_unresolved(grid: Grid, t: float) -> int:
    """Number of local leaves with indicator 1 that are not at maxLevel."""
    eta = ball_indicator_array(_centers(grid), t)
    lv = np.fromiter((e.level for e in grid.leaves), dtype=np.int64, count=len(grid.leaves))
    return int(np.count_nonzero((eta == 1) & (lv < grid.max_level)))
