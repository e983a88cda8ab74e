"""Leaf intersections flattened into arrays for vectorised flux assembly.

Every face between two leaves appears exactly once on a rank.  Its geometry
and orientation are taken from a canonical side that every rank agrees on:
the finer element on a nonconforming face, otherwise the element with the
smaller global id.  Fluxes are therefore computed from identical inputs no
matter how the grid is distributed, which makes results independent of the
rank count bit for bit.

Each cell accumulates its face contributions in fixed slots
``face * nsub + subface`` and sums them in slot order.
"""

from __future__ import annotations

import math

import numpy as np

from ..mesh.grid import MISSING, Element, Grid, GridError
from ..mesh.reference import CUBE, TRIANGLE_FACES


def slots_per_face(grid: Grid) -> int:
    return 1 << (grid.dim - 1) if grid.etype == CUBE else 1


def num_slots(grid: Grid) -> int:
    nf = 2 * grid.dim if grid.etype == CUBE else 3
    return nf * slots_per_face(grid)


def _record(left: Element, right: Element | None, vec, slot_l: int, slot_r: int, bnd: int):
    area = math.sqrt(sum(x * x for x in vec))
    normal = tuple(x / area for x in vec)
    if left.macro.is_ghost:
        slot_l = -1
    if right is not None and right.macro.is_ghost:
        slot_r = -1
    return (left, right, normal, area, slot_l, slot_r, bnd)


def _simplex_face(n: Element, a: int, b: int) -> int:
    for g, (p, q) in enumerate(TRIANGLE_FACES):
        if {n.verts[p], n.verts[q]} == {a, b}:
            return g
    raise GridError("triangles do not share an edge")


def _leaf_faces(grid: Grid, e: Element, nsub: int):
    deps: list[Element] = []
    recs: list[tuple] = []
    m = e.macro
    if m.etype != CUBE:
        for f, (p, q) in enumerate(TRIANGLE_FACES):
            n = grid.edge_neighbor(e, f)
            if n is None:
                recs.append(_record(e, None, e.face_vector(f), f, -1, 0))
                continue
            deps.append(n)
            if e.global_id < n.global_id:
                g = _simplex_face(n, e.verts[p], e.verts[q])
                recs.append(_record(e, n, e.face_vector(f), f, g, 0))
        return deps, recs
    gid = e.global_id
    for f in range(2 * grid.dim):
        r = grid.face_neighbor(e, f)
        if r is None:
            b = m.boundary[f]
            recs.append(_record(e, None, e.face_vector(f), f * nsub, -1, 0 if b is None else b))
            continue
        if r is MISSING:
            raise GridError(f"neighbour of {e!r} across face {f} is not available on rank {grid.rank}")
        n, g, tgt = r
        if n.children is None:
            deps.append(n)
            if n.level == e.level:
                if gid < n.global_id:
                    recs.append(_record(e, n, e.face_vector(f), f * nsub, g * nsub, 0))
                elif n.macro.is_ghost:
                    recs.append(_record(n, e, n.face_vector(g), g * nsub, f * nsub, 0))
            else:
                sub = grid.subface_index(n, g, e.level, tgt)
                recs.append(_record(e, n, e.face_vector(f), f * nsub, g * nsub + sub, 0))
            continue
        for k in grid.leaves_on_face(n, g):
            deps.append(k)
            if not k.macro.is_ghost:
                continue
            back = grid.face_neighbor(k, g)
            if back is None or back is MISSING or back[0] is not e:
                raise GridError("inconsistent nonconforming face")
            _, fb, tb = back
            sub = grid.subface_index(e, fb, k.level, tb)
            recs.append(_record(k, e, k.face_vector(g), g * nsub, fb * nsub + sub, 0))
    return deps, recs


def _valid(cache) -> bool:
    for d in cache[0]:
        if d.hindex < 0 or d.children is not None:
            return False
    return True


class FaceSet:
    """Face arrays of one grid state (valid for a single ``grid.sequence``)."""

    def __init__(self, grid: Grid):
        nsub = slots_per_face(grid)
        recs: list[tuple] = []
        for e in grid.leaves:
            c = e.fcache
            if c is None or not _valid(c):
                c = e.fcache = _leaf_faces(grid, e, nsub)
            recs.extend(c[1])
        self.grid = grid
        self.sequence = grid.sequence
        self.dim = grid.dim
        self.nslots = num_slots(grid)
        self.n_interior = len(grid.leaves)
        self.n_cells = self.n_interior + len(grid.ghost_leaves)
        n = len(recs)
        self.size = n
        self.left = np.fromiter((r[0].leaf_index for r in recs), dtype=np.int64, count=n)
        self.right = np.fromiter((-1 if r[1] is None else r[1].leaf_index for r in recs), dtype=np.int64, count=n)
        self.normal = np.array([r[2] for r in recs], dtype=float).reshape(n, self.dim)
        self.area = np.fromiter((r[3] for r in recs), dtype=float, count=n)
        self.slot_left = np.fromiter((r[4] for r in recs), dtype=np.int64, count=n)
        self.slot_right = np.fromiter((r[5] for r in recs), dtype=np.int64, count=n)
        self.bnd = np.fromiter((r[6] for r in recs), dtype=np.int64, count=n)
        cells = grid.leaves + grid.ghost_leaves
        self.hidx = np.fromiter((e.hindex for e in cells), dtype=np.int64, count=self.n_cells)
        self.volume = np.fromiter((e.volume for e in cells), dtype=float, count=self.n_cells)
        self.center = np.array([e.center for e in cells], dtype=float).reshape(self.n_cells, self.dim)
        self.level = np.fromiter((e.level for e in cells), dtype=np.int64, count=self.n_cells)
        self.interior = self.right >= 0
        self._split = None
        self._whole = None

    def whole(self) -> "FaceView":
        if self._whole is None:
            self._whole = FaceView(self, np.arange(self.size))
        return self._whole

    def subset(self, mask: np.ndarray) -> "FaceView":
        return FaceView(self, np.flatnonzero(mask))

    def split(self, border: np.ndarray):
        """Faces touching a border cell, and the rest."""
        if self._split is None:
            touch = border[self.left] | (self.interior & border[np.where(self.interior, self.right, 0)])
            self._split = (self.subset(touch), self.subset(~touch))
        return self._split


class FaceView:
    """Index subset of a :class:`FaceSet`."""

    def __init__(self, fs: FaceSet, sel: np.ndarray):
        self.sel = sel
        self.left = fs.left[sel]
        self.right = fs.right[sel]
        self.normal = fs.normal[sel]
        self.area = fs.area[sel]
        self.slot_left = fs.slot_left[sel]
        self.slot_right = fs.slot_right[sel]
        self.bnd = fs.bnd[sel]
        self.interior = fs.interior[sel]
        self.size = len(sel)


def face_set(grid: Grid) -> FaceSet:
    key = ("fvfaces", grid.sequence)
    fs = grid._caches.get(key)
    if fs is None:
        fs = grid._caches[key] = FaceSet(grid)
    return fs
