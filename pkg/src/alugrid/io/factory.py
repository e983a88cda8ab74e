"""Grid construction from vertices with global ids, elements and border declarations."""

from __future__ import annotations

import itertools
from collections import defaultdict
from typing import Sequence

from ..mesh.grid import Grid, GridError, MacroElement
from ..mesh.reference import CUBE, SIMPLEX, TRIANGLE_FACES, face_vertices, num_faces, num_vertices
from ..parallel.comm import SerialComm
from ..parallel.runtime import finalize_distribution
from .. import partition as part

DEFAULT_BOUNDARY_ID = 1


class FactoryError(ValueError):
    pass


def _etype(name: str) -> str:
    s = str(name).lower()
    if s in ("cube", "hexahedron", "quadrilateral", "quad", "hex"):
        return CUBE
    if s in ("simplex", "triangle", "tri"):
        return SIMPLEX
    raise FactoryError(f"unknown element type {name!r}")


def seed_refinement_edge(coords: Sequence, gids: Sequence[int]) -> int:
    """Longest edge; ties go to the edge with the smaller sorted global-id pair."""
    best = None
    for k, (a, b) in enumerate(TRIANGLE_FACES):
        pa, pb = coords[a], coords[b]
        length = sum((x - y) * (x - y) for x, y in zip(pa, pb))
        pair = tuple(sorted((gids[a], gids[b])))
        cand = (-length, pair, k)
        if best is None or cand < best:
            best = cand
    return best[2]


class GridFactory:
    """Collects one rank's part of a macro grid; :meth:`create_grid` is collective."""

    def __init__(self, dim: int, comm=None):
        if dim not in (2, 3):
            raise FactoryError("grid dimension must be 2 or 3")
        self.dim = dim
        self.comm = comm if comm is not None else SerialComm()
        self.coords: list[tuple[float, ...]] = []
        self.gids: list[int] = []
        self._gid_set: set[int] = set()
        self.elements: list[tuple[str, tuple[int, ...]]] = []
        self.boundary: dict[tuple[int, int], int] = {}
        self.boundary_segments: dict[tuple[int, ...], int] = {}
        self.border_faces: set[tuple[int, int]] = set()
        self.border_segments: set[tuple[int, ...]] = set()
        self.pre_ordered = False

    # -- insertion --------------------------------------------------------
    def insert_vertex(self, coord: Sequence[float], global_id: int | None = None) -> int:
        if len(coord) != self.dim:
            raise FactoryError(f"vertex needs {self.dim} coordinates, got {len(coord)}")
        c = tuple(float(x) for x in coord)
        if not all(x == x and abs(x) != float("inf") for x in c):
            raise FactoryError(f"non-finite vertex coordinate {c}")
        gid = len(self.coords) if global_id is None else int(global_id)
        if gid < 0:
            raise FactoryError("global vertex ids must be nonnegative")
        if gid in self._gid_set:
            raise FactoryError(f"duplicate global vertex id {gid}")
        self._gid_set.add(gid)
        self.coords.append(c)
        self.gids.append(gid)
        return len(self.coords) - 1

    def insert_element(self, etype: str, vertices: Sequence[int]) -> int:
        et = _etype(etype)
        if et == SIMPLEX and self.dim != 2:
            raise FactoryError("simplex elements are supported in 2D only")
        nv = num_vertices(et, self.dim)
        if len(vertices) != nv:
            raise FactoryError(f"{et} element in {self.dim}D needs {nv} vertices, got {len(vertices)}")
        vs = tuple(int(v) for v in vertices)
        for v in vs:
            if not 0 <= v < len(self.coords):
                raise FactoryError(f"vertex index {v} out of range (0..{len(self.coords) - 1})")
        if len(set(vs)) != nv:
            raise FactoryError(f"element repeats a vertex: {vs}")
        if self.elements and self.elements[0][0] != et:
            raise FactoryError("mixed element types are not supported")
        self.elements.append((et, vs))
        return len(self.elements) - 1

    def _check_face(self, element: int, face: int) -> None:
        if not 0 <= element < len(self.elements):
            raise FactoryError(f"element index {element} out of range")
        nf = num_faces(self.elements[element][0], self.dim)
        if not 0 <= face < nf:
            raise FactoryError(f"face {face} out of range for element with {nf} faces")

    def insert_boundary(self, element: int, face: int, boundary_id: int = DEFAULT_BOUNDARY_ID) -> None:
        self._check_face(element, face)
        self.boundary[(element, face)] = int(boundary_id)

    def insert_boundary_segment(self, vertices: Sequence[int], boundary_id: int = DEFAULT_BOUNDARY_ID) -> None:
        key = self._local_face_key(vertices)
        self.boundary_segments[key] = int(boundary_id)

    def insert_process_border(self, vertices_or_element, face: int | None = None) -> None:
        if face is None:
            self.border_segments.add(self._local_face_key(vertices_or_element))
        else:
            self._check_face(int(vertices_or_element), int(face))
            self.border_faces.add((int(vertices_or_element), int(face)))

    def _local_face_key(self, vertices: Sequence[int]) -> tuple[int, ...]:
        for v in vertices:
            if not 0 <= int(v) < len(self.coords):
                raise FactoryError(f"vertex index {v} out of range")
        return tuple(sorted(self.gids[int(v)] for v in vertices))

    # -- construction -----------------------------------------------------
    def create_grid(self, verify: bool = False, max_level: int | None = None, lb_config=None) -> Grid:
        return create_grid(self, verify=verify, max_level=max_level, lb_config=lb_config)


def _face_keys(etype: str, dim: int, gids: Sequence[int]) -> list[tuple[int, ...]]:
    return [tuple(sorted(gids[v] for v in fv)) for fv in face_vertices(etype, dim)]


def create_grid(factory: GridFactory, verify: bool = False, max_level: int | None = None, lb_config=None) -> Grid:
    """Build the distributed grid.  Collective over ``factory.comm``."""
    comm = factory.comm
    dim = factory.dim
    me = comm.rank
    local_etype = factory.elements[0][0] if factory.elements else None

    elems = []
    for et, vs in factory.elements:
        gids = tuple(factory.gids[v] for v in vs)
        elems.append((et, gids, [factory.coords[v] for v in vs]))

    # local face matching
    faces: dict[tuple[int, ...], list[tuple[int, int]]] = defaultdict(list)
    for k, (et, gids, _) in enumerate(elems):
        for f, key in enumerate(_face_keys(et, dim, gids)):
            faces[key].append((k, f))
    for key, claims in faces.items():
        if len(claims) > 2:
            raise GridError(f"nonmanifold border: face {key} shared by {len(claims)} elements")

    declared_border = set()
    for k, f in factory.border_faces:
        declared_border.add(_face_keys(elems[k][0], dim, elems[k][1])[f])
    declared_border |= factory.border_segments
    declared_bnd: dict[tuple[int, ...], int] = dict(factory.boundary_segments)
    for (k, f), bid in factory.boundary.items():
        declared_bnd[_face_keys(elems[k][0], dim, elems[k][1])[f]] = bid

    unmatched = {key: claims[0] for key, claims in faces.items() if len(claims) == 1}
    for key in declared_border:
        if key not in unmatched:
            raise FactoryError(f"declared process border {key} is not an unmatched face of this rank")
    undeclared = [key for key in unmatched if key not in declared_border and key not in declared_bnd]

    lo = [min((c[a] for _, _, cs in elems for c in cs), default=float("inf")) for a in range(dim)]
    hi = [max((c[a] for _, _, cs in elems for c in cs), default=float("-inf")) for a in range(dim)]
    record = {
        "etype": local_etype,
        "elements": [gids for _, gids, _ in elems],
        "lo": lo,
        "hi": hi,
        "discover": bool(undeclared) or verify,
    }
    directory = comm.allgather(record, category="directory")
    etypes = {r["etype"] for r in directory if r["etype"] is not None}
    if len(etypes) > 1:
        raise FactoryError("ranks disagree on the element type")
    if not etypes:
        raise FactoryError("grid has no elements")
    etype = etypes.pop()
    if etype == SIMPLEX and comm.size > 1:
        raise GridError("ghosts unsupported for bisection: simplex grids run on a single rank")
    bbox = (
        tuple(min(r["lo"][a] for r in directory) for a in range(dim)),
        tuple(max(r["hi"][a] for r in directory) for a in range(dim)),
    )
    owners: dict[tuple[int, ...], int] = {}
    for r, rec in enumerate(directory):
        for gids in rec["elements"]:
            mid = tuple(sorted(gids))
            if mid in owners:
                raise FactoryError(f"macro element {mid} inserted on ranks {owners[mid]} and {r}")
            owners[mid] = r

    # process-border identification
    neighbor_of: dict[tuple[int, ...], tuple[int, ...]] = {}
    discover = any(r["discover"] for r in directory)
    if comm.size > 1 and discover:
        mine = [(key, tuple(sorted(elems[k][1]))) for key, (k, _) in unmatched.items()]
        received = comm.alltoall([mine] * comm.size, category="facekeys")
        claims: dict[tuple[int, ...], list[tuple[int, tuple]]] = defaultdict(list)
        for r, lst in enumerate(received):
            for key, mid in lst:
                claims[key].append((r, mid))
        for key, cl in claims.items():
            if len(cl) > 2:
                raise GridError(f"nonmanifold border: face {key} claimed {len(cl)} times")
        discovered = {}
        for key in unmatched:
            others = [mid for r, mid in claims.get(key, ()) if r != me]
            if others:
                discovered[key] = others[0]
        if verify and declared_border and set(discovered) != declared_border:
            missing = sorted(set(discovered) - declared_border)
            extra = sorted(declared_border - set(discovered))
            raise FactoryError(
                f"partial border declaration: {len(missing)} undeclared and {len(extra)} spurious process-border faces"
            )
        for key in declared_border:
            if key not in discovered:
                raise FactoryError(f"declared process border {key} has no neighbor on another rank")
        neighbor_of.update(discovered)
    elif declared_border:
        wanted = set(declared_border)
        for r, rec in enumerate(directory):
            if r == me:
                continue
            for gids in rec["elements"]:
                for key in _face_keys(etype, dim, gids):
                    if key in wanted:
                        neighbor_of[key] = tuple(sorted(gids))
        for key in declared_border:
            if key not in neighbor_of:
                raise FactoryError(f"declared process border {key} has no neighbor on another rank")

    grid = Grid(dim, etype, comm)
    grid.bbox = bbox
    grid.owners = owners
    grid.verify_borders = verify
    if max_level is not None:
        grid.max_level = int(max_level)
    grid.lb_config = lb_config
    for k, (et, gids, coords) in enumerate(elems):
        m = MacroElement(grid, et, gids, coords, owner=me)
        m.insertion_index = k
        m.sfc_key = part.sfc_key(m.center, bbox)
        if et == SIMPLEX:
            m.ref_edge = seed_refinement_edge(coords, gids)
        for f, key in enumerate(_face_keys(et, dim, gids)):
            claims = faces[key]
            if len(claims) == 2:
                other = claims[0][0] if claims[1][0] == k else claims[1][0]
                m.neighbor_ids[f] = tuple(sorted(elems[other][1]))
            elif key in neighbor_of:
                m.neighbor_ids[f] = neighbor_of[key]
            else:
                m.boundary[f] = declared_bnd.get(key, DEFAULT_BOUNDARY_ID)
        grid.macros.append(m)
        grid.macro_by_id[m.macro_id] = m
        grid._make_root(m)
    finalize_distribution(grid)
    return grid


def structured_grid(lower: Sequence[float], upper: Sequence[float], cells: Sequence[int], comm=None,
                    simplex: bool = False, verify: bool = False, max_level: int | None = None, lb_config=None,
                    keep=None, boundary_id=None) -> Grid:
    """Tensor-product macro grid; each rank inserts only its SFC-assigned cells.  Collective.

    ``keep(cell)`` drops cells for which it returns False; ``boundary_id(cell, face)``
    gives the id of a boundary face of a cube cell (default 1).
    """
    comm = comm if comm is not None else SerialComm()
    dim = len(cells)
    if len(lower) != dim or len(upper) != dim:
        raise FactoryError("lower, upper and cells must have the same length")
    if any(int(n) < 1 for n in cells):
        raise FactoryError("need at least one cell per axis")
    if simplex and dim != 2:
        raise FactoryError("simplex structured grids are 2D only")
    n = [int(c) for c in cells]
    lo = [float(x) for x in lower]
    hi = [float(x) for x in upper]
    bbox = (tuple(lo), tuple(hi))

    def vid(ix: Sequence[int]) -> int:
        g = 0
        for a in range(dim - 1, -1, -1):
            g = g * (n[a] + 1) + ix[a]
        return g

    def vcoord(ix: Sequence[int]) -> tuple[float, ...]:
        return tuple(lo[a] + (hi[a] - lo[a]) * ix[a] / n[a] for a in range(dim))

    cell_ids = list(itertools.product(*[range(c) for c in reversed(n)]))
    cell_ids = [tuple(reversed(c)) for c in cell_ids]
    if keep is not None:
        cell_ids = [c for c in cell_ids if keep(c)]

    def center(c):
        return tuple(lo[a] + (hi[a] - lo[a]) * (c[a] + 0.5) / n[a] for a in range(dim))

    def cube_gids(c):
        return [vid([c[a] + ((k >> a) & 1) for a in range(dim)]) for k in range(1 << dim)]

    order = sorted(cell_ids, key=lambda c: (part.sfc_key(center(c), bbox), tuple(sorted(cube_gids(c)))))
    ranks = part.partition1d([1] * len(order), comm.size)
    rank_of = {c: r for c, r in zip(order, ranks)}

    fac = GridFactory(dim, comm)
    local_v: dict[int, int] = {}

    def vertex(ix) -> int:
        g = vid(ix)
        v = local_v.get(g)
        if v is None:
            v = local_v[g] = fac.insert_vertex(vcoord(ix), g)
        return v

    for c in order:
        if rank_of[c] != comm.rank:
            continue
        corners = [[c[a] + ((k >> a) & 1) for a in range(dim)] for k in range(1 << dim)]
        vs = [vertex(ix) for ix in corners]
        if simplex:
            tris = ((vs[0], vs[1], vs[3]), (vs[0], vs[3], vs[2]))
            for tri in tris:
                fac.insert_element(SIMPLEX, tri)
            continue
        e = fac.insert_element(CUBE, vs)
        for f in range(2 * dim):
            a, s = divmod(f, 2)
            nb = list(c)
            nb[a] += 1 if s else -1
            if not 0 <= nb[a] < n[a] or tuple(nb) not in rank_of:
                fac.insert_boundary(e, f, DEFAULT_BOUNDARY_ID if boundary_id is None else boundary_id(c, f))
            elif rank_of[tuple(nb)] != comm.rank:
                fac.insert_process_border(e, f)
    if simplex:
        for e, (_, vs) in enumerate(fac.elements):
            for f, (a, b) in enumerate(TRIANGLE_FACES):
                pa, pb = fac.coords[vs[a]], fac.coords[vs[b]]
                on = any(pa[x] == pb[x] and pa[x] in (lo[x], hi[x]) for x in range(dim))
                if on:
                    fac.insert_boundary(e, f)
    fac.pre_ordered = True
    return fac.create_grid(verify=verify, max_level=max_level, lb_config=lb_config)
