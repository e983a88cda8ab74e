"""Hierarchical grid: macro elements, refinement trees, traversal and indices.

A :class:`Grid` lives on exactly one simulated rank.  It owns the interior
macro elements of that rank plus read-only ghost mirrors of face-adjacent
remote macro elements.  Each macro element roots a refinement tree of
:class:`Element` nodes; cube trees use isotropic midpoint subdivision and
triangle trees use newest-vertex bisection.

Cube nodes carry integer cell coordinates ``idx`` inside their macro element
(``0 <= idx[a] < 2**level``), which makes face-neighbour lookup a matter of
integer arithmetic plus, across macro faces, a signed axis permutation
derived from the global vertex ids of the shared face.
"""

from __future__ import annotations

from typing import Any, Callable, Iterator, Optional

from . import geometry as geo
from .reference import (
    CUBE,
    SIMPLEX,
    TRIANGLE_FACES,
    cube_children_on_face,
    cube_face_vertices,
    face_vertices,
    num_children,
    num_faces,
    num_vertices,
)

MAX_DEPTH = 64


class GridError(RuntimeError):
    pass


class _Missing:
    """Neighbour exists globally but is not present on this rank."""

    def __repr__(self) -> str:
        return "MISSING"


MISSING = _Missing()


def encode_macro_id(macro_id: tuple[int, ...]) -> int:
    """Injective integer encoding of a sorted vertex-id tuple."""
    out = 0
    for g in reversed(macro_id):
        out = (out << 64) | (g & ((1 << 64) - 1))
    return out | (len(macro_id) << (64 * len(macro_id)))


class Element:
    """Node of a refinement tree; doubles as the entity view handed to users."""

    __slots__ = (
        "macro",
        "father",
        "children",
        "level",
        "path",
        "idx",
        "verts",
        "ref_edge",
        "hindex",
        "mark",
        "is_new",
        "might_vanish",
        "leaf_index",
        "level_index",
        "flag",
        "fcache",
        "_corners",
        "_center",
        "_volume",
    )

    def __init__(self, macro: "MacroElement", father: Optional["Element"], level: int, path: tuple):
        self.macro = macro
        self.father = father
        self.children: list[Element] | None = None
        self.level = level
        self.path = path
        self.idx: tuple[int, ...] | None = None
        self.verts: tuple[int, int, int] | None = None
        self.ref_edge = 0
        self.hindex = -1
        self.mark = 0
        self.is_new = False
        self.might_vanish = False
        self.leaf_index = -1
        self.level_index = -1
        self.flag = False
        self.fcache = None
        self._corners = None
        self._center = None
        self._volume = None

    def __repr__(self) -> str:
        return f"Element(macro={self.macro.macro_id}, path={self.path})"

    @property
    def is_leaf(self) -> bool:
        return self.children is None

    @property
    def is_ghost(self) -> bool:
        return self.macro.is_ghost

    @property
    def etype(self) -> str:
        return self.macro.etype

    @property
    def global_id(self) -> tuple[tuple[int, ...], tuple[int, ...]]:
        return (self.macro.macro_id, self.path)

    @property
    def corners(self) -> tuple:
        c = self._corners
        if c is None:
            m = self.macro
            if m.etype == CUBE:
                if self.level == 0:
                    c = tuple(m.coords)
                else:
                    c = geo.cube_sub_corners(m.coords, m.dim, self.level, self.idx)
            else:
                vc = m.grid._vcoords
                c = tuple(vc[v] for v in self.verts)
            self._corners = c
        return c

    @property
    def center(self) -> tuple[float, ...]:
        c = self._center
        if c is None:
            m = self.macro
            if m.etype == CUBE and self.level > 0:
                c = geo.cube_sub_center(m.coords, m.dim, self.level, self.idx)
            else:
                c = geo.center(self.corners)
            self._center = c
        return c

    barycenter = center

    @property
    def volume(self) -> float:
        v = self._volume
        if v is None:
            m = self.macro
            if m.etype == CUBE:
                v = geo.cube_volume(self.corners, m.dim)
            else:
                v = geo.triangle_area(*self.corners)
            self._volume = v
        return v

    @property
    def refinement_edge(self) -> int:
        return self.ref_edge

    def face_vector(self, face: int) -> tuple[float, ...]:
        """Outward normal scaled by the face area."""
        m = self.macro
        if m.etype == CUBE:
            return geo.cube_face_vector(self.corners, m.dim, face, m.orient)
        a, b = TRIANGLE_FACES[face]
        cs = self.corners
        return geo.edge_vector_outward(cs[a], cs[b], self.center)

    def leaves(self) -> Iterator["Element"]:
        stack = [self]
        while stack:
            n = stack.pop()
            if n.children is None:
                yield n
            else:
                stack.extend(reversed(n.children))

    def subtree(self) -> Iterator["Element"]:
        """Preorder traversal of this node and its descendants."""
        stack = [self]
        while stack:
            n = stack.pop()
            yield n
            if n.children is not None:
                stack.extend(reversed(n.children))


class MacroElement:
    """Coarsest-level element; root of a refinement tree and unit of migration."""

    __slots__ = (
        "grid",
        "etype",
        "dim",
        "gids",
        "coords",
        "macro_id",
        "int_id",
        "insertion_index",
        "sfc_key",
        "is_ghost",
        "owner",
        "root",
        "boundary",
        "neighbor_ids",
        "links",
        "orient",
        "ref_edge",
        "border_ranks",
    )

    def __init__(self, grid: "Grid", etype: str, gids: tuple[int, ...], coords: list, *, owner: int, ghost: bool = False):
        self.grid = grid
        self.etype = etype
        self.dim = grid.dim
        self.gids = tuple(int(g) for g in gids)
        self.coords = [tuple(float(x) for x in c) for c in coords]
        self.macro_id = tuple(sorted(self.gids))
        self.int_id = encode_macro_id(self.macro_id)
        self.insertion_index = -1
        self.sfc_key = 0
        self.is_ghost = ghost
        self.owner = owner
        self.root: Element | None = None
        nf = num_faces(etype, self.dim)
        self.boundary: list[int | None] = [None] * nf
        self.neighbor_ids: list[tuple[int, ...] | None] = [None] * nf
        self.links: list[Any] = [None] * nf
        self.orient = geo.orientation(tuple(self.coords), self.dim) if etype == CUBE else 1
        self.ref_edge = 0
        self.border_ranks: set[int] = set()

    def __repr__(self) -> str:
        kind = "ghost" if self.is_ghost else "interior"
        return f"MacroElement({self.macro_id}, {kind}, owner={self.owner})"

    def face_gids(self, face: int) -> tuple[int, ...]:
        return tuple(self.gids[v] for v in face_vertices(self.etype, self.dim)[face])

    def face_key(self, face: int) -> tuple[int, ...]:
        return tuple(sorted(self.face_gids(face)))

    @property
    def center(self) -> tuple[float, ...]:
        return geo.center(tuple(self.coords))


class FaceTransform:
    """Maps cell coordinates adjacent to a macro face into the neighbour's frame."""

    __slots__ = ("rules",)

    def __init__(self, rules: tuple):
        # rules[b] = (src_axis, flip) or ("const", side)
        self.rules = rules

    def __call__(self, idx: tuple[int, ...], level: int) -> tuple[int, ...]:
        top = (1 << level) - 1
        out = []
        for src, flag in self.rules:
            if src < 0:
                out.append(top if flag else 0)
            else:
                t = idx[src]
                out.append(top - t if flag else t)
        return tuple(out)


def cube_face_transform(m: MacroElement, f: int, n: MacroElement, g: int) -> FaceTransform:
    dim = m.dim
    fv_m = cube_face_vertices(dim)[f]
    pos_n = {gid: k for k, gid in enumerate(n.gids)}
    a_m, s_m = divmod(f, 2)
    a_n, s_n = divmod(g, 2)
    v0 = fv_m[0]
    w0 = pos_n[m.gids[v0]]
    rules: list = [None] * dim
    rules[a_n] = (-1, s_n)
    for a in range(dim):
        if a == a_m:
            continue
        va = v0 ^ (1 << a)
        wa = pos_n[m.gids[va]]
        diff = w0 ^ wa
        b = diff.bit_length() - 1
        if diff != (1 << b) or b == a_n:
            raise GridError(f"inconsistent face orientation between {m.macro_id} and {n.macro_id}")
        flip = ((w0 >> b) & 1) != ((v0 >> a) & 1)
        rules[b] = (a, flip)
    return FaceTransform(tuple(rules))


class Grid:
    """Rank-local view of a (possibly distributed) hierarchical grid."""

    def __init__(self, dim: int, etype: str, comm=None):
        from ..parallel.comm import SerialComm

        if etype not in (CUBE, SIMPLEX):
            raise ValueError(f"unknown element type {etype!r}")
        if etype == SIMPLEX and dim != 2:
            raise NotImplementedError("simplex grids are supported in 2D only")
        if dim not in (2, 3):
            raise ValueError("grid dimension must be 2 or 3")
        self.dim = dim
        self.etype = etype
        self.comm = comm if comm is not None else SerialComm()
        self.macros: list[MacroElement] = []
        self.ghosts: list[MacroElement] = []
        self.macro_by_id: dict[tuple[int, ...], MacroElement] = {}
        # global replicated ownership table: macro_id -> owner rank
        self.owners: dict[tuple[int, ...], int] = {}
        self.bbox: tuple[tuple[float, ...], tuple[float, ...]] | None = None
        self.max_level = MAX_DEPTH
        self.lb_config = None
        self.verify_borders = False
        self.sequence = 0
        self.leaves: list[Element] = []
        self.ghost_leaves: list[Element] = []
        self._next_hindex = 0
        self._free: list[int] = []
        self._level_sets: dict[int, list[Element]] | None = None
        self._adapt_plan = None
        self.last_adapt_stats = None
        self.last_plan = None
        self.last_import_ranks: set[int] | None = None
        self._pending_request = None
        self._vertex_master: dict[int, int] = {}
        self._caches: dict[Any, Any] = {}
        self._ghost_bits: dict[tuple[int, ...], bytes] = {}
        # triangle bookkeeping
        self._vcoords: list[tuple[float, ...]] = []
        self._vgid: dict[int, int] = {}
        self._midpoint: dict[tuple[int, int], int] = {}
        self._edge_leaves: dict[tuple[int, int], list[Element]] = {}

    # ------------------------------------------------------------------
    # basic properties
    @property
    def rank(self) -> int:
        return self.comm.rank

    @property
    def size(self) -> int:
        return self.comm.size

    @property
    def hierarchy_size(self) -> int:
        return self._next_hindex

    def __repr__(self) -> str:
        return (
            f"Grid(dim={self.dim}, etype={self.etype}, rank={self.rank}/{self.size}, "
            f"macros={len(self.macros)}, leaves={len(self.leaves)})"
        )

    # ------------------------------------------------------------------
    # hierarchy index allocation
    def _alloc(self) -> int:
        if self._free:
            return self._free.pop()
        h = self._next_hindex
        self._next_hindex += 1
        return h

    def _release(self, h: int) -> None:
        self._free.append(h)

    # ------------------------------------------------------------------
    # macro management
    def _make_root(self, m: MacroElement) -> Element:
        root = Element(m, None, 0, ())
        root.hindex = self._alloc()
        if m.etype == CUBE:
            root.idx = (0,) * self.dim
        else:
            root.verts = tuple(self._vertex_for_gid(g, c) for g, c in zip(m.gids, m.coords))
            root.ref_edge = m.ref_edge
            if not m.is_ghost:
                self._edge_add(root)
        m.root = root
        return root

    def _vertex_for_gid(self, gid: int, coord) -> int:
        v = self._vgid.get(gid)
        if v is None:
            v = len(self._vcoords)
            self._vcoords.append(tuple(float(x) for x in coord))
            self._vgid[gid] = v
        return v

    def _drop_tree(self, m: MacroElement) -> None:
        if m.root is None:
            return
        if m.etype == SIMPLEX and not m.is_ghost:
            for leaf in list(m.root.leaves()):
                self._edge_remove(leaf)
        for n in m.root.subtree():
            self._release(n.hindex)
            n.hindex = -1
        m.root = None

    def macro_elements(self, include_ghosts: bool = False) -> Iterator[MacroElement]:
        yield from self.macros
        if include_ghosts:
            yield from self.ghosts

    def rebuild_links(self) -> None:
        """Recompute per-face neighbour links of all local macro elements."""
        for m in list(self.macros) + list(self.ghosts):
            for f, nid in enumerate(m.neighbor_ids):
                if nid is None:
                    m.links[f] = None
                    continue
                n = self.macro_by_id.get(nid)
                if n is None:
                    m.links[f] = MISSING
                    continue
                g = self._matching_face(m, f, n)
                tr = cube_face_transform(m, f, n, g) if m.etype == CUBE else None
                m.links[f] = (n, g, tr)
        self._caches.clear()

    def _matching_face(self, m: MacroElement, f: int, n: MacroElement) -> int:
        key = m.face_key(f)
        for g in range(num_faces(n.etype, n.dim)):
            if n.face_key(g) == key:
                return g
        raise GridError(f"macro elements {m.macro_id} and {n.macro_id} do not share face {key}")

    # ------------------------------------------------------------------
    # refinement primitives
    def refine(self, e: Element) -> list[Element]:
        """Refine a leaf once; returns the children."""
        if e.children is not None:
            raise GridError("refine requires a leaf")
        if e.level >= MAX_DEPTH:
            raise GridError("depth overflow")
        if e.macro.etype == CUBE:
            kids = self._refine_cube(e)
        else:
            kids = self._bisect(e)
        self.sequence += 1
        return kids

    def _refine_cube(self, e: Element) -> list[Element]:
        dim = self.dim
        lvl = e.level + 1
        m = e.macro
        path = e.path
        if dim == 2:
            i2, j2 = e.idx[0] << 1, e.idx[1] << 1
            idxs = ((i2, j2), (i2 + 1, j2), (i2, j2 + 1), (i2 + 1, j2 + 1))
        else:
            i2, j2, k2 = e.idx[0] << 1, e.idx[1] << 1, e.idx[2] << 1
            idxs = tuple((i2 + (c & 1), j2 + ((c >> 1) & 1), k2 + (c >> 2)) for c in range(8))
        kids = []
        alloc = self._alloc
        for c, ix in enumerate(idxs):
            k = Element(m, e, lvl, path + (c,))
            k.idx = ix
            k.hindex = alloc()
            kids.append(k)
        e.children = kids
        return kids

    def _bisect(self, e: Element) -> list[Element]:
        v = e.verts
        a_loc, b_loc = TRIANGLE_FACES[e.ref_edge]
        c_loc = 3 - a_loc - b_loc
        a, b, c = v[a_loc], v[b_loc], v[c_loc]
        key = (a, b) if a < b else (b, a)
        mid = self._midpoint.get(key)
        if mid is None:
            pa, pb = self._vcoords[a], self._vcoords[b]
            mid = len(self._vcoords)
            self._vcoords.append(tuple(0.5 * (x + y) for x, y in zip(pa, pb)))
            self._midpoint[key] = mid
        m = e.macro
        lvl = e.level + 1
        k0 = Element(m, e, lvl, e.path + (0,))
        k0.verts = (a, c, mid)
        k1 = Element(m, e, lvl, e.path + (1,))
        k1.verts = (b, c, mid)
        for k in (k0, k1):
            k.ref_edge = 0
            k.hindex = self._alloc()
        e.children = [k0, k1]
        self._edge_replace(e, [k0, k1])
        return e.children

    def coarsen(self, father: Element) -> Element:
        """Remove the children of ``father``; they must all be leaves."""
        kids = self._detach(father)
        self._release_nodes(kids)
        return father

    def _detach(self, father: Element) -> list[Element]:
        # unlink leaf children but keep their hierarchy indices reserved
        if father.children is None:
            raise GridError("nonleaf children: element has no children")
        for k in father.children:
            if k.children is not None:
                raise GridError("nonleaf children")
        kids = father.children
        if father.macro.etype == SIMPLEX and not father.macro.is_ghost:
            self._edge_replace_back(father, kids)
        father.children = None
        self.sequence += 1
        return kids

    def _reattach(self, father: Element, kids: list[Element]) -> None:
        father.children = kids
        if father.macro.etype == SIMPLEX and not father.macro.is_ghost:
            a_loc, b_loc = TRIANGLE_FACES[father.ref_edge]
            a, b = father.verts[a_loc], father.verts[b_loc]
            self._midpoint[(a, b) if a < b else (b, a)] = kids[0].verts[2]
            self._edge_replace(father, kids)
        self.sequence += 1

    def _release_nodes(self, nodes: list[Element]) -> None:
        for k in nodes:
            self._release(k.hindex)
            k.hindex = -1

    # triangle edge bookkeeping -----------------------------------------
    @staticmethod
    def _edges_of(e: Element) -> list[tuple[int, int]]:
        v = e.verts
        out = []
        for a, b in TRIANGLE_FACES:
            x, y = v[a], v[b]
            out.append((x, y) if x < y else (y, x))
        return out

    def _edge_add(self, e: Element) -> None:
        for key in self._edges_of(e):
            self._edge_leaves.setdefault(key, []).append(e)

    def _edge_remove(self, e: Element) -> None:
        for key in self._edges_of(e):
            lst = self._edge_leaves[key]
            lst.remove(e)
            if not lst:
                del self._edge_leaves[key]

    def _edge_replace(self, father: Element, kids: list[Element]) -> None:
        if father.macro.is_ghost:
            return
        self._edge_remove(father)
        for k in kids:
            self._edge_add(k)

    def _edge_replace_back(self, father: Element, kids: list[Element]) -> None:
        for k in kids:
            self._edge_remove(k)
        self._edge_add(father)
        a_loc, b_loc = TRIANGLE_FACES[father.ref_edge]
        a, b = father.verts[a_loc], father.verts[b_loc]
        key = (a, b) if a < b else (b, a)
        mid = self._midpoint.get(key)
        if mid is not None:
            half = (a, mid) if a < mid else (mid, a)
            if half not in self._edge_leaves:
                del self._midpoint[key]

    def edge_neighbor(self, e: Element, face: int) -> Element | None:
        """Leaf triangle sharing local edge ``face`` with leaf ``e`` (conforming grids)."""
        a, b = TRIANGLE_FACES[face]
        x, y = e.verts[a], e.verts[b]
        key = (x, y) if x < y else (y, x)
        for n in self._edge_leaves.get(key, ()):
            if n is not e:
                return n
        return None

    # ------------------------------------------------------------------
    # cube neighbour search
    def face_neighbor(self, e: Element, face: int):
        """Locate the element across ``face`` of cube element ``e``.

        Returns ``(node, face_in_node, target_idx)`` where ``node`` is the
        deepest existing element at level ``<= e.level`` covering the cell
        adjacent to the face, ``face_in_node`` the face of ``node`` pointing
        back, and ``target_idx`` the adjacent cell's coordinates at
        ``e.level`` in the neighbour's frame.  Returns ``None`` on the domain
        boundary and ``MISSING`` if the neighbour is not present locally.
        """
        d = face >> 1
        lvl = e.level
        idx = e.idx
        i = idx[d]
        j = i + 1 if face & 1 else i - 1
        if 0 <= j < (1 << lvl):
            if self.dim == 2:
                tgt = (j, idx[1]) if d == 0 else (idx[0], j)
            else:
                tgt = idx[:d] + (j,) + idx[d + 1 :]
            anc = e.father
            k = 1
            while (j >> k) != (i >> k):
                anc = anc.father
                k += 1
            return self._descend(anc, tgt, lvl), face ^ 1, tgt
        link = e.macro.links[face]
        if link is None or link is MISSING:
            return link
        nm, g, tr = link
        tgt = tr(idx, lvl)
        return self._descend(nm.root, tgt, lvl), g, tgt

    def _descend(self, n: Element, tgt: tuple[int, ...], lvl: int) -> Element:
        if self.dim == 2:
            ti, tj = tgt
            while n.children is not None and n.level < lvl:
                sh = lvl - n.level - 1
                n = n.children[((ti >> sh) & 1) | (((tj >> sh) & 1) << 1)]
            return n
        while n.children is not None and n.level < lvl:
            sh = lvl - n.level - 1
            c = 0
            for a in range(self.dim):
                c |= ((tgt[a] >> sh) & 1) << a
            n = n.children[c]
        return n

    def leaves_on_face(self, n: Element, face: int) -> list[Element]:
        """Leaves of the subtree of ``n`` that touch its face ``face`` (preorder)."""
        if n.children is None:
            return [n]
        out: list[Element] = []
        sel = cube_children_on_face(self.dim, face)
        stack = [n]
        while stack:
            x = stack.pop()
            if x.children is None:
                out.append(x)
            else:
                stack.extend(x.children[c] for c in reversed(sel))
        return out

    def subface_index(self, coarse: Element, face: int, fine_level: int, tgt: tuple[int, ...]) -> int:
        """Position of a fine face inside ``face`` of the coarser element ``coarse``."""
        sh = fine_level - coarse.level - 1
        a_n = face >> 1
        sub = 0
        t = 0
        for b in range(self.dim):
            if b == a_n:
                continue
            sub |= ((tgt[b] >> sh) & 1) << t
            t += 1
        return sub

    def intersections(self, e: Element):
        """Yield ``(face, kind, others)`` for a leaf: kind in boundary/conforming/coarser/finer/missing."""
        if e.macro.etype == SIMPLEX:
            for f in range(3):
                n = self.edge_neighbor(e, f)
                yield (f, "boundary", ()) if n is None else (f, "conforming", (n,))
            return
        for f in range(2 * self.dim):
            r = self.face_neighbor(e, f)
            if r is None:
                yield f, "boundary", ()
            elif r is MISSING:
                yield f, "missing", ()
            else:
                n, g, _ = r
                if n.children is None:
                    yield f, ("conforming" if n.level == e.level else "coarser"), (n,)
                else:
                    yield f, "finer", tuple(self.leaves_on_face(n, g))

    # ------------------------------------------------------------------
    # traversal and index sets
    def leaf_iterator(self, include_ghosts: bool = False) -> Iterator[Element]:
        for m in self.macros:
            yield from m.root.leaves()
        if include_ghosts:
            for m in self.ghosts:
                yield from m.root.leaves()

    def hierarchic_iterator(self, macro: MacroElement | Element) -> Iterator[Element]:
        root = macro.root if isinstance(macro, MacroElement) else macro
        return root.subtree()

    def elements(self, include_ghosts: bool = False) -> Iterator[Element]:
        for m in self.macro_elements(include_ghosts):
            yield from m.root.subtree()

    def update_indices(self) -> None:
        """Rebuild leaf indices by insert-on-first-visit traversal."""
        leaves = []
        for m in self.macros:
            leaves.extend(m.root.leaves())
        ghost_leaves = []
        for m in self.ghosts:
            ghost_leaves.extend(m.root.leaves())
        for i, e in enumerate(leaves):
            e.leaf_index = i
        n = len(leaves)
        for i, e in enumerate(ghost_leaves):
            e.leaf_index = n + i
        self.leaves = leaves
        self.ghost_leaves = ghost_leaves
        self._level_sets = None
        self.sequence += 1
        self._caches.clear()

    def leaf_index(self, e: Element) -> int:
        return e.leaf_index

    @property
    def num_leaves(self) -> int:
        return len(self.leaves)

    def level_elements(self, level: int) -> list[Element]:
        if self._level_sets is None:
            sets: dict[int, list[Element]] = {}
            for m in self.macros:
                for n in m.root.subtree():
                    lst = sets.setdefault(n.level, [])
                    n.level_index = len(lst)
                    lst.append(n)
            self._level_sets = sets
        return self._level_sets.get(level, [])

    def level_index(self, e: Element) -> int:
        self.level_elements(e.level)
        return e.level_index

    def max_tree_level(self) -> int:
        return max((e.level for e in self.leaves), default=0)

    def find_entity(self, gid: tuple) -> Element | None:
        macro_id, path = gid
        m = self.macro_by_id.get(tuple(macro_id))
        if m is None:
            return None
        n = m.root
        for c in path:
            if n.children is None:
                return None
            n = n.children[c]
        return n

    # ------------------------------------------------------------------
    # marking (the adaptation protocols live in alugrid.adapt)
    def mark(self, e: Element, m: int) -> bool:
        if e.children is not None:
            raise GridError("only leaves can be marked")
        if m not in (-1, 0, 1):
            raise ValueError("mark must be -1, 0 or +1")
        if m > 0 and e.level >= min(self.max_level, MAX_DEPTH):
            e.mark = 0
            return False
        if m < 0 and e.level == 0:
            e.mark = 0
            return False
        e.mark = m
        return True

    def get_mark(self, e: Element) -> int:
        return e.mark

    # ------------------------------------------------------------------
    # misc
    def vertex_master(self, gid: int) -> int:
        return self._vertex_master[gid]

    def leaf_counts(self) -> list[int]:
        return self.comm.allgather(len(self.leaves))

    def global_leaf_count(self) -> int:
        return int(self.comm.global_sum(len(self.leaves)))

    # ------------------------------------------------------------------
    # adaptation and parallel entry points (implemented in sibling modules)
    def preAdapt(self) -> bool:
        from ..adapt import pre_adapt

        return pre_adapt(self)

    def adapt(self, handle=None) -> bool:
        from ..adapt import adapt, adapt_callback

        return adapt(self) if handle is None and self._adapt_plan is not None else adapt_callback(self, handle)

    def postAdapt(self) -> None:
        from ..adapt import post_adapt

        post_adapt(self)

    def loadBalance(self, handle=None, weights=None) -> bool:
        from ..parallel.runtime import load_balance

        return load_balance(self, handle, weights)

    def repartition(self, destinations, handle=None) -> bool:
        from ..parallel.runtime import repartition

        return repartition(self, destinations, handle)

    def communicate(self, handle, direction: str = "forward"):
        from ..parallel.ghosts import communicate

        return communicate(self, handle, direction)

    def macroView(self):
        from ..parallel.runtime import macro_view

        return macro_view(self)


def macro_weight(m: MacroElement) -> int:
    return sum(1 for _ in m.root.leaves())
