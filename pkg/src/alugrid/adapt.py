"""Grid adaptation: explicit pre/adapt/post cycle and single-call callback cycle.

Both protocols share one planner.  For cube grids the plan is

1. the refinement set R: leaves marked +1, closed under the 1-irregularity
   rule (a leaf coarser than a face neighbour in R joins R); across rank
   borders the closure iterates flag exchanges until no rank adds anything;
2. coarsening: fathers whose children are all leaves marked -1 and none in
   R, unless the father's neighbour is refined below the child level or
   about to be.

Triangle grids use newest-vertex bisection with recursive conforming
closure and remove a bisection vertex only when its whole patch is marked.

Each macro tree is executed atomically: if a callback raises, that tree is
restored before the error propagates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .mesh.container import PersistentContainer
from .mesh.grid import MISSING, Element, Grid, GridError
from .mesh.reference import CUBE, TRIANGLE_FACES, cube_children_on_face

__all__ = [
    "AdaptDataHandle",
    "ProtocolError",
    "RestrictProlongHandle",
    "adapt",
    "adapt_callback",
    "post_adapt",
    "pre_adapt",
    "prolong_local",
    "restrict_local",
]


class ProtocolError(RuntimeError):
    pass


class AdaptDataHandle:
    """Callbacks invoked during :func:`adapt_callback`."""

    def preCoarsening(self, father: Element) -> None:
        pass

    def postRefinement(self, father: Element) -> None:
        pass


def restrict_local(father: Element, container: PersistentContainer) -> None:
    """Father value := volume-weighted mean of the children."""
    kids = father.children
    total = 0.0
    acc = None
    for k in kids:
        v = k.volume
        x = container[k] * v
        acc = x if acc is None else acc + x
        total += v
    container[father] = acc / total


def prolong_local(father: Element, container: PersistentContainer) -> None:
    value = container[father]
    for k in father.children:
        container[k] = value


class RestrictProlongHandle(AdaptDataHandle):
    """Conservative transfer of one or more persistent containers."""

    def __init__(self, *containers: PersistentContainer):
        self.containers = containers

    def preCoarsening(self, father: Element) -> None:
        for c in self.containers:
            restrict_local(father, c)

    def postRefinement(self, father: Element) -> None:
        for c in self.containers:
            prolong_local(father, c)


@dataclass
class AdaptPlan:
    refine: list[Element] = field(default_factory=list)
    coarsen: list[Element] = field(default_factory=list)
    marked: int = 0


@dataclass
class AdaptStats:
    marked: int = 0
    refined: int = 0
    coarsened: int = 0


# ----------------------------------------------------------------------
# planning


def _cube_closure(grid: Grid, work: list[Element]) -> int:
    added = 0
    nf = 2 * grid.dim
    fn = grid.face_neighbor
    while work:
        leaf = work.pop()
        lvl = leaf.level
        for f in range(nf):
            r = fn(leaf, f)
            if r is None or r is MISSING:
                continue
            n = r[0]
            if n.children is None and n.level < lvl and not n.flag and not n.macro.is_ghost:
                n.flag = True
                work.append(n)
                added += 1
    return added


def _exchange_refine_flags(grid: Grid) -> list[Element]:
    from .parallel.ghosts import exchange_flags

    fresh: list[Element] = []

    def put(e: Element, v: int) -> None:
        if v and not e.flag:
            e.flag = True
            fresh.append(e)

    exchange_flags(grid, lambda e: 1 if e.flag else 0, put)
    return fresh


def _coarsen_vetoed(grid: Grid, father: Element) -> bool:
    lvl = father.level
    dim = grid.dim
    for f in range(2 * dim):
        r = grid.face_neighbor(father, f)
        if r is None or r is MISSING:
            continue
        n, g, _ = r
        if n.level == lvl and n.children is not None:
            for c in cube_children_on_face(dim, g):
                k = n.children[c]
                if k.children is not None or k.flag:
                    return True
    return False


def _fathers_of_marked(grid: Grid, leaves: list[Element]) -> list[Element]:
    seen = set()
    out = []
    for e in leaves:
        f = e.father
        if e.mark < 0 and f is not None and id(f) not in seen:
            seen.add(id(f))
            out.append(f)
    return out


def _plan_cube(grid: Grid) -> AdaptPlan:
    for e in grid.ghost_leaves:
        e.flag = False
    leaves = grid.leaves
    work = []
    for e in leaves:
        e.flag = e.mark > 0
        if e.flag:
            work.append(e)
    plan = AdaptPlan(marked=len(work))
    _cube_closure(grid, work)
    if grid.size > 1:
        while True:
            fresh = _exchange_refine_flags(grid)
            if grid.comm.global_sum(len(fresh)) == 0:
                break
            _cube_closure(grid, fresh)

    for f in _fathers_of_marked(grid, leaves):
        kids = f.children
        if any(k.children is not None or k.mark >= 0 or k.flag for k in kids):
            continue
        if _coarsen_vetoed(grid, f):
            for k in kids:
                k.mark = 0
            continue
        plan.coarsen.append(f)
    plan.refine = [e for e in leaves if e.flag]
    return plan


def _split_edge_key(e: Element) -> tuple[int, int]:
    a, b = TRIANGLE_FACES[e.ref_edge]
    x, y = e.verts[a], e.verts[b]
    return (x, y) if x < y else (y, x)


def _plan_simplex(grid: Grid) -> AdaptPlan:
    leaves = list(grid.leaf_iterator())
    plan = AdaptPlan()
    plan.refine = [e for e in leaves if e.mark > 0]
    plan.marked = len(plan.refine)
    done = set()
    for e in leaves:
        f = e.father
        if e.mark >= 0 or f is None or id(f) in done:
            continue
        key = _split_edge_key(f)
        mid = f.children[0].verts[2]
        patch = [f]
        ok = True
        for v in key:
            half = (v, mid) if v < mid else (mid, v)
            for x in grid._edge_leaves.get(half, ()):
                if x.father is f:
                    continue
                xf = x.father
                if xf is None or _split_edge_key(xf) != key:
                    ok = False
                elif xf not in patch:
                    patch.append(xf)
        for p in patch:
            done.add(id(p))
            if any(k.children is not None or k.mark >= 0 for k in p.children):
                ok = False
        if ok:
            plan.coarsen.extend(patch)
    return plan


def _make_plan(grid: Grid) -> AdaptPlan:
    if grid.etype == CUBE:
        return _plan_cube(grid)
    return _plan_simplex(grid)


# ----------------------------------------------------------------------
# execution


class _TreeTxn:
    """Undo log for the refinements and detachments of one unit of work."""

    def __init__(self, grid: Grid):
        self.grid = grid
        self.ops: list[tuple] = []

    def coarsen(self, father: Element, handle) -> None:
        if handle is not None:
            handle.preCoarsening(father)
        kids = self.grid._detach(father)
        self.ops.append(("c", father, kids))

    def refine(self, e: Element, handle) -> None:
        kids = self.grid.refine(e)
        for k in kids:
            k.is_new = True
        self.ops.append(("r", e, kids))
        if handle is not None:
            handle.postRefinement(e)

    def commit(self) -> tuple[int, int]:
        nref = ncoarse = 0
        for op in self.ops:
            if op[0] == "c":
                self.grid._release_nodes(op[2])
                ncoarse += 1
            else:
                nref += 1
        self.ops = []
        return nref, ncoarse

    def rollback(self) -> None:
        g = self.grid
        for op in reversed(self.ops):
            if op[0] == "r":
                e = op[1]
                if e.children is not None:
                    kids = g._detach(e)
                    g._release_nodes(kids)
            else:
                g._reattach(op[1], op[2])
        self.ops = []


def _nvb_refine(txn: _TreeTxn, e: Element, handle) -> None:
    grid = txn.grid
    while True:
        n = grid.edge_neighbor(e, e.ref_edge)
        if n is None or _split_edge_key(n) == _split_edge_key(e):
            break
        _nvb_refine(txn, n, handle)
    txn.refine(e, handle)
    if n is not None:
        txn.refine(n, handle)


def _execute(grid: Grid, plan: AdaptPlan, handle) -> AdaptStats:
    stats = AdaptStats(marked=plan.marked)
    if grid.etype == CUBE:
        coarse_by_macro: dict[int, list[Element]] = {}
        for f in plan.coarsen:
            coarse_by_macro.setdefault(id(f.macro), []).append(f)
        refine_by_macro: dict[int, list[Element]] = {}
        for e in plan.refine:
            refine_by_macro.setdefault(id(e.macro), []).append(e)
        for m in grid.macros:
            cs = coarse_by_macro.get(id(m), ())
            rs = refine_by_macro.get(id(m), ())
            if not cs and not rs:
                continue
            txn = _TreeTxn(grid)
            try:
                for f in cs:
                    txn.coarsen(f, handle)
                for e in rs:
                    txn.refine(e, handle)
            except BaseException:
                txn.rollback()
                raise
            nr, nc = txn.commit()
            stats.refined += nr
            stats.coarsened += nc
        return stats

    txn = _TreeTxn(grid)
    try:
        for f in plan.coarsen:
            txn.coarsen(f, handle)
        for e in plan.refine:
            if e.children is None and e.hindex >= 0:
                _nvb_refine(txn, e, handle)
    except BaseException:
        txn.rollback()
        raise
    stats.refined, stats.coarsened = txn.commit()
    return stats


def _finish(grid: Grid) -> None:
    from .parallel.ghosts import ghost_sync

    if grid.size > 1:
        ghost_sync(grid)
    grid.update_indices()


# ----------------------------------------------------------------------
# public protocols


def pre_adapt(grid: Grid) -> bool:
    """Fix the adaptation plan; returns True iff some element might be coarsened."""
    plan = _make_plan(grid)
    for f in plan.coarsen:
        for k in f.children:
            k.might_vanish = True
    grid._adapt_plan = plan
    return bool(plan.coarsen)


def adapt(grid: Grid) -> bool:
    """Execute the plan fixed by :func:`pre_adapt`; returns True iff something was refined."""
    plan = grid._adapt_plan
    if plan is None:
        raise ProtocolError("protocol violation: adapt() called without preAdapt()")
    grid._adapt_plan = None
    try:
        stats = _execute(grid, plan, None)
    except BaseException:
        grid.update_indices()
        raise
    _finish(grid)
    grid.last_adapt_stats = stats
    return stats.refined > 0


def post_adapt(grid: Grid) -> None:
    _clear_marks(grid)
    grid._adapt_plan = None
    grid.update_indices()


def adapt_callback(grid: Grid, handle: AdaptDataHandle | None = None) -> bool:
    """Plan and execute in one call, invoking the handle's callbacks on the way."""
    if grid._adapt_plan is not None:
        raise ProtocolError("protocol violation: explicit adaptation cycle in progress")
    plan = _make_plan(grid)
    try:
        stats = _execute(grid, plan, handle)
    except BaseException:
        grid.update_indices()
        raise
    _finish(grid)
    _clear_marks(grid)
    grid.last_adapt_stats = stats
    return stats.refined > 0


def _clear_marks(grid: Grid) -> None:
    for e in grid.leaves + grid.ghost_leaves:
        e.mark = 0
        e.is_new = False
        e.might_vanish = False
        e.flag = False
