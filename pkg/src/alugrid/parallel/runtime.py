"""Distributed grid maintenance: load balancing, migration and the macro view."""

from __future__ import annotations

from collections import defaultdict
from typing import Callable

from ..mesh.grid import MISSING, Grid, MacroElement
from .. import partition as part
from .comm import MessageBuffer
from .ghosts import ghost_sync
from .records import grow_tree, pack_macro, tree_bits, unpack_macro

TAG_MIGRATE = 201


def update_vertex_masters(grid: Grid) -> None:
    """Master of a vertex: the lowest rank owning a macro element that contains it."""
    local = set()
    for m in grid.macro_elements(include_ghosts=True):
        local.update(m.gids)
    master: dict[int, int] = {}
    for mid, r in grid.owners.items():
        for v in mid:
            if v in local:
                cur = master.get(v)
                if cur is None or r < cur:
                    master[v] = r
    grid._vertex_master = master


def finalize_distribution(grid: Grid) -> None:
    """Recompute links, ghosts, vertex masters and index sets after a structural change."""
    for k, m in enumerate(grid.macros):
        m.insertion_index = k
        m.owner = grid.rank
    grid.rebuild_links()
    ghost_sync(grid)
    update_vertex_masters(grid)
    grid.update_indices()


class MacroGridView:
    """Read-only view of the macro level: interior and ghost macro elements."""

    def __init__(self, grid: Grid):
        self.grid = grid
        self.owners = grid.owners

    def __iter__(self):
        yield from self.grid.macros
        yield from self.grid.ghosts

    def interior(self):
        return iter(self.grid.macros)

    def master(self, m: MacroElement) -> int:
        return self.grid.owners.get(m.macro_id, m.owner)

    def macroId(self, m: MacroElement) -> int:
        return m.int_id

    def neighbor(self, m: MacroElement, face: int) -> MacroElement | None:
        link = m.links[face]
        if link is None or link is MISSING:
            return None
        return link[0]

    def weight(self, item) -> int:
        """Leaf count of a macro element, or leaf-face pairs of an ``(element, face)`` intersection."""
        if isinstance(item, tuple):
            return self._face_weight(*item)
        return sum(1 for _ in item.root.leaves())

    def _face_weight(self, m: MacroElement, face: int) -> int:
        link = m.links[face]
        if link is None or link is MISSING:
            raise part.PartitionError(f"no neighbor across face {face} of macro element {m.macro_id}")
        grid = self.grid
        if m.etype != "cube":
            return 1
        count = 0
        for leaf in grid.leaves_on_face(m.root, face):
            r = grid.face_neighbor(leaf, face)
            if r is None or r is MISSING:
                raise part.PartitionError(f"no neighbor across face {face} of macro element {m.macro_id}")
            n, g, _ = r
            count += 1 if n.children is None else len(grid.leaves_on_face(n, g))
        return count


def macro_view(grid: Grid) -> MacroGridView:
    return MacroGridView(grid)


# ----------------------------------------------------------------------
# planning


def _local_weights(grid: Grid, weights: Callable | None) -> dict:
    return {m.macro_id: part.element_weight(m, weights) for m in grid.macros}


def _sfc_entries(grid: Grid, w: dict) -> list[part.SfcEntry]:
    mine = [(m.sfc_key, m.macro_id, w[m.macro_id]) for m in grid.macros]
    allv = grid.comm.allgather(mine, category="sfc")
    entries = []
    for r, lst in enumerate(allv):
        entries.extend(part.SfcEntry(k, mid, wt, r) for k, mid, wt in lst)
    return entries


def plan_for_method(grid: Grid, method: int, weights: Callable | None = None, w: dict | None = None) -> part.PartitionPlan:
    part.check_method(method)
    comm = grid.comm
    if method in part.EXTERNAL_METHODS:
        fn = part.external_partitioner(method)
        graph = part.dual_graph(macro_view(grid), weights)
        dest = dict(fn(graph, comm.size, comm.rank))
        return part.PartitionPlan(dest, None, False, method)
    if method in (part.METHOD_NONE, part.METHOD_COLLECT):
        owners = grid.owners
        if method == part.METHOD_NONE:
            dest = dict(owners)
        else:
            dest = {mid: 0 for mid in owners}
        imp = part.import_ranks_for(comm.rank, dest, owners)
        return part.PartitionPlan(dest, imp, True, method)
    if w is None:
        w = _local_weights(grid, weights)
    entries = _sfc_entries(grid, w)
    return part.compute_plan(method, entries, comm.size, comm.rank, grid.owners)


def user_plan(grid: Grid, destinations) -> part.PartitionPlan:
    """Evaluate an LBDestinations-style object on every interior macro element.

    ``destinations`` is a callable ``(macro_entity) -> rank`` or an object with
    ``destination(entity)`` and optionally ``importRanks(ranks: set) -> bool``.
    """
    fn = getattr(destinations, "destination", None) or destinations
    dest = {m.macro_id: int(fn(m.root)) for m in grid.macros}
    imp = None
    ir = getattr(destinations, "importRanks", None)
    if ir is not None:
        s: set[int] = set()
        if ir(s):
            imp = set(s)
    return part.PartitionPlan(dest, imp, False, None)


# ----------------------------------------------------------------------
# migration


def _validate(grid: Grid, dest: dict) -> None:
    p = grid.size
    bad = [d for mid, d in dest.items() if not 0 <= d < p]
    flags = grid.comm.allgather(bool(bad))
    if any(flags):
        mine = f" (this rank: {bad[0]})" if bad else ""
        raise part.PartitionError(f"bad destination: rank outside [0, {p}){mine}")


def apply_plan(grid: Grid, plan: part.PartitionPlan, handle=None) -> bool:
    """Migrate macro trees according to ``plan``; collective.  Returns True iff anything moved."""
    comm = grid.comm
    me = comm.rank
    p = comm.size
    my_dest = {m.macro_id: plan.destination.get(m.macro_id, me) for m in grid.macros}
    _validate(grid, my_dest)

    imports = plan.import_ranks
    if imports is None:
        counts = [0] * p
        for d in my_dest.values():
            if d != me:
                counts[d] += 1
        incoming = comm.alltoall(counts, category="presence")
        imports = {q for q, c in enumerate(incoming) if c > 0 and q != me}
    grid.last_import_ranks = set(imports)

    leaving: dict[int, list[MacroElement]] = defaultdict(list)
    for m in grid.macros:
        d = my_dest[m.macro_id]
        if d != me:
            leaving[d].append(m)

    for g in grid.ghosts:
        grid._drop_tree(g)
        grid.macro_by_id.pop(g.macro_id, None)
    grid.ghosts = []
    grid._ghost_bits = {}

    for q in sorted(leaving):
        buf = MessageBuffer()
        buf.write_int(len(leaving[q]))
        for m in leaving[q]:
            pack_macro(buf, m, tree_bits(m.root))
            payload = MessageBuffer()
            if handle is not None:
                for e in m.root.subtree():
                    handle.gather(payload, e)
            buf.write_buffer(payload)
        comm.send(q, buf, tag=TAG_MIGRATE, category="migration")
    gone = {id(m) for lst in leaving.values() for m in lst}
    for lst in leaving.values():
        for m in lst:
            grid._drop_tree(m)
            grid.macro_by_id.pop(m.macro_id, None)
    kept = [m for m in grid.macros if id(m) not in gone]

    arrived: list[MacroElement] = []
    for q in sorted(imports):
        buf = comm.recv(q, tag=TAG_MIGRATE)
        for _ in range(buf.read_int()):
            m, bits = unpack_macro(buf, grid, ghost=False)
            m.owner = me
            grid._make_root(m)
            nodes = grow_tree(grid, m.root, bits)
            payload = buf.read_buffer()
            if handle is not None:
                for e in nodes:
                    handle.scatter(payload, e)
            arrived.append(m)
            grid.macro_by_id[m.macro_id] = m

    if plan.global_view:
        for mid, d in plan.destination.items():
            grid.owners[mid] = d
    else:
        changes = [(mid, d) for mid, d in my_dest.items() if d != me]
        for lst in comm.allgather(changes, category="linkage"):
            for mid, d in lst:
                grid.owners[mid] = d

    grid.macros = part.order_by_sfc(kept + arrived)
    finalize_distribution(grid)
    moved = comm.global_sum(1 if leaving else 0)
    return moved > 0


def load_balance(grid: Grid, handle=None, weights: Callable | None = None) -> bool:
    """Rebalance if the configured trigger fires; collective."""
    cfg = grid.lb_config if grid.lb_config is not None else part.load_config()
    part.check_method(cfg.method)
    if grid.size == 1:
        return False
    w = _local_weights(grid, weights)
    loads = grid.comm.allgather(sum(w.values()))
    if not part.should_rebalance(loads, cfg):
        return False
    if cfg.method == part.METHOD_NONE:
        return False
    plan = plan_for_method(grid, cfg.method, weights, w)
    grid.last_plan = plan
    return apply_plan(grid, plan, handle)


def repartition(grid: Grid, destinations, handle=None) -> bool:
    """Unconditionally migrate according to a user destination contract; collective."""
    plan = user_plan(grid, destinations)
    return apply_plan(grid, plan, handle)
