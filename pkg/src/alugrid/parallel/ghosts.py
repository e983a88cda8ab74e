"""Ghost layer maintenance and interior-border/ghost data exchange.

Ghosts are complete mirrors of remote macro elements that share a face with
a local interior macro element.  The leaves exchanged with rank ``q`` are
the leaves of such macro elements that touch a macro face shared with one
of ``q``'s macro elements; both sides enumerate them in tree preorder, so
no ids travel with the data.
"""

from __future__ import annotations

from collections import defaultdict
from typing import Callable

import numpy as np

from ..mesh.grid import Element, Grid, MacroElement
from ..mesh.reference import CUBE
from .comm import MessageBuffer
from .records import grow_tree, pack_macro, unpack_macro

TAG_GHOST = 101
TAG_DATA = 102
TAG_FLAGS = 103


class ExchangeError(RuntimeError):
    pass


def _touches(e: Element, faces: list[int]) -> bool:
    idx = e.idx
    top = (1 << e.level) - 1
    for f in faces:
        a = f >> 1
        if idx[a] == (top if f & 1 else 0):
            return True
    return False


def _border_leaves(m: MacroElement, faces: list[int]) -> list[Element]:
    if m.etype != CUBE:
        return list(m.root.leaves())
    return [e for e in m.root.leaves() if _touches(e, faces)]


def neighbor_ranks(grid: Grid) -> list[int]:
    me = grid.rank
    out = set()
    for m in grid.macros:
        for nid in m.neighbor_ids:
            if nid is not None:
                q = grid.owners[nid]
                if q != me:
                    out.add(q)
    return sorted(out)


def ghost_sync(grid: Grid) -> None:
    """Rebuild ghost mirrors from the current interior trees of all neighbour ranks."""
    comm = grid.comm
    me = grid.rank
    if comm.size == 1:
        for g in grid.ghosts:
            grid._drop_tree(g)
            grid.macro_by_id.pop(g.macro_id, None)
        grid.ghosts = []
        grid._ghost_bits = {}
        grid.rebuild_links()
        return
    outgoing: dict[int, list[MacroElement]] = defaultdict(list)
    for m in grid.macros:
        qs = sorted({grid.owners[n] for n in m.neighbor_ids if n is not None} - {me})
        for q in qs:
            outgoing[q].append(m)
    peers = sorted(outgoing)
    for q in peers:
        buf = MessageBuffer()
        buf.write_int(len(outgoing[q]))
        for m in outgoing[q]:
            pack_macro(buf, m)
        comm.send(q, buf, tag=TAG_GHOST, category="ghost")

    old = {g.macro_id: g for g in grid.ghosts}
    bits_of = grid._ghost_bits
    new_ghosts: list[MacroElement] = []
    new_bits: dict = {}
    for q in peers:
        buf = comm.recv(q, tag=TAG_GHOST)
        for _ in range(buf.read_int()):
            rec, bits = unpack_macro(buf, grid, ghost=True)
            prev = old.pop(rec.macro_id, None)
            if prev is not None and bits_of.get(rec.macro_id) == bits and prev.owner == rec.owner:
                g = prev
            else:
                if prev is not None:
                    grid._drop_tree(prev)
                g = rec
                grid._make_root(g)
                grow_tree(grid, g.root, bits)
            new_ghosts.append(g)
            new_bits[g.macro_id] = bits
    for g in old.values():
        grid._drop_tree(g)
        grid.macro_by_id.pop(g.macro_id, None)
    grid.ghosts = new_ghosts
    for g in new_ghosts:
        grid.macro_by_id[g.macro_id] = g
    grid.rebuild_links()
    grid._ghost_bits = new_bits


class BorderPlan:
    """Per-peer lists of interior leaves to send and ghost leaves to receive."""

    def __init__(self, grid: Grid):
        me = grid.rank
        self.send: dict[int, list[Element]] = defaultdict(list)
        self.recv: dict[int, list[Element]] = defaultdict(list)
        if grid.size > 1:
            for m in grid.macros:
                faces_by_q: dict[int, list[int]] = defaultdict(list)
                for f, nid in enumerate(m.neighbor_ids):
                    if nid is not None and grid.owners[nid] != me:
                        faces_by_q[grid.owners[nid]].append(f)
                for q, faces in faces_by_q.items():
                    self.send[q].extend(_border_leaves(m, faces))
            for g in grid.ghosts:
                faces = [f for f, nid in enumerate(g.neighbor_ids) if nid is not None and grid.owners.get(nid) == me]
                if faces:
                    self.recv[g.owner].extend(_border_leaves(g, faces))
        self.peers = sorted(set(self.send) | set(self.recv))
        self._send_idx: dict[int, np.ndarray] | None = None
        self._recv_idx: dict[int, np.ndarray] | None = None

    def border_cells(self) -> set[int]:
        return {id(e) for lst in self.send.values() for e in lst}

    def index_arrays(self) -> tuple[dict[int, np.ndarray], dict[int, np.ndarray]]:
        if self._send_idx is None:
            self._send_idx = {q: np.fromiter((e.leaf_index for e in self.send.get(q, ())), dtype=np.int64) for q in self.peers}
            self._recv_idx = {q: np.fromiter((e.leaf_index for e in self.recv.get(q, ())), dtype=np.int64) for q in self.peers}
        return self._send_idx, self._recv_idx


def border_plan(grid: Grid) -> BorderPlan:
    key = ("border", grid.sequence)
    plan = grid._caches.get(key)
    if plan is None:
        for k in [k for k in grid._caches if isinstance(k, tuple) and k[0] == "border"]:
            del grid._caches[k]
        plan = grid._caches[key] = BorderPlan(grid)
    return plan


class CommRequest:
    """Handle of an in-flight interior-border to ghost exchange."""

    def __init__(self, grid: Grid | None, finish: Callable[[], None] | None):
        self._grid = grid
        self._finish = finish

    def pending(self) -> bool:
        return self._finish is not None

    def wait(self) -> None:
        fin = self._finish
        if fin is None:
            return
        self._finish = None
        try:
            fin()
        finally:
            if self._grid is not None and self._grid._pending_request is self:
                self._grid._pending_request = None

    def __del__(self):
        if self._finish is not None:
            try:
                self.wait()
            except Exception:
                pass


def _claim(grid: Grid) -> None:
    req = grid._pending_request
    if req is not None and req.pending():
        raise ExchangeError("overlapping exchange: another communication on this grid is pending")


def communicate(grid: Grid, handle, direction: str = "forward") -> CommRequest:
    """Send ``handle.gather`` data of interior border leaves into the matching ghosts.

    ``direction='backward'`` runs the same interface from ghosts to interior leaves.
    """
    _claim(grid)
    comm = grid.comm
    if comm.size == 1:
        return CommRequest(None, None)
    plan = border_plan(grid)
    src, dst = (plan.send, plan.recv) if direction == "forward" else (plan.recv, plan.send)
    for q in plan.peers:
        buf = MessageBuffer()
        for e in src.get(q, ()):
            handle.gather(buf, e)
        comm.send(q, buf, tag=TAG_DATA, category="comm")

    def finish() -> None:
        for q in plan.peers:
            buf = comm.recv(q, tag=TAG_DATA)
            for e in dst.get(q, ()):
                handle.scatter(buf, e)
            if not buf.exhausted():
                raise ExchangeError("data handle left unread bytes in the exchange buffer")

    req = CommRequest(grid, finish)
    grid._pending_request = req
    return req


def communicate_array(grid: Grid, values: np.ndarray, category: str = "comm") -> CommRequest:
    """Copy rows ``values[leaf_index]`` of interior border leaves into the ghost rows."""
    _claim(grid)
    comm = grid.comm
    if comm.size == 1:
        return CommRequest(None, None)
    plan = border_plan(grid)
    send_idx, recv_idx = plan.index_arrays()
    for q in plan.peers:
        comm.send(q, np.ascontiguousarray(values[send_idx[q]]), tag=TAG_DATA, category=category)

    def finish() -> None:
        for q in plan.peers:
            data = comm.recv(q, tag=TAG_DATA)
            values[recv_idx[q]] = data

    req = CommRequest(grid, finish)
    grid._pending_request = req
    return req


def exchange_flags(grid: Grid, get: Callable[[Element], int], put: Callable[[Element, int], None]) -> None:
    """Blocking exchange of one small integer per border leaf."""
    comm = grid.comm
    if comm.size == 1:
        return
    plan = border_plan(grid)
    for q in plan.peers:
        comm.send(q, bytes(get(e) for e in plan.send.get(q, ())), tag=TAG_FLAGS, category="comm")
    for q in plan.peers:
        data = comm.recv(q, tag=TAG_FLAGS)
        for e, v in zip(plan.recv.get(q, ()), data):
            put(e, v)



class ContainerHandle:
    """Data handle moving the rows of persistent containers, for exchange and migration."""

    def __init__(self, *containers):
        self.containers = containers

    def gather(self, buf: MessageBuffer, e: Element) -> None:
        for c in self.containers:
            c.resize()
            buf.write_reals(c.data[e.hindex])

    def scatter(self, buf: MessageBuffer, e: Element) -> None:
        for c in self.containers:
            c.resize()
            c.data[e.hindex] = buf.read_reals(c.ncomp)
