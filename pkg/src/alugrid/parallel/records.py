"""Wire format of macro elements with their refinement trees."""

from __future__ import annotations

from ..mesh.grid import Element, Grid, MacroElement
from ..mesh.reference import CUBE, SIMPLEX, num_faces, num_vertices
from .comm import MessageBuffer

_ETYPE_CODE = {CUBE: 0, SIMPLEX: 1}
_ETYPE_NAME = {0: CUBE, 1: SIMPLEX}


def tree_bits(root: Element) -> bytes:
    """Preorder refinement flags, one byte per node."""
    return bytes(0 if n.children is None else 1 for n in root.subtree())


def grow_tree(grid: Grid, root: Element, bits: bytes) -> list[Element]:
    """Refine a fresh root according to preorder ``bits``; returns nodes in preorder."""
    nodes: list[Element] = []
    stack = [root]
    pos = 0
    while stack:
        n = stack.pop()
        nodes.append(n)
        if pos >= len(bits):
            raise ValueError("refinement bit string too short")
        b = bits[pos]
        pos += 1
        if b:
            kids = grid.refine(n)
            stack.extend(reversed(kids))
    if pos != len(bits):
        raise ValueError("refinement bit string too long")
    return nodes


def pack_macro(buf: MessageBuffer, m: MacroElement, bits: bytes | None = None) -> None:
    buf.write_int(_ETYPE_CODE[m.etype])
    buf.write_ints(m.gids)
    buf.write_reals([x for c in m.coords for x in c])
    buf.write_int(m.owner)
    buf.write_int(m.ref_edge)
    buf.write_int(m.sfc_key)
    buf.write_ints(-1 if b is None else b for b in m.boundary)
    for nid in m.neighbor_ids:
        if nid is None:
            buf.write_int(0)
        else:
            buf.write_int(len(nid))
            buf.write_ints(nid)
    buf.write_bytes(tree_bits(m.root) if bits is None else bits)


def unpack_macro(buf: MessageBuffer, grid: Grid, ghost: bool) -> tuple[MacroElement, bytes]:
    """Read one record; returns an unattached macro element (no tree yet) and its tree bits."""
    etype = _ETYPE_NAME[buf.read_int()]
    dim = grid.dim
    nv = num_vertices(etype, dim)
    gids = tuple(int(g) for g in buf.read_ints(nv))
    flat = buf.read_reals(nv * dim)
    coords = [tuple(float(x) for x in flat[k * dim : (k + 1) * dim]) for k in range(nv)]
    owner = buf.read_int()
    m = MacroElement(grid, etype, gids, coords, owner=owner, ghost=ghost)
    m.ref_edge = buf.read_int()
    m.sfc_key = buf.read_int()
    nf = num_faces(etype, dim)
    m.boundary = [None if b < 0 else int(b) for b in buf.read_ints(nf)]
    nids: list = []
    for _ in range(nf):
        k = buf.read_int()
        nids.append(tuple(int(g) for g in buf.read_ints(k)) if k else None)
    m.neighbor_ids = nids
    bits = buf.read_bytes()
    return m, bits
