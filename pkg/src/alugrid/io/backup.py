"""Binary backup and restore of a rank's grid, and the binary macro-file format.

Stream layout (little-endian, 64-bit integers and reals)::

    "ALUG"  version  compression:u8  sections:u8
    dim  etype
    nvertex  { gid  coord[dim] }
    nelem    { vertex index[nv]  face code[nf]  refinement edge }
    [trees]  { preorder refinement bytes (length-prefixed) }        per element
    [ids]    nnode  hindex[nnode]  next  nfree  free[nfree]
    rank  size  max_level

A face code is the boundary id, or -1 when another element lies across the
face (on this rank or a different one).
"""

from __future__ import annotations

import io
import os
from collections import Counter
from pathlib import Path
from typing import BinaryIO

from ..mesh.grid import Grid, GridError
from ..mesh.reference import CUBE, SIMPLEX, face_vertices, num_faces, num_vertices
from ..parallel.comm import BufferExhausted, MessageBuffer, SerialComm
from ..parallel.records import grow_tree, tree_bits
from ..parallel.runtime import finalize_distribution
from .factory import GridFactory

MAGIC = b"ALUG"
VERSION = 1
COMPRESSION_NONE = 0
SECTION_MACRO = 1
SECTION_TREES = 2
SECTION_IDS = 4
_ETYPE = {CUBE: 0, SIMPLEX: 1}
_ETYPE_INV = {0: CUBE, 1: SIMPLEX}


class BackupError(ValueError):
    pass


def _encode(grid: Grid, sections: int) -> bytes:
    buf = MessageBuffer()
    buf.write_raw(MAGIC)
    buf.write_int(VERSION)
    buf.write_u8(COMPRESSION_NONE)
    buf.write_u8(sections)
    buf.write_int(grid.dim)
    buf.write_int(_ETYPE[grid.etype])
    index: dict[int, int] = {}
    verts: list[tuple[int, tuple]] = []
    for m in grid.macros:
        for g, c in zip(m.gids, m.coords):
            if g not in index:
                index[g] = len(verts)
                verts.append((g, c))
    buf.write_int(len(verts))
    for g, c in verts:
        buf.write_int(g)
        buf.write_reals(c)
    buf.write_int(len(grid.macros))
    for m in grid.macros:
        buf.write_ints(index[g] for g in m.gids)
        buf.write_ints(-1 if b is None else b for b in m.boundary)
        buf.write_int(m.ref_edge)
    if sections & SECTION_TREES:
        for m in grid.macros:
            buf.write_bytes(tree_bits(m.root))
    if sections & SECTION_IDS:
        used = [n.hindex for m in grid.macros for n in m.root.subtree()]
        buf.write_int(len(used))
        buf.write_ints(used)
        nxt = grid._next_hindex
        free = sorted(set(range(nxt)) - set(used))
        buf.write_int(nxt)
        buf.write_int(len(free))
        buf.write_ints(free)
    buf.write_int(grid.rank)
    buf.write_int(grid.size)
    buf.write_int(grid.max_level)
    return buf.to_bytes()


def backup_bytes(grid: Grid) -> bytes:
    if grid._adapt_plan is not None:
        raise BackupError("backup during an adaptation cycle")
    return _encode(grid, SECTION_MACRO | SECTION_TREES | SECTION_IDS)


def backup(grid: Grid, stream: BinaryIO) -> None:
    stream.write(backup_bytes(grid))


def macro_bytes(grid: Grid) -> bytes:
    return _encode(grid, SECTION_MACRO)


class _Decoded:
    pass


def _decode(data: bytes) -> _Decoded:
    buf = MessageBuffer(data)
    try:
        if len(data) < 4 or buf.read_raw(4) != MAGIC:
            raise BackupError("unrecognized stream: bad magic")
        version = buf.read_int()
        if version != VERSION:
            raise BackupError(f"unrecognized stream: version {version}")
        comp = buf.read_u8()
        if comp != COMPRESSION_NONE:
            raise BackupError(f"unrecognized stream: compression {comp} not supported")
        d = _Decoded()
        d.sections = buf.read_u8()
        d.dim = buf.read_int()
        et = buf.read_int()
        if d.dim not in (2, 3) or et not in _ETYPE_INV:
            raise BackupError("unrecognized stream: bad header")
        d.etype = _ETYPE_INV[et]
        nv = buf.read_int()
        d.vertices = []
        for _ in range(nv):
            g = buf.read_int()
            d.vertices.append((g, tuple(float(x) for x in buf.read_reals(d.dim))))
        ne = buf.read_int()
        nvert = num_vertices(d.etype, d.dim)
        nface = num_faces(d.etype, d.dim)
        d.elements = []
        for _ in range(ne):
            vs = tuple(int(v) for v in buf.read_ints(nvert))
            codes = tuple(int(b) for b in buf.read_ints(nface))
            ref = buf.read_int()
            d.elements.append((vs, codes, ref))
        d.trees = [buf.read_bytes() for _ in range(ne)] if d.sections & SECTION_TREES else None
        d.ids = None
        if d.sections & SECTION_IDS:
            n = buf.read_int()
            used = [int(x) for x in buf.read_ints(n)]
            nxt = buf.read_int()
            free = [int(x) for x in buf.read_ints(buf.read_int())]
            d.ids = (used, nxt, free)
        d.rank = buf.read_int()
        d.size = buf.read_int()
        d.max_level = buf.read_int()
        if not buf.exhausted():
            raise BackupError("unrecognized stream: trailing bytes")
    except BufferExhausted as exc:
        raise BackupError(f"truncated stream: {exc}") from None
    return d


def _build(d: _Decoded, comm) -> Grid:
    fac = GridFactory(d.dim, comm)
    for g, c in d.vertices:
        fac.insert_vertex(c, g)
    keys = Counter()
    for vs, _, _ in d.elements:
        fac.insert_element(d.etype, vs)
    for vs, _, _ in d.elements:
        for fv in face_vertices(d.etype, d.dim):
            keys[tuple(sorted(d.vertices[vs[v]][0] for v in fv))] += 1
    for k, (vs, codes, _) in enumerate(d.elements):
        for f, code in enumerate(codes):
            if code >= 0:
                fac.insert_boundary(k, f, code)
            else:
                key = tuple(sorted(d.vertices[vs[v]][0] for v in face_vertices(d.etype, d.dim)[f]))
                if keys[key] == 1:
                    fac.insert_process_border(k, f)
    grid = fac.create_grid(max_level=d.max_level)
    for m, (_, _, ref) in zip(grid.macros, d.elements):
        if m.etype == SIMPLEX and m.ref_edge != ref:
            # keep the stored seeding; only fresh roots exist here
            grid._drop_tree(m)
            m.ref_edge = ref
            grid._make_root(m)
    return grid


def _apply_trees(grid: Grid, d: _Decoded) -> None:
    for g in grid.ghosts:
        grid._drop_tree(g)
        grid.macro_by_id.pop(g.macro_id, None)
    grid.ghosts = []
    grid._ghost_bits = {}
    nodes = []
    for m, bits in zip(grid.macros, d.trees):
        try:
            nodes.extend(grow_tree(grid, m.root, bits))
        except (ValueError, GridError) as exc:
            raise BackupError(f"unrecognized stream: {exc}") from None
    if d.ids is not None:
        used, nxt, free = d.ids
        if len(used) != len(nodes) or len(set(used)) != len(used) or any(not 0 <= h < nxt for h in used):
            raise BackupError("unrecognized stream: inconsistent local-id table")
        for n, h in zip(nodes, used):
            n.hindex = h
        grid._next_hindex = nxt
        grid._free = sorted(free, reverse=True)
    finalize_distribution(grid)


def restore_bytes(data: bytes, comm=None) -> Grid:
    """Rebuild a grid from :func:`backup_bytes` output; collective when ``comm`` has several ranks."""
    comm = comm if comm is not None else SerialComm()
    d = _decode(data)
    if d.size != comm.size or d.rank != comm.rank:
        raise BackupError(f"stream of rank {d.rank}/{d.size} restored on rank {comm.rank}/{comm.size}")
    grid = _build(d, comm)
    if d.trees is not None:
        _apply_trees(grid, d)
    return grid


def restore(stream: BinaryIO, comm=None) -> Grid:
    return restore_bytes(stream.read(), comm)


def rank_path(path: str | os.PathLike, comm) -> Path:
    p = Path(path)
    return p if comm is None or comm.size == 1 else p.with_name(f"{p.name}.{comm.rank}")


def backup_file(grid: Grid, path: str | os.PathLike) -> Path:
    p = rank_path(path, grid.comm)
    p.write_bytes(backup_bytes(grid))
    return p


def restore_file(path: str | os.PathLike, comm=None) -> Grid:
    return restore_bytes(rank_path(path, comm).read_bytes(), comm)


def load_macro_bytes(data: bytes | None, comm=None, dim: int | None = None) -> Grid:
    """Build a grid from a macro-only stream; ``None`` gives an empty rank."""
    comm = comm if comm is not None else SerialComm()
    if data is None:
        if dim is None:
            raise BackupError("empty rank needs the grid dimension")
        return GridFactory(dim, comm).create_grid()
    d = _decode(data)
    if d.size > comm.size:
        raise BackupError(f"partition count exceeded: {d.size} partitions for {comm.size} ranks")
    d.trees = None
    return _build(d, comm)


def stream_bytes(obj) -> bytes:
    if isinstance(obj, (bytes, bytearray)):
        return bytes(obj)
    if isinstance(obj, io.IOBase):
        return obj.read()
    return Path(obj).read_bytes()
