"""DGF to binary macro-file conversion with optional SFC decomposition."""

from __future__ import annotations

import argparse
import os
import sys
from collections import Counter
from pathlib import Path

from ..mesh.reference import CUBE, face_vertices
from ..parallel.comm import MessageBuffer
from . import backup as bk
from .dgf import DGFData, read_dgf_file, split_dgf
from .factory import seed_refinement_edge


def _macro_stream(sub: DGFData, dim: int, etype: str, global_faces: Counter, rank: int, size: int) -> bytes:
    buf = MessageBuffer()
    buf.write_raw(bk.MAGIC)
    buf.write_int(bk.VERSION)
    buf.write_u8(bk.COMPRESSION_NONE)
    buf.write_u8(bk.SECTION_MACRO)
    buf.write_int(dim)
    buf.write_int(bk._ETYPE[etype])
    buf.write_int(len(sub.vertices))
    for g, c in zip(sub.vertex_ids, sub.vertices):
        buf.write_int(g)
        buf.write_reals(c)
    elements = sub.elements()
    buf.write_int(len(elements))
    gids = sub.vertex_ids
    for et, vs in elements:
        buf.write_ints(vs)
        codes = []
        for fv in face_vertices(et, dim):
            key = tuple(sorted(gids[vs[v]] for v in fv))
            codes.append(-1 if global_faces[key] > 1 else 1)
        buf.write_ints(codes)
        if et == CUBE:
            buf.write_int(0)
        else:
            buf.write_int(seed_refinement_edge([sub.vertices[v] for v in vs], [gids[v] for v in vs]))
    buf.write_int(rank)
    buf.write_int(size)
    buf.write_int(64)
    return buf.to_bytes()


def convert_macro(source, partitions: int, out_base: str | os.PathLike | None = None) -> list[bytes] | list[Path]:
    """Split a DGF grid into ``partitions`` binary macro streams.

    With ``out_base`` the streams are written to ``out_base.P.1`` ... and the
    paths are returned; otherwise the raw streams are returned.
    """
    if partitions < 1:
        raise ValueError("number of partitions must be >= 1")
    data = source if isinstance(source, DGFData) else read_dgf_file(source)
    if data.parallel is not None:
        raise ValueError("convert expects a serial DGF file, not an ALUPARALLEL index")
    elements = data.elements()
    if not elements:
        raise ValueError("DGF file has no elements")
    etypes = {et for et, _ in elements}
    if len(etypes) > 1:
        raise ValueError("mixed element types are not supported")
    etype = etypes.pop()
    dim = data.dim
    gids = data.vertex_ids
    faces = Counter()
    for et, vs in elements:
        for fv in face_vertices(et, dim):
            faces[tuple(sorted(gids[vs[v]] for v in fv))] += 1
    subs = split_dgf(data, partitions)
    streams = [_macro_stream(s, dim, etype, faces, k, partitions) for k, s in enumerate(subs)]
    if out_base is None:
        return streams
    base = Path(out_base)
    paths = []
    for k, s in enumerate(streams):
        p = base.with_name(f"{base.name}.{partitions}.{k + 1}")
        p.write_bytes(s)
        paths.append(p)
    return paths


def load_macro_files(paths, comm=None, dim: int | None = None):
    """Build a grid from binary macro files; rank r reads the (r+1)-th file.  Collective."""
    from ..parallel.comm import SerialComm

    comm = comm if comm is not None else SerialComm()
    paths = [Path(p) for p in paths]
    if len(paths) > comm.size:
        raise bk.BackupError(f"partition count exceeded: {len(paths)} partitions for {comm.size} ranks")
    if comm.rank < len(paths):
        return bk.load_macro_bytes(paths[comm.rank].read_bytes(), comm)
    if dim is None:
        d = bk._decode(paths[0].read_bytes())
        dim = d.dim
    return bk.load_macro_bytes(None, comm, dim)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="alugrid-convert", description="Convert a DGF macro grid to binary macro files.")
    ap.add_argument("dgf")
    ap.add_argument("partitions", type=int, nargs="?", default=1)
    ap.add_argument("--output", "-o", default=None, help="output base name (default: input name)")
    args = ap.parse_args(argv)
    try:
        paths = convert_macro(args.dgf, args.partitions, args.output or args.dgf)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for p in paths:
        print(p)
    return 0
