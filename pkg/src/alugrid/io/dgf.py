"""Reader and writer for the DGF subset used by distributed macro grids.

Supported blocks: the ``DGF`` header, ``VERTEX``, ``CUBE``, ``SIMPLEX``,
``GLOBALVERTEXINDEX`` and ``ALUPARALLEL``.  Keywords are case-insensitive,
each block entry sits on its own line and a line starting with ``#`` closes
the block.  ``%`` starts a comment.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from ..mesh.reference import CUBE, SIMPLEX
from .. import partition as part
from .factory import GridFactory

SUPPORTED = ("VERTEX", "CUBE", "SIMPLEX", "GLOBALVERTEXINDEX", "ALUPARALLEL")


class DGFError(ValueError):
    pass


@dataclass
class DGFData:
    vertices: list[tuple[float, ...]] = field(default_factory=list)
    global_ids: list[int] | None = None
    cubes: list[tuple[int, ...]] = field(default_factory=list)
    simplices: list[tuple[int, ...]] = field(default_factory=list)
    parallel: list[str] | None = None

    @property
    def dim(self) -> int:
        if not self.vertices:
            raise DGFError("no vertices")
        return len(self.vertices[0])

    @property
    def vertex_ids(self) -> list[int]:
        return self.global_ids if self.global_ids is not None else list(range(len(self.vertices)))

    def elements(self) -> list[tuple[str, tuple[int, ...]]]:
        return [(CUBE, c) for c in self.cubes] + [(SIMPLEX, s) for s in self.simplices]


def _lines(text: str):
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("%", 1)[0].strip()
        if line:
            yield no, line


def parse_dgf(text: str, source: str = "<dgf>") -> DGFData:
    it = iter(list(_lines(text)))
    first = next(it, None)
    if first is None or first[1].split()[0].upper() != "DGF":
        raise DGFError(f"{source}: missing DGF header")
    data = DGFData()
    rest = first[1].split()[1:]
    pending = [(first[0], " ".join(rest))] if rest else []

    def entries():
        while pending:
            yield pending.pop(0)
        yield from it

    block = None
    rows: list[tuple[int, str]] = []
    for no, line in entries():
        if block is None:
            if line.startswith("#"):
                continue
            block = line.split()[0].upper()
            if block not in SUPPORTED:
                raise DGFError(f"{source}:{no}: unsupported block {line.split()[0]}")
            rows = []
            if len(line.split()) > 1:
                rows.append((no, " ".join(line.split()[1:])))
            continue
        if line.startswith("#"):
            _store(data, block, rows, source)
            block = None
            continue
        rows.append((no, line))
    if block is not None:
        _store(data, block, rows, source)
    _check(data, source)
    return data


def _store(data: DGFData, block: str, rows, source: str) -> None:
    def nums(conv):
        out = []
        for no, line in rows:
            try:
                out.append((no, [conv(t) for t in line.split()]))
            except ValueError:
                raise DGFError(f"{source}:{no}: malformed {block} entry {line!r}") from None
        return out

    if block == "VERTEX":
        vals = nums(float)
        dims = {len(v) for _, v in vals}
        if len(dims) > 1:
            raise DGFError(f"{source}: VERTEX entries have inconsistent dimension")
        data.vertices.extend(tuple(v) for _, v in vals)
    elif block == "GLOBALVERTEXINDEX":
        ids = []
        for no, v in nums(int):
            ids.extend(v)
        data.global_ids = (data.global_ids or []) + ids
    elif block == "CUBE":
        data.cubes.extend(tuple(v) for _, v in nums(int) if v)
    elif block == "SIMPLEX":
        data.simplices.extend(tuple(v) for _, v in nums(int) if v)
    elif block == "ALUPARALLEL":
        data.parallel = [t for _, line in rows for t in line.split()]


def _check(data: DGFData, source: str) -> None:
    if data.parallel is not None:
        return
    n = len(data.vertices)
    if data.global_ids is not None and len(data.global_ids) != n:
        raise DGFError(f"{source}: GLOBALVERTEXINDEX has {len(data.global_ids)} entries but VERTEX has {n}")
    for et, vs in data.elements():
        for v in vs:
            if not 0 <= v < n:
                raise DGFError(f"{source}: element references undefined vertex {v}")


def read_dgf_file(path: str | os.PathLike) -> DGFData:
    p = Path(path)
    return parse_dgf(p.read_text(), str(p))


def factory_from_dgf(data: DGFData, comm=None, dim: int | None = None) -> GridFactory:
    d = dim if dim is not None else data.dim
    fac = GridFactory(d, comm)
    for c, g in zip(data.vertices, data.vertex_ids):
        fac.insert_vertex(c, g)
    for et, vs in data.elements():
        fac.insert_element(et, vs)
    return fac


def load_parallel(path: str | os.PathLike, comm=None) -> GridFactory:
    """Factory holding this rank's part of a (possibly partitioned) DGF grid."""
    from ..parallel.comm import SerialComm

    comm = comm if comm is not None else SerialComm()
    p = Path(path)
    data = read_dgf_file(p)
    if data.parallel is None:
        if comm.size > 1 and comm.rank > 0:
            return GridFactory(data.dim, comm)
        return factory_from_dgf(data, comm)
    files = data.parallel
    if len(files) > comm.size:
        raise DGFError(f"partition count exceeded: {len(files)} partitions for {comm.size} ranks")
    if comm.rank >= len(files):
        first = read_dgf_file(p.parent / files[0])
        return GridFactory(first.dim, comm)
    return factory_from_dgf(read_dgf_file(p.parent / files[comm.rank]), comm)


def read_grid(path: str | os.PathLike, comm=None, **kw):
    """Parse a DGF file (serial or ALUPARALLEL) and build the grid; collective."""
    return load_parallel(path, comm).create_grid(**kw)


# ----------------------------------------------------------------------
# writing


def format_dgf(vertices: Sequence, elements: Sequence[tuple[str, Sequence[int]]], global_ids: Sequence[int] | None) -> str:
    out = ["DGF", "VERTEX"]
    out.extend(" ".join(repr(float(x)) for x in c) for c in vertices)
    out.append("#")
    for et in (CUBE, SIMPLEX):
        rows = [vs for t, vs in elements if t == et]
        if rows:
            out.append("CUBE" if et == CUBE else "SIMPLEX")
            out.extend(" ".join(str(v) for v in vs) for vs in rows)
            out.append("#")
    if global_ids is not None:
        out.append("GLOBALVERTEXINDEX")
        out.extend(str(g) for g in global_ids)
        out.append("#")
    return "\n".join(out) + "\n"


def _split(vertices, gids, elements, nparts):
    dim = len(vertices[0])
    lo = tuple(min(c[a] for c in vertices) for a in range(dim))
    hi = tuple(max(c[a] for c in vertices) for a in range(dim))
    keyed = []
    for k, (et, vs) in enumerate(elements):
        center = tuple(sum(vertices[v][a] for v in vs) / len(vs) for a in range(dim))
        mid = tuple(sorted(gids[v] for v in vs))
        keyed.append((part.sfc_key(center, (lo, hi)), mid, k))
    keyed.sort()
    ranks = part.partition1d([1] * len(keyed), nparts)
    parts: list[list[int]] = [[] for _ in range(nparts)]
    for (_, _, k), r in zip(keyed, ranks):
        parts[r].append(k)
    return parts


def split_dgf(data: DGFData, nparts: int) -> list[DGFData]:
    """SFC split of a serial grid description into ``nparts`` local descriptions."""
    if nparts < 1:
        raise DGFError("number of partitions must be >= 1")
    gids = data.vertex_ids
    elements = data.elements()
    out = []
    for ks in _split(data.vertices, gids, elements, nparts):
        local: dict[int, int] = {}
        sub = DGFData(global_ids=[])
        for k in ks:
            et, vs = elements[k]
            lv = []
            for v in vs:
                if v not in local:
                    local[v] = len(sub.vertices)
                    sub.vertices.append(tuple(data.vertices[v]))
                    sub.global_ids.append(gids[v])
                lv.append(local[v])
            (sub.cubes if et == CUBE else sub.simplices).append(tuple(lv))
        out.append(sub)
    return out


def dgf_from_grid(grid) -> DGFData:
    """Macro level of a (serial) grid as a DGF description."""
    data = DGFData(global_ids=[])
    local: dict[int, int] = {}
    for m in grid.macros:
        lv = []
        for g, c in zip(m.gids, m.coords):
            if g not in local:
                local[g] = len(data.vertices)
                data.vertices.append(tuple(c))
                data.global_ids.append(g)
            lv.append(local[g])
        (data.cubes if m.etype == CUBE else data.simplices).append(tuple(lv))
    return data


def write_parallel_dgf(source, nparts: int, base: str | os.PathLike) -> list[Path]:
    """Write ``base.P`` plus ``base.P.1`` ... ``base.P.P``; returns the P+1 paths."""
    data = source if isinstance(source, DGFData) else dgf_from_grid(source)
    subs = split_dgf(data, nparts)
    base = Path(base)
    master = base.with_name(f"{base.name}.{nparts}")
    names = [f"{base.name}.{nparts}.{k + 1}" for k in range(nparts)]
    paths = [master]
    for name, sub in zip(names, subs):
        path = base.with_name(name)
        path.write_text(format_dgf(sub.vertices, sub.elements(), sub.global_ids))
        paths.append(path)
    master.write_text("DGF\nALUPARALLEL\n" + "\n".join(names) + "\n#\n")
    return paths
