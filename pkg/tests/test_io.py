import random
from pathlib import Path

import pytest

from alugrid.adapt import adapt_callback
from alugrid.io import backup as bk
from alugrid.io.convert import convert_macro, load_macro_files, main as convert_main
from alugrid.io.dgf import DGFError, dgf_from_grid, factory_from_dgf, format_dgf, load_parallel, parse_dgf, read_grid, split_dgf
from alugrid.io.factory import structured_grid
from alugrid.io.vtk import write_vtk
from alugrid.parallel.comm import run_ranks

from _support import apply_marks, random_marks, structure

FIXTURES = Path(__file__).parent / "fixtures"

SQUARE = """DGF
VERTEX
0 0
1 0
0 1
1 1
2 0
2 1
#
CUBE
0 1 2 3
1 4 3 5
#
"""


def test_parse_serial():
    d = parse_dgf(SQUARE)
    assert d.dim == 2 and len(d.vertices) == 6 and len(d.cubes) == 2
    g = factory_from_dgf(d).create_grid(verify=True)
    assert len(g.leaves) == 2


@pytest.mark.parametrize("text,match", [
    ("VERTEX\n0 0\n#\n", "header"),
    ("DGF\nVERTEX\n0 0\n0 x\n#\n", "malformed"),
    ("DGF\nVERTEX\n0 0\n1 0\n#\nSIMPLEX\n0 1 7\n#\n", "undefined vertex"),
    ("DGF\nBOUNDARYDOMAIN\n#\n", "unsupported"),
    ("DGF\nVERTEX\n0 0\n1 0 0\n#\n", "inconsistent"),
])
def test_parse_errors(text, match):
    with pytest.raises(DGFError, match=match):
        parse_dgf(text)


def test_parallel_fixtures():
    def prog(comm):
        fac = load_parallel(FIXTURES / "cube.dgf.2", comm)
        g = fac.create_grid()
        border = sum(1 for m in g.macros for nid in m.neighbor_ids
                     if nid is not None and g.owners.get(nid) != comm.rank)
        return len(fac.coords), len(fac.elements), set(fac.gids), border

    (v0, e0, g0, b0), (v1, e1, g1, b1) = run_ranks(2, prog)
    assert (v0, e0, v1, e1) == (12, 2, 12, 2)
    assert g0 & g1 == {1, 3, 5, 7, 13, 15}
    assert b0 == b1 == 2


def test_parallel_fixture_too_few_ranks():
    with pytest.raises(DGFError, match="partition count"):
        read_grid(FIXTURES / "cube.dgf.2")


def test_dgf_roundtrip_and_split():
    g = structured_grid([0, 0], [1, 1], [3, 2])
    d = dgf_from_grid(g)
    again = parse_dgf(format_dgf(d.vertices, d.elements(), d.global_ids))
    assert again.vertices == d.vertices and again.elements() == d.elements()
    parts = split_dgf(d, 2)
    assert sum(len(p.elements()) for p in parts) == 6


def _random_adapted(comm, seed):
    rng = random.Random(seed)
    dim = 2 + seed % 2
    simplex = dim == 2 and seed % 4 == 0
    g = structured_grid([0.0] * dim, [1.0] * dim, [3] * dim if dim == 2 else [2] * dim, comm=comm, simplex=simplex,
                        max_level=3)
    for _ in range(1 + seed % 3):
        apply_marks(g, random_marks(g, rng, 0.35, 0.25))
        adapt_callback(g)
    data = bk.backup_bytes(g)
    h = bk.restore_bytes(data, comm)
    return structure(g) == structure(h), bk.backup_bytes(h) == data


@pytest.mark.parametrize("seed", range(6))
def test_backup_restore_serial(seed):
    assert run_ranks(1, _random_adapted, seed) == [(True, True)]


def test_backup_restore_parallel():
    assert run_ranks(3, _random_adapted, 5) == [(True, True)] * 3


def test_backup_files(tmp_path):
    def prog(comm):
        g = structured_grid([0, 0], [1, 1], [2, 2], comm=comm)
        p = bk.backup_file(g, tmp_path / "grid.bak")
        h = bk.restore_file(tmp_path / "grid.bak", comm)
        return p.name, structure(g) == structure(h)

    assert run_ranks(2, prog) == [("grid.bak.0", True), ("grid.bak.1", True)]


def test_restore_rejects_garbage():
    g = structured_grid([0, 0], [1, 1], [1, 1])
    data = bk.backup_bytes(g)
    with pytest.raises(bk.BackupError):
        bk.restore_bytes(b"NOPE" + data[4:])
    with pytest.raises(bk.BackupError):
        bk.restore_bytes(data[: len(data) // 2])


def test_convert(tmp_path):
    src = tmp_path / "sq.dgf"
    src.write_text(SQUARE)
    paths = convert_macro(src, 2, tmp_path / "sq")
    assert [p.name for p in paths] == ["sq.2.1", "sq.2.2"]

    def prog(comm):
        g = load_macro_files(paths, comm)
        return len(g.macros), g.global_leaf_count()

    assert run_ranks(2, prog) == [(1, 2), (1, 2)]
    assert convert_main([str(src), "1", "-o", str(tmp_path / "one")]) == 0
    assert convert_main([str(tmp_path / "missing.dgf")]) == 2


def test_vtk(tmp_path):
    g = structured_grid([0, 0], [1, 1], [2, 2])
    p = write_vtk(g, tmp_path / "g.vtk", [1.0, 2.0, 3.0, 4.0])
    text = p.read_text()
    assert text.startswith("# vtk DataFile")
    assert "CELLS 4 20" in text and "SCALARS u" in text
