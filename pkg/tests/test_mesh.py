import math
import random

import pytest

from alugrid.adapt import adapt_callback
from alugrid.io.factory import FactoryError, GridFactory, structured_grid
from alugrid.mesh.container import PersistentContainer
from alugrid.mesh.geometry import cube_sub_center, cube_sub_corners, center
from alugrid.mesh.grid import GridError
from alugrid.mesh.reference import CUBE, SIMPLEX, num_children, num_faces, num_vertices


def test_reference_counts():
    assert (num_vertices(CUBE, 2), num_vertices(CUBE, 3), num_vertices(SIMPLEX, 2)) == (4, 8, 3)
    assert (num_faces(CUBE, 2), num_faces(CUBE, 3), num_faces(SIMPLEX, 2)) == (4, 6, 3)
    assert (num_children(CUBE, 2), num_children(CUBE, 3), num_children(SIMPLEX, 2)) == (4, 8, 2)


@pytest.mark.parametrize("cells", [(3, 2), (2, 2, 2)])
def test_structured_volume(cells):
    g = structured_grid([0.0] * len(cells), [2.0] * len(cells), cells, verify=True)
    assert len(g.leaves) == math.prod(cells)
    assert math.isclose(sum(e.volume for e in g.leaves), 2.0 ** len(cells))


def test_simplex_grid():
    g = structured_grid([0, 0], [1, 1], [2, 2], simplex=True)
    assert len(g.leaves) == 8
    assert math.isclose(sum(e.volume for e in g.leaves), 1.0)


def test_refine_coarsen_roundtrip():
    g = structured_grid([0, 0], [1, 1], [2, 2], max_level=3)
    e = g.leaves[0]
    gid = e.global_id
    kids = g.refine(e)
    assert len(kids) == 4 and all(k.father is e for k in kids)
    assert math.isclose(sum(k.volume for k in kids), e.volume)
    g.update_indices()
    assert len(g.leaves) == 7
    g.coarsen(e)
    g.update_indices()
    assert len(g.leaves) == 4
    assert g.find_entity(gid) is e


def test_sub_center_matches_corners():
    coords = [(0, 0), (2, 0), (0, 1), (2.5, 1.5)]
    for idx in [(0, 0), (1, 3), (3, 2)]:
        c1 = cube_sub_center(coords, 2, 2, idx)
        c2 = center(cube_sub_corners(coords, 2, 2, idx))
        assert all(math.isclose(a, b, abs_tol=1e-15) for a, b in zip(c1, c2))


def _random_grid(seed, dim=2, cycles=3):
    rng = random.Random(seed)
    g = structured_grid([0.0] * dim, [1.0] * dim, [3] * dim, max_level=3)
    for _ in range(cycles):
        for e in g.leaves:
            r = rng.random()
            if r < 0.3:
                g.mark(e, 1)
            elif r < 0.5:
                g.mark(e, -1)
        adapt_callback(g)
    return g


@pytest.mark.parametrize("seed", range(4))
def test_indices_unique(seed):
    g = _random_grid(seed)
    hs = [e.hindex for e in g.elements()]
    assert len(set(hs)) == len(hs) and min(hs) >= 0
    assert [g.leaf_index(e) for e in g.leaves] == list(range(len(g.leaves)))
    gids = [e.global_id for e in g.elements()]
    assert len(set(gids)) == len(gids)


@pytest.mark.parametrize("seed,dim", [(0, 2), (1, 2), (2, 3)])
def test_one_irregular_and_symmetric_neighbours(seed, dim):
    g = _random_grid(seed, dim, cycles=2 if dim == 3 else 3)
    for e in g.leaves:
        for f in range(2 * dim):
            r = g.face_neighbor(e, f)
            if r is None:
                continue
            n, gface, _ = r
            assert abs(n.level - e.level) <= 1 or n.children is not None
            if n.children is None:
                if n.level == e.level:
                    back = g.face_neighbor(n, gface)
                    assert back[0] is e
            else:
                for k in g.leaves_on_face(n, gface):
                    assert k.level - e.level == 1


def test_face_areas_balance():
    # the outward face vectors of each cell sum to zero
    g = _random_grid(7)
    for e in g.leaves:
        s = [0.0, 0.0]
        for f in range(4):
            v = e.face_vector(f)
            s[0] += v[0]
            s[1] += v[1]
        assert abs(s[0]) < 1e-14 and abs(s[1]) < 1e-14


def test_mark_rules():
    g = structured_grid([0, 0], [1, 1], [1, 1], max_level=1)
    e = g.leaves[0]
    assert g.mark(e, -1) is False
    assert g.mark(e, 1) is True
    adapt_callback(g)
    assert all(not g.mark(k, 1) for k in g.leaves)
    with pytest.raises(ValueError):
        g.mark(g.leaves[0], 2)
    with pytest.raises(GridError):
        g.mark(e, 1)


def test_persistent_container_grows():
    g = structured_grid([0, 0], [1, 1], [2, 2], max_level=4)
    c = PersistentContainer(g, 2)
    for e in g.leaves:
        c[e] = (e.hindex, 1.0)
    for _ in range(3):
        for e in g.leaves:
            g.mark(e, 1)
        adapt_callback(g)
    e = g.leaves[-1]
    c[e] = (7.0, 8.0)
    assert tuple(c[e]) == (7.0, 8.0)
    assert len(c) > e.hindex


def test_factory_rejects_bad_input():
    f = GridFactory(dim=2)
    f.insert_vertex((0, 0))
    with pytest.raises(FactoryError):
        f.insert_element("cube", (0, 1, 2, 3))
    with pytest.raises(FactoryError):
        structured_grid([0, 0], [1, 1], [0, 2])
