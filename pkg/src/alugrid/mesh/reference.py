"""Reference-element numbering for cubes and triangles.

Cube vertex ``k`` sits at the reference point whose coordinate along axis
``a`` is bit ``a`` of ``k``.  Cube face ``2*a + s`` is the face ``x_a = s``;
its vertices are listed in increasing vertex number.  Triangle vertices are
``(0,0), (1,0), (0,1)`` with faces ``(0,1), (0,2), (1,2)``.
"""

from __future__ import annotations

from functools import lru_cache

CUBE = "cube"
SIMPLEX = "simplex"

TRIANGLE_FACES = ((0, 1), (0, 2), (1, 2))


def num_vertices(etype: str, dim: int) -> int:
    if etype == CUBE:
        return 1 << dim
    if etype == SIMPLEX:
        return dim + 1
    raise ValueError(f"unknown element type {etype!r}")


def num_faces(etype: str, dim: int) -> int:
    return 2 * dim if etype == CUBE else dim + 1


def num_children(etype: str, dim: int) -> int:
    return 1 << dim if etype == CUBE else 2


@lru_cache(maxsize=None)
def cube_face_vertices(dim: int) -> tuple[tuple[int, ...], ...]:
    faces = []
    for a in range(dim):
        for s in (0, 1):
            faces.append(tuple(k for k in range(1 << dim) if (k >> a) & 1 == s))
    return tuple(faces)


def face_vertices(etype: str, dim: int) -> tuple[tuple[int, ...], ...]:
    if etype == CUBE:
        return cube_face_vertices(dim)
    if dim != 2:
        raise NotImplementedError("simplices are supported in 2D only")
    return TRIANGLE_FACES


@lru_cache(maxsize=None)
def cube_children_on_face(dim: int, face: int) -> tuple[int, ...]:
    """Child indices of a refined cube that touch the given face."""
    a, s = divmod(face, 2)
    return tuple(c for c in range(1 << dim) if (c >> a) & 1 == s)
