"""Affine/multilinear element geometry in plain Python floats.

Every routine is a pure function of its inputs, so the same element
produces bit-identical geometry on any rank that holds a copy of it.
"""

from __future__ import annotations

from functools import lru_cache
from itertools import product

from .reference import cube_face_vertices

Point = tuple[float, ...]


def multilinear(coords: list[Point], dim: int, xi: tuple[float, ...]) -> Point:
    """Evaluate the multilinear map of a cube with corners ``coords`` at ``xi``."""
    out = [0.0] * len(coords[0])
    for k, c in enumerate(coords):
        w = 1.0
        for a in range(dim):
            w *= xi[a] if (k >> a) & 1 else 1.0 - xi[a]
        if w != 0.0:
            for i in range(len(out)):
                out[i] += w * c[i]
    return tuple(out)


def cube_sub_corners(coords: list[Point], dim: int, level: int, idx: tuple[int, ...]) -> tuple[Point, ...]:
    """Corners of the level-``level`` sub-cube ``idx`` of a macro cube."""
    n = float(1 << level)
    if dim == 2:
        (x0, y0), (x1, y1), (x2, y2), (x3, y3) = coords
        i, j = idx
        corners = []
        for b in range(4):
            s = (i + (b & 1)) / n
            t = (j + (b >> 1)) / n
            w0 = (1.0 - s) * (1.0 - t)
            w1 = s * (1.0 - t)
            w2 = (1.0 - s) * t
            w3 = s * t
            corners.append((w0 * x0 + w1 * x1 + w2 * x2 + w3 * x3, w0 * y0 + w1 * y1 + w2 * y2 + w3 * y3))
        return tuple(corners)
    return tuple(
        multilinear(coords, dim, tuple((idx[a] + ((b >> a) & 1)) / n for a in range(dim)))
        for b in range(1 << dim)
    )


def cube_sub_center(coords: list[Point], dim: int, level: int, idx: tuple[int, ...]) -> Point:
    """Image of the reference midpoint of sub-cube ``idx`` (the mean of its corners)."""
    n = float(1 << level)
    if dim == 2:
        (x0, y0), (x1, y1), (x2, y2), (x3, y3) = coords
        s = (idx[0] + 0.5) / n
        t = (idx[1] + 0.5) / n
        w0 = (1.0 - s) * (1.0 - t)
        w1 = s * (1.0 - t)
        w2 = (1.0 - s) * t
        w3 = s * t
        return (w0 * x0 + w1 * x1 + w2 * x2 + w3 * x3, w0 * y0 + w1 * y1 + w2 * y2 + w3 * y3)
    return multilinear(coords, dim, tuple((idx[a] + 0.5) / n for a in range(dim)))


def center(corners: tuple[Point, ...]) -> Point:
    n = len(corners)
    return tuple(sum(c[i] for c in corners) / n for i in range(len(corners[0])))


_GAUSS = (0.5 - 0.5 / 3.0**0.5, 0.5 + 0.5 / 3.0**0.5)


def cube_volume(corners: tuple[Point, ...], dim: int) -> float:
    if dim == 2:
        (x0, y0), (x1, y1), (x2, y2), (x3, y3) = corners
        # shoelace over 0-1-3-2
        return 0.5 * abs((x0 * y1 - x1 * y0) + (x1 * y3 - x3 * y1) + (x3 * y2 - x2 * y3) + (x2 * y0 - x0 * y2))
    if dim == 1:
        return abs(corners[1][0] - corners[0][0])
    vol = 0.0
    for xi in product(_GAUSS, repeat=3):
        vol += abs(_det3(_jacobian3(corners, xi)))
    return vol / 8.0


def _jacobian3(c: tuple[Point, ...], xi: tuple[float, ...]) -> list[list[float]]:
    jac = [[0.0] * 3 for _ in range(3)]
    for k in range(8):
        bits = [(k >> a) & 1 for a in range(3)]
        for a in range(3):
            w = 1.0 if bits[a] else -1.0
            for b in range(3):
                if b != a:
                    w *= xi[b] if bits[b] else 1.0 - xi[b]
            for i in range(3):
                jac[i][a] += w * c[k][i]
    return jac


def _det3(m: list[list[float]]) -> float:
    return (
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    )


def orientation(corners: tuple[Point, ...], dim: int) -> int:
    """Sign of the Jacobian determinant at the cube center."""
    if dim == 2:
        (x0, y0), (x1, y1), (x2, y2), (x3, y3) = corners
        dx = (x1 - x0 + x3 - x2, y1 - y0 + y3 - y2)
        dy = (x2 - x0 + x3 - x1, y2 - y0 + y3 - y1)
        return 1 if dx[0] * dy[1] - dx[1] * dy[0] > 0 else -1
    return 1 if _det3(_jacobian3(corners, (0.5, 0.5, 0.5))) > 0 else -1


def _raw_face_area(pts: list[Point], dim: int) -> Point:
    if dim == 2:
        (px, py), (qx, qy) = pts
        return (qy - py, -(qx - px))
    v0, v1, v2, v3 = pts
    d1 = (v3[0] - v0[0], v3[1] - v0[1], v3[2] - v0[2])
    d2 = (v2[0] - v1[0], v2[1] - v1[1], v2[2] - v1[2])
    return (
        0.5 * (d1[1] * d2[2] - d1[2] * d2[1]),
        0.5 * (d1[2] * d2[0] - d1[0] * d2[2]),
        0.5 * (d1[0] * d2[1] - d1[1] * d2[0]),
    )


@lru_cache(maxsize=None)
def cube_face_signs(dim: int) -> tuple[int, ...]:
    """Signs turning the raw face vector into the outward one on a positively oriented cube."""
    ref = [tuple(float((k >> a) & 1) for a in range(dim)) for k in range(1 << dim)]
    signs = []
    for f, fv in enumerate(cube_face_vertices(dim)):
        a, s = divmod(f, 2)
        raw = _raw_face_area([ref[v] for v in fv], dim)
        signs.append(1 if raw[a] * (1 if s else -1) > 0 else -1)
    return tuple(signs)


def cube_face_vector(corners: tuple[Point, ...], dim: int, face: int, orient: int) -> Point:
    """Outward area-weighted normal of a cube face (exact for planar and bilinear faces)."""
    fv = cube_face_vertices(dim)[face]
    raw = _raw_face_area([corners[v] for v in fv], dim)
    sgn = cube_face_signs(dim)[face] * orient
    if sgn > 0:
        return raw
    return tuple(-r for r in raw)


def triangle_area(p: Point, q: Point, r: Point) -> float:
    return 0.5 * abs((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]))


def edge_vector_outward(p: Point, q: Point, inner: Point) -> Point:
    nx, ny = q[1] - p[1], -(q[0] - p[0])
    mx, my = 0.5 * (p[0] + q[0]) - inner[0], 0.5 * (p[1] + q[1]) - inner[1]
    if nx * mx + ny * my < 0:
        return (-nx, -ny)
    return (nx, ny)
