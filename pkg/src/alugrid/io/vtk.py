"""Legacy-VTK (ASCII) snapshots of the interior leaves of one rank."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from ..mesh.reference import CUBE

# lexicographic corner numbering -> VTK ordering
_QUAD = (0, 1, 3, 2)
_HEX = (0, 1, 3, 2, 4, 5, 7, 6)
_VTK_TRIANGLE, _VTK_QUAD, _VTK_HEX = 5, 9, 12


def write_vtk(grid, path: str | os.PathLike, values=None, name: str = "u") -> Path:
    """Write leaves (with levels, owner rank and optional cell data) to ``path``."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    leaves = grid.leaves
    if grid.etype == CUBE:
        order, ctype = (_QUAD, _VTK_QUAD) if grid.dim == 2 else (_HEX, _VTK_HEX)
    else:
        order, ctype = (0, 1, 2), _VTK_TRIANGLE
    nv = len(order)
    lines = ["# vtk DataFile Version 2.0", f"alugrid rank {grid.rank}", "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {nv * len(leaves)} double")
    for e in leaves:
        cs = e.corners
        for k in order:
            c = tuple(cs[k]) + (0.0,) * (3 - grid.dim)
            lines.append(" ".join(repr(float(x)) for x in c))
    lines.append(f"CELLS {len(leaves)} {(nv + 1) * len(leaves)}")
    for i in range(len(leaves)):
        lines.append(" ".join([str(nv)] + [str(i * nv + k) for k in range(nv)]))
    lines.append(f"CELL_TYPES {len(leaves)}")
    lines.extend([str(ctype)] * len(leaves))
    lines.append(f"CELL_DATA {len(leaves)}")
    lines.append("SCALARS level int 1")
    lines.append("LOOKUP_TABLE default")
    lines.extend(str(e.level) for e in leaves)
    lines.append("SCALARS rank int 1")
    lines.append("LOOKUP_TABLE default")
    lines.extend([str(grid.rank)] * len(leaves))
    if values is not None:
        values = np.asarray(values, dtype=float)
        ncomp = 1 if values.ndim == 1 else values.shape[1]
        lines.append(f"SCALARS {name} double {ncomp}")
        lines.append("LOOKUP_TABLE default")
        for row in values.reshape(len(leaves), ncomp):
            lines.append(" ".join(repr(float(x)) for x in row))
    p.write_text("\n".join(lines) + "\n")
    return p
