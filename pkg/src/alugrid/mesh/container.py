"""User data attached to grid entities by hierarchy index."""

from __future__ import annotations

from typing import Any

import numpy as np


class PersistentContainer:
    """Growable array addressed by ``entity.hindex``.

    Hierarchy indices are unique among live entities of one rank (interior
    and ghost) but need not be consecutive, so the storage may contain holes.
    Slots grow on demand; call :meth:`resize` after adaptation to grow eagerly.
    """

    def __init__(self, grid, ncomp: int = 1, dtype: Any = float, fill: Any = 0.0):
        self.grid = grid
        self.ncomp = int(ncomp)
        self.dtype = np.dtype(dtype)
        self.fill = fill
        self.data = np.full((max(grid.hierarchy_size, 1), self.ncomp), fill, dtype=self.dtype)

    def __len__(self) -> int:
        return self.data.shape[0]

    def resize(self, size: int | None = None) -> None:
        need = self.grid.hierarchy_size if size is None else size
        have = self.data.shape[0]
        if need <= have:
            return
        cap = max(need, 2 * have)
        grown = np.full((cap, self.ncomp), self.fill, dtype=self.dtype)
        grown[:have] = self.data
        self.data = grown

    def _slot(self, entity) -> int:
        h = entity.hindex
        if h < 0:
            raise KeyError(f"{entity!r} is not a live entity")
        if h >= self.data.shape[0]:
            self.resize(h + 1)
        return h

    def __getitem__(self, entity):
        h = self._slot(entity)
        row = self.data[h]
        return row[0] if self.ncomp == 1 else row

    def __setitem__(self, entity, value) -> None:
        h = self._slot(entity)  # may reallocate self.data
        self.data[h] = value

    def gather_rows(self, hindices: np.ndarray) -> np.ndarray:
        self.resize()
        return self.data[hindices]

    def scatter_rows(self, hindices: np.ndarray, values: np.ndarray) -> None:
        self.resize()
        self.data[hindices] = values.reshape(len(hindices), self.ncomp)
