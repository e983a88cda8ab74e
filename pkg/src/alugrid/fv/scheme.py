"""First-order finite-volume schemes on leaf cells with explicit Euler stepping.

The state lives in a :class:`PersistentContainer` indexed by hierarchy index,
so it survives adaptation (with :class:`RestrictProlongHandle`) and migration
(with :class:`ContainerHandle`).  A step gathers the leaf rows into a dense
array ordered by leaf index (interior cells first, then ghosts), assembles
the per-cell update, reduces the time step globally, ships the update of
border cells to the ghosts of neighbouring ranks and applies it everywhere.
"""

from __future__ import annotations

import math
import time

import numpy as np

from ..adapt import RestrictProlongHandle
from ..mesh.container import PersistentContainer
from ..mesh.grid import Grid
from ..parallel.ghosts import ContainerHandle, border_plan, communicate_array
from .faces import FaceSet, FaceView, face_set
from .flux import GAMMA, TRANSPORT_VELOCITY, hllc_flux

CFL = 0.45

BND_OUTFLOW = 1
BND_WALL = 2
BND_INFLOW = 3


class TimestepCollapse(RuntimeError):
    pass


class TransportModel:
    """Linear advection ``u_t + a . grad u = 0`` with upwind flux."""

    name = "transport"
    nvar = 1

    def __init__(self, dim: int, velocity=TRANSPORT_VELOCITY, inflow: float = 0.0):
        self.dim = dim
        self.velocity = tuple(float(v) for v in velocity[:dim])
        self.inflow = float(inflow)

    def _an(self, normal: np.ndarray) -> np.ndarray:
        a = self.velocity
        an = normal[:, 0] * a[0]
        for k in range(1, self.dim):
            an = an + normal[:, k] * a[k]
        return an

    def boundary_state(self, uL: np.ndarray, fv: FaceView) -> np.ndarray:
        return np.full_like(uL, self.inflow)

    def flux(self, uL: np.ndarray, uR: np.ndarray, fv: FaceView):
        """Return flux out of the left cell and the left/right outflow rates."""
        an = self._an(fv.normal)
        w = fv.area * an
        up = np.where((an >= 0.0)[:, None], uL, uR)
        flux = w[:, None] * up
        return flux, np.maximum(w, 0.0), np.maximum(-w, 0.0)


class EulerModel:
    """Compressible Euler equations with HLLC flux.

    Boundary ids: 1 transmissive (default), 2 reflecting wall, 3 prescribed
    inflow state ``inflow``.
    """

    name = "euler"

    def __init__(self, dim: int, gamma: float = GAMMA, inflow=None):
        self.dim = dim
        self.nvar = dim + 2
        self.gamma = gamma
        self.inflow = None if inflow is None else np.asarray(inflow, dtype=float)

    def boundary_state(self, uL: np.ndarray, fv: FaceView) -> np.ndarray:
        uR = uL.copy()
        wall = fv.bnd == BND_WALL
        if wall.any():
            n = fv.normal[wall]
            mom = uL[wall, 1:-1]
            mn = (mom * n).sum(axis=1)
            uR[wall, 1:-1] = mom - 2.0 * mn[:, None] * n
        if self.inflow is not None:
            inflow = fv.bnd == BND_INFLOW
            if inflow.any():
                uR[inflow] = self.inflow
        return uR

    def flux(self, uL: np.ndarray, uR: np.ndarray, fv: FaceView):
        flux, speed = hllc_flux(uL, uR, fv.normal, fv.area, self.gamma, return_speed=True)
        rate = speed * fv.area
        return flux, rate, rate


class FVScheme:
    """Cell-centred scheme for ``model`` on ``grid``."""

    def __init__(self, grid: Grid, model, cfl: float = CFL):
        self.grid = grid
        self.model = model
        self.cfl = float(cfl)
        self.u = PersistentContainer(grid, model.nvar)
        self.time_comm = 0.0

    # ------------------------------------------------------------------
    # data access
    @property
    def restrict_prolong(self) -> RestrictProlongHandle:
        return RestrictProlongHandle(self.u)

    @property
    def migration_handle(self) -> ContainerHandle:
        return ContainerHandle(self.u)

    def faces(self) -> FaceSet:
        return face_set(self.grid)

    def dense(self, fs: FaceSet | None = None) -> np.ndarray:
        fs = fs or self.faces()
        return self.u.gather_rows(fs.hidx)

    def store(self, values: np.ndarray, fs: FaceSet | None = None) -> None:
        fs = fs or self.faces()
        self.u.scatter_rows(fs.hidx, values)

    def project(self, func) -> None:
        """Set every interior leaf to ``func(center)`` (vectorised over an ``(n, dim)`` array)."""
        fs = self.faces()
        vals = np.asarray(func(fs.center), dtype=float).reshape(fs.n_cells, self.model.nvar)
        self.store(vals, fs)

    def sync_ghosts(self) -> None:
        """Copy interior border values into the ghost cells."""
        if self.grid.size == 1:
            return
        fs = self.faces()
        u = self.dense(fs)
        t0 = time.perf_counter()
        communicate_array(self.grid, u).wait()
        self.time_comm += time.perf_counter() - t0
        self.store(u, fs)

    def leaf_values(self) -> dict:
        """Interior leaf values keyed by global entity id."""
        fs = self.faces()
        u = self.dense(fs)
        return {e.global_id: u[i].copy() for i, e in enumerate(self.grid.leaves)}

    def total_mass(self) -> np.ndarray:
        fs = self.faces()
        u = self.dense(fs)[: fs.n_interior]
        w = u * fs.volume[: fs.n_interior, None]
        local = [math.fsum(w[:, k].tolist()) for k in range(self.model.nvar)]
        parts = self.grid.comm.allgather(local, "reduce")
        return np.array([math.fsum(p[k] for p in parts) for k in range(self.model.nvar)])

    # ------------------------------------------------------------------
    # assembly
    def _assemble(self, fv: FaceView, u: np.ndarray, S: np.ndarray, R: np.ndarray) -> None:
        uL = u[fv.left]
        inner = fv.interior
        uR = np.empty_like(uL)
        uR[inner] = u[fv.right[inner]]
        if not inner.all():
            bnd = ~inner
            sub = _Rows(fv, bnd)
            uR[bnd] = self.model.boundary_state(uL[bnd], sub)
        flux, rl, rr = self.model.flux(uL, uR, fv)
        ml = fv.slot_left >= 0
        S[fv.left[ml], fv.slot_left[ml]] = -flux[ml]
        R[fv.left[ml], fv.slot_left[ml]] = rl[ml]
        mr = fv.slot_right >= 0
        S[fv.right[mr], fv.slot_right[mr]] = flux[mr]
        R[fv.right[mr], fv.slot_right[mr]] = rr[mr]

    @staticmethod
    def _sum_slots(A: np.ndarray, rows=None) -> np.ndarray:
        B = A if rows is None else A[rows]
        out = B[:, 0].copy()
        for k in range(1, B.shape[1]):
            out += B[:, k]
        return out

    def _dt(self, fs: FaceSet, rate: np.ndarray) -> float:
        n = fs.n_interior
        r = rate[:n]
        ok = r > 0.0
        local = float(np.min(fs.volume[:n][ok] / r[ok])) if ok.any() else math.inf
        t0 = time.perf_counter()
        dt = self.cfl * self.grid.comm.global_min(local)
        self.time_comm += time.perf_counter() - t0
        if not (math.isfinite(dt) and dt > 0.0):
            raise TimestepCollapse(f"timestep collapse: dt = {dt}")
        return dt

    def _buffers(self, fs: FaceSet):
        nv = self.model.nvar
        S = np.zeros((fs.n_cells, fs.nslots, nv))
        R = np.zeros((fs.n_cells, fs.nslots))
        return S, R

    def _apply(self, fs: FaceSet, u: np.ndarray, F: np.ndarray, dt: float) -> None:
        u_new = u + (dt * F) / fs.volume[:, None]
        self.store(u_new, fs)

    def step(self, t: float = 0.0, dt_max: float | None = None) -> float:
        """One explicit step; returns the global time step used."""
        fs = self.faces()
        u = self.dense(fs)
        S, R = self._buffers(fs)
        self._assemble(fs.whole(), u, S, R)
        n = fs.n_interior
        F = np.zeros((fs.n_cells, self.model.nvar))
        F[:n] = self._sum_slots(S[:n])
        rate = self._sum_slots(R[:n])
        dt = self._dt(fs, rate)
        if dt_max is not None:
            dt = min(dt, dt_max)
        t0 = time.perf_counter()
        communicate_array(self.grid, F).wait()
        self.time_comm += time.perf_counter() - t0
        self._apply(fs, u, F, dt)
        return dt

    def step_overlapped(self, t: float = 0.0, dt_max: float | None = None) -> float:
        """Same result as :meth:`step`; border cells first so the exchange overlaps interior work."""
        fs = self.faces()
        u = self.dense(fs)
        n = fs.n_interior
        border = np.zeros(fs.n_cells, dtype=bool)
        bidx = np.empty(0, dtype=np.int64)
        if self.grid.size > 1:
            send, _ = border_plan(self.grid).index_arrays()
            if send:
                bidx = np.unique(np.concatenate(list(send.values())))
                border[bidx] = True
        near, far = fs.split(border)
        S, R = self._buffers(fs)
        F = np.zeros((fs.n_cells, self.model.nvar))
        self._assemble(near, u, S, R)
        if len(bidx):
            F[bidx] = self._sum_slots(S, bidx)
        req = communicate_array(self.grid, F)
        self._assemble(far, u, S, R)
        rest = np.flatnonzero(~border[:n])
        F[rest] = self._sum_slots(S, rest)
        rate = self._sum_slots(R[:n])
        dt = self._dt(fs, rate)
        if dt_max is not None:
            dt = min(dt, dt_max)
        t0 = time.perf_counter()
        req.wait()
        self.time_comm += time.perf_counter() - t0
        self._apply(fs, u, F, dt)
        return dt


class _Rows:
    """Row subset of a face view, used for boundary callbacks."""

    def __init__(self, fv: FaceView, mask: np.ndarray):
        self.normal = fv.normal[mask]
        self.area = fv.area[mask]
        self.bnd = fv.bnd[mask]
