"""Numerical fluxes: upwind for linear transport, HLLC for the Euler equations.

All routines are vectorised over faces.  ``normal`` holds unit normals
pointing from the left to the right state and ``area`` the face measure.
"""

from __future__ import annotations

import numpy as np

GAMMA = 1.4
TRANSPORT_VELOCITY = (1.25, 1.25, 0.0)


class InvalidState(ValueError):
    pass


def upwind_flux(uL, uR, normal, area, velocity=TRANSPORT_VELOCITY):
    """Flux of ``a u`` through the face: ``area * (a.n) * (uL if a.n >= 0 else uR)``."""
    n = np.asarray(normal, dtype=float)
    a = np.asarray(velocity[: n.shape[-1]], dtype=float)
    an = (n * a).sum(axis=-1) if n.ndim > 1 else float(np.dot(n, a))
    up = np.where(an >= 0.0, uL, uR)
    return area * an * up


def pressure(U, gamma: float = GAMMA):
    U = np.asarray(U, dtype=float)
    rho = U[..., 0]
    mom = U[..., 1:-1]
    return (gamma - 1.0) * (U[..., -1] - 0.5 * (mom * mom).sum(axis=-1) / rho)


def primitive_to_conservative(rho, vel, p, gamma: float = GAMMA):
    rho = np.asarray(rho, dtype=float)
    vel = np.asarray(vel, dtype=float)
    p = np.asarray(p, dtype=float)
    mom = rho[..., None] * vel
    energy = p / (gamma - 1.0) + 0.5 * rho * (vel * vel).sum(axis=-1)
    return np.concatenate([rho[..., None], mom, energy[..., None]], axis=-1)


def _check(rho, p) -> None:
    if not (np.all(rho > 0.0) and np.all(p > 0.0)):
        raise InvalidState("invalid state: nonpositive density or pressure")


def euler_flux(U, normal, gamma: float = GAMMA):
    """Physical flux ``F(U) . n`` for conservative states of shape ``(N, dim + 2)``."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    n = np.atleast_2d(np.asarray(normal, dtype=float))
    rho = U[:, 0]
    vel = U[:, 1:-1] / rho[:, None]
    p = pressure(U, gamma)
    un = (vel * n).sum(axis=1)
    out = np.empty_like(U)
    out[:, 0] = rho * un
    out[:, 1:-1] = U[:, 1:-1] * un[:, None] + p[:, None] * n
    out[:, -1] = (U[:, -1] + p) * un
    return out


def hllc_flux(UL, UR, normal, area=1.0, gamma: float = GAMMA, return_speed: bool = False):
    """HLLC flux with Einfeldt (Roe-average) outer wave speed bounds."""
    UL = np.atleast_2d(np.asarray(UL, dtype=float))
    UR = np.atleast_2d(np.asarray(UR, dtype=float))
    n = np.atleast_2d(np.asarray(normal, dtype=float))
    area = np.asarray(area, dtype=float)

    rl, rr = UL[:, 0], UR[:, 0]
    vl = UL[:, 1:-1] / rl[:, None]
    vr = UR[:, 1:-1] / rr[:, None]
    el, er = UL[:, -1], UR[:, -1]
    pl = (gamma - 1.0) * (el - 0.5 * rl * (vl * vl).sum(axis=1))
    pr = (gamma - 1.0) * (er - 0.5 * rr * (vr * vr).sum(axis=1))
    _check(rl, pl)
    _check(rr, pr)
    unl = (vl * n).sum(axis=1)
    unr = (vr * n).sum(axis=1)
    cl = np.sqrt(gamma * pl / rl)
    cr = np.sqrt(gamma * pr / rr)

    sql, sqr = np.sqrt(rl), np.sqrt(rr)
    wsum = sql + sqr
    hl = (el + pl) / rl
    hr = (er + pr) / rr
    u_roe = (sql * unl + sqr * unr) / wsum
    h_roe = (sql * hl + sqr * hr) / wsum
    vroe = (sql[:, None] * vl + sqr[:, None] * vr) / wsum[:, None]
    q2 = (vroe * vroe).sum(axis=1)
    c_roe = np.sqrt(np.maximum((gamma - 1.0) * (h_roe - 0.5 * q2), 0.0))

    sl = np.minimum(unl - cl, u_roe - c_roe)
    sr = np.maximum(unr + cr, u_roe + c_roe)
    ml = rl * (sl - unl)
    mr = rr * (sr - unr)
    sstar = (pr - pl + ml * unl - mr * unr) / (ml - mr)

    fl = euler_flux(UL, n, gamma)
    fr = euler_flux(UR, n, gamma)

    def star(U, rho, vel, un, p, s, e):
        fac = rho * (s - un) / (s - sstar)
        out = np.empty_like(U)
        out[:, 0] = fac
        out[:, 1:-1] = fac[:, None] * (vel + (sstar - un)[:, None] * n)
        out[:, -1] = fac * (e / rho + (sstar - un) * (sstar + p / (rho * (s - un))))
        return out

    usl = star(UL, rl, vl, unl, pl, sl, el)
    usr = star(UR, rr, vr, unr, pr, sr, er)
    fsl = fl + sl[:, None] * (usl - UL)
    fsr = fr + sr[:, None] * (usr - UR)

    flux = np.where((sl >= 0.0)[:, None], fl, np.where((sstar >= 0.0)[:, None], fsl, np.where((sr > 0.0)[:, None], fsr, fr)))
    flux = flux * np.reshape(area, (-1, 1)) if np.ndim(area) else flux * float(area)
    if return_speed:
        return flux, np.maximum(np.abs(sl), np.abs(sr))
    return flux
