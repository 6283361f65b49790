"""Brute-force oracle for the 2x2 micro-energy system D_t E = A(t, ξ) E.

Convention: D_t = -i ∂_t, so the integrated ODE is ∂_t E = i A E.  The oracle
integrates this directly with an embedded 8(5,3) Runge-Kutta pair (DOP853),
switching the system matrix at the zone boundary t_ξ.  In the hyperbolic zone
the default ``frame="rotating"`` factors out the exact free rotation
exp(i(t - t0) A_0), A_0 = [[0, |ξ|], [|ξ|, 0]], to keep the phase exact over
long horizons; ``frame="lab"`` integrates the raw system.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate
from scipy.integrate import solve_ivp

from .coeff import CoefficientModel
from .zones import DISS, HYP, ZoneGeometry, t_xi

Mat2 = np.ndarray

I2 = np.eye(2, dtype=complex)


class OracleError(RuntimeError):
    pass


def system_matrix(model: CoefficientModel, geom: ZoneGeometry, t: float, xi: float,
                  zone: str | None = None) -> Mat2:
    tx = t_xi(geom, xi)
    actual = HYP if t >= tx else DISS
    if zone is not None and zone != actual:
        # the boundary itself may be evaluated from either side
        if not (zone == DISS and t == tx):
            raise ValueError(f"(t={t}, xi={xi}) lies in {actual}, not {zone}")
        actual = DISS
    b = float(model.b(t))
    if actual == DISS:
        N = geom.N
        return np.array([[1j / (1 + t), N / (1 + t)], [(1 + t) * xi ** 2 / N, 1j * b]], dtype=complex)
    return np.array([[0.0, xi], [xi, 1j * b]], dtype=complex)


def rotation(phi) -> Mat2:
    """exp(i φ σ_x) = [[cos φ, i sin φ], [i sin φ, cos φ]] (batched over φ)."""
    phi = np.asarray(phi, dtype=float)
    c, s = np.cos(phi), np.sin(phi)
    out = np.empty(phi.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = c
    out[..., 1, 1] = c
    out[..., 0, 1] = 1j * s
    out[..., 1, 0] = 1j * s
    return out


def _mul(a, y):
    # a: 2x2 entries (a11, a12, a21, a22) applied to row-major flattened y
    a11, a12, a21, a22 = a
    y11, y12, y21, y22 = y
    return np.array([a11 * y11 + a12 * y21, a11 * y12 + a12 * y22,
                     a21 * y11 + a22 * y21, a21 * y12 + a22 * y22])


def _diss_rhs(model, N, xi):
    xi2 = xi * xi

    def f(t, y):
        b = float(model.b(t))
        inv = 1.0 / (1.0 + t)
        return _mul((-inv, 1j * N * inv, 1j * (1.0 + t) * xi2 / N, -b), y)

    return f


def _hyp_rhs_lab(model, xi):
    def f(t, y):
        b = float(model.b(t))
        return _mul((0.0, 1j * xi, 1j * xi, -b), y)

    return f


def _hyp_rhs_rot(model, xi, t0):
    def f(t, y):
        b = float(model.b(t))
        phi = xi * (t - t0)
        c, s = math.cos(phi), math.sin(phi)
        return _mul((-b * s * s, 1j * b * s * c, -1j * b * s * c, -b * c * c), y)

    return f


def _integrate(f, t0, t1, y0, t_eval, tol):
    if t1 <= t0:
        return np.tile(y0, (len(t_eval), 1)), y0
    pts = np.unique(np.concatenate([t_eval, [t1]]))
    pts = pts[(pts >= t0) & (pts <= t1)]
    sol = solve_ivp(f, (t0, t1), y0, method="DOP853", t_eval=pts, rtol=tol, atol=tol * 1e-3)
    if sol.status != 0:
        raise OracleError(f"integration failed on [{t0}, {t1}]: {sol.message}")
    ys = sol.y.T
    lookup = {float(tt): ys[i] for i, tt in enumerate(sol.t)}
    vals = np.array([lookup[float(tt)] for tt in t_eval]) if len(t_eval) else np.empty((0, 4), complex)
    return vals, ys[-1]


def oracle_path(model: CoefficientModel, geom: ZoneGeometry, s: float, xi: float, t_eval,
                tol: float = 1e-10, frame: str = "rotating") -> np.ndarray:
    """E(t, s, ξ) for every t in ``t_eval`` (shape (len, 2, 2)), one integration pass."""
    if not 1e-12 <= tol <= 1e-6:
        raise ValueError("tol must lie in [1e-12, 1e-6]")
    if frame not in ("rotating", "lab"):
        raise ValueError(frame)
    t_eval = np.atleast_1d(np.asarray(t_eval, dtype=float))
    if np.any(t_eval < s):
        raise ValueError("need t >= s")
    tx = t_xi(geom, xi)
    out = np.empty((len(t_eval), 4), dtype=complex)
    y = I2.reshape(-1).copy()

    mid = min(max(s, tx), t_eval.max()) if len(t_eval) else s
    d_mask = t_eval < tx
    if s < tx:
        vals, y = _integrate(_diss_rhs(model, geom.N, xi), s, min(tx, t_eval.max()), y, t_eval[d_mask], tol)
        out[d_mask] = vals
    h_mask = ~d_mask
    if np.any(h_mask):
        t0 = mid
        th = t_eval[h_mask]
        if frame == "lab":
            vals, _ = _integrate(_hyp_rhs_lab(model, xi), t0, th.max(), y, th, tol)
        else:
            vals, _ = _integrate(_hyp_rhs_rot(model, xi, t0), t0, th.max(), y, th, tol)
            rot = rotation(xi * (th - t0))
            vals = np.einsum("nij,njk->nik", rot, vals.reshape(-1, 2, 2)).reshape(-1, 4)
        out[h_mask] = vals
    return out.reshape(-1, 2, 2)


def fundamental_solution_oracle(model: CoefficientModel, geom: ZoneGeometry, t: float, s: float,
                                xi: float, tol: float = 1e-10, frame: str = "rotating") -> Mat2:
    if t == s:
        return I2.copy()
    return oracle_path(model, geom, s, xi, [t], tol, frame)[0]


def japanese(xi):
    return np.sqrt(1.0 + np.asarray(xi, dtype=float) ** 2)


def bracket(xi):
    """[ξ] = |ξ| / <ξ>."""
    return np.asarray(xi, dtype=float) / japanese(xi)


def energy_from_fundamental(geom: ZoneGeometry, t, xi, E0t: np.ndarray) -> np.ndarray:
    """𝔼(t, ξ) = diag(|ξ|/h(t), 1) E(t, 0, ξ) diag(h(0)/<ξ>, 1), batched over t."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    E = np.array(E0t, dtype=complex).reshape(-1, 2, 2).copy()
    left = xi / geom.h(t, xi)
    right = geom.h(0.0, xi) / japanese(xi)
    E[:, 0, :] *= left[:, None]
    E[:, :, 0] *= right
    return E


def energy_symbol_path(model: CoefficientModel, geom: ZoneGeometry, xi: float, t_eval,
                       tol: float = 1e-10) -> np.ndarray:
    E = oracle_path(model, geom, 0.0, xi, t_eval, tol)
    return energy_from_fundamental(geom, t_eval, xi, E)


def energy_symbol(model: CoefficientModel, geom: ZoneGeometry, t: float, xi: float,
                  tol: float = 1e-10) -> Mat2:
    if xi == 0:
        raise ValueError("energy symbol needs xi != 0")
    return energy_symbol_path(model, geom, xi, [t], tol)[0]


def free_energy_symbol(t, xi) -> Mat2:
    """𝔼_0(t, ξ) for free waves; det = [ξ]."""
    if np.any(np.asarray(xi) == 0):
        raise ValueError("free energy symbol needs xi != 0")
    t = np.asarray(t, dtype=float)
    br = bracket(xi)
    R = rotation(t * np.asarray(xi))
    R[..., :, 0] *= br[..., None] if np.ndim(br) else br
    return R


def trace_integral(model: CoefficientModel, geom: ZoneGeometry, t: float, s: float, xi: float) -> complex:
    """i ∫_s^t tr A dτ by adaptive quadrature, zone by zone."""
    tx = t_xi(geom, xi)
    total = 0.0
    edges = [s, t] if not s < tx < t else [s, tx, t]
    for a, c in zip(edges[:-1], edges[1:]):
        if c <= a:
            continue
        pts = np.unique(np.concatenate([[a], a + (c - a) * np.geomspace(1e-6, 1.0, 12), [c]]))
        for lo, hi in zip(pts[:-1], pts[1:]):
            val, _ = integrate.quad(lambda u: float(model.b(u)), lo, hi, epsabs=1e-14, epsrel=1e-13, limit=200)
            total -= val
        if a < tx:
            diss_end = min(c, tx)
            val, _ = integrate.quad(lambda u: 1.0 / (1.0 + u), a, diss_end, epsabs=1e-14, epsrel=1e-13)
            total -= val
    return total


def liouville_defect(model: CoefficientModel, geom: ZoneGeometry, t: float, s: float, xi: float,
                     tol: float = 1e-10) -> float:
    E = fundamental_solution_oracle(model, geom, t, s, xi, tol)
    ref = np.exp(trace_integral(model, geom, t, s, xi))
    return float(abs(np.linalg.det(E) - ref) / abs(ref))


def det_closed_form(model: CoefficientModel, geom: ZoneGeometry, t: float, s: float, xi: float) -> float:
    """(λ²(s)/λ²(t)) (1+s)/(1+min(t, t_ξ)) for s < t_ξ; λ²(s)/λ²(t) otherwise."""
    tx = t_xi(geom, xi)
    val = float(np.exp(model.primitive(s) - model.primitive(t)))
    if s < tx:
        val *= (1 + s) / (1 + min(t, tx))
    return val


def sweep_rows(model, geom, xi_list, t_list, s: float = 0.0, tol: float = 1e-10):
    """CSV-ready rows: t, s, xi, re/im of the four entries, norm, det_defect."""
    rows = []
    for xi in xi_list:
        path = oracle_path(model, geom, s, xi, t_list, tol)
        for t, E in zip(t_list, path):
            ref = det_closed_form(model, geom, t, s, xi)
            d = abs(np.linalg.det(E) - ref) / ref
            entries = E.reshape(-1)
            rows.append({
                "t": t, "s": s, "xi": xi,
                **{f"{p}{ij}": getattr(v, p) for ij, v in zip(("11", "12", "21", "22"), entries)
                   for p in ("real", "imag")},
                "norm": float(np.linalg.norm(E, 2)), "det_defect": float(d),
            })
    return rows
