"""Decay-rate measurements for the damped wave equation.

L²-L² operator norms of Fourier multipliers are grid sups of pointwise matrix
norms.  Dispersive L¹-L^∞ behaviour is probed by radial synthesis of
band-limited data in dimension one or three.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BarycentricInterpolator

from .coeff import CoefficientModel
from .diag import DiagonalizationHierarchy, build_hierarchy, eval_symbols
from .peano import M, M_INV, assemble_path, e0_phase, q_path
from .propagator import energy_from_fundamental, japanese
from .scattering import AnnulusData
from .volterra import gauss_panel, solve_diss_zone
from .zones import ZoneGeometry, t_xi

ENERGY = "energy"
SOLUTION = "solution"
DISPERSIVE = "dispersive"


class RatesError(ValueError):
    pass


@dataclass
class DecayReport:
    observable: str
    t: np.ndarray
    measured: np.ndarray
    predicted: np.ndarray
    window: tuple
    exponent: float
    stderr: float
    predicted_exponent: float
    ratio_range: tuple
    verdict: bool
    extra: dict = field(default_factory=dict)

    def rows(self) -> list:
        return [{"t": float(t), "measured": float(m), "predicted": float(p), "ratio": float(m / p)}
                for t, m, p in zip(self.t, self.measured, self.predicted)]


def fit_decay_exponent(t, values, window=None) -> tuple[float, float]:
    """Least-squares slope of log(values) against log(1+t) on ``window``."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    mask = np.ones_like(t, dtype=bool) if window is None else (t >= window[0]) & (t <= window[1])
    if mask.sum() < 2:
        raise RatesError("need at least two points in the fit window")
    if np.any(v[mask] <= 0):
        raise RatesError("decay curve must be positive on the fit window")
    x, y = np.log1p(t[mask]), np.log(v[mask])
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    dof = len(x) - 2
    if dof > 0:
        resid = y - A @ coef
        cov = np.linalg.inv(A.T @ A) * float(resid @ resid) / dof
        err = float(np.sqrt(max(cov[0, 0], 0.0)))
    else:
        err = 0.0
    return float(coef[0]), err


def predicted_curve(model: CoefficientModel, observable: str, t, n: int = 3) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    lam = np.asarray(model.lam(t), dtype=float)
    if observable == ENERGY:
        return 1.0 / lam
    if observable == SOLUTION:
        return (1 + t) / lam ** 2
    if observable == DISPERSIVE:
        return (1 + t) ** (-(n - 1) / 2) / lam
    raise RatesError(f"unknown observable {observable!r}")


def default_hierarchy(model: CoefficientModel, k: int = 3) -> DiagonalizationHierarchy:
    return build_hierarchy(model, min(k, (model.ell + 1) // 2))


def fundamental_grid(hier, model, geom, xi_grid, t_grid) -> np.ndarray:
    """E(t, 0, ξ) from the assembled propagator, shape (nξ, nt, 2, 2)."""
    return np.array([assemble_path(hier, model, geom, 0.0, x, t_grid) for x in xi_grid])


def observable_norms(geom: ZoneGeometry, observable: str, t_grid, xi: float, E: np.ndarray) -> np.ndarray:
    """Pointwise multiplier norms along t for one ξ."""
    t_grid = np.asarray(t_grid, dtype=float)
    if observable == ENERGY:
        return np.linalg.norm(energy_from_fundamental(geom, t_grid, xi, E), 2, axis=(-2, -1))
    if observable == SOLUTION:
        h_t = geom.h(t_grid, xi)
        row = np.stack([E[:, 0, 0] * geom.h(0.0, xi), E[:, 0, 1] * japanese(xi)], axis=-1) / h_t[:, None]
        return np.linalg.norm(row, axis=-1)
    raise RatesError(f"unknown observable {observable!r}")


def operator_norm_curve(model: CoefficientModel, geom: ZoneGeometry, observable: str, t_grid, xi_grid=None,
                        hier: DiagonalizationHierarchy | None = None, window=(1e2, 1e4),
                        band: float = 3.0) -> DecayReport:
    """sup over ``xi_grid`` of the energy or solution multiplier norm, per t."""
    t_grid = np.asarray(t_grid, dtype=float)
    xi_grid = np.geomspace(1e-3, 1e2, 31) if xi_grid is None else np.asarray(xi_grid, dtype=float)
    hier = hier or default_hierarchy(model)
    E = fundamental_grid(hier, model, geom, xi_grid, t_grid)
    norms = np.array([observable_norms(geom, observable, t_grid, x, Ex) for x, Ex in zip(xi_grid, E)])
    measured = norms.max(axis=0)
    pred = predicted_curve(model, observable, t_grid)
    in_win = (t_grid >= window[0]) & (t_grid <= window[1])
    try:
        exp_, err = fit_decay_exponent(t_grid, measured, window)
        pexp, _ = fit_decay_exponent(t_grid, pred, window)
    except RatesError:
        exp_, err, pexp = float("nan"), float("nan"), float("nan")
    ratio = measured[in_win] / pred[in_win] if in_win.any() else measured / pred
    rr = (float(ratio.min()), float(ratio.max()))
    verdict = rr[1] / rr[0] <= band
    return DecayReport(observable, t_grid, measured, pred, tuple(window), exp_, err, pexp, rr, verdict,
                       {"argsup_xi": xi_grid[norms.argmax(axis=0)]})


# ------------------------------------------------------------ radial synthesis

@dataclass(frozen=True)
class RadialData:
    """Radial Cauchy data with Fourier profiles û_1 = a1·φ, û_2 = a2·φ, φ a bump on [c, C]."""

    c: float
    C: float
    a1: float = 1.0
    a2: float = 0.0

    def bump(self, rho):
        return AnnulusData(self.c, self.C).profile(rho)


def _fine_nodes(c, C, freq, m=16):
    width = min(C - c, 2 * math.pi / max(freq, 1e-12))
    P = max(1, math.ceil((C - c) / width))
    edges = np.linspace(c, C, P + 1)
    x, w, _ = gauss_panel(m)
    a, b = edges[:-1], edges[1:]
    nodes = (a[:, None] + (b - a)[:, None] * (x[None] + 1) / 2).ravel()
    weights = ((b - a)[:, None] * w[None] / 2).ravel()
    return nodes, weights


def _cheb_nodes(a, b, m):
    k = np.arange(m)
    x = np.cos(np.pi * k / (m - 1))
    return np.sort(a + (b - a) * (x + 1) / 2)


def _hyp_amplitude(hier, model, geom, rho, t_grid):
    """Y(t, ρ) = λ(t_ρ) E_0(0, t_ρ) Q(t, t_ρ) N_k^{-1}(t_ρ) M^{-1} E(t_ρ, 0, ρ), shape (nt, 2, 2)."""
    tx = t_xi(geom, rho)
    Q = q_path(hier, model, geom, tx, rho, t_grid)
    _, Ninv, _, _ = eval_symbols(hier, model, geom, np.array([tx]), rho)
    Ex = solve_diss_zone(model, geom, tx, 0.0, rho) if tx > 0 else np.eye(2, dtype=complex)
    right = Ninv[0] @ M_INV @ Ex * float(model.lam(tx))
    return e0_phase(0.0, tx, rho) @ Q @ right


def spectral_solution(model, geom, data: RadialData, t_grid, nodes, hier=None, m_coarse: int = 40,
                      method: str = "interpolate") -> np.ndarray:
    """û(t, ρ) on ``nodes`` for each t, shape (nt, len(nodes)).

    ``method="interpolate"`` factors out the exact phase diag(e^{iρt}, e^{-iρt})
    and interpolates the slowly varying rest from Chebyshev nodes; this needs
    every (t, ρ) in the hyperbolic zone.  ``method="direct"`` assembles the
    propagator at every node.
    """
    hier = hier or default_hierarchy(model)
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    nodes = np.asarray(nodes, dtype=float)
    u1 = data.a1 * data.bump(nodes)
    u2 = data.a2 * data.bump(nodes)
    h0 = np.where(nodes < geom.N, geom.N, nodes)
    if method == "direct":
        E = np.array([assemble_path(hier, model, geom, 0.0, r, t_grid) for r in nodes])  # (nr, nt, 2, 2)
        h_t = np.array([geom.h(t_grid, r) for r in nodes])
        uh = (E[..., 0, 0] * (h0 * u1)[:, None] - 1j * E[..., 0, 1] * u2[:, None]) / h_t
        return uh.T
    if np.any(t_grid < t_xi(geom, data.c)):
        raise RatesError("interpolated synthesis needs every (t, rho) in the hyperbolic zone")
    pieces = [data.c, data.C] if not data.c < geom.N < data.C else [data.c, geom.N, data.C]
    out = np.zeros((len(t_grid), len(nodes)), dtype=complex)
    lam_t = np.asarray(model.lam(t_grid), dtype=float)
    for lo, hi in zip(pieces[:-1], pieces[1:]):
        cheb = _cheb_nodes(lo, hi, m_coarse)
        Y = np.array([_hyp_amplitude(hier, model, geom, r, t_grid) for r in cheb])  # (nc, nt, 2, 2)
        sel = (nodes >= lo) & (nodes <= hi) if hi == pieces[-1] else (nodes >= lo) & (nodes < hi)
        rs = nodes[sel]
        if rs.size == 0:
            continue
        Yi = BarycentricInterpolator(cheb, Y.reshape(len(cheb), -1))(rs).reshape(len(rs), len(t_grid), 2, 2)
        for j, t in enumerate(t_grid):
            Nt, _, _, _ = eval_symbols(hier, model, geom, np.full(rs.shape, t), rs)
            E = M @ Nt @ e0_phase(t, 0.0, rs) @ Yi[:, j] / lam_t[j]
            hsel = h0[sel]
            out[j, sel] = (E[:, 0, 0] * hsel * u1[sel] - 1j * E[:, 0, 1] * u2[sel]) / rs
    return out


def radial_synthesis(model: CoefficientModel, geom: ZoneGeometry, n: int, data: RadialData, t, r_grid,
                     hier: DiagonalizationHierarchy | None = None, method: str | None = None) -> np.ndarray:
    """u(t, r) for radial band-limited data, shape (nt, nr).

    n = 1: u = (1/π) ∫ û(t,ρ) cos(ρr) dρ;  n = 3: u = (2π²)^{-1} ∫ û(t,ρ) sinc(ρr) ρ² dρ.
    """
    if n not in (1, 3):
        raise RatesError("radial synthesis supports n in {1, 3}")
    if not isinstance(data, RadialData) or data.c <= 0:
        raise RatesError("data must be a radial profile band-limited away from 0")
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    r_grid = np.asarray(r_grid, dtype=float)
    freq = float(t_arr.max() + np.abs(r_grid).max() + 1.0)
    nodes, weights = _fine_nodes(data.c, data.C, freq)
    if method is None:
        method = "interpolate" if np.all(t_arr >= t_xi(geom, data.c)) and t_arr.min() > 0 else "direct"
    if method == "direct" and np.all(t_arr == 0):
        uh = np.tile(data.a1 * data.bump(nodes) + 0j, (len(t_arr), 1))
    else:
        uh = spectral_solution(model, geom, data, t_arr, nodes, hier, method=method)
    if n == 1:
        kern = np.cos(np.outer(nodes, r_grid)) / np.pi
    else:
        kern = np.sinc(np.outer(nodes, r_grid) / np.pi) * (nodes ** 2)[:, None] / (2 * np.pi ** 2)
    return (uh * weights[None]) @ kern


def front_grid(t: float, half_width: float = 30.0, n_front: int = 601, n_bulk: int = 200) -> np.ndarray:
    """r samples: dense around the wave front r = t, coarse elsewhere."""
    front = np.linspace(max(0.0, t - half_width), t + half_width, n_front)
    bulk = np.linspace(0.0, t + half_width, n_bulk)
    return np.unique(np.concatenate([front, bulk]))


def sup_norm_curve(model, geom, n, data, t_grid, hier=None, half_width: float = 30.0) -> np.ndarray:
    t_grid = np.asarray(t_grid, dtype=float)
    out = []
    for t in t_grid:
        r = front_grid(t, half_width) if n == 3 else np.concatenate([-front_grid(t, half_width)[::-1],
                                                                      front_grid(t, half_width)])
        u = radial_synthesis(model, geom, n, data, [t], r, hier)[0]
        out.append(float(np.max(np.abs(u))))
    return np.array(out)


def required_smoothness(n: int) -> int:
    """ℓ_n = 2⌈n/2⌉ + 1, the smoothness needed for ⌈n/2⌉ diagonalization steps."""
    return 2 * math.ceil(n / 2) + 1


def dispersive_decay_experiment(model: CoefficientModel, geom: ZoneGeometry, n: int, t_grid,
                                data: RadialData | None = None, hier=None, window=None,
                                tol_exponent: float = 0.1) -> DecayReport:
    """sup_r |u(t, r)| for band-limited data against λ^{-1}(1+t)^{-(n-1)/2}.

    Also reports which branch the measured rate is closer to: the hyperbolic
    one above, or the dissipative-zone one (1+t)^{1-n}/λ²(t).
    """
    if n not in (1, 3):
        raise RatesError("dispersive experiment supports n in {1, 3}")
    if model.ell < required_smoothness(n):
        raise RatesError(f"n={n} needs ell >= {required_smoothness(n)}, model has ell={model.ell}")
    data = data or RadialData(0.5, 2.0)
    t_grid = np.asarray(t_grid, dtype=float)
    window = window or (float(t_grid.min()), float(t_grid.max()))
    hier = hier or default_hierarchy(model, math.ceil(n / 2) + 1)
    sup = sup_norm_curve(model, geom, n, data, t_grid, hier)
    pred = predicted_curve(model, DISPERSIVE, t_grid, n)
    diss = (1 + t_grid) ** (1 - n) / np.asarray(model.lam(t_grid), dtype=float) ** 2
    e, err = fit_decay_exponent(t_grid, sup, window)
    pe, _ = fit_decay_exponent(t_grid, pred, window)
    de, _ = fit_decay_exponent(t_grid, diss, window)
    branch = "hyperbolic" if abs(e - pe) <= abs(e - de) else "dissipative"
    ratio = sup / pred
    return DecayReport(DISPERSIVE, t_grid, sup, pred, tuple(window), e, err, pe,
                       (float(ratio.min()), float(ratio.max())), abs(e - pe) <= tol_exponent,
                       {"branch": branch, "dissipative_exponent": de, "n": n,
                        "p_star": (n + 3) / (2 * n + 2), "ell_required": required_smoothness(n)})
