"""Modified scattering: the wave operator W_+(ξ) and its convergence.

W_+(ξ) = lim_{t→∞} λ(t) 𝔼_0(t, ξ)^{-1} 𝔼(t, ξ) is computed in closed form as

    W_+ = 𝔼_0(t_ξ)^{-1} M Q(∞, t_ξ) N_k^{-1}(t_ξ) M^{-1} λ(t_ξ) 𝔼(t_ξ),

with M = [[1, -1], [1, 1]] the change to diagonalizing variables.  Because
det 𝔼(t_ξ) = [ξ]/λ²(t_ξ) and det Q(∞, t_ξ) = det N_k(t_ξ), det W_+ = 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_legendre

from .coeff import CoefficientModel
from .diag import DiagonalizationHierarchy, eval_symbols
from .peano import M, M_INV, assemble_path, q_infinity
from .propagator import energy_from_fundamental, energy_symbol, energy_symbol_path, free_energy_symbol
from .zones import ZoneGeometry, t_xi


class ScatteringError(ValueError):
    pass


@dataclass
class ScatteringReport:
    xi: np.ndarray
    W: np.ndarray
    det_defect: np.ndarray
    horizons: np.ndarray = field(default_factory=lambda: np.empty(0))
    curves: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    slopes: np.ndarray = field(default_factory=lambda: np.empty(0))


def w_plus(hier: DiagonalizationHierarchy, model: CoefficientModel, geom: ZoneGeometry, xi: float,
           tol: float = 1e-10) -> np.ndarray:
    if xi <= 0:
        raise ScatteringError("W_+ needs xi != 0")
    tx = t_xi(geom, xi)
    Q = q_infinity(hier, model, geom, tx, xi, tol).value
    _, Ninv, _, _ = eval_symbols(hier, model, geom, np.array([tx]), xi)
    E0 = free_energy_symbol(tx, xi)
    # b = 0: the energy symbol is the free one in closed form
    En = E0 if model.tag == "zero" else energy_symbol(model, geom, tx, xi, tol=max(tol, 1e-12))
    return np.linalg.solve(E0, M @ Q @ Ninv[0] @ M_INV) * float(model.lam(tx)) @ En


def w_plus_sweep(hier, model, geom, xis, tol: float = 1e-10) -> ScatteringReport:
    xis = np.asarray(xis, dtype=float)
    W = np.array([w_plus(hier, model, geom, x, tol) for x in xis])
    return ScatteringReport(xis, W, np.abs(np.linalg.det(W) - 1.0))


def loglog_slope(x, y) -> float:
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def convergence_values(model, geom, W, xi: float, horizons, tol: float = 1e-11,
                       envelope: bool = False, n_phase: int = 17) -> np.ndarray:
    """||λ(t) 𝔼_0(t, ξ)^{-1} 𝔼(t, ξ) - W|| along ``horizons`` (oracle 𝔼).

    The distance oscillates with phase 2|ξ|t; ``envelope=True`` returns the
    max over one period [t, t + π/|ξ|] instead of the pointwise value.
    """
    horizons = np.asarray(horizons, dtype=float)
    offs = np.linspace(0.0, np.pi / xi, n_phase) if envelope else np.zeros(1)
    ts = (horizons[:, None] + offs[None]).ravel()
    order = np.argsort(ts)
    En = np.empty((len(ts), 2, 2), dtype=complex)
    En[order] = energy_symbol_path(model, geom, xi, ts[order], tol)
    E0 = free_energy_symbol(ts, xi)
    lam = np.asarray(model.lam(ts), dtype=float)
    diff = lam[:, None, None] * np.linalg.solve(E0, En) - W
    vals = np.linalg.norm(diff, 2, axis=(-2, -1)).reshape(len(horizons), len(offs))
    return vals.max(axis=1)


def scattering_convergence(hier, model, geom, xi: float, horizons, tol: float = 1e-10,
                           envelope: bool = True):
    """(values, fitted log-log slope) of the convergence curve towards W_+."""
    horizons = np.asarray(horizons, dtype=float)
    if np.any(np.diff(horizons) <= 0) or np.any(horizons <= t_xi(geom, xi)):
        raise ScatteringError("horizons must increase and lie beyond t_xi")
    W = w_plus(hier, model, geom, xi, tol)
    vals = convergence_values(model, geom, W, xi, horizons, envelope=envelope)
    slope = loglog_slope(horizons, vals) if np.all(vals > 0) else float("nan")
    return vals, slope


def argsup_xi(model, geom, Ws, xis, t: float) -> float:
    """ξ on the grid maximizing the distance to W_+ at time t."""
    vals = [convergence_values(model, geom, W, x, [t])[0] for W, x in zip(Ws, xis)]
    return float(xis[int(np.argmax(vals))])


# ------------------------------------------------------------- data level

@dataclass(frozen=True)
class AnnulusData:
    """Radial datum V(ξ) = (<ξ>û_1, û_2) supported in c <= |ξ| <= C.

    Both components carry the smooth bump exp(-1/((ρ-c)(C-ρ))) scaled by
    ``amplitudes``.
    """

    c: float
    C: float
    amplitudes: tuple = (1.0, 0.5)

    def __post_init__(self):
        if not 0 < self.c < self.C:
            raise ScatteringError("data must be band-limited away from 0: need 0 < c < C")

    def profile(self, rho):
        rho = np.asarray(rho, dtype=float)
        inside = (rho > self.c) & (rho < self.C)
        out = np.zeros_like(rho)
        r = rho[inside]
        out[inside] = np.exp(-1.0 / ((r - self.c) * (self.C - r)) + 4.0 / (self.C - self.c) ** 2)
        return out

    def vector(self, rho):
        p = self.profile(rho)
        return np.stack([self.amplitudes[0] * p, self.amplitudes[1] * p + 0j], axis=-1)


def sphere_area(n: int) -> float:
    return {1: 2.0, 2: 2 * np.pi, 3: 4 * np.pi}[n]


def radial_nodes(c: float, C: float, m: int = 48):
    x, w = roots_legendre(m)
    return c + (C - c) * (x + 1) / 2, (C - c) * w / 2


def asymptotic_equivalence(model: CoefficientModel, geom: ZoneGeometry, data: AnnulusData, t_list,
                           hier: DiagonalizationHierarchy | None = None, n: int = 3, m: int = 48,
                           tol: float = 1e-10, method: str = "assembled") -> dict:
    """L² distance between the free evolution of W_+V and λ(t)𝔼(t, D)V.

    Returns a dict with the curve, the free norm and the inversion residual
    of W_+ on the datum.  𝔼(t, ξ) on the radial nodes comes from the
    assembled two-zone propagator (``method="assembled"``) or the oracle.
    """
    from .diag import build_hierarchy

    if not isinstance(data, AnnulusData):
        raise ScatteringError("data must be an AnnulusData profile")
    hier = hier or build_hierarchy(model, max(geom.k, 1))
    t_list = np.asarray(t_list, dtype=float)
    rho, w = radial_nodes(data.c, data.C, m)
    V = data.vector(rho)
    Ws = np.array([w_plus(hier, model, geom, r, tol) for r in rho])
    Vt = np.einsum("mij,mj->mi", Ws, V)
    back = np.linalg.solve(Ws, Vt[..., None])[..., 0]
    inv_resid = float(np.max(np.abs(back - V)) / np.max(np.abs(V)))
    weight = w * rho ** (n - 1) * sphere_area(n)
    lam = np.asarray(model.lam(t_list), dtype=float)
    curve = np.zeros(len(t_list))
    free = np.zeros(len(t_list))
    for i, r in enumerate(rho):
        if method == "assembled":
            En = energy_from_fundamental(geom, t_list, r, assemble_path(hier, model, geom, 0.0, r, t_list))
        else:
            En = energy_symbol_path(model, geom, r, t_list, 1e-11)
        E0 = free_energy_symbol(t_list, r)
        fv = E0 @ Vt[i]
        dv = fv - lam[:, None] * (En @ V[i])
        curve += weight[i] * np.sum(np.abs(dv) ** 2, axis=-1)
        free += weight[i] * np.sum(np.abs(fv) ** 2, axis=-1)
    return {"t": t_list, "curve": np.sqrt(curve), "free_norm": np.sqrt(free), "inverse_residual": inv_resid,
            "W": Ws, "rho": rho}
