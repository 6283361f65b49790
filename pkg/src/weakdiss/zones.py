"""Zone geometry of the extended phase space {(t, ξ)}.

The boundary curve (1 + t_ξ)|ξ| = N splits t >= 0 into the dissipative zone
0 <= t < t_ξ and the hyperbolic zone t >= t_ξ (boundary points are hyperbolic).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coeff import CoefficientModel

DISS = "diss"
HYP = "hyp"


class ZoneError(ValueError):
    pass


@dataclass(frozen=True)
class ZoneGeometry:
    N: float
    model: CoefficientModel = field(repr=False)
    k: int = 1
    margin: float = 0.0

    def t_xi(self, xi):
        return t_xi(self, xi)

    def zone(self, t, xi) -> str:
        return HYP if t >= self.t_xi(xi) else DISS

    def h(self, t, xi):
        """Micro-energy weight: N/(1+t) in Z_diss, |ξ| in Z_hyp."""
        t = np.asarray(t, dtype=float)
        tx = self.t_xi(xi)
        return np.where(t >= tx, xi, self.N / (1 + t))


def t_xi(geom: ZoneGeometry, xi):
    """Zone boundary max(N/|ξ| - 1, 0)."""
    xi = np.asarray(xi, dtype=float)
    if np.any(xi <= 0):
        raise ZoneError("t_xi needs |xi| > 0; xi = 0 never leaves the dissipative zone")
    out = np.maximum(geom.N / xi - 1.0, 0.0)
    return float(out) if out.ndim == 0 else out


def t_xi_derivative(N: float, xi, order: int):
    """Radial derivative d^order/d|ξ|^order of N/|ξ| - 1 (valid for |ξ| < N)."""
    xi = np.asarray(xi, dtype=float)
    if order == 0:
        return N / xi - 1.0
    sign = (-1) ** order
    fact = float(np.prod(np.arange(1, order + 1)))
    return sign * fact * N / xi ** (order + 1)


def in_hyp(geom: ZoneGeometry, t, xi):
    return np.asarray(t) >= t_xi(geom, xi)


def hyp_zone_samples(N: float, t_max: float = 1e6, n_t: int = 60, offsets=(1.0, 1.5, 3.0, 10.0),
                     xi_max: float = 1e2):
    """(t, |ξ|) sample pairs in Z_hyp(N), dense near the boundary where symbols peak.

    For each t on a log grid, |ξ| = c*N/(1+t) for each offset c >= 1, plus the
    high-frequency strip |ξ| >= N at small t.
    """
    ts = np.concatenate([[0.0], np.geomspace(1e-2, t_max, n_t)])
    pts = []
    for t in ts:
        for c in offsets:
            xi = c * N / (1 + t)
            if xi <= xi_max:
                pts.append((t, xi))
    for xi in np.geomspace(N, xi_max, 8):
        pts.append((0.0, xi))
    arr = np.array(pts)
    return arr[:, 0], arr[:, 1]


def choose_zone_constant(model: CoefficientModel, k: int = 1, safety: float = 0.5,
                         n_max_exp: int = 16, samples: dict | None = None) -> ZoneGeometry:
    """Smallest N in {2, 4, 8, ...} with sampled sup_{Z_hyp} ||N_k - I|| <= safety."""
    from .diag import build_hierarchy, diagonalizer_defect

    if k < 1 or not 0 < safety < 1:
        raise ZoneError("need k >= 1 and safety in (0, 1)")
    hier = build_hierarchy(model, k)
    samples = samples or {}
    for e in range(1, n_max_exp + 1):
        N = float(2 ** e)
        ts, xis = hyp_zone_samples(N, **samples)
        margin = float(np.max(diagonalizer_defect(hier, model, ts, xis)))
        if margin <= safety:
            return ZoneGeometry(N, model, k, margin)
    raise ZoneError(f"no zone constant up to 2^{n_max_exp} gives ||N_k - I|| <= {safety}")


def zones_from_config(model: CoefficientModel, spec: dict) -> ZoneGeometry:
    N = spec.get("N", "auto")
    k = int(spec.get("k", 2))
    safety = float(spec.get("safety", 0.5))
    if N == "auto":
        return choose_zone_constant(model, k, safety)
    return ZoneGeometry(float(N), model, k, 0.0)
