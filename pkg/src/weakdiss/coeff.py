"""Coefficient families b(t) for the damped wave equation u_tt - Δu + b(t)u_t = 0.

Every built-in family carries closed-form derivatives b^(k) (generated once with
sympy and lambdified to numpy), a closed-form primitive B(t) = ∫_0^t b and the
auxiliary weight lambda(t) = exp(B(t)/2), normalized so that lambda(0) = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
import sympy as sp
from scipy import integrate
from scipy.interpolate import CubicSpline

FAMILIES = ("zero", "scale_invariant", "iterated_log", "oscillating", "tabulated")

# log-spaced tail used for the limsup of t*b(t)
TAIL_GRID = (1e2, 1e6)


class CoefficientError(ValueError):
    pass


def iterated_exp(n: int) -> float:
    """e^[n]: e^[0] = 1, e^[k+1] = exp(e^[k])."""
    v = 1.0
    for _ in range(n):
        v = math.exp(v)
    return v


@dataclass(frozen=True)
class CoefficientModel:
    """Immutable evaluator bundle for one coefficient function b(t).

    Parameters
    ----------
    tag : str
        Family name, one of ``FAMILIES``.
    params : dict
        Family parameters (``mu``, ``n``, ``alpha``, or ``t``/``b`` samples).
    ell : int
        Highest derivative order available through :meth:`b`.
    """

    tag: str
    params: dict
    ell: int
    _derivs: tuple = field(repr=False, compare=False)
    _primitive: Callable = field(repr=False, compare=False)

    def b(self, t, k: int = 0):
        if not 0 <= k <= self.ell:
            raise CoefficientError(f"derivative order {k} outside 0..{self.ell} for {self.tag}")
        t = np.asarray(t, dtype=float)
        out = self._derivs[k](t)
        return np.broadcast_to(out, t.shape).astype(float) if np.ndim(out) < t.ndim else out

    def primitive(self, t):
        return self._primitive(np.asarray(t, dtype=float))

    def lam(self, t):
        return np.exp(0.5 * self.primitive(t))

    def lam2(self, t):
        return np.exp(self.primitive(t))

    def __hash__(self):
        return hash((self.tag, tuple(sorted((k, _hashable(v)) for k, v in self.params.items())), self.ell))


def _hashable(v):
    if isinstance(v, np.ndarray):
        return v.tobytes()
    if isinstance(v, (list, tuple)):
        return tuple(v)
    return v


_T = sp.Symbol("t", nonnegative=True)


@lru_cache(maxsize=64)
def _symbolic_derivatives(tag: str, key: tuple, ell: int):
    p = dict(key)
    if tag == "scale_invariant":
        expr = p["mu"] / (1 + _T)
    elif tag == "iterated_log":
        n = p["n"]
        shift = sp.Float(iterated_exp(n), 30) if n > 1 else (sp.E if n == 1 else sp.Integer(1))
        arg = shift + _T
        denom = sp.Integer(1)
        for _ in range(n + 1):  # factors log^[0], ..., log^[n]
            denom = denom * arg
            arg = sp.log(arg)
        expr = p["mu"] / denom
    elif tag == "oscillating":
        expr = (2 + sp.cos(p["alpha"] * sp.log(sp.E + _T))) / (4 * (sp.E + _T))
    else:  # pragma: no cover - guarded by make_family
        raise CoefficientError(tag)
    fns = []
    d = expr
    for _ in range(ell + 1):
        fns.append(sp.lambdify(_T, d, modules="numpy"))
        d = sp.diff(d, _T)
    return tuple(fns)


def _closed_primitive(tag: str, p: dict) -> Callable:
    if tag == "zero":
        return lambda t: np.zeros_like(t)
    if tag == "scale_invariant":
        mu = p["mu"]
        return lambda t: mu * np.log1p(t)
    if tag == "iterated_log":
        mu, n = p["mu"], p["n"]
        shift = iterated_exp(n)

        def prim(t):
            arg = shift + t
            for _ in range(n):
                arg = np.log(arg)
            return mu * np.log(arg)

        return prim
    if tag == "oscillating":
        alpha = p["alpha"]

        def prim(t):
            L = np.log(math.e + t)
            if alpha == 0:
                return 0.75 * (L - 1.0)
            return 0.5 * (L - 1.0) + (np.sin(alpha * L) - math.sin(alpha)) / (4 * alpha)

        return prim
    raise CoefficientError(tag)


def make_family(tag: str, params: dict | None = None, ell: int = 6) -> CoefficientModel:
    """Build a coefficient model.

    Built-in tags: ``zero``, ``scale_invariant`` (``mu`` in [0, 1)),
    ``iterated_log`` (``mu > 0``, integer ``n >= 1``), ``oscillating``
    (real ``alpha``) and ``tabulated`` (samples ``t``, ``b``; cubic spline,
    only ``ell <= 1``).
    """
    params = dict(params or {})
    if tag not in FAMILIES:
        raise CoefficientError(f"unknown family {tag!r}; expected one of {FAMILIES}")
    if ell < 1:
        raise CoefficientError("ell must be >= 1")

    if tag == "zero":
        zero = lambda t: np.zeros_like(np.asarray(t, dtype=float))
        return CoefficientModel(tag, {}, ell, tuple([zero] * (ell + 1)), _closed_primitive(tag, {}))

    if tag == "scale_invariant":
        mu = float(params.get("mu", 0.5))
        if not 0.0 <= mu < 1.0:
            raise CoefficientError(f"scale_invariant needs mu in [0, 1), got {mu} (limsup t*b(t) = mu)")
        p = {"mu": mu}
    elif tag == "iterated_log":
        mu, n = float(params.get("mu", 1.0)), int(params.get("n", 1))
        if mu <= 0 or n < 1:
            raise CoefficientError("iterated_log needs mu > 0 and n >= 1")
        p = {"mu": mu, "n": n}
    elif tag == "oscillating":
        p = {"alpha": float(params.get("alpha", 10.0))}
    else:
        return _tabulated(params, ell)

    derivs = _symbolic_derivatives(tag, tuple(sorted(p.items())), ell)
    return CoefficientModel(tag, p, ell, derivs, _closed_primitive(tag, p))


def _tabulated(params: dict, ell: int) -> CoefficientModel:
    if ell > 1:
        raise CoefficientError("tabulated coefficients only support ell <= 1 (spline smoothness)")
    ts = np.asarray(params["t"], dtype=float)
    bs = np.asarray(params["b"], dtype=float)
    if ts[0] != 0.0 or np.any(np.diff(ts) <= 0):
        raise CoefficientError("tabulated samples need increasing t starting at 0")
    spline = CubicSpline(ts, bs, extrapolate=True)
    anti = spline.antiderivative()
    t_end = ts[-1]
    # beyond the table: b continues as b(T)(1+T)/(1+t), matching value at T
    c_tail = float(bs[-1] * (1 + t_end))

    def b0(t):
        t = np.asarray(t, dtype=float)
        return np.where(t <= t_end, spline(np.minimum(t, t_end)), c_tail / (1 + t))

    def b1(t):
        t = np.asarray(t, dtype=float)
        return np.where(t <= t_end, spline(np.minimum(t, t_end), 1), -c_tail / (1 + t) ** 2)

    def prim(t):
        t = np.asarray(t, dtype=float)
        inner = anti(np.minimum(t, t_end))
        tail = c_tail * (np.log1p(np.maximum(t, t_end)) - math.log1p(t_end))
        return inner + tail

    p = {"t": ts, "b": bs}
    return CoefficientModel("tabulated", p, ell, (b0, b1), prim)


def eval_b(model: CoefficientModel, t, k: int = 0):
    """k-th derivative of b at t (vectorized over t)."""
    if np.any(np.asarray(t) < 0):
        raise CoefficientError("t must be >= 0")
    return model.b(t, k)


def lambda_aux(model: CoefficientModel, t):
    """lambda(t) = exp(½ ∫_0^t b)."""
    if np.any(np.asarray(t) < 0):
        raise CoefficientError("t must be >= 0")
    return model.lam(t)


def primitive_by_quadrature(model: CoefficientModel, t: float, epsabs: float = 1e-10) -> float:
    """Adaptive Gauss-Kronrod value of ∫_0^t b, independent of the closed form."""
    edges = np.concatenate([[0.0], np.geomspace(1.0, max(t, 1.0), 16)]) if t > 1 else np.array([0.0, t])
    edges = edges[edges <= t]
    if edges[-1] < t:
        edges = np.append(edges, t)
    total = 0.0
    for a, c in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(lambda s: float(model.b(s)), a, c, epsabs=epsabs, epsrel=1e-12, limit=200)
        total += val
    return total


@dataclass
class AssumptionReport:
    C_hat: dict
    C_hat_refined: dict
    c_limsup: float
    t_grid: np.ndarray
    rho: np.ndarray
    lambda_growth: float
    min_b: float
    verdicts: dict


def rho_curve(model: CoefficientModel, t_grid: Sequence[float]) -> np.ndarray:
    """ρ(t) = ∫_0^t λ^{-2} dτ / (t λ^{-2}(t)) via piecewise adaptive quadrature."""
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(t_grid <= 0) or np.any(np.diff(t_grid) <= 0):
        raise CoefficientError("rho grid must be positive and increasing")
    inv = lambda s: float(np.exp(-model.primitive(s)))
    edges = np.concatenate([[0.0], t_grid])
    cum = 0.0
    out = np.empty_like(t_grid)
    for i, (a, c) in enumerate(zip(edges[:-1], edges[1:])):
        # split long panels geometrically so quad sees a smooth integrand
        sub = np.geomspace(max(a, 1e-12) + 1.0, c + 1.0, 8) - 1.0 if c > 10 * (a + 1) else np.array([a, c])
        sub[0], sub[-1] = a, c
        for lo, hi in zip(sub[:-1], sub[1:]):
            val, _ = integrate.quad(inv, lo, hi, epsabs=0.0, epsrel=1e-11, limit=200)
            cum += val
        out[i] = cum / (c * np.exp(-model.primitive(c)))
    return out


def _symbol_constants(model, grid, ell):
    return {k: float(np.max((1 + grid) ** (1 + k) * np.abs(model.b(grid, k)))) for k in range(ell + 1)}


def check_assumptions(model: CoefficientModel, time_grid=None, ell: int | None = None,
                      n_samples: int = 2000) -> AssumptionReport:
    """Empirical check of (A1), (A2)_ell, (A3) and the two-sided ρ bound."""
    ell = model.ell if ell is None else ell
    if ell > model.ell:
        raise CoefficientError(f"requested ell={ell} exceeds model smoothness {model.ell}")
    if time_grid is None:
        time_grid = np.concatenate([[0.0], np.geomspace(1e-3, 1e6, n_samples)])
    grid = np.asarray(time_grid, dtype=float)
    t_max = grid[-1]
    if t_max < 1e4:
        raise CoefficientError("time grid must reach at least 1e4")
    fine = np.concatenate([[0.0], np.geomspace(max(grid[grid > 0][0], 1e-6), t_max, 2 * len(grid))])

    C_hat = _symbol_constants(model, grid, ell)
    C_fine = _symbol_constants(model, fine, ell)
    tail = np.geomspace(*TAIL_GRID, 400)
    c_limsup = float(np.max(tail * model.b(tail)))
    min_b = float(np.min(model.b(fine)))

    rho_grid = grid[grid >= 1.0]
    rho = rho_curve(model, rho_grid)
    growth = float(np.max(model.lam2(fine) / (1 + fine)))

    stable = all(
        (C_hat[k] == 0 and C_fine[k] == 0) or abs(C_fine[k] - C_hat[k]) <= 0.05 * max(C_hat[k], C_fine[k])
        for k in C_hat
    )
    in_tail = rho_grid >= TAIL_GRID[0]
    tail_t, tail_rho = rho_grid[in_tail], rho[in_tail]
    # finite-t upper bound from integration by parts: with ĉ >= tb on [t0, t],
    # ρ(t) <= (1 + H/(t λ^{-2}(t))) / (1 - ĉ), H = ∫_0^{t0} τbλ^{-2} = t0 λ^{-2}(t0)(ρ(t0) - 1).
    # The history term H decays slowly (like 1/log t for iterated logs), so the
    # plain 1/(1 - ĉ) band only holds in the limit; it is reported separately.
    t0 = TAIL_GRID[0]
    H = t0 * np.exp(-model.primitive(t0)) * (float(rho_curve(model, [t0])[0]) - 1.0)
    upper = (1 + H / (tail_t * np.exp(-np.asarray(model.primitive(tail_t), dtype=float)))) / (1 - c_limsup) \
        if c_limsup < 1 else np.full_like(tail_t, np.inf)
    lower_ok = bool(np.all(rho >= 1 - 1e-3))
    rho_ok = lower_ok and c_limsup < 1 and bool(np.all(tail_rho <= upper + 1e-2))
    band_ok = lower_ok and c_limsup < 1 and bool(np.all(tail_rho <= 1 / (1 - c_limsup) + 1e-2))
    verdicts = {
        "A1": min_b >= 0,
        f"A2_{ell}": bool(stable and all(np.isfinite(v) for v in C_hat.values())),
        "A3": c_limsup < 1,
        "rho_bounds": rho_ok,
        "rho_tail_band": band_ok,
    }
    return AssumptionReport(C_hat, C_fine, c_limsup, rho_grid, rho, growth, min_b, verdicts)


def family_from_config(spec: dict) -> CoefficientModel:
    spec = dict(spec)
    tag = spec.pop("family")
    ell = int(spec.pop("ell", 6))
    return make_family(tag, spec, ell)
