"""Hyperbolic-zone propagator after k diagonalization steps.

With E_0(t, s) = diag(e^{i(t-s)|ξ|}, e^{-i(t-s)|ξ|}) and the conjugated
remainder

    script_R(t, s) = F_{k-1}(t) + E_0(s, t) R_k(t) E_0(t, s) - F^(0)(t),

the amplitude Q solves D_t Q = script_R Q, Q(s, s) = I.  Going back to the
micro-energy variables,

    E(t, s) = (λ(s)/λ(t)) M N_k(t) E_0(t, s) Q(t, s) N_k^{-1}(s) M^{-1},  s >= t_ξ,

with M = [[1, -1], [1, 1]].  Paths starting in the dissipative zone are glued
at t_ξ with the Volterra solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.integrate import solve_ivp

from .coeff import CoefficientModel
from .diag import DiagonalizationHierarchy, HierarchyError, eval_symbols, inv2
from .propagator import Mat2, OracleError
from .volterra import gauss_panel, solve_diss_zone, solve_diss_zone_path
from .zones import ZoneGeometry, t_xi

M = np.array([[1.0, -1.0], [1.0, 1.0]], dtype=complex)
M_INV = 0.5 * np.array([[1.0, 1.0], [-1.0, 1.0]], dtype=complex)


class PeanoError(RuntimeError):
    pass


class BackendMismatch(PeanoError):
    pass


@dataclass
class QMatrix:
    value: Mat2
    t: float  # math.inf for the limit
    s: float
    xi: float
    backend: str
    meta: dict = field(default_factory=dict)
    inverse: Mat2 | None = None


def e0_phase(t, s, xi) -> Mat2:
    """diag(e^{i(t-s)|ξ|}, e^{-i(t-s)|ξ|}), batched over t."""
    ph = (np.asarray(t, dtype=float) - s) * xi
    out = np.zeros(np.shape(ph) + (2, 2), dtype=complex)
    out[..., 0, 0] = np.exp(1j * ph)
    out[..., 1, 1] = np.exp(-1j * ph)
    return out


def _zone_check(geom, xi, *times):
    tx = t_xi(geom, xi)
    for v in times:
        if np.any(np.asarray(v) < tx - 1e-12 * (1 + tx)):
            raise HierarchyError(f"time {v} lies in the dissipative zone (t_xi = {tx})")
    return tx


def _conjugate(Rk, t, s, xi):
    ph = np.exp(-2j * (np.asarray(t, dtype=float) - s) * xi)
    out = np.array(Rk, copy=True)
    out[..., 0, 1] *= ph
    out[..., 1, 0] *= np.conj(ph)
    return out


def script_R(hier: DiagonalizationHierarchy, model: CoefficientModel, geom: ZoneGeometry, t, s: float,
             xi: float) -> Mat2:
    """F_{k-1} + E_0(s,t) R_k E_0(t,s) - F^(0), batched over t."""
    _zone_check(geom, xi, t, s)
    _, _, F, Rk = eval_symbols(hier, model, geom, t, xi)
    b = np.asarray(model.b(np.asarray(t, dtype=float)), dtype=float)
    F = F.copy()
    F[..., 0, 0] -= 0.5j * b
    F[..., 1, 1] -= 0.5j * b
    return F + _conjugate(Rk, t, s, xi)


class _ScalarSymbols:
    """Generated scalar evaluator of (N_k, diag F_{k-1} - F^(0), R_k) at fixed ξ."""

    def __init__(self, hier: DiagonalizationHierarchy, model: CoefficientModel, xi: float):
        self.model = model
        self.xi = xi
        mats = [hier.Nk, hier.F_km1 - hier.F[0], hier.Bk]
        exprs = [e.to_python() for m in mats for e in m.entries()]
        self.L = max(m.max_generator() for m in mats) + 1
        gnames = "".join(f"g{m}, " for m in range(self.L))
        src = f"def _f({gnames}u, xi):\n    return ({', '.join(exprs)},)\n"
        ns: dict = {}
        exec(compile(src, "<symbols>", "exec"), ns)
        self._f = ns["_f"]
        self._u = 1.0 / xi

    def __call__(self, t: float):
        g = [float(self.model.b(t, m)) for m in range(self.L)]
        v = self._f(*g, self._u, self.xi)
        n11, n12, n21, n22, f11, _, _, f22, b11, b12, b21, b22 = v
        det = n11 * n22 - n12 * n21
        i11, i12, i21, i22 = n22 / det, -n12 / det, -n21 / det, n11 / det
        r = (i11 * b11 + i12 * b21, i11 * b12 + i12 * b22, i21 * b11 + i22 * b21, i21 * b12 + i22 * b22)
        return f11, f22, r

    def script(self, t: float, s: float):
        f11, f22, (r11, r12, r21, r22) = self(t)
        ph = (t - s) * self.xi * 2.0
        e = complex(math.cos(ph), -math.sin(ph))
        return f11 + r11, r12 * e, r21 * e.conjugate(), f22 + r22

    def diag_part(self, t: float):
        f11, f22, r = self(t)
        return f11 + r[0], f22 + r[3]

    def offdiag_norm(self, t: float) -> float:
        _, _, r = self(t)
        return max(abs(r[1]), abs(r[2]))


def _q_rhs(sym: _ScalarSymbols, s: float, with_inverse: bool):
    def f(t, y):
        a11, a12, a21, a22 = sym.script(t, s)
        q11, q12, q21, q22 = y[:4]
        out = [1j * (a11 * q11 + a12 * q21), 1j * (a11 * q12 + a12 * q22),
               1j * (a21 * q11 + a22 * q21), 1j * (a21 * q12 + a22 * q22)]
        if with_inverse:
            # P = Q^{-T} solves ∂_t P = -i script_R^T P
            p11, p12, p21, p22 = y[4:]
            out += [-1j * (a11 * p11 + a21 * p21), -1j * (a11 * p12 + a21 * p22),
                    -1j * (a12 * p11 + a22 * p21), -1j * (a12 * p12 + a22 * p22)]
        return np.array(out)

    return f


def _ode_path(sym, s, t_eval, tol, y0=None, t0=None, with_inverse=False):
    t0 = s if t0 is None else t0
    y0 = (np.concatenate([np.eye(2).ravel()] * (2 if with_inverse else 1)).astype(complex)
          if y0 is None else y0)
    t_eval = np.asarray(t_eval, dtype=float)
    t1 = float(t_eval.max())
    if t1 <= t0:
        return np.tile(y0, (len(t_eval), 1))
    sol = solve_ivp(_q_rhs(sym, s, with_inverse), (t0, t1), y0, method="DOP853", t_eval=t_eval,
                    rtol=tol, atol=tol * 1e-3)
    if sol.status != 0:
        raise PeanoError(sol.message)
    return sol.y.T


# ------------------------------------------------------------- series backend

def _panel_edges(s: float, t: float, xi: float, marks=(), osc: bool = True) -> np.ndarray:
    edges = [s]
    marks = sorted(m for m in marks if s < m < t)
    a = s
    width_osc = math.pi / xi if osc else math.inf
    for stop in marks + [t]:
        while a < stop:
            b = min(stop, a + min(0.5 * (1 + a), width_osc))
            if stop - b < 1e-9 * (1 + stop):
                b = stop
            edges.append(b)
            a = b
    return np.array(edges)


def _cumulative_series(R_nodes, edges, m, tol, max_depth=80):
    """Peano-Baker partial sums at panel edges for ∂_t Q = i R Q.

    R_nodes has shape (P, m, 2, 2) on Gauss nodes of the P panels.
    Returns (Q at edges, list of terms at the last edge, depth, integral of ||R||).
    """
    _, w, S = gauss_panel(m)
    h = np.diff(edges)
    W = h[:, None] * w[None, :] / 2
    Sh = h[:, None, None] * S[None] / 2
    P = len(h)
    norm_int = float(np.sum(W * np.linalg.norm(R_nodes, 2, axis=(-2, -1))))
    term = np.broadcast_to(np.eye(2, dtype=complex), (P, m, 2, 2)).copy()
    total_edges = np.broadcast_to(np.eye(2, dtype=complex), (P + 1, 2, 2)).copy()
    terms_end = [np.eye(2, dtype=complex)]
    j = 0
    bound = 1.0
    while True:
        j += 1
        g = 1j * R_nodes @ term
        panel_tot = np.einsum("pm,pmij->pij", W, g)
        prefix = np.concatenate([np.zeros((1, 2, 2), complex), np.cumsum(panel_tot, axis=0)])
        term = prefix[:-1, None] + np.einsum("pab,pbij->paij", Sh, g)
        total_edges += prefix
        terms_end.append(prefix[-1])
        bound *= norm_int / j
        if bound <= tol * 1e-2 or j >= max_depth:
            break
    return total_edges, terms_end, j, norm_int


def _series_nodes(hier, model, geom, s, xi, edges, m):
    x, _, _ = gauss_panel(m)
    a, b = edges[:-1], edges[1:]
    nodes = a[:, None] + (b - a)[:, None] * (x[None] + 1) / 2
    R = script_R(hier, model, geom, nodes.ravel(), s, xi).reshape(nodes.shape + (2, 2))
    return nodes, R


def series_path(hier, model, geom, s: float, xi: float, t_eval, tol: float = 1e-10, m: int = 16):
    t_eval = np.atleast_1d(np.asarray(t_eval, dtype=float))
    edges = _panel_edges(s, float(t_eval.max()), xi, marks=t_eval)
    if len(edges) == 1:
        return np.tile(np.eye(2, dtype=complex), (len(t_eval), 1, 1)), {"depth": 0}
    _, R = _series_nodes(hier, model, geom, s, xi, edges, m)
    Qe, _, depth, I = _cumulative_series(R, edges, m, tol)
    idx = np.searchsorted(edges, t_eval)
    idx = np.minimum(idx, len(edges) - 1)
    return Qe[idx], {"depth": depth, "norm_integral": I, "panels": len(edges) - 1}


def iterated_integral(r, s: float, t: float, depth: int, m: int = 16) -> list:
    """∫_{s<τ_j<...<τ_1<t} r(τ_1)...r(τ_j) dτ for j = 1..depth (scalar or matrix r).

    Products are time ordered (latest time on the left).  For r ≡ 1 the j-th
    value is (t - s)^j / j!.
    """
    edges = _panel_edges(s, t, 1.0, osc=False)
    x, w, S = gauss_panel(m)
    a, b = edges[:-1], edges[1:]
    nodes = a[:, None] + (b - a)[:, None] * (x[None] + 1) / 2
    vals = np.array([[np.asarray(r(tau), dtype=complex) for tau in row] for row in nodes])
    scalar = vals.ndim == 2
    if scalar:
        vals = vals[..., None, None]
    h = np.diff(edges)
    W = h[:, None] * w[None, :] / 2
    Sh = h[:, None, None] * S[None] / 2
    d = vals.shape[-1]
    term = np.broadcast_to(np.eye(d, dtype=complex), vals.shape).copy()
    out = []
    for _ in range(depth):
        g = vals @ term
        tot = np.einsum("pm,pmij->pij", W, g)
        prefix = np.concatenate([np.zeros((1, d, d), complex), np.cumsum(tot, axis=0)])
        term = prefix[:-1, None] + np.einsum("pab,pbij->paij", Sh, g)
        v = prefix[-1]
        out.append(v[0, 0] if scalar else v)
    return out


# ------------------------------------------------------------------ public API

def q_path(hier, model, geom, s: float, xi: float, t_eval, backend: str = "ode", tol: float = 1e-10):
    """Q(t, s, ξ) for t in ``t_eval`` (shape (n, 2, 2))."""
    _zone_check(geom, xi, s)
    t_eval = np.atleast_1d(np.asarray(t_eval, dtype=float))
    if np.any(t_eval < s):
        raise PeanoError("need t >= s")
    if backend == "ode":
        sym = _ScalarSymbols(hier, model, xi)
        return _ode_path(sym, s, t_eval, tol)[:, :4].reshape(-1, 2, 2)
    if backend == "series":
        return series_path(hier, model, geom, s, xi, t_eval, tol)[0]
    raise ValueError(f"unknown backend {backend!r}")


def q_matrix(hier, model, geom, t: float, s: float, xi: float, backend: str = "ode",
             tol: float = 1e-10, cross_check: bool = False) -> QMatrix:
    _zone_check(geom, xi, s)
    if t < s:
        raise PeanoError("need t >= s")
    meta: dict = {"tol": tol}
    if backend == "series":
        val, info = series_path(hier, model, geom, s, xi, [t], tol)
        meta.update(info)
        val = val[0]
    else:
        val = q_path(hier, model, geom, s, xi, [t], backend, tol)[0]
    if cross_check:
        other = "series" if backend == "ode" else "ode"
        alt = q_path(hier, model, geom, s, xi, [t], other, tol)[0]
        diff = float(np.max(np.abs(alt - val)))
        meta["backend_diff"] = diff
        if diff > 10 * tol * max(1.0, float(np.max(np.abs(val)))):
            raise BackendMismatch(f"ode/series disagree by {diff:.3e} at t={t}, xi={xi}")
    return QMatrix(val, float(t), float(s), float(xi), backend, meta)


def _diag_tail(sym: _ScalarSymbols, T: float) -> tuple[complex, complex]:
    """∫_T^∞ of the diagonal entries of script_R, via v = 1/(1+τ)."""
    vmax = 1.0 / (1.0 + T)

    def part(idx, comp):
        def f(v):
            val = sym.diag_part(1.0 / v - 1.0)[idx]
            return (val.real if comp == 0 else val.imag) / (v * v)
        return integrate.quad(f, 0.0, vmax, epsabs=1e-16, epsrel=1e-12, limit=200)[0]

    return tuple(complex(part(i, 0), part(i, 1)) for i in (0, 1))


def tail_constant(sym: _ScalarSymbols, k: int, s: float, T: float, n: int = 64) -> float:
    """Sampled C with ||offdiag R_k(τ)|| <= C |ξ|^{-k} (1+τ)^{-k-1} on [s, 64T]."""
    taus = s + np.geomspace(1e-3, 64 * T - s + 1e-3, n) - 1e-3
    vals = [sym.offdiag_norm(tau) * sym.xi ** k * (1 + tau) ** (k + 1) for tau in taus]
    return 2.0 * max(vals)


def tail_bound(sym: _ScalarSymbols, k: int, s: float, T: float) -> float:
    """Bound on ||Q(∞) - exp(i∫_T^∞ diag script_R) Q(T)||.

    The off-diagonal remainder oscillates like e^{±2i|ξ|τ}; one integration by
    parts bounds the first Peano-Baker term by (|r(T)| + ∫_T^∞|r'|)/ω with
    ω = 2|ξ| - sup|Δ diag|.  Higher terms are bounded by ε²e^ε/2, where
    ε = C|ξ|^{-k}(1+T)^{-k}/k is the plain (non-oscillatory) tail integral.
    """
    xi = sym.xi
    C = tail_constant(sym, k, s, T)
    eps = C / (k * xi ** k * (1 + T) ** k)
    taus = T * np.geomspace(1.0, 64.0, 24)
    r_sup = max(sym.offdiag_norm(tau) for tau in taus)
    # derivative constant of the off-diagonal entries, by central differences
    dr = []
    for tau in taus:
        h = 1e-4 * (1 + tau)
        _, _, rp = sym(tau + h)
        _, _, rm = sym(tau - h)
        d = max(abs(rp[1] - rm[1]), abs(rp[2] - rm[2])) / (2 * h)
        dr.append(d * xi ** k * (1 + tau) ** (k + 2))
    Cp = 2.0 * max(dr)
    gap = max(abs(a - b) for a, b in (sym.diag_part(tau) for tau in taus))
    omega = 2 * xi - gap
    second = 0.5 * eps ** 2 * np.exp(eps)
    if omega <= xi:
        return eps
    first = 2.0 * (r_sup + Cp / ((k + 1) * xi ** k * (1 + T) ** (k + 1))) / omega
    return float(min(eps, first + second))


def q_infinity(hier, model, geom, s: float, xi: float, tol: float = 1e-10, T_max: float = 1e8,
               ode_tol: float | None = None) -> QMatrix:
    """Q(∞, s, ξ) by horizon doubling, together with Q^{-1}(∞, s, ξ).

    At each horizon T the value is corrected by the exact diagonal tail
    exp(i ∫_T^∞ diag script_R); the remaining error is bounded by the
    off-diagonal tail.  Both that bound and the
    Cauchy difference of successive horizons must fall below ``tol``; see
    :func:`tail_bound`.
    """
    _zone_check(geom, xi, s)
    k = hier.k
    sym = _ScalarSymbols(hier, model, xi)
    ode_tol = ode_tol or min(1e-10, tol * 1e-2)
    ode_tol = max(ode_tol, 1e-13)
    T = max(s + 8.0, 2.0 * (1.0 + s))
    y = np.concatenate([np.eye(2).ravel()] * 2).astype(complex)
    t_cur = s
    prev = None
    history = []
    while True:
        y = _ode_path(sym, s, [T], ode_tol, y0=y, t0=t_cur, with_inverse=True)[-1]
        t_cur = T
        d1, d2 = _diag_tail(sym, T)
        ph = np.array([np.exp(1j * d1), np.exp(1j * d2)])
        Q = ph[:, None] * y[:4].reshape(2, 2)
        P = (1 / ph)[:, None] * y[4:].reshape(2, 2)  # Q^{-T}
        tail = tail_bound(sym, k, s, T)
        diff = np.inf if prev is None else float(np.linalg.norm(Q - prev, 2))
        history.append((T, diff, tail))
        if diff <= tol and tail <= tol:
            break
        if T >= T_max:
            raise PeanoError(f"Q(inf) not converged before T = {T_max:g} (check (A2)/(A3)); "
                             f"last Cauchy difference {diff:.3e}, tail bound {tail:.3e}")
        prev = Q
        T *= 2.0
    Qinv = P.T
    resid = float(np.max(np.abs(Q @ Qinv - np.eye(2))))
    if resid > max(1e-8, 100 * tol):
        raise PeanoError(f"Q Q^-1 deviates from I by {resid:.3e}")
    return QMatrix(Q, math.inf, float(s), float(xi), "ode",
                   {"history": history, "horizon": T, "tail_bound": tail, "inverse_residual": resid,
                    "tol": tol}, inverse=Qinv)


def q_cauchy_profile(hier, model, geom, s: float, xi: float, horizons, tol: float = 1e-12):
    """Raw ||Q(2T) - Q(T)|| for each T in ``horizons``."""
    horizons = np.asarray(horizons, dtype=float)
    pts = np.unique(np.concatenate([horizons, 2 * horizons]))
    Qs = dict(zip(pts, q_path(hier, model, geom, s, xi, pts, "ode", tol)))
    return np.array([np.linalg.norm(Qs[2 * T] - Qs[T], 2) for T in horizons])


def peano_baker_terms(hier, model, geom, s: float, xi: float, depth: int, T: float | None = None,
                      m: int = 16) -> list:
    """Terms i^j ∫...∫ script_R ... script_R of Q(T, s, ξ), j = 0..depth (T large stands for ∞)."""
    _zone_check(geom, xi, s)
    T = T if T is not None else s + 1e4 * (1 + s)
    edges = _panel_edges(s, T, xi)
    _, R = _series_nodes(hier, model, geom, s, xi, edges, m)
    _, w, S = gauss_panel(m)
    h = np.diff(edges)
    W = h[:, None] * w[None, :] / 2
    Sh = h[:, None, None] * S[None] / 2
    term = np.broadcast_to(np.eye(2, dtype=complex), R.shape).copy()
    out = [np.eye(2, dtype=complex)]
    for _ in range(depth):
        g = 1j * R @ term
        tot = np.einsum("pm,pmij->pij", W, g)
        prefix = np.concatenate([np.zeros((1, 2, 2), complex), np.cumsum(tot, axis=0)])
        term = prefix[:-1, None] + np.einsum("pab,pbij->paij", Sh, g)
        out.append(prefix[-1])
    return out


def script_R_norm_integral(hier, model, geom, s: float, xi: float, T: float | None = None) -> float:
    """∫_s^∞ ||script_R(τ, s, ξ)|| dτ (panel quadrature plus a power-law tail)."""
    _zone_check(geom, xi, s)
    T = T if T is not None else s + 1e4 * (1 + s)
    edges = _panel_edges(s, T, xi, osc=False)
    x, w, _ = gauss_panel(16)
    a, b = edges[:-1], edges[1:]
    nodes = a[:, None] + (b - a)[:, None] * (x[None] + 1) / 2
    R = script_R(hier, model, geom, nodes.ravel(), s, xi).reshape(nodes.shape + (2, 2))
    vals = np.linalg.norm(R, 2, axis=(-2, -1))
    total = float(np.sum((b - a)[:, None] * w[None] / 2 * vals))
    # tail: ||script_R|| decays at least like (1+τ)^{-2}
    total += float(vals[-1, -1]) * (1 + T)
    return total


# ------------------------------------------------------------------ assembly

def _hyp_block(hier, model, geom, s, xi, t_eval, backend, tol):
    """(λ(s)/λ(t)) M N_k(t) E_0(t,s) Q(t,s) N_k^{-1}(s) M^{-1} for t in t_eval."""
    Q = q_path(hier, model, geom, s, xi, t_eval, backend, tol)
    Nt, _, _, _ = eval_symbols(hier, model, geom, t_eval, xi)
    _, Ns_inv, _, _ = eval_symbols(hier, model, geom, np.array([s]), xi)
    lam_ratio = np.exp(0.5 * (model.primitive(s) - model.primitive(t_eval)))
    core = M @ Nt @ e0_phase(t_eval, s, xi) @ Q @ Ns_inv[0] @ M_INV
    return lam_ratio[:, None, None] * core


def assemble_path(hier, model, geom, s: float, xi: float, t_eval, backend: str = "ode",
                  tol: float = 1e-10) -> np.ndarray:
    """Assembled E(t, s, ξ) for every t in ``t_eval``."""
    t_eval = np.atleast_1d(np.asarray(t_eval, dtype=float))
    if np.any(t_eval < s):
        raise PeanoError("need t >= s")
    tx = t_xi(geom, xi)
    out = np.empty((len(t_eval), 2, 2), dtype=complex)
    if s >= tx:
        out[:] = _hyp_block(hier, model, geom, s, xi, t_eval, backend, tol)
        return out
    d = t_eval <= tx
    if np.any(d):
        out[d] = solve_diss_zone_path(model, geom, s, xi, t_eval[d])
    if np.any(~d):
        E_exit = solve_diss_zone(model, geom, tx, s, xi)
        out[~d] = _hyp_block(hier, model, geom, tx, xi, t_eval[~d], backend, tol) @ E_exit
    return out


def assemble_full(hier, model, geom, t: float, s: float, xi: float, backend: str = "ode",
                  tol: float = 1e-10) -> Mat2:
    if t == s:
        return np.eye(2, dtype=complex)
    return assemble_path(hier, model, geom, s, xi, [t], backend, tol)[0]
