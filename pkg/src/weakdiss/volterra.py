"""Volterra integral equations of the second kind and the dissipative zone.

Generic problem:  f(t, p) = f(0, p) + ∫_0^t k(t, τ, p) f(τ, p) dτ  with a bounded
kernel.  The horizon is cut into sub-intervals on which the restricted
integral operator has contraction factor (T2 - T1) sup|k| <= 1/2; on each
sub-interval the equation is discretized by Gauss-Legendre Nyström quadrature
and solved by successive approximation.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import legendre
from scipy.integrate import solve_ivp

from .coeff import CoefficientModel
from .propagator import Mat2, OracleError
from .zones import ZoneGeometry, t_xi, t_xi_derivative


class VolterraError(RuntimeError):
    pass


@lru_cache(maxsize=16)
def gauss_panel(m: int):
    """Nodes x, weights w on [-1, 1] and the matrix S with ∫_{-1}^{x_i} L_j = S[i, j]."""
    x, w = legendre.leggauss(m)
    V = legendre.legvander(x, m - 1)
    coeffs = np.linalg.inv(V)  # column j: Legendre coefficients of Lagrange basis L_j
    integ = legendre.legint(coeffs, lbnd=-1, axis=0)
    S = legendre.legvander(x, m) @ integ
    return x, w, S


@dataclass
class VolterraProblem:
    """f(t,p) = f0(p) + ∫_0^t k(t,τ,p) f(τ,p) dτ.

    ``kernel(t, tau, p)`` returns a scalar or a square matrix acting on f from
    the left; set ``t_dependent=False`` when it ignores ``t`` (history sums then
    cost O(n) instead of O(n^2)).
    """

    f0: Callable
    kernel: Callable
    T: float
    params: Sequence = (None,)
    t_dependent: bool = True
    vectorized: bool = False  # kernel accepts an array of τ and returns (n, d, d)


def _apply(K, f):
    # scalar kernels multiply, matrix kernels act from the left
    return K * f if np.ndim(K) == 0 else K @ f


def _solve_one(problem: VolterraProblem, p, grid: np.ndarray, tol: float, m: int, h_max_rel: float,
               max_iter: int = 200):
    xg, wg, S = gauss_panel(m)
    f0_raw = np.asarray(problem.f0(p), dtype=complex)
    # promote scalars and vectors to matrices so that every kernel acts by @
    f0 = f0_raw.reshape(f0_raw.shape + (1,) * (2 - f0_raw.ndim)) if f0_raw.ndim < 2 else f0_raw
    d = f0.shape[0]

    def kern(t, tau):
        return np.asarray(problem.kernel(t, tau, p), dtype=complex).reshape(d, d)

    def kern_row(t, taus):
        if problem.vectorized:
            return np.asarray(problem.kernel(t, taus, p), dtype=complex).reshape(len(taus), d, d)
        return np.array([kern(t, tau) for tau in taus])

    nodes_t, nodes_w, nodes_f = [], [], []
    hist = np.zeros_like(f0)  # running ∫ k f for t-independent kernels
    out = [f0.copy()]
    a = grid[0]
    n_panels = 0
    h_prev = np.inf
    for target in grid[1:]:
        while a < target - 1e-15 * max(1.0, abs(target)):
            h = min(target - a, h_max_rel * (1.0 + abs(a)), 2 * h_prev)
            while True:
                x = a + h * (xg + 1) / 2
                Kcol = kern_row(x[0], x)
                rows = [Kcol] if not problem.t_dependent else [kern_row(xi, x) for xi in x]
                sup_k = max(float(np.max(np.abs(r))) for r in rows) * d
                if not np.isfinite(sup_k):
                    raise VolterraError("kernel is not bounded on the sub-interval")
                if h * sup_k <= 0.5:
                    break
                h *= 0.5
                if h < 1e-12 * max(1.0, abs(a)):
                    raise VolterraError("contraction factor cannot be made < 1: kernel unbounded")
            b = a + h
            h_prev = h
            w = h * wg / 2
            Sh = h * S / 2
            if problem.t_dependent:
                Kloc = np.array(rows)  # (m, m, d, d)
                if nodes_t:
                    Th, Wh, Fh = np.array(nodes_t), np.array(nodes_w), np.array(nodes_f)
                    H = np.array([f0 + np.einsum("q,qab,qbc->ac", Wh, kern_row(xi, Th), Fh) for xi in x])
                else:
                    H = np.broadcast_to(f0, (m,) + f0.shape)
            else:
                H = np.broadcast_to(f0 + hist, (m,) + f0.shape)
            f = np.array(H, copy=True)
            for _ in range(max_iter):
                if problem.t_dependent:
                    new = H + np.einsum("ij,ijab,jbc->iac", Sh, Kloc, f)
                else:
                    new = H + np.einsum("ij,jac->iac", Sh, Kcol @ f)
                delta = np.max(np.abs(new - f))
                f = new
                if delta <= tol * max(1.0, float(np.max(np.abs(f)))):
                    break
            else:
                raise VolterraError("successive approximation did not converge")
            if problem.t_dependent:
                nodes_t.extend(x)
                nodes_w.extend(w)
                nodes_f.extend(f)
            else:
                hist = hist + np.einsum("j,jac->ac", w, Kcol @ f)
            a = b
            n_panels += 1
        if problem.t_dependent:
            Kt = kern_row(target, np.array(nodes_t))
            val = f0 + np.einsum("q,qab,qbc->ac", np.array(nodes_w), Kt, np.array(nodes_f))
        else:
            val = f0 + hist
        out.append(val)
    return np.array(out).reshape((len(out),) + f0_raw.shape), n_panels


def solve_volterra(problem: VolterraProblem, grid, tol: float = 1e-12, m: int = 12,
                   h_max_rel: float = 0.5) -> dict:
    """f on ``grid`` (must start at 0) for every parameter, keyed by parameter."""
    grid = np.asarray(grid, dtype=float)
    if grid[0] != 0.0 or np.any(np.diff(grid) <= 0) or grid[-1] > problem.T * (1 + 1e-12):
        raise VolterraError("grid must start at 0, increase, and stay within [0, T]")
    return {p: _solve_one(problem, p, grid, tol, m, h_max_rel)[0] for p in problem.params}


def neumann_terms(problem: VolterraProblem, p, t: float, depth: int, m: int = 16) -> list:
    """Successive-approximation increments f_j - f_{j-1} at time t, j = 1..depth.

    Single Gauss panel on [0, t]; used to check |f_j - f_{j-1}| <= (t sup|k|)^j |f0| / j!.
    """
    xg, wg, S = gauss_panel(m)
    x = t * (xg + 1) / 2
    w = t * wg / 2
    Sh = t * S / 2
    f0 = np.asarray(problem.f0(p), dtype=complex)
    K = [[np.asarray(problem.kernel(xi, xj, p), dtype=complex) for xj in x] for xi in x]
    Kt = [np.asarray(problem.kernel(t, xj, p), dtype=complex) for xj in x]
    term = np.broadcast_to(f0, (m,) + f0.shape).copy()
    out = []
    for _ in range(depth):
        at_t = sum(w[j] * _apply(Kt[j], term[j]) for j in range(m))
        kf = np.array([[_apply(K[i][j], term[j]) for j in range(m)] for i in range(m)])
        term = np.einsum("ij,ij...->i...", Sh, kf)
        out.append(at_t)
    return out


# ---------------------------------------------------------------- dissipative zone

def diag_propagator(model: CoefficientModel, t, s) -> np.ndarray:
    """Λ(t, s) = diag((1+s)/(1+t), λ²(s)/λ²(t))."""
    return np.diag([(1 + s) / (1 + t), float(np.exp(model.primitive(s) - model.primitive(t)))]).astype(complex)


def diss_kernel(model: CoefficientModel, geom: ZoneGeometry, tau, s, xi) -> Mat2:
    """K(τ, s, ξ) = Λ(s, τ) R(τ, ξ) Λ(τ, s), batched over τ."""
    tau = np.asarray(tau, dtype=float)
    r = np.exp(model.primitive(s) - np.asarray(model.primitive(tau), dtype=float))  # λ²(s)/λ²(τ)
    N = geom.N
    out = np.zeros(tau.shape + (2, 2), dtype=complex)
    out[..., 0, 1] = N * r / (1 + s)
    out[..., 1, 0] = (1 + s) * xi ** 2 / (r * N)
    return out


def solve_diss_zone_path(model: CoefficientModel, geom: ZoneGeometry, s: float, xi: float, t_grid,
                         tol: float = 1e-13) -> np.ndarray:
    """E(t, s, ξ) for t in ``t_grid`` (all within [s, t_ξ]) via the Volterra form."""
    tx = t_xi(geom, xi)
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if s < 0 or np.any(t_grid < s) or np.any(t_grid > tx * (1 + 1e-12) + 1e-12):
        raise VolterraError("solve_diss_zone needs s <= t <= t_xi")
    rel = np.unique(np.concatenate([[0.0], t_grid - s]))
    prob = VolterraProblem(
        f0=lambda p: np.eye(2, dtype=complex),
        kernel=lambda t, tau, p: 1j * diss_kernel(model, geom, s + tau, s, xi),
        T=rel[-1] if rel[-1] > 0 else 1.0,
        t_dependent=False,
        vectorized=True,
    )
    if rel[-1] == 0:
        return np.tile(np.eye(2, dtype=complex), (len(t_grid), 1, 1))
    G = solve_volterra(prob, rel, tol)[None]
    lookup = dict(zip(rel, G))
    return np.array([diag_propagator(model, t, s) @ lookup[t - s] for t in t_grid])


def solve_diss_zone(model: CoefficientModel, geom: ZoneGeometry, t: float, s: float, xi: float,
                    tol: float = 1e-13) -> Mat2:
    if t == s:
        return np.eye(2, dtype=complex)
    return solve_diss_zone_path(model, geom, s, xi, [t], tol)[0]


def lemma_constant(model: CoefficientModel, geom: ZoneGeometry, xis, n_t: int = 12) -> float:
    """sup over sampled s <= t <= t_ξ of ||E(t,s,ξ)|| λ²(t)/λ²(s)."""
    best = 0.0
    for xi in np.atleast_1d(xis):
        tx = t_xi(geom, xi)
        if tx <= 0:
            continue
        for s in np.concatenate([[0.0], np.geomspace(1e-2, tx, 4)[:-1]]):
            ts = s + (tx - s) * np.linspace(0, 1, n_t)[1:]
            Es = solve_diss_zone_path(model, geom, s, xi, ts)
            w = np.exp(model.primitive(ts) - model.primitive(s))
            best = max(best, float(np.max(np.linalg.norm(Es, 2, axis=(1, 2)) * w)))
    return best


# ------------------------------------------------- ξ-derivatives (variational ODE)

def _diss_A(model, N, t, xi):
    b = float(model.b(t))
    return np.array([[1j / (1 + t), N / (1 + t)], [(1 + t) * xi ** 2 / N, 1j * b]], dtype=complex)


def _diss_A_xi(N, t, xi, order):
    if order == 1:
        return np.array([[0, 0], [2 * (1 + t) * xi / N, 0]], dtype=complex)
    return np.array([[0, 0], [2 * (1 + t) / N, 0]], dtype=complex)


def _diss_A_t(model, N, t, xi):
    b1 = float(model.b(t, 1))
    return np.array([[-1j / (1 + t) ** 2, -N / (1 + t) ** 2], [xi ** 2 / N, 1j * b1]], dtype=complex)


def variational_diss(model: CoefficientModel, geom: ZoneGeometry, t_end: float, xi: float, tol: float = 1e-12):
    """(E, ∂_ξE, ∂²_ξE) at (t_end, 0, ξ) from the augmented variational system."""
    N = geom.N

    def rhs(t, y):
        E, E1, E2 = y[:4].reshape(2, 2), y[4:8].reshape(2, 2), y[8:].reshape(2, 2)
        A = _diss_A(model, N, t, xi)
        A1, A2 = _diss_A_xi(N, t, xi, 1), _diss_A_xi(N, t, xi, 2)
        return 1j * np.concatenate([(A @ E).ravel(), (A1 @ E + A @ E1).ravel(),
                                    (A2 @ E + 2 * A1 @ E1 + A @ E2).ravel()])

    y0 = np.concatenate([np.eye(2).ravel(), np.zeros(8)]).astype(complex)
    if t_end <= 0:
        return np.eye(2, dtype=complex), np.zeros((2, 2), complex), np.zeros((2, 2), complex)
    sol = solve_ivp(rhs, (0.0, t_end), y0, method="DOP853", rtol=tol, atol=tol * 1e-3)
    if sol.status != 0:
        raise OracleError(sol.message)
    y = sol.y[:, -1]
    return y[:4].reshape(2, 2), y[4:8].reshape(2, 2), y[8:].reshape(2, 2)


def deriv_diss_zone(model: CoefficientModel, geom: ZoneGeometry, xi: float, alpha: int,
                    tol: float = 1e-12) -> Mat2:
    """D_ξ^α E(t_ξ, 0, ξ) (radial, D = -i∂), including the motion of t_ξ."""
    if alpha not in (1, 2):
        raise VolterraError("only |alpha| in {1, 2} supported")
    if xi > geom.N:
        raise VolterraError("deriv_diss_zone needs |xi| <= N")
    return (-1j) ** alpha * total_xi_derivatives(model, geom, xi, tol)[alpha]


def total_xi_derivatives(model: CoefficientModel, geom: ZoneGeometry, xi: float, tol: float = 1e-12):
    """[E, d/dξ E, d²/dξ² E] of ξ ↦ E(t_ξ(ξ), 0, ξ) (plain derivatives)."""
    N = geom.N
    t = t_xi(geom, xi)
    E, E1, E2 = variational_diss(model, geom, t, xi, tol)
    A = _diss_A(model, N, t, xi)
    A1 = _diss_A_xi(N, t, xi, 1)
    At = _diss_A_t(model, N, t, xi)
    Et = 1j * A @ E
    Ett = 1j * At @ E - A @ A @ E
    Etx = 1j * (A1 @ E + A @ E1)
    tp = float(t_xi_derivative(N, xi, 1))
    tpp = float(t_xi_derivative(N, xi, 2))
    d1 = E1 + Et * tp
    d2 = E2 + 2 * Etx * tp + Ett * tp ** 2 + Et * tpp
    return [E, d1, d2]


def scaled_diss_derivatives(model: CoefficientModel, geom: ZoneGeometry, xi: float, tol: float = 1e-12):
    """[Y, Y', Y''] for Y(ξ) = λ²(t_ξ) E(t_ξ, 0, ξ)."""
    E, E1, E2 = total_xi_derivatives(model, geom, xi, tol)
    N = geom.N
    t = t_xi(geom, xi)
    l2 = float(model.lam2(t))
    b, b1 = float(model.b(t)), float(model.b(t, 1))
    tp, tpp = float(t_xi_derivative(N, xi, 1)), float(t_xi_derivative(N, xi, 2))
    l2p = l2 * b * tp
    l2pp = l2 * ((b * tp) ** 2 + b1 * tp ** 2 + b * tpp)
    return [l2 * E, l2p * E + l2 * E1, l2pp * E + 2 * l2p * E1 + l2 * E2]
