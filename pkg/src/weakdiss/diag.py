"""Diagonalization hierarchy in the hyperbolic zone.

Starting from D_t U = (D(ξ) + R(t)) U with D = diag(|ξ|, -|ξ|) and
R = (i b/2)[[1, 1], [1, 1]], each stage produces

    F^(j)   = diag B^(j)
    N^(j+1) = [[0, -B^(j)_12 / 2|ξ|], [B^(j)_21 / 2|ξ|, 0]]
    B^(j+1) = N_{j+1}(D_t - D - F_j) - (D_t - D - R) N_{j+1}

with N_k = Σ_{j<=k} N^(j), F_k = Σ_{j<=k} F^(j), B^(0) = R.  The remainder
R_k = N_k^{-1} B^(k) then satisfies

    (D_t - D - R) N_k = N_k (D_t - D - F_{k-1} - R_k)

identically.  B^(j+1) is built from the residual groups left after the
cancellation B^(j) + (D N^(j+1) - N^(j+1) D) - F^(j) = 0, which is checked
symbolically at every stage.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coeff import CoefficientModel
from .symbols import SymbolExpr, SymMat, mat_sum
from .zones import ZoneGeometry, hyp_zone_samples, t_xi


class HierarchyError(ValueError):
    pass


U = SymbolExpr.u(1)
XI = SymbolExpr.u(-1)
B0 = SymbolExpr.g(0)
D_SYM = SymMat.of([[XI, 0], [0, -XI]])
R_SYM = SymMat.of([[B0 * 0.5j, B0 * 0.5j], [B0 * 0.5j, B0 * 0.5j]])

# declared hyperbolic symbol orders {m1, m2} per stage
def declared_order(kind: str, j: int) -> tuple[int, int]:
    return {"N": (-j, j), "B": (-j, j + 1), "F": (-j, j + 1)}[kind]


@dataclass
class DiagonalizationHierarchy:
    k: int
    N: list = field(default_factory=list)   # N^(0..k)
    F: list = field(default_factory=list)   # F^(0..k)
    B: list = field(default_factory=list)   # B^(0..k)
    cancellation_ok: list = field(default_factory=list)

    @property
    def Nk(self) -> SymMat:
        return mat_sum(self.N[: self.k + 1])

    @property
    def F_km1(self) -> SymMat:
        return mat_sum(self.F[: self.k])

    @property
    def Bk(self) -> SymMat:
        return self.B[self.k]

    def max_generator(self) -> int:
        return max(m.max_generator() for m in self.N + self.F + self.B)

    def dump(self) -> str:
        lines = [f"diagonalization hierarchy, depth k={self.k}"]
        for j in range(self.k + 1):
            lines.append(f"N^({j}) in S{{{-j},{j}}}:\n{self.N[j].to_text()}")
            lines.append(f"F^({j}) in S{{{-j},{j + 1}}}:\n{self.F[j].to_text()}")
            lines.append(f"B^({j}) in S{{{-j},{j + 1}}}:\n{self.B[j].to_text()}")
        return "\n".join(lines)


def _commutator_DN(N: SymMat) -> SymMat:
    return D_SYM @ N - N @ D_SYM


def build_hierarchy(model: CoefficientModel | None, k: int) -> DiagonalizationHierarchy:
    """Exact symbolic stages N^(j), F^(j), B^(j) for j <= k.

    ``model`` is only used to check the smoothness requirement ell >= 2k - 1.
    """
    if k < 1:
        raise HierarchyError("k must be >= 1")
    if model is not None and model.ell < 2 * k - 1:
        raise HierarchyError(f"depth k={k} needs ell >= {2 * k - 1}, model has ell={model.ell}")
    h = DiagonalizationHierarchy(k)
    h.N.append(SymMat.identity())
    h.B.append(R_SYM)
    h.F.append(R_SYM.diag())
    for j in range(k):
        Bj = h.B[j]
        Nn = SymMat.of([[0, Bj.a12 * U * -0.5], [Bj.a21 * U * 0.5, 0]])
        bracket = Bj + _commutator_DN(Nn) - h.F[j]
        h.cancellation_ok.append(bracket.is_zero())
        if not bracket.is_zero():  # pragma: no cover - algebraic invariant
            raise HierarchyError(f"stage {j}: cancellation failed")
        Fj = mat_sum(h.F[: j + 1])
        carried = mat_sum(h.N[nu] @ h.F[j] for nu in range(1, j + 1))
        Bn = -Nn.Dt() + R_SYM @ Nn - Nn @ Fj - carried
        h.N.append(Nn)
        h.B.append(Bn)
        h.F.append(Bn.diag())
    return h


def direct_B(h: DiagonalizationHierarchy, j: int) -> SymMat:
    """B^(j) straight from its definition, for cross-checking the residual groups."""
    if j == 0:
        return R_SYM
    Nj = mat_sum(h.N[: j + 1])
    Fjm1 = mat_sum(h.F[:j])
    return -Nj.Dt() - Nj @ D_SYM - Nj @ Fjm1 + D_SYM @ Nj + R_SYM @ Nj


def generator_values(model: CoefficientModel, t, n: int) -> np.ndarray:
    """Stack b^(m)(t) for m < n."""
    if n > model.ell + 1:
        raise HierarchyError(f"need derivatives up to order {n - 1}, model has ell={model.ell}")
    t = np.asarray(t, dtype=float)
    return np.stack([np.broadcast_to(model.b(t, m), t.shape) for m in range(max(n, 1))])


def _eval(mat: SymMat, model, t, xi) -> np.ndarray:
    g = generator_values(model, t, mat.max_generator() + 1)
    return mat.evaluate(g, 1.0 / np.asarray(xi, dtype=float))


def inv2(A: np.ndarray) -> np.ndarray:
    det = A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]
    out = np.empty_like(A)
    out[..., 0, 0] = A[..., 1, 1]
    out[..., 1, 1] = A[..., 0, 0]
    out[..., 0, 1] = -A[..., 0, 1]
    out[..., 1, 0] = -A[..., 1, 0]
    return out / det[..., None, None]


def det2(A: np.ndarray) -> np.ndarray:
    return A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]


def eval_symbols(hier: DiagonalizationHierarchy, model: CoefficientModel, geom: ZoneGeometry, t, xi,
                 check_zone: bool = True):
    """Numeric (N_k, N_k^{-1}, F_{k-1}, R_k) at hyperbolic-zone points (batched)."""
    t = np.asarray(t, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if check_zone and np.any(t < t_xi(geom, xi) - 1e-12 * (1 + t)):
        raise HierarchyError("eval_symbols needs (t, xi) in the hyperbolic zone")
    Nk = _eval(hier.Nk, model, t, xi)
    d = det2(Nk)
    if np.any(np.abs(d) < 0.1):
        raise HierarchyError("|det N_k| < 0.1: zone constant too small, enlarge N")
    Ninv = inv2(Nk)
    F = _eval(hier.F_km1, model, t, xi)
    Bk = _eval(hier.Bk, model, t, xi)
    Rk = Ninv @ Bk
    return Nk, Ninv, F, Rk


def diagonalizer_defect(hier: DiagonalizationHierarchy, model: CoefficientModel, t, xi) -> np.ndarray:
    """||N_k(t, ξ) - I|| (spectral norm), no zone check."""
    Nk = _eval(hier.Nk, model, t, xi)
    return np.linalg.norm(Nk - np.eye(2), ord=2, axis=(-2, -1))


def conjugation_residual(hier: DiagonalizationHierarchy, model: CoefficientModel, geom: ZoneGeometry, t, xi):
    """|| D_t N_k - (D + R) N_k + N_k (D + F_{k-1} + R_k) ||, zero up to rounding."""
    t = np.asarray(t, dtype=float)
    xi = np.asarray(xi, dtype=float)
    Nk, _, F, Rk = eval_symbols(hier, model, geom, t, xi)
    DtN = _eval(hier.Nk.Dt(), model, t, xi)
    D = np.zeros(Nk.shape, dtype=complex)
    D[..., 0, 0] = xi
    D[..., 1, 1] = -xi
    b = np.asarray(model.b(t), dtype=float)
    R = np.ones(Nk.shape, dtype=complex) * (0.5j * b)[..., None, None]
    res = DtN - (D + R) @ Nk + Nk @ (D + F + Rk)
    return np.linalg.norm(res, ord=2, axis=(-2, -1))


def _entry_abs(val: np.ndarray) -> np.ndarray:
    return np.linalg.norm(val, ord=2, axis=(-2, -1)) if val.ndim >= 2 and val.shape[-2:] == (2, 2) else np.abs(val)


def _cartesian_bound(radial: list, xi, alpha: int) -> np.ndarray:
    """Bound on max_{|β|=alpha} |∂_ξ^β a| for radial a from radial derivatives.

    |β| = 1: |a'|;  |β| = 2: |a''| + 2|a'|/|ξ|.
    """
    if alpha == 0:
        return radial[0]
    if alpha == 1:
        return radial[1]
    if alpha == 2:
        return radial[2] + 2 * radial[1] / xi
    raise HierarchyError("radial reduction implemented for |alpha| <= 2")


@dataclass
class SymbolClassReport:
    declared: tuple
    constants: dict
    refined: dict
    stable: bool
    n_samples: int


def _refine(spec: dict) -> dict:
    out = dict(spec)
    out["n_t"] = 2 * spec.get("n_t", 60)
    offs = list(spec.get("offsets", (1.0, 1.5, 3.0, 10.0)))
    mids = [np.sqrt(a * b) for a, b in zip(offs[:-1], offs[1:])]
    out["offsets"] = tuple(sorted(offs + mids))
    return out


def measure_symbol(expr, declared, model, N, spec, k_max, alpha_max) -> tuple[dict, int]:
    mat = expr if isinstance(expr, SymMat) else SymMat.of([[expr, 0], [0, 0]])
    m1, m2 = declared
    ts, xis = hyp_zone_samples(N, **spec)
    out = {}
    for kt in range(k_max + 1):
        base = mat
        for _ in range(kt):
            base = base.Dt()
        radial = []
        cur = base
        for a in range(alpha_max + 1):
            radial.append(_entry_abs(_eval(cur, model, ts, xis)))
            cur = cur.d_rho()
        for a in range(alpha_max + 1):
            val = _cartesian_bound(radial, xis, a)
            scaled = val * xis ** (-m1 + a) * (1 + ts) ** (m2 + kt)
            out[(kt, a)] = float(np.max(scaled))
    return out, len(ts)


def symbol_class_margin(expr, declared, geom: ZoneGeometry, sample_spec: dict | None = None,
                        orders: tuple[int, int] = (2, 2), model: CoefficientModel | None = None,
                        rel_tol: float = 0.05) -> SymbolClassReport:
    """Sampled sup of |D_t^k D_ξ^α a| |ξ|^{-m1+|α|} (1+t)^{m2+k} over Z_hyp(N).

    The verdict is "stable" when doubling the sample density moves every
    constant by at most ``rel_tol`` relative.
    """
    model = model or geom.model
    spec = dict(sample_spec or {})
    k_max, alpha_max = orders
    coarse, n = measure_symbol(expr, declared, model, geom.N, spec, k_max, alpha_max)
    fine, _ = measure_symbol(expr, declared, model, geom.N, _refine(spec), k_max, alpha_max)
    stable = all(
        np.isfinite(fine[key]) and (fine[key] == 0 or abs(fine[key] - coarse[key]) <= rel_tol * fine[key])
        for key in coarse
    )
    return SymbolClassReport(tuple(declared), coarse, fine, stable, n)


def stage_symbols(hier: DiagonalizationHierarchy) -> dict:
    """Stage symbols with their declared orders, for the stage-order law."""
    out = {}
    for j in range(1, hier.k + 1):
        out[f"N{j}"] = (hier.N[j], declared_order("N", j))
        out[f"B{j}"] = (hier.B[j], declared_order("B", j))
    out["F-ib/2"] = (hier.F_km1 - hier.F[0], (-1, 2))
    return out
