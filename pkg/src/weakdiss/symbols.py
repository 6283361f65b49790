"""Exact polynomial symbols in the generators g_m = b^(m)(t) and u = 1/|ξ|.

A :class:`SymbolExpr` is a finite sum  Σ c · Π_m g_m^{e_m} · u^p  with complex
coefficients and integer p (negative p encodes powers of |ξ|).  The time
derivative maps g_m -> g_{m+1}; u does not depend on t.  Radial derivatives
act on u only: ∂_|ξ| u^p = -p u^{p+1}.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable

import numpy as np


def _trim(exps: tuple) -> tuple:
    n = len(exps)
    while n and exps[n - 1] == 0:
        n -= 1
    return exps[:n]


def _add_exps(a: tuple, b: tuple) -> tuple:
    n = max(len(a), len(b))
    a = a + (0,) * (n - len(a))
    b = b + (0,) * (n - len(b))
    return tuple(x + y for x, y in zip(a, b))


class SymbolExpr:
    __slots__ = ("terms", "_compiled")

    def __init__(self, terms=None):
        clean = {}
        for (exps, p), c in (terms or {}).items():
            if c != 0:
                key = (_trim(tuple(exps)), int(p))
                clean[key] = clean.get(key, 0) + complex(c)
        self.terms = {k: v for k, v in clean.items() if v != 0}
        self._compiled = None

    # constructors
    @classmethod
    def const(cls, c) -> "SymbolExpr":
        return cls({((), 0): c})

    @classmethod
    def g(cls, m: int, c=1.0) -> "SymbolExpr":
        return cls({((0,) * m + (1,), 0): c})

    @classmethod
    def u(cls, p: int = 1, c=1.0) -> "SymbolExpr":
        return cls({((), p): c})

    # algebra
    def __add__(self, other):
        other = _lift(other)
        acc = defaultdict(complex, self.terms)
        for k, v in other.terms.items():
            acc[k] += v
        return SymbolExpr(acc)

    __radd__ = __add__

    def __neg__(self):
        return SymbolExpr({k: -v for k, v in self.terms.items()})

    def __sub__(self, other):
        return self + (-_lift(other))

    def __rsub__(self, other):
        return _lift(other) - self

    def __mul__(self, other):
        other = _lift(other)
        acc = defaultdict(complex)
        for (e1, p1), c1 in self.terms.items():
            for (e2, p2), c2 in other.terms.items():
                acc[(_add_exps(e1, e2), p1 + p2)] += c1 * c2
        return SymbolExpr(acc)

    __rmul__ = __mul__

    def is_zero(self) -> bool:
        return not self.terms

    def __eq__(self, other):
        return (self - _lift(other)).is_zero()

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def __repr__(self):
        return f"SymbolExpr({self.to_text()})"

    # calculus
    def dt(self) -> "SymbolExpr":
        """∂_t via the Leibniz rule on the g-monomials."""
        acc = defaultdict(complex)
        for (exps, p), c in self.terms.items():
            for m, e in enumerate(exps):
                if e == 0:
                    continue
                new = list(exps) + [0]
                new[m] -= 1
                new[m + 1] += 1
                acc[(tuple(new), p)] += c * e
        return SymbolExpr(acc)

    def Dt(self) -> "SymbolExpr":
        """D_t = -i ∂_t."""
        return -1j * self.dt()

    def d_rho(self) -> "SymbolExpr":
        """∂_|ξ|, acting through u = 1/|ξ|."""
        return SymbolExpr({(e, p + 1): -p * c for (e, p), c in self.terms.items() if p != 0})

    # bookkeeping
    def max_generator(self) -> int:
        return max((len(e) - 1 for e, _ in self.terms), default=-1)

    def orders(self) -> set:
        """Set of (u-power, time weight) pairs, weight of g_m being m + 1."""
        return {(p, sum((m + 1) * e for m, e in enumerate(exps))) for exps, p in self.terms}

    def to_text(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for (exps, p), c in sorted(self.terms.items(), key=lambda kv: (kv[0][1], kv[0][0])):
            fac = [f"b{'′' * m if m < 3 else f'^({m})'}" + (f"^{e}" if e > 1 else "")
                   for m, e in enumerate(exps) if e]
            if p:
                fac.append("|ξ|" + (f"^{-p}" if p != -1 else "") if p < 0 else "u" + (f"^{p}" if p != 1 else ""))
            coef = f"({c.real:.6g}{c.imag:+.6g}i)"
            parts.append("*".join([coef] + fac))
        return " + ".join(parts)

    def to_python(self) -> str:
        """Python expression in g0, g1, ... and u, for generated scalar code."""
        if not self.terms:
            return "0j"
        parts = []
        for (exps, p), c in self.terms.items():
            fac = [f"complex({c.real!r}, {c.imag!r})"]
            fac += [f"g{m}" + (f"**{e}" if e > 1 else "") for m, e in enumerate(exps) if e]
            if p:
                fac.append(f"u**{p}" if p > 0 else f"xi**{-p}")
            parts.append("*".join(fac))
        return " + ".join(parts)

    # evaluation
    def _compile(self):
        if self._compiled is None:
            L = self.max_generator() + 1
            keys = list(self.terms)
            E = np.zeros((len(keys), max(L, 1)), dtype=int)
            for i, (exps, _) in enumerate(keys):
                E[i, : len(exps)] = exps
            P = np.array([p for _, p in keys], dtype=float)
            C = np.array([self.terms[k] for k in keys], dtype=complex)
            self._compiled = (E, P, C, L)
        return self._compiled

    def evaluate(self, gvals: np.ndarray, u) -> np.ndarray:
        """Evaluate with gvals[m] = b^(m)(t) (shape (L, *pts)) and u = 1/|ξ|."""
        u = np.asarray(u, dtype=float)
        if not self.terms:
            return np.zeros(np.broadcast_shapes(np.shape(gvals)[1:], u.shape), dtype=complex)
        E, P, C, L = self._compiled or self._compile()
        g = np.asarray(gvals, dtype=float)
        shape = np.broadcast_shapes(g.shape[1:], u.shape)
        out = np.zeros(shape, dtype=complex)
        for i in range(len(C)):
            term = np.full(shape, C[i])
            for m in range(L):
                if E[i, m]:
                    term = term * g[m] ** E[i, m]
            if P[i]:
                term = term * u ** P[i]
            out = out + term
        return out


def _lift(x) -> SymbolExpr:
    return x if isinstance(x, SymbolExpr) else SymbolExpr.const(x)


ZERO = SymbolExpr()
ONE = SymbolExpr.const(1)


@dataclass(frozen=True)
class SymMat:
    """2x2 matrix of SymbolExpr entries."""

    a11: SymbolExpr
    a12: SymbolExpr
    a21: SymbolExpr
    a22: SymbolExpr

    @classmethod
    def of(cls, rows) -> "SymMat":
        (a, b), (c, d) = rows
        return cls(_lift(a), _lift(b), _lift(c), _lift(d))

    @classmethod
    def zeros(cls) -> "SymMat":
        return cls(ZERO, ZERO, ZERO, ZERO)

    @classmethod
    def identity(cls) -> "SymMat":
        return cls(ONE, ZERO, ZERO, ONE)

    def entries(self) -> tuple:
        return (self.a11, self.a12, self.a21, self.a22)

    def map(self, fn) -> "SymMat":
        return SymMat(*(fn(e) for e in self.entries()))

    def __add__(self, o: "SymMat") -> "SymMat":
        return SymMat(*(x + y for x, y in zip(self.entries(), o.entries())))

    def __sub__(self, o: "SymMat") -> "SymMat":
        return SymMat(*(x - y for x, y in zip(self.entries(), o.entries())))

    def __neg__(self) -> "SymMat":
        return self.map(lambda e: -e)

    def __matmul__(self, o: "SymMat") -> "SymMat":
        return SymMat(self.a11 * o.a11 + self.a12 * o.a21, self.a11 * o.a12 + self.a12 * o.a22,
                      self.a21 * o.a11 + self.a22 * o.a21, self.a21 * o.a12 + self.a22 * o.a22)

    def scale(self, c) -> "SymMat":
        return self.map(lambda e: e * c)

    def diag(self) -> "SymMat":
        return SymMat(self.a11, ZERO, ZERO, self.a22)

    def Dt(self) -> "SymMat":
        return self.map(SymbolExpr.Dt)

    def d_rho(self) -> "SymMat":
        return self.map(SymbolExpr.d_rho)

    def is_zero(self) -> bool:
        return all(e.is_zero() for e in self.entries())

    def max_generator(self) -> int:
        return max(e.max_generator() for e in self.entries())

    def orders(self) -> set:
        out = set()
        for e in self.entries():
            out |= e.orders()
        return out

    def evaluate(self, gvals, u) -> np.ndarray:
        vals = [e.evaluate(gvals, u) for e in self.entries()]
        shape = np.broadcast_shapes(*(np.shape(v) for v in vals))
        out = np.empty(shape + (2, 2), dtype=complex)
        out[..., 0, 0], out[..., 0, 1], out[..., 1, 0], out[..., 1, 1] = vals
        return out

    def to_text(self) -> str:
        return "\n".join(f"  [{i}{j}] {e.to_text()}" for (i, j), e in
                         zip(((1, 1), (1, 2), (2, 1), (2, 2)), self.entries()))


def mat_sum(mats: Iterable[SymMat]) -> SymMat:
    acc = SymMat.zeros()
    for m in mats:
        acc = acc + m
    return acc
