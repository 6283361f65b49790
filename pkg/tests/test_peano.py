import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import bessel_fundamental, free_rotation
from weakdiss.coeff import make_family
from weakdiss.diag import HierarchyError, build_hierarchy, eval_symbols
from weakdiss.peano import (BackendMismatch, assemble_full, assemble_path, e0_phase, iterated_integral,
                            peano_baker_terms, q_cauchy_profile, q_infinity, q_matrix, q_path, script_R,
                            script_R_norm_integral)
from weakdiss.propagator import fundamental_solution_oracle
from weakdiss.zones import ZoneGeometry


@pytest.fixture(scope="module")
def hier2(scale05):
    return build_hierarchy(scale05, 2)


def test_e0_phase_special_values():
    assert np.allclose(e0_phase(3.0, 3.0, 2.0), np.eye(2))
    assert np.allclose(e0_phase(np.pi, 0.0, 1.0), -np.eye(2), atol=1e-15)


@given(st.floats(0, 1e4), st.floats(1e-3, 1e2), st.complex_numbers(max_magnitude=10), st.complex_numbers(max_magnitude=10))
def test_e0_phase_unitary(t, xi, a, b):
    x = np.array([a, b])
    assert np.linalg.norm(e0_phase(t, 0.0, xi) @ x) == pytest.approx(np.linalg.norm(x), rel=1e-15, abs=1e-300)


def test_script_R_zero_model(geom0):
    h = build_hierarchy(geom0.model, 2)
    assert np.all(script_R(h, geom0.model, geom0, np.array([5.0, 60.0]), 1.0, 1.0) == 0)


@given(st.floats(0.0, 1e3), st.floats(0.0, 1e3))
def test_conjugation_preserves_remainder_norm(t_off, s_off):
    m = make_family("scale_invariant", {"mu": 0.5})
    g = ZoneGeometry(2.0, m, 2)
    h = build_hierarchy(m, 2)
    xi = 0.5
    s = g.t_xi(xi) + s_off
    t = s + t_off
    _, _, F, Rk = eval_symbols(h, m, g, np.array([t]), xi)
    sR = script_R(h, m, g, np.array([t]), s, xi)[0]
    off = sR - np.diag(np.diag(sR))
    assert np.linalg.norm(off, 2) == pytest.approx(np.linalg.norm(Rk[0] - np.diag(np.diag(Rk[0])), 2), rel=1e-12)


def test_script_R_rejects_dissipative_times(scale05, hier2, geom05):
    with pytest.raises(HierarchyError):
        script_R(hier2, scale05, geom05, np.array([1.0]), 1.0, 0.1)


def test_norm_integral_scales_like_one_over_N(scale05):
    h = build_hierarchy(scale05, 1)
    C = [N * script_R_norm_integral(h, scale05, ZoneGeometry(N, scale05, 1), N / 0.1 - 1, 0.1)
         for N in (2.0, 4.0, 8.0, 16.0)]
    assert max(C) <= 1.02 * min(C)


def test_iterated_integral_factorials():
    vals = iterated_integral(lambda t: 1.0, 0.0, 1.0, 4)
    assert np.allclose(vals, [1, 1 / 2, 1 / 6, 1 / 24], atol=1e-15)
    assert abs(vals[2] - 1 / 6) <= 1e-15


def test_iterated_integral_time_ordering():
    # for r = [[0, 1], [0, 0]] t-dependent: second term is int r(t1) r(t2), with r nilpotent -> 0
    A = np.array([[0, 1], [0, 0]], dtype=complex)
    vals = iterated_integral(lambda t: (1 + t) * A, 0.0, 2.0, 2)
    assert np.allclose(vals[0], 4.0 * A)
    assert np.allclose(vals[1], 0)


def test_q_zero_model(geom0):
    h = build_hierarchy(geom0.model, 2)
    assert np.allclose(q_matrix(h, geom0.model, geom0, 100.0, 1.0, 1.0).value, np.eye(2))
    assert np.allclose(q_infinity(h, geom0.model, geom0, 1.0, 1.0).value, np.eye(2))


def test_backends_agree(scale05, hier2, geom05):
    q = q_matrix(hier2, scale05, geom05, 1e3, 1.0, 1.0, backend="ode", tol=1e-10, cross_check=True)
    assert q.meta["backend_diff"] <= 1e-8
    series = q_path(hier2, scale05, geom05, 1.0, 1.0, [10.0, 1e3], "series", 1e-10)
    ode = q_path(hier2, scale05, geom05, 1.0, 1.0, [10.0, 1e3], "ode", 1e-10)
    assert np.max(np.abs(series - ode)) <= 1e-8


def test_backend_mismatch_is_raised(scale05, hier2, geom05, monkeypatch):
    import weakdiss.peano as peano

    real = peano.q_path

    def skewed(*args, **kw):
        out = real(*args, **kw)
        return out + 1e-3 if args[6] == "series" else out

    monkeypatch.setattr(peano, "q_path", skewed)
    with pytest.raises(BackendMismatch):
        peano.q_matrix(hier2, scale05, geom05, 50.0, 1.0, 1.0, cross_check=True)


def test_peano_baker_terms_sum_and_bound(scale05, hier2, geom05):
    s, xi, T = 1.0, 1.0, 1e3
    terms = peano_baker_terms(hier2, scale05, geom05, s, xi, 8, T=T)
    Q = q_path(hier2, scale05, geom05, s, xi, [T], "ode", 1e-12)[0]
    assert np.allclose(sum(terms), Q, atol=1e-10)
    I = script_R_norm_integral(hier2, scale05, geom05, s, xi, T=T)
    for j, term in enumerate(terms):
        assert np.linalg.norm(term, 2) <= I ** j / math.factorial(j) * (1 + 1e-9)


def test_cauchy_rate(scale05, hier2, geom05):
    T = np.geomspace(1e2, 1e3, 4)
    c = q_cauchy_profile(hier2, scale05, geom05, 1.0, 1.0, T)
    assert np.polyfit(np.log(T), np.log(c), 1)[0] == pytest.approx(-1.0, abs=0.15)


@pytest.mark.parametrize("xi", [0.01, 1.0])
def test_q_infinity_det_and_inverse(scale05, hier2, geom05, xi):
    s = geom05.t_xi(xi)
    q = q_infinity(hier2, scale05, geom05, s, xi, tol=1e-10)
    C = geom05.N * script_R_norm_integral(hier2, scale05, geom05, s, xi)
    d = abs(np.linalg.det(q.value))
    assert math.exp(-2 * C / geom05.N) <= d <= math.exp(2 * C / geom05.N)
    assert np.allclose(q.value @ q.inverse, np.eye(2), atol=1e-9)
    assert q.meta["tail_bound"] <= 1e-10


def test_assembled_zero_model_rotation(geom0):
    h = build_hierarchy(geom0.model, 1)
    E = assemble_full(h, geom0.model, geom0, 40.0, 5.0, 3.0)
    assert np.allclose(E, free_rotation(35.0 * 3.0), atol=1e-10)


@pytest.mark.parametrize("xi", [0.05, 2.0])
def test_assembled_vs_oracle(scale05, hier2, geom05, xi):
    E = assemble_full(hier2, scale05, geom05, 1e3, 0.0, xi)
    O = fundamental_solution_oracle(scale05, geom05, 1e3, 0.0, xi, tol=1e-11)
    assert np.linalg.norm(E - O, 2) / np.linalg.norm(O, 2) <= 1e-5
    B = bessel_fundamental(0.5, 2.0, xi, 1e3)
    assert np.linalg.norm(E - B, 2) / np.linalg.norm(B, 2) <= 1e-5


def test_assembled_oscillating_pure_hyperbolic():
    m = make_family("oscillating", {"alpha": 10.0})
    g = ZoneGeometry(2.0, m, 2)
    h = build_hierarchy(m, 2)
    E = assemble_full(h, m, g, 1e3, 0.0, 2.0)
    O = fundamental_solution_oracle(m, g, 1e3, 0.0, 2.0, tol=1e-11)
    assert np.linalg.norm(E - O, 2) / np.linalg.norm(O, 2) <= 1e-5


def test_assembled_path_spans_zones(scale05, hier2, geom05):
    t = np.array([0.0, 10.0, geom05.t_xi(0.05), 100.0, 500.0])
    E = assemble_path(hier2, scale05, geom05, 0.0, 0.05, t)
    from weakdiss.propagator import oracle_path
    O = oracle_path(scale05, geom05, 0.0, 0.05, t, 1e-11)
    assert np.max(np.abs(E - O)) <= 1e-7
