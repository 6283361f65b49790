import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from weakdiss.coeff import make_family
from weakdiss.propagator import fundamental_solution_oracle, oracle_path
from weakdiss.volterra import (VolterraError, VolterraProblem, deriv_diss_zone, gauss_panel, lemma_constant,
                               neumann_terms, scaled_diss_derivatives, solve_diss_zone, solve_diss_zone_path,
                               solve_volterra, total_xi_derivatives)
from weakdiss.zones import ZoneGeometry


def test_exponential():
    prob = VolterraProblem(f0=lambda p: 1.0, kernel=lambda t, tau, p: 1.0, T=1.0)
    f = solve_volterra(prob, [0.0, 0.5, 1.0])[None]
    assert abs(f[-1] - math.e) <= 1e-8
    assert abs(f[1] - math.exp(0.5)) <= 1e-8


def test_zero_kernel_keeps_initial_value():
    prob = VolterraProblem(f0=lambda p: 3.0 + p, kernel=lambda t, tau, p: 0.0, T=5.0, params=(0.0, 1.0))
    out = solve_volterra(prob, np.linspace(0, 5, 6))
    assert np.all(out[0.0] == 3.0) and np.all(out[1.0] == 4.0)


@given(st.floats(-2.0, 2.0), st.floats(0.1, 3.0))
def test_scaled_exponential(a, T):
    prob = VolterraProblem(f0=lambda p: 1.0, kernel=lambda t, tau, p: a, T=T, t_dependent=False)
    assert solve_volterra(prob, [0.0, T])[None][-1] == pytest.approx(math.exp(a * T), rel=1e-9)


def test_t_dependent_kernel():
    # f = 1 + int_0^t (t - tau) f  =>  f = cosh t
    prob = VolterraProblem(f0=lambda p: 1.0, kernel=lambda t, tau, p: t - tau, T=2.0)
    assert solve_volterra(prob, [0.0, 2.0])[None][-1] == pytest.approx(math.cosh(2.0), rel=1e-10)


def test_neumann_factorials():
    prob = VolterraProblem(f0=lambda p: 1.0, kernel=lambda t, tau, p: 1.0, T=1.0)
    terms = neumann_terms(prob, None, 1.0, 4)
    assert np.allclose(terms, [1.0, 0.5, 1 / 6, 1 / 24], atol=1e-14)


def test_gauss_panel_integrates_polynomials():
    x, w, S = gauss_panel(12)
    assert np.sum(w * x ** 10) == pytest.approx(2 / 11, rel=1e-13)
    # S integrates from -1 to each node
    assert np.allclose(S @ x ** 3, (x ** 4 - 1) / 4, atol=1e-13)


def test_bad_grid():
    prob = VolterraProblem(f0=lambda p: 1.0, kernel=lambda t, tau, p: 1.0, T=1.0)
    with pytest.raises(VolterraError):
        solve_volterra(prob, [0.5, 1.0])
    with pytest.raises(VolterraError):
        solve_volterra(prob, [0.0, 2.0])


def test_diss_zone_identity(geom05):
    assert np.array_equal(solve_diss_zone(geom05.model, geom05, 3.0, 3.0, 0.01), np.eye(2))


def test_diss_zone_matches_oracle(geom05):
    E = solve_diss_zone(geom05.model, geom05, 50.0, 0.0, 0.01)
    O = fundamental_solution_oracle(geom05.model, geom05, 50.0, 0.0, 0.01, tol=1e-12)
    assert np.max(np.abs(E - O)) <= 1e-6


@pytest.mark.parametrize("tag,params", [("oscillating", {"alpha": 20.0}), ("iterated_log", {"mu": 1.0, "n": 1})])
def test_diss_zone_path_other_families(tag, params):
    m = make_family(tag, params)
    g = ZoneGeometry(2.0, m)
    ts = np.array([1.0, 10.0, 100.0, 199.0])
    E = solve_diss_zone_path(m, g, 0.5, 0.01, ts)
    O = oracle_path(m, g, 0.5, 0.01, ts, 1e-12)
    assert np.max(np.abs(E - O)) <= 1e-8


def test_diss_zone_rejects_hyperbolic_times(geom05):
    with pytest.raises(VolterraError):
        solve_diss_zone(geom05.model, geom05, 500.0, 0.0, 0.01)


def test_lemma_constant_stable(geom05):
    xis = [1e-3, 1e-2, 0.1, 1.0]
    coarse = lemma_constant(geom05.model, geom05, xis, n_t=8)
    fine = lemma_constant(geom05.model, geom05, xis, n_t=16)
    assert np.isfinite(fine) and fine == pytest.approx(coarse, rel=0.05)


def _zero_model_boundary_E(xi, N=2.0):
    # closed form at t = t_xi for b = 0, theta = xi t_xi = N - xi
    th = N - xi
    c, s = math.cos(th), math.sin(th)
    return np.array([[xi * c / N, 1j * s], [1j * xi * s / N, c]])


@pytest.mark.parametrize("xi", [0.05, 0.4, 1.3])
def test_derivatives_zero_model_closed_form(geom0, xi):
    h = 1e-4 * xi
    d1 = (_zero_model_boundary_E(xi + h) - _zero_model_boundary_E(xi - h)) / (2 * h)
    d2 = (_zero_model_boundary_E(xi + h) - 2 * _zero_model_boundary_E(xi) + _zero_model_boundary_E(xi - h)) / h ** 2
    assert np.allclose(deriv_diss_zone(geom0.model, geom0, xi, 1), -1j * d1, atol=1e-7)
    assert np.allclose(deriv_diss_zone(geom0.model, geom0, xi, 2), -d2, atol=1e-4)
    assert np.allclose(total_xi_derivatives(geom0.model, geom0, xi)[0], _zero_model_boundary_E(xi), atol=1e-10)


@pytest.mark.parametrize("xi", [0.01, 0.2])
def test_variational_vs_finite_difference(geom05, xi):
    h = 1e-4 * xi
    E = lambda x: solve_diss_zone(geom05.model, geom05, geom05.t_xi(x), 0.0, x)
    fd = (E(xi + h) - E(xi - h)) / (2 * h)
    d1 = total_xi_derivatives(geom05.model, geom05, xi)[1]
    assert np.linalg.norm(d1 - fd) <= 1e-4 * np.linalg.norm(d1)


def test_scaled_derivative_bound(geom05):
    xis = np.geomspace(1e-3, 1.9, 12)
    vals = [np.linalg.norm(scaled_diss_derivatives(geom05.model, geom05, x)[1], 2) * x for x in xis]
    # bounded, and no growth as xi -> 0
    assert max(vals) < 50 and vals[0] <= vals[3]


def test_deriv_argument_checks(geom05):
    with pytest.raises(VolterraError):
        deriv_diss_zone(geom05.model, geom05, 0.1, 3)
    with pytest.raises(VolterraError):
        deriv_diss_zone(geom05.model, geom05, 5.0, 1)
