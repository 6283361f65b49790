"""Closed-form references independent of the package integrators."""

import numpy as np
from scipy.special import jv, jvp, yv, yvp


def _bessel_pair(nu, xi, tau, Z, Zp):
    # u = tau^nu Z_nu(xi tau) solves u'' + (1 - 2 nu)/tau u' + xi^2 u = 0
    val = tau ** nu * Z(nu, xi * tau)
    der = nu * tau ** (nu - 1) * Z(nu, xi * tau) + tau ** nu * xi * Zp(nu, xi * tau)
    return val, der


def bessel_solution(mu, xi, u0, v0, t):
    """(u(t), u'(t)) for u'' + mu/(1+t) u' + xi^2 u = 0 with u(0)=u0, u'(0)=v0."""
    nu = (1 - mu) / 2
    J0, Jd = _bessel_pair(nu, xi, 1.0, jv, jvp)
    Y0, Yd = _bessel_pair(nu, xi, 1.0, yv, yvp)
    c = np.linalg.solve(np.array([[J0, Y0], [Jd, Yd]], dtype=complex), np.array([u0, v0], dtype=complex))
    Jt, Jdt = _bessel_pair(nu, xi, 1 + t, jv, jvp)
    Yt, Ydt = _bessel_pair(nu, xi, 1 + t, yv, yvp)
    return c[0] * Jt + c[1] * Yt, c[0] * Jdt + c[1] * Ydt


def bessel_fundamental(mu, N, xi, t):
    """E(t, 0, xi) in micro-energy variables for scale-invariant damping.

    Needs t >= t_xi so that the weight at time t is |xi|.
    """
    h0 = N if xi < N else xi
    cols = []
    for u0, v0 in ((1 / h0, 0.0), (0.0, 1j)):
        u, up = bessel_solution(mu, xi, u0, v0, t)
        cols.append([xi * u, -1j * up])
    return np.array(cols).T


def free_rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, 1j * s], [1j * s, c]])
