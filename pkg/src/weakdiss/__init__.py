"""Numerical study of wave equations with weak time-dependent dissipation.

u_tt - Δu + b(t) u_t = 0 is treated on the Fourier side: a 2x2 first-order
system for the micro-energy, split into a dissipative zone (Volterra
equations) and a hyperbolic zone (diagonalization plus Peano-Baker series).
"""

from .coeff import CoefficientModel, check_assumptions, make_family
from .diag import build_hierarchy
from .peano import assemble_full, q_infinity
from .propagator import fundamental_solution_oracle
from .scattering import w_plus
from .zones import ZoneGeometry, choose_zone_constant

__all__ = [
    "CoefficientModel",
    "ZoneGeometry",
    "assemble_full",
    "build_hierarchy",
    "check_assumptions",
    "choose_zone_constant",
    "fundamental_solution_oracle",
    "make_family",
    "q_infinity",
    "w_plus",
]

__version__ = "0.1.0"
