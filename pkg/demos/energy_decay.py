# Energy decay for u_tt + b(t) u_t - Laplace u = 0 with weak damping b ~ mu/(1+t).
# The multiplier norm sup_xi ||E(t, xi)|| should track 1/lambda(t), lambda = exp(1/2 int b).

import numpy as np

from weakdiss.coeff import check_assumptions, make_family
from weakdiss.diag import build_hierarchy
from weakdiss.rates import ENERGY, operator_norm_curve
from weakdiss.zones import choose_zone_constant

model = make_family("scale_invariant", {"mu": 0.5})
rep = check_assumptions(model)
print("assumption verdicts:", rep.verdicts)
print("limsup t b(t) ~", round(rep.c_limsup, 4))

# zone constant: smallest N in 2, 4, 8, ... with ||N_k - I|| <= 1/2 on the hyperbolic zone
geom = choose_zone_constant(model, k=3)
print("zone constant N =", geom.N, " margin", round(geom.margin, 3))

t = np.geomspace(1e2, 1e4, 5)
xi = np.geomspace(1e-3, 1e2, 16)   # coarse grid, enough for the energy sup
curve = operator_norm_curve(model, geom, ENERGY, t, xi, build_hierarchy(model, 3))

for row in curve.rows():
    print("t = %9.1f   sup ||E|| = %.5f   1/lambda = %.5f" % (row["t"], row["measured"], row["predicted"]))
print("fitted exponent %.4f (expected -mu/2 = %.3f)" % (curve.exponent, -0.25))

# oscillating damping: same rate, the oscillation only moves the constant
for alpha in (5.0, 20.0):
    m = make_family("oscillating", {"alpha": alpha})
    g = choose_zone_constant(m, 3)
    r = operator_norm_curve(m, g, ENERGY, t, xi, build_hierarchy(m, 3))
    print("oscillating alpha=%4.1f  exponent %.4f" % (alpha, r.exponent))
