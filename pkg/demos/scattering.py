# Modified scattering: lambda(t) E0(t)^-1 E(t) -> W_+ with rate 1/t, and det W_+ = 1.

import numpy as np

from weakdiss.coeff import make_family
from weakdiss.diag import build_hierarchy
from weakdiss.scattering import scattering_convergence, w_plus
from weakdiss.zones import ZoneGeometry

model = make_family("scale_invariant", {"mu": 0.5})
geom = ZoneGeometry(2.0, model, k=2)
hier = build_hierarchy(model, 2)

for xi in (0.01, 0.1, 1.0, 10.0):
    W = w_plus(hier, model, geom, xi)
    print("xi=%5.2f  det W_+ - 1 = %.1e   |W_+| = %.4f" % (xi, abs(np.linalg.det(W) - 1), np.linalg.norm(W, 2)))

horizons = np.geomspace(1e2, 1e4, 5)
vals, slope = scattering_convergence(hier, model, geom, 1.0, horizons)
for T, v in zip(horizons, vals):
    print("T = %8.1f   distance %.3e" % (T, v))
print("log-log slope %.3f (tail bound predicts -1)" % slope)
