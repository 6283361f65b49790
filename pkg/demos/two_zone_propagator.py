# Fundamental matrix of the micro-energy system, two ways:
#   - brute force RK on the whole path (the oracle)
#   - Volterra solve in the dissipative zone, then diagonalizer * phase * Q in the hyperbolic one

import numpy as np

from weakdiss.coeff import make_family
from weakdiss.diag import build_hierarchy
from weakdiss.peano import assemble_path
from weakdiss.propagator import det_closed_form, oracle_path
from weakdiss.zones import ZoneGeometry

model = make_family("iterated_log", {"mu": 1.0, "n": 1})
geom = ZoneGeometry(2.0, model, k=2)
hier = build_hierarchy(model, 2)
print(hier.dump().splitlines()[0])

t = np.array([1.0, 10.0, 100.0, 1000.0])
for xi in (0.01, 0.1, 1.0, 10.0):
    O = oracle_path(model, geom, 0.0, xi, t, 1e-11)
    A = assemble_path(hier, model, geom, 0.0, xi, t)
    rel = np.linalg.norm(A - O, 2, axis=(1, 2)) / np.linalg.norm(O, 2, axis=(1, 2))
    det_err = [abs(np.linalg.det(E) - det_closed_form(model, geom, tt, 0.0, xi)) for tt, E in zip(t, O)]
    print("xi=%6.2f  t_xi=%8.1f  max rel diff %.1e  max Liouville defect %.1e"
          % (xi, geom.t_xi(xi), rel.max(), max(det_err)))
