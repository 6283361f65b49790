# Radial solutions in R^3 with band-limited data: sup_r |u(t, r)| ~ (1+t)^-1 / lambda(t).

import numpy as np

from weakdiss.coeff import make_family
from weakdiss.rates import RadialData, dispersive_decay_experiment
from weakdiss.zones import ZoneGeometry

data = RadialData(0.5, 2.0)   # bump supported in 0.5 <= |xi| <= 2
t = np.geomspace(1e2, 1e3, 4)

free = make_family("zero")
r0 = dispersive_decay_experiment(free, ZoneGeometry(2.0, free, 3), 3, t, data)
print("free waves   exponent %.3f" % r0.exponent)

model = make_family("scale_invariant", {"mu": 0.5})
r = dispersive_decay_experiment(model, ZoneGeometry(2.0, model, 3), 3, t, data)
for row in r.rows():
    print("t = %7.1f   sup|u| = %.3e   ratio to prediction %.3f" % (row["t"], row["measured"], row["ratio"]))
print("damped       exponent %.3f, predicted %.3f, branch %s" % (r.exponent, r.predicted_exponent, r.extra["branch"]))
