"""Unbounded activations can make the ballistic ODE explode.

For f = h3 the radial right-hand side grows like a high power of r2, so
starting from r2 = 2 the solution reaches infinity after a finite time.
The blow-up time is the integral of 1/rhs from 2 to infinity.
"""

import math

import numpy as np
from scipy.integrate import quad

from sgd_limits import ModelFunctions, make_activation, ode_rhs_m0, rk4
from sgd_limits.errors import DivergenceError, NoFixedPointError
from sgd_limits import fixed_point

mdl = ModelFunctions(make_activation("h3"), 0.0)
for r2 in (1.0, 2.0, 4.0, 10.0):
    print(f"rhs(r2 = {r2:>4}) = {ode_rhs_m0(r2, mdl):.4g}")

t_star = quad(lambda x: 1.0 / ode_rhs_m0(x, mdl), 2.0, math.inf, limit=200)[0]
print(f"predicted blow-up time from r2 = 2: {t_star:.4g}")

try:
    rk4(lambda u: np.array([ode_rhs_m0(u[0], mdl)]), [2.0], 1.0, 1e-6)
except DivergenceError as exc:
    print(f"rk4 divergence guard tripped at t = {exc.time:.4g}")

try:
    fixed_point(mdl)
except NoFixedPointError as exc:
    print(f"and there is no fixed point to settle at: {exc}")
