# %% [markdown]
# The b structure x d/dx, d/dy makes the boundary into a cylindrical end.  It is flat,
# has infinite volume and satisfies the injectivity radius criteria.

# %%
import numpy as np

from liestruct import Chart, MetricOnA, builtin, validate
from liestruct.geoflow import cvfe_check, lce_check
from liestruct.jets import Bump
from liestruct.riemann import adjoint_identity_check, curvature_norms, volume_probe

chart = Chart(2, 1)
b = builtin("b", chart)
G = MetricOnA.identity(2)
print(validate(b).to_json())

# %%
P = np.array([[0.5, 0.1], [1e-4, -2.0], [1e-7, 3.0]])
print({k: v.max() for k, v in curvature_norms(b, G, P).items()})

# %% [markdown]
# Volume of {x >= eps} over a unit cross-section in y: each halving of eps adds log 2 for
# f = 1, and almost nothing for f = x.

# %%
eps = [2.0**-m for m in range(2, 12)]
for f in ("1", "x1"):
    tab = volume_probe(b, G, f, eps, transverse=[(0.0, 1.0)])
    print(f, "slope per halving:", tab.slope_per_halving, "divergent:", tab.divergent)
print("log 2 =", np.log(2))

# %% [markdown]
# The integration by parts identity int X(f) dmu = int f div(X) dmu, checked by quadrature.

# %%
bump = Bump((0.4, 0.0), (0.3, 0.5))
for X in (["x1", "0"], ["x1^2", "x1*y1"], ["0", "1"]):
    print(X, adjoint_identity_check(b, G, X, bump, grid=200))

# %% [markdown]
# Coordinate vector fields extend, and dx/x, dy is a closed coframe.

# %%
print([cvfe_check(b, G, 1, v).passed for v in ([1, 0], [0, 1], [1, 1])])
print(lce_check(b, [["1/x1", "0"], ["0", "1"]]).passed)
print(lce_check(b, [["1", "0"], ["0", "1"]]).passed)
