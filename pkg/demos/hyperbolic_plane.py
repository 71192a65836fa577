# %% [markdown]
# The zero structure on the half-plane x >= 0 is spanned by x d/dx and x d/dy.  With the
# frame declared orthonormal the induced metric is (dx^2 + dy^2) / x^2, the hyperbolic plane.

# %%
import numpy as np

from liestruct import Chart, MetricOnA, builtin, integrate, make_state, sectional_curvature
from liestruct.geoflow import boundary_depth_invariance
from liestruct.riemann import boundedness_probe

chart = Chart(2, 1)
zero = builtin("zero", chart)
G = MetricOnA.identity(2)
print(zero.frame_strings())

# %% [markdown]
# Sectional curvature is -1 everywhere, right up to the boundary.

# %%
for x in (1.0, 1e-3, 1e-8):
    print(x, sectional_curvature(zero, G, [x, 0.3]))

# %% [markdown]
# Frame norms of R stay put as we approach the face, so the geometry is bounded.

# %%
rep = boundedness_probe(zero, G, "R", face=1)
print(rep.bounded, rep.max_value, rep.slope)

# %% [markdown]
# A vertical geodesic heading for the boundary: x(t) = x0 exp(-t) and it never arrives.

# %%
traj = integrate(zero, G, make_state(zero, G, [1.0, 0.0], [-1.0, 0.0]), T=10.0, dt=1e-3)
err = np.max(np.abs(traj.p[:, 0] - np.exp(-traj.t)))
print("max |x - e^-t| =", err)
print("depth preserved:", bool(boundary_depth_invariance(traj)))
print("norm drift per unit time:", traj.drift_per_unit_time())

# %% [markdown]
# A tilted start traces a half-circle orthogonal to the boundary.

# %%
traj = integrate(zero, G, make_state(zero, G, [1.0, 0.0], [0.0, 1.0]), T=4.0, dt=1e-3)
radius = np.hypot(traj.p[:, 0], traj.p[:, 1])
print("radius spread:", radius.max() - radius.min())
