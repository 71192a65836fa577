# %% [markdown]
# Forms on A and the Dirac operator of the Clifford bundle.  On the algebra of A-forms the
# exterior derivative squares to zero and d + delta is the Dirac operator.

# %%
import numpy as np

from liestruct import AForm, Chart, MetricOnA, SpinorField, builtin, clifford_rep, deRham_d, dirac
from liestruct.forms import dirac_is_drham, form_basis, symbol_ellipticity
from liestruct.riemann import random_polynomial_metric

chart = Chart(2, 1)
zero = builtin("zero", chart)
G = MetricOnA.identity(2)

# %%
omega = AForm(1, {(1,): "x1*sin(y1)", (2,): "exp(x1)"})
print("d omega at (0.3, 0.2):", deRham_d(zero, omega, [0.3, 0.2]))

# %% [markdown]
# Gamma matrices i sigma_j satisfy the Clifford relations exactly in floating point.

# %%
rep = clifford_rep(2)
g1, g2 = rep.gammas
print(np.array_equal(g1 @ g2 + g2 @ g1, np.zeros((2, 2))), np.array_equal(g1 @ g1, -np.eye(2)))

# %% [markdown]
# A constant spinor is not harmonic on the hyperbolic plane: the spin connection contributes.

# %%
psi = SpinorField(("1", "0"))
print(dirac(zero, G, rep, psi, [0.5, 0.0]))

# %% [markdown]
# d + delta agrees with the Clifford Dirac operator, also for a non-constant metric.

# %%
G2 = random_polynomial_metric(2, chart, np.random.default_rng(1))
print(dirac_is_drham(zero, G2, form_basis(2), [0.4, 0.7]))
print("sigma_min:", symbol_ellipticity(rep, G, [0.4, 0.7], [1.0, -2.0], chart), "|xi| =", np.hypot(1.0, 2.0))
