# # Sliding-window regressor extension
#
# Build a linear regression z = phi^T theta + w, extend it over a sliding
# window and look at the pieces the estimators consume.

# %%
import numpy as np

from paest.matcore import adjugate, determinant
from paest.regext import LreStream, window_extension
from paest.sigproc import SignalTrace, TimeGrid, correlation_decay, pe_bounds

# %% [markdown]
# Two-parameter regression with a perturbation at a frequency the regressor
# does not contain.

# %%
g = TimeGrid.from_horizon(0.0, 0.01, 200.0)
phi = SignalTrace.from_function(g, lambda t: np.vstack([np.sin(t), np.cos(2 * t) + 0.5]))
theta = np.array([1.0, -2.0])
w = 0.3 * np.sin(7 * g.times)
lre = LreStream(phi, SignalTrace(g, phi.samples @ theta + w), theta, SignalTrace(g, w))

# %%
Y, Phi = window_extension(lre, 20.0)
k = g.index(200.0)
print("Phi =\n", Phi[k])
print("adj(Phi) Y / det(Phi) =", adjugate(Phi[k]) @ Y[k] / determinant(Phi[k]), "true", theta)

# %% [markdown]
# Excitation bounds over every window position, and the decay of the
# regressor/perturbation correlation as the window grows.

# %%
print("alpha bounds:", pe_bounds(phi, 20.0))
for i in range(2):
    c1, c4 = correlation_decay(phi.component(i), lre.w, 20.0, 4)
    print(f"phi_{i + 1} vs w: rms correlation {c1:.4f} at T, {c4:.4f} at 4T")
