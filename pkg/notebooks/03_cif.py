# %% [markdown]
# # Continuous integrate-and-fire
#
# Each encoder frame carries a weight in [0, 1]. Weights accumulate until
# they reach the threshold, at which point a token embedding fires. A
# frame that crosses the threshold is split between two tokens.

# %%
import numpy as np

from sasot.cif import CifConfig, cif_backward, cif_forward, scale_alpha
from sasot.gradcheck import central_difference, random_cif_instance, relative_error

h = np.array([[1.0, 0.0], [0.0, 1.0], [2.0, 2.0]])
r = cif_forward(h, [0.6, 0.6, 0.8])
print(r.embeddings)       # 0.6 h1 + 0.4 h2, 0.2 h2 + 0.8 h3
print(r.boundaries, r.contributions)

# %% [markdown]
# During training the weights are rescaled so that exactly as many tokens
# fire as the label has.

# %%
alpha = np.random.default_rng(0).uniform(0, 1, size=20)
print(cif_forward(np.zeros((20, 1)), scale_alpha(alpha, 7)).num_tokens)

# %% [markdown]
# The backward pass holds the firing pattern fixed. Away from firing ties
# it agrees with central differences.

# %%
rng = np.random.default_rng(1)
h, alpha = random_cif_instance(rng, frames=6)
g = rng.normal(size=cif_forward(h, alpha).embeddings.shape)
_, ga = cif_backward(h, alpha, CifConfig(), g)
fd = central_difference(lambda x: np.sum(g * cif_forward(h, x).embeddings), alpha)
print("max rel. error:", relative_error(ga, fd).max())
