# %% [markdown]
# # Speaker-aware attention
#
# Softmax attention weights are multiplied by `(1 + cos) / 2`, where `cos`
# is the similarity between the speaker embeddings of query and key, and
# each row is renormalized. Tokens from other speakers lose weight.

# %%
import numpy as np

from sasot.saa import cosine_similarity_matrix, scaled_dot_attention, speaker_aware_attention

rng = np.random.default_rng(0)
q, k, v = rng.normal(size=(4, 3)), rng.normal(size=(4, 3)), rng.normal(size=(4, 2))
spk = np.array([[1.0, 0.0], [1.0, 0.1], [0.0, 1.0], [0.1, 1.0]])
sim = cosine_similarity_matrix(spk)
print(np.round(sim, 3))

# %%
plain = scaled_dot_attention(q, k, v, causal=True)
aware = speaker_aware_attention(q, k, v, sim, causal=True)
print(np.round(plain.weights, 3))
print(np.round(aware.weights, 3))

# %% [markdown]
# With a single speaker every similarity is one and nothing changes.

# %%
same = speaker_aware_attention(q, k, v, np.ones((4, 4)), causal=True)
print(np.abs(same.o - plain.o).max())
