# %% [markdown]
# # Simulated two-speaker mixtures
#
# The second source is delayed by a random shift and added to the first.
# Word times of the second source move by the same shift, so the mixture
# label follows directly from the serializer.

# %%
import numpy as np

from sasot.labels import TimedWord
from sasot.mixsim import AlignedUtterance, build_dataset, simulate_mixture, synthesize_features, synthesize_signal

rate = 8000
w0 = [TimedWord(t, s, 0, s + 0.2) for t, s in [("hello", 0.1), ("how", 0.5), ("are", 0.9), ("you", 1.3)]]
w1 = [TimedWord(t, s, 1, s + 0.2) for t, s in [("I", 0.2), ("am", 0.6), ("fine", 1.0)]]
a = AlignedUtterance("a", 0, synthesize_signal(w0, 1.6, rate, seed=0), rate, w0)
b = AlignedUtterance("b", 1, synthesize_signal(w1, 1.3, rate, seed=1), rate, w1)

mix = simulate_mixture(a, b, shift=0.5)
print(mix.utt_id, len(mix.signal) / rate, "s")
print(mix.label.text)

# %% [markdown]
# A dataset stream mixes each utterance with probability `p`.

# %%
corpus = [a, b, AlignedUtterance("c", 2, np.zeros(rate), rate, ())]
flags = [s.is_overlapped for s in build_dataset(corpus, p=0.5, seed=0, n=2000)]
print("overlapped fraction:", np.mean(flags))

# %% [markdown]
# Log band energies stand in for filterbank features.

# %%
feats = synthesize_features(mix, downsample=4)
print(feats.shape)
