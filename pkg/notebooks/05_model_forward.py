# %% [markdown]
# # A toy forward pass
#
# Features go through two encoders. The ASR branch estimates CIF weights
# and fires token embeddings; the speaker branch is pooled over the same
# token spans and fed to the speaker decoder, whose hidden layer is the
# speaker embedding used by the ASR decoder.

# %%
import numpy as np

from sasot.labels import TsotLabel
from sasot.model import ModelConfig, SaSotModel, build_vocab

label = TsotLabel.from_text("hello how <cc> I <cc> are <cc> am <cc> you <cc> fine")
cfg = ModelConfig(vocab=build_vocab(label.tokens), seed=0)
model = SaSotModel(cfg)
feats = np.random.default_rng(0).normal(size=(200, cfg.feature_dim))

trace = model.forward(feats, label, speaker_ids=[0, 1], use_saa=True)
for name, shape in trace.summary()["shapes"].items():
    print(f"{name:20s} {shape}")

# %%
for name, value in trace.losses.items():
    print(f"{name:6s} {value:.4f}")

# %% [markdown]
# Without a label the model decodes greedily; the token count comes from
# the unscaled weights.

# %%
greedy = model.forward(feats)
print(len(greedy.tokens), greedy.tokens[:8])
