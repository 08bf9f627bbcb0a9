# %% [markdown]
# # Serialized labels
#
# Two speakers talk over each other. Their words are merged into one
# stream ordered by emission time, and a `<cc>` token marks every switch
# between the two virtual output channels.

# %%
from sasot.labels import SpeakerTranscript, deserialize_tsot, masked_labels, serialize_tsot

spk0 = SpeakerTranscript.from_pairs(0, [("hello", 0.1), ("how", 0.5), ("are", 0.9), ("you", 1.3)])
spk1 = SpeakerTranscript.from_pairs(1, [("I", 0.7), ("am", 1.1), ("fine", 1.5)])
label = serialize_tsot([spk0, spk1])
print(label.text)
print(label.provenance)  # speaker per token, -1 for <cc>

# %% [markdown]
# Splitting at `<cc>` gives the channels back.

# %%
ch0, ch1 = deserialize_tsot(label)
print(ch0, ch1)

# %% [markdown]
# For the speaker-aware target, each speaker gets a copy of the label
# where the other speaker's words (and every `<cc>`) are masked. The start
# symbol tells the decoder which channel it should transcribe.

# %%
for ml in masked_labels(label):
    print(ml.start_symbol, ml.text)
