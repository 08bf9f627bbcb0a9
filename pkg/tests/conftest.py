import numpy as np
import pytest

from sasot.labels import SpeakerTranscript

EXAMPLE_TEXT = "hello how <cc> I <cc> are <cc> am <cc> you <cc> fine"
WORDS = ["the", "sun", "beams", "take", "care", "of", "a", "b", "c", "hello", "fine"]


def example_transcripts():
    spk0 = SpeakerTranscript.from_pairs(0, [("hello", 0.1), ("how", 0.5), ("are", 0.9), ("you", 1.3)])
    spk1 = SpeakerTranscript.from_pairs(1, [("I", 0.7), ("am", 1.1), ("fine", 1.5)])
    return spk0, spk1


def random_transcripts(rng, max_words=8, grid=None):
    """Two random transcripts; ``grid`` snaps times to force ties across speakers."""
    out = []
    for spk in (0, 1):
        n = int(rng.integers(1, max_words + 1))
        if grid:
            times = np.sort(rng.choice(np.arange(grid) * 0.1, size=min(n, grid), replace=False))
        else:
            times = np.sort(rng.uniform(0.0, 5.0, size=n))
        words = [str(rng.choice(WORDS)) for _ in times]
        out.append(SpeakerTranscript.from_pairs(spk, zip(words, [float(t) for t in times])))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
