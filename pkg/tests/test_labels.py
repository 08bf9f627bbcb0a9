import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import EXAMPLE_TEXT, example_transcripts, random_transcripts
from sasot.labels import (CC, CHANNEL_CHANGE, MASK, S1S, S2S, InvalidTranscript, LabelError,
                          SpeakerTranscript, TimedWord, TsotLabel, UnknownSpeaker,
                          UnsupportedSpeakerCount, deserialize_tsot, make_masked_label,
                          masked_labels, serialize_tsot)


def test_example_serialization():
    label = serialize_tsot(list(example_transcripts()))
    assert label.text == EXAMPLE_TEXT
    label.validate()
    assert label.provenance == (0, 0, -1, 1, -1, 0, -1, 1, -1, 0, -1, 1)


def test_single_transcript_has_no_cc():
    t = SpeakerTranscript.from_pairs(0, [("a", 0.0), ("b", 1.0), ("c", 2.0)])
    assert serialize_tsot([t]).text == "a b c"


def test_tie_broken_by_speaker_index():
    x = SpeakerTranscript.from_pairs(0, [("x", 1.0)])
    y = SpeakerTranscript.from_pairs(1, [("y", 1.0)])
    label = serialize_tsot([y, x])
    assert label.text == "x <cc> y"
    label.validate()


def test_channel_zero_is_earliest_speaker():
    x = SpeakerTranscript.from_pairs(0, [("late", 2.0)])
    y = SpeakerTranscript.from_pairs(1, [("early", 1.0)])
    label = serialize_tsot([x, y])
    assert label.text == "early <cc> late"
    assert label.speakers == [1, 0]
    assert deserialize_tsot(label) == (["early"], ["late"])


def test_rejects_three_speakers():
    ts = [SpeakerTranscript.from_pairs(s, [("w", float(s))]) for s in range(3)]
    with pytest.raises(UnsupportedSpeakerCount):
        serialize_tsot(ts)


def test_rejects_unsorted_and_duplicate_times():
    with pytest.raises(InvalidTranscript):
        SpeakerTranscript.from_pairs(0, [("a", 1.0), ("b", 0.5)])
    with pytest.raises(InvalidTranscript):
        SpeakerTranscript.from_pairs(0, [("a", 1.0), ("b", 1.0)])


@pytest.mark.parametrize("text", ["", "<cc>", "<mask>", "two words"])
def test_timed_word_rejects_bad_text(text):
    with pytest.raises(InvalidTranscript):
        TimedWord(text, 0.0)


def test_timed_word_rejects_negative_time():
    with pytest.raises(InvalidTranscript):
        TimedWord("a", -0.1)


def test_deserialize_example():
    assert deserialize_tsot(EXAMPLE_TEXT) == (["hello", "how", "are", "you"], ["I", "am", "fine"])
    assert deserialize_tsot("a b c") == (["a", "b", "c"], [])


@pytest.mark.parametrize("hyp,expected", [
    ("<cc> a", ([], ["a"])),
    ("a <cc>", (["a"], [])),
    ("a <cc> <cc> b", (["a", "b"], [])),
    ("<cc> <cc> <cc>", ([], [])),
    ("", ([], [])),
])
def test_deserialize_malformed_toggles_per_cc(hyp, expected):
    assert deserialize_tsot(hyp) == expected


def test_masked_example():
    label = TsotLabel.from_text(EXAMPLE_TEXT)
    m0 = make_masked_label(label, 0)
    assert m0.start_symbol == S1S
    assert m0.text == "<s1s> hello how <mask> <mask> <mask> are <mask> <mask> <mask> you <mask> <mask>"
    m1 = make_masked_label(label, 1)
    assert m1.start_symbol == S2S
    assert " ".join(m1.tokens) == "<mask> <mask> <mask> I <mask> <mask> <mask> am <mask> <mask> <mask> fine"


def test_masked_identity_single_speaker():
    label = TsotLabel.from_text("a b c")
    m = make_masked_label(label, 0)
    assert m.start_symbol == S1S and m.tokens == ("a", "b", "c")
    with pytest.raises(UnknownSpeaker):
        make_masked_label(label, 1)


def test_masked_start_symbol_follows_channel_order():
    x = SpeakerTranscript.from_pairs(0, [("late", 2.0)])
    y = SpeakerTranscript.from_pairs(1, [("early", 1.0)])
    label = serialize_tsot([x, y])
    assert make_masked_label(label, 1).start_symbol == S1S
    assert make_masked_label(label, 0).start_symbol == S2S


def test_validate_catches_broken_labels():
    with pytest.raises(LabelError):
        TsotLabel.from_text("<cc> a").validate()
    with pytest.raises(LabelError):
        TsotLabel(("a", "b"), (0, 1)).validate()
    with pytest.raises(LabelError):
        TsotLabel(("a",), (0, 1))


def _check_label_against(transcripts, label):
    label.validate()
    merged = sorted((w for t in transcripts for w in t.words), key=lambda w: (w.emit_time, w.speaker))
    cross = sum(a.speaker != b.speaker for a, b in zip(merged, merged[1:]))
    assert label.tokens.count(CC) == cross
    assert [t for t in label.tokens if t != CC] == [w.text for w in merged]
    channels = deserialize_tsot(label)
    by_speaker = {t.speaker: t.texts for t in transcripts}
    first = label.speakers[0]
    assert channels[0] == by_speaker[first]
    assert channels[1] == by_speaker[1 - first]


def _check_masks(label):
    sets = []
    for m in masked_labels(label):
        assert len(m.tokens) == len(label.tokens)
        for tok, src, p in zip(m.tokens, label.tokens, label.provenance):
            assert tok == (src if p == m.target_speaker else MASK)
        sets.append({i for i, t in enumerate(m.tokens) if t != MASK})
    words = {i for i, t in enumerate(label.tokens) if t != CC}
    assert set.union(*sets) == words
    for a, b in itertools.combinations(sets, 2):
        assert not a & b


def test_roundtrip_random_pairs(rng):
    for _ in range(100):
        ts = random_transcripts(rng)
        label = serialize_tsot(ts)
        _check_label_against(ts, label)
        _check_masks(label)


def test_tie_heavy_random_pairs_satisfy_invariants(rng):
    for _ in range(200):
        ts = random_transcripts(rng, max_words=5, grid=6)
        _check_label_against(ts, serialize_tsot(ts))


def test_serialize_is_deterministic(rng):
    ts = random_transcripts(rng)
    assert serialize_tsot(ts).text.encode() == serialize_tsot(list(ts)).text.encode()


times = st.lists(st.integers(0, 40), min_size=1, max_size=8, unique=True).map(sorted)


@settings(max_examples=200, deadline=None)
@given(times, times)
def test_roundtrip_property(t0, t1):
    a = SpeakerTranscript.from_pairs(0, [(f"a{i}", t / 4) for i, t in enumerate(t0)])
    b = SpeakerTranscript.from_pairs(1, [(f"b{i}", t / 4) for i, t in enumerate(t1)])
    label = serialize_tsot([a, b])
    _check_label_against([a, b], label)
    _check_masks(label)
    assert all(p != CHANNEL_CHANGE for t, p in zip(label.tokens, label.provenance) if t != CC)
