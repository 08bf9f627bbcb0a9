import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import EXAMPLE_TEXT, example_transcripts
from sasot.labels import TimedWord, serialize_tsot
from sasot.mixsim import (AlignedUtterance, AlignmentParseError, EmptyInput, IncompatibleSources,
                          InsufficientCorpus, build_dataset, load_alignments, simulate_mixture,
                          synthesize_features, synthesize_signal, write_manifest)


def utt(uid, signal, rate=1, words=(), speaker=0):
    return AlignedUtterance(uid, speaker, np.asarray(signal, float), rate, tuple(words))


def toy_corpus(k=5, rate=100, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(k):
        dur = float(rng.uniform(0.5, 2.0))
        times = np.sort(rng.uniform(0, 0.9 * dur, size=int(rng.integers(1, 5))))
        times = np.unique(np.round(times, 3))
        words = [TimedWord(f"w{i}_{j}", float(t), i) for j, t in enumerate(times)]
        out.append(AlignedUtterance(f"u{i}", i, rng.normal(size=int(dur * rate)), rate, words))
    return out


def test_mixture_offset_add():
    mix = simulate_mixture(utt("a", [1, 1]), utt("b", [2, 2]), shift=1.0)
    np.testing.assert_array_equal(mix.signal, [1, 3, 2])
    assert mix.is_overlapped


def test_mixture_zero_shift_self():
    a = utt("a", [0.5, -1.0, 2.0])
    np.testing.assert_array_equal(simulate_mixture(a, a, 0.0).signal, 2 * a.signal)


def test_mixture_is_symmetric_at_zero_shift():
    a, b = utt("a", [1.0, 2.0, 3.0]), utt("b", [-1.0, 0.5, 4.0])
    np.testing.assert_array_equal(simulate_mixture(a, b, 0).signal, simulate_mixture(b, a, 0).signal)


def test_mixture_length_and_label_invariants(rng):
    corpus = toy_corpus()
    for _ in range(50):
        i, j = rng.choice(len(corpus), 2, replace=False)
        a, b = corpus[i], corpus[j]
        shift = float(rng.uniform(0, a.duration))
        mix = simulate_mixture(a, b, shift)
        off = int(round(shift * a.sample_rate))
        assert len(mix.signal) == max(len(a.signal), off + len(b.signal))
        mix.label.validate()
        assert mix.label == serialize_tsot([a.transcript(0), b.transcript(1, shift)])


def test_example_mixture():
    spk0, spk1 = example_transcripts()
    a = utt("a", np.zeros(20), rate=10, words=spk0.words)
    # spk1 words re-based to start at 0.2 s; a 0.5 s shift puts "I" at 0.7 s
    b_words = [w.shifted(-0.5) for w in spk1.words]
    b = utt("b", np.zeros(12), rate=10, words=b_words, speaker=1)
    assert simulate_mixture(a, b, 0.5).label.text == EXAMPLE_TEXT


def test_mixture_rejects_rate_mismatch():
    with pytest.raises(IncompatibleSources):
        simulate_mixture(utt("a", [1], rate=1), utt("b", [1], rate=2), 0.0)


def test_unmixed_sample():
    a = toy_corpus(1)[0]
    mix = simulate_mixture(a, None)
    assert not mix.is_overlapped and mix.shift == 0.0
    np.testing.assert_array_equal(mix.signal, a.signal)


def _write(path, objs):
    path.write_text("".join(json.dumps(o) + "\n" for o in objs))
    return path


def test_load_alignments(tmp_path):
    line = {"utt_id": "u", "speaker": 3, "sample_rate": 10, "signal": [0.0] * 10,
            "words": [{"text": "hi", "start": 0.1, "end": 0.4}]}
    utts = load_alignments(_write(tmp_path / "a.jsonl", [line]))
    assert len(utts) == 1
    assert utts[0].words[0] == TimedWord("hi", 0.1, 3, 0.4)
    assert load_alignments(_write(tmp_path / "empty.jsonl", [])) == []


def test_load_alignments_signal_ref_and_synth(tmp_path):
    np.save(tmp_path / "s.npy", np.arange(5.0))
    np.arange(4.0).astype("<f8").tofile(tmp_path / "s.raw")
    lines = [
        {"utt_id": "a", "speaker": 0, "sample_rate": 5, "signal_ref": "s.npy", "words": []},
        {"utt_id": "b", "speaker": 0, "sample_rate": 4, "signal_ref": "s.raw", "words": []},
        {"utt_id": "c", "speaker": 0, "sample_rate": 100, "duration": 1.0,
         "words": [{"text": "x", "start": 0.2, "end": 0.5}]},
    ]
    a, b, c = load_alignments(_write(tmp_path / "m.jsonl", lines))
    np.testing.assert_array_equal(a.signal, np.arange(5.0))
    np.testing.assert_array_equal(b.signal, np.arange(4.0))
    assert len(c.signal) == 100 and np.any(c.signal[20:50] != 0) and np.all(c.signal[:20] == 0)


def test_load_alignments_errors_name_line(tmp_path):
    good = {"utt_id": "u", "speaker": 0, "sample_rate": 10, "signal": [0.0] * 10, "words": []}
    bad = dict(good, words=[{"text": "late", "start": 5.0}])
    with pytest.raises(AlignmentParseError, match="line 2"):
        load_alignments(_write(tmp_path / "a.jsonl", [good, bad]))
    with pytest.raises(AlignmentParseError, match="line 1"):
        load_alignments(_write(tmp_path / "b.jsonl", [{"utt_id": "u"}]))
    with pytest.raises(AlignmentParseError):
        load_alignments(tmp_path / "missing.jsonl")


def test_build_dataset_p0_all_unmixed():
    samples = list(build_dataset(toy_corpus(), 0.0, seed=1, n=20))
    assert len(samples) == 20 and not any(s.is_overlapped for s in samples)


def test_build_dataset_deterministic(tmp_path):
    corpus = toy_corpus()
    write_manifest(build_dataset(corpus, 1.0, 7, 10), tmp_path / "a.jsonl")
    write_manifest(build_dataset(corpus, 1.0, 7, 10), tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_build_dataset_partner_and_shift_ranges():
    corpus = toy_corpus()
    for s in build_dataset(corpus, 1.0, 3, 200):
        a, b = s.sources
        assert a.utt_id != b.utt_id
        assert 0.0 <= s.shift < a.duration
        s.label.validate()


def test_build_dataset_overlap_fraction():
    corpus = toy_corpus()
    frac = np.mean([s.is_overlapped for s in build_dataset(corpus, 0.5, 11, 10000)])
    assert abs(frac - 0.5) <= 0.02


def test_build_dataset_insufficient_corpus():
    with pytest.raises(InsufficientCorpus):
        list(build_dataset(toy_corpus(1), 0.5, 0, 3))
    assert len(list(build_dataset(toy_corpus(1), 0.0, 0, 3))) == 3


def test_manifest_record_schema():
    corpus = toy_corpus()
    rec = simulate_mixture(corpus[0], corpus[1], 0.25).to_record()
    assert {"utt_id", "speaker", "sample_rate", "signal", "words", "label", "shift"} <= set(rec)
    assert rec["label"] == simulate_mixture(corpus[0], corpus[1], 0.25).label.text


def test_features_zero_signal():
    f = synthesize_features((np.zeros(1600), 16000), downsample=2)
    assert f.shape == (5, 8) and np.all(f == 0)


def test_features_downsample_arithmetic():
    # hop 10 ms at 1 kHz = 10 samples; 160 samples -> 16 raw frames
    assert synthesize_features((np.ones(160), 1000), downsample=4).shape[0] == 4
    assert synthesize_features((np.ones(160), 1000), downsample=1).shape[0] == 16


def test_features_reject_empty():
    with pytest.raises(EmptyInput):
        synthesize_features((np.zeros(0), 1000))


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 3000), st.integers(0, 2**16))
def test_features_downsample8_at_most_half_of_4(n, seed):
    sig = np.random.default_rng(seed).normal(size=n)
    f4 = synthesize_features((sig, 1000), downsample=4)
    f8 = synthesize_features((sig, 1000), downsample=8)
    assert f8.shape[0] <= f4.shape[0] / 2


def test_synthesize_signal_deterministic():
    words = [TimedWord("a", 0.1, 0, 0.3)]
    np.testing.assert_array_equal(synthesize_signal(words, 1.0, 100, 5), synthesize_signal(words, 1.0, 100, 5))
