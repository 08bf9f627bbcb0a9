import json

import numpy as np
import pytest

from oracles import exhaustive_edits, naive_cpwer
from sasot.metrics import (EditCounts, MetricsError, cpwer, edit_distance, score_file,
                           score_records, wer)

VOCAB = ["a", "b", "c", "d"]


def random_tokens(rng, max_len=6):
    return [str(t) for t in rng.choice(VOCAB, size=int(rng.integers(0, max_len + 1)))]


def test_identical():
    assert edit_distance("a b c", "a b c") == EditCounts(0, 0, 0, 3)


def test_single_substitution():
    assert edit_distance("a b c", "a x c") == EditCounts(1, 0, 0, 3)


def test_single_deletion_rate():
    c = edit_distance("hello how are you", "hello how you")
    assert (c.substitutions, c.deletions, c.insertions) == (0, 1, 0)
    assert c.rate == 0.25


def test_tie_break_prefers_substitution():
    # "a b" -> "b c": 2 subs or 1 del + 1 ins, both cost 2
    c = edit_distance(["a", "b"], ["b", "c"])
    assert (c.substitutions, c.deletions, c.insertions) == (2, 0, 0)


def test_edit_distance_matches_exhaustive(rng):
    for _ in range(400):
        ref, hyp = random_tokens(rng), random_tokens(rng)
        c = edit_distance(ref, hyp)
        assert c.errors == exhaustive_edits(ref, hyp)
        assert c.substitutions + c.deletions <= c.ref_len == len(ref)
        assert len(ref) - c.deletions + c.insertions == len(hyp)


def test_edit_distance_swap_symmetry(rng):
    for _ in range(2000):
        a, b = random_tokens(rng), random_tokens(rng)
        ab, ba = edit_distance(a, b), edit_distance(b, a)
        assert ab.errors == ba.errors
        assert ab.substitutions == ba.substitutions
        assert (ab.deletions, ab.insertions) == (ba.insertions, ba.deletions)


def test_wer_conventions():
    assert wer("a b", "a b") == 0.0
    assert wer([], []) == 0.0
    assert wer("a b c d e f g", "a b c d e f x") == pytest.approx(1 / 7)
    degenerate = edit_distance([], ["x", "y"])
    assert degenerate.degenerate and degenerate.rate == 2.0


REFS = {"spk0": "hello how are you", "spk1": "I am fine"}


def test_cpwer_perfect_and_swapped():
    assert cpwer(REFS, ["hello how are you", "I am fine"]).best_rate == 0.0
    rep = cpwer(REFS, ["I am fine", "hello how are you"])
    assert rep.best_rate == 0.0 and rep.best_permutation == (1, 0)


def test_cpwer_one_substitution():
    rep = cpwer(REFS, ["hello how are you", "I am fined"])
    assert rep.best_rate == pytest.approx(1 / 7)
    assert rep.totals.substitutions == 1
    assert min(r for _, r in rep.per_permutation) == rep.best_rate
    assert len(rep.per_permutation) == 2


def test_cpwer_pads_missing_channels():
    rep = cpwer(REFS, ["hello how are you"])
    assert rep.best_rate == pytest.approx(3 / 7)


def test_cpwer_rejects_too_many_speakers():
    with pytest.raises(MetricsError):
        cpwer([["a"]] * 5, [])
    with pytest.raises(MetricsError):
        cpwer([], [])


def test_cpwer_matches_naive_oracle(rng):
    for _ in range(200):
        k = int(rng.integers(1, 4))
        refs = [random_tokens(rng) for _ in range(k)]
        hyps = [random_tokens(rng) for _ in range(int(rng.integers(0, k + 1)))]
        assert cpwer(refs, hyps).best_rate == naive_cpwer(refs, hyps)


def test_cpwer_channel_permutation_invariance(rng):
    for _ in range(100):
        k = int(rng.integers(1, 4))
        refs = [random_tokens(rng) for _ in range(k)]
        hyps = [random_tokens(rng) for _ in range(k)]
        perm = rng.permutation(k)
        assert cpwer(refs, hyps).best_rate == cpwer(refs, [hyps[i] for i in perm]).best_rate
        assert cpwer(refs, refs).best_rate == 0.0


def test_score_records_phrase_misassignment():
    refs = {"spk1": "the sunbeams shine on us take care of it", "spk2": "please hold on while I check"}
    correct = "the sunbeams <cc> please hold <cc> shine on us <cc> on while <cc> take care of it <cc> I check"
    wrong = "please hold <cc> the sunbeams <cc> shine on us <cc> on while take care <cc> of it <cc> I check"
    good = score_records([{"utt_id": "x", "refs": refs, "hyp": correct}])
    bad = score_records([{"utt_id": "x", "refs": refs, "hyp": wrong}])
    assert good["overall_cpwer"] == 0.0
    assert bad["overall_cpwer"] > good["overall_cpwer"]


def test_score_file(tmp_path):
    p = tmp_path / "s.jsonl"
    p.write_text(json.dumps({"utt_id": "u", "refs": REFS, "hyp": "I am fine <cc> hello how are you"}) + "\n")
    rep = score_file(p)
    assert rep["overall_cpwer"] == 0.0
    assert rep["utterances"][0]["assignment"] == {"spk0": 1, "spk1": 0}
    p.write_text('{"refs": {}}\n')
    with pytest.raises(MetricsError, match="line 1"):
        score_file(p)
