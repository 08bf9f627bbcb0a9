"""Word error rate and concatenated minimum-permutation WER (cpWER)."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Sequence, Tuple, Union

from .labels import deserialize_tsot

MAX_CPWER_SPEAKERS = 4

Tokens = Sequence[str]


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class EditCounts:
    substitutions: int = 0
    deletions: int = 0
    insertions: int = 0
    ref_len: int = 0

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def degenerate(self) -> bool:
        """Empty reference but a non-empty hypothesis."""
        return self.ref_len == 0 and self.insertions > 0

    @property
    def rate(self) -> float:
        if self.ref_len == 0:
            # degenerate convention: insertions over a denominator of 1
            return float(self.insertions)
        return self.errors / self.ref_len

    def __add__(self, other: "EditCounts") -> "EditCounts":
        return EditCounts(
            self.substitutions + other.substitutions,
            self.deletions + other.deletions,
            self.insertions + other.insertions,
            self.ref_len + other.ref_len,
        )

    def as_dict(self) -> dict:
        return {"substitutions": self.substitutions, "deletions": self.deletions,
                "insertions": self.insertions, "ref_len": self.ref_len,
                "errors": self.errors}


def _tokens(x) -> List[str]:
    return x.split() if isinstance(x, str) else list(x)


def edit_distance(ref: Tokens, hyp: Tokens) -> EditCounts:
    """Levenshtein alignment of two token sequences.

    Among minimum-cost alignments the one with the most substitutions is
    chosen (substitution preferred over a deletion/insertion pair), which
    makes the counts swap-symmetric: ``edit_distance(b, a)`` has the same
    substitutions with deletions and insertions exchanged.
    """
    ref, hyp = _tokens(ref), _tokens(hyp)
    n, m = len(ref), len(hyp)
    # cells hold (cost, -substitutions, deletions) and are compared as tuples
    d = [[(0, 0, 0)] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        d[i][0] = (i, 0, i)
    for j in range(1, m + 1):
        d[0][j] = (j, 0, 0)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            c, ns, dl = d[i - 1][j - 1]
            sub = ref[i - 1] != hyp[j - 1]
            diag = (c + sub, ns - sub, dl)
            c, ns, dl = d[i - 1][j]
            up = (c + 1, ns, dl + 1)
            c, ns, dl = d[i][j - 1]
            left = (c + 1, ns, dl)
            d[i][j] = min(diag, up, left)
    cost, neg_subs, deletions = d[n][m]
    return EditCounts(-neg_subs, deletions, cost + neg_subs - deletions, n)


def wer(ref: Tokens, hyp: Tokens) -> float:
    return edit_distance(ref, hyp).rate


@dataclass
class CpwerReport:
    best_permutation: Tuple[int, ...]
    best_rate: float
    per_permutation: List[Tuple[Tuple[int, ...], float]] = field(default_factory=list)
    per_speaker: List[EditCounts] = field(default_factory=list)

    @property
    def totals(self) -> EditCounts:
        return sum(self.per_speaker, EditCounts())

    def as_dict(self) -> dict:
        return {
            "best_permutation": list(self.best_permutation),
            "best_rate": self.best_rate,
            "per_permutation": [[list(p), r] for p, r in self.per_permutation],
            "per_speaker": [c.as_dict() for c in self.per_speaker],
            "totals": self.totals.as_dict(),
        }


def cpwer(refs: Union[Sequence[Tokens], Mapping[object, Tokens]],
          hyp_channels: Sequence[Tokens]) -> CpwerReport:
    """cpWER over every bijection of hypothesis channels onto reference speakers.

    ``best_permutation[s]`` is the channel assigned to speaker ``s`` (in the
    order of ``refs``). Channels are padded with empty lists or truncated to
    the speaker count.
    """
    if isinstance(refs, Mapping):
        refs = list(refs.values())
    refs = [_tokens(r) for r in refs]
    k = len(refs)
    if k < 1:
        raise MetricsError("at least one reference speaker is required")
    if k > MAX_CPWER_SPEAKERS:
        raise MetricsError(f"exhaustive cpWER supports at most {MAX_CPWER_SPEAKERS} speakers")
    hyps = [_tokens(h) for h in hyp_channels][:k]
    hyps += [[] for _ in range(k - len(hyps))]

    pair = {(s, c): edit_distance(refs[s], hyps[c]) for s in range(k) for c in range(k)}
    total_ref = sum(len(r) for r in refs)
    table = []
    best = None
    for perm in itertools.permutations(range(k)):
        counts = [pair[s, perm[s]] for s in range(k)]
        errors = sum(c.errors for c in counts)
        rate = errors / total_ref if total_ref else float(errors)
        table.append((perm, rate))
        if best is None or rate < best[1]:
            best = (perm, rate, counts)
    return CpwerReport(best[0], best[1], table, best[2])


def score_records(records) -> dict:
    """Score JSON objects ``{"utt_id", "refs": {speaker: str}, "hyp": str}``.

    ``hyp`` is in t-SOT form and is split into channels at ``<cc>``. The
    overall rate pools errors and reference words across utterances.
    """
    utts = []
    totals = EditCounts()
    for rec in records:
        channels = deserialize_tsot(rec["hyp"])
        refs: Dict[str, str] = rec["refs"]
        rep = cpwer(refs, channels)
        totals = totals + rep.totals
        speakers = list(refs)
        utts.append({
            "utt_id": rec.get("utt_id"),
            "cpwer": rep.best_rate,
            "assignment": {str(speakers[s]): c for s, c in enumerate(rep.best_permutation)},
            **{k: v for k, v in rep.as_dict().items() if k != "best_rate"},
        })
    overall = totals.errors / totals.ref_len if totals.ref_len else float(totals.errors)
    return {"overall_cpwer": overall, "totals": totals.as_dict(), "utterances": utts}


def score_file(path) -> dict:
    records = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MetricsError(f"line {lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(rec, dict) or "refs" not in rec or "hyp" not in rec:
                raise MetricsError(f"line {lineno}: expected 'refs' and 'hyp' fields")
            records.append(rec)
    return score_records(records)
