"""Token-level serialized output (t-SOT) labels.

Two speakers' timed transcripts are merged into one token stream ordered by
emission time, with ``<cc>`` marking every switch between the two virtual
output channels. The module also splits decoded streams back into channels
and builds the masked per-speaker labels used by the speaker-aware
training loss.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

CC = "<cc>"
MASK = "<mask>"
SOS = "<sos>"
S1S = "<s1s>"
S2S = "<s2s>"
SPECIAL_SYMBOLS = (CC, MASK, SOS, S1S, S2S)

#: provenance marker stored at ``<cc>`` positions
CHANNEL_CHANGE = -1

MAX_SPEAKERS = 2


class LabelError(ValueError):
    pass


class InvalidTranscript(LabelError):
    pass


class UnsupportedSpeakerCount(LabelError):
    pass


class UnknownSpeaker(LabelError):
    pass


@dataclass(frozen=True)
class TimedWord:
    text: str
    emit_time: float
    speaker: int = 0
    end: Optional[float] = None

    def __post_init__(self):
        if not self.text or not self.text.strip():
            raise InvalidTranscript("word text must be non-empty")
        if any(c.isspace() for c in self.text):
            raise InvalidTranscript(f"word text {self.text!r} contains whitespace")
        if self.text in SPECIAL_SYMBOLS:
            raise InvalidTranscript(f"{self.text!r} is a reserved symbol")
        if not self.emit_time >= 0:
            raise InvalidTranscript(f"negative emission time {self.emit_time} for {self.text!r}")
        if self.end is not None and self.end < self.emit_time:
            raise InvalidTranscript(f"word {self.text!r} ends before it starts")

    def shifted(self, offset: float, speaker: Optional[int] = None) -> "TimedWord":
        end = None if self.end is None else self.end + offset
        return TimedWord(
            self.text, self.emit_time + offset,
            self.speaker if speaker is None else speaker, end,
        )


@dataclass(frozen=True)
class SpeakerTranscript:
    speaker: int
    words: Tuple[TimedWord, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "words", tuple(self.words))
        for w in self.words:
            if w.speaker != self.speaker:
                raise InvalidTranscript(
                    f"word {w.text!r} carries speaker {w.speaker}, transcript is {self.speaker}")
        for prev, cur in zip(self.words, self.words[1:]):
            if cur.emit_time < prev.emit_time:
                raise InvalidTranscript(
                    f"speaker {self.speaker}: words not sorted by emission time "
                    f"({prev.text!r}@{prev.emit_time} before {cur.text!r}@{cur.emit_time})")
            if cur.emit_time == prev.emit_time:
                raise InvalidTranscript(
                    f"speaker {self.speaker}: two words share emission time {cur.emit_time}")

    @classmethod
    def from_pairs(cls, speaker: int, pairs: Iterable[Tuple[str, float]]) -> "SpeakerTranscript":
        return cls(speaker, tuple(TimedWord(t, s, speaker) for t, s in pairs))

    @property
    def texts(self) -> List[str]:
        return [w.text for w in self.words]


@dataclass(frozen=True)
class TsotLabel:
    """Serialized label. ``provenance[i]`` is the speaker index of token i,
    or ``CHANNEL_CHANGE`` where the token is ``<cc>``."""

    tokens: Tuple[str, ...]
    provenance: Tuple[int, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if not self.provenance:
            object.__setattr__(self, "provenance", _channel_provenance(self.tokens))
        else:
            object.__setattr__(self, "provenance", tuple(self.provenance))
        if len(self.provenance) != len(self.tokens):
            raise LabelError("provenance length differs from token length")

    def __len__(self):
        return len(self.tokens)

    @property
    def text(self) -> str:
        return " ".join(self.tokens)

    @classmethod
    def from_text(cls, text: str) -> "TsotLabel":
        """Parse a space-separated label; provenance is the channel index."""
        return cls(tuple(text.split()))

    @property
    def speakers(self) -> List[int]:
        """Speakers in order of first appearance (i.e. channel order)."""
        seen: List[int] = []
        for p in self.provenance:
            if p != CHANNEL_CHANGE and p not in seen:
                seen.append(p)
        return seen

    def validate(self) -> None:
        """Raise ``LabelError`` if the well-formedness invariants are broken."""
        toks, prov = self.tokens, self.provenance
        if toks and (toks[0] == CC or toks[-1] == CC):
            raise LabelError("label starts or ends with <cc>")
        for i, (t, p) in enumerate(zip(toks, prov)):
            if (t == CC) != (p == CHANNEL_CHANGE):
                raise LabelError(f"position {i}: <cc> and provenance disagree")
            if t == CC and toks[i + 1] == CC:
                raise LabelError(f"consecutive <cc> at position {i}")
        words = [(i, p) for i, p in enumerate(prov) if p != CHANNEL_CHANGE]
        for (i, p), (j, q) in zip(words, words[1:]):
            n_cc = j - i - 1
            if n_cc != (1 if p != q else 0):
                raise LabelError(f"positions {i}..{j}: expected {int(p != q)} <cc>, found {n_cc}")


@dataclass(frozen=True)
class MaskedLabel:
    start_symbol: str
    tokens: Tuple[str, ...]
    target_speaker: int

    @property
    def text(self) -> str:
        return " ".join((self.start_symbol,) + tuple(self.tokens))


def _channel_provenance(tokens: Sequence[str]) -> Tuple[int, ...]:
    channel, out = 0, []
    for tok in tokens:
        if tok == CC:
            out.append(CHANNEL_CHANGE)
            channel = 1 - channel
        else:
            out.append(channel)
    return tuple(out)


def serialize_tsot(transcripts: Sequence[SpeakerTranscript]) -> TsotLabel:
    """Merge one or two speakers' transcripts into a t-SOT label.

    Words are ordered by ``(emit_time, speaker)`` and a ``<cc>`` is placed
    between every pair of adjacent words spoken by different speakers.
    """
    if not 1 <= len(transcripts) <= MAX_SPEAKERS:
        raise UnsupportedSpeakerCount(
            f"expected 1 or {MAX_SPEAKERS} transcripts, got {len(transcripts)}")
    if len({t.speaker for t in transcripts}) != len(transcripts):
        raise InvalidTranscript("transcripts must have distinct speaker indices")
    merged = sorted(
        (w for t in transcripts for w in t.words),
        key=lambda w: (w.emit_time, w.speaker),
    )
    tokens: List[str] = []
    prov: List[int] = []
    for w in merged:
        if prov and prov[-1] != w.speaker:
            tokens.append(CC)
            prov.append(CHANNEL_CHANGE)
        tokens.append(w.text)
        prov.append(w.speaker)
    return TsotLabel(tuple(tokens), tuple(prov))


def deserialize_tsot(label) -> Tuple[List[str], List[str]]:
    """Split a t-SOT token stream into its two channels.

    Accepts a ``TsotLabel``, a token sequence or a space-separated string.
    Every ``<cc>`` toggles the channel, including malformed leading,
    trailing or repeated ones, so arbitrary decoder output is accepted.
    """
    if isinstance(label, TsotLabel):
        tokens = label.tokens
    elif isinstance(label, str):
        tokens = label.split()
    else:
        tokens = label
    channels: Tuple[List[str], List[str]] = ([], [])
    ch = 0
    for tok in tokens:
        if tok == CC:
            ch = 1 - ch
        else:
            channels[ch].append(tok)
    return channels


def make_masked_label(label: TsotLabel, target_speaker: int) -> MaskedLabel:
    speakers = label.speakers
    if target_speaker not in speakers:
        raise UnknownSpeaker(f"speaker {target_speaker} does not occur in the label")
    start = S1S if speakers.index(target_speaker) == 0 else S2S
    tokens = tuple(
        tok if p == target_speaker else MASK
        for tok, p in zip(label.tokens, label.provenance)
    )
    return MaskedLabel(start, tokens, target_speaker)


def masked_labels(label: TsotLabel) -> List[MaskedLabel]:
    """One masked label per speaker, in channel order."""
    return [make_masked_label(label, s) for s in label.speakers]
