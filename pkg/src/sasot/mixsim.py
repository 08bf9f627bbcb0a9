"""Two-speaker overlapped mixture simulation.

Utterances with word-level alignments are summed with a random start-time
shift applied to the second source, and the two transcripts are merged into
a t-SOT label. Also provides a small framed band-energy front end standing
in for filter-bank features.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .labels import SpeakerTranscript, TimedWord, TsotLabel, serialize_tsot

ALLOWED_DOWNSAMPLE = (1, 2, 4, 8)


class MixsimError(ValueError):
    pass


class AlignmentParseError(MixsimError):
    pass


class IncompatibleSources(MixsimError):
    pass


class InsufficientCorpus(MixsimError):
    pass


class EmptyInput(MixsimError):
    pass


@dataclass
class AlignedUtterance:
    utt_id: str
    speaker: int
    signal: np.ndarray
    sample_rate: int
    words: Tuple[TimedWord, ...]

    def __post_init__(self):
        self.signal = np.asarray(self.signal, dtype=np.float64)
        self.words = tuple(self.words)
        if self.sample_rate <= 0:
            raise MixsimError(f"{self.utt_id}: sample_rate must be positive")
        dur = self.duration
        for w in self.words:
            last = w.emit_time if w.end is None else w.end
            if last > dur + 1e-9:
                raise MixsimError(
                    f"{self.utt_id}: word {w.text!r} at {last}s lies outside the "
                    f"signal ({dur}s)")

    @property
    def duration(self) -> float:
        return len(self.signal) / self.sample_rate

    def transcript(self, speaker: int, offset: float = 0.0) -> SpeakerTranscript:
        return SpeakerTranscript(speaker, tuple(w.shifted(offset, speaker) for w in self.words))


@dataclass
class MixtureSample:
    signal: np.ndarray
    sources: Tuple[AlignedUtterance, ...]
    shift: float
    label: TsotLabel
    is_overlapped: bool

    @property
    def sample_rate(self) -> int:
        return self.sources[0].sample_rate

    @property
    def utt_id(self) -> str:
        return "+".join(s.utt_id for s in self.sources)

    @property
    def words(self) -> List[TimedWord]:
        """All words on the mixture timeline, speaker = local source index."""
        out = list(self.sources[0].transcript(0).words)
        if len(self.sources) > 1:
            out += self.sources[1].transcript(1, self.shift).words
        return sorted(out, key=lambda w: (w.emit_time, w.speaker))

    @property
    def speaker_ids(self) -> List[int]:
        """Global speaker id of each local speaker index."""
        return [s.speaker for s in self.sources]

    def to_record(self, with_signal: bool = True) -> dict:
        rec = {
            "utt_id": self.utt_id,
            "speaker": self.speaker_ids,
            "sample_rate": self.sample_rate,
        }
        if with_signal:
            rec["signal"] = self.signal.tolist()
        rec["words"] = [
            {"text": w.text, "start": w.emit_time,
             "end": w.emit_time if w.end is None else w.end, "speaker": w.speaker}
            for w in self.words
        ]
        rec["label"] = self.label.text
        rec["shift"] = self.shift
        rec["is_overlapped"] = self.is_overlapped
        rec["sources"] = [s.utt_id for s in self.sources]
        return rec


def synthesize_signal(words: Sequence[TimedWord], duration: float, sample_rate: int,
                      seed: int = 0) -> np.ndarray:
    """Deterministic stand-in audio: one windowed tone burst per word."""
    rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    sig = np.zeros(n)
    for w in words:
        start = int(round(w.emit_time * sample_rate))
        end = int(round((w.end if w.end is not None else w.emit_time + 0.2) * sample_rate))
        end = min(max(end, start + 1), n)
        if start >= n:
            continue
        t = np.arange(end - start) / sample_rate
        freq = rng.uniform(0.02, 0.4) * sample_rate
        sig[start:end] += 0.5 * np.hanning(end - start) * np.sin(2 * np.pi * freq * t)
    return sig


def _parse_line(obj: dict, lineno: int, base: Path) -> AlignedUtterance:
    def fail(msg):
        raise AlignmentParseError(f"line {lineno}: {msg}")

    if not isinstance(obj, dict):
        fail("expected a JSON object")
    for key in ("utt_id", "speaker", "sample_rate", "words"):
        if key not in obj:
            fail(f"missing field {key!r}")
    rate = obj["sample_rate"]
    if not isinstance(rate, int) or rate <= 0:
        fail("sample_rate must be a positive integer")
    try:
        words = tuple(
            TimedWord(str(w["text"]), float(w["start"]), int(obj["speaker"]),
                      float(w["end"]) if "end" in w else None)
            for w in obj["words"]
        )
    except (KeyError, TypeError) as exc:
        fail(f"malformed word entry ({exc})")
    except ValueError as exc:
        fail(str(exc))

    if "signal" in obj:
        signal = np.asarray(obj["signal"], dtype=np.float64)
    elif "signal_ref" in obj:
        ref = Path(obj["signal_ref"])
        if not ref.is_absolute():
            ref = base / ref
        if not ref.exists():
            fail(f"signal_ref {str(ref)!r} not found")
        signal = np.load(ref) if ref.suffix == ".npy" else np.fromfile(ref, dtype="<f8")
    elif "duration" in obj:
        signal = synthesize_signal(words, float(obj["duration"]), rate,
                                   seed=int(obj.get("seed", 0)))
    else:
        fail("one of 'signal', 'signal_ref' or 'duration' is required")
    try:
        return AlignedUtterance(str(obj["utt_id"]), int(obj["speaker"]), signal, rate, words)
    except ValueError as exc:
        fail(str(exc))


def load_alignments(path) -> List[AlignedUtterance]:
    """Read the alignment JSONL format, one utterance per line.

    Each object has ``utt_id``, ``speaker``, ``sample_rate``, ``words``
    (``text``/``start``/``end``) and the audio as an inline ``signal``
    list, a ``signal_ref`` path (``.npy`` or raw little-endian float64,
    relative to the manifest) or a ``duration`` from which a tone-burst
    signal is synthesized.
    """
    path = Path(path)
    if not path.exists():
        raise AlignmentParseError(f"{path}: no such file")
    out = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise AlignmentParseError(f"line {lineno}: invalid JSON ({exc.msg})") from None
            out.append(_parse_line(obj, lineno, path.parent))
    return out


def simulate_mixture(a: AlignedUtterance, b: Optional[AlignedUtterance],
                     shift: float = 0.0) -> MixtureSample:
    """Add ``b`` onto ``a`` starting ``shift`` seconds in; ``b=None`` leaves ``a`` unmixed."""
    if b is None:
        return MixtureSample(a.signal.copy(), (a,), 0.0,
                             serialize_tsot([a.transcript(0)]), False)
    if a.sample_rate != b.sample_rate:
        raise IncompatibleSources(
            f"sample rates differ: {a.sample_rate} vs {b.sample_rate}")
    if shift < 0:
        raise MixsimError("shift must be non-negative")
    offset = int(round(shift * a.sample_rate))
    length = max(len(a.signal), offset + len(b.signal))
    signal = np.zeros(length)
    signal[:len(a.signal)] += a.signal
    signal[offset:offset + len(b.signal)] += b.signal
    label = serialize_tsot([a.transcript(0), b.transcript(1, shift)])
    return MixtureSample(signal, (a, b), float(shift), label, True)


def build_dataset(utterances: Sequence[AlignedUtterance], p: float, seed: int,
                  n: int) -> Iterator[MixtureSample]:
    """Yield ``n`` samples, cycling over ``utterances`` in order.

    Each sample is mixed with probability ``p`` with a partner drawn
    uniformly from the other utterances, at a shift drawn uniformly from
    ``[0, duration of the first utterance)``.
    """
    if not 0.0 <= p <= 1.0:
        raise MixsimError("p must lie in [0, 1]")
    if n < 1:
        raise MixsimError("n must be at least 1")
    if not utterances:
        raise InsufficientCorpus("empty corpus")
    if p > 0 and len(utterances) < 2:
        raise InsufficientCorpus("overlap needs at least two utterances")
    rng = np.random.default_rng(seed)
    count = len(utterances)
    for i in range(n):
        a = utterances[i % count]
        if rng.random() < p:
            j = int(rng.integers(count - 1))
            if j >= i % count:
                j += 1
            shift = float(rng.uniform(0.0, a.duration))
            yield simulate_mixture(a, utterances[j], shift)
        else:
            yield simulate_mixture(a, None)


def write_manifest(samples, path, with_signal: bool = True) -> int:
    n = 0
    with Path(path).open("w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_record(with_signal)) + "\n")
            n += 1
    return n


def synthesize_features(sample, frame_ms: float = 25.0, hop_ms: float = 10.0,
                        downsample: int = 4, n_bands: int = 8) -> np.ndarray:
    """Framed log band energies, averaged over groups of ``downsample`` frames.

    ``sample`` may be a ``MixtureSample``/``AlignedUtterance`` or a
    ``(signal, sample_rate)`` pair. The raw frame count is
    ``ceil(len / hop)``; trailing frames that do not fill a whole group are
    dropped, so the result has ``raw // downsample`` rows.
    """
    if isinstance(sample, tuple):
        signal, rate = sample
    else:
        signal, rate = sample.signal, sample.sample_rate
    signal = np.asarray(signal, dtype=np.float64)
    if signal.size == 0:
        raise EmptyInput("empty signal")
    if hop_ms <= 0 or frame_ms <= 0:
        raise MixsimError("frame and hop lengths must be positive")
    if downsample not in ALLOWED_DOWNSAMPLE:
        raise MixsimError(f"downsample must be one of {ALLOWED_DOWNSAMPLE}")
    hop = max(1, int(round(hop_ms * rate / 1000.0)))
    win = max(1, int(round(frame_ms * rate / 1000.0)))
    n_raw = math.ceil(len(signal) / hop)
    padded = np.zeros(max(len(signal), (n_raw - 1) * hop + win))
    padded[:len(signal)] = signal
    idx = np.arange(n_raw)[:, None] * hop + np.arange(win)[None, :]
    frames = padded[idx] * np.hanning(win + 2)[1:-1]
    power = np.abs(np.fft.rfft(frames, axis=1)) ** 2
    bands = np.array_split(np.arange(power.shape[1]), n_bands)
    feats = np.stack([power[:, b].sum(axis=1) if b.size else np.zeros(n_raw)
                      for b in bands], axis=1)
    feats = np.log1p(feats)
    n_out = n_raw // downsample
    return feats[:n_out * downsample].reshape(n_out, downsample, n_bands).mean(axis=1)
