"""Toy-scale speaker-aware t-SOT model.

The conformer and ResNet encoders are replaced by seeded random linear maps
with a tanh, everything else is wired as in the full system: a weight
estimator feeding CIF, token-wise average pooling of speaker frames, an
autoregressive speaker decoder whose hidden layer gives token-level speaker
embeddings, speaker embedding fusion (SEF) at the ASR decoder input, and an
ASR decoder layer whose self-attention can be made speaker-aware. Forward
passes return every intermediate together with all terms of the joint loss.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .cif import CifConfig, cif_forward, quantity_loss, scale_alpha
from .labels import (CC, CHANNEL_CHANGE, MASK, S1S, S2S, SOS, SPECIAL_SYMBOLS,
                     TsotLabel, masked_labels)
from .saa import cosine_similarity_matrix, scaled_dot_attention, speaker_aware_attention

DEFAULT_LAMBDAS = (0.5, 1.0, 0.1, 1.0)
LOSS_TERMS = ("ce", "ctc", "qua", "ams", "sat")


class ModelError(ValueError):
    pass


class NonFiniteLoss(ModelError):
    def __init__(self, term, value):
        super().__init__(f"loss term {term!r} is not finite ({value})")
        self.term = term


def build_vocab(words: Sequence[str]) -> Tuple[str, ...]:
    """Special symbols followed by the sorted distinct ``words``."""
    return SPECIAL_SYMBOLS + tuple(sorted(set(words) - set(SPECIAL_SYMBOLS)))


@dataclass(frozen=True)
class ModelConfig:
    vocab: Tuple[str, ...]
    speaker_count: int = 4
    feature_dim: int = 8
    model_dim: int = 32
    speaker_embed_dim: int = 256
    ffn_dim: int = 64
    heads: int = 4
    downsample: int = 4
    lambdas: Tuple[float, float, float, float] = DEFAULT_LAMBDAS
    ams_scale: float = 30.0
    ams_margin: float = 0.2
    beta: float = 1.0
    tail_threshold: float = 0.5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "vocab", tuple(self.vocab))
        object.__setattr__(self, "lambdas", tuple(float(x) for x in self.lambdas))
        missing = [s for s in SPECIAL_SYMBOLS if s not in self.vocab]
        if missing:
            raise ModelError(f"vocab lacks special symbols {missing}")
        if len(set(self.vocab)) != len(self.vocab):
            raise ModelError("vocab has duplicate entries")
        for name in ("speaker_count", "feature_dim", "model_dim", "speaker_embed_dim",
                     "ffn_dim", "heads", "downsample"):
            if getattr(self, name) < 1:
                raise ModelError(f"{name} must be at least 1")
        if self.model_dim % self.heads:
            raise ModelError("model_dim must be divisible by heads")
        if len(self.lambdas) != 4:
            raise ModelError("expected four loss weights")

    @property
    def cif(self) -> CifConfig:
        return CifConfig(self.beta, self.tail_threshold)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        return cls(**json.loads(text))


@dataclass
class ForwardTrace:
    h_asr: np.ndarray
    alpha: np.ndarray
    c: np.ndarray
    boundaries: List[int]
    h_spk: np.ndarray
    m: np.ndarray
    e: np.ndarray
    speaker_posteriors: np.ndarray
    logits: np.ndarray
    tokens: List[str]
    losses: Dict[str, float] = field(default_factory=dict)

    def summary(self) -> dict:
        shapes = {k: list(np.shape(getattr(self, k)))
                  for k in ("h_asr", "alpha", "c", "h_spk", "m", "e",
                            "speaker_posteriors", "logits")}
        return {"shapes": shapes, "num_tokens": len(self.tokens),
                "boundaries": list(self.boundaries), "tokens": self.tokens,
                "losses": self.losses}


# ---------------------------------------------------------------- losses

def _log_softmax(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    mx = x.max(axis=-1, keepdims=True)
    return x - mx - np.log(np.exp(x - mx).sum(axis=-1, keepdims=True))


def ce_loss(logits, targets) -> float:
    """Mean negative log-likelihood of ``targets`` under row-wise softmax."""
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or logits.shape[0] != targets.shape[0]:
        raise ModelError(f"logits {logits.shape} and targets {targets.shape} misaligned")
    if targets.size == 0:
        return 0.0
    lp = _log_softmax(logits)
    return float(-lp[np.arange(len(targets)), targets].mean())


def sat_loss(pass_logits: Sequence[np.ndarray], pass_targets: Sequence[Sequence[int]]) -> float:
    """Average of the per-speaker CE terms; ``<mask>`` positions are ordinary targets."""
    if len(pass_logits) != len(pass_targets) or not pass_logits:
        raise ModelError("one target sequence is needed per SAT pass")
    return float(np.mean([ce_loss(lg, t) for lg, t in zip(pass_logits, pass_targets)]))


def ctc_forward_loss(frame_logits, target: Sequence[int], blank: Optional[int] = None) -> float:
    """CTC negative log-likelihood by the forward recursion in log space.

    ``frame_logits`` is T' x (V + 1); ``blank`` defaults to the last column.
    Returns ``inf`` when no alignment of ``target`` fits in T' frames.
    """
    lp = _log_softmax(frame_logits)
    T, C = lp.shape
    blank = C - 1 if blank is None else blank
    target = list(target)
    ext = [blank]
    for tok in target:
        ext += [tok, blank]
    S = len(ext)
    repeats = sum(a == b for a, b in zip(target, target[1:]))
    if T < len(target) + repeats:
        return math.inf
    la = np.full(S, -np.inf)
    la[0] = lp[0, blank]
    if S > 1:
        la[1] = lp[0, ext[1]]
    for t in range(1, T):
        prev = la
        la = np.full(S, -np.inf)
        for s in range(S):
            cands = [prev[s]]
            if s >= 1:
                cands.append(prev[s - 1])
            if s >= 2 and ext[s] != blank and ext[s] != ext[s - 2]:
                cands.append(prev[s - 2])
            la[s] = np.logaddexp.reduce(cands) + lp[t, ext[s]]
    total = np.logaddexp(la[-1], la[-2]) if S > 1 else la[-1]
    return float(-total)


def amsoftmax_loss(embedding, class_weights, target: int, scale: float = 30.0,
                   margin: float = 0.2) -> float:
    """Additive-margin softmax on cosines between ``embedding`` and the
    columns of ``class_weights`` (D x C)."""
    e = np.asarray(embedding, dtype=np.float64)
    w = np.asarray(class_weights, dtype=np.float64)
    norm = np.linalg.norm(e)
    if norm == 0:
        raise ModelError("cannot normalize a zero embedding")
    wn = np.linalg.norm(w, axis=0)
    if np.any(wn == 0):
        raise ModelError("cannot normalize a zero class weight")
    cos = (w / wn).T @ (e / norm)
    logits = scale * cos
    logits[target] -= scale * margin
    return float(np.logaddexp.reduce(logits) - logits[target])


def joint_loss(terms: Mapping[str, float], lambdas=DEFAULT_LAMBDAS) -> float:
    """``ce + l1*ctc + l2*qua + l3*ams + l4*sat``."""
    for name in LOSS_TERMS:
        if name not in terms:
            raise ModelError(f"missing loss term {name!r}")
        if not math.isfinite(terms[name]):
            raise NonFiniteLoss(name, terms[name])
    l1, l2, l3, l4 = lambdas
    return (terms["ce"] + l1 * terms["ctc"] + l2 * terms["qua"]
            + l3 * terms["ams"] + l4 * terms["sat"])


# ---------------------------------------------------------------- pieces

def token_average_pool(h_spk, boundaries: Sequence[int]) -> np.ndarray:
    """Mean of the frames ``prev_boundary+1 .. boundary`` for every token.

    The first token starts at frame 0. A repeated boundary (a frame that
    fired twice) has an empty range and takes the boundary frame itself.
    """
    h = np.asarray(h_spk, dtype=np.float64)
    out = np.zeros((len(boundaries), h.shape[1]))
    start = 0
    for n, b in enumerate(boundaries):
        if b >= h.shape[0] or b < start - 1:
            raise ModelError(f"boundary {b} out of order or range")
        out[n] = h[start:b + 1].mean(axis=0) if b >= start else h[b]
        start = b + 1
    return out


def _relu(x):
    return np.maximum(x, 0.0)


def _softmax(x):
    return np.exp(_log_softmax(x))


class SaSotModel:
    """Parameters plus the forward maps. Parameters are never mutated;
    :meth:`with_params` returns a modified copy."""

    def __init__(self, config: ModelConfig, params: Optional[Dict[str, np.ndarray]] = None):
        self.config = config
        self.token_id = {t: i for i, t in enumerate(config.vocab)}
        self.params = params if params is not None else self._init_params()
        for v in self.params.values():
            v.setflags(write=False)

    # -- parameters

    def _init_params(self) -> Dict[str, np.ndarray]:
        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        V, S, d, F = len(cfg.vocab), cfg.speaker_count, cfg.model_dim, cfg.feature_dim
        E = cfg.speaker_embed_dim

        def lin(fan_in, fan_out):
            return rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out))

        return {
            "enc_asr_w": lin(F, d), "enc_asr_b": rng.normal(0, 0.1, d),
            "enc_spk_w": lin(F, d), "enc_spk_b": rng.normal(0, 0.1, d),
            "we_w": lin(d, 1)[:, 0], "we_b": np.zeros(1),
            "tok_emb": rng.normal(0, 1.0, (V, d)),
            "spk_emb": rng.normal(0, 1.0, (S + 1, d)),
            "spk_fc1_w": lin(3 * d, E), "spk_fc1_b": rng.normal(0, 0.1, E),
            "spk_fc2_w": lin(E, S), "spk_fc2_b": np.zeros(S),
            "sef_w": lin(d + E, d), "sef_b": np.zeros(d),
            "att_q": lin(d, d), "att_k": lin(d, d), "att_v": lin(d, d), "att_o": lin(d, d),
            "ff_w1": lin(d, cfg.ffn_dim), "ff_w2": lin(cfg.ffn_dim, d),
            "out_w": lin(d, V), "out_b": np.zeros(V),
            "ctc_w": lin(d, V + 1), "ctc_b": np.zeros(V + 1),
        }

    def with_params(self, **overrides) -> "SaSotModel":
        params = dict(self.params)
        for k, v in overrides.items():
            if k not in params:
                raise ModelError(f"unknown parameter {k!r}")
            v = np.array(v, dtype=np.float64)
            if v.shape != params[k].shape:
                raise ModelError(f"{k}: shape {v.shape} != {params[k].shape}")
            params[k] = v
        return SaSotModel(self.config, params)

    def save_params(self, path) -> None:
        """Write parameters keyed by name: ``.npz`` binary or ``.json`` lists."""
        path = Path(path)
        if path.suffix == ".json":
            path.write_text(json.dumps({k: v.tolist() for k, v in self.params.items()}))
        else:
            np.savez(path, **self.params)

    @classmethod
    def load(cls, config: ModelConfig, path) -> "SaSotModel":
        path = Path(path)
        if path.suffix == ".json":
            raw = json.loads(path.read_text())
            params = {k: np.asarray(v, dtype=np.float64) for k, v in raw.items()}
        else:
            with np.load(path) as z:
                params = {k: z[k].copy() for k in z.files}
        ref = cls(config).params
        if set(params) != set(ref) or any(params[k].shape != ref[k].shape for k in ref):
            raise ModelError(f"{path}: parameters do not match the configuration")
        return cls(config, params)

    # -- stand-in encoders and weight estimator

    def encode(self, features, which: str = "asr") -> np.ndarray:
        x = np.asarray(features, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] < 1:
            raise ModelError("features must be a non-empty T x feature_dim matrix")
        if x.shape[1] != self.config.feature_dim:
            raise ModelError(f"feature dim {x.shape[1]} != {self.config.feature_dim}")
        if which not in ("asr", "speaker"):
            raise ModelError(f"unknown encoder {which!r}")
        ds = self.config.downsample
        n_out = max(1, x.shape[0] // ds)
        if x.shape[0] < ds:
            pooled = x.mean(axis=0, keepdims=True)
        else:
            pooled = x[:n_out * ds].reshape(n_out, ds, -1).mean(axis=1)
        key = "asr" if which == "asr" else "spk"
        return np.tanh(pooled @ self.params[f"enc_{key}_w"] + self.params[f"enc_{key}_b"])

    def estimate_weights(self, h_asr) -> np.ndarray:
        z = np.asarray(h_asr) @ self.params["we_w"] + self.params["we_b"][0]
        return 1.0 / (1.0 + np.exp(-z))

    # -- speaker branch

    def speaker_decoder_step(self, m_n, prev_speaker, prev_token):
        """Posterior over speakers and the hidden-layer speaker embedding.

        Works on a single position or on aligned batches of positions.
        ``prev_speaker == speaker_count`` is the start id.
        """
        p = self.params
        prev_speaker = np.asarray(prev_speaker)
        prev_token = np.asarray(prev_token)
        if np.any(prev_speaker < 0) or np.any(prev_speaker > self.config.speaker_count):
            raise ModelError("speaker id out of range")
        if np.any(prev_token < 0) or np.any(prev_token >= len(self.config.vocab)):
            raise ModelError("token id out of range")
        x = np.concatenate([np.asarray(m_n, dtype=np.float64),
                            p["spk_emb"][prev_speaker], p["tok_emb"][prev_token]], axis=-1)
        e = _relu(x @ p["spk_fc1_w"] + p["spk_fc1_b"])
        post = _softmax(e @ p["spk_fc2_w"] + p["spk_fc2_b"])
        return post, e

    # -- ASR decoder

    def sef_fuse(self, token_embedding, e_n) -> np.ndarray:
        x = np.concatenate([np.asarray(token_embedding, dtype=np.float64),
                            np.asarray(e_n, dtype=np.float64)], axis=-1)
        if x.shape[-1] != self.params["sef_w"].shape[0]:
            raise ModelError("token/speaker embedding dims do not match the projection")
        return x @ self.params["sef_w"] + self.params["sef_b"]

    def _decoder_logits(self, x, sim) -> np.ndarray:
        p, H = self.params, self.config.heads
        q, k, v = x @ p["att_q"], x @ p["att_k"], x @ p["att_v"]
        dh = x.shape[1] // H
        heads = []
        for i in range(H):
            sl = slice(i * dh, (i + 1) * dh)
            if sim is None:
                out = scaled_dot_attention(q[:, sl], k[:, sl], v[:, sl], causal=True)
            else:
                out = speaker_aware_attention(q[:, sl], k[:, sl], v[:, sl], sim, causal=True)
            heads.append(out.o)
        z = x + np.concatenate(heads, axis=1) @ p["att_o"]
        z = z + _relu(z @ p["ff_w1"]) @ p["ff_w2"]
        return z @ p["out_w"] + p["out_b"]

    def asr_decode(self, c, e, labels: Optional[Sequence[int]] = None, use_saa: bool = False,
                   start_symbol: str = SOS):
        """Decoder logits (N x V) and argmax ids.

        With ``labels`` the previous-token inputs are teacher-forced;
        otherwise tokens are decoded greedily one position at a time.
        """
        c = np.asarray(c, dtype=np.float64)
        e = np.asarray(e, dtype=np.float64)
        N = c.shape[0]
        if e.shape[0] != N:
            raise ModelError(f"{N} acoustic embeddings but {e.shape[0]} speaker embeddings")
        if labels is not None and len(labels) != N:
            raise ModelError(f"{len(labels)} labels for {N} positions")
        if N == 0:
            return np.zeros((0, len(self.config.vocab))), []
        sim = cosine_similarity_matrix(e) if use_saa else None
        start = self.token_id[start_symbol]
        emb = self.params["tok_emb"]
        if labels is not None:
            prev = [start] + list(labels[:-1])
            x = self.sef_fuse(emb[prev], e) + c
            logits = self._decoder_logits(x, sim)
            return logits, [int(i) for i in logits.argmax(axis=1)]
        prev, rows = [start], []
        for n in range(N):
            x = self.sef_fuse(emb[prev], e[:n + 1]) + c[:n + 1]
            row = self._decoder_logits(x, None if sim is None else sim[:n + 1, :n + 1])[-1]
            rows.append(row)
            prev.append(int(row.argmax()))
        return np.stack(rows), prev[1:]

    def ctc_logits(self, h_asr) -> np.ndarray:
        return h_asr @ self.params["ctc_w"] + self.params["ctc_b"]

    # -- full pipeline

    def forward(self, features, label: Optional[TsotLabel] = None,
                speaker_ids: Optional[Sequence[int]] = None, use_saa: bool = False) -> ForwardTrace:
        """Run the whole model.

        With a ``label`` the pass is teacher-forced: alpha is rescaled to fire
        one token per label position and every loss term is computed.
        ``speaker_ids`` maps the label's speaker indices to speaker classes
        (identity by default). Without a label, decoding is greedy on raw
        alpha and the speaker decoder is fed its own predictions.
        """
        cfg = self.config
        h_asr = self.encode(features, "asr")
        alpha = self.estimate_weights(h_asr)
        h_spk = self.encode(features, "speaker")
        if label is None:
            return self._greedy(h_asr, alpha, h_spk, use_saa)

        ids = self._ids(label.tokens)
        N = len(ids)
        if N == 0:
            raise ModelError("empty label")
        fire = cif_forward(h_asr, scale_alpha(alpha, N), cfg.cif)
        if fire.num_tokens != N:
            raise ModelError(f"CIF fired {fire.num_tokens} tokens for a label of {N}")
        m = token_average_pool(h_spk, fire.boundaries)

        local = _position_speakers(label)
        if speaker_ids is None:
            speaker_ids = list(range(cfg.speaker_count))
        spk_targets = np.array([speaker_ids[s] for s in local])
        if np.any(spk_targets >= cfg.speaker_count):
            raise ModelError("speaker class id exceeds speaker_count")
        prev_spk = np.concatenate([[cfg.speaker_count], spk_targets[:-1]]).astype(int)
        prev_tok = np.array([self.token_id[SOS]] + ids[:-1])
        post, e = self.speaker_decoder_step(m, prev_spk, prev_tok)

        logits, pred = self.asr_decode(fire.embeddings, e, ids, use_saa, SOS)
        sat_logits, sat_targets = [], []
        for ml in masked_labels(label):
            tgt = self._ids(ml.tokens)
            lg, _ = self.asr_decode(fire.embeddings, e, tgt, use_saa, ml.start_symbol)
            sat_logits.append(lg)
            sat_targets.append(tgt)

        W = self.params["spk_fc2_w"]
        terms = {
            "ce": ce_loss(logits, ids),
            "ctc": ctc_forward_loss(self.ctc_logits(h_asr), ids),
            "qua": quantity_loss(alpha, N),
            "ams": float(np.mean([amsoftmax_loss(e[n], W, spk_targets[n],
                                                 cfg.ams_scale, cfg.ams_margin)
                                  for n in range(N)])),
            "sat": sat_loss(sat_logits, sat_targets),
        }
        terms["total"] = joint_loss(terms, cfg.lambdas)
        return ForwardTrace(h_asr, alpha, fire.embeddings, fire.boundaries, h_spk, m, e,
                            post, logits, [cfg.vocab[i] for i in pred], terms)

    def _greedy(self, h_asr, alpha, h_spk, use_saa) -> ForwardTrace:
        cfg = self.config
        fire = cif_forward(h_asr, alpha, cfg.cif)
        c = fire.embeddings
        m = token_average_pool(h_spk, fire.boundaries)
        N = len(c)
        posts, es, logits = [], [], []
        prev_spk, prev_tok = cfg.speaker_count, self.token_id[SOS]
        emb = self.params["tok_emb"]
        prev_ids = [prev_tok]
        for n in range(N):
            post, e_n = self.speaker_decoder_step(m[n], prev_spk, prev_tok)
            posts.append(post)
            es.append(e_n)
            e = np.stack(es)
            x = self.sef_fuse(emb[prev_ids], e) + c[:n + 1]
            sim = cosine_similarity_matrix(e) if use_saa else None
            row = self._decoder_logits(x, sim)[-1]
            logits.append(row)
            prev_tok = int(row.argmax())
            prev_spk = int(post.argmax())
            prev_ids.append(prev_tok)
        V, S, E = len(cfg.vocab), cfg.speaker_count, cfg.speaker_embed_dim
        return ForwardTrace(
            h_asr, alpha, c, fire.boundaries, h_spk, m,
            np.stack(es) if es else np.zeros((0, E)),
            np.stack(posts) if posts else np.zeros((0, S)),
            np.stack(logits) if logits else np.zeros((0, V)),
            [cfg.vocab[i] for i in prev_ids[1:]],
        )

    def _ids(self, tokens: Sequence[str]) -> List[int]:
        try:
            return [self.token_id[t] for t in tokens]
        except KeyError as exc:
            raise ModelError(f"token {exc.args[0]!r} not in vocab") from None


def _position_speakers(label: TsotLabel) -> List[int]:
    """Speaker index per position; ``<cc>`` takes the speaker it switches to."""
    out = list(label.provenance)
    nxt = None
    for i in range(len(out) - 1, -1, -1):
        if out[i] == CHANNEL_CHANGE:
            if nxt is None:
                raise ModelError("label ends with <cc>")
            out[i] = nxt
        else:
            nxt = out[i]
    return out


__all__ = [
    "CC", "MASK", "S1S", "S2S", "SOS", "DEFAULT_LAMBDAS", "ModelConfig", "ForwardTrace",
    "SaSotModel", "build_vocab", "ce_loss", "sat_loss", "ctc_forward_loss",
    "amsoftmax_loss", "joint_loss", "token_average_pool", "NonFiniteLoss", "ModelError",
]
