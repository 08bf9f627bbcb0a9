"""Scaled dot-product attention and speaker-aware attention (SAA).

SAA multiplies the softmax attention weights by ``(1 + sim) / 2``, where
``sim`` is the cosine similarity between token-level speaker embeddings,
and renormalizes every query row before applying the weights to ``V``.
Both forward maps come with analytic backward passes.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

DENOM_FLOOR = 1e-9
SIM_TOLERANCE = 1e-9


class AttentionError(ValueError):
    pass


@dataclass
class AttentionInputs:
    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    causal: bool = False
    sim: Optional[np.ndarray] = None

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=np.float64)
        self.k = np.asarray(self.k, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        q, k, v = self.q, self.k, self.v
        if q.ndim != 2 or k.ndim != 2 or v.ndim != 2:
            raise AttentionError("Q, K, V must be 2-D")
        if q.shape[1] != k.shape[1]:
            raise AttentionError(f"Q and K widths differ: {q.shape} vs {k.shape}")
        if k.shape[0] != v.shape[0]:
            raise AttentionError(f"K and V rows differ: {k.shape} vs {v.shape}")
        if self.causal and q.shape[0] != k.shape[0]:
            raise AttentionError("causal masking needs as many queries as keys")
        if self.sim is not None:
            self.sim = np.asarray(self.sim, dtype=np.float64)
            if self.sim.shape != (q.shape[0], k.shape[0]):
                raise AttentionError(f"sim shape {self.sim.shape} does not match scores")
            if np.any(np.abs(self.sim) > 1.0 + SIM_TOLERANCE) or not np.all(np.isfinite(self.sim)):
                raise AttentionError("sim entries must lie in [-1, 1]")

    def visible(self) -> np.ndarray:
        n, m = self.q.shape[0], self.k.shape[0]
        if self.causal:
            return np.tril(np.ones((n, m), dtype=bool))
        return np.ones((n, m), dtype=bool)


@dataclass
class AttentionOutput:
    o: np.ndarray
    weights: np.ndarray
    # rows whose reweighted mass fell below the denominator floor
    degenerate: Optional[np.ndarray] = None


class AttentionGrads(NamedTuple):
    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    sim: Optional[np.ndarray] = None


def cosine_similarity_matrix(e) -> np.ndarray:
    """Pairwise cosine similarity of the rows of ``e``.

    Zero rows have similarity 0 to every other row; the diagonal is 1.
    """
    e = np.asarray(e, dtype=np.float64)
    if e.ndim != 2 or e.shape[0] < 1:
        raise AttentionError("expected a non-empty N x d matrix")
    norms = np.linalg.norm(e, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    unit = e / safe[:, None]
    sim = np.clip(unit @ unit.T, -1.0, 1.0)
    np.fill_diagonal(sim, 1.0)
    return sim


def _softmax_scores(inp: AttentionInputs) -> np.ndarray:
    scores = inp.q @ inp.k.T / np.sqrt(inp.q.shape[1])
    vis = inp.visible()
    scores = np.where(vis, scores, -np.inf)
    scores = scores - scores.max(axis=1, keepdims=True)
    p = np.exp(scores)
    return p / p.sum(axis=1, keepdims=True)


def scaled_dot_attention(q, k, v, causal: bool = False) -> AttentionOutput:
    inp = AttentionInputs(q, k, v, causal)
    p = _softmax_scores(inp)
    return AttentionOutput(p @ inp.v, p)


def speaker_aware_attention(q, k, v, sim, causal: bool = False) -> AttentionOutput:
    inp = AttentionInputs(q, k, v, causal, sim)
    p = _softmax_scores(inp)
    w = p * (1.0 + inp.sim) / 2.0
    row = w.sum(axis=1, keepdims=True)
    a = w / np.maximum(row, DENOM_FLOOR)
    return AttentionOutput(a @ inp.v, a, row[:, 0] < DENOM_FLOOR)


def attention_backward(q, k, v, grad_o, causal: bool = False) -> AttentionGrads:
    inp = AttentionInputs(q, k, v, causal)
    grad_o = np.asarray(grad_o, dtype=np.float64)
    p = _softmax_scores(inp)
    if grad_o.shape != (inp.q.shape[0], inp.v.shape[1]):
        raise AttentionError(f"upstream gradient has shape {grad_o.shape}")
    dv = p.T @ grad_o
    dp = grad_o @ inp.v.T
    ds = p * (dp - (dp * p).sum(axis=1, keepdims=True))
    scale = 1.0 / np.sqrt(inp.q.shape[1])
    return AttentionGrads(ds @ inp.k * scale, ds.T @ inp.q * scale, dv)


def saa_backward(q, k, v, sim, grad_o, causal: bool = False) -> AttentionGrads:
    """Gradients of ``sum(grad_o * O)`` through the SAA forward map.

    ``sim`` entries are treated as independent inputs (no symmetry tying).
    """
    inp = AttentionInputs(q, k, v, causal, sim)
    grad_o = np.asarray(grad_o, dtype=np.float64)
    if grad_o.shape != (inp.q.shape[0], inp.v.shape[1]):
        raise AttentionError(f"upstream gradient has shape {grad_o.shape}")
    p = _softmax_scores(inp)
    f = (1.0 + inp.sim) / 2.0
    w = p * f
    row = w.sum(axis=1, keepdims=True)
    floored = row < DENOM_FLOOR
    denom = np.maximum(row, DENOM_FLOOR)
    a = w / denom

    dv = a.T @ grad_o
    da = grad_o @ inp.v.T
    # a = w / r with r = sum_j w; the floor makes r constant
    dw = (da - np.where(floored, 0.0, (da * a).sum(axis=1, keepdims=True))) / denom
    dp = dw * f
    dsim = dw * p / 2.0
    ds = p * (dp - (dp * p).sum(axis=1, keepdims=True))
    scale = 1.0 / np.sqrt(inp.q.shape[1])
    return AttentionGrads(ds @ inp.k * scale, ds.T @ inp.q * scale, dv, dsim)
