"""Continuous integrate-and-fire (CIF).

Frame weights ``alpha`` are accumulated left to right. Whenever the
accumulator reaches the threshold ``beta`` a token fires: the current
frame's weight is split into the part that completes the token and a
remainder carried into the next one. Each token embedding is the
weight-sum of the encoder frames that contributed to it.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np


FIRE_TOLERANCE = 1e-12


class CifError(ValueError):
    pass


class InvalidWeights(CifError):
    pass


class DegenerateWeights(CifError):
    pass


@dataclass(frozen=True)
class CifConfig:
    beta: float = 1.0
    tail_threshold: float = 0.5

    def __post_init__(self):
        if not self.beta > 0:
            raise CifError("beta must be positive")
        if not 0.0 <= self.tail_threshold <= 1.0:
            raise CifError("tail_threshold must lie in [0, 1]")


@dataclass
class FireResult:
    """Output of :func:`cif_forward`.

    ``boundaries[n]`` is the frame at which token n fired (the last frame
    for a tail token). ``contributions[n]`` lists ``(frame, weight)``
    pairs. ``residual`` is the weight left in the accumulator after the
    last frame, whether or not it was flushed as a tail token.
    """

    embeddings: np.ndarray
    boundaries: List[int]
    contributions: List[List[Tuple[int, float]]]
    residual: float
    tail: bool = False

    @property
    def num_tokens(self) -> int:
        return len(self.boundaries)

    def token_weights(self) -> np.ndarray:
        return np.array([sum(w for _, w in c) for c in self.contributions])


def _check(h, alpha):
    h = np.asarray(h, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    if h.ndim != 2 or alpha.ndim != 1 or h.shape[0] != alpha.shape[0]:
        raise CifError(f"shape mismatch: h {h.shape} vs alpha {alpha.shape}")
    if np.any(alpha < 0) or not np.all(np.isfinite(alpha)):
        raise InvalidWeights("alpha must be finite and non-negative")
    return h, alpha


def _integrate(alpha: np.ndarray, cfg: CifConfig, track: bool):
    """Partition ``alpha`` into tokens.

    With ``track`` every contribution weight is also carried as an affine
    function of alpha, stored as its gradient row; the partition itself is
    treated as fixed.
    """
    beta = cfg.beta
    # accumulator within this of beta counts as an exact tie (float round-off)
    tol = FIRE_TOLERANCE * beta
    T = len(alpha)
    zero = np.zeros(T) if track else None
    tokens: List[List[Tuple[int, float]]] = []
    jac: List[List[np.ndarray]] = []
    boundaries: List[int] = []
    cur: List[Tuple[int, float]] = []
    cur_jac: List[np.ndarray] = []
    acc = 0.0
    acc_g = zero
    for t in range(T):
        rem = float(alpha[t])
        if track:
            rem_g = zero.copy()
            rem_g[t] = 1.0
        while acc + rem >= beta - tol:
            take = beta - acc
            cur.append((t, take))
            tokens.append(cur)
            boundaries.append(t)
            if track:
                take_g = -acc_g
                cur_jac.append(take_g)
                jac.append(cur_jac)
                rem_g = rem_g - take_g
                acc_g = zero
            cur, cur_jac = [], []
            rem = max(rem - take, 0.0)
            acc = 0.0
        if rem > 0.0:
            cur.append((t, rem))
            acc += rem
            if track:
                cur_jac.append(rem_g)
                acc_g = acc_g + rem_g
    tail = False
    if acc > cfg.tail_threshold * beta and cur:
        tokens.append(cur)
        boundaries.append(T - 1)
        jac.append(cur_jac)
        tail = True
    return tokens, boundaries, acc, tail, (jac if track else None)


def cif_forward(h, alpha, cfg: CifConfig = CifConfig()) -> FireResult:
    """Integrate ``alpha`` over frames of ``h`` (T' x d) and fire token embeddings.

    When the accumulator lands exactly on ``beta`` the whole remaining
    frame weight closes the token. A frame whose weight exceeds ``beta``
    fires more than once, repeating its index in ``boundaries``. After the
    last frame a tail token is emitted iff the residual exceeds
    ``tail_threshold * beta``.
    """
    h, alpha = _check(h, alpha)
    tokens, boundaries, residual, tail, _ = _integrate(alpha, cfg, track=False)
    emb = np.zeros((len(tokens), h.shape[1]))
    for n, contrib in enumerate(tokens):
        for t, w in contrib:
            emb[n] += w * h[t]
    return FireResult(emb, boundaries, tokens, residual, tail)


def cif_backward(h, alpha, cfg: CifConfig, grad_c):
    """Gradients of ``sum(grad_c * c)`` with respect to ``h`` and ``alpha``.

    The firing partition of the forward pass is held fixed, so at exact
    firing ties this is a one-sided subgradient.
    """
    h, alpha = _check(h, alpha)
    tokens, _, _, _, jac = _integrate(alpha, cfg, track=True)
    grad_c = np.asarray(grad_c, dtype=np.float64)
    if grad_c.shape != (len(tokens), h.shape[1]):
        raise CifError(f"upstream gradient shape {grad_c.shape} != {(len(tokens), h.shape[1])}")
    grad_h = np.zeros_like(h)
    grad_alpha = np.zeros_like(alpha)
    for n, (contrib, jrows) in enumerate(zip(tokens, jac)):
        g = grad_c[n]
        for (t, w), jrow in zip(contrib, jrows):
            grad_h[t] += w * g
            grad_alpha += float(g @ h[t]) * jrow
    return grad_h, grad_alpha


def scale_alpha(alpha, n_target: int) -> np.ndarray:
    """Rescale ``alpha`` so that it sums to ``n_target``."""
    alpha = np.asarray(alpha, dtype=np.float64)
    if n_target < 1:
        raise CifError("n_target must be at least 1")
    total = alpha.sum()
    if not total > 0:
        raise DegenerateWeights("alpha sums to zero")
    return alpha * (n_target / total)


def quantity_loss(alpha, n_target: int) -> float:
    return abs(float(np.sum(alpha)) - n_target)


def quantity_loss_grad(alpha, n_target: int) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=np.float64)
    return np.full_like(alpha, np.sign(alpha.sum() - n_target))
