"""Finite-difference checks of the analytic backward passes."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List

import numpy as np

from .cif import CifConfig, FIRE_TOLERANCE, cif_backward, cif_forward, quantity_loss, quantity_loss_grad
from .saa import saa_backward, speaker_aware_attention

STEP = 1e-6
TOLERANCE = 1e-5
TIE_MARGIN = 1e-3
# entries below this magnitude are compared on an absolute scale
ERROR_FLOOR = 1e-6


def central_difference(f: Callable[[np.ndarray], float], x: np.ndarray,
                       step: float = STEP) -> np.ndarray:
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + step
        up = f(x)
        x[idx] = orig - step
        down = f(x)
        x[idx] = orig
        grad[idx] = (up - down) / (2 * step)
    return grad


def relative_error(analytic, numeric) -> np.ndarray:
    a, n = np.asarray(analytic), np.asarray(numeric)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), ERROR_FLOOR)


@dataclass
class CheckReport:
    target: str
    instances: int = 0
    max_error: Dict[str, float] = field(default_factory=dict)
    tolerance: float = TOLERANCE

    def record(self, name: str, analytic, numeric) -> None:
        err = float(relative_error(analytic, numeric).max(initial=0.0))
        self.max_error[name] = max(self.max_error.get(name, 0.0), err)

    @property
    def passed(self) -> bool:
        return all(v < self.tolerance for v in self.max_error.values())

    def as_dict(self) -> dict:
        return {"target": self.target, "instances": self.instances,
                "tolerance": self.tolerance, "max_error": self.max_error,
                "passed": self.passed}


def random_similarity(rng, n: int, dim: int = 4) -> np.ndarray:
    e = rng.normal(size=(n, dim))
    e /= np.linalg.norm(e, axis=1, keepdims=True)
    return np.clip(e @ e.T, -1.0, 1.0)


def check_saa(rng, instances: int = 50, n: int = 4, dk: int = 3, dv: int = 3,
              causal: bool = False) -> CheckReport:
    rep = CheckReport("saa")
    for _ in range(instances):
        q, k = rng.normal(size=(n, dk)), rng.normal(size=(n, dk))
        v = rng.normal(size=(n, dv))
        sim = random_similarity(rng, n)
        g = rng.normal(size=(n, dv))
        grads = saa_backward(q, k, v, sim, g, causal)

        def loss(q=q, k=k, v=v, sim=sim):
            return float(np.sum(g * speaker_aware_attention(q, k, v, sim, causal).o))

        rep.record("q", grads.q, central_difference(lambda x: loss(q=x), q))
        rep.record("k", grads.k, central_difference(lambda x: loss(k=x), k))
        rep.record("v", grads.v, central_difference(lambda x: loss(v=x), v))
        # keep perturbed sim inside [-1, 1]
        inner = 0.999 * sim
        grads_s = saa_backward(q, k, v, inner, g, causal)
        rep.record("sim", grads_s.sim, central_difference(lambda x: loss(sim=x), inner))
        rep.instances += 1
    return rep


def tie_distance(alpha, cfg: CifConfig) -> float:
    """Smallest distance between the running accumulator and a firing or
    tail decision threshold."""
    beta = cfg.beta
    acc, best = 0.0, np.inf
    for a in alpha:
        rem = float(a)
        best = min(best, abs(acc + rem - beta))
        while acc + rem >= beta - FIRE_TOLERANCE * beta:
            rem -= beta - acc
            acc = 0.0
            best = min(best, abs(rem - beta), rem)
        acc += max(rem, 0.0)
    return min(best, abs(acc - cfg.tail_threshold * beta))


def random_cif_instance(rng, frames: int = 5, dim: int = 3, cfg: CifConfig = CifConfig()):
    while True:
        alpha = rng.uniform(0.05, 0.95, size=frames)
        if tie_distance(alpha, cfg) >= TIE_MARGIN:
            return rng.normal(size=(frames, dim)), alpha


def check_cif(rng, instances: int = 50, frames: int = 5, dim: int = 3,
              cfg: CifConfig = CifConfig()) -> CheckReport:
    rep = CheckReport("cif")
    done = 0
    while done < instances:
        h, alpha = random_cif_instance(rng, frames, dim, cfg)
        res = cif_forward(h, alpha, cfg)
        if res.num_tokens == 0:
            continue
        g = rng.normal(size=res.embeddings.shape)
        gh, ga = cif_backward(h, alpha, cfg, g)

        def loss_h(x):
            return float(np.sum(g * cif_forward(x, alpha, cfg).embeddings))

        def loss_a(x):
            return float(np.sum(g * cif_forward(h, x, cfg).embeddings))

        rep.record("h", gh, central_difference(loss_h, h))
        rep.record("alpha", ga, central_difference(loss_a, alpha))
        done += 1
    rep.instances = done
    return rep


def check_quantity(rng, instances: int = 50, frames: int = 6) -> CheckReport:
    rep = CheckReport("quantity")
    for _ in range(instances):
        alpha = rng.uniform(0.0, 1.0, size=frames)
        n = int(rng.integers(1, frames + 1))
        if abs(alpha.sum() - n) < TIE_MARGIN:
            alpha[0] += 2 * TIE_MARGIN
        rep.record("alpha", quantity_loss_grad(alpha, n),
                   central_difference(lambda x: quantity_loss(x, n), alpha))
        rep.instances += 1
    return rep


CHECKS = {"saa": check_saa, "cif": check_cif, "quantity": check_quantity}


def run_checks(targets: List[str], seed: int = 0, instances: int = 50) -> List[CheckReport]:
    rng = np.random.default_rng(seed)
    unknown = set(targets) - set(CHECKS)
    if unknown:
        raise ValueError(f"unknown gradcheck targets {sorted(unknown)}")
    return [CHECKS[t](rng, instances) for t in targets]
