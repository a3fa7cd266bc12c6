"""Byzantine belief falsification and message-delay schedules."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

ATTACK_KINDS = ("honest", "flip", "scale", "noise", "kl_max")
DELAY_KINDS = ("none", "fixed", "geometric")
MAGNITUDE_CAP = 1.0
VERTEX_SMOOTHING = 1e-3
LOG_FLOOR = 1e-300


@dataclass(frozen=True)
class AttackStrategy:
    kind: str = "flip"
    magnitude: float = 1.0
    seed: int = 0
    kl_mode: str = "sum"  # or "log_ratio"

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if not 0 <= self.magnitude <= MAGNITUDE_CAP:
            raise ValueError(f"magnitude must lie in [0, {MAGNITUDE_CAP}]")
        if self.kl_mode not in ("sum", "log_ratio"):
            raise ValueError(f"unknown kl_mode {self.kl_mode!r}")


@dataclass(frozen=True)
class AsyncSchedule:
    kind: str = "none"
    k: int = 0
    p: float = 0.5
    max_delay: int = 0

    def __post_init__(self):
        if self.kind not in DELAY_KINDS:
            raise ValueError(f"unknown delay kind {self.kind!r}")
        if self.max_delay < 0 or self.k < 0:
            raise ValueError("delays must be non-negative")
        if self.kind == "geometric" and not 0 < self.p <= 1:
            raise ValueError("geometric p must lie in (0, 1]")
        if self.kind == "fixed" and self.k > self.max_delay:
            raise ValueError("fixed delay k exceeds max_delay")


@dataclass(frozen=True)
class AdversaryConfig:
    byzantine_fraction: float = 0.2
    strategy: AttackStrategy = AttackStrategy()
    schedule: AsyncSchedule = AsyncSchedule()
    beta_target: float = 1.0

    def __post_init__(self):
        if not 0 <= self.byzantine_fraction < 0.5:
            raise ValueError("byzantine_fraction must lie in [0, 0.5)")
        if not (math.isfinite(self.beta_target) and self.beta_target > 0):
            raise ValueError("beta_target must be positive")

    def n_byzantine(self, n_users: int) -> int:
        return int(round(self.byzantine_fraction * n_users))


def _coerce(b) -> np.ndarray:
    b = np.clip(np.nan_to_num(np.asarray(b, dtype=float), nan=0.0, posinf=0.0), 0.0, None)
    total = b.sum()
    if total <= 0:
        return np.full(b.size, 1.0 / b.size)
    return b / total


def kl_score(honest, candidate, mode: str = "sum") -> float:
    """Divergence of the falsified belief from the honest one.

    ``sum`` is the usual ``sum p log(p / q)``; ``log_ratio`` scores
    ``sum p * log(p) / log(q)``.
    """
    p = np.asarray(honest, dtype=float)
    q = np.maximum(np.asarray(candidate, dtype=float), LOG_FLOOR)
    mask = p > 0
    if mode == "sum":
        return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))
    logq = np.log(q[mask])
    logq = np.where(logq == 0, -LOG_FLOOR, logq)  # q == 1 would divide by zero
    return float(np.sum(p[mask] * np.log(p[mask]) / logq))


def _flip(b: np.ndarray, true_index: int) -> np.ndarray:
    out = b.copy()
    others = np.delete(np.arange(b.size), true_index)
    j = others[int(np.argmax(b[others]))]
    out[true_index], out[j] = b[j], b[true_index]
    return out


def _scale(b: np.ndarray, true_index: int, m: float) -> np.ndarray:
    out = b.copy()
    out[true_index] *= 1.0 - m
    if out.sum() <= 0:
        out = np.ones_like(b)
        out[true_index] = 0.0
    return out / out.sum()


def kl_candidates(b, true_index: int, scales=(0.25, 0.5, 0.75)) -> list[tuple[str, np.ndarray]]:
    """Flip, a grid of scale attacks and the smoothed simplex vertices."""
    b = _coerce(b)
    cands = [("flip", _flip(b, true_index))]
    cands += [(f"scale_{m:g}", _scale(b, true_index, m)) for m in scales]
    for j in range(b.size):
        v = np.full(b.size, VERTEX_SMOOTHING / b.size)
        v[j] += 1.0 - VERTEX_SMOOTHING
        cands.append((f"vertex_{j}", v))
    return cands


def kl_argmax(b, candidates, mode: str = "sum") -> tuple[int, np.ndarray]:
    scores = [kl_score(b, c, mode) for _, c in candidates]
    i = int(np.argmax(scores))
    return i, candidates[i][1]


def falsify_belief(b, a: AttackStrategy, true_index: int, rng: np.random.Generator | None = None) -> np.ndarray:
    """Belief a Byzantine reports in place of its honest belief ``b``."""
    b = _coerce(b)
    if not 0 <= true_index < b.size:
        raise ValueError("true_index out of range")
    if a.kind == "honest":
        return b
    if a.kind == "flip":
        return _flip(b, true_index)
    if a.kind == "scale":
        return _scale(b, true_index, a.magnitude)
    if a.kind == "noise":
        rng = rng if rng is not None else np.random.default_rng(a.seed)
        jitter = rng.dirichlet(np.ones(b.size))
        return _coerce((1.0 - a.magnitude) * b + a.magnitude * jitter)
    _, best = kl_argmax(b, kl_candidates(b, true_index), a.kl_mode)
    return best


def schedule_delay(s: AsyncSchedule, slot: int, rng: np.random.Generator) -> int:
    """Delay in slots for a message sent at ``slot``."""
    if slot < 0:
        raise ValueError("slot must be >= 0")
    if s.kind == "none":
        return 0
    if s.kind == "fixed":
        return s.k
    return int(min(rng.geometric(s.p) - 1, s.max_delay))


def truncated_geometric_mean(p: float, max_delay: int) -> float:
    """Mean of ``min(G - 1, max_delay)`` for ``G ~ Geometric(p)`` on {1, 2, ...}."""
    q = 1.0 - p
    return q * (1.0 - q ** max_delay) / p
