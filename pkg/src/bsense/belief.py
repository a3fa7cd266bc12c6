"""Beliefs over a finite hypothesis set and the dog-leg beta estimator.

Beliefs are plain 1-D numpy arrays on the probability simplex. The helpers
here validate and renormalize them; nothing wraps the array in a class.
"""

from __future__ import annotations

import dataclasses
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from bsense.errors import DegenerateEvidenceError, IncompleteModelError

SIMPLEX_TOL = 1e-12


@dataclass(frozen=True)
class HypothesisSpace:
    size: int
    true_index: int = 0
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.size < 2:
            raise ValueError("a hypothesis space needs at least two hypotheses")
        if not 0 <= self.true_index < self.size:
            raise ValueError(f"true_index {self.true_index} outside [0, {self.size})")
        if self.labels is not None and len(self.labels) != self.size:
            raise ValueError("labels must match the hypothesis count")

    def uniform(self) -> np.ndarray:
        return np.full(self.size, 1.0 / self.size)


def normalize(weights) -> np.ndarray:
    """Project non-negative weights onto the simplex by rescaling."""
    w = np.clip(np.asarray(weights, dtype=float), 0.0, None)
    total = w.sum()
    if not np.isfinite(total) or total <= 0:
        raise DegenerateEvidenceError("weights have no positive mass")
    return w / total


def is_belief(b, tol: float = SIMPLEX_TOL) -> bool:
    b = np.asarray(b, dtype=float)
    return b.ndim == 1 and bool(np.all(b >= 0)) and abs(b.sum() - 1.0) <= tol


@dataclass(frozen=True)
class ObservationModel:
    """Likelihood table ``likelihood[s, theta] = l(s | theta)``.

    Each column (fixed hypothesis) is a distribution over symbols.
    ``prior_s0`` is the distribution of the initial symbol.
    """

    likelihood: np.ndarray
    prior_s0: np.ndarray

    def __post_init__(self):
        lik = np.asarray(self.likelihood, dtype=float)
        prior = np.asarray(self.prior_s0, dtype=float)
        if lik.ndim != 2:
            raise ValueError("likelihood must be a (symbols x hypotheses) matrix")
        if np.any(lik < 0) or not np.allclose(lik.sum(axis=0), 1.0, atol=1e-9):
            raise ValueError("each likelihood column must be a distribution over symbols")
        if prior.shape != (lik.shape[0],) or np.any(prior < 0) or abs(prior.sum() - 1) > 1e-9:
            raise ValueError("prior_s0 must be a distribution over the symbols")
        object.__setattr__(self, "likelihood", lik)
        object.__setattr__(self, "prior_s0", prior)

    @property
    def n_symbols(self) -> int:
        return self.likelihood.shape[0]

    @property
    def n_hypotheses(self) -> int:
        return self.likelihood.shape[1]


def posterior(belief, likelihood_row) -> np.ndarray:
    """``belief * likelihood_row`` renormalized."""
    unnorm = np.asarray(belief, dtype=float) * np.asarray(likelihood_row, dtype=float)
    total = unnorm.sum()
    if not total > 0:
        raise DegenerateEvidenceError("observation has zero probability under every supported hypothesis")
    return unnorm / total


def bayes_update(belief, model: ObservationModel, s: int) -> np.ndarray:
    return posterior(belief, model.likelihood[s])


def marginal_belief(model: ObservationModel, cond: Mapping[int, np.ndarray]) -> np.ndarray:
    """Mix conditional beliefs ``l(theta | s0)`` with the prior over ``s0``."""
    out = np.zeros(model.n_hypotheses)
    for s0, w in enumerate(model.prior_s0):
        if w == 0:
            continue
        if s0 not in cond:
            raise IncompleteModelError(f"no conditional belief for initial symbol {s0}")
        out += w * np.asarray(cond[s0], dtype=float)
    return out / out.sum()


def belief_gradient(prev, cur) -> np.ndarray:
    prev = np.asarray(prev, dtype=float)
    cur = np.asarray(cur, dtype=float)
    if prev.shape != cur.shape:
        raise ValueError(f"belief length mismatch: {prev.shape} vs {cur.shape}")
    return cur - prev


@dataclass(frozen=True)
class BetaEstimate:
    """State of the dog-leg estimator for ``d l(theta|s0) / d l(theta)``."""

    beta: float = 1.0
    tol: float = 1e-4
    clamp: tuple[float, float] = (0.1, 5.0)
    accuracy: float = 0.1
    eps_den: float = 1e-9
    max_iters: int = 1000
    theta_hat: int = -1
    iterations: int = 0
    converged: bool = False
    degenerate: bool = False

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        lo, hi = self.clamp
        if not lo <= hi:
            raise ValueError("clamp must be an ordered pair")


def _ratio_argmin(num: np.ndarray, den: np.ndarray, eps: float) -> int:
    valid = np.abs(den) >= eps
    if not valid.any():
        return -1
    ratios = np.where(valid, num / np.where(valid, den, 1.0), np.inf)
    # np.argmin returns the lowest index among ties
    return int(np.argmin(ratios))


def dogleg_beta(history: Sequence[tuple[np.ndarray, np.ndarray]], est: BetaEstimate = BetaEstimate()) -> BetaEstimate:
    """Alternating estimate of beta from a belief history.

    ``history[k] = (l_k(theta | s0), l_k(theta))``. The derivative is read as
    a ratio of increments between consecutive entries. For each increment
    ``k`` the (a) step holds the last usable denominator increment fixed and
    picks the hypothesis minimizing the ratio; the (b) step holds the current
    numerator increment fixed and picks the minimizer against the current
    denominator. The loop stops once the two minima agree to ``est.tol``, or
    the history (or ``est.max_iters``) runs out.

    Increments whose denominator is below ``est.eps_den`` everywhere are
    skipped. If none is usable the estimate is pinned to the upper clamp and
    flagged ``degenerate``.
    """
    if len(history) < 2:
        raise ValueError("dog-leg needs at least two history entries")
    cond = np.array([np.asarray(h[0], dtype=float) for h in history])
    marg = np.array([np.asarray(h[1], dtype=float) for h in history])
    d_num = np.diff(cond, axis=0)
    d_den = np.diff(marg, axis=0)
    lo, hi = est.clamp

    beta = None
    theta_hat = -1
    converged = False
    iters = 0
    den_fixed = None
    for k in range(min(len(d_num), est.max_iters)):
        iters += 1
        theta_b = _ratio_argmin(d_num[k], d_den[k], est.eps_den)  # (b)
        if theta_b < 0:
            continue
        theta_hat = theta_b
        beta = d_num[k, theta_b] / d_den[k, theta_b]
        if den_fixed is not None:
            theta_a = _ratio_argmin(d_num[k], den_fixed, est.eps_den)  # (a)
            beta_a = d_num[k, theta_a] / den_fixed[theta_a]
            if abs(beta - beta_a) <= est.tol:
                converged = True
                break
        den_fixed = d_den[k]
    if beta is None:
        return dataclasses.replace(
            est, beta=hi, theta_hat=-1, iterations=iters, converged=False, degenerate=True
        )
    return dataclasses.replace(
        est,
        beta=float(min(max(beta, lo), hi)),
        theta_hat=theta_hat,
        iterations=iters,
        converged=converged,
        degenerate=False,
    )
