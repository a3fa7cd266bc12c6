"""Alpha-leakage, its temporal rate, convergence-rate exponents and Jain's index.

Joint tables are indexed ``joint[theta, s]``: rows are hypotheses (the
quantity being guessed), columns are observation symbols. All logarithms
are natural.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from bsense.errors import DegenerateDistributionError, DomainError

LOG_FLOOR = 1e-300
STANDARD = "standard"
CONVEX = "convex"


@dataclass(frozen=True)
class AlphaConfig:
    """Leakage order and exponent convention.

    ``alpha`` is either finite and > 1, or exactly ``1.0`` / ``math.inf`` for
    the limiting cases. ``form="standard"`` uses the exponent
    ``(alpha - 1) / alpha`` on the guessing probability, ``form="convex"`` uses
    ``alpha / (alpha - 1)`` and maximizes numerically over a simplex grid of
    spacing ``grid_step``.
    """

    alpha: float = 2.0
    form: str = STANDARD
    grid_step: float = 0.05

    def __post_init__(self):
        a = self.alpha
        if not (a == 1.0 or a == math.inf or (math.isfinite(a) and a > 1.0)):
            raise DomainError(f"alpha must be > 1, or exactly 1 or inf; got {a!r}")
        if self.form not in (STANDARD, CONVEX):
            raise DomainError(f"unknown leakage form {self.form!r}")
        if not 0 < self.grid_step <= 1:
            raise DomainError("grid_step must lie in (0, 1]")


def validate_joint(joint) -> np.ndarray:
    p = np.asarray(joint, dtype=float)
    if p.ndim != 2 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise DomainError("joint must be a non-negative matrix summing to 1")
    if np.any(p.sum(axis=0) <= 0):
        raise DegenerateDistributionError("every observation symbol needs positive probability")
    return p


def _alpha_norm(v: np.ndarray, alpha: float, axis=None) -> np.ndarray:
    # scaled by the max to keep large alpha from underflowing
    m = v.max(axis=axis, keepdims=True)
    safe = np.where(m > 0, m, 1.0)
    out = np.squeeze(safe, axis=axis) * (((v / safe) ** alpha).sum(axis=axis)) ** (1.0 / alpha)
    return np.where(np.squeeze(m, axis=axis) > 0, out, 0.0)


def simplex_grid(k: int, step: float) -> np.ndarray:
    """All points of the ``k``-simplex whose coordinates are multiples of ``step``."""
    n = int(round(1.0 / step))
    pts = []
    for cuts in itertools.combinations(range(n + k - 1), k - 1):
        parts = np.diff((-1,) + cuts + (n + k - 1,)) - 1
        pts.append(parts)
    return np.array(pts, dtype=float) / n


def _max_guess_moment_grid(p: np.ndarray, exponent: float, step: float) -> float:
    grid = simplex_grid(p.size, step)
    return float((grid ** exponent @ p).max())


def _mutual_information(p: np.ndarray) -> float:
    pt = p.sum(axis=1, keepdims=True)
    ps = p.sum(axis=0, keepdims=True)
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / (pt @ ps)[mask])))


def _map_gain(p: np.ndarray) -> float:
    return float(p.max(axis=0).sum() / p.sum(axis=1).max())


def alpha_leakage(joint, cfg: AlphaConfig = AlphaConfig()) -> float:
    """Leakage about the hypothesis from one observation, in nats."""
    p = validate_joint(joint)
    a = cfg.alpha
    if cfg.form == STANDARD:
        if a == 1.0:
            val = _mutual_information(p)
        elif a == math.inf:
            val = math.log(_map_gain(p))
        else:
            num = _alpha_norm(p, a, axis=0).sum()
            den = float(_alpha_norm(p.sum(axis=1), a))
            val = a / (a - 1.0) * math.log(num / den)
        return max(val, 0.0)

    # exponent alpha/(alpha-1) >= 1: the moment is convex in the guess,
    # so the grid (which contains every vertex) attains the maximum
    if a == math.inf:
        return max(math.log(_map_gain(p)), 0.0)
    if a == 1.0:
        return 0.0 if _map_gain(p) <= 1.0 + 1e-15 else math.inf
    e = a / (a - 1.0)
    ps = p.sum(axis=0)
    num = sum(ps[s] * _max_guess_moment_grid(p[:, s] / ps[s], e, cfg.grid_step) for s in range(p.shape[1]))
    den = _max_guess_moment_grid(p.sum(axis=1), e, cfg.grid_step)
    return max(a / (a - 1.0) * math.log(num / den), 0.0)


def alpha_leakage_many(joints, cfg: AlphaConfig = AlphaConfig()) -> np.ndarray:
    """``alpha_leakage`` over a stack ``joints[k, theta, s]``.

    The standard form is vectorized; the convex form loops.
    """
    p = np.asarray(joints, dtype=float)
    if p.ndim != 3:
        raise ValueError("expected a (k, theta, s) stack")
    if cfg.form == CONVEX:
        return np.array([alpha_leakage(j, cfg) for j in p])
    if np.any(p.sum(axis=1) <= 0):
        raise DegenerateDistributionError("every observation symbol needs positive probability")
    a = cfg.alpha
    pt = p.sum(axis=2)
    if a == 1.0:
        ps = p.sum(axis=1, keepdims=True)
        denom = pt[:, :, None] * ps
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(p > 0, p * np.log(p / np.where(denom > 0, denom, 1.0)), 0.0)
        val = terms.sum(axis=(1, 2))
    elif a == math.inf:
        val = np.log(p.max(axis=1).sum(axis=1) / pt.max(axis=1))
    else:
        num = _alpha_norm(p, a, axis=1).sum(axis=1)
        den = _alpha_norm(pt, a, axis=1)
        val = a / (a - 1.0) * np.log(num / den)
    return np.maximum(val, 0.0)


def product_joint(prior, likelihood) -> np.ndarray:
    """Joint ``P(theta, s) = prior[theta] * likelihood[s, theta]``."""
    prior = np.asarray(prior, dtype=float)
    lik = np.asarray(likelihood, dtype=float)
    return (lik * prior[None, :]).T


@dataclass(frozen=True)
class LeakageSeries:
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    @property
    def rate(self) -> np.ndarray:
        return np.diff(self.values)


class RateSummary(NamedTuple):
    rate: np.ndarray
    nonneg_fraction: float


def leakage_rate(series) -> RateSummary:
    """Per-step rate of a leakage series and the share of steps with rate >= 0."""
    values = series.values if isinstance(series, LeakageSeries) else np.asarray(series, dtype=float)
    if values.size < 2:
        raise ValueError("a leakage series needs at least two values")
    rate = np.diff(values)
    return RateSummary(rate, float(np.mean(rate >= 0)))


@dataclass(frozen=True)
class RateEstimates:
    omega1: float
    omega2: float
    omega3: float
    tail_window: int
    per_agent_omega1: np.ndarray
    per_agent_omega2: np.ndarray


def _tail_rate(gap: np.ndarray, window: int) -> np.ndarray:
    # gap has shape (..., T) with t = 1..T; returns the tail minimum per row
    t = np.arange(1, gap.shape[-1] + 1, dtype=float)
    r = -np.log(np.maximum(np.abs(gap), LOG_FLOOR)) / t
    return r[..., -window:].min(axis=-1)


def omega_rates(true_traj, cross=None, tail_window: int | None = None) -> RateEstimates:
    """Finite-horizon estimates of the three convergence exponents.

    ``true_traj[i, t]`` is agent ``i``'s belief in the true hypothesis at
    step ``t + 1``; ``cross[i, t, j]`` its belief in the ``j``-th false
    hypothesis. When ``cross`` is given, the distance of the true belief from
    one is taken as the total false mass, which keeps its precision after
    ``1 - l`` has rounded to zero. liminf is approximated by the minimum over
    the last ``tail_window`` steps (default: the last quarter).
    """
    true_traj = np.atleast_2d(np.asarray(true_traj, dtype=float))
    if true_traj.size == 0:
        raise ValueError("empty trajectories")
    n_t = true_traj.shape[1]
    if cross is None:
        false = (1.0 - true_traj)[..., None]
    else:
        false = np.asarray(cross, dtype=float)
        if false.ndim == 1:
            false = false[None, :, None]
        elif false.ndim == 2:
            false = false[..., None]
    window = tail_window if tail_window is not None else max(1, math.ceil(0.25 * n_t))
    if not 1 <= window <= n_t:
        raise ValueError(f"tail window {window} incompatible with {n_t} steps")

    gap_true = false.sum(axis=-1) if cross is not None else 1.0 - true_traj
    w1 = _tail_rate(gap_true, window)
    w2 = _tail_rate(false.max(axis=-1), window)
    social = false.sum(axis=(0, 2))
    w3 = float(_tail_rate(social[None, :], window)[0])
    return RateEstimates(
        omega1=float(w1.min()),
        omega2=float(w2.min()),
        omega3=w3,
        tail_window=window,
        per_agent_omega1=w1,
        per_agent_omega2=w2,
    )


class CappedReciprocalWarning(RuntimeWarning):
    """A zero leakage value hit the reciprocal ceiling in Jain's index."""


RECIPROCAL_MAPS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "identity": lambda x: x,
    "sqrt": np.sqrt,
    "log1p": np.log1p,
}


def jain_fairness(per_user_leakage, h: str = "identity", cap: float = 1e12) -> float:
    """Jain's index of ``h(1 / L_i)`` over users."""
    vals = np.asarray(per_user_leakage, dtype=float)
    if vals.ndim != 1 or vals.size < 1:
        raise ValueError("need a 1-D array with at least one user")
    if np.any(vals < 0) or not np.all(np.isfinite(vals)):
        raise DomainError("leakage values must be finite and non-negative")
    if h not in RECIPROCAL_MAPS:
        raise DomainError(f"unknown reciprocal map {h!r}")
    with np.errstate(divide="ignore"):
        recip = 1.0 / vals
    if np.any(recip > cap):
        warnings.warn("zero or tiny leakage capped in Jain's index", CappedReciprocalWarning, stacklevel=2)
        recip = np.minimum(recip, cap)
    x = RECIPROCAL_MAPS[h](recip)
    den = x.size * np.sum(x * x)
    if den == 0:
        return 1.0
    return float(np.sum(x) ** 2 / den)
