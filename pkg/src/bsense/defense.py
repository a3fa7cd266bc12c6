"""Defenses against asynchronous Byzantines.

* greedy subset selection over a probability objective,
* SPSA ascent of a synchronizability objective on the simplex,
* age-of-information tracking with a transmission-probability rule,
* a seeded multi-hypothesis scenario tying the three together.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Hashable, Iterable, Sequence

import numpy as np

from bsense.adversary import AsyncSchedule, schedule_delay
from bsense.errors import EvaluationError
from bsense.leakage import AlphaConfig, alpha_leakage_many


# -- greedy -----------------------------------------------------------------

@dataclass(frozen=True)
class GreedyConfig:
    step: float = 0.2  # ground set is {0, ..., 1/step - 1}
    f_max: float = math.inf
    gamma_th: float = 0.5
    max_size: int | None = None

    def __post_init__(self):
        if not 0 < self.step <= 1:
            raise ValueError("step must lie in (0, 1]")
        if math.isnan(self.f_max):
            raise ValueError("f_max must not be NaN")

    @property
    def ground_set(self) -> tuple[int, ...]:
        return tuple(range(int(round(1.0 / self.step))))


@dataclass(frozen=True)
class GreedyResult:
    selected: tuple
    value: float
    history: tuple[float, ...]  # f after each addition, starting from the empty set
    meets_threshold: bool


def greedy_select(cfg: GreedyConfig, objective: Callable[[frozenset], float],
                  ground: Iterable[Hashable] | None = None) -> GreedyResult:
    """Add the element with the largest marginal gain until a stop rule fires.

    Stops when ``|f| >= f_max``, when no element has a positive gain, when the
    ground set is exhausted or when ``max_size`` is reached. Ties go to the
    element that comes first in the ground set.
    """
    elems = list(cfg.ground_set if ground is None else ground)
    chosen: list = []
    current = frozenset()
    value = float(objective(current))
    history = [value]
    while abs(value) < cfg.f_max and len(chosen) < len(elems):
        if cfg.max_size is not None and len(chosen) >= cfg.max_size:
            break
        best, best_val = None, value
        for e in elems:
            if e in current:
                continue
            v = float(objective(current | {e}))
            if v > best_val:
                best, best_val = e, v
        if best is None:
            break
        chosen.append(best)
        current = current | {best}
        value = best_val
        history.append(value)
    return GreedyResult(tuple(chosen), value, tuple(history), value >= cfg.gamma_th)


# -- SPSA ---------------------------------------------------------------------

@dataclass(frozen=True)
class SpsaConfig:
    """Gain schedules ``a_n = a / (n + 1 + big_a) ** decay_a`` and ``c_n = c / (n + 1) ** decay_c``."""

    a: float = 0.2
    c: float = 0.05
    big_a: float = 10.0
    decay_a: float = 0.602
    decay_c: float = 0.101
    xi_b: float = 0.3
    alpha: float = 2.0
    max_iters: int = 2000
    tol: float = 1e-7
    patience: int = 50

    def __post_init__(self):
        if not (self.a > 0 and self.c > 0):
            raise ValueError("gain constants must be positive")
        if self.decay_a < 0 or self.decay_c < 0:
            raise ValueError("schedules must be non-increasing")
        if not 0 <= self.xi_b < 1:
            raise ValueError("xi_b must lie in [0, 1)")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")

    def a_n(self, n: int) -> float:
        return self.a / (n + 1 + self.big_a) ** self.decay_a

    def c_n(self, n: int) -> float:
        return self.c / (n + 1) ** self.decay_c


def _finite(v) -> float:
    v = float(v)
    if not math.isfinite(v):
        raise EvaluationError(f"objective returned {v!r}")
    return v


def spsa_gradient(f: Callable[[np.ndarray], float], x, n: int, cfg: SpsaConfig,
                  rng: np.random.Generator) -> np.ndarray:
    """Two-evaluation simultaneous-perturbation gradient estimate at ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    delta = rng.integers(0, 2, size=x.shape) * 2.0 - 1.0
    cn = cfg.c_n(n)
    up = _finite(f(x + cn * delta))
    down = _finite(f(x - cn * delta))
    return (up - down) / (2.0 * cn * delta)


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    return np.maximum(v - css[rho] / (rho + 1), 0.0)


@dataclass(frozen=True)
class SpsaResult:
    x: np.ndarray
    best_x: np.ndarray
    trajectory: np.ndarray  # objective at each iterate, starting with x0
    iterations: int
    converged: bool


def spsa_maximize(f: Callable[[np.ndarray], float], x0, cfg: SpsaConfig, rng: np.random.Generator,
                  project: Callable[[np.ndarray], np.ndarray] | None = project_simplex) -> SpsaResult:
    """Ascend ``f`` with ``x <- proj(x + a_n * grad)``.

    Converged means the step length stayed under ``tol`` for ``patience``
    consecutive iterations; otherwise the run ends at ``max_iters``.
    """
    x = np.asarray(x0, dtype=float).copy()
    if project is not None:
        x = project(x)
    traj = [_finite(f(x))]
    best_x, best_f = x.copy(), traj[0]
    quiet = 0
    converged = False
    n = 0
    for n in range(cfg.max_iters):
        g = spsa_gradient(f, x, n, cfg, rng)
        new = x + cfg.a_n(n) * g
        if project is not None:
            new = project(new)
        step = float(np.abs(new - x).sum())
        x = new
        fx = _finite(f(x))
        traj.append(fx)
        if fx > best_f:
            best_x, best_f = x.copy(), fx
        quiet = quiet + 1 if step < cfg.tol else 0
        if quiet >= cfg.patience:
            converged = True
            break
    return SpsaResult(x, best_x, np.asarray(traj), n + 1, converged)


def quadratic_surrogate(target) -> Callable[[np.ndarray], float]:
    """``-|x - target|^2``, peaked at ``target``."""
    t = np.asarray(target, dtype=float)
    return lambda x: -float(np.sum((np.asarray(x) - t) ** 2))


# -- age of information -------------------------------------------------------

@dataclass(frozen=True)
class AoiState:
    age: int = 1
    tx_prob: float = 1.0
    p_min: float = 0.1
    eta_step: float = 0.2

    def __post_init__(self):
        if self.age < 0:
            raise ValueError("age must be >= 0")
        if not 0 <= self.p_min <= 1:
            raise ValueError("p_min must lie in [0, 1]")
        if not self.p_min <= self.tx_prob <= 1:
            raise ValueError("tx_prob must lie in [p_min, 1]")


def aoi_step(s: AoiState, delivered: bool) -> AoiState:
    """Advance one slot: reset or age, then lower ``tx_prob`` by ``eta / age``."""
    age_before = max(s.age, 1)
    tx = max(s.p_min, s.tx_prob - s.eta_step / age_before)
    return dataclasses.replace(s, age=1 if delivered else s.age + 1, tx_prob=tx)


def simulate_aoi(deliveries: Sequence[bool], state: AoiState = AoiState()) -> tuple[np.ndarray, np.ndarray]:
    """Ages and transmission probabilities after each slot."""
    ages = np.empty(len(deliveries), dtype=np.int64)
    txs = np.empty(len(deliveries))
    for t, d in enumerate(deliveries):
        state = aoi_step(state, bool(d))
        ages[t] = state.age
        txs[t] = state.tx_prob
    return ages, txs


# -- synchronization scenario -------------------------------------------------

@dataclass(frozen=True)
class SyncScenario:
    """Multi-hypothesis Bernoulli learning with stale flipped Byzantine reports.

    Hypothesis ``j`` says each observation is 1 with probability
    ``(j + 0.5) * step``. Each slot the server mixes its Bayesian posterior
    with a stale Byzantine report (weight ``xi_b``); the report is the
    Byzantine's own belief, sharpened by ``beta`` and then flipped. A
    defense vector ``x`` on the simplex reweights stale reports before they
    are mixed in.
    """

    step: float = 0.2
    true_index: int = 3
    horizon: int = 20
    n_episodes: int = 32
    xi_b: float = 0.3
    beta: float = 1.0
    alpha: float = 2.0
    schedule: AsyncSchedule = AsyncSchedule("geometric", p=0.5, max_delay=4)
    seed: int = 0

    @property
    def n_hypotheses(self) -> int:
        return int(round(1.0 / self.step))

    @property
    def likelihood(self) -> np.ndarray:
        theta = (np.arange(self.n_hypotheses) + 0.5) * self.step
        return np.vstack([1.0 - theta, theta])

    @cached_property
    def draws(self) -> dict:
        """Observations and stale reports, fixed per seed so every ``x`` sees the same episodes."""
        m, lik = self.n_hypotheses, self.likelihood
        p_true = lik[1, self.true_index]
        rng = np.random.default_rng(self.seed)
        obs = (rng.random((self.n_episodes, self.horizon)) < p_true).astype(int)
        obs_b = (rng.random((self.n_episodes, self.horizon)) < p_true).astype(int)
        delays = np.array([[schedule_delay(self.schedule, t, rng) for t in range(self.horizon)]
                           for _ in range(self.n_episodes)])
        reports = np.empty((self.n_episodes, self.horizon, m))
        bz = np.full((self.n_episodes, m), 1.0 / m)
        for t in range(self.horizon):
            bz = bz * lik[obs_b[:, t]] ** self.beta
            bz /= bz.sum(axis=1, keepdims=True)
            flipped = bz.copy()
            others = np.delete(np.arange(m), self.true_index)
            j = others[np.argmax(bz[:, others], axis=1)]
            rows = np.arange(self.n_episodes)
            flipped[rows, self.true_index] = bz[rows, j]
            flipped[rows, j] = bz[rows, self.true_index]
            reports[:, t] = flipped
        stale_idx = np.maximum(np.arange(self.horizon)[None, :] - delays, 0)
        stale = np.take_along_axis(reports, stale_idx[:, :, None], axis=1)
        return {"obs": obs, "stale": stale, "delays": delays}

    def run(self, x) -> np.ndarray:
        """Server beliefs of shape ``(episodes, horizon, hypotheses)`` under defense ``x``."""
        d = self.draws
        lik = self.likelihood
        x = np.asarray(x, dtype=float)
        m = self.n_hypotheses
        b = np.full((self.n_episodes, m), 1.0 / m)
        out = np.empty((self.n_episodes, self.horizon, m))
        for t in range(self.horizon):
            post = b * lik[d["obs"][:, t]]
            post /= post.sum(axis=1, keepdims=True)
            w = d["stale"][:, t] * x[None, :]
            tot = w.sum(axis=1, keepdims=True)
            w = np.where(tot > 0, w / np.where(tot > 0, tot, 1.0), 1.0 / m)
            b = (1.0 - self.xi_b) * post + self.xi_b * w
            out[:, t] = b
        return out

    def leakage(self, x, form: str = "standard") -> np.ndarray:
        """Per-slot leakage of the next observation, shape ``(episodes, horizon)``."""
        beliefs = self.run(x)
        joints = beliefs[..., :, None] * self.likelihood.T[None, None]
        flat = joints.reshape(-1, self.n_hypotheses, 2)
        vals = alpha_leakage_many(flat, AlphaConfig(self.alpha, form))
        return vals.reshape(self.n_episodes, self.horizon)

    def negative_rate_fraction(self, x) -> float:
        """Share of slots where leakage falls, pooled over the episode bundle."""
        rate = np.diff(self.leakage(x), axis=1)
        return float(np.mean(rate < 0))

    def subset_weights(self, subset) -> np.ndarray:
        x = np.zeros(self.n_hypotheses)
        if subset:
            x[list(subset)] = 1.0 / len(subset)
        else:
            x[:] = 1.0 / self.n_hypotheses
        return x

    def greedy_objective(self, subset) -> float:
        return self.negative_rate_fraction(self.subset_weights(subset))

    def sync_objective(self, x, exponent: float | None = None) -> float:
        """``xi_b * sum_theta P(theta) * x(theta) ** e`` with ``P`` the mean final belief.

        ``e`` defaults to ``(alpha - 1) / alpha``.
        """
        if self.xi_b == 0:
            return 0.0
        e = (self.alpha - 1.0) / self.alpha if exponent is None else exponent
        x = np.clip(np.asarray(x, dtype=float), 0.0, None)
        p_hat = self.run(x)[:, -1].mean(axis=0)
        return float(self.xi_b * np.sum(p_hat * x ** e))


@dataclass(frozen=True)
class SyncComparison:
    greedy: GreedyResult
    spsa: SpsaResult
    greedy_x: np.ndarray
    spsa_x: np.ndarray
    greedy_sync: float
    spsa_sync: float
    leakage_ratio: np.ndarray  # per slot, greedy / SPSA, averaged over episodes


def compare_defenses(sc: SyncScenario, gcfg: GreedyConfig | None = None, scfg: SpsaConfig | None = None,
                     use_spsa: bool = True) -> SyncComparison:
    """Run both defenses on one scenario. With ``use_spsa=False`` SPSA is replaced by the greedy answer."""
    gcfg = gcfg or GreedyConfig(step=sc.step)
    scfg = scfg or SpsaConfig(a=1.0, xi_b=sc.xi_b, alpha=sc.alpha, max_iters=200)
    g = greedy_select(gcfg, sc.greedy_objective, range(sc.n_hypotheses))
    gx = sc.subset_weights(g.selected)
    if use_spsa:
        rng = np.random.default_rng(np.random.SeedSequence([sc.seed, 1]))
        s = spsa_maximize(sc.sync_objective, sc.subset_weights(()), scfg, rng)
        sx = s.best_x
    else:
        s = SpsaResult(gx, gx, np.array([sc.sync_objective(gx)]), 0, False)
        sx = gx
    lg = sc.leakage(gx).mean(axis=0)
    ls = sc.leakage(sx).mean(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(ls > 0, lg / np.where(ls > 0, ls, 1.0), 1.0)
    return SyncComparison(g, s, gx, sx, sc.sync_objective(gx), sc.sync_objective(sx), ratio)
