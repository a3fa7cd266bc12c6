"""Server-driven Byzantine-resilient hypothesis testing over a sensing round loop.

Each round the server broadcasts a global belief, every user draws one
binary detection outcome, forms a posterior from the broadcast belief and
reports it (Byzantines report a falsified version, possibly late). The
server screens reports by the size of their belief change, aggregates the
survivors with a trimmed log-domain mean and smooths the move through one
mean-field-game sweep before broadcasting again.

Hypothesis 0 is "channel idle", hypothesis 1 "primary user present".
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from bsense import adversary as adv_mod
from bsense.adversary import AdversaryConfig
from bsense.belief import BetaEstimate, belief_gradient, dogleg_beta, posterior
from bsense.defense import AoiState, aoi_step
from bsense.mfg import (
    CostSpec,
    DriftBound,
    GridSpec,
    PopulationDensity,
    WorkCounter,
    project_major_player,
    solve_fixed_point,
)
from bsense.phy import (
    SensingParams,
    byzantine_snr,
    detection_rate,
    false_alarm_rate,
    normalized_threshold,
    optimal_level,
    sensing_time,
)

LOG_FLOOR = 1e-300
N_HYPOTHESES = 2


@dataclass(frozen=True)
class MfgSettings:
    """Grid and costs of the per-round smoothing game, in log-belief-change units."""

    n_points: int = 161
    half_width: float = 8.0
    dt: float = 0.1
    horizon: float = 1.0
    c1: float = 0.05  # inertia: pull toward no change
    c2: float = 1.0  # consensus: pull toward the population mean
    c3: float = 0.1

    def grid(self) -> GridSpec:
        return GridSpec(self.n_points, -self.half_width, self.half_width, self.dt, 0.0, self.horizon)

    def costs(self) -> CostSpec:
        return CostSpec(self.c1, self.c2, self.c3)


@dataclass(frozen=True)
class ProtocolConfig:
    n_users: int = 20
    max_rounds: int = 30
    gamma: float = 1e-4
    trim_fraction: float = 0.25
    decision_threshold: float = 0.9
    eta: float = 10.0
    screen_bound: float = 1.0  # gradient-norm bound for screening
    use_mfg: bool = True
    true_index: int = 1
    prior: tuple[float, ...] | None = None  # Phase 0 broadcast; uniform if None
    mfg: MfgSettings = MfgSettings()

    def __post_init__(self):
        if self.n_users < 1:
            raise ValueError("need at least one user")
        if self.max_rounds < 0:
            raise ValueError("max_rounds must be >= 0")
        if not 0 <= self.trim_fraction < 0.5:
            raise ValueError("trim_fraction must lie in [0, 0.5)")
        if not 0 < self.decision_threshold < 1:
            raise ValueError("decision_threshold must lie in (0, 1)")
        if self.true_index not in (0, 1):
            raise ValueError("true_index must be 0 or 1")
        if self.prior is not None:
            p = np.asarray(self.prior, dtype=float)
            if p.shape != (N_HYPOTHESES,) or np.any(p <= 0) or abs(p.sum() - 1) > 1e-12:
                raise ValueError("prior must be a positive binary distribution")

    def initial_belief(self) -> np.ndarray:
        if self.prior is None:
            return np.full(N_HYPOTHESES, 1.0 / N_HYPOTHESES)
        return np.asarray(self.prior, dtype=float)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class RoundTrace:
    round: int
    global_belief: np.ndarray
    per_user_gradients: np.ndarray  # (users, hypotheses); NaN rows for users with no report yet
    local_beliefs: np.ndarray  # honest posteriors before any falsification
    reported: np.ndarray  # what the server used for each user
    accepted: tuple[int, ...]
    converged: bool
    iterations_used: int
    aoi: tuple[int, ...]
    trim_fallback: bool


@dataclass(frozen=True)
class RunResult:
    decision: int
    correct: bool
    converged: bool
    rounds: int
    final_belief: np.ndarray
    trace: tuple[RoundTrace, ...]
    byzantine: tuple[int, ...]
    likelihoods: np.ndarray  # (users, symbols, hypotheses) models users update with
    beta_estimates: tuple[BetaEstimate, ...]
    work: WorkCounter = field(default_factory=WorkCounter)
    dogleg_iterations: int = 0
    true_index: int = 1


def decide(belief, threshold: float) -> int:
    """1 when the belief in "primary user present" reaches ``threshold``."""
    return int(belief[1] >= threshold)


def gradient_screen(gradients, bound: DriftBound, capacity: int | None = None) -> tuple[int, ...]:
    """Indices of reports whose belief change stays within ``bound.bound_value``.

    At most ``capacity`` reports are rejected, largest norm first (ties by
    index). ``capacity=None`` means no cap.
    """
    g = np.asarray(gradients, dtype=float)
    if g.ndim != 2 or g.shape[0] == 0:
        raise ValueError("need a non-empty (users, hypotheses) array")
    norms = np.linalg.norm(g, axis=1)
    over = np.nonzero(norms > bound.bound_value)[0]
    if capacity is not None and over.size > capacity:
        order = np.lexsort((over, -norms[over]))
        over = over[order[:capacity]]
    rejected = set(over.tolist())
    return tuple(i for i in range(g.shape[0]) if i not in rejected)


@dataclass(frozen=True)
class Aggregate:
    belief: np.ndarray
    fallback: bool
    kept: tuple[np.ndarray, ...]  # per hypothesis, the log values that survived trimming


def trim_count(n: int, trim_fraction: float) -> int:
    return int(math.ceil(trim_fraction * n - 1e-12))


def trimmed_aggregate(beliefs, trim_fraction: float) -> Aggregate:
    """Coordinate-wise trimmed mean of log beliefs, exponentiated and renormalized.

    If trimming would remove every value the coordinate median is used and
    ``fallback`` is set.
    """
    b = np.atleast_2d(np.asarray(beliefs, dtype=float))
    if b.shape[0] == 0:
        raise ValueError("need at least one belief")
    logs = np.log(np.maximum(b, LOG_FLOOR))
    n = logs.shape[0]
    k = trim_count(n, trim_fraction)
    fallback = 2 * k >= n
    srt = np.sort(logs, axis=0)
    if fallback:
        center = np.median(logs, axis=0)
        kept = tuple(np.array([c]) for c in center)
    else:
        mid = srt[k:n - k]
        center = mid.mean(axis=0)
        kept = tuple(mid[:, j] for j in range(b.shape[1]))
    out = np.exp(center - center.max())
    return Aggregate(out / out.sum(), bool(fallback), kept)


def _deposit(values: np.ndarray, g: GridSpec) -> np.ndarray:
    """Equal-weight point masses split linearly between neighbouring nodes (keeps the mean)."""
    x = np.clip(values, g.x_min, g.x_max)
    pos = (x - g.x_min) / g.dx
    lo = np.minimum(np.floor(pos).astype(int), g.n_points - 2)
    frac = pos - lo
    d = np.zeros(g.n_points)
    np.add.at(d, lo, (1.0 - frac) / x.size)
    np.add.at(d, lo + 1, frac / x.size)
    return d


def mfg_update(prev_global, agg: Aggregate, s: MfgSettings, counter: WorkCounter | None = None) -> tuple[np.ndarray, int]:
    """One fixed-point sweep per hypothesis; returns the new belief and sweeps used.

    The population for hypothesis ``j`` is the set of surviving log-belief
    changes ``log b_ij - log g_j``; the centroid of the evolved population is
    the applied change.
    """
    g = s.grid()
    cost = s.costs()
    lg = np.log(np.maximum(prev_global, LOG_FLOOR))
    shift = np.empty(lg.size)
    iters = 0
    for j in range(lg.size):
        init = PopulationDensity(_deposit(agg.kept[j] - lg[j], g))
        res = solve_fixed_point(g, cost, init, gamma=math.inf, max_iters=1, counter=counter)
        shift[j] = float(g.x @ res.density.density)
        iters += res.iterations
    new = lg + shift
    out = np.exp(new - new.max())
    return out / out.sum(), iters


def user_models(n_users: int, byzantine: set[int], sensing: SensingParams, beta: float) -> tuple[np.ndarray, np.ndarray, float]:
    """Per-user likelihood tables ``[s, theta]`` and true detection rates.

    All users share the threshold that is optimal for an honest SNR.
    Returns ``(likelihoods, p_detect_given_busy, p_false_alarm)``.
    """
    tau_s = sensing_time(sensing)
    level, _ = optimal_level(sensing, tau_s)
    th = float(normalized_threshold(sensing, level, tau_s))
    pfa = float(false_alarm_rate(sensing, th, tau_s))
    liks = np.empty((n_users, 2, N_HYPOTHESES))
    pd = np.empty(n_users)
    for i in range(n_users):
        snr = byzantine_snr(beta, byzantine=i in byzantine)
        sp = SensingParams(**{**sensing.__dict__, "snr_linear": snr})
        pd[i] = float(detection_rate(sp, th, tau_s))
        liks[i] = [[1.0 - pfa, 1.0 - pd[i]], [pfa, pd[i]]]
    return liks, pd, pfa


def run_obrdht(cfg: ProtocolConfig, sensing: SensingParams = SensingParams(),
               adv: AdversaryConfig | None = None, seed: int = 0) -> RunResult:
    u = cfg.n_users
    ss = np.random.SeedSequence(seed)
    roles_ss, agents_ss = ss.spawn(2)
    agent_rngs = [np.random.default_rng(s) for s in agents_ss.spawn(u)]
    n_byz = adv.n_byzantine(u) if adv is not None else 0
    byz = set(np.random.default_rng(roles_ss).permutation(u)[:n_byz].tolist()) if n_byz else set()
    beta = adv.beta_target if adv is not None else 1.0
    liks, pd, pfa = user_models(u, byz, sensing, beta)
    p_one = pd if cfg.true_index == 1 else np.full(u, pfa)

    prior = cfg.initial_belief()
    glob = prior.copy()
    bound = DriftBound(cfg.screen_bound, 1.0)
    counter = WorkCounter()
    aoi = [AoiState() for _ in range(u)]
    latest: list[tuple[int, np.ndarray] | None] = [None] * u  # (send round, belief)
    inbox: list[list[tuple[int, int, np.ndarray]]] = [[] for _ in range(u)]  # (arrival, send, belief)
    history: list[list[tuple[np.ndarray, np.ndarray]]] = [[] for _ in range(u)]
    trace: list[RoundTrace] = []
    converged = False

    for k in range(cfg.max_rounds):
        # phase 0/1: broadcast, sense, report
        local = np.empty((u, N_HYPOTHESES))
        for i in range(u):
            rng = agent_rngs[i]
            s = int(rng.random() < p_one[i])
            local[i] = posterior(glob, liks[i, s])
            if i in byz:
                msg = adv_mod.falsify_belief(local[i], adv.strategy, cfg.true_index, rng)
                delay = adv_mod.schedule_delay(adv.schedule, k, rng)
                inbox[i].append((k + delay, k, msg))
            else:
                inbox[i].append((k, k, local[i]))
        delivered = []
        for i in range(u):
            arrived = [m for m in inbox[i] if m[0] <= k]
            inbox[i] = [m for m in inbox[i] if m[0] > k]
            fresh = max(arrived, key=lambda m: m[1]) if arrived else None
            got = fresh is not None and (latest[i] is None or fresh[1] > latest[i][0])
            if got:
                latest[i] = (fresh[1], fresh[2])
            delivered.append(got)
            aoi[i] = aoi_step(aoi[i], got)

        present = [i for i in range(u) if latest[i] is not None]
        reported = np.full((u, N_HYPOTHESES), np.nan)
        grads = np.full((u, N_HYPOTHESES), np.nan)
        for i in present:
            reported[i] = latest[i][1]
            grads[i] = belief_gradient(glob, reported[i])
            history[i].append((reported[i].copy(), glob.copy()))

        # phase 2: screen, aggregate, smooth
        cap = trim_count(len(present), cfg.trim_fraction)
        keep = gradient_screen(grads[present], bound, cap) if present else ()
        accepted = tuple(present[j] for j in keep)
        prev = glob
        iters = 0
        fallback = False
        if accepted:
            agg = trimmed_aggregate(reported[list(accepted)], cfg.trim_fraction)
            fallback = agg.fallback
            if cfg.use_mfg:
                new, iters = mfg_update(prev, agg, cfg.mfg, counter)
            else:
                new = agg.belief
            glob = project_major_player(new, prior, cfg.eta)
        change = float(np.abs(glob - prev).sum())
        converged = change <= cfg.gamma
        trace.append(RoundTrace(
            round=k + 1,
            global_belief=_frozen(glob),
            per_user_gradients=_frozen(grads),
            local_beliefs=_frozen(local),
            reported=_frozen(reported),
            accepted=accepted,
            converged=converged,
            iterations_used=iters,
            aoi=tuple(a.age for a in aoi),
            trim_fallback=fallback,
        ))
        if converged:
            break

    betas = []
    dl_iters = 0
    for i in range(u):
        if len(history[i]) >= 2:
            est = dogleg_beta(history[i])
        else:
            est = BetaEstimate(degenerate=True)
        betas.append(est)
        dl_iters += est.iterations
    decision = decide(glob, cfg.decision_threshold)
    return RunResult(
        decision=decision,
        correct=decision == cfg.true_index,
        converged=converged,
        rounds=len(trace),
        final_belief=_frozen(glob),
        trace=tuple(trace),
        byzantine=tuple(sorted(byz)),
        likelihoods=_frozen(liks),
        beta_estimates=tuple(betas),
        work=counter,
        dogleg_iterations=dl_iters,
        true_index=cfg.true_index,
    )


@dataclass(frozen=True)
class ComplexityReport:
    rounds: int
    users: int
    messages: int
    mfg_sweeps: int
    mfg_work: int
    dogleg_iterations: int
    grid_points: int
    work_per_round_per_user: float
    bound_formula: float  # rounds * users * (1/rho + 1/rho^2 + N log N)
    fitted_constant: float  # measured work per round per user / (N log N)
    within_bound: bool


def complexity_report(result: RunResult | None, cfg: ProtocolConfig = ProtocolConfig(),
                      rho: float = 0.1, constant: float | None = None) -> ComplexityReport:
    """Measured operation counts next to the round x user x (1/rho + 1/rho^2 + N log N) bound.

    ``constant`` defaults to ``controls * time steps * hypotheses``, the
    per-node cost of one sweep; the check is work per round per user
    ``<= constant * N log N``.
    """
    n = cfg.mfg.n_points
    nlogn = n * math.log(n)
    if result is None or not result.trace:
        return ComplexityReport(0, cfg.n_users, 0, 0, 0, 0, n, 0.0, 0.0, 0.0, True)
    rounds = result.rounds
    u = cfg.n_users
    sweeps = sum(t.iterations_used for t in result.trace)
    work = result.work.total
    per = work / (rounds * u)
    if constant is None:
        steps = cfg.mfg.grid().n_steps
        constant = 17 * steps * N_HYPOTHESES
    return ComplexityReport(
        rounds=rounds,
        users=u,
        messages=rounds * (2 * u + 1),
        mfg_sweeps=sweeps,
        mfg_work=work,
        dogleg_iterations=result.dogleg_iterations,
        grid_points=n,
        work_per_round_per_user=per,
        bound_formula=rounds * u * (1 / rho + 1 / rho ** 2 + nlogn),
        fitted_constant=per / nlogn,
        within_bound=per <= constant * nlogn,
    )
