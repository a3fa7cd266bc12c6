"""Figure families: CSV tables, SVG trend plots and trend checks."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from bsense.defense import SyncScenario, compare_defenses
from bsense.errors import ConfigError
from bsense.harness.config import ExperimentConfig
from bsense.harness.runner import fairness_series, per_user_leakage, rows_to_csv, run_omegas
from bsense.harness.svg import line_chart
from bsense.phy import (
    log_false_alarm_prob,
    log_miss_detect_prob,
    normalized_threshold,
    optimal_level,
    transmission_time,
)
from bsense.protocol import run_obrdht

LONG_COLUMNS = ("series", "alpha", "beta", "x", "y", "z")
TOTAL_ERROR_COLUMNS = ("series", "r_s", "beta", "tau_s", "feasible", "level", "p_fa", "p_md", "p_e",
                       "log_p_fa", "log_p_md", "log_p_e")
CHECK_COLUMNS = ("check", "passed", "detail")
FAMILIES = ("total_error", "total_error_range", "convergence_cdf", "alpha_family", "sync_compare")
MIN_CDF_SEEDS = 30


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class FigureOutput:
    family: str
    columns: tuple[str, ...]
    rows: list[dict]
    svg: str
    checks: list[Check] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)


def empirical_cdf(values, support=None) -> tuple[np.ndarray, np.ndarray]:
    v = np.sort(np.asarray(values, dtype=float))
    xs = np.unique(v) if support is None else np.asarray(support, dtype=float)
    return xs, np.searchsorted(v, xs, side="right") / v.size


def cdf_is_valid(ys) -> bool:
    ys = np.asarray(ys, dtype=float)
    return bool(ys.size and np.all(np.diff(ys) >= 0) and abs(ys[-1] - 1.0) < 1e-12 and ys[0] >= 0)


# -- total error vs sensing time --------------------------------------------

def fig_total_error(cfg: ExperimentConfig, tau_grid=None, ranges=(100.0, 200.0, 300.0),
                    betas=(1.0, 2.0), tau_tot: float = 1.0) -> FigureOutput:
    """P_e against sensing time per range, at the per-point optimal threshold.

    A point is feasible when the sensing time fits next to the transmission
    time that range needs inside the frame.
    """
    base = dataclasses.replace(cfg.sensing_params(), tau_tot=tau_tot)
    taus = np.geomspace(1e-5, tau_tot, 41) if tau_grid is None else np.atleast_1d(np.asarray(tau_grid, float))
    rows: list[dict] = []
    curves: dict[float, dict[float, dict]] = {}
    for r in ranges:
        p = dataclasses.replace(base, r_s=float(r))
        budget = tau_tot - transmission_time(p)
        curves[r] = {}
        for ts in taus:
            row = dict(series=f"r_s={r:g}", r_s=r, beta=1.0, tau_s=ts, feasible=int(ts <= budget))
            if ts <= budget:
                level, _ = optimal_level(p, ts)
                th = normalized_threshold(p, level, ts)
                lfa = float(log_false_alarm_prob(p, th, ts))
                lmd = float(log_miss_detect_prob(p, th, ts))
                row.update(level=level, log_p_fa=lfa, log_p_md=lmd, log_p_e=float(np.logaddexp(lfa, lmd)),
                           p_fa=math.exp(lfa), p_md=math.exp(lmd), p_e=math.exp(lfa) + math.exp(lmd))
                curves[r][float(ts)] = row
            rows.append(row)

    # Byzantine sensing at 10*beta SNR against the honest-optimal threshold
    p100 = dataclasses.replace(base, r_s=float(ranges[0]))
    budget = tau_tot - transmission_time(p100)
    md_by_beta: dict[float, list[float]] = {}
    for b in betas:
        pb = dataclasses.replace(p100, snr_linear=10.0 * b)
        md_by_beta[b] = []
        for ts in taus:
            if ts > budget:
                continue
            level, _ = optimal_level(p100, ts)
            th = normalized_threshold(p100, level, ts)
            lfa = float(log_false_alarm_prob(pb, th, ts))
            lmd = float(log_miss_detect_prob(pb, th, ts))
            md_by_beta[b].append(lmd)
            rows.append(dict(series=f"beta={b:g}", r_s=ranges[0], beta=b, tau_s=ts, feasible=1, level=level,
                             log_p_fa=lfa, log_p_md=lmd, log_p_e=float(np.logaddexp(lfa, lmd)),
                             p_fa=math.exp(lfa), p_md=math.exp(lmd), p_e=math.exp(lfa) + math.exp(lmd)))

    checks = []
    lo_r, hi_r = min(ranges), max(ranges)
    shared = sorted(set(curves[lo_r]) & set(curves[hi_r]))
    bad = [t for t in shared if curves[hi_r][t]["log_p_e"] < curves[lo_r][t]["log_p_e"]]
    checks.append(Check(f"P_e(r_s={hi_r:g}) >= P_e(r_s={lo_r:g}) at every feasible point", not bad and bool(shared),
                        f"{len(shared)} shared feasible points, {len(bad)} violations"))
    if len(betas) >= 2:
        b_lo, b_hi = min(betas), max(betas)
        viol = int(np.sum(np.asarray(md_by_beta[b_hi]) > np.asarray(md_by_beta[b_lo])))
        checks.append(Check(f"P_md(beta={b_hi:g}) <= P_md(beta={b_lo:g}) at equal threshold", viol == 0,
                            f"{len(md_by_beta[b_lo])} points, {viol} violations"))

    series = {f"r_s={r:g}": (list(curves[r]), [v["log_p_e"] for v in curves[r].values()]) for r in ranges}
    svg = line_chart(series, "log total error vs sensing time", "tau_s (s)", "log P_e")
    return FigureOutput("total_error", TOTAL_ERROR_COLUMNS, rows, svg, checks)


def fig_total_error_range(cfg: ExperimentConfig, ranges=None, tau_tot: float = 1.0) -> FigureOutput:
    """P_e against range when the sensing time is whatever the frame leaves after transmission.

    Companion to ``fig_total_error`` (which sweeps the sensing time directly).
    The direction of the trend is reported, not asserted: with the
    transmission-time model here, a longer range shortens transmission and
    so lengthens sensing.
    """
    base = dataclasses.replace(cfg.sensing_params(), tau_tot=tau_tot)
    ranges = np.linspace(50.0, 400.0, 36) if ranges is None else np.atleast_1d(np.asarray(ranges, float))
    rows, xs, ys = [], [], []
    for r in ranges:
        p = dataclasses.replace(base, r_s=float(r))
        ts = tau_tot - transmission_time(p)
        row = dict(series="via_range", r_s=float(r), beta=1.0, tau_s=ts, feasible=int(ts > 0))
        if ts > 0:
            level, _ = optimal_level(p, ts)
            th = normalized_threshold(p, level, ts)
            lfa = float(log_false_alarm_prob(p, th, ts))
            lmd = float(log_miss_detect_prob(p, th, ts))
            lpe = float(np.logaddexp(lfa, lmd))
            row.update(level=level, log_p_fa=lfa, log_p_md=lmd, log_p_e=lpe,
                       p_fa=math.exp(lfa), p_md=math.exp(lmd), p_e=math.exp(lfa) + math.exp(lmd))
            xs.append(float(r))
            ys.append(lpe)
        rows.append(row)
    steps = np.diff(ys)
    detail = (f"{len(xs)} feasible ranges; log P_e rises on {int(np.sum(steps > 0))}, "
              f"falls on {int(np.sum(steps < 0))}, flat on {int(np.sum(steps == 0))} steps")
    checks = [Check("every range leaves a feasible sensing time", len(xs) == len(ranges), detail)]
    svg = line_chart({"via range": (xs, ys)}, "log total error vs range", "r_s (m)", "log P_e")
    return FigureOutput("total_error_range", TOTAL_ERROR_COLUMNS, rows, svg, checks)


# -- convergence CDF over beta ----------------------------------------------

def fig_convergence_cdf(cfg: ExperimentConfig, betas=None) -> FigureOutput:
    if len(cfg.seeds) < MIN_CDF_SEEDS:
        raise ConfigError({"scenario.seeds": f"convergence CDF needs at least {MIN_CDF_SEEDS} seeds"})
    betas = tuple(cfg.betas if betas is None else betas)
    pcfg = cfg.protocol_config()
    sensing = cfg.sensing_params()
    support = np.arange(0, pcfg.max_rounds + 1)
    rows, series, checks = [], {}, []
    for b in betas:
        adv = cfg.adversary_config(beta=b)
        iters = [run_obrdht(pcfg, sensing, adv, s).rounds for s in cfg.seeds]
        xs, ys = empirical_cdf(iters, support)
        rows += [dict(series="cdf", alpha=math.nan, beta=b, x=x, y=y) for x, y in zip(xs, ys)]
        series[f"beta={b:g}"] = (xs, ys)
        checks.append(Check(f"CDF valid for beta={b:g}", cdf_is_valid(ys),
                            f"median rounds {np.median(iters):g} over {len(iters)} seeds"))
    svg = line_chart(series, "rounds to convergence", "rounds", "CDF", step=True)
    return FigureOutput("convergence_cdf", LONG_COLUMNS, rows, svg, checks)


# -- alpha family -----------------------------------------------------------

def _pad(seqs: list[np.ndarray]) -> np.ndarray:
    """Stack per-seed round series, carrying each run's last value forward."""
    n = max(len(s) for s in seqs)
    return np.array([np.concatenate([s, np.full(n - len(s), s[-1])]) for s in seqs])


def fig_alpha_family(cfg: ExperimentConfig) -> FigureOutput:
    """Leakage, leakage rate, fairness and normalized AoI per round for every (alpha, beta)."""
    pcfg = cfg.protocol_config()
    sensing = cfg.sensing_params()
    alphas = cfg.alpha_configs()
    rows, checks = [], []
    lines: dict[str, tuple] = {}
    for b in cfg.betas:
        adv = cfg.adversary_config(beta=b)
        runs = [r for r in (run_obrdht(pcfg, sensing, adv, s) for s in cfg.seeds) if r.trace]
        if not runs:
            continue
        aoi_means = [np.mean([t.aoi for t in r.trace], axis=1) for r in runs]
        aoi = _pad([m / m.max() for m in aoi_means])
        for r in runs:
            om = run_omegas(r, cfg.tail_window)
            rows.append(dict(series="omega1", alpha=math.nan, beta=b, x=r.rounds * sensing.tau_tot, y=1.0 - b,
                             z=om.omega1))
        mean_leak, mean_fair = {}, {}
        for ac in alphas:
            leak = [per_user_leakage(r, ac) for r in runs]
            lk = _pad([l.mean(axis=1) for l in leak])
            fr = _pad([fairness_series(l, cfg.fairness_h) for l in leak])
            rate = np.diff(lk, axis=1)
            mean_leak[ac.alpha] = float(np.mean([l.mean() for l in leak]))
            mean_fair[ac.alpha] = float(np.mean([fairness_series(l, cfg.fairness_h).mean() for l in leak]))
            for k in range(lk.shape[1]):
                rows.append(dict(series="leakage", alpha=ac.alpha, beta=b, x=k + 1, y=lk[:, k].mean()))
                rows.append(dict(series="fairness", alpha=ac.alpha, beta=b, x=k + 1, y=fr[:, k].mean()))
                if k:
                    rows.append(dict(series="leakage_rate", alpha=ac.alpha, beta=b, x=k + 1, y=rate[:, k - 1].mean()))
                rows.append(dict(series="aoi_norm", alpha=ac.alpha, beta=b, x=k + 1, y=aoi[:, k].mean()))
            lines[f"alpha={ac.alpha:g} beta={b:g}"] = (np.arange(1, lk.shape[1] + 1), lk.mean(axis=0))
        order = sorted(mean_leak)
        if len(order) >= 2:
            for a0, a1 in zip(order, order[1:]):
                checks.append(Check(f"mean leakage non-decreasing alpha {a0:g}->{a1:g} (beta={b:g})",
                                    mean_leak[a1] >= mean_leak[a0],
                                    f"{mean_leak[a0]:.6g} -> {mean_leak[a1]:.6g}"))
                checks.append(Check(f"mean fairness non-increasing alpha {a0:g}->{a1:g} (beta={b:g})",
                                    mean_fair[a1] <= mean_fair[a0],
                                    f"{mean_fair[a0]:.6g} -> {mean_fair[a1]:.6g}"))
    svg = line_chart(lines, "mean leakage per round", "round", "leakage (nats)")
    return FigureOutput("alpha_family", LONG_COLUMNS, rows, svg, checks)


# -- greedy vs SPSA -----------------------------------------------------------

def fig_sync_compare(cfg: ExperimentConfig, use_spsa: bool = True, scenario: SyncScenario | None = None) -> FigureOutput:
    """Greedy/SPSA leakage ratio per slot and CDFs of the synchronizability objective."""
    seeds = cfg.sync_seeds or cfg.seeds
    base = scenario or SyncScenario()
    rows, checks, lines = [], [], {}
    for a in cfg.alphas:
        for b in cfg.betas:
            comps = [compare_defenses(dataclasses.replace(base, alpha=a, beta=b, seed=s), use_spsa=use_spsa)
                     for s in seeds]
            ratio = np.mean([c.leakage_ratio for c in comps], axis=0)
            for k, v in enumerate(ratio):
                rows.append(dict(series="leakage_ratio", alpha=a, beta=b, x=k + 1, y=v))
            lines[f"alpha={a:g} beta={b:g}"] = (np.arange(1, ratio.size + 1), ratio)
            g = np.array([c.greedy_sync for c in comps])
            sp = np.array([c.spsa_sync for c in comps])
            for name, vals in (("sync_cdf_greedy", g), ("sync_cdf_spsa", sp)):
                xs, ys = empirical_cdf(vals)
                rows += [dict(series=name, alpha=a, beta=b, x=x, y=y) for x, y in zip(xs, ys)]
                checks.append(Check(f"{name} valid (alpha={a:g}, beta={b:g})", cdf_is_valid(ys)))
            diff = sp - g
            half = 1.96 * diff.std(ddof=1) / math.sqrt(diff.size) if diff.size > 1 else math.inf
            checks.append(Check(
                f"SPSA mean synchronizability >= greedy (alpha={a:g}, beta={b:g})",
                sp.mean() >= g.mean(),
                f"spsa {sp.mean():.6g}, greedy {g.mean():.6g}, paired diff {diff.mean():.3g} +/- {half:.3g} "
                f"(95% CI, {diff.size} seeds)",
            ))
    svg = line_chart(lines, "leakage ratio greedy / SPSA", "slot", "ratio")
    return FigureOutput("sync_compare", LONG_COLUMNS, rows, svg, checks)


FIGURES = {
    "total_error": fig_total_error,
    "total_error_range": fig_total_error_range,
    "convergence_cdf": fig_convergence_cdf,
    "alpha_family": fig_alpha_family,
    "sync_compare": fig_sync_compare,
}


def write_figure(out: FigureOutput, out_dir, scenario: str) -> dict[str, Path]:
    d = Path(out_dir) / scenario
    d.mkdir(parents=True, exist_ok=True)
    paths = {
        "csv": d / f"{out.family}.csv",
        "svg": d / f"{out.family}.svg",
        "checks": d / f"{out.family}_checks.csv",
    }
    paths["csv"].write_text(rows_to_csv(out.rows, out.columns), encoding="utf-8")
    paths["svg"].write_text(out.svg, encoding="utf-8")
    paths["checks"].write_text(
        rows_to_csv([dict(check=c.name, passed=int(c.passed), detail=c.detail) for c in out.checks], CHECK_COLUMNS),
        encoding="utf-8",
    )
    return paths
