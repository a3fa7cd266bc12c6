"""Seeded scenario execution and the flat metrics CSV."""

from __future__ import annotations

import csv
import io
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from bsense.harness.config import ExperimentConfig
from bsense.leakage import AlphaConfig, alpha_leakage_many, jain_fairness, omega_rates
from bsense.phy import false_alarm_prob, miss_detect_prob, normalized_threshold, optimal_level, sensing_time
from bsense.protocol import RunResult, run_obrdht

SCHEMA_VERSION = 1
COLUMNS = (
    "scenario", "point", "seed", "round", "p_fa", "p_md", "p_e", "tau_s", "alpha", "beta",
    "leakage", "leakage_rate", "fairness", "omega1", "omega2", "omega3", "aoi_avg",
    "converged_iter", "decision_correct",
)


def fmt(v) -> str:
    """Stable text form: shortest round-trip repr for floats, blank for NaN/None."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    f = float(v)
    if math.isnan(f):
        return ""
    return repr(f)


def per_user_leakage(result: RunResult, cfg: AlphaConfig) -> np.ndarray:
    """Leakage of each user's next observation, shape ``(rounds, users)``."""
    if not result.trace:
        return np.empty((0, result.likelihoods.shape[0]))
    local = np.stack([t.local_beliefs for t in result.trace])  # (T, u, theta)
    lik_t = np.transpose(result.likelihoods, (0, 2, 1))  # (u, theta, s)
    joints = local[..., None] * lik_t[None]
    flat = joints.reshape(-1, *joints.shape[2:])
    return alpha_leakage_many(flat, cfg).reshape(local.shape[0], local.shape[1])


def fairness_series(leak: np.ndarray, h: str = "identity") -> np.ndarray:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return np.array([jain_fairness(row, h) for row in leak])


def run_omegas(result: RunResult, tail_window: int | None = None):
    if not result.trace:
        return None
    local = np.stack([t.local_beliefs for t in result.trace], axis=1)  # (u, T, theta)
    ti = result.true_index
    others = [j for j in range(local.shape[2]) if j != ti]
    n_t = local.shape[1]
    tw = None if tail_window is None else min(tail_window, n_t)
    return omega_rates(local[:, :, ti], cross=local[:, :, others], tail_window=tw)


def run_metrics(cfg: ExperimentConfig, point_index: int, point: dict, seed: int) -> list[dict]:
    """Rows for one (sweep point, seed) run, one per protocol round."""
    sensing = cfg.sensing_params(point)
    pcfg = cfg.protocol_config(point)
    adv = cfg.adversary_config(point)
    beta = adv.beta_target if adv is not None else 1.0
    alpha_cfg = cfg.alpha_configs()[0]
    result = run_obrdht(pcfg, sensing, adv, seed)

    tau_s = sensing_time(sensing)
    level, _ = optimal_level(sensing, tau_s)
    th = float(normalized_threshold(sensing, level, tau_s))
    p_fa = float(false_alarm_prob(sensing, th, tau_s))
    p_md = float(miss_detect_prob(sensing, th, tau_s))
    common = dict(scenario=cfg.name, point=point_index, seed=seed, p_fa=p_fa, p_md=p_md, p_e=p_fa + p_md,
                  tau_s=tau_s, alpha=alpha_cfg.alpha, beta=beta,
                  converged_iter=result.rounds if result.converged else -1,
                  decision_correct=int(result.correct))
    if not result.trace:
        return [{**common, "round": 0}]

    leak = per_user_leakage(result, alpha_cfg)
    mean_leak = leak.mean(axis=1)
    fair = fairness_series(leak, cfg.fairness_h)
    om = run_omegas(result, cfg.tail_window)
    rows = []
    for k, t in enumerate(result.trace):
        rows.append({
            **common,
            "round": t.round,
            "leakage": mean_leak[k],
            "leakage_rate": mean_leak[k] - mean_leak[k - 1] if k else math.nan,
            "fairness": fair[k],
            "omega1": om.omega1,
            "omega2": om.omega2,
            "omega3": om.omega3,
            "aoi_avg": float(np.mean(t.aoi)),
        })
    return rows


def _job(args):
    return run_metrics(*args)


def run_scenario(cfg: ExperimentConfig, jobs: int = 1) -> list[dict]:
    """All (sweep point x seed) runs, sweep-major and seed-minor, regardless of ``jobs``."""
    tasks = [(cfg, pi, point, seed) for pi, point in enumerate(cfg.sweep_points()) for seed in cfg.seeds]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            groups = list(ex.map(_job, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        groups = [_job(t) for t in tasks]
    return [row for g in groups for row in g]


def rows_to_csv(rows, columns=COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(r.get(c)) if not isinstance(r.get(c), str) else r.get(c) for c in columns])
    return buf.getvalue()


def write_csv(rows, path, columns=COLUMNS) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(rows_to_csv(rows, columns), encoding="utf-8")
    return path
