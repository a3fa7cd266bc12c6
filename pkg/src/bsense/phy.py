"""Closed-form energy-detection physical layer.

Everything here is a pure function of its arguments. Thresholds are absolute
energy values unless a function name says ``normalized``; a normalized
threshold ``c`` maps to ``c * 2 * tau_s * b_a * sigma_n2``.

Probabilities in the deep tail underflow double precision quickly (the
default bandwidth gives ``tau_s * b_a = 1e4`` samples per second of
sensing), so every probability has a ``log_`` twin computed through
``scipy.special.log_ndtr``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from bsense.errors import DomainError, InfeasibleFrameError

BETA_CLAMP = (0.1, 5.0)
HONEST_SNR = 10.0


def _check_finite(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("Q-function argument must be finite")
    return arr


def q_function(x):
    """Gaussian upper-tail probability ``Q(x) = erfc(x / sqrt(2)) / 2``.

    Accepts scalars or arrays; returns the same shape.
    """
    arr = _check_finite(x)
    out = 0.5 * special.erfc(arr / math.sqrt(2.0))
    return float(out) if out.ndim == 0 else out


def log_q_function(x):
    """Natural log of ``Q(x)``, accurate far into the upper tail."""
    arr = _check_finite(x)
    out = special.log_ndtr(-arr)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SensingParams:
    """Physical-layer constants. Defaults follow the simulation table.

    ``e_t``, ``tau_tot`` and ``sigma_n2`` are not in the table; their
    defaults keep ``tau_t < tau_tot`` for ranges between 50 m and 400 m.
    """

    kappa1: float = 3.0  # PU birth rate, 1/s
    kappa2: float = 3.0  # PU death rate, 1/s
    kappa3: float = 3.0  # path-loss exponent
    kappa4: float = 20.0  # reference SU SNR, used as tabulated
    n_rx: float = 12.589
    n0: float = 417e-23  # W/Hz
    b_a: float = 10e3  # Hz
    kappa5: float = 0.125  # wavelength, m
    kappa6: float = 0.2  # amplifier efficiency
    g_a: float = 0.01
    p_elec: float = 3.63e-3  # W
    e_t: float = 1e-3  # J
    r_s: float = 100.0  # m
    tau_tot: float = 1.0  # s
    sigma_n2: float = 1.0  # W
    snr_linear: float = HONEST_SNR

    def __post_init__(self):
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise DomainError(f"SensingParams.{f.name} must be finite and > 0, got {v!r}")

    @property
    def idle_weight(self) -> float:
        """Prior probability that the primary user is absent."""
        return self.kappa2 / (self.kappa1 + self.kappa2)

    @property
    def busy_weight(self) -> float:
        """Prior probability that the primary user is present."""
        return self.kappa1 / (self.kappa1 + self.kappa2)

    @property
    def sigma_p2(self) -> float:
        return self.snr_linear * self.sigma_n2


@dataclass(frozen=True)
class DetectionOutcome:
    p_fa: float
    p_md: float
    p_e: float
    tau_s: float
    tau_t: float
    threshold: float


def _path_loss_power(p: SensingParams) -> float:
    return (
        p.kappa4 * p.n0 * p.n_rx * p.b_a
        * (4.0 * math.pi / p.kappa5) ** p.kappa3
        * 10.0 ** p.kappa3
        / (p.g_a * p.kappa6)
        * p.r_s ** p.kappa3
    )


def transmission_time(p: SensingParams) -> float:
    """Time needed to spend the transmission energy budget ``e_t``.

    The radiated power grows like ``r_s ** kappa3``, so for a fixed energy
    budget the transmission time shrinks as the range grows, tending to
    ``e_t / p_elec`` as the range goes to zero.
    """
    return p.e_t / (_path_loss_power(p) + p.p_elec)


def sensing_time(p: SensingParams) -> float:
    tau_t = transmission_time(p)
    if tau_t >= p.tau_tot:
        raise InfeasibleFrameError(
            f"transmission time {tau_t:.6g} s leaves no sensing time in a {p.tau_tot} s frame"
        )
    return p.tau_tot - tau_t


def normalized_threshold(p: SensingParams, c, tau_s: float):
    """Absolute energy threshold for normalized level ``c``."""
    return np.asarray(c, dtype=float) * 2.0 * tau_s * p.b_a * p.sigma_n2


def _check_tau(tau_s: float) -> None:
    if not (math.isfinite(tau_s) and tau_s > 0):
        raise DomainError(f"sensing time must be > 0, got {tau_s!r}")


def _fa_arg(p, threshold, tau_s):
    _check_tau(tau_s)
    th = np.asarray(threshold, dtype=float)
    return (th - 2.0 * tau_s * p.b_a * p.sigma_n2) / math.sqrt(4.0 * tau_s * p.b_a * p.sigma_n2 ** 2)


def _md_arg(p, threshold, tau_s):
    _check_tau(tau_s)
    th = np.asarray(threshold, dtype=float)
    total = p.sigma_p2 + p.sigma_n2
    return (th - 2.0 * tau_s * p.b_a * total) / math.sqrt(4.0 * tau_s * p.b_a * total ** 2)


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def false_alarm_rate(p: SensingParams, threshold, tau_s: float):
    """P(energy above threshold | channel idle), without the prior weight."""
    return _scalar(0.5 * special.erfc(_fa_arg(p, threshold, tau_s) / math.sqrt(2.0)))


def detection_rate(p: SensingParams, threshold, tau_s: float):
    """P(energy above threshold | primary user present)."""
    return _scalar(0.5 * special.erfc(_md_arg(p, threshold, tau_s) / math.sqrt(2.0)))


def false_alarm_prob(p: SensingParams, threshold, tau_s: float):
    return _scalar(p.idle_weight * np.asarray(false_alarm_rate(p, threshold, tau_s)))


def miss_detect_prob(p: SensingParams, threshold, tau_s: float):
    # 1 - Q(z) is evaluated as Q(-z) so small miss rates keep their precision
    z = _md_arg(p, threshold, tau_s)
    return _scalar(p.busy_weight * 0.5 * special.erfc(-z / math.sqrt(2.0)))


def log_false_alarm_prob(p: SensingParams, threshold, tau_s: float):
    return _scalar(math.log(p.idle_weight) + special.log_ndtr(-_fa_arg(p, threshold, tau_s)))


def log_miss_detect_prob(p: SensingParams, threshold, tau_s: float):
    return _scalar(math.log(p.busy_weight) + special.log_ndtr(_md_arg(p, threshold, tau_s)))


def log_total_error(p: SensingParams, threshold, tau_s: float):
    return _scalar(np.logaddexp(log_false_alarm_prob(p, threshold, tau_s),
                                log_miss_detect_prob(p, threshold, tau_s)))


def total_error(p: SensingParams, threshold: float, tau_s: float) -> DetectionOutcome:
    p_fa = float(false_alarm_prob(p, threshold, tau_s))
    p_md = float(miss_detect_prob(p, threshold, tau_s))
    return DetectionOutcome(
        p_fa=p_fa,
        p_md=p_md,
        p_e=p_fa + p_md,
        tau_s=tau_s,
        tau_t=p.tau_tot - tau_s,
        threshold=float(threshold),
    )


def error_sweep(p: SensingParams, tau_s: float, levels) -> dict[str, np.ndarray]:
    """Evaluate the error terms over normalized threshold ``levels``.

    Returns arrays keyed ``level, threshold, p_fa, p_md, p_e`` and their
    ``log_`` counterparts.
    """
    levels = np.asarray(levels, dtype=float)
    th = normalized_threshold(p, levels, tau_s)
    out = {
        "level": levels,
        "threshold": th,
        "p_fa": np.asarray(false_alarm_prob(p, th, tau_s)),
        "p_md": np.asarray(miss_detect_prob(p, th, tau_s)),
        "log_p_fa": np.asarray(log_false_alarm_prob(p, th, tau_s)),
        "log_p_md": np.asarray(log_miss_detect_prob(p, th, tau_s)),
    }
    out["p_e"] = out["p_fa"] + out["p_md"]
    out["log_p_e"] = np.logaddexp(out["log_p_fa"], out["log_p_md"])
    return out


def optimal_level(p: SensingParams, tau_s: float, bounds: tuple[float, float] | None = None) -> tuple[float, float]:
    """Normalized threshold minimizing the total error at ``tau_s``.

    Returns ``(level, log_p_e)``. A coarse grid brackets the minimum and a
    bounded scalar search refines it, all in the log domain.
    """
    lo, hi = bounds if bounds is not None else (0.05, 2.0 * (1.0 + p.snr_linear))
    grid = np.linspace(lo, hi, 401)
    vals = log_total_error(p, normalized_threshold(p, grid, tau_s), tau_s)
    i = int(np.argmin(vals))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = optimize.minimize_scalar(
        lambda c: float(log_total_error(p, normalized_threshold(p, c, tau_s), tau_s)),
        bounds=(a, b),
        method="bounded",
        options={"xatol": 1e-10},
    )
    if res.fun <= vals[i]:
        return float(res.x), float(res.fun)
    return float(grid[i]), float(vals[i])


def byzantine_snr(beta: float, byzantine: bool = True, clamp: tuple[float, float] = BETA_CLAMP) -> float:
    """Linear SNR of a user: ``10 * beta`` for Byzantines, 10 otherwise."""
    if not byzantine:
        return HONEST_SNR
    lo, hi = clamp
    return HONEST_SNR * min(max(float(beta), lo), hi)
