"""Explicit upwind HJB / FPK solver on a 1-D grid and its fixed-point loop.

State dynamics are ``dx = a dt`` with the control ``a`` picked from a finite
grid. The value function is swept backward in time, the population density
forward, and the two are alternated until the density path stops moving.

Densities are stored as per-node probability masses (they sum to 1, not
integrate to 1), which makes mass conservation an exact telescoping sum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from bsense.errors import StepSizeError

N_CONTROLS = 17
CFL_SLACK = 1e-12


def _quadratic(x):
    return x * x


def _spread_from_mean(x, density):
    mean = float(np.dot(x, density))
    return (x - mean) ** 2


@dataclass(frozen=True)
class GridSpec:
    n_points: int = 65
    x_min: float = -1.0
    x_max: float = 1.0
    dt: float = 0.01
    t_start: float = 0.0
    t_end: float = 1.0
    periodic: bool = False

    def __post_init__(self):
        if self.n_points < 8:
            raise ValueError("need at least 8 grid points")
        if not self.x_min < self.x_max:
            raise ValueError("x_min must be below x_max")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_start < self.t_end:
            raise ValueError("t_start must be before t_end")

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_points)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @property
    def n_steps(self) -> int:
        return max(1, int(round((self.t_end - self.t_start) / self.dt)))

    def controls(self, n: int = N_CONTROLS) -> np.ndarray:
        """Evenly spaced controls spanning the CFL-safe speed range."""
        vmax = self.dx / self.dt
        return np.linspace(-vmax, vmax, n)


@dataclass(frozen=True)
class CostSpec:
    c1: float = 1.0
    c2: float = 0.0
    c3: float = 0.0
    zeta_local: Callable[[np.ndarray], np.ndarray] = _quadratic
    zeta_global: Callable[[np.ndarray, np.ndarray], np.ndarray] = _spread_from_mean
    noise_scale: float = 0.0

    def __post_init__(self):
        for name in ("c1", "c2", "c3"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and non-negative")
        if not (math.isfinite(self.noise_scale) and self.noise_scale >= 0):
            raise ValueError("noise_scale must be >= 0")

    def running(self, x: np.ndarray, density: np.ndarray) -> np.ndarray:
        out = np.full_like(x, self.c3, dtype=float)
        if self.c1:
            out = out + self.c1 * np.asarray(self.zeta_local(x), dtype=float)
        if self.c2:
            out = out + self.c2 * np.asarray(self.zeta_global(x, density), dtype=float)
        return out


@dataclass(frozen=True)
class ValueFunction:
    values: np.ndarray
    control: np.ndarray | None = None  # argmin control per node from the sweep that produced it


@dataclass(frozen=True)
class PopulationDensity:
    density: np.ndarray

    @property
    def mass(self) -> float:
        return float(self.density.sum())

    @classmethod
    def point_mass(cls, g: GridSpec, x0: float) -> "PopulationDensity":
        d = np.zeros(g.n_points)
        d[int(np.argmin(np.abs(g.x - x0)))] = 1.0
        return cls(d)

    @classmethod
    def uniform(cls, g: GridSpec) -> "PopulationDensity":
        return cls(np.full(g.n_points, 1.0 / g.n_points))


@dataclass(frozen=True)
class DriftBound:
    bound_value: float = 1.0
    bound_prob: float = 1.0

    def __post_init__(self):
        if not 0 <= self.bound_prob <= 1:
            raise ValueError("bound_prob must lie in [0, 1]")


@dataclass
class WorkCounter:
    """Counts node-control evaluations, the unit of solver work."""

    hjb: int = 0
    fpk: int = 0

    @property
    def total(self) -> int:
        return self.hjb + self.fpk


def check_cfl(controls, g: GridSpec) -> None:
    courant = float(np.max(np.abs(controls))) * g.dt / g.dx if np.size(controls) else 0.0
    if courant > 1.0 + CFL_SLACK:
        raise StepSizeError(f"CFL number {courant:.4g} exceeds 1 (dx={g.dx:.4g}, dt={g.dt:.4g})")


def _one_sided_diffs(v: np.ndarray, g: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    if g.periodic:
        fwd = (np.roll(v, -1) - v) / g.dx
        bwd = (v - np.roll(v, 1)) / g.dx
    else:
        # reflecting walls: no motion across the boundary
        fwd = np.zeros_like(v)
        bwd = np.zeros_like(v)
        fwd[:-1] = np.diff(v) / g.dx
        bwd[1:] = np.diff(v) / g.dx
    return fwd, bwd


def hjb_backward_step(v: ValueFunction, c: CostSpec, m: PopulationDensity, g: GridSpec,
                      controls=None, rng: np.random.Generator | None = None,
                      counter: WorkCounter | None = None) -> ValueFunction:
    """One explicit backward-Euler step of the value function.

    ``v(t - dt) = v(t) + dt * min_a [running(x) + a * D_a v]`` with the
    one-sided difference ``D_a`` taken upwind of the motion. Ties between
    controls go to the smallest ``|a|``.
    """
    a = g.controls() if controls is None else np.asarray(controls, dtype=float)
    check_cfl(a, g)
    vals = np.asarray(v.values, dtype=float)
    if vals.shape != (g.n_points,) or np.asarray(m.density).shape != (g.n_points,):
        raise ValueError("value, density and grid sizes differ")
    fwd, bwd = _one_sided_diffs(vals, g)
    adv = np.where(a[:, None] > 0, a[:, None] * fwd[None, :], a[:, None] * bwd[None, :])
    # order controls by |a| so argmin's first-hit rule prefers small controls
    order = np.argsort(np.abs(a), kind="stable")
    best = order[np.argmin(adv[order], axis=0)]
    h = adv[best, np.arange(g.n_points)]
    new = vals + g.dt * (c.running(g.x, m.density) + h)
    if c.noise_scale > 0:
        if rng is None:
            raise ValueError("noise_scale > 0 needs an rng")
        new = new + c.noise_scale * math.sqrt(g.dt) * rng.standard_normal(g.n_points)
    if counter is not None:
        counter.hjb += a.size * g.n_points
    if not np.all(np.isfinite(new)):
        raise FloatingPointError("value function became non-finite")
    return ValueFunction(new, a[best])


def fpk_forward_step(m: PopulationDensity, control_field, g: GridSpec,
                     noise_scale: float = 0.0, rng: np.random.Generator | None = None,
                     counter: WorkCounter | None = None) -> PopulationDensity:
    """Conservative upwind transport of the density with velocity ``control_field``."""
    vel = np.broadcast_to(np.asarray(control_field, dtype=float), (g.n_points,))
    check_cfl(vel, g)
    d = np.asarray(m.density, dtype=float)
    lam = g.dt / g.dx
    pos = np.maximum(vel, 0.0) * d
    neg = np.minimum(vel, 0.0) * d
    if g.periodic:
        flux = pos + np.roll(neg, -1)  # flux through the right face of each node
        new = d - lam * (flux - np.roll(flux, 1))
    else:
        flux = np.zeros(g.n_points + 1)  # faces, walls at both ends carry zero flux
        flux[1:-1] = pos[:-1] + neg[1:]
        new = d - lam * np.diff(flux)
    if noise_scale > 0:
        if rng is None:
            raise ValueError("noise_scale > 0 needs an rng")
        new = new * (1.0 + noise_scale * math.sqrt(g.dt) * rng.standard_normal(g.n_points))
    new = np.clip(new, 0.0, None)
    new = new / new.sum()
    if counter is not None:
        counter.fpk += g.n_points
    return PopulationDensity(new)


@dataclass(frozen=True)
class FixedPointResult:
    value: ValueFunction
    density: PopulationDensity
    iterations: int
    converged: bool
    residuals: tuple[float, ...]
    density_path: np.ndarray = field(repr=False)
    monotone_tail: bool = True


def solve_fixed_point(g: GridSpec, c: CostSpec, init_m: PopulationDensity, gamma: float = 1e-6,
                      max_iters: int = 50, controls=None, terminal=None, seed: int | None = None,
                      counter: WorkCounter | None = None) -> FixedPointResult:
    """Alternate full HJB and FPK sweeps until the density path settles.

    The residual of an iteration is ``max_t sum_x |M_new(x, t) - M_old(x, t)|``;
    the loop stops once it is ``<= gamma``. Hitting ``max_iters`` returns the
    last iterate with ``converged=False``.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    a = g.controls() if controls is None else np.asarray(controls, dtype=float)
    check_cfl(a, g)
    rng = np.random.default_rng(seed)
    n_t = g.n_steps
    init = np.asarray(init_m.density, dtype=float)
    path = np.tile(init, (n_t + 1, 1))
    term = np.zeros(g.n_points) if terminal is None else np.asarray(terminal, dtype=float)

    residuals: list[float] = []
    converged = False
    v = ValueFunction(term)
    it = 0
    for it in range(1, max_iters + 1):
        v = ValueFunction(term)
        fields = np.empty((n_t, g.n_points))
        for k in range(n_t - 1, -1, -1):
            v = hjb_backward_step(v, c, PopulationDensity(path[k]), g, a, rng, counter)
            fields[k] = v.control
        new_path = np.empty_like(path)
        new_path[0] = init
        m = PopulationDensity(init)
        for k in range(n_t):
            m = fpk_forward_step(m, fields[k], g, c.noise_scale, rng, counter)
            new_path[k + 1] = m.density
        res = float(np.max(np.abs(new_path - path).sum(axis=1)))
        residuals.append(res)
        path = new_path
        if res <= gamma:
            converged = True
            break

    tail = np.asarray(residuals[-10:])
    monotone = bool(np.all(np.diff(tail) <= 1e-15)) if converged else True
    return FixedPointResult(
        value=v,
        density=PopulationDensity(path[-1]),
        iterations=it,
        converged=converged,
        residuals=tuple(residuals),
        density_path=path,
        monotone_tail=monotone,
    )


def concentration_fraction(samples, bound_value: float, sign: int = 1) -> float:
    """Share of ``(state, drift)`` pairs with ``|state + sign * drift| <= bound_value``."""
    arr = np.asarray(samples, dtype=float).reshape(-1, 2)
    if arr.shape[0] == 0:
        raise ValueError("no samples")
    return float(np.mean(np.abs(arr[:, 0] + sign * arr[:, 1]) <= bound_value))


def drift_concentration_check(samples, b: DriftBound) -> bool:
    """True when the share of pairs outside ``bound_value`` stays within ``bound_prob``.

    Both ``state + drift`` and ``state - drift`` are tested; a pair counts as
    a violation when either lands outside the bound.
    """
    arr = np.asarray(samples, dtype=float).reshape(-1, 2)
    if arr.shape[0] == 0:
        raise ValueError("no samples")
    inside = (np.abs(arr[:, 0] + arr[:, 1]) <= b.bound_value) & (np.abs(arr[:, 0] - arr[:, 1]) <= b.bound_value)
    return bool(np.mean(~inside) <= b.bound_prob)


def project_major_player(belief, anchor, eta: float = 10.0, max_passes: int = 100) -> np.ndarray:
    """Cap ``belief / anchor`` at ``eta`` and renormalize, repeating until stable.

    The cap is feasible whenever ``eta * sum(anchor) >= 1``; if it is not,
    the result is the anchor scaled to the cap and renormalized (which is the
    anchor itself).
    """
    b = np.asarray(belief, dtype=float).copy()
    anchor = np.asarray(anchor, dtype=float)
    if eta <= 0:
        raise ValueError("eta must be positive")
    cap = eta * anchor
    if cap.sum() < 1.0:
        return anchor / anchor.sum()
    for _ in range(max_passes):
        over = b > cap * (1 + 1e-12)
        if not over.any():
            break
        excess = float((b[over] - cap[over]).sum())
        b[over] = cap[over]
        free = ~over & (b < cap)
        if not free.any():
            break
        # spread the excess over uncapped entries in proportion to their room
        room = cap[free] - b[free]
        b[free] += excess * room / room.sum()
    return b / b.sum()
