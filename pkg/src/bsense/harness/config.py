"""Experiment configuration: TOML loading, seed parsing and validation."""

from __future__ import annotations

import dataclasses
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Any

from bsense.adversary import ATTACK_KINDS, DELAY_KINDS, AdversaryConfig, AsyncSchedule, AttackStrategy
from bsense.errors import ConfigError
from bsense.leakage import AlphaConfig, RECIPROCAL_MAPS
from bsense.phy import SensingParams
from bsense.protocol import ProtocolConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SEED_ENV = "BSENSE_SEED"
DEFAULT_SEEDS = "0-99"

SENSING_KEYS = tuple(f.name for f in dataclasses.fields(SensingParams))
PROTOCOL_KEYS = ("n_users", "max_rounds", "gamma", "trim_fraction", "decision_threshold",
                 "eta", "screen_bound", "use_mfg", "true_index")
ADVERSARY_KEYS = ("enabled", "byzantine_fraction", "strategy", "magnitude", "kl_mode", "delay",
                  "delay_k", "delay_p", "max_delay", "beta_target")
SCENARIO_KEYS = ("name", "seeds", "alphas", "betas", "leakage_form", "fairness_h", "tail_window",
                 "sync_seeds")
SECTIONS = {"scenario": SCENARIO_KEYS, "sensing": SENSING_KEYS, "protocol": PROTOCOL_KEYS,
            "adversary": ADVERSARY_KEYS, "sweep": ("axis", "values")}

# the default scenario: short frames so single-slot detection stays noisy
DEFAULT_SENSING = {"tau_tot": 1e-5}
DEFAULT_ADVERSARY = {"enabled": True, "byzantine_fraction": 0.2, "strategy": "flip"}
DEFAULTS = {"sensing": DEFAULT_SENSING, "protocol": {}, "adversary": DEFAULT_ADVERSARY}


def parse_seeds(spec) -> tuple[int, ...]:
    """Seeds from an int, a list, or a string like ``"0-9,12,20-22"``."""
    if isinstance(spec, bool):
        raise ValueError("seed must be an integer")
    if isinstance(spec, int):
        return (spec,)
    if isinstance(spec, (list, tuple)):
        out = []
        for s in spec:
            out.extend(parse_seeds(s))
        return tuple(out)
    if not isinstance(spec, str) or not spec.strip():
        raise ValueError(f"cannot read seeds from {spec!r}")
    out = []
    for part in spec.split(","):
        part = part.strip()
        if "-" in part[1:]:
            lo, hi = part.split("-", 1) if not part.startswith("-") else (part, "")
            lo_i, hi_i = int(lo), int(hi)
            if hi_i < lo_i:
                raise ValueError(f"empty seed range {part!r}")
            out.extend(range(lo_i, hi_i + 1))
        else:
            out.append(int(part))
    if any(s < 0 for s in out):
        raise ValueError("seeds must be non-negative")
    return tuple(out)


def default_seed_spec() -> str:
    return os.environ.get(SEED_ENV, DEFAULT_SEEDS)


@dataclass(frozen=True)
class SweepAxis:
    key: str  # "section.field"
    values: tuple

    @property
    def section(self) -> str:
        return self.key.split(".", 1)[0]

    @property
    def field(self) -> str:
        return self.key.split(".", 1)[1]


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "default"
    sensing: dict = field(default_factory=lambda: dict(DEFAULT_SENSING))
    protocol: dict = field(default_factory=dict)
    adversary: dict = field(default_factory=lambda: dict(DEFAULT_ADVERSARY))
    alphas: tuple[float, ...] = (8.0, 18.0)
    betas: tuple[float, ...] = (1.0,)
    seeds: tuple[int, ...] = field(default_factory=lambda: parse_seeds(default_seed_spec()))
    sync_seeds: tuple[int, ...] | None = None
    sweep: tuple[SweepAxis, ...] = ()
    leakage_form: str = "standard"
    fairness_h: str = "identity"
    tail_window: int | None = None

    # builders for one sweep point; ``point`` maps "section.field" to a value
    def _section(self, name: str, point: dict | None) -> dict:
        base = dict(getattr(self, name))
        for k, v in (point or {}).items():
            sec, f = k.split(".", 1)
            if sec == name:
                base[f] = v
        return base

    def sensing_params(self, point: dict | None = None) -> SensingParams:
        return SensingParams(**self._section("sensing", point))

    def protocol_config(self, point: dict | None = None) -> ProtocolConfig:
        return ProtocolConfig(**self._section("protocol", point))

    def adversary_config(self, point: dict | None = None, beta: float | None = None) -> AdversaryConfig | None:
        a = self._section("adversary", point)
        if not a.get("enabled", True):
            return None
        strategy = AttackStrategy(
            kind=a.get("strategy", "flip"),
            magnitude=float(a.get("magnitude", 1.0)),
            kl_mode=a.get("kl_mode", "sum"),
        )
        kind = a.get("delay", "none")
        schedule = AsyncSchedule(
            kind=kind,
            k=int(a.get("delay_k", 0)),
            p=float(a.get("delay_p", 0.5)),
            max_delay=int(a.get("max_delay", a.get("delay_k", 0) if kind == "fixed" else 0)),
        )
        b = a.get("beta_target", 1.0) if beta is None else beta
        return AdversaryConfig(float(a.get("byzantine_fraction", 0.2)), strategy, schedule, float(b))

    def alpha_configs(self) -> list[AlphaConfig]:
        return [AlphaConfig(float(a), self.leakage_form) for a in self.alphas]

    def sweep_points(self) -> list[dict]:
        """Cartesian product of sweep axes, first axis outermost."""
        points = [{}]
        for ax in self.sweep:
            points = [{**p, ax.key: v} for p in points for v in ax.values]
        return points


def _as_alpha(v) -> float:
    if isinstance(v, str) and v.lower() in ("inf", "infinity"):
        return math.inf
    return float(v)


def _float_list(v) -> tuple[float, ...]:
    if not isinstance(v, list):
        raise ValueError("must be a list")
    return tuple(_as_alpha(x) for x in v)


def _check(errors: dict, key: str, fn):
    try:
        return fn()
    except (TypeError, ValueError, KeyError) as exc:
        errors[key] = str(exc) or type(exc).__name__
        return None


def _table(data: dict, name: str) -> dict:
    body = data.get(name, {})
    return body if isinstance(body, dict) else {}


def build_config(data: dict, seed_override: str | None = None) -> ExperimentConfig:
    """Validate a parsed config mapping, collecting every problem before raising."""
    errors: dict[str, str] = {}
    for sec, body in data.items():
        if sec not in SECTIONS:
            errors[sec] = "unknown section"
            continue
        if not isinstance(body, dict):
            errors[sec] = "must be a table"
            continue
        for k in body:
            if k not in SECTIONS[sec]:
                errors[f"{sec}.{k}"] = "unknown key"

    scen = _table(data, "scenario")
    kwargs: dict[str, Any] = {}
    if "name" in scen:
        if isinstance(scen["name"], str) and scen["name"] and "/" not in scen["name"]:
            kwargs["name"] = scen["name"]
        else:
            errors["scenario.name"] = "must be a non-empty string without '/'"
    seed_spec = seed_override if seed_override is not None else scen.get("seeds", default_seed_spec())
    seeds = _check(errors, "scenario.seeds", lambda: parse_seeds(seed_spec))
    if seeds is not None:
        if not seeds:
            errors["scenario.seeds"] = "seed list is empty"
        kwargs["seeds"] = seeds
    if "sync_seeds" in scen:
        ss = _check(errors, "scenario.sync_seeds", lambda: parse_seeds(scen["sync_seeds"]))
        if ss is not None:
            kwargs["sync_seeds"] = ss
    for key in ("alphas", "betas"):
        if key in scen:
            vals = _check(errors, f"scenario.{key}", lambda: _float_list(scen[key]))
            if vals is not None:
                if not vals:
                    errors[f"scenario.{key}"] = "must not be empty"
                kwargs[key] = vals
    if "leakage_form" in scen:
        kwargs["leakage_form"] = scen["leakage_form"]
    if "fairness_h" in scen:
        if scen["fairness_h"] not in RECIPROCAL_MAPS:
            errors["scenario.fairness_h"] = f"must be one of {sorted(RECIPROCAL_MAPS)}"
        kwargs["fairness_h"] = scen["fairness_h"]
    if "tail_window" in scen:
        tw = scen["tail_window"]
        if not (isinstance(tw, int) and not isinstance(tw, bool) and tw >= 1):
            errors["scenario.tail_window"] = "must be an integer >= 1"
        kwargs["tail_window"] = tw

    sensing = {**DEFAULT_SENSING, **{k: v for k, v in _table(data, "sensing").items() if k in SENSING_KEYS}}
    protocol = {k: v for k, v in _table(data, "protocol").items() if k in PROTOCOL_KEYS}
    adversary = {**DEFAULT_ADVERSARY, **{k: v for k, v in _table(data, "adversary").items() if k in ADVERSARY_KEYS}}
    kwargs.update(sensing=sensing, protocol=protocol, adversary=adversary)

    sweep = data.get("sweep")
    if sweep is not None and isinstance(sweep, dict):
        ax = _check(errors, "sweep", lambda: parse_axis(f"{sweep['axis']}={','.join(map(str, sweep['values']))}"))
        if ax is not None:
            kwargs["sweep"] = (ax,)

    cfg = _check(errors, "scenario", lambda: ExperimentConfig(**kwargs))
    if cfg is not None:
        _validate_sections(cfg, errors)
    if errors:
        raise ConfigError(errors)
    return cfg


def _validate_sections(cfg: ExperimentConfig, errors: dict) -> None:
    for a in cfg.alphas:
        _check(errors, "scenario.alphas", lambda a=a: AlphaConfig(a, cfg.leakage_form))
    for b in cfg.betas:
        if not (math.isfinite(b) and b > 0):
            errors["scenario.betas"] = "betas must be positive"
    adv = cfg.adversary
    if adv.get("strategy", "flip") not in ATTACK_KINDS:
        errors["adversary.strategy"] = f"must be one of {ATTACK_KINDS}"
    if adv.get("delay", "none") not in DELAY_KINDS:
        errors["adversary.delay"] = f"must be one of {DELAY_KINDS}"
    builders = {"sensing": ExperimentConfig.sensing_params, "protocol": ExperimentConfig.protocol_config,
                "adversary": ExperimentConfig.adversary_config}
    # each key alone on top of the defaults, so every bad key is named
    for sec, build in builders.items():
        for k, v in getattr(cfg, sec).items():
            if f"{sec}.{k}" in errors:
                continue
            alone = dataclasses.replace(cfg, **{sec: {**DEFAULTS[sec], k: v}})
            _check(errors, f"{sec}.{k}", lambda: build(alone))
    if errors:
        return
    for point in cfg.sweep_points():
        for sec, build in builders.items():
            _check(errors, sec, lambda: build(cfg, point))


def parse_axis(text: str) -> SweepAxis:
    """``"section.field=v1,v2,..."`` to a sweep axis; numbers and booleans are converted."""
    if "=" not in text:
        raise ValueError("axis must look like section.field=v1,v2")
    key, vals = text.split("=", 1)
    key = key.strip()
    if "." not in key:
        raise ValueError(f"axis key {key!r} must be section.field")
    sec, f = key.split(".", 1)
    if sec not in ("sensing", "protocol", "adversary") or f not in SECTIONS[sec]:
        raise ValueError(f"unknown sweep key {key!r}")
    parsed = tuple(_scalar(v.strip()) for v in vals.split(",") if v.strip())
    if not parsed:
        raise ValueError("sweep axis has no values")
    return SweepAxis(key, parsed)


def _scalar(s: str):
    low = s.lower()
    if low in ("true", "false"):
        return low == "true"
    for conv in (int, float):
        try:
            return conv(s)
        except ValueError:
            pass
    return s


def load_config(path, seed_override: str | None = None, sets: list[str] | None = None) -> ExperimentConfig:
    """Read a TOML file and apply ``section.key=value`` overrides from the command line."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError({"<file>": str(exc)}) from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError({"<syntax>": str(exc)}) from exc
    for item in sets or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError({item: "override must look like section.key=value"})
        key, val = item.split("=", 1)
        sec, k = key.split(".", 1)
        data.setdefault(sec, {})
        if isinstance(data[sec], dict):
            data[sec][k] = _scalar(val)
    return build_config(data, seed_override)
