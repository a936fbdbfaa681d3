"""Scenario configuration, JSON loading and bundled presets.

A scenario file is a JSON object with ``"schema": 1``.  Every constraint
violation raises :class:`ConfigError` naming the offending field.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

from tapsim.hostmodel import (
    DEFAULT_OCCUPANCY_CAP,
    REFERENCE_SOLO_TIME,
    HostMode,
    HostProfile,
    InterferenceCurve,
    default_interference,
    flat_interference,
)
from tapsim.policies import GoalKind, PolicyKind
from tapsim.workload import ArrivalKind, DemandKind, DemandSpec

SCHEMA_VERSION = 1
DEFAULT_LAMBDAS = (1.0, 2.0, 4.0, 8.0, 12.0, 16.0, 20.0, 25.0, 30.0, 40.0)
PRESETS = ("homogeneous", "heterogeneous")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DelaySpec:
    """One-way controller<->host latency."""

    kind: str = "constant"  # or "exponential"
    mean: float = 0.001

    def __post_init__(self) -> None:
        if self.kind not in ("constant", "exponential"):
            raise ConfigError(f"net_delay.kind: expected 'constant' or 'exponential', got {self.kind!r}")
        if not self.mean >= 0 or not math.isfinite(self.mean):
            raise ConfigError(f"net_delay.mean: must be a finite value >= 0, got {self.mean}")

    def minimum(self) -> float:
        return self.mean if self.kind == "constant" else 0.0


@dataclass(frozen=True)
class PolicyConfig:
    kind: PolicyKind = PolicyKind.ROUND_ROBIN
    alpha: float | None = None
    exploration: float = 0.1
    renormalize: bool = False
    probabilities: tuple[float, ...] | None = None


@dataclass(frozen=True)
class ScenarioConfig:
    hosts: tuple[HostProfile, ...]
    arrival_kind: ArrivalKind = ArrivalKind.EXP
    rate: float = 1.0
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    goal: GoalKind = GoalKind.ET
    host_mode: HostMode = HostMode.SHARED
    demand: DemandSpec = field(default_factory=DemandSpec)
    work_unit: float = REFERENCE_SOLO_TIME
    net_delay: DelaySpec = field(default_factory=DelaySpec)
    sp_period: float = 0.1
    sp_focus: bool = False
    instant_feedback: bool = False
    duration: float = 300.0
    warmup_fraction: float = 0.1
    occupancy_cap: int = DEFAULT_OCCUPANCY_CAP
    seed: int = 1
    name: str = "scenario"

    def __post_init__(self) -> None:
        _require(len(self.hosts) >= 1, "hosts", "at least one host is required")
        _require(self.rate > 0 and math.isfinite(self.rate), "arrival.rate", f"must be > 0, got {self.rate}")
        _require(self.duration > 0 and math.isfinite(self.duration), "duration", f"must be > 0, got {self.duration}")
        _require(self.sp_period > 0, "sp_period", f"must be > 0, got {self.sp_period}")
        _require(0.0 <= self.warmup_fraction < 1.0, "warmup_fraction", "must lie in [0, 1)")
        _require(self.occupancy_cap >= 1, "occupancy_cap", "must be >= 1")
        _require(self.work_unit > 0, "work_unit", "must be > 0")
        kind = self.policy.kind
        if kind in (PolicyKind.RNN_RL, PolicyKind.RNN_SENSIBLE):
            _require(len(self.hosts) >= 2, "policy.kind", f"{kind.value} needs at least two hosts")
        if self.policy.probabilities is not None:
            _require(len(self.policy.probabilities) == len(self.hosts), "policy.probabilities",
                     "needs one entry per host")

    def replace(self, **changes) -> ScenarioConfig:
        return dataclasses.replace(self, **changes)

    def with_policy(self, kind: PolicyKind | str) -> ScenarioConfig:
        return self.replace(policy=dataclasses.replace(self.policy, kind=PolicyKind(kind)))


def _require(ok: bool, name: str, msg: str) -> None:
    if not ok:
        raise ConfigError(f"{name}: {msg}")


def _get(d: dict, key: str, path: str, typ, default=dataclasses.MISSING):
    if key not in d:
        if default is dataclasses.MISSING:
            raise ConfigError(f"{path}{key}: required field missing")
        return default
    v = d[key]
    if typ is float and isinstance(v, int) and not isinstance(v, bool):
        v = float(v)
    if typ is bool and not isinstance(v, bool) or typ is not bool and isinstance(v, bool):
        raise ConfigError(f"{path}{key}: expected {typ.__name__}, got {v!r}")
    if not isinstance(v, typ):
        raise ConfigError(f"{path}{key}: expected {typ.__name__}, got {v!r}")
    return v


def _enum(enum_cls, value, name: str):
    try:
        return enum_cls(value)
    except ValueError:
        allowed = ", ".join(e.value for e in enum_cls)
        raise ConfigError(f"{name}: {value!r} is not one of {allowed}") from None


def _no_extra(d: dict, allowed: set[str], path: str) -> None:
    extra = sorted(set(d) - allowed)
    if extra:
        raise ConfigError(f"{path or 'config'}: unknown field(s) {', '.join(extra)}")


def _parse_interference(v, path: str) -> InterferenceCurve:
    if v in (None, "default"):
        return default_interference()
    if v == "flat":
        return flat_interference()
    if not isinstance(v, dict):
        raise ConfigError(f"{path}: expected 'default', 'flat' or an object")
    _no_extra(v, {"ratios", "aggregate_factor", "fit_tolerance"}, path)
    try:
        return InterferenceCurve(
            ratios=tuple(v["ratios"]),
            aggregate_factor=float(v.get("aggregate_factor", 1.386)),
            fit_tolerance=float(v.get("fit_tolerance", 0.35)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _parse_host(d: Any, i: int) -> HostProfile:
    path = f"hosts[{i}]."
    if not isinstance(d, dict):
        raise ConfigError(f"hosts[{i}]: expected an object")
    _no_extra(d, {"name", "mu1", "speed_factor", "cores", "interference"}, f"hosts[{i}]")
    mu1 = _get(d, "mu1", path, float, 1.0 / REFERENCE_SOLO_TIME)
    speed = _get(d, "speed_factor", path, float, 1.0)
    cores = _get(d, "cores", path, int, 1)
    _require(mu1 > 0, f"{path}mu1", f"must be > 0, got {mu1}")
    _require(speed > 0, f"{path}speed_factor", f"must be > 0, got {speed}")
    _require(cores >= 1, f"{path}cores", f"must be >= 1, got {cores}")
    return HostProfile(
        mu1=mu1,
        speed_factor=speed,
        cores=cores,
        interference=_parse_interference(d.get("interference"), f"{path}interference"),
        name=str(d.get("name", f"host{i + 1}")),
    )


def config_from_dict(d: Any) -> ScenarioConfig:
    if not isinstance(d, dict):
        raise ConfigError("config: top level must be a JSON object")
    _no_extra(d, {
        "schema", "name", "hosts", "host_mode", "work_unit", "arrival", "demand", "policy", "goal",
        "net_delay", "sp_period", "sp_focus", "instant_feedback", "duration", "warmup_fraction",
        "occupancy_cap", "seed",
    }, "")
    schema = d.get("schema")
    if schema != SCHEMA_VERSION:
        raise ConfigError(f"schema: expected {SCHEMA_VERSION}, got {schema!r}")

    hosts = d.get("hosts")
    if not isinstance(hosts, list) or not hosts:
        raise ConfigError("hosts: expected a non-empty list")
    profiles = tuple(_parse_host(h, i) for i, h in enumerate(hosts))

    arrival = _get(d, "arrival", "", dict)
    _no_extra(arrival, {"kind", "rate"}, "arrival")
    a_kind = _enum(ArrivalKind, arrival.get("kind", "EXP"), "arrival.kind")
    rate = _get(arrival, "rate", "arrival.", float)
    _require(rate > 0, "arrival.rate", f"must be > 0, got {rate}")

    demand = d.get("demand", {})
    _no_extra(demand, {"kind", "mean"}, "demand")
    d_kind = _enum(DemandKind, demand.get("kind", "deterministic"), "demand.kind")
    d_mean = _get(demand, "mean", "demand.", float, REFERENCE_SOLO_TIME)
    _require(d_mean > 0, "demand.mean", f"must be > 0, got {d_mean}")

    pol = d.get("policy", {})
    if isinstance(pol, str):
        pol = {"kind": pol}
    _no_extra(pol, {"kind", "alpha", "exploration", "renormalize", "probabilities"}, "policy")
    probs = pol.get("probabilities")
    if probs is not None:
        if not isinstance(probs, list) or any(not isinstance(x, (int, float)) for x in probs):
            raise ConfigError("policy.probabilities: expected a list of numbers")
        if any(x < 0 for x in probs) or abs(sum(probs) - 1.0) > 1e-9:
            raise ConfigError("policy.probabilities: must be non-negative and sum to 1")
        probs = tuple(float(x) for x in probs)
    alpha = pol.get("alpha")
    if alpha is not None:
        alpha = _get(pol, "alpha", "policy.", float)
        _require(0.0 <= alpha <= 1.0, "policy.alpha", "must lie in [0, 1]")
    exploration = _get(pol, "exploration", "policy.", float, 0.1)
    _require(0.0 <= exploration <= 1.0, "policy.exploration", "must lie in [0, 1]")
    policy = PolicyConfig(
        kind=_enum(PolicyKind, pol.get("kind", "ROUND_ROBIN"), "policy.kind"),
        alpha=alpha,
        exploration=exploration,
        renormalize=_get(pol, "renormalize", "policy.", bool, False),
        probabilities=probs,
    )
    if policy.kind in (PolicyKind.RNN_RL, PolicyKind.RNN_SENSIBLE) and alpha is not None:
        _require(0.0 < alpha < 1.0, "policy.alpha", "must lie strictly inside (0, 1) for RNN policies")

    delay = d.get("net_delay", {})
    if isinstance(delay, (int, float)) and not isinstance(delay, bool):
        delay = {"kind": "constant", "mean": delay}
    _no_extra(delay, {"kind", "mean"}, "net_delay")
    net_delay = DelaySpec(kind=delay.get("kind", "constant"), mean=_get(delay, "mean", "net_delay.", float, 0.001))

    seed = _get(d, "seed", "", int, 1)
    _require(seed >= 0, "seed", "must be >= 0")
    return ScenarioConfig(
        hosts=profiles,
        arrival_kind=a_kind,
        rate=rate,
        policy=policy,
        goal=_enum(GoalKind, d.get("goal", "ET"), "goal"),
        host_mode=_enum(HostMode, d.get("host_mode", "shared"), "host_mode"),
        demand=DemandSpec(d_kind, d_mean),
        work_unit=_get(d, "work_unit", "", float, REFERENCE_SOLO_TIME),
        net_delay=net_delay,
        sp_period=_get(d, "sp_period", "", float, 0.1),
        sp_focus=_get(d, "sp_focus", "", bool, False),
        instant_feedback=_get(d, "instant_feedback", "", bool, False),
        duration=_get(d, "duration", "", float, 300.0),
        warmup_fraction=_get(d, "warmup_fraction", "", float, 0.1),
        occupancy_cap=_get(d, "occupancy_cap", "", int, DEFAULT_OCCUPANCY_CAP),
        seed=seed,
        name=str(d.get("name", "scenario")),
    )


def _interference_to_json(c: InterferenceCurve):
    if c == default_interference():
        return "default"
    if c == flat_interference():
        return "flat"
    return {"ratios": list(c.ratios), "aggregate_factor": c.aggregate_factor, "fit_tolerance": c.fit_tolerance}


def config_to_dict(cfg: ScenarioConfig) -> dict:
    pol: dict[str, Any] = {"kind": cfg.policy.kind.value, "exploration": cfg.policy.exploration,
                           "renormalize": cfg.policy.renormalize}
    if cfg.policy.alpha is not None:
        pol["alpha"] = cfg.policy.alpha
    if cfg.policy.probabilities is not None:
        pol["probabilities"] = list(cfg.policy.probabilities)
    return {
        "schema": SCHEMA_VERSION,
        "name": cfg.name,
        "hosts": [
            {"name": h.name, "mu1": h.mu1, "speed_factor": h.speed_factor, "cores": h.cores,
             "interference": _interference_to_json(h.interference)}
            for h in cfg.hosts
        ],
        "host_mode": cfg.host_mode.value,
        "work_unit": cfg.work_unit,
        "arrival": {"kind": cfg.arrival_kind.value, "rate": cfg.rate},
        "demand": {"kind": cfg.demand.kind.value, "mean": cfg.demand.mean},
        "policy": pol,
        "goal": cfg.goal.value,
        "net_delay": {"kind": cfg.net_delay.kind, "mean": cfg.net_delay.mean},
        "sp_period": cfg.sp_period,
        "sp_focus": cfg.sp_focus,
        "instant_feedback": cfg.instant_feedback,
        "duration": cfg.duration,
        "warmup_fraction": cfg.warmup_fraction,
        "occupancy_cap": cfg.occupancy_cap,
        "seed": cfg.seed,
    }


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from None
    return config_from_dict(data)


def load_preset(name: str) -> ScenarioConfig:
    if name not in PRESETS:
        raise ConfigError(f"preset: unknown preset {name!r} (choose from {', '.join(PRESETS)})")
    text = resources.files("tapsim").joinpath("presets").joinpath(f"{name}.json").read_text()
    return config_from_dict(json.loads(text))
