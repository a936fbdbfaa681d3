"""Small scenario builders shared by the engine, CLI and acceptance tests."""

from tapsim.config import DelaySpec, PolicyConfig, ScenarioConfig
from tapsim.hostmodel import HostProfile
from tapsim.policies import PolicyKind

HETERO_SPEEDS = (0.5, 1.0, 0.25)


def hosts(speeds=(1.0, 1.0, 1.0), cores=4):
    return tuple(HostProfile(speed_factor=s, cores=cores, name=f"host{i + 1}") for i, s in enumerate(speeds))


def scenario(policy=PolicyKind.ROUND_ROBIN, speeds=(1.0, 1.0, 1.0), **kw) -> ScenarioConfig:
    kw.setdefault("rate", 10.0)
    kw.setdefault("duration", 20.0)
    if not isinstance(policy, PolicyConfig):
        policy = PolicyConfig(kind=PolicyKind(policy))
    if "delay" in kw:
        kw["net_delay"] = DelaySpec("constant", kw.pop("delay"))
    return ScenarioConfig(hosts=hosts(speeds), policy=policy, **kw)


def config_dict(**overrides) -> dict:
    d = {
        "schema": 1,
        "name": "mini",
        "hosts": [{"speed_factor": 1.0}, {"speed_factor": 2.0}],
        "arrival": {"kind": "EXP", "rate": 5.0},
        "policy": {"kind": "ROUND_ROBIN"},
        "duration": 10.0,
        "seed": 3,
    }
    d.update(overrides)
    return d
