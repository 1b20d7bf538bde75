"""Scenario files: schema, validation, bundled examples.

A scenario is a JSON object pinning the plant, topology, privacy parameters,
fusion counts (integers or "auto" = ceil(sufficient bound) + 1), horizon,
initial/desired states, noise, and verdict threshold. Matrices are nested
row arrays; vectors are flat arrays. Validation errors carry the offending
field path.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ScenarioError
from .graph import CommGraph, PrivacyWeights
from .plant import Channel, NoiseSpec, PlantModel

__all__ = ["Scenario", "load_scenario", "save_scenario", "bundled_scenario_names"]

_EPS_LO, _EPS_HI = 0.0, 2.0 / 3.0


@dataclass
class Scenario:
    name: str
    plant: PlantModel
    graph: CommGraph
    weight_rule: str
    epsilon: float
    pi: tuple | None  # None means: draw seeded values at run time
    m1: object  # int or "auto"
    m2: object  # int or "auto"
    gramian_delta: float
    horizon: int
    initial_state: np.ndarray
    desired_state: np.ndarray
    error_components: tuple
    stabilization_threshold: float
    noise: NoiseSpec
    seed: int
    channel_addition: np.ndarray | None = None
    audit_target: int = 0
    audit_adversary: int = 1
    audit_steps: int = 10
    defaults_applied: list = field(default_factory=list)

    def privacy_weights(self) -> PrivacyWeights:
        if self.pi is not None:
            return PrivacyWeights(epsilon=self.epsilon, pi=self.pi)
        return PrivacyWeights.random(self.epsilon, self.graph.agent_count, self.seed)

    def error_state(self, raw) -> np.ndarray:
        return np.asarray(raw, dtype=float) - self.desired_state

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "plant": {
                "a": self.plant.a.tolist(),
                "channels": [
                    {"b": ch.b.tolist(), "c": ch.c.tolist()} for ch in self.plant.channels
                ],
            },
            "graph": {"neighbors": [sorted(s) for s in self.graph.neighbor_sets]},
            "weight_rule": self.weight_rule,
            "privacy": {"epsilon": self.epsilon}
            | ({"pi": list(self.pi)} if self.pi is not None else {}),
            "fusion": {"m1": self.m1, "m2": self.m2},
            "gramian_delta": self.gramian_delta,
            "horizon": self.horizon,
            "initial_state": self.initial_state.tolist(),
            "desired_state": self.desired_state.tolist(),
            "error_components": list(self.error_components),
            "stabilization_threshold": self.stabilization_threshold,
            "noise": {
                "sigma_w": self.noise.sigma_w,
                "sigma_v": self.noise.sigma_v,
            },
            "seed": self.seed,
            "audit": {
                "target": self.audit_target,
                "adversary": self.audit_adversary,
                "steps": self.audit_steps,
            },
        }
        if self.channel_addition is not None:
            d["channel_addition"] = {"b": self.channel_addition.tolist()}
        return d


def _fail(path: str, msg: str):
    raise ScenarioError(f"{path}: {msg}")


def _require(obj: dict, key: str, path: str):
    if key not in obj:
        _fail(f"{path}.{key}" if path else key, "missing required field")
    return obj[key]


def _matrix(value, path: str) -> np.ndarray:
    try:
        m = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        _fail(path, "not a numeric array")
    if not np.isfinite(m).all():
        _fail(path, "contains non-finite values")
    return m


def _from_dict(raw: dict, name_hint: str) -> Scenario:
    defaults = []

    def default(key, value):
        defaults.append(f"{key} = {value!r}")
        return value

    name = raw.get("name") or default("name", name_hint)

    plant_raw = _require(raw, "plant", "")
    a = _matrix(_require(plant_raw, "a", "plant"), "plant.a")
    channels = []
    for idx, ch in enumerate(_require(plant_raw, "channels", "plant")):
        b = _matrix(_require(ch, "b", f"plant.channels[{idx}]"), f"plant.channels[{idx}].b")
        if b.ndim == 1:
            b = b.reshape(-1, 1)
        c = _matrix(_require(ch, "c", f"plant.channels[{idx}]"), f"plant.channels[{idx}].c")
        channels.append(Channel(b=b, c=c))
    try:
        plant = PlantModel(a=a, channels=channels)
    except ValueError as exc:
        _fail("plant", str(exc))

    graph_raw = _require(raw, "graph", "")
    try:
        graph = CommGraph(_require(graph_raw, "neighbors", "graph"))
    except ValueError as exc:
        _fail("graph.neighbors", str(exc))
    if graph.agent_count != plant.agent_count:
        _fail("graph.neighbors", f"{graph.agent_count} agents but plant has {plant.agent_count} channels")

    rule = raw.get("weight_rule") or default("weight_rule", "uniform")
    if rule not in ("uniform", "metropolis"):
        _fail("weight_rule", f"must be 'uniform' or 'metropolis', got {rule!r}")

    priv = _require(raw, "privacy", "")
    eps = float(_require(priv, "epsilon", "privacy"))
    if not _EPS_LO < eps < _EPS_HI:
        _fail("privacy.epsilon", f"must lie in (0, 2/3), got {eps}")
    pi = None
    if "pi" in priv:
        pi = tuple(float(p) for p in priv["pi"])
        if len(pi) != plant.agent_count:
            _fail("privacy.pi", f"{len(pi)} values for {plant.agent_count} agents")
        for i, p in enumerate(pi):
            if not 0.0 < p < 1.0:
                _fail(f"privacy.pi[{i}]", f"must lie in (0, 1), got {p}")
    else:
        default("privacy.pi", "seeded")

    fusion = raw.get("fusion") or default("fusion", {"m1": "auto", "m2": "auto"})
    m1 = fusion.get("m1", "auto")
    m2 = fusion.get("m2", "auto")
    for label, m in (("fusion.m1", m1), ("fusion.m2", m2)):
        if m != "auto" and (not isinstance(m, int) or m < 0):
            _fail(label, f"must be a nonnegative integer or 'auto', got {m!r}")
    if isinstance(m2, int) and m2 < 1:
        _fail("fusion.m2", "the private estimator needs at least one fusion round")

    delta = raw.get("gramian_delta")
    if delta is None:
        delta = default("gramian_delta", 1e-3)
    if delta <= 0:
        _fail("gramian_delta", f"must be positive, got {delta}")

    horizon = raw.get("horizon")
    if horizon is None:
        horizon = default("horizon", 3000)
    if not isinstance(horizon, int) or horizon < 1:
        _fail("horizon", f"must be a positive integer, got {horizon!r}")

    init = _matrix(_require(raw, "initial_state", ""), "initial_state").reshape(-1)
    if init.shape[0] != plant.n:
        _fail("initial_state", f"length {init.shape[0]} but state dimension is {plant.n}")
    if "desired_state" in raw:
        desired = _matrix(raw["desired_state"], "desired_state").reshape(-1)
        if desired.shape[0] != plant.n:
            _fail("desired_state", f"length {desired.shape[0]} but state dimension is {plant.n}")
    else:
        desired = np.zeros(plant.n)
        default("desired_state", [0.0] * plant.n)

    if "error_components" in raw:
        comps = tuple(int(i) for i in raw["error_components"])
        for i in comps:
            if not 0 <= i < plant.n:
                _fail("error_components", f"index {i} out of range")
    else:
        comps = tuple(range(plant.n))
        default("error_components", list(comps))

    threshold = raw.get("stabilization_threshold")
    if threshold is None:
        threshold = default("stabilization_threshold", 1.0)

    noise_raw = raw.get("noise") or default("noise", {"sigma_w": 0.0, "sigma_v": 0.0})
    seed = raw.get("seed")
    if seed is None:
        seed = default("seed", 0)
    try:
        noise = NoiseSpec(
            sigma_w=float(noise_raw.get("sigma_w", 0.0)),
            sigma_v=float(noise_raw.get("sigma_v", 0.0)),
            seed=int(seed),
        )
    except ValueError as exc:
        _fail("noise", str(exc))

    addition = None
    if "channel_addition" in raw:
        addition = _matrix(
            _require(raw["channel_addition"], "b", "channel_addition"), "channel_addition.b"
        ).reshape(-1)
        if addition.shape[0] != plant.n:
            _fail("channel_addition.b", f"length {addition.shape[0]} but state dimension is {plant.n}")

    audit = raw.get("audit", {})
    target = int(audit.get("target", 0))
    adversary = int(audit.get("adversary", 1 if plant.agent_count > 1 else 0))
    steps = int(audit.get("steps", 10))
    for label, idx in (("audit.target", target), ("audit.adversary", adversary)):
        if not 0 <= idx < plant.agent_count:
            _fail(label, f"agent index {idx} out of range")

    return Scenario(
        name=name,
        plant=plant,
        graph=graph,
        weight_rule=rule,
        epsilon=eps,
        pi=pi,
        m1=m1,
        m2=m2,
        gramian_delta=float(delta),
        horizon=horizon,
        initial_state=init,
        desired_state=desired,
        error_components=comps,
        stabilization_threshold=float(threshold),
        noise=noise,
        seed=int(seed),
        channel_addition=addition,
        audit_target=target,
        audit_adversary=adversary,
        audit_steps=steps,
        defaults_applied=defaults,
    )


def bundled_scenario_names() -> list:
    files = resources.files("coopstab.scenarios")
    return sorted(p.name[: -len(".json")] for p in files.iterdir() if p.name.endswith(".json"))


def load_scenario(path_or_name) -> Scenario:
    """Load a scenario from a JSON file path or a bundled scenario name."""
    p = Path(str(path_or_name))
    if p.suffix == ".json" or p.exists():
        if not p.exists():
            raise ScenarioError(f"scenario file not found: {p}")
        text = p.read_text()
        hint = p.stem
    else:
        res = resources.files("coopstab.scenarios").joinpath(f"{path_or_name}.json")
        if not res.is_file():
            raise ScenarioError(
                f"unknown scenario {path_or_name!r}; bundled: {', '.join(bundled_scenario_names())}"
            )
        text = res.read_text()
        hint = str(path_or_name)
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ScenarioError("scenario root must be a JSON object")
    return _from_dict(raw, hint)


def save_scenario(sc: Scenario, path) -> None:
    Path(path).write_text(json.dumps(sc.to_dict(), indent=2) + "\n")
