"""Scenario configuration: a versioned YAML document mapped onto dataclasses."""
from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from ..environment import RewardParams, WorldConfig
from ..epidemic import DiseaseParams
from ..government import PolicySchedule
from ..population import PopulationConfig
from ..smadqn import TrainConfig

CONFIG_VERSION = 1


class ConfigError(ValueError):
    pass


def _build(cls, data, where):
    data = dict(data or {})
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    for f in fields(cls):
        if f.name in data and isinstance(data[f.name], list) and f.name != "rules":
            data[f.name] = tuple(data[f.name])
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    population: dict = field(default_factory=lambda: {"synth": {"agent_count": 100_000, "seed": 1}})
    disease: dict = field(default_factory=dict)
    reward: dict = field(default_factory=dict)
    policy: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    episodes: int = 100
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    fixed_policy: str | None = None  # "risky": no learning, the locked action every day
    online_capacity: int | None = None
    average_last: int = 10
    checkpoint_episodes: list = field(default_factory=list)
    household_dump_days: list = field(default_factory=list)
    record_trace: bool = False
    output: str = "runs/scenario"

    def __post_init__(self):
        if self.episodes < 0:
            raise ConfigError("episodes must be >= 0")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.fixed_policy not in (None, "risky"):
            raise ConfigError(f"fixed_policy must be null or 'risky', got {self.fixed_policy!r}")
        pop = self.population
        if not isinstance(pop, dict) or len(set(pop) & {"synth", "file"}) != 1:
            raise ConfigError("population needs exactly one of 'synth' or 'file'")
        # fail early on malformed sections
        self.disease_params()
        self.reward_params()
        self.schedule()
        self.train_config()
        if "synth" in pop:
            self.population_config()

    # -- typed views ---------------------------------------------------------
    def population_config(self, seed_override=None):
        data = dict(self.population["synth"] or {})
        if seed_override is not None:
            data["seed"] = seed_override
        return _build(PopulationConfig, data, "population.synth")

    def disease_params(self):
        return _build(DiseaseParams, self.disease, "disease")

    def reward_params(self):
        return _build(RewardParams, self.reward, "reward")

    def train_config(self):
        return _build(TrainConfig, self.train, "train")

    def schedule(self):
        p = dict(self.policy or {})
        unknown = sorted(set(p) - {"schedule", "disclosure", "quarantine", "disclosure_mode"})
        if unknown:
            raise ConfigError(f"policy: unknown keys {unknown}")
        try:
            return PolicySchedule.from_config(
                p.get("schedule") or [], bool(p.get("disclosure", False)), p.get("quarantine", "none"),
                p.get("disclosure_mode", "empirical"),
            )
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"policy: {exc}") from None

    def world_config(self):
        tc = self.train_config()
        return WorldConfig(
            disease=self.disease_params(), reward=self.reward_params(), schedule=self.schedule(),
            online_capacity=self.online_capacity, episode_days=tc.episode_days, locked_days=tc.locked_days,
            record_trace=self.record_trace or self.schedule().quarantine == "strong",
        )

    def to_dict(self):
        d = asdict(self)
        return {"version": CONFIG_VERSION, **d}

    def replace(self, **changes):
        d = copy.deepcopy(asdict(self))
        d.update(changes)
        return ScenarioConfig(**d)

    def with_section(self, section, **changes):
        d = copy.deepcopy(asdict(self))
        d[section] = {**(d.get(section) or {}), **changes}
        return ScenarioConfig(**d)


def config_from_dict(data):
    data = dict(data)
    version = data.pop("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version}")
    names = {f.name for f in fields(ScenarioConfig)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown top-level keys {unknown}")
    return ScenarioConfig(**data)


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping at the top level")
    return config_from_dict(data)


def save_config(cfg: ScenarioConfig, path):
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False), encoding="utf-8")
