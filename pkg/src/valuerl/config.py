"""Run configuration: flat ``key = value`` files resolved onto per-experiment defaults."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional

from .core import ContractViolation
from .dqn import CARTPOLE_DQN, HIGHWAY_DQN, DqnConfig
from .envs.cartpole import CartPoleParams
from .envs.highway import HighwayConfig
from .tabular import TabularParams

EXPERIMENTS = ("taxi", "cartpole", "highway")
ALGORITHMS = ("tabular", "dqn", "ddqn", "random")

DEFAULT_ALGORITHM = {"taxi": "tabular", "cartpole": "dqn", "highway": "dqn"}

RUN_KEYS = {"experiment", "algorithm", "seed", "eval_episodes"}
TAXI_ENV_KEYS = {"max_episode_steps"}
CARTPOLE_ENV_KEYS = {"theta_threshold_deg", "x_threshold", "max_episode_steps"}
HIGHWAY_ENV_KEYS = set(HighwayConfig.field_names()) - {"dt"}
TABULAR_KEYS = {f.name for f in dataclasses.fields(TabularParams)}
DQN_KEYS = {f.name for f in dataclasses.fields(DqnConfig)} - {"variant", "moving_avg_window"}

ALL_KEYS = (RUN_KEYS | TAXI_ENV_KEYS | CARTPOLE_ENV_KEYS | HIGHWAY_ENV_KEYS
            | TABULAR_KEYS | DQN_KEYS)


class ConfigError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def keys_for(experiment: str) -> set[str]:
    if experiment == "taxi":
        return RUN_KEYS | TAXI_ENV_KEYS | TABULAR_KEYS
    if experiment == "cartpole":
        return RUN_KEYS | CARTPOLE_ENV_KEYS | DQN_KEYS
    return RUN_KEYS | HIGHWAY_ENV_KEYS | DQN_KEYS


@dataclass
class RunConfig:
    experiment: str
    algorithm: str
    seed: int = 0
    eval_episodes: int = 100
    tabular: Optional[TabularParams] = None
    dqn: Optional[DqnConfig] = None
    taxi_max_steps: int = 200
    cartpole: Optional[CartPoleParams] = None
    highway: Optional[HighwayConfig] = None

    @property
    def budget_episodes(self) -> Optional[int]:
        return self.tabular.episodes if self.tabular else self.dqn.episodes

    def to_dict(self) -> dict:
        out = {"experiment": self.experiment, "algorithm": self.algorithm,
               "seed": self.seed, "eval_episodes": self.eval_episodes}
        if self.experiment == "taxi":
            out["max_episode_steps"] = self.taxi_max_steps
        if self.tabular:
            out.update(dataclasses.asdict(self.tabular))
        if self.dqn:
            d = dataclasses.asdict(self.dqn)
            d.pop("variant")
            d.pop("moving_avg_window")
            d["hidden_layers"] = list(d["hidden_layers"])
            out.update(d)
        if self.cartpole:
            out.update(theta_threshold_deg=self.cartpole.theta_threshold_deg,
                       x_threshold=self.cartpole.x_threshold,
                       max_episode_steps=self.cartpole.max_episode_steps)
        if self.highway:
            d = dataclasses.asdict(self.highway)
            d.pop("dt")
            out.update(d)
        return out


def _field_types() -> dict[str, Any]:
    types: dict[str, Any] = {"experiment": str, "algorithm": str, "seed": int,
                             "eval_episodes": int, "max_episode_steps": int,
                             "theta_threshold_deg": float, "x_threshold": float}
    for cls in (TabularParams, DqnConfig, HighwayConfig):
        for f in dataclasses.fields(cls):
            types.setdefault(f.name, f.type)
    return types


_TYPES = _field_types()


def parse_value(key: str, raw: str):
    """Convert the text of ``key`` to its declared type."""
    kind = _TYPES[key]
    kind = kind if isinstance(kind, str) else getattr(kind, "__name__", str(kind))
    text = raw.strip()
    optional = kind.startswith("Optional")
    if optional and text.lower() in ("none", ""):
        return None
    if "int" in kind and "float" not in kind:
        return int(text)
    if "float" in kind:
        return float(text)
    if kind == "tuple":
        return tuple(int(p) for p in text.replace(" ", "").split(",") if p)
    return text


def parse_config_text(text: str) -> dict[str, tuple[Any, int]]:
    """Parse ``key = value`` lines into ``{key: (value, line_number)}``."""
    values: dict[str, tuple[Any, int]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", lineno)
        key, raw = (p.strip() for p in body.split("=", 1))
        if key not in ALL_KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        try:
            values[key] = (parse_value(key, raw), lineno)
        except ValueError:
            raise ConfigError(f"bad value {raw.strip()!r} for {key!r}", lineno) from None
    return values


def resolve(values: dict[str, tuple[Any, Optional[int]]], experiment: Optional[str] = None,
            algorithm: Optional[str] = None, seed: Optional[int] = None) -> RunConfig:
    """Build a validated RunConfig; explicit arguments win over file values."""
    def get(key, default=None):
        return values[key][0] if key in values else default

    experiment = experiment or get("experiment")
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {experiment!r}",
                          values.get("experiment", (None, None))[1])
    allowed = keys_for(experiment)
    for key, (_, line) in values.items():
        if key not in allowed:
            raise ConfigError(f"key {key!r} does not apply to experiment {experiment}", line)
    algorithm = algorithm or get("algorithm") or DEFAULT_ALGORITHM[experiment]
    if algorithm not in ALGORITHMS:
        raise ConfigError(f"algorithm must be one of {ALGORITHMS}, got {algorithm!r}",
                          values.get("algorithm", (None, None))[1])
    if (algorithm == "tabular") != (experiment == "taxi") and algorithm != "random":
        raise ConfigError(f"algorithm {algorithm} is incompatible with experiment {experiment}")

    run = RunConfig(experiment, algorithm,
                    seed=int(seed if seed is not None else get("seed", 0)),
                    eval_episodes=int(get("eval_episodes", 100)))
    if run.eval_episodes < 1:
        raise ConfigError("eval_episodes must be >= 1", values.get("eval_episodes", (0, None))[1])

    def apply(obj, keys):
        updates = {k: values[k][0] for k in keys if k in values and hasattr(obj, k)}
        try:
            obj = replace(obj, **updates)
            return obj.validate() if hasattr(obj, "validate") else obj
        except (ContractViolation, TypeError) as exc:
            lines = [values[k][1] for k in updates if values[k][1] is not None]
            raise ConfigError(str(exc), min(lines) if lines else None) from None

    if experiment == "taxi":
        run.tabular = apply(TabularParams(), TABULAR_KEYS)
        run.taxi_max_steps = int(get("max_episode_steps", 200))
        if run.taxi_max_steps < 1:
            raise ConfigError("max_episode_steps must be >= 1", values["max_episode_steps"][1])
    else:
        base = (replace(CARTPOLE_DQN, failure_reward=-100.0) if experiment == "cartpole"
                else HIGHWAY_DQN)
        base = replace(base, variant="ddqn" if algorithm == "ddqn" else "dqn")
        run.dqn = apply(base, DQN_KEYS)
        if experiment == "cartpole":
            run.cartpole = apply(CartPoleParams(), CARTPOLE_ENV_KEYS)
            p = run.cartpole
            if p.theta_threshold_deg <= 0 or p.x_threshold <= 0 or p.max_episode_steps < 1:
                raise ConfigError("cartpole thresholds and step cap must be positive")
        else:
            run.highway = apply(HighwayConfig(), HIGHWAY_ENV_KEYS)
    return run


def load_config(path, experiment: Optional[str] = None, algorithm: Optional[str] = None,
                seed: Optional[int] = None) -> RunConfig:
    """Read a config file; ``.json`` files are treated as run manifests."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    if path.suffix == ".json":
        return from_manifest(json.loads(path.read_text(encoding="utf-8")))
    return resolve(parse_config_text(path.read_text(encoding="utf-8")),
                   experiment, algorithm, seed)


def from_manifest(manifest: dict) -> RunConfig:
    cfg = manifest.get("config", manifest)
    values = {}
    for k, v in cfg.items():
        if k not in ALL_KEYS:
            raise ConfigError(f"unknown key {k!r} in manifest")
        if isinstance(v, list):
            v = tuple(v)
        values[k] = (v, None)
    return resolve(values)
