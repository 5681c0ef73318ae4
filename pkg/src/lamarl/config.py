"""Experiment configuration read from TOML.

Layout::

    seed = 0
    output_dir = "runs/desk"
    reward = "llm"            # or "mdr"
    use_prior = true

    [env]                     # EnvConfig fields
    [train]                   # TrainConfig fields
    [shapes]
    library = "builtin:letters"   # builtin:letters, builtin:desk, or a directory
    scale = 0.17
    [behavior]
    policy = "policy.json"    # optional; default is the reference prior
    reward = "reward.json"    # optional; default is the reference reward
    [eval]
    n_steps = 500
    window = 300

Missing keys fall back to the defaults below, which reproduce the full-scale setup.
"""
from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Union

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .behavior import BehaviorSpec, load_spec, reference_policy_spec, reference_reward_spec
from .env import EnvConfig
from .marl.train import TrainConfig
from .region import GridRegion, RegionError, capacity_check, load_shape_library
from .shapes import DESK_DIR, LETTERS_DIR

BUILTIN_LIBRARIES = {"builtin:letters": LETTERS_DIR, "builtin:desk": DESK_DIR}
REWARD_CHOICES = ("llm", "mdr")
TOP_KEYS = {"seed", "output_dir", "reward", "use_prior", "env", "train", "shapes", "behavior", "eval"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    shapes: str = "builtin:letters"
    scale: float = 0.17
    policy_path: Optional[str] = None
    reward_path: Optional[str] = None
    output_dir: str = "runs/default"
    reward: str = "llm"
    eval_steps: int = 500
    eval_window: int = 300
    base_dir: str = "."  # relative paths resolve against the config file's folder

    def __post_init__(self):
        if self.reward not in REWARD_CHOICES:
            raise ConfigError(f"reward must be one of {REWARD_CHOICES}, got {self.reward!r}")
        if self.train.episode_length != self.env.episode_length:
            raise ConfigError(
                f"train.episode_length ({self.train.episode_length}) differs from env.episode_length "
                f"({self.env.episode_length})"
            )
        if not 0 < self.eval_window <= self.eval_steps:
            raise ConfigError("eval.window must lie in (0, eval.n_steps]")

    @property
    def seed(self) -> int:
        return self.train.seed

    @property
    def use_prior(self) -> bool:
        return self.train.use_prior

    def with_overrides(self, seed: Optional[int] = None, use_prior: Optional[bool] = None,
                       output_dir: Optional[str] = None) -> "ExperimentConfig":
        train = self.train
        if seed is not None:
            train = replace(train, seed=seed)
        if use_prior is not None:
            train = replace(train, use_prior=use_prior)
        return replace(self, train=train, output_dir=output_dir or self.output_dir)

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def shape_dir(self) -> Path:
        return BUILTIN_LIBRARIES.get(self.shapes) or self.resolve(self.shapes)

    def load_shapes(self) -> list[GridRegion]:
        shapes = load_shape_library(self.shape_dir(), self.scale)
        bad = [s.name for s in shapes if not capacity_check(self.env.n_robot, self.env.r_avoid, s)]
        if bad:
            raise ConfigError(
                f"shapes fail the capacity check for {self.env.n_robot} robots at scale {self.scale}: {bad}"
            )
        return shapes

    def policy_spec(self) -> BehaviorSpec:
        if self.policy_path:
            return load_spec(self.resolve(self.policy_path))
        return reference_policy_spec(self.env.r_avoid, self.env.r_sense)

    def reward_spec(self) -> BehaviorSpec:
        if self.reward_path:
            return load_spec(self.resolve(self.reward_path))
        return reference_reward_spec()

    def to_dict(self) -> dict:
        """Resolved configuration, as echoed in run manifests."""
        return {
            "seed": self.seed,
            "output_dir": self.output_dir,
            "reward": self.reward,
            "use_prior": self.use_prior,
            "env": asdict(self.env),
            "train": asdict(self.train),
            "shapes": {"library": self.shapes, "scale": self.scale},
            "behavior": {"policy": self.policy_path, "reward": self.reward_path},
            "eval": {"n_steps": self.eval_steps, "window": self.eval_window},
        }

    def digest(self) -> str:
        """Hash of everything that affects training results (not the output directory)."""
        d = self.to_dict()
        d.pop("output_dir")
        d["behavior"] = {"policy": self.policy_spec().to_dict(), "reward": self.reward_spec().to_dict()}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


def _build(cls, table: dict, where: str):
    known = {f.name for f in fields(cls)}
    unknown = set(table) - known
    if unknown:
        raise ConfigError(f"[{where}] unknown keys: {sorted(unknown)}; allowed: {sorted(known)}")
    try:
        return cls(**table)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{where}] {exc}") from None


def config_from_dict(data: dict, base_dir: Union[str, Path] = ".") -> ExperimentConfig:
    unknown = set(data) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    train_table = dict(data.get("train", {}))
    if "seed" in data:
        train_table.setdefault("seed", data["seed"])
    if "use_prior" in data:
        train_table.setdefault("use_prior", data["use_prior"])
    env = _build(EnvConfig, dict(data.get("env", {})), "env")
    train_table.setdefault("episode_length", env.episode_length)
    train = _build(TrainConfig, train_table, "train")
    shapes = dict(data.get("shapes", {}))
    behavior = dict(data.get("behavior", {}))
    ev = dict(data.get("eval", {}))
    for name, table, allowed in (("shapes", shapes, {"library", "scale"}), ("behavior", behavior, {"policy", "reward"}),
                                 ("eval", ev, {"n_steps", "window"})):
        extra = set(table) - allowed
        if extra:
            raise ConfigError(f"[{name}] unknown keys: {sorted(extra)}")
    cfg = ExperimentConfig(
        env=env,
        train=train,
        shapes=shapes.get("library", "builtin:letters"),
        scale=float(shapes.get("scale", 0.17)),
        policy_path=behavior.get("policy"),
        reward_path=behavior.get("reward"),
        output_dir=data.get("output_dir", "runs/default"),
        reward=data.get("reward", "llm"),
        eval_steps=int(ev.get("n_steps", 500)),
        eval_window=int(ev.get("window", 300)),
        base_dir=str(base_dir),
    )
    for p in (cfg.policy_path, cfg.reward_path):
        if p and not cfg.resolve(p).exists():
            raise ConfigError(f"behaviour spec file {cfg.resolve(p)} does not exist")
    if cfg.shapes not in BUILTIN_LIBRARIES and not cfg.shape_dir().is_dir():
        raise ConfigError(f"shape library {cfg.shape_dir()} is not a directory")
    return cfg


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(data, path.parent)
