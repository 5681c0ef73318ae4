"""Training loop: shared-parameter MADDPG with prior actions in the buffer."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from ..behavior import BehaviorSpec, prior_policy
from .checkpoint import save_checkpoint
from .maddpg import (
    DivergenceError,
    actor_update,
    critic_update,
    explore_action,
    make_actor,
    make_critic,
    soft_update,
)
from .mlp import MLP, make_optimizer
from .replay import ReplayBuffer

log = logging.getLogger(__name__)

LOG_SCHEMA = "#schema=train_log/v1"
LOG_FIELDS = ("episode", "mean_reward", "M1", "M2", "actor_loss", "critic_loss", "collisions")


@dataclass(frozen=True)
class TrainConfig:
    episodes: int = 3000
    episode_length: int = 200
    batch_size: int = 512
    hidden_dim: int = 180
    n_hidden_layers: int = 3
    lr_critic: float = 1e-3
    lr_actor: float = 1e-4
    exploration_rate: float = 0.6
    noise_scale: float = 0.1
    gamma: float = 0.99
    alpha: float = 1.0
    tau: float = 0.01
    seed: int = 0
    buffer_capacity: int = 1_000_000
    optimizer: str = "adam"
    grad_clip: Optional[float] = 1.0
    updates_per_step: int = 1
    use_prior: bool = True
    timeout_is_terminal: bool = False
    dtype: str = "float32"

    def __post_init__(self):
        for name in ("episode_length", "batch_size", "hidden_dim", "n_hidden_layers", "buffer_capacity"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.episodes < 0:
            raise ValueError(f"episodes must be >= 0, got {self.episodes}")
        for name in ("lr_critic", "lr_actor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if not 0 < self.tau <= 1:
            raise ValueError(f"tau must lie in (0, 1], got {self.tau}")
        if not (0 <= self.exploration_rate <= 1 and 0 <= self.noise_scale <= 1):
            raise ValueError("exploration_rate and noise_scale must lie in [0, 1]")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype!r}")
        if self.updates_per_step < 0:
            raise ValueError("updates_per_step must be >= 0")

    @property
    def effective_alpha(self) -> float:
        return self.alpha if self.use_prior else 0.0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Agent:
    actor: MLP
    critic: MLP
    target_actor: MLP
    target_critic: MLP

    def nets(self) -> dict:
        return {
            "actor": self.actor,
            "critic": self.critic,
            "target_actor": self.target_actor,
            "target_critic": self.target_critic,
        }


@dataclass
class TrainResult:
    agent: Agent
    log: list = field(default_factory=list)  # one dict per episode
    n_updates: int = 0
    n_clipped: int = 0


def init_agent(obs_dim: int, cfg: TrainConfig, rng: np.random.Generator) -> Agent:
    dtype = np.dtype(cfg.dtype)
    actor = make_actor(obs_dim, cfg.hidden_dim, cfg.n_hidden_layers, rng, dtype)
    critic = make_critic(obs_dim, cfg.hidden_dim, cfg.n_hidden_layers, rng, dtype)
    return Agent(actor, critic, actor.copy(), critic.copy())


def format_value(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "nan" if math.isnan(x) else repr(x)


def write_log(path, rows: list) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(LOG_SCHEMA + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LOG_FIELDS)
        for row in rows:
            writer.writerow([format_value(row[k]) for k in LOG_FIELDS])


def read_log(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().strip()
        if first != LOG_SCHEMA:
            raise ValueError(f"{path}: expected {LOG_SCHEMA!r} on the first line, got {first!r}")
        rows = []
        for rec in csv.DictReader(fh):
            rows.append({k: (int(v) if k in ("episode", "collisions") else float(v)) for k, v in rec.items()})
    return rows


def _check_finite(agent: Agent, episode: int) -> None:
    for name, net in agent.nets().items():
        if not all(np.all(np.isfinite(p)) for p in net.params()):
            raise DivergenceError(f"non-finite parameters in {name} at episode {episode}")


def train(
    env_factory: Callable,
    policy_spec: Optional[BehaviorSpec],
    cfg: TrainConfig,
    log_path=None,
    checkpoint_path=None,
    progress: Optional[Callable[[dict], None]] = None,
) -> TrainResult:
    """Train one shared actor/critic pair.

    ``env_factory(seed_sequence)`` must return a ready :class:`~lamarl.env.SwarmEnv`
    with its reward function installed. With ``cfg.use_prior`` false the prior is
    never queried, alpha is 0 and stored prior actions are zero.
    """
    if cfg.use_prior and policy_spec is None:
        raise ValueError("use_prior=True needs a policy spec")
    ss_env, ss_init, ss_explore, ss_sample = np.random.SeedSequence(cfg.seed).spawn(4)
    env = env_factory(ss_env)
    if env.cfg.episode_length != cfg.episode_length:
        raise ValueError(
            f"episode_length mismatch: env has {env.cfg.episode_length}, training config {cfg.episode_length}"
        )
    explore_rng = np.random.default_rng(ss_explore)
    sample_rng = np.random.default_rng(ss_sample)
    agent = init_agent(env.cfg.obs_dim, cfg, np.random.default_rng(ss_init))
    result = TrainResult(agent)
    if cfg.episodes == 0:
        _finish(result, cfg, log_path, checkpoint_path, 0)
        return result

    buffer = ReplayBuffer(min(cfg.buffer_capacity, cfg.episodes * cfg.episode_length * env.cfg.n_robot),
                          env.cfg.obs_dim, dtype=np.dtype(cfg.dtype))
    opt_actor = make_optimizer(cfg.optimizer, agent.actor.params(), cfg.lr_actor)
    opt_critic = make_optimizer(cfg.optimizer, agent.critic.params(), cfg.lr_critic)
    alpha = cfg.effective_alpha
    n = env.cfg.n_robot

    for episode in range(cfg.episodes):
        obs, views = env.reset()
        progress_frac = episode / cfg.episodes
        rewards, a_losses, c_losses, collisions = [], [], [], 0
        last = None
        for t in range(cfg.episode_length):
            actions = explore_action(agent.actor, obs, cfg.exploration_rate, cfg.noise_scale, progress_frac, explore_rng)
            if cfg.use_prior:
                a_prior = np.array([prior_policy(v, policy_spec) for v in views])
            else:
                a_prior = np.zeros((n, 2))
            last = env.step(actions)
            done = last.done and cfg.timeout_is_terminal
            buffer.add(obs, actions, last.rewards, last.observations, float(done), a_prior)
            obs, views = last.observations, last.views
            rewards.append(float(last.rewards.mean()))
            collisions += len(last.collisions)
            if len(buffer) >= cfg.batch_size:
                for _ in range(cfg.updates_per_step):
                    batch = buffer.sample(cfg.batch_size, sample_rng)
                    _, c_loss = critic_update(agent.critic, agent.target_actor, agent.target_critic, batch,
                                              cfg.gamma, cfg.lr_critic, opt_critic, cfg.grad_clip)
                    _, a_loss = actor_update(agent.actor, agent.critic, batch, alpha, cfg.lr_actor,
                                             opt_actor, cfg.grad_clip)
                    soft_update(agent.target_critic, agent.critic, cfg.tau)
                    soft_update(agent.target_actor, agent.actor, cfg.tau)
                    a_losses.append(a_loss)
                    c_losses.append(c_loss)
                    result.n_updates += 1
        _check_finite(agent, episode)
        row = {
            "episode": episode,
            "mean_reward": float(np.mean(rewards)),
            "M1": float(last.M1),
            "M2": float(last.M2),
            "actor_loss": float(np.mean(a_losses)) if a_losses else float("nan"),
            "critic_loss": float(np.mean(c_losses)) if c_losses else float("nan"),
            "collisions": int(collisions),
        }
        result.log.append(row)
        log.info("episode %d reward %.3f M1 %.3f M2 %.2f", episode, row["mean_reward"], row["M1"], row["M2"])
        if progress is not None:
            progress(row)
    _finish(result, cfg, log_path, checkpoint_path, cfg.episodes)
    return result


def _finish(result: TrainResult, cfg: TrainConfig, log_path, checkpoint_path, episode: int) -> None:
    if log_path is not None:
        write_log(log_path, result.log)
    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, result.agent.nets(), cfg.to_dict(), episode)
