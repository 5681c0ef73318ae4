"""Actor / critic updates with the prior-action regularizer.

Every robot shares one actor mu(o) and one decentralized critic Q(o, a); the
actor maximizes Q(o, mu(o)) - alpha * ||mu(o) - a_prior||^2.
"""
from __future__ import annotations

import logging
from typing import Optional

import numpy as np

from .mlp import MLP, clip_by_global_norm
from .replay import Batch

log = logging.getLogger(__name__)

ACT_DIM = 2


class DivergenceError(FloatingPointError):
    pass


def make_actor(obs_dim: int, hidden: int, n_hidden: int, rng: np.random.Generator, dtype=np.float64) -> MLP:
    return MLP.init([obs_dim] + [hidden] * n_hidden + [ACT_DIM], "tanh", rng, dtype)


def make_critic(obs_dim: int, hidden: int, n_hidden: int, rng: np.random.Generator, dtype=np.float64) -> MLP:
    return MLP.init([obs_dim + ACT_DIM] + [hidden] * n_hidden + [1], "identity", rng, dtype)


def actor_forward(actor: MLP, o: np.ndarray) -> np.ndarray:
    return actor.forward(o)


def critic_forward(critic: MLP, o: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Q for each row of (o, a); returns shape (B,)."""
    o, a = np.atleast_2d(o), np.atleast_2d(a)
    if o.shape[1] + a.shape[1] != critic.in_dim:
        raise ValueError(
            f"critic input dimension mismatch: expected {critic.in_dim}, got {o.shape[1]} + {a.shape[1]}"
        )
    return critic.forward(np.concatenate([o, a], axis=1))[:, 0]


def _finite(value: float, what: str) -> float:
    if not np.isfinite(value):
        raise DivergenceError(f"non-finite {what}: {value}")
    return float(value)


def actor_objective(actor: MLP, critic, o: np.ndarray, a_prior: np.ndarray, alpha: float) -> float:
    a = actor.forward(o)
    q = critic_forward(critic, o, a)
    return float(np.mean(q) - alpha * np.mean(np.sum((a - a_prior) ** 2, axis=1)))


def actor_gradients(actor: MLP, critic, o: np.ndarray, a_prior: np.ndarray, alpha: float):
    """Gradients of the actor *loss* (the negated objective) and the loss value.

    ``critic`` only needs ``forward(x, keep=True)`` and ``backward(cache, g, need_params=False)``,
    so tests can plug in an analytic critic.
    """
    o = np.atleast_2d(o)
    n = len(o)
    a, a_cache = actor.forward(o, keep=True)
    x = np.concatenate([o, a], axis=1).astype(actor.dtype, copy=False)
    q, q_cache = critic.forward(x, keep=True)
    diff = a - a_prior
    loss = -float(np.mean(q)) + alpha * float(np.mean(np.sum(diff * diff, axis=1)))
    _, dx = critic.backward(q_cache, np.full((n, 1), -1.0 / n, dtype=actor.dtype), need_params=False)
    da = dx[:, -ACT_DIM:] + (2.0 * alpha / n) * diff
    grads, _ = actor.backward(a_cache, da, need_input=False)
    return grads, loss


def critic_gradients(critic: MLP, target_actor: MLP, target_critic: MLP, batch: Batch, gamma: float):
    a_next = target_actor.forward(batch.o_next)
    q_next = critic_forward(target_critic, batch.o_next, a_next)
    y = batch.r + gamma * (1.0 - batch.done) * q_next
    x = np.concatenate([batch.o, batch.a], axis=1)
    q, cache = critic.forward(x, keep=True)
    err = q[:, 0] - y
    loss = float(np.mean(err * err))
    grads, _ = critic.backward(cache, (2.0 / len(err)) * err[:, None], need_input=False)
    return grads, loss


def td_loss(critic: MLP, target_actor: MLP, target_critic: MLP, batch: Batch, gamma: float) -> float:
    a_next = target_actor.forward(batch.o_next)
    y = batch.r + gamma * (1.0 - batch.done) * critic_forward(target_critic, batch.o_next, a_next)
    return float(np.mean((critic_forward(critic, batch.o, batch.a) - y) ** 2))


def _apply(net: MLP, grads: list, optimizer, lr: float, clip: Optional[float], what: str) -> bool:
    grads, norm, clipped = clip_by_global_norm(grads, clip)
    _finite(norm, f"{what} gradient norm")
    if clipped:
        log.debug("%s gradient clipped (norm %.3g > %.3g)", what, norm, clip)
    if optimizer is None:
        for p, g in zip(net.params(), grads):
            p -= p.dtype.type(lr) * g
    else:
        optimizer.step(grads)
    return clipped


def actor_update(
    actor: MLP,
    critic,
    batch: Batch,
    alpha: float,
    lr_actor: float,
    optimizer=None,
    clip: Optional[float] = None,
) -> tuple[MLP, float]:
    """One descent step on -mean[Q(o, mu(o)) - alpha ||mu(o) - a_prior||^2]; the critic is untouched.

    Without an optimizer this is a plain gradient step of size ``lr_actor``.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    grads, loss = actor_gradients(actor, critic, batch.o, batch.a_prior, alpha)
    _finite(loss, "actor loss")
    _apply(actor, grads, optimizer, lr_actor, clip, "actor")
    return actor, loss


def critic_update(
    critic: MLP,
    target_actor: MLP,
    target_critic: MLP,
    batch: Batch,
    gamma: float,
    lr_critic: float,
    optimizer=None,
    clip: Optional[float] = None,
) -> tuple[MLP, float]:
    """One step on the TD loss toward y = r + gamma (1 - done) Q'(o', mu'(o'))."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    grads, loss = critic_gradients(critic, target_actor, target_critic, batch, gamma)
    _finite(loss, "critic TD loss")
    _apply(critic, grads, optimizer, lr_critic, clip, "critic")
    return critic, loss


def soft_update(target: MLP, source: MLP, tau: float) -> MLP:
    if target.sizes != source.sizes:
        raise ValueError(f"soft_update shape mismatch: {target.sizes} vs {source.sizes}")
    if not 0 <= tau <= 1:
        raise ValueError(f"tau must be in [0, 1], got {tau}")
    if tau == 1:
        for t, s in zip(target.params(), source.params()):
            t[...] = s
        return target
    for t, s in zip(target.params(), source.params()):
        t *= t.dtype.type(1 - tau)
        t += t.dtype.type(tau) * s
    return target


def noise_std(noise_scale: float, exploration_rate: float, episode_progress: float) -> float:
    """Linear decay from ``noise_scale`` at progress 0 to 0 at ``exploration_rate``."""
    if exploration_rate <= 0:
        return 0.0
    return noise_scale * max(0.0, 1.0 - episode_progress / exploration_rate)


def explore_action(
    actor: MLP,
    o: np.ndarray,
    exploration_rate: float,
    noise_scale: float,
    episode_progress: float,
    rng: np.random.Generator,
) -> np.ndarray:
    a = actor.forward(o)
    std = noise_std(noise_scale, exploration_rate, episode_progress)
    if std > 0:
        a = a + rng.normal(0.0, std, size=a.shape)
    return np.clip(a, -1.0, 1.0)
