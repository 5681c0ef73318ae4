"""Preallocated FIFO replay buffer that also stores the prior's action."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Batch:
    o: np.ndarray  # (B, obs_dim)
    a: np.ndarray  # (B, 2)
    r: np.ndarray  # (B,)
    o_next: np.ndarray
    done: np.ndarray  # (B,) 0.0 / 1.0
    a_prior: np.ndarray  # (B, 2)

    def __len__(self) -> int:
        return len(self.r)


class ReplayBuffer:
    def __init__(self, capacity: int, obs_dim: int, act_dim: int = 2, dtype=np.float32):
        if capacity <= 0:
            raise ValueError(f"capacity must be positive, got {capacity}")
        self.capacity = int(capacity)
        self.o = np.zeros((capacity, obs_dim), dtype=dtype)
        self.o_next = np.zeros((capacity, obs_dim), dtype=dtype)
        self.a = np.zeros((capacity, act_dim), dtype=dtype)
        self.a_prior = np.zeros((capacity, act_dim), dtype=dtype)
        self.r = np.zeros(capacity, dtype=dtype)
        self.done = np.zeros(capacity, dtype=dtype)
        self.head = 0  # next write slot
        self.size = 0
        self.n_added = 0

    def __len__(self) -> int:
        return self.size

    def add(self, o, a, r, o_next, done, a_prior) -> None:
        """Append one transition per row; rows past capacity evict the oldest entries."""
        o = np.atleast_2d(o)
        n = len(o)
        a, a_prior, o_next = np.atleast_2d(a), np.atleast_2d(a_prior), np.atleast_2d(o_next)
        if np.any(np.abs(a) > 1) or np.any(np.abs(a_prior) > 1):
            raise ValueError("actions stored in the buffer must lie in [-1, 1]^2")
        r = np.broadcast_to(np.asarray(r, dtype=float), (n,))
        done = np.broadcast_to(np.asarray(done, dtype=float), (n,))
        idx = (self.head + np.arange(n)) % self.capacity
        self.o[idx], self.a[idx], self.r[idx] = o, a, r
        self.o_next[idx], self.done[idx], self.a_prior[idx] = o_next, done, a_prior
        self.head = int((self.head + n) % self.capacity)
        self.size = min(self.capacity, self.size + n)
        self.n_added += n

    def oldest_first(self) -> np.ndarray:
        """Storage slots ordered from the oldest live entry to the newest."""
        start = (self.head - self.size) % self.capacity
        return (start + np.arange(self.size)) % self.capacity

    def get(self, idx) -> Batch:
        idx = np.asarray(idx)
        return Batch(self.o[idx], self.a[idx], self.r[idx], self.o_next[idx], self.done[idx], self.a_prior[idx])

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        """Uniform over stored entries, without replacement inside one batch."""
        if batch_size > self.size:
            raise ValueError(f"cannot sample {batch_size} entries from a buffer holding {self.size}")
        return self.get(rng.choice(self.size, size=batch_size, replace=False))
