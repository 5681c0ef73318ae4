"""Deterministic rollouts of a trained actor (or of the prior alone)."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from ..region import METRICS_FIELDS
from .mlp import MLP

EVAL_STEPS = 500
EVAL_WINDOW = 300


@dataclass
class EvalResult:
    shape: str
    M1_mean: float
    M1_std: float
    M2_mean: float
    M2_std: float
    collisions: int  # colliding pairs summed over the window
    rows: list = field(default_factory=list, repr=False)  # per-step metrics rows
    trajectory: list = field(default_factory=list, repr=False)

    def summary(self) -> dict:
        return {
            "shape": self.shape,
            "M1_mean": self.M1_mean,
            "M1_std": self.M1_std,
            "M2_mean": self.M2_mean,
            "M2_std": self.M2_std,
            "collisions": self.collisions,
        }


def actor_controller(actor: MLP) -> Callable:
    return lambda obs, views: np.clip(actor.forward(obs), -1.0, 1.0)


def rollout(env, controller: Callable, n_steps: int = EVAL_STEPS, window: int = EVAL_WINDOW,
            keep_trajectory: bool = False) -> EvalResult:
    """Run ``controller(obs, views) -> actions`` from a fresh reset of ``env``."""
    if not 0 < window <= n_steps:
        raise ValueError(f"window must lie in (0, n_steps], got {window} for {n_steps} steps")
    obs, views = env.reset()
    rows, traj = [], []
    for t in range(n_steps):
        res = env.step(controller(obs, views))
        obs, views = res.observations, res.views
        rows.append({"step": t, "M1": float(res.M1), "M2": float(res.M2), "n_collisions": len(res.collisions)})
        if keep_trajectory:
            traj.append({
                "t": t,
                "p": env.swarm.p.tolist(),
                "v": env.swarm.v.tolist(),
                "M1": float(res.M1),
                "M2": float(res.M2),
                "collisions": [list(c) for c in res.collisions],
            })
    tail = rows[-window:]
    m1 = np.array([r["M1"] for r in tail])
    m2 = np.array([r["M2"] for r in tail])
    return EvalResult(
        shape=env.region.name,
        M1_mean=float(m1.mean()),
        M1_std=float(m1.std()),
        M2_mean=float(m2.mean()),
        M2_std=float(m2.std()),
        collisions=int(sum(r["n_collisions"] for r in tail)),
        rows=rows,
        trajectory=traj,
    )


def write_metrics_csv(path, rows: list) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_FIELDS)
        for row in rows:
            writer.writerow([row["step"], repr(row["M1"]), repr(row["M2"]), row["n_collisions"]])


def write_trajectory(path, records: list) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")
