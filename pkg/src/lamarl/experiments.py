"""Run directories for training, evaluation and the prior ablation.

A training run directory holds ``manifest.json`` (resolved config, seed,
digest, completion flag), ``train_log.csv`` and ``checkpoint.bin``. A
complete directory whose digest matches the requested config is reused.
"""
from __future__ import annotations

import csv
import json
import logging
import time
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .ablation import SEResult, median_se, sample_efficiency
from .behavior import BehaviorSpec, llm_reward, mdr_reward, prior_policy
from .config import ExperimentConfig
from .env import SwarmEnv
from .marl.checkpoint import load_checkpoint
from .marl.evaluate import actor_controller, rollout, write_metrics_csv, write_trajectory
from .marl.train import read_log, train
from .region import GridRegion, capacity_check

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
TRAIN_LOG = "train_log.csv"
CHECKPOINT = "checkpoint.bin"


def reward_function(cfg: ExperimentConfig) -> Callable:
    if cfg.reward == "mdr":
        return mdr_reward
    spec = cfg.reward_spec()
    return lambda view: llm_reward(view, spec)


def env_factory(cfg: ExperimentConfig, shapes: Sequence[GridRegion]) -> Callable:
    reward_fn = reward_function(cfg)
    return lambda seed: SwarmEnv(cfg.env, shapes, reward_fn, seed=seed)


def write_json(path: Path, data: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_manifest(run_dir: Path) -> Optional[dict]:
    path = Path(run_dir) / MANIFEST
    if not path.exists():
        return None
    return json.loads(path.read_text(encoding="utf-8"))


def is_reusable(run_dir: Path, cfg: ExperimentConfig) -> bool:
    m = read_manifest(run_dir)
    return bool(m and m.get("complete") and m.get("digest") == cfg.digest()
                and (Path(run_dir) / TRAIN_LOG).exists() and (Path(run_dir) / CHECKPOINT).exists())


def run_training(cfg: ExperimentConfig, run_dir, reuse: bool = False,
                 progress: Optional[Callable[[dict], None]] = None) -> dict:
    """Train into ``run_dir``; returns the manifest."""
    run_dir = Path(run_dir)
    if reuse and is_reusable(run_dir, cfg):
        log.info("reusing complete run in %s", run_dir)
        return read_manifest(run_dir)
    shapes = cfg.load_shapes()
    manifest = {"command": "train", "config": cfg.to_dict(), "seed": cfg.seed, "digest": cfg.digest(),
                "policy_spec": cfg.policy_spec().to_dict() if cfg.use_prior else None,
                "reward_spec": cfg.reward_spec().to_dict() if cfg.reward == "llm" else "mdr",
                "complete": False}
    write_json(run_dir / MANIFEST, manifest)
    started = time.time()
    train(env_factory(cfg, shapes), cfg.policy_spec() if cfg.use_prior else None, cfg.train,
          log_path=run_dir / TRAIN_LOG, checkpoint_path=run_dir / CHECKPOINT, progress=progress)
    log.info("training finished in %.0f s", time.time() - started)
    manifest["complete"] = True
    write_json(run_dir / MANIFEST, manifest)
    return manifest


def evaluate(cfg: ExperimentConfig, out_dir, checkpoint=None, shapes: Optional[Sequence[GridRegion]] = None,
             n_steps: Optional[int] = None, seed: int = 0, controller: Optional[Callable] = None,
             trajectories: bool = True) -> list[dict]:
    """Roll out each shape once; writes ``eval_summary.csv`` plus per-shape metrics and trajectories.

    Shapes failing the capacity check get a warning row instead of a rollout.
    """
    out_dir = Path(out_dir)
    if controller is None:
        nets, _, _ = load_checkpoint(checkpoint)
        controller = actor_controller(nets["actor"])
    if shapes is None:
        from .region import load_shape_library

        shapes = load_shape_library(cfg.shape_dir(), cfg.scale)
    n_steps = n_steps or cfg.eval_steps
    window = min(cfg.eval_window, n_steps)
    rows = []
    reward_fn = reward_function(cfg)
    for k, shape in enumerate(shapes):
        if not capacity_check(cfg.env.n_robot, cfg.env.r_avoid, shape):
            log.warning("skipping %s: capacity check fails for %d robots", shape.name, cfg.env.n_robot)
            rows.append({"shape": shape.name, "status": "skipped: capacity check failed"})
            continue
        env = SwarmEnv(cfg.env, [shape], reward_fn, seed=np.random.SeedSequence([seed, k]))
        res = rollout(env, controller, n_steps, window, keep_trajectory=trajectories)
        write_metrics_csv(out_dir / f"metrics_{shape.name}.csv", res.rows)
        if trajectories:
            write_trajectory(out_dir / f"trajectory_{shape.name}.jsonl", res.trajectory)
        rows.append({**res.summary(), "status": "ok"})
    fields = ("shape", "M1_mean", "M1_std", "M2_mean", "M2_std", "collisions", "status")
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "eval_summary.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n", restval="")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return rows


def prior_controller(spec: BehaviorSpec) -> Callable:
    return lambda obs, views: np.array([prior_policy(v, spec) for v in views])


def ablate_prior(cfg: ExperimentConfig, seeds: Sequence[int], out_dir, reuse: bool = True,
                 progress: Optional[Callable[[str, dict], None]] = None) -> dict:
    """Paired runs with and without the prior for every seed; writes ``se_report.json``."""
    out_dir = Path(out_dir)
    results: list[SEResult] = []
    for seed in seeds:
        curves = {}
        for use_prior in (True, False):
            tag = f"seed{seed}_{'prior' if use_prior else 'noprior'}"
            run_cfg = cfg.with_overrides(seed=seed, use_prior=use_prior)
            cb = (lambda row, tag=tag: progress(tag, row)) if progress else None
            run_training(run_cfg, out_dir / tag, reuse=reuse, progress=cb)
            curves[use_prior] = [r["M2"] for r in read_log(out_dir / tag / TRAIN_LOG)]
        results.append(sample_efficiency(curves[True], curves[False], seed))
    report = {
        "detector": {"window": 50, "band": 0.05, "definition": "first episode whose trailing 50-episode "
                     "mean of M2 is within 5% of the final trailing mean; undefined if only reached in the "
                     "last window"},
        "per_seed": [r.to_dict() for r in results],
        "median_SE": median_se(results),
    }
    write_json(out_dir / "se_report.json", report)
    return report
