"""Prior policies and rewards expressed as declarative behaviour specs.

A policy spec is a sum of force primitives, clamped to the action box; a
reward spec is a conjunction of condition primitives returning 0 or 1. Both
read only a robot's :class:`~lamarl.env.LocalView`.

JSON form::

    {"kind": "policy", "combine": "sum",
     "terms": [{"primitive": "attract_target", "gain": 1.0, "range": 0.4}, ...]}
    {"kind": "reward", "combine": "all-of",
     "terms": [{"primitive": "inside_region", "threshold": null}, ...]}
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .env import LocalView

POLICY_PRIMITIVES = ("attract_target", "repel_neighbors", "sync_velocity")
REWARD_PRIMITIVES = ("inside_region", "collision_free", "exploration_done")
COMBINE_FOR_KIND = {"policy": "sum", "reward": "all-of"}

MDR_DELTA = 0.05

# Gains of the reference prior, picked by simulating the prior alone on the
# 8-robot / 6x6 square scene: the largest coverage among collision-free settings.
DEFAULT_GAINS = {"attract_target": 1.0, "repel_neighbors": 12.0, "sync_velocity": 3.0}
DEFAULT_REPEL_RANGE_FACTOR = 2.5  # times r_avoid


class BehaviorSpecError(ValueError):
    pass


@dataclass(frozen=True)
class ForceTerm:
    primitive: str
    gain: float
    range: float

    def __post_init__(self):
        if self.primitive not in POLICY_PRIMITIVES:
            raise BehaviorSpecError(
                f"unknown policy primitive {self.primitive!r}; allowed: {', '.join(POLICY_PRIMITIVES)}"
            )
        if not (math.isfinite(self.gain) and self.gain >= 0):
            raise BehaviorSpecError(f"{self.primitive}: gain must be finite and >= 0, got {self.gain}")
        if not (math.isfinite(self.range) and self.range > 0):
            raise BehaviorSpecError(f"{self.primitive}: range must be positive, got {self.range}")

    def to_dict(self) -> dict:
        return {"primitive": self.primitive, "gain": self.gain, "range": self.range}


@dataclass(frozen=True)
class ConditionTerm:
    primitive: str
    threshold: Optional[float] = None

    def __post_init__(self):
        if self.primitive not in REWARD_PRIMITIVES:
            raise BehaviorSpecError(
                f"unknown reward primitive {self.primitive!r}; allowed: {', '.join(REWARD_PRIMITIVES)}"
            )
        if self.threshold is not None and not (math.isfinite(self.threshold) and self.threshold > 0):
            raise BehaviorSpecError(f"{self.primitive}: threshold must be positive, got {self.threshold}")

    def to_dict(self) -> dict:
        return {"primitive": self.primitive, "threshold": self.threshold}


Term = Union[ForceTerm, ConditionTerm]


@dataclass(frozen=True)
class BehaviorSpec:
    kind: str
    terms: tuple = field(default_factory=tuple)
    combine: str = ""

    def __post_init__(self):
        if self.kind not in COMBINE_FOR_KIND:
            raise BehaviorSpecError(f"kind must be 'policy' or 'reward', got {self.kind!r}")
        if not self.combine:
            object.__setattr__(self, "combine", COMBINE_FOR_KIND[self.kind])
        if self.combine != COMBINE_FOR_KIND[self.kind]:
            raise BehaviorSpecError(f"a {self.kind} spec combines by {COMBINE_FOR_KIND[self.kind]!r}, got {self.combine!r}")
        object.__setattr__(self, "terms", tuple(self.terms))
        want = ForceTerm if self.kind == "policy" else ConditionTerm
        for term in self.terms:
            if not isinstance(term, want):
                raise BehaviorSpecError(f"{self.kind} spec cannot hold {type(term).__name__}")

    @property
    def primitives(self) -> set[str]:
        return {t.primitive for t in self.terms}

    def to_dict(self) -> dict:
        return {"kind": self.kind, "combine": self.combine, "terms": [t.to_dict() for t in self.terms]}

    def to_json(self, indent: Optional[int] = None) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_dict(cls, data: dict) -> "BehaviorSpec":
        if not isinstance(data, dict):
            raise BehaviorSpecError(f"behaviour spec must be a JSON object, got {type(data).__name__}")
        kind = data.get("kind")
        raw_terms = data.get("terms", [])
        if not isinstance(raw_terms, list):
            raise BehaviorSpecError("'terms' must be a list")
        terms = []
        for raw in raw_terms:
            if not isinstance(raw, dict) or "primitive" not in raw:
                raise BehaviorSpecError(f"malformed term {raw!r}")
            allowed = POLICY_PRIMITIVES if kind == "policy" else REWARD_PRIMITIVES
            if raw["primitive"] not in allowed:
                raise BehaviorSpecError(f"unknown {kind} primitive {raw['primitive']!r}; allowed: {', '.join(allowed)}")
            try:
                if kind == "policy":
                    terms.append(ForceTerm(raw["primitive"], float(raw["gain"]), float(raw["range"])))
                else:
                    thr = raw.get("threshold")
                    terms.append(ConditionTerm(raw["primitive"], None if thr is None else float(thr)))
            except (KeyError, TypeError) as exc:
                raise BehaviorSpecError(f"malformed term {raw!r}: {exc}") from None
        return cls(kind=kind, terms=tuple(terms), combine=data.get("combine", ""))

    @classmethod
    def from_json(cls, text: str) -> "BehaviorSpec":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise BehaviorSpecError(f"invalid JSON: {exc}") from None
        return cls.from_dict(data)


def reference_policy_spec(r_avoid: float = 0.1, r_sense: float = 0.4, gains: Optional[dict] = None) -> BehaviorSpec:
    g = {**DEFAULT_GAINS, **(gains or {})}
    return BehaviorSpec(
        "policy",
        (
            ForceTerm("attract_target", g["attract_target"], r_sense),
            ForceTerm("repel_neighbors", g["repel_neighbors"], DEFAULT_REPEL_RANGE_FACTOR * r_avoid),
            ForceTerm("sync_velocity", g["sync_velocity"], r_sense),
        ),
    )


def reference_reward_spec(delta: float = MDR_DELTA) -> BehaviorSpec:
    return BehaviorSpec(
        "reward",
        (
            ConditionTerm("inside_region"),
            ConditionTerm("collision_free"),
            ConditionTerm("exploration_done", delta),
        ),
    )


# --------------------------------------------------------------------------- primitives


def _unit(vec: np.ndarray) -> np.ndarray:
    norm = math.hypot(vec[0], vec[1])
    return np.zeros(2) if norm == 0 else vec / norm


def attract_target(view: LocalView, gain: float) -> np.ndarray:
    return gain * _unit(np.asarray(view.target, dtype=float))


def repel_neighbors(view: LocalView, gain: float, reach: float) -> np.ndarray:
    if len(view.neighbors) == 0:
        return np.zeros(2)
    rel = view.neighbors[:, :2]  # p_j - p_i
    d = np.hypot(rel[:, 0], rel[:, 1])
    close = (d < reach) & (d > 0)
    if not close.any():
        return np.zeros(2)
    push = gain * (reach - d[close]) / reach
    return np.sum(push[:, None] * (-rel[close] / d[close][:, None]), axis=0)


def sync_velocity(view: LocalView, gain: float, reach: float) -> np.ndarray:
    if len(view.neighbors) == 0:
        return np.zeros(2)
    d = np.hypot(view.neighbors[:, 0], view.neighbors[:, 1])
    near = view.neighbors[d < reach]
    if len(near) == 0:
        return np.zeros(2)
    return gain * near[:, 2:4].mean(axis=0)  # mean(v_j - v_i) = mean(v_j) - v_i


def cosine_weights(distances: np.ndarray, r_sense: float) -> np.ndarray:
    """rho = 0.5 (1 + cos(pi d / r_sense)): 1 at the robot, 0 at the sensing edge."""
    return 0.5 * (1.0 + np.cos(np.pi * np.asarray(distances, dtype=float) / r_sense))


def free_space_offset(view: LocalView) -> float:
    """Distance from the robot to the cosine-weighted centroid of its observed free cells."""
    if len(view.cells) == 0:
        return 0.0
    rho = cosine_weights(np.hypot(view.cells[:, 0], view.cells[:, 1]), view.r_sense)
    total = rho.sum()
    if total <= 0:
        return 0.0
    centroid = (rho[:, None] * view.cells).sum(axis=0) / total  # relative to p_i
    return float(math.hypot(centroid[0], centroid[1]))


def inside_region(view: LocalView) -> bool:
    return bool(view.inside)


def collision_free(view: LocalView, clearance: Optional[float] = None) -> bool:
    need = 2.0 * view.r_avoid if clearance is None else clearance
    if len(view.neighbors) == 0:
        return True
    return bool(np.hypot(view.neighbors[:, 0], view.neighbors[:, 1]).min() >= need)


def exploration_done(view: LocalView, delta: Optional[float] = None) -> bool:
    return free_space_offset(view) <= (MDR_DELTA if delta is None else delta)


# --------------------------------------------------------------------------- evaluation


def prior_policy(view: LocalView, spec: BehaviorSpec) -> np.ndarray:
    if spec.kind != "policy":
        raise BehaviorSpecError(f"prior_policy needs a policy spec, got kind={spec.kind!r}")
    total = np.zeros(2)
    for term in spec.terms:
        if term.range > view.r_sense * (1 + 1e-12):
            raise BehaviorSpecError(f"{term.primitive}: range {term.range} exceeds r_sense {view.r_sense}")
        if term.primitive == "attract_target":
            total += attract_target(view, term.gain)
        elif term.primitive == "repel_neighbors":
            total += repel_neighbors(view, term.gain, term.range)
        else:
            total += sync_velocity(view, term.gain, term.range)
    return np.clip(total, -view.f_max, view.f_max)


_CONDITIONS = {
    "inside_region": lambda view, thr: inside_region(view),
    "collision_free": collision_free,
    "exploration_done": exploration_done,
}


def llm_reward(view: LocalView, spec: BehaviorSpec) -> float:
    if spec.kind != "reward":
        raise BehaviorSpecError(f"llm_reward needs a reward spec, got kind={spec.kind!r}")
    return 1.0 if all(_CONDITIONS[t.primitive](view, t.threshold) for t in spec.terms) else 0.0


def mdr_reward(view: LocalView, delta: float = MDR_DELTA) -> float:
    """Hand-designed baseline: inside, collision-free, and within delta of the free-cell centroid."""
    if view.r_sense <= 0:
        raise ValueError("r_sense must be positive")
    ok = view.inside and collision_free(view) and free_space_offset(view) <= delta
    return 1.0 if ok else 0.0


def eval_spec(spec: BehaviorSpec, view: LocalView):
    """Policy spec -> 2-D action; reward spec -> 0.0 / 1.0."""
    if spec.kind == "policy":
        return prior_policy(view, spec)
    return llm_reward(view, spec)


def load_spec(path) -> BehaviorSpec:
    from pathlib import Path

    return BehaviorSpec.from_json(Path(path).read_text(encoding="utf-8"))
