"""Constraint analysis, function generation and mechanical review.

The model answers in JSON. Step requests carry a ``[step:<name>]`` marker so
fixture-backed clients can tell the steps apart.
"""
from __future__ import annotations

import json
import logging
import re
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

from ..behavior import POLICY_PRIMITIVES, REWARD_PRIMITIVES, BehaviorSpec, BehaviorSpecError
from .prompt import PromptBundle, assemble_prompt

log = logging.getLogger(__name__)

ANALYSIS_STEP = "constraint_analysis"
GENERATION_STEP = "function_generation"

SYSTEM_MESSAGE = "You design control and reward functions for robot swarms. Reply with a single JSON object."

# Normalized skill / sub-goal text -> primitive. Unknown names fail review.
MAPPING_VERSION = 1
SKILL_TO_PRIMITIVE = {
    "movement towards the target region": "attract_target",
    "movement toward the target region": "attract_target",
    "move towards the target region": "attract_target",
    "collision avoidance": "repel_neighbors",
    "synchronization with neighbors": "sync_velocity",
    "synchronisation with neighbours": "sync_velocity",
}
SUBGOAL_TO_PRIMITIVE = {
    "entering the target region": "inside_region",
    "collision avoidance": "collision_free",
    "exploration of unoccupied cells": "exploration_done",
}

REFERENCE_POLICY_PRIMITIVES = frozenset(POLICY_PRIMITIVES)
REFERENCE_REWARD_PRIMITIVES = frozenset(REWARD_PRIMITIVES)

ANALYSIS_REQUEST = """[step:constraint_analysis]
Answer the task analysis as JSON with these keys:
  "constraints": list of constraint names,
  "basic": constraint numbers (1-based) that are basic,
  "complex": constraint numbers that are complex,
  "basic_skills": list of skill names a robot needs, derived from the basic constraints,
  "key_subgoals": constraint numbers whose joint satisfaction means the task is done."""

GENERATION_REQUEST = """[step:function_generation]
Task analysis:
{analysis}

Build the two functions from the primitives below. Use one force term per basic skill and one
condition per key sub-goal. Reply as JSON: {{"policy": <spec>, "reward": <spec>}} where
  policy = {{"kind": "policy", "combine": "sum", "terms": [{{"primitive": ..., "gain": float, "range": float}}]}}
  reward = {{"kind": "reward", "combine": "all-of", "terms": [{{"primitive": ..., "threshold": float or null}}]}}
Force primitives: {policy_primitives}
Condition primitives: {reward_primitives}
Ranges must not exceed the sensing radius."""


class PipelineError(ValueError):
    def __init__(self, message: str, transcript: str = ""):
        super().__init__(message)
        self.transcript = transcript


class AnalysisParseError(PipelineError):
    pass


class GenerationError(PipelineError):
    pass


def normalize(text: str) -> str:
    text = re.sub(r"[^a-z0-9 ]+", " ", str(text).lower())
    return " ".join(text.split())


@dataclass(frozen=True)
class ConstraintAnalysis:
    constraints: tuple
    basic: tuple
    complex: tuple
    basic_skills: tuple
    key_subgoals: tuple

    def __post_init__(self):
        for name in ("constraints", "basic", "complex", "basic_skills", "key_subgoals"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if set(self.basic) & set(self.complex):
            raise ValueError(f"constraints marked both basic and complex: {sorted(set(self.basic) & set(self.complex))}")
        if set(self.basic) | set(self.complex) != set(self.constraints):
            raise ValueError("basic and complex constraints must together cover the constraint list")
        if self.basic_skills and not self.basic:
            raise ValueError("basic skills listed without any basic constraint")
        if not self.key_subgoals:
            raise ValueError("no key sub-goals")
        stray = set(self.key_subgoals) - set(self.constraints)
        if stray:
            raise ValueError(f"key sub-goals that are not constraints: {sorted(stray)}")

    def to_dict(self) -> dict:
        return {k: list(v) for k, v in asdict(self).items()}


@dataclass(frozen=True)
class GenerationResult:
    policy_spec: BehaviorSpec
    reward_spec: BehaviorSpec
    raw_transcript: str
    model_id: str


@dataclass(frozen=True)
class ReviewReport:
    policy_ok: bool
    reward_ok: bool
    missing_skills: tuple = ()
    missing_subgoals: tuple = ()

    @property
    def passed(self) -> bool:
        return self.policy_ok and self.reward_ok

    def to_dict(self) -> dict:
        return {
            "policy_ok": self.policy_ok,
            "reward_ok": self.reward_ok,
            "missing_skills": list(self.missing_skills),
            "missing_subgoals": list(self.missing_subgoals),
        }


class TranscriptLog:
    """Append-only JSON-lines log of every model exchange."""

    def __init__(self, path: Union[str, Path, None] = None):
        self.path = Path(path) if path is not None else None
        self.records: list = []
        self._lock = threading.Lock()
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)

    def append(self, record: dict) -> None:
        record = {"timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"), **record}
        with self._lock:
            self.records.append(record)
            if self.path is not None:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record) + "\n")


def extract_json(text: str) -> dict:
    """The outermost JSON object in ``text`` (code fences and prose around it are ignored)."""
    start, end = text.find("{"), text.rfind("}")
    if start < 0 or end <= start:
        raise ValueError("no JSON object in the reply")
    data = json.loads(text[start : end + 1])
    if not isinstance(data, dict):
        raise ValueError("reply JSON is not an object")
    return data


def _ask(client, prompt: str, request: str, step: str, transcripts: Optional[TranscriptLog],
         temperature: float, tag: dict) -> str:
    messages = [{"role": "system", "content": SYSTEM_MESSAGE}, {"role": "user", "content": f"{prompt}\n{request}"}]
    reply = client.complete(messages, temperature=temperature)
    if transcripts is not None:
        transcripts.append({"model": getattr(client, "model_id", "unknown"), "step": step,
                            "messages": messages, "response": reply, **tag})
    return reply


def _resolve(items, constraints: list, what: str) -> list:
    out = []
    for item in items:
        if isinstance(item, bool):
            raise ValueError(f"{what}: unexpected boolean")
        if isinstance(item, int) or (isinstance(item, str) and item.strip().isdigit()):
            k = int(item)
            if not 1 <= k <= len(constraints):
                raise ValueError(f"{what}: constraint number {k} out of range 1..{len(constraints)}")
            out.append(constraints[k - 1])
        elif isinstance(item, str):
            match = [c for c in constraints if normalize(c) == normalize(item)]
            if not match:
                raise ValueError(f"{what}: {item!r} is not one of the constraints")
            out.append(match[0])
        else:
            raise ValueError(f"{what}: unexpected entry {item!r}")
    return list(dict.fromkeys(out))


def parse_analysis(text: str) -> ConstraintAnalysis:
    if not text.strip():
        raise AnalysisParseError("empty reply", text)
    try:
        data = extract_json(text)
        constraints = [str(c) for c in data["constraints"]]
        return ConstraintAnalysis(
            constraints=constraints,
            basic=_resolve(data.get("basic", []), constraints, "basic"),
            complex=_resolve(data.get("complex", []), constraints, "complex"),
            basic_skills=[str(s) for s in data.get("basic_skills", [])],
            key_subgoals=_resolve(data.get("key_subgoals", []), constraints, "key_subgoals"),
        )
    except (ValueError, KeyError, TypeError) as exc:
        raise AnalysisParseError(f"cannot parse the constraint analysis: {exc}", text) from None


def run_constraint_analysis(client, prompt: str, transcripts: Optional[TranscriptLog] = None,
                            temperature: float = 0.0, tag: Optional[dict] = None) -> ConstraintAnalysis:
    reply = _ask(client, prompt, ANALYSIS_REQUEST, ANALYSIS_STEP, transcripts, temperature, tag or {})
    return parse_analysis(reply)


def parse_generation(text: str, analysis: ConstraintAnalysis, model_id: str) -> GenerationResult:
    try:
        data = extract_json(text)
        policy = BehaviorSpec.from_dict(data["policy"])
        reward = BehaviorSpec.from_dict(data["reward"])
    except BehaviorSpecError as exc:
        raise GenerationError(f"invalid behaviour spec: {exc}", text) from None
    except (ValueError, KeyError, TypeError) as exc:
        raise GenerationError(f"cannot parse the generated functions: {exc}", text) from None
    if policy.kind != "policy" or reward.kind != "reward":
        raise GenerationError(f"expected a policy and a reward spec, got {policy.kind!r} and {reward.kind!r}", text)
    if not analysis.basic_skills:
        policy = BehaviorSpec("policy", ())
    return GenerationResult(policy, reward, text, model_id)


def generate_functions(client, analysis: ConstraintAnalysis, bundle: PromptBundle,
                       transcripts: Optional[TranscriptLog] = None, temperature: float = 0.0,
                       tag: Optional[dict] = None) -> GenerationResult:
    request = GENERATION_REQUEST.format(
        analysis=json.dumps(analysis.to_dict(), indent=2),
        policy_primitives=", ".join(POLICY_PRIMITIVES),
        reward_primitives=", ".join(REWARD_PRIMITIVES),
    )
    reply = _ask(client, assemble_prompt(bundle), request, GENERATION_STEP, transcripts, temperature, tag or {})
    return parse_generation(reply, analysis, getattr(client, "model_id", "unknown"))


def review_functions(result: GenerationResult, analysis: ConstraintAnalysis) -> ReviewReport:
    """Every skill must map to a force term and every sub-goal to a condition."""
    have_policy = result.policy_spec.primitives
    have_reward = result.reward_spec.primitives
    missing_skills = tuple(s for s in analysis.basic_skills if SKILL_TO_PRIMITIVE.get(normalize(s)) not in have_policy)
    missing_subgoals = tuple(
        g for g in analysis.key_subgoals if SUBGOAL_TO_PRIMITIVE.get(normalize(g)) not in have_reward
    )
    return ReviewReport(not missing_skills, not missing_subgoals, missing_skills, missing_subgoals)


@dataclass
class PipelineOutcome:
    analysis: Optional[ConstraintAnalysis] = None
    result: Optional[GenerationResult] = None
    review: Optional[ReviewReport] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None and self.review is not None and self.review.passed

    def matches_reference(self) -> bool:
        return (
            self.ok
            and self.result.policy_spec.primitives == REFERENCE_POLICY_PRIMITIVES
            and self.result.reward_spec.primitives == REFERENCE_REWARD_PRIMITIVES
        )


def run_pipeline(client, bundle: PromptBundle, transcripts: Optional[TranscriptLog] = None,
                 temperature: float = 0.0, tag: Optional[dict] = None,
                 confirm: Optional[Callable[[PipelineOutcome], bool]] = None) -> PipelineOutcome:
    """All steps; per-step failures become ``outcome.error`` instead of raising.

    ``confirm`` is the human-review hook: it sees the report and may veto.
    """
    out = PipelineOutcome()
    try:
        out.analysis = run_constraint_analysis(client, assemble_prompt(bundle), transcripts, temperature, tag)
        out.result = generate_functions(client, out.analysis, bundle, transcripts, temperature, tag)
    except PipelineError as exc:
        out.error = f"{type(exc).__name__}: {exc}"
        return out
    out.review = review_functions(out.result, out.analysis)
    if confirm is not None and not confirm(out):
        out.error = "rejected by human review"
    return out
