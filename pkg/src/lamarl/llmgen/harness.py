"""Function-generation success rates over prompt variants."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

from .client import LLMError
from .pipeline import PipelineOutcome, TranscriptLog, run_pipeline
from .prompt import PromptBundle

# variant name -> (include_cot, include_apis)
VARIANTS = {
    "full": (True, True),
    "no_apis": (True, False),
    "no_cot": (False, True),
    "neither": (False, False),
}


@dataclass
class VariantResult:
    variant: str
    successes: int
    trials: int
    failures: list = field(default_factory=list)  # (trial, reason)

    @property
    def fraction(self) -> Fraction:
        return Fraction(self.successes, self.trials)

    @property
    def rate(self) -> float:
        return self.successes / self.trials

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "successes": self.successes,
            "trials": self.trials,
            "rate": self.rate,
            "failures": [list(f) for f in self.failures],
        }


def _trial(client, bundle: PromptBundle, variant: str, trial: int, transcripts, temperature) -> tuple[bool, str]:
    try:
        out: PipelineOutcome = run_pipeline(client, bundle, transcripts, temperature, {"variant": variant, "trial": trial})
    except LLMError as exc:
        return False, f"{type(exc).__name__}: {exc}"
    if out.error:
        return False, out.error
    if not out.review.passed:
        gaps = list(out.review.missing_skills) + list(out.review.missing_subgoals)
        return False, "review failed: missing " + ", ".join(gaps)
    if not out.matches_reference():
        return False, "primitive sets differ from the reference"
    return True, ""


def success_rate_harness(
    client,
    bundle: PromptBundle,
    n_trials: int,
    variants: Sequence[str] = tuple(VARIANTS),
    transcripts: Optional[TranscriptLog] = None,
    temperature: float = 1.0,
    max_workers: int = 1,
) -> dict:
    """Run the whole pipeline ``n_trials`` times per variant; returns {variant: VariantResult}.

    Trials run in order when ``max_workers`` is 1, which keeps scripted clients aligned.
    """
    if n_trials < 1:
        raise ValueError(f"n_trials must be >= 1, got {n_trials}")
    unknown = [v for v in variants if v not in VARIANTS]
    if unknown:
        raise ValueError(f"unknown prompt variants {unknown}; choose from {list(VARIANTS)}")
    results = {}
    for variant in variants:
        b = bundle.variant(*VARIANTS[variant])
        if max_workers == 1:
            outcomes = [_trial(client, b, variant, k, transcripts, temperature) for k in range(n_trials)]
        else:
            with ThreadPoolExecutor(max_workers=max_workers) as pool:
                outcomes = list(pool.map(lambda k: _trial(client, b, variant, k, transcripts, temperature),
                                         range(n_trials)))
        res = VariantResult(variant, sum(ok for ok, _ in outcomes), n_trials)
        res.failures = [(k, why) for k, (ok, why) in enumerate(outcomes) if not ok]
        results[variant] = res
    return results
