"""Convergence detection on uniformity curves and the sample-efficiency ratio."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

WINDOW = 50
BAND = 0.05


def trailing_mean(values: Sequence[float], window: int = WINDOW) -> np.ndarray:
    """Mean of each full trailing window; entry k covers values[k : k + window]."""
    v = np.asarray(values, dtype=float)
    if len(v) < window:
        return np.empty(0)
    c = np.concatenate([[0.0], np.cumsum(v)])
    return (c[window:] - c[:-window]) / window


def convergence_episode(m2: Sequence[float], window: int = WINDOW, band: float = BAND) -> Optional[int]:
    """Number of episodes until the trailing mean of M2 first comes within ``band`` of its final value.

    Returns None (not converged) when the curve is shorter than two windows or
    only settles inside the last window, where there is nothing left to confirm it.
    """
    tm = trailing_mean(m2, window)
    if len(tm) < window + 1:
        return None
    final = tm[-1]
    close = np.abs(tm - final) <= band * abs(final)
    first = int(np.argmax(close))
    if first > len(tm) - 1 - window:
        return None
    return first + window  # episodes elapsed at the end of that window


@dataclass(frozen=True)
class SEResult:
    seed: int
    episodes_with: Optional[int]
    episodes_without: Optional[int]
    n_episodes: int

    @property
    def status(self) -> str:
        if self.episodes_with is None:
            return "undefined: run with prior did not converge"
        if self.episodes_without is None:
            return "censored: run without prior did not converge"
        return "ok"

    @property
    def se(self) -> Optional[float]:
        """episodes_without / episodes_with; None unless both runs converged."""
        if self.episodes_with is None or self.episodes_without is None:
            return None
        return self.episodes_without / self.episodes_with

    @property
    def se_lower_bound(self) -> Optional[float]:
        """For a censored pair the unconverged run is credited with the full run length."""
        if self.episodes_with is None:
            return None
        return (self.episodes_without or self.n_episodes) / self.episodes_with

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "episodes_with": self.episodes_with,
            "episodes_without": self.episodes_without,
            "SE": self.se,
            "SE_lower_bound": self.se_lower_bound,
            "status": self.status,
        }


def sample_efficiency(m2_with: Sequence[float], m2_without: Sequence[float], seed: int = 0,
                      window: int = WINDOW, band: float = BAND) -> SEResult:
    return SEResult(
        seed,
        convergence_episode(m2_with, window, band),
        convergence_episode(m2_without, window, band),
        max(len(m2_with), len(m2_without)),
    )


def median_se(results: Sequence[SEResult]) -> Optional[float]:
    """Median of per-seed SE, using the lower bound for censored pairs; None if any pair is undefined."""
    values = [r.se_lower_bound for r in results]
    if not values or any(v is None for v in values):
        return None
    return float(np.median(values))
