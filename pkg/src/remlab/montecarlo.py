"""Trial orchestration: derived per-trial seeds and the universal
statistical result record."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .rng import trial_seed

__all__ = ["MCEstimate", "trial_seeds", "run_trials", "estimate"]


@dataclass(frozen=True)
class MCEstimate:
    """Sample mean with its standard error and full provenance."""

    mean: float
    stderr: float
    trials: int
    master_seed: int

    def z_to(self, target: float) -> float:
        if self.stderr == 0.0:
            return math.inf if self.mean != target else 0.0
        return (self.mean - target) / self.stderr


def trial_seeds(master_seed: int, trials: int) -> list[int]:
    """Independent derived seeds for trials 0..trials-1."""
    return [trial_seed(master_seed, t) for t in range(trials)]


def run_trials(fn: Callable[[int], float], trials: int, master_seed: int) -> np.ndarray:
    """Evaluate ``fn`` on each derived trial seed; order-independent by
    construction since every trial is a pure function of its own seed."""
    return np.array([fn(s) for s in trial_seeds(master_seed, trials)], dtype=float)


def estimate(fn: Callable[[int], float], trials: int, master_seed: int) -> MCEstimate:
    vals = run_trials(fn, trials, master_seed)
    se = float(vals.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return MCEstimate(float(vals.mean()), se, trials, master_seed)
