"""Maxima, counting variables, barrier-thinned statistics, extremal-window
summaries, and the two-level Poisson cluster (cascade) sampler.

All operations are pure functions of (model, seed): rerunning with the
same arguments reproduces every number bitwise, and trial batches can be
parallelized through derived per-trial seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import stats as sstats

from . import rng
from .models import (BudgetExceededError, DEFAULT_LEAF_BUDGET, ModelSpec,
                     _EXPAND_LIMIT, energy_chunks, leaf_path, leaf_profile)
from .theory import beta_c

__all__ = [
    "Line", "Envelope", "LogLine", "barrier_values",
    "ScanMax", "scan_max",
    "CountingResult", "count_rem_threshold", "count_exceedances",
    "count_below_barrier",
    "WindowCounts", "window_counts",
    "ProfileStats", "argmax_profile_stats",
    "CascadeSample", "sample_cascade", "sample_atoms",
]


# ----------------------------------------------------------------------
# Barriers


@dataclass(frozen=True)
class Line:
    """Linear barrier l -> slope*l + offset."""
    slope: float
    offset: float = 0.0


@dataclass(frozen=True)
class Envelope:
    """Entropic envelope l -> -min(l, depth-l)^gamma, gamma in (0, 1/2)."""
    gamma: float
    depth: int

    def __post_init__(self):
        if not (0.0 < self.gamma < 0.5):
            raise ValueError("envelope exponent must lie strictly in (0, 1/2)")


@dataclass(frozen=True)
class LogLine:
    """Barrier l -> beta_c*l + k_const*ln(depth)."""
    k_const: float
    depth: int


def barrier_values(barrier, depth: int) -> np.ndarray:
    """Barrier evaluated at the interior levels l = 1..depth-1."""
    ls = np.arange(1, depth)
    if barrier is None:
        return np.full(depth - 1, np.inf)
    if isinstance(barrier, Line):
        return barrier.slope * ls + barrier.offset
    if isinstance(barrier, Envelope):
        return -np.minimum(ls, depth - ls).astype(float) ** barrier.gamma
    if isinstance(barrier, LogLine):
        return beta_c() * ls + barrier.k_const * math.log(depth)
    raise TypeError(f"unknown barrier {barrier!r}")


# ----------------------------------------------------------------------
# Maximum scan


@dataclass(frozen=True)
class ScanMax:
    value: float
    leaf: tuple[int, ...]
    profile: np.ndarray
    rank: int


def scan_max(model: ModelSpec, seed: int,
             leaf_budget: int = DEFAULT_LEAF_BUDGET) -> ScanMax:
    """Exact maximum energy over all leaves of one realization.

    Ties break to the first leaf in DFS order.  The argmax path profile is
    recomputed from the leaf's node keys, so it is exact.
    """
    best = -math.inf
    best_rank = 0
    for start, energies in energy_chunks(model, seed, leaf_budget=leaf_budget):
        i = int(np.argmax(energies))
        if energies[i] > best:
            best = float(energies[i])
            best_rank = start + i
    prof = leaf_profile(model, seed, best_rank)
    return ScanMax(best, leaf_path(model, best_rank), prof, best_rank)


# ----------------------------------------------------------------------
# Counting variables


@dataclass(frozen=True)
class CountingResult:
    count: int
    total_leaves: int
    thresholds: tuple

    def __post_init__(self):
        assert 0 <= self.count <= self.total_leaves


def count_rem_threshold(model: ModelSpec, seed: int, lam: float,
                        leaf_budget: int = DEFAULT_LEAF_BUDGET) -> CountingResult:
    """Count leaves with energy >= lam * n (a single global threshold)."""
    if not math.isfinite(lam):
        if lam == -math.inf:
            return CountingResult(model.leaf_count, model.leaf_count, (lam,))
        return CountingResult(0, model.leaf_count, (lam,))
    cut = lam * model.n
    count = 0
    for _, energies in energy_chunks(model, seed, leaf_budget=leaf_budget):
        count += int(np.count_nonzero(energies >= cut))
    return CountingResult(count, model.leaf_count, (lam,))


def _block_sizes(depth: int, k: int) -> list[int]:
    base = depth // k
    if base == 0:
        raise ValueError(f"cannot coarse-grain depth {depth} into {k} blocks")
    return [base] * (k - 1) + [depth - base * (k - 1)]


def count_exceedances(model: ModelSpec, seed: int, k: int, lams,
                      leaf_budget: int = DEFAULT_LEAF_BUDGET) -> CountingResult:
    """Count leaves whose coarse-grained block sums X^l all exceed lam_l * n
    for blocks l = 2..k (the first block is deliberately unconstrained).

    Levels are grouped into k blocks, floor-sized first and the remainder
    absorbed by the last.  Subtrees are pruned as soon as a block fails, so
    the realized field is identical to full enumeration.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    lams = tuple(float(x) for x in lams)
    if len(lams) != k - 1:
        raise ValueError(f"need {k - 1} thresholds for blocks 2..{k}")
    if any(not math.isfinite(x) and x > 0 for x in lams):
        return CountingResult(0, model.leaf_count, lams)
    if model.leaf_count > min(leaf_budget, _EXPAND_LIMIT):
        raise BudgetExceededError(
            f"count_exceedances enumerates up to {model.leaf_count} leaves; "
            f"budget is {min(leaf_budget, _EXPAND_LIMIT)}")
    sizes = _block_sizes(model.depth, k)
    sig = model.sigmas
    codes = np.zeros(1, dtype=np.uint64)
    bsum = np.zeros(1)
    level = 0
    for b, size in enumerate(sizes, start=1):
        for _ in range(size):
            level += 1
            br = model.branching[level - 1]
            codes = np.repeat(codes, br) * np.uint64(br)
            codes += np.tile(np.arange(br, dtype=np.uint64), codes.shape[0] // br)
            bsum = np.repeat(bsum, br)
            bsum += sig[level - 1] * rng.normals_at(
                model.level_key(seed, level), codes)
        if b >= 2:
            keep = bsum >= lams[b - 2] * model.n
            codes = codes[keep]
            if codes.shape[0] == 0:
                return CountingResult(0, model.leaf_count, lams)
            bsum = bsum[keep]
        bsum = np.zeros(codes.shape[0])
    return CountingResult(int(codes.shape[0]), model.leaf_count, lams)


def count_below_barrier(model: ModelSpec, seed: int, barrier,
                        a: float, leaf_budget: int = DEFAULT_LEAF_BUDGET) -> CountingResult:
    """Count leaves with energy >= a whose partial sums stay at or below the
    barrier at every interior level 1..depth-1."""
    if model.leaf_count > min(leaf_budget, _EXPAND_LIMIT):
        raise BudgetExceededError(
            f"count_below_barrier enumerates up to {model.leaf_count} leaves; "
            f"budget is {min(leaf_budget, _EXPAND_LIMIT)}")
    bar = barrier_values(barrier, model.depth)
    sig = model.sigmas
    s = np.zeros(1)
    codes = np.zeros(1, dtype=np.uint64)
    for level in range(1, model.depth + 1):
        br = model.branching[level - 1]
        codes = np.repeat(codes, br) * np.uint64(br)
        codes += np.tile(np.arange(br, dtype=np.uint64), codes.shape[0] // br)
        s = np.repeat(s, br)
        s += sig[level - 1] * rng.normals_at(model.level_key(seed, level), codes)
        if level <= model.depth - 1:
            keep = s <= bar[level - 1]
            codes = codes[keep]
            if codes.shape[0] == 0:
                return CountingResult(0, model.leaf_count, (("barrier", barrier), ("a", a)))
            s = s[keep]
    count = int(np.count_nonzero(s >= a))
    return CountingResult(count, model.leaf_count, (("barrier", barrier), ("a", a)))


# ----------------------------------------------------------------------
# Window counts


@dataclass(frozen=True)
class WindowCounts:
    recentering: float
    edges: tuple[float, ...]
    counts: tuple[int, ...]
    total_leaves: int


def window_counts(model: ModelSpec, seed: int, a_n: float, edges,
                  leaf_budget: int = DEFAULT_LEAF_BUDGET) -> WindowCounts:
    """Counts of recentred energies X - a_n in the consecutive windows
    [edges[i], edges[i+1]); empty edge list gives empty counts."""
    if not math.isfinite(a_n):
        raise ValueError("recentering must be finite")
    edges = tuple(float(e) for e in edges)
    if any(x >= y for x, y in zip(edges, edges[1:])):
        raise ValueError("window edges must be strictly increasing")
    if len(edges) < 2:
        return WindowCounts(a_n, edges, (), model.leaf_count)
    counts = np.zeros(len(edges) - 1, dtype=np.int64)
    bins = np.asarray(edges)
    for _, energies in energy_chunks(model, seed, leaf_budget=leaf_budget):
        h, _ = np.histogram(energies - a_n, bins=bins)
        counts += h
    return WindowCounts(a_n, edges, tuple(int(c) for c in counts),
                        model.leaf_count)


# ----------------------------------------------------------------------
# Argmax profiles


@dataclass(frozen=True)
class ProfileStats:
    """Per-level statistics of normalized argmax profiles S_l - (l/depth) S_depth."""

    depth: int
    trials: int
    mean: np.ndarray                 # length depth+1
    quantiles: dict[float, np.ndarray]

    @property
    def interior_levels(self) -> range:
        return range(1, self.depth)

    def midpoint_mean(self) -> float:
        """Mean normalized value at the middle level; NaN without interior levels."""
        if self.depth < 2:
            return math.nan
        return float(self.mean[self.depth // 2])


def argmax_profile_stats(model: ModelSpec, seeds: Sequence[int],
                         quantiles=(0.25, 0.5, 0.75),
                         leaf_budget: int = DEFAULT_LEAF_BUDGET) -> ProfileStats:
    """Empirical bridge of the maximizer over a batch of trials.

    Each trial contributes the argmax profile normalized by its straight
    line to the terminal value; this exhibits entropic repulsion as a
    strictly negative interior mean.
    """
    if len(seeds) < 100:
        raise ValueError("argmax profile statistics require >= 100 trials")
    profs = np.empty((len(seeds), model.depth + 1))
    frac = np.arange(model.depth + 1) / model.depth
    for i, s in enumerate(seeds):
        sm = scan_max(model, s, leaf_budget=leaf_budget)
        profs[i] = sm.profile - frac * sm.profile[-1]
    qs = {q: np.quantile(profs, q, axis=0) for q in quantiles}
    return ProfileStats(model.depth, len(seeds), profs.mean(axis=0), qs)


# ----------------------------------------------------------------------
# Derrida-Ruelle cascade (truncated window sampler)


@dataclass(frozen=True)
class CascadeSample:
    """Two-level Poisson cluster sample on a truncated window.

    ``points`` are the superposed sums atom + offset (all >= window lower
    edge).  Clusters are generated from the top down; at most
    ``cluster_budget`` points per cluster are materialized (always the
    largest ones) and ``truncated`` flags any clipped cluster.
    """

    atoms: np.ndarray
    offsets: tuple[np.ndarray, ...]
    window: tuple[float, float]
    truncated: bool

    @property
    def points(self) -> np.ndarray:
        if not self.offsets:
            return np.empty(0)
        return np.concatenate([a + off for a, off in zip(self.atoms, self.offsets)])

    def counts_in(self, lo: float, hi: float) -> tuple[int, tuple[int, ...]]:
        """Superposed count in [lo, hi) and the per-cluster breakdown."""
        per = tuple(int(np.count_nonzero((a + off >= lo) & (a + off < hi)))
                    for a, off in zip(self.atoms, self.offsets))
        return sum(per), per


def _truncated_exp_points(key: int, offset_start: int, rate: float,
                          lo: float, hi: float, budget: int) -> tuple[np.ndarray, bool]:
    """Points of a PPP with intensity e^(-rate*t) dt on [lo, hi], largest first.

    Generated by inverting the tail mass against cumulative Exp(1) arrivals,
    stopping at the window bottom or at the budget.
    """
    tail_hi = math.exp(-rate * hi) / rate
    total = math.exp(-rate * lo) / rate - tail_hi
    chunks = []
    gamma = 0.0
    drawn = 0
    while drawn < budget:
        m = min(4096, budget - drawn)
        gs = gamma + np.cumsum(rng.exponentials(key, offset_start + drawn, m))
        cut = int(np.searchsorted(gs, total))
        chunks.append(-np.log(rate * (gs[:cut] + tail_hi)) / rate)
        if cut < m:
            return np.concatenate(chunks) if chunks else np.empty(0), False
        gamma = float(gs[-1])
        drawn += m
    return np.concatenate(chunks) if chunks else np.empty(0), True


def sample_atoms(b1: float, window: tuple[float, float], seed: int,
                 budget: int = 100_000) -> np.ndarray:
    """Poisson process with intensity e^(-b1*t) dt restricted to the window."""
    lo, hi = window
    if not lo < hi:
        raise ValueError("truncation window is empty")
    if b1 <= 0:
        raise ValueError("intensity exponent must be positive")
    pts, truncated = _truncated_exp_points(
        rng.stream_key(seed, rng.DOM_CASCADE, 0), 0, b1, lo, hi, budget)
    if truncated:
        raise BudgetExceededError(
            f"window [{lo}, {hi}] holds more than {budget} first-level atoms")
    return pts


def sample_cascade(b1: float, b2: float, window: tuple[float, float], seed: int,
                   cluster_budget: int = 100_000) -> CascadeSample:
    """Two-level cascade: first-level atoms with intensity e^(-b1*t) on the
    window, and per-atom clusters with intensity e^(-b2*t) on
    [lower_edge - atom, upper_edge], returned as superposed sums.

    Every returned point lies above the window's lower edge.  Per-cluster
    truncated mass can be astronomically large when b2*(atom - lower_edge)
    is big; clusters are therefore materialized top-down under a point
    budget, with clipping recorded in ``truncated``.
    """
    lo, hi = window
    if b2 <= 0:
        raise ValueError("intensity exponent must be positive")
    atoms = sample_atoms(b1, window, seed, budget=cluster_budget)
    offsets = []
    clipped = False
    for i, xi in enumerate(atoms):
        key = rng.stream_key(seed, rng.DOM_CASCADE, 1 + i)
        pts, tr = _truncated_exp_points(key, 0, b2, lo - xi, hi, cluster_budget)
        offsets.append(pts)
        clipped = clipped or tr
    return CascadeSample(atoms, tuple(offsets), (lo, hi), clipped)
