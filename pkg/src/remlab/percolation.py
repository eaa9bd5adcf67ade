"""First/last-passage percolation with Exponential(1) weights.

Two graphs: the binary tree of depth n (min and max path weight over the
2^n leaves) and the n-dimensional hypercube (minimum weight over the n!
monotone paths from all-zeros to all-ones, by dynamic programming over
subsets in popcount order, with an exhaustive small-n oracle).

Edge weights are pure functions of the edge identity through the keyed
PRF, so the DP, the exhaustive oracle, and any chunked enumeration see
identical weights without ever storing them.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import numba
from numba import njit

from . import rng
from .models import BudgetExceededError
from .rng import _GOLD_T, _mix, _u01, U64

__all__ = [
    "PercolationResult",
    "tree_fpp_lpp",
    "hypercube_min_path",
    "hypercube_exhaustive",
    "TREE_MAX_N",
    "CUBE_MAX_N",
    "CUBE_EXHAUSTIVE_MAX_N",
]

TREE_MAX_N = 28
CUBE_MAX_N = 24
CUBE_EXHAUSTIVE_MAX_N = 8

# Full-width tree expansion cap; larger n stream over top-prefix chunks.
_TREE_EXPAND_LIMIT = 1 << 24


@dataclass(frozen=True)
class PercolationResult:
    optimum: float
    normalized: float      # optimum / n
    n: int
    seed: int
    mode: str              # "min" | "max"


def _tree_level_key(seed: int, level: int) -> int:
    return rng.stream_key(seed, rng.DOM_TREE_PERC, level)


def tree_fpp_lpp(n: int, seed: int, weight_offset: float = 0.0,
                 ) -> tuple[PercolationResult, PercolationResult]:
    """Exact min and max path weight over all 2^n leaves of the binary tree.

    ``weight_offset`` adds a constant to every edge weight (shifts every
    path weight by exactly offset * n; used by shift-invariance checks).
    """
    if not 1 <= n <= TREE_MAX_N:
        raise BudgetExceededError(f"tree percolation supports n <= {TREE_MAX_N}")
    if (1 << n) <= _TREE_EXPAND_LIMIT:
        s = np.zeros(1)
        for level in range(1, n + 1):
            s = np.repeat(s, 2)
            s += rng.exponentials(_tree_level_key(seed, level), 0, s.shape[0])
            if weight_offset:
                s += weight_offset
        lo, hi = float(s.min()), float(s.max())
    else:
        top = n - 24
        lo, hi = math.inf, -math.inf
        pre = np.zeros(1)
        for level in range(1, top + 1):
            pre = np.repeat(pre, 2)
            pre += rng.exponentials(_tree_level_key(seed, level), 0, pre.shape[0])
            if weight_offset:
                pre += weight_offset
        for prefix in range(1 << top):
            s = np.full(1, pre[prefix])
            for level in range(top + 1, n + 1):
                width = s.shape[0] * 2
                start = prefix * width
                s = np.repeat(s, 2)
                s += rng.exponentials(_tree_level_key(seed, level), start, width)
                if weight_offset:
                    s += weight_offset
            lo = min(lo, float(s.min()))
            hi = max(hi, float(s.max()))
    return (PercolationResult(lo, lo / n, n, seed, "min"),
            PercolationResult(hi, hi / n, n, seed, "max"))


@njit(cache=True)
def _cube_dp(key, n, offset):
    size = 1 << n
    dist = np.empty(size)
    dist[0] = 0.0
    pc = np.zeros(size, dtype=np.int8)
    for m in range(1, size):
        pc[m] = pc[m >> 1] + (m & 1)
    order = np.argsort(pc, kind="mergesort")
    for oi in range(1, size):
        s = order[oi]
        best = np.inf
        rest = s
        while rest:
            low = rest & (-rest)
            bit = 0
            b = low
            while b > 1:
                b >>= 1
                bit += 1
            prev = s ^ low
            h = _mix(_mix(U64(key) + U64(prev) * _GOLD_T) + U64(bit) * _GOLD_T)
            w = -np.log1p(-_u01(h)) + offset
            c = dist[prev] + w
            if c < best:
                best = c
            rest ^= low
        dist[s] = best
    return dist[size - 1]


def _cube_key(seed: int) -> int:
    return rng.stream_key(seed, rng.DOM_CUBE_PERC, 0)


def hypercube_min_path(n: int, seed: int, weight_offset: float = 0.0) -> PercolationResult:
    """Exact minimum weight over monotone 0->1 paths on the n-cube.

    Dynamic program over vertex subsets in popcount order; the edge between
    a vertex and the vertex with one more set bit is keyed by (vertex,
    added coordinate).
    """
    if not 1 <= n <= CUBE_MAX_N:
        raise BudgetExceededError(
            f"hypercube DP holds 2^n distances; supports n <= {CUBE_MAX_N}")
    val = float(_cube_dp(np.uint64(_cube_key(seed)), n, float(weight_offset)))
    return PercolationResult(val, val / n, n, seed, "min")


def hypercube_exhaustive(n: int, seed: int, weight_offset: float = 0.0) -> PercolationResult:
    """Brute-force minimum over all n! coordinate orders (oracle for the DP)."""
    if not 1 <= n <= CUBE_EXHAUSTIVE_MAX_N:
        raise BudgetExceededError(
            f"exhaustive search enumerates n! paths; supports n <= {CUBE_EXHAUSTIVE_MAX_N}")
    key = _cube_key(seed)
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.uint64)
    verts = np.zeros(perms.shape[0], dtype=np.uint64)
    total = np.zeros(perms.shape[0])
    for step in range(n):
        bits = perms[:, step]
        total += rng.exponentials_at2(key, verts, bits) + weight_offset
        verts = verts | (np.uint64(1) << bits)
    val = float(total.min())
    return PercolationResult(val, val / n, n, seed, "min")
