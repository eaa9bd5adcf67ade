"""Tree-structured Gaussian field models and streaming samplers.

A model is a rooted tree with ``depth`` levels.  Level ``l`` has branching
factor ``b_l`` and attaches to every node an independent centered Gaussian
with variance ``v_l``; the energy of a leaf is the sum of the increments
along its root-to-leaf path.  The level variances always sum to the size
parameter ``n``, so every leaf energy has variance ``n``.

Supported variants:

* ``rem``    -- one level, branching 2^n, variance n (i.i.d. energies);
* ``grem``   -- K levels with weights a_1..a_K (variance a_l * n each) and
  total branching 2^n split across levels;
* ``brw``    -- n levels, binary branching, unit variances (the
  hierarchical field / directed polymer on the binary tree);
* ``interp`` -- ceil(n^alpha) levels interpolating between the two.

Every increment is a pure function of ``(master_seed, level, node code)``
through the counter-based generator in :mod:`remlab.rng`, so enumeration
order, chunk size and thread count never change a realized field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from . import rng

__all__ = [
    "ModelSpec",
    "ModelValidationError",
    "BudgetExceededError",
    "UnsupportedModelError",
    "DEFAULT_LEAF_BUDGET",
    "make_model",
    "rem_model",
    "grem_model",
    "brw_model",
    "interpolating_model",
    "node_increment",
    "leaf_path",
    "leaf_rank",
    "stream_leaves",
    "iter_energy_blocks",
    "iter_level_sums",
    "energy_chunks",
    "leaf_profile",
    "overlap_fraction",
]

DEFAULT_LEAF_BUDGET = 1 << 28

# Full-width level expansion is used when the leaf count fits in memory;
# beyond this the samplers fall back to fixed-size leaf blocks.
_EXPAND_LIMIT = 1 << 25

_VARIANT_DOMAIN = {
    "rem": rng.DOM_REM,
    "grem": rng.DOM_GREM,
    "brw": rng.DOM_BRW,
    "interp": rng.DOM_INTERP,
}

_NORM_TOL = 1e-12


class ModelValidationError(ValueError):
    """Raised for model descriptions violating the normalization contract."""


class BudgetExceededError(RuntimeError):
    """Raised when an enumeration would exceed the configured leaf budget."""


class UnsupportedModelError(ValueError):
    """Raised when an operation has no formula for the given variant."""


@dataclass(frozen=True)
class ModelSpec:
    """Validated description of a tree-structured Gaussian field.

    ``branching`` and ``variances`` are per-level; ``log2_leaves`` records
    the exact log2 of the leaf count, whose deviation from ``n`` (nonzero
    only for rounded interpolating models) is ``log2_leaf_rounding``.
    """

    variant: str
    n: int
    depth: int
    branching: tuple[int, ...]
    variances: tuple[float, ...]
    alpha: float | None = None
    notes: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.depth != len(self.branching) or self.depth != len(self.variances):
            raise ModelValidationError("branching/variance lists must match depth")
        if any(b < 2 for b in self.branching):
            raise ModelValidationError("branching factors must be >= 2")
        if any(not (v > 0) or not math.isfinite(v) for v in self.variances):
            raise ModelValidationError("level variances must be positive and finite")
        if abs(sum(self.variances) - self.n) > _NORM_TOL * max(1.0, self.n):
            raise ModelValidationError(
                f"level variances sum to {sum(self.variances)!r}, expected n={self.n}")

    @property
    def leaf_count(self) -> int:
        c = 1
        for b in self.branching:
            c *= b
        return c

    @property
    def log2_leaves(self) -> float:
        return sum(math.log2(b) for b in self.branching)

    @property
    def log2_leaf_rounding(self) -> float:
        """Deviation of log2(leaf count) from n (rounding of the interpolating model)."""
        return self.log2_leaves - self.n

    @property
    def sigmas(self) -> np.ndarray:
        return np.sqrt(np.asarray(self.variances))

    def nodes_at(self, level: int) -> int:
        c = 1
        for b in self.branching[:level]:
            c *= b
        return c

    def strides(self) -> list[int]:
        """Leaf-index divisor mapping a leaf to its level-l ancestor code."""
        s = [1] * (self.depth + 1)
        for l in range(self.depth - 1, -1, -1):
            s[l] = s[l + 1] * self.branching[l]
        return s[1:]

    def level_key(self, master_seed: int, level: int) -> int:
        return rng.stream_key(master_seed, _VARIANT_DOMAIN[self.variant], level)


def _split_levels(total: int, k: int) -> list[int]:
    """Split ``total`` units into k blocks: k-1 floor blocks, remainder last."""
    base = total // k
    if base == 0:
        raise ModelValidationError(f"cannot split {total} levels into {k} blocks")
    sizes = [base] * (k - 1)
    sizes.append(total - base * (k - 1))
    return sizes


def rem_model(n: int) -> ModelSpec:
    """REM: 2^n i.i.d. centered Gaussians of variance n (a depth-1 tree)."""
    n = _check_n(n)
    return ModelSpec("rem", n, 1, (1 << n,), (float(n),))


def grem_model(n: int, a: Sequence[float]) -> ModelSpec:
    """GREM(K) with variance weights ``a`` (must sum to one).

    Branching splits the n bits across the K levels, floor blocks first and
    the remainder absorbed by the last level.
    """
    n = _check_n(n)
    a = tuple(float(x) for x in a)
    if len(a) < 2:
        raise ModelValidationError("grem needs at least two levels")
    if any(x <= 0 or not math.isfinite(x) for x in a):
        raise ModelValidationError("grem weights must be positive and finite")
    if abs(sum(a) - 1.0) > _NORM_TOL:
        raise ModelValidationError(f"grem weights must sum to 1, got {sum(a)!r}")
    bits = _split_levels(n, len(a))
    return ModelSpec("grem", n, len(a), tuple(1 << b for b in bits),
                     tuple(x * n for x in a))


def brw_model(n: int) -> ModelSpec:
    """Binary branching random walk: n levels, unit variance per level."""
    n = _check_n(n)
    return ModelSpec("brw", n, n, (2,) * n, (1.0,) * n)


def interpolating_model(n: int, alpha: float) -> ModelSpec:
    """GREM with ceil(n^alpha) levels, interpolating REM (alpha->0) and BRW (alpha->1).

    Per-level branching 2^(n/L) is rounded to the nearest integer >= 2; the
    induced deviation of log2(leaf count) from n is recorded on the spec.
    """
    n = _check_n(n)
    alpha = float(alpha)
    if not (0.0 < alpha < 1.0):
        raise ModelValidationError(f"alpha must lie in (0, 1), got {alpha!r}")
    levels = max(1, math.ceil(n ** alpha))
    b = max(2, round(2 ** (n / levels)))
    rounding = levels * math.log2(b) - n
    notes = ()
    if abs(rounding) > 1e-12:
        notes = (f"log2 leaf count rounded by {rounding:+.6f}",)
    return ModelSpec("interp", n, levels, (b,) * levels, (n / levels,) * levels,
                     alpha=alpha, notes=notes)


def _check_n(n) -> int:
    if not float(n).is_integer() or int(n) < 1:
        raise ModelValidationError(f"n must be a positive integer, got {n!r}")
    if not math.isfinite(float(n)):
        raise ModelValidationError("n must be finite")
    return int(n)


def make_model(raw: dict) -> ModelSpec:
    """Build a validated :class:`ModelSpec` from a plain description dict.

    Expected keys: ``variant`` in {rem, grem, brw, interp}; ``n``; for grem
    ``a`` (weight list); for interp ``alpha``.
    """
    spec = dict(raw)
    variant = spec.pop("variant", None)
    n = spec.pop("n", None)
    if variant == "rem":
        model = rem_model(n)
    elif variant == "grem":
        model = grem_model(n, spec.pop("a"))
    elif variant == "brw":
        model = brw_model(n)
    elif variant == "interp":
        model = interpolating_model(n, spec.pop("alpha"))
    else:
        raise ModelValidationError(f"unknown variant {variant!r}")
    if spec:
        raise ModelValidationError(f"unrecognized model fields: {sorted(spec)}")
    return model


# ----------------------------------------------------------------------
# Node addressing


def leaf_path(model: ModelSpec, rank: int) -> tuple[int, ...]:
    """Per-level child indices of the leaf with DFS rank ``rank``."""
    if not (0 <= rank < model.leaf_count):
        raise ValueError(f"leaf rank {rank} out of range")
    path = []
    for b in reversed(model.branching):
        path.append(rank % b)
        rank //= b
    return tuple(reversed(path))


def leaf_rank(model: ModelSpec, path: Sequence[int]) -> int:
    """Inverse of :func:`leaf_path`."""
    _validate_path(model, path, full=True)
    r = 0
    for i, b in zip(path, model.branching):
        r = r * b + i
    return r


def _validate_path(model: ModelSpec, path: Sequence[int], full: bool = False):
    if full and len(path) != model.depth:
        raise ValueError(f"leaf path must have length {model.depth}")
    if not 1 <= len(path) <= model.depth:
        raise ValueError(f"node path length {len(path)} outside 1..{model.depth}")
    for l, (i, b) in enumerate(zip(path, model.branching), start=1):
        if not 0 <= i < b:
            raise ValueError(f"index {i} at level {l} outside [0, {b})")


def node_increment(model: ModelSpec, path: Sequence[int], master_seed: int) -> float:
    """Gaussian increment of the tree node addressed by ``path``.

    A pure function of ``(master_seed, path)``: repeated calls and any
    enumeration order give identical values.
    """
    _validate_path(model, path)
    level = len(path)
    code = 0
    for i, b in zip(path, model.branching):
        code = code * b + i
    z = rng.normal_at(model.level_key(master_seed, level), code)
    return math.sqrt(model.variances[level - 1]) * z


# ----------------------------------------------------------------------
# Samplers


def _check_budget(model: ModelSpec, leaf_budget: int):
    if model.leaf_count > leaf_budget:
        raise BudgetExceededError(
            f"model has 2^{model.log2_leaves:.2f} leaves; requires leaf_budget >= "
            f"{model.leaf_count} (configured {leaf_budget})")


def iter_level_sums(model: ModelSpec, master_seed: int,
                    leaf_budget: int = DEFAULT_LEAF_BUDGET) -> Iterator[np.ndarray]:
    """Yield partial-sum arrays level by level (full-width expansion).

    The level-l array has one entry per depth-l node, in DFS prefix order.
    Memory is O(leaf count); use :func:`iter_energy_blocks` for bounded
    memory.
    """
    _check_budget(model, leaf_budget)
    if model.leaf_count > _EXPAND_LIMIT:
        raise BudgetExceededError(
            f"full-width expansion capped at {_EXPAND_LIMIT} leaves; "
            "use iter_energy_blocks")
    sig = model.sigmas
    s = np.zeros(1)
    for l in range(1, model.depth + 1):
        s = np.repeat(s, model.branching[l - 1])
        s += sig[l - 1] * rng.normals(model.level_key(master_seed, l), 0, s.shape[0])
        yield s


def iter_energy_blocks(model: ModelSpec, master_seed: int,
                       block_size: int = 1 << 16,
                       profiles: bool = False,
                       leaf_budget: int = DEFAULT_LEAF_BUDGET,
                       ) -> Iterator[tuple[int, np.ndarray] | tuple[int, np.ndarray, np.ndarray]]:
    """Yield leaf energies in DFS order in fixed-size blocks.

    Yields ``(start_rank, energies)`` or, with ``profiles=True``,
    ``(start_rank, energies, profiles)`` where ``profiles[i]`` is the
    partial-sum sequence S_0..S_depth of leaf ``start_rank + i``.  Memory is
    O(block_size * depth) regardless of the leaf count, and the values do
    not depend on the block size.
    """
    _check_budget(model, leaf_budget)
    total = model.leaf_count
    strides = model.strides()
    sig = model.sigmas
    keys = [model.level_key(master_seed, l) for l in range(1, model.depth + 1)]
    for start in range(0, total, block_size):
        m = min(block_size, total - start)
        ranks = np.arange(start, start + m, dtype=np.uint64)
        inc = np.empty((m, model.depth))
        for l in range(model.depth):
            codes = ranks // np.uint64(strides[l])
            inc[:, l] = sig[l] * rng.normals_at(keys[l], codes)
        if profiles:
            prof = np.zeros((m, model.depth + 1))
            np.cumsum(inc, axis=1, out=prof[:, 1:])
            yield start, prof[:, -1].copy(), prof
        else:
            yield start, inc.sum(axis=1)


def energy_chunks(model: ModelSpec, master_seed: int,
                  leaf_budget: int = DEFAULT_LEAF_BUDGET) -> Iterator[tuple[int, np.ndarray]]:
    """Yield (start_rank, energies) covering all leaves in DFS order.

    Uses one full-width level expansion when the leaf set fits in memory
    (work is about twice the leaf count in draws) and falls back to
    fixed-size recomputed blocks beyond that.  Both paths evaluate the same
    (key, code) pairs, so the energies are bitwise identical.
    """
    _check_budget(model, leaf_budget)
    if model.leaf_count <= _EXPAND_LIMIT:
        s = np.zeros(1)
        for s in iter_level_sums(model, master_seed, leaf_budget):
            pass
        yield 0, s
        return
    yield from iter_energy_blocks(model, master_seed, block_size=_EXPAND_LIMIT,
                                  leaf_budget=leaf_budget)


def leaf_profile(model: ModelSpec, master_seed: int, rank: int) -> np.ndarray:
    """Partial sums S_0..S_depth along the path of one leaf."""
    strides = model.strides()
    prof = np.zeros(model.depth + 1)
    s = 0.0
    for l in range(1, model.depth + 1):
        code = rank // strides[l - 1]
        z = rng.normal_at(model.level_key(master_seed, l), code)
        s += math.sqrt(model.variances[l - 1]) * z
        prof[l] = s
    return prof


def stream_leaves(model: ModelSpec, master_seed: int,
                  visit: Callable, init=None,
                  block_size: int = 4096,
                  leaf_budget: int = DEFAULT_LEAF_BUDGET):
    """Fold ``visit`` over every leaf exactly once, in DFS order.

    ``visit(acc, leaf_index, energy, profile)`` is called with the leaf's
    per-level child indices (a tuple), its energy, and its partial-sum
    profile; it returns the new accumulator.  The final accumulator is
    returned.  Memory is bounded by the block size times the depth; the
    result is independent of the block size.
    """
    acc = init
    for start, energies, profs in iter_energy_blocks(
            model, master_seed, block_size=block_size, profiles=True,
            leaf_budget=leaf_budget):
        for i in range(energies.shape[0]):
            acc = visit(acc, leaf_path(model, start + i), energies[i], profs[i])
    return acc


def overlap_fraction(model: ModelSpec, path_a: Sequence[int], path_b: Sequence[int]) -> float:
    """Tree overlap q(a, b): shared-ancestry fraction of the total variance.

    The covariance of two leaf energies is ``n * q``.
    """
    _validate_path(model, path_a, full=True)
    _validate_path(model, path_b, full=True)
    shared = 0.0
    for i, (x, y) in enumerate(zip(path_a, path_b)):
        if x != y:
            break
        shared += model.variances[i]
    return shared / model.n
