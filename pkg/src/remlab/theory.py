"""Closed-form predictions and numerical solvers.

Conventions: all exponential growth rates are reported in natural-log
units per unit n (use :func:`bits_to_nats` to convert a log2-based count
exponent).  Levels of maxima are parameterized as

    level(n) = leading * n - log_coeff * ln(n) - loglog_coeff * ln(ln(n)).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.optimize import brentq
from scipy.stats import multivariate_normal

from . import rng
from .models import ModelSpec, UnsupportedModelError

__all__ = [
    "LOG2", "bits_to_nats", "beta_c",
    "LevelPrediction", "predicted_level", "gff_level_prediction",
    "VariationalSolution", "solve_variational", "variational_grid_search",
    "RateReport", "second_moment_rate", "grem2_region",
    "bridge_below_line", "bridge_dp_below_barrier",
    "BallotEstimate", "ballot_constant",
    "percolation_constants", "exponential_rate_function",
    "MatchingResult", "matching_expected_count", "brw_bridge_factor",
]

LOG2 = math.log(2.0)


def bits_to_nats(x: float) -> float:
    """Convert a base-2 exponential rate to natural-log units."""
    return x * LOG2


def beta_c() -> float:
    """sqrt(2 ln 2): leading-order maximum coefficient of the REM class."""
    return math.sqrt(2.0 * LOG2)


# ----------------------------------------------------------------------
# Level predictions


@dataclass(frozen=True)
class LevelPrediction:
    """Predicted level of the maximum: leading order and corrections."""

    leading: float
    log_coeff: float
    loglog_coeff: float = 0.0
    conjectural: bool = False
    formula: str = ""

    def at(self, n: float) -> float:
        val = self.leading * n - self.log_coeff * math.log(n)
        if self.loglog_coeff:
            val -= self.loglog_coeff * math.log(math.log(n))
        return val


def predicted_level(model: ModelSpec) -> LevelPrediction:
    """Case-analyzed level prediction for a tree model's maximum."""
    bc = beta_c()
    if model.variant == "rem":
        return LevelPrediction(bc, 1.0 / (2.0 * bc),
                               formula="beta_c*n - (1/(2*beta_c))*ln(n)")
    if model.variant == "brw":
        return LevelPrediction(bc, 3.0 / (2.0 * bc),
                               formula="beta_c*n - (3/(2*beta_c))*ln(n)")
    if model.variant == "interp":
        c = (2.0 * model.alpha + 1.0) / (2.0 * bc)
        return LevelPrediction(bc, c, conjectural=True,
                               formula="beta_c*n - ((2*alpha+1)/(2*beta_c))*ln(n)")
    if model.variant == "grem":
        a = tuple(v / model.n for v in model.variances)
        if len(a) == 2:
            a1, a2 = a
            if a1 <= a2:
                return LevelPrediction(bc, 1.0 / (2.0 * bc),
                                       formula="REM collapse (a1 <= a2)")
            leading = math.sqrt(a1 * LOG2) + math.sqrt(a2 * LOG2)
            logc = sum(ai / (2.0 * math.sqrt(ai * LOG2)) for ai in a)
            return LevelPrediction(leading, logc,
                                   formula="sum of per-level REM levels (a1 > a2)")
        if max(a) - min(a) < 1e-12:
            return LevelPrediction(bc, 1.0 / (2.0 * bc),
                                   formula="critical GREM(K): REM level")
        raise UnsupportedModelError(
            "level prediction for GREM(K>2) is only classified at equal weights")
    raise UnsupportedModelError(f"no level prediction for variant {model.variant!r}")


def gff_level_prediction() -> LevelPrediction:
    """Level of the 2-d Gaussian free field maximum, in units of ln(box size)."""
    g = 2.0 / math.pi
    return LevelPrediction(2.0 * math.sqrt(g), 0.0, 0.75 * math.sqrt(g),
                           formula="2*sqrt(g)*ln(n) - (3/4)*sqrt(g)*lnln(n)")


# ----------------------------------------------------------------------
# GREM(K) variational principle


@dataclass(frozen=True)
class VariationalSolution:
    """Solution of the nested-constraint concave program for GREM levels."""

    value: float
    maximizers: tuple[float, ...]
    active: tuple[int, ...]     # saturated constraint indices, 1-based


def _check_weights(a) -> tuple[float, ...]:
    a = tuple(float(x) for x in a)
    if len(a) < 1:
        raise ValueError("need at least one weight")
    if any(x <= 0 or not math.isfinite(x) for x in a):
        raise ValueError("weights must be positive and finite (degenerate input)")
    if abs(sum(a) - 1.0) > 1e-9:
        raise ValueError(f"weights must sum to 1, got {sum(a)!r}")
    return a


def solve_variational(a) -> VariationalSolution:
    """Maximize sum(lambda_j) subject to the nested quadratic constraints

        sum_{j<=L} lambda_j^2 / (2 a_j)  <=  (L/K) ln 2,   L = 1..K.

    Within a run between consecutive active constraints the maximizer is
    proportional to the weights, so the exact optimum is found by
    enumerating active-constraint prefixes and solving each segment in
    closed form.
    """
    a = _check_weights(a)
    k = len(a)
    best = None
    for mask in itertools.product((False, True), repeat=k - 1):
        breaks = [i + 1 for i, on in enumerate(mask) if on] + [k]
        lam = np.empty(k)
        prev = 0
        ok = True
        for stop in breaks:
            seg = slice(prev, stop)
            seg_a = sum(a[prev:stop])
            c = math.sqrt(2.0 * LOG2 * (stop - prev) / (k * seg_a))
            lam[seg] = c * np.asarray(a[prev:stop])
            prev = stop
        # feasibility of the not-explicitly-saturated constraints
        lhs = np.cumsum(lam ** 2 / (2.0 * np.asarray(a)))
        rhs = LOG2 * np.arange(1, k + 1) / k
        if np.any(lhs > rhs + 1e-9):
            ok = False
        if ok:
            val = float(lam.sum())
            if best is None or val > best[0]:
                active = tuple(int(l) for l in range(1, k + 1)
                               if lhs[l - 1] >= rhs[l - 1] - 1e-9)
                best = (val, tuple(float(x) for x in lam), active)
    assert best is not None
    return VariationalSolution(*best)


def variational_grid_search(a, mesh: float = 1e-3) -> float:
    """Brute-force oracle for :func:`solve_variational`, K <= 3.

    Grids the free coordinates at the given resolution; the last coordinate
    always saturates its (only) constraint and is solved in closed form.
    """
    a = _check_weights(a)
    k = len(a)
    if k > 3:
        raise ValueError("grid search oracle implemented for K <= 3 only")
    if k == 1:
        return math.sqrt(2.0 * LOG2 * a[0] / k)

    def last(budget, ak):
        return np.sqrt(np.clip(2.0 * ak * budget, 0.0, None))

    if k == 2:
        lmax = math.sqrt(2.0 * a[0] * LOG2 / k)
        l1 = np.arange(0.0, lmax + mesh, mesh)
        budget = LOG2 - l1 ** 2 / (2 * a[0])
        vals = l1 + last(budget, a[1])
        return float(vals.max())
    # k == 3
    l1max = math.sqrt(2.0 * a[0] * LOG2 / 3.0)
    best = 0.0
    for l1 in np.arange(0.0, l1max + mesh, mesh):
        used1 = l1 ** 2 / (2 * a[0])
        l2max = math.sqrt(max(0.0, 2 * a[1] * (2 * LOG2 / 3 - used1)))
        l2 = np.arange(0.0, l2max + mesh, mesh)
        budget = LOG2 - used1 - l2 ** 2 / (2 * a[1])
        vals = l1 + l2 + last(budget, a[2])
        if vals.size:
            best = max(best, float(vals.max()))
    return best


# ----------------------------------------------------------------------
# Second-moment rates and GREM(2) counting region


@dataclass(frozen=True)
class RateReport:
    """Per-branch exponential rates of the second-moment error terms."""

    exponents: tuple[float, ...]   # natural-log units per unit n, r = 1..K-1
    vanishing: bool


def second_moment_rate(k: int, lams) -> RateReport:
    """Branch exponents (K/2) sum_{j=2}^{r+1} lambda_j^2 - (r/K) ln 2.

    ``lams`` holds the level thresholds for levels 2..K.  The ratio of the
    counting variable's variance to its squared mean vanishes exponentially
    iff every exponent is negative.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    lams = tuple(float(x) for x in lams)
    if len(lams) != k - 1:
        raise ValueError(f"need {k - 1} thresholds for levels 2..{k}")
    sq = np.asarray(lams) ** 2
    expo = tuple(float(k / 2.0 * sq[:r].sum() - r * LOG2 / k)
                 for r in range(1, k))
    return RateReport(expo, vanishing=max(expo) < 0.0)


def grem2_region(lam1: float, lam2: float, a1: float, a2: float) -> float:
    """Exponential growth rate (natural-log units) of the two-level count.

    Returns ln 2 - lam1^2/(2 a1) - lam2^2/(2 a2) inside the admissible
    region, -inf outside it.
    """
    if a1 <= 0 or a2 <= 0:
        raise ValueError("weights must be positive")
    first = lam1 ** 2 / (2.0 * a1)
    both = first + lam2 ** 2 / (2.0 * a2)
    if first > 0.5 * LOG2 + 1e-15 or both > LOG2 + 1e-15:
        return -math.inf
    return LOG2 - both


# ----------------------------------------------------------------------
# Bridge probabilities


def bridge_below_line(n: float, a: float, b: float) -> float:
    """Probability a Brownian bridge of lifespan n stays below the straight
    line with endpoint clearances ``a`` and ``b``: 1 - exp(-2ab/n).

    Returns 0 when either clearance is nonpositive (the bridge starts or
    ends on or above the line).
    """
    if a <= 0.0 or b <= 0.0:
        return 0.0
    return -math.expm1(-2.0 * a * b / n)


_BRIDGE_MAX_N = 4096


def bridge_dp_below_barrier(n: int, barrier, terminal: float = 0.0,
                            bins: int = 4096, span: float = 12.0) -> float:
    """P[S_l <= barrier[l-1] for l = 1..n-1 | S_n = terminal] for a walk
    with standard Gaussian increments, by density propagation.

    The constrained density is propagated on a uniform grid covering
    ``span`` standard deviations of the unconditioned walk, values above
    the barrier being absorbed after every step; the free density is
    propagated through the same quadrature so that discretization bias
    cancels in the final ratio.  Infinite barrier entries are vacuous.
    """
    if not (1 <= n <= _BRIDGE_MAX_N):
        raise ValueError(f"n must lie in 1..{_BRIDGE_MAX_N}")
    barrier = np.asarray(barrier, dtype=float)
    if barrier.shape != (n - 1,):
        raise ValueError(f"need {n - 1} barrier values for l = 1..{n - 1}")
    half = span * math.sqrt(n)
    margin = 6.0
    finite = barrier[np.isfinite(barrier)]
    low = min([terminal] + ([finite.min()] if finite.size else []))
    if abs(terminal) > half - margin or low < -(half - margin):
        raise ValueError("barrier or terminal outside the propagation grid; "
                         "increase span")
    x = np.linspace(-half, half, bins)
    dx = x[1] - x[0]
    kern = np.exp(-0.5 * (np.arange(-bins + 1, bins) * dx) ** 2) / math.sqrt(2 * math.pi)
    kf = np.fft.rfft(kern, 2 * bins)

    def step(v):
        return np.fft.irfft(np.fft.rfft(v, 2 * bins) * kf, 2 * bins)[bins - 1:2 * bins - 1] * dx

    dens = np.exp(-0.5 * x ** 2) / math.sqrt(2 * math.pi)
    free = dens.copy()
    if n == 1:
        return 1.0
    cons = np.where(x <= barrier[0], dens, 0.0)
    for l in range(2, n + 1):
        cons = step(cons)
        free = step(free)
        if l <= n - 1:
            cons = np.where(x <= barrier[l - 1], cons, 0.0)
    num = float(np.interp(terminal, x, cons))
    den = float(np.interp(terminal, x, free))
    return num / den


@dataclass(frozen=True)
class BallotEstimate:
    value: float
    stderr: float
    method: str


def ballot_constant(k: int, method: str | None = None,
                    mc_paths: int = 10_000_000, seed: int = 7) -> BallotEstimate:
    """C_K: probability a bridge of lifespan K is <= 0 at times 1..K-1.

    Adaptive quadrature (Genz) on the bridge covariance for K <= 4, Monte
    Carlo above; ``method`` in {"quad", "mc"} overrides the default choice.
    """
    if not 2 <= k <= 8:
        raise ValueError("k must lie in 2..8")
    if method is None:
        method = "quad" if k <= 4 else "mc"
    if method == "quad":
        if k > 4:
            raise ValueError("quadrature supported for k <= 4")
        ls = np.arange(1, k)
        cov = np.minimum.outer(ls, ls) * (k - np.maximum.outer(ls, ls)) / k
        val = float(multivariate_normal(mean=np.zeros(k - 1), cov=cov)
                    .cdf(np.zeros(k - 1)))
        return BallotEstimate(val, 0.0, "quad")
    if method != "mc":
        raise ValueError(f"unknown method {method!r}")
    key = rng.stream_key(seed, rng.DOM_CASCADE, 100 + k)
    hits = 0
    chunk = 1 << 20
    done = 0
    while done < mc_paths:
        m = min(chunk, mc_paths - done)
        z = rng.normals(key, done * k, m * k).reshape(m, k)
        s = np.cumsum(z, axis=1)
        bridge = s[:, :-1] - np.outer(s[:, -1], np.arange(1, k) / k)
        hits += int(np.count_nonzero((bridge <= 0.0).all(axis=1)))
        done += m
    p = hits / mc_paths
    se = math.sqrt(max(p * (1 - p), 1e-300) / mc_paths)
    return BallotEstimate(p, se, "mc")


# ----------------------------------------------------------------------
# Percolation constants


def exponential_rate_function(x: float) -> float:
    """Large-deviation rate of the mean-one exponential: I(x) = x - 1 - ln x."""
    return x - 1.0 - math.log(x)


def percolation_constants() -> tuple[float, float]:
    """The two roots of 2c = e^(c-1) (equivalently I(c) = ln 2).

    The smaller root is the first-passage constant, the larger the
    last-passage constant for exponential weights on the binary tree.
    """
    f = lambda c: 2.0 * c - math.exp(c - 1.0)
    c1 = brentq(f, 1e-12, 1.0, xtol=1e-15, rtol=8.9e-16)
    c2 = brentq(f, 1.0, 10.0, xtol=1e-15, rtol=8.9e-16)
    # one polishing Newton step each; safeguarded by the bracket above
    for _ in range(2):
        c1 -= f(c1) / (2.0 - math.exp(c1 - 1.0))
        c2 -= f(c2) / (2.0 - math.exp(c2 - 1.0))
    return c1, c2


# ----------------------------------------------------------------------
# Matching


@dataclass(frozen=True)
class MatchingResult:
    ns: tuple[int, ...]
    counts: tuple[float, ...]
    fitted_exponent: float


def brw_bridge_factor(n: int) -> float:
    """Path-constraint factor of the hierarchical-field matching integral.

    The probability that the recentred path bridge stays below its mean
    line at all interior times; equals 1/n exactly in the continuum and is
    computed here by the barrier DP.
    """
    return bridge_dp_below_barrier(n, np.zeros(n - 1), 0.0)


def matching_expected_count(kind, c: float, window: tuple[float, float], ns,
                            bridge_factor=None, quad_points: int = 96) -> MatchingResult:
    """Expected count of leaves in ``window + a_n`` with a_n = beta_c*n - c*ln(n).

    Evaluates 2^n * Integral_window exp(-(x+a_n)^2/(2n)) dx / sqrt(2 pi n)
    for every n in ``ns``, multiplied by a per-n bridge factor when the
    model carries a path constraint ("brw"), and reports the fitted
    exponent of n (slope of ln count against ln n).  A fitted exponent near
    zero identifies the matched log-correction coefficient c.
    """
    if isinstance(kind, ModelSpec):
        kind = kind.variant
    if bridge_factor is None:
        if kind == "rem":
            bridge_factor = lambda n: 1.0
        elif kind == "brw":
            bridge_factor = brw_bridge_factor
        else:
            raise UnsupportedModelError(
                f"no default bridge factor for {kind!r}; pass bridge_factor=")
    x0, x1 = window
    if not (x0 < x1 and math.isfinite(x0) and math.isfinite(x1)):
        raise ValueError("window must be a bounded nonempty interval")
    nodes, weights = leggauss(quad_points)
    xs = 0.5 * (x1 - x0) * nodes + 0.5 * (x0 + x1)
    ws = 0.5 * (x1 - x0) * weights
    bc = beta_c()
    counts = []
    for n in ns:
        a_n = bc * n - c * math.log(n)
        expo = n * LOG2 - (xs + a_n) ** 2 / (2.0 * n)
        val = float(np.sum(ws * np.exp(expo)) / math.sqrt(2 * math.pi * n))
        counts.append(val * bridge_factor(int(n)))
    ls = np.log(np.asarray(ns, dtype=float))
    ly = np.log(np.asarray(counts))
    slope = float(np.polyfit(ls, ly, 1)[0])
    return MatchingResult(tuple(int(n) for n in ns), tuple(counts), slope)
