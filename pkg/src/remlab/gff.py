"""2-d discrete Gaussian free field on a box, via the Green function of the
killed random walk, plus local-projection (harmonic conditioning)
decompositions for the field and for the two-level tree model.

Conventions: the box is V_n = {0..n}^2 with the field pinned to zero on
the boundary frame; the interior has (n-1)^2 sites.  The covariance is the
expected-visits Green function G(x, y) of simple random walk started at x
and killed on hitting the boundary, i.e. the inverse of the killed-walk
generator L = I - P restricted to the interior.  Its diagonal grows like
g*ln(n) + O(1) with g = 2/pi away from the boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import cholesky, solve

from . import rng
from .models import BudgetExceededError

__all__ = [
    "FactorizationError",
    "GreenOperator", "build_green",
    "FieldSample2D", "sample_gff",
    "GffMaxStats", "gff_max_stats",
    "ProjectionResult", "local_projection_gff", "condition_on_sites",
    "harmonic_measure",
    "Grem2Projection", "local_projection_grem2", "grem2_projection_dense",
]

DENSE_MAX_BOX = 64
_JITTER = 1e-12


class FactorizationError(RuntimeError):
    """Raised when the covariance cannot be factorized within jitter policy."""


def _killed_walk_generator(n: int) -> sp.csc_matrix:
    """L = I - P on the interior of {0..n}^2, absorbing boundary."""
    side = n - 1
    m = side * side
    idx = np.arange(m).reshape(side, side)
    diag = np.ones(m)
    rows, cols = [], []
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        src_i, src_j = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
        ti, tj = src_i + di, src_j + dj
        ok = (ti >= 0) & (ti < side) & (tj >= 0) & (tj < side)
        rows.append(idx[src_i[ok], src_j[ok]])
        cols.append(idx[ti[ok], tj[ok]])
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    L = sp.coo_matrix((np.full(r.shape[0], -0.25), (r, c)), shape=(m, m))
    return (sp.diags(diag) + L).tocsc()


@dataclass(frozen=True)
class GreenOperator:
    """Covariance operator of the field on the interior sites.

    ``matrix`` is G ordered row-major over interior coordinates
    (1..n-1) x (1..n-1); ``chol`` is its lower Cholesky factor when the
    exact (linear-solve) construction was used, enabling sampling and
    conditioning.  ``jitter`` records any diagonal regularization applied
    (at most 1e-12, never silent).
    """

    box_n: int
    side: int
    matrix: np.ndarray
    method: str
    chol: np.ndarray | None = None
    jitter: float = 0.0
    stderr: np.ndarray | None = None
    walks: int = 0

    @property
    def size(self) -> int:
        return self.side * self.side

    def site_index(self, z: tuple[int, int]) -> int:
        i, j = z
        if not (1 <= i <= self.side and 1 <= j <= self.side):
            raise ValueError(f"site {z} is not interior to the {self.box_n}-box")
        return (i - 1) * self.side + (j - 1)

    def boundary_distance(self) -> np.ndarray:
        """Lattice distance of every interior site to the boundary frame."""
        coords = np.arange(1, self.box_n)
        ii, jj = np.meshgrid(coords, coords, indexing="ij")
        return np.minimum(np.minimum(ii, jj),
                          np.minimum(self.box_n - ii, self.box_n - jj)).ravel()


def build_green(n: int, method: str = "linear-solve", walks: int = 2000,
                seed: int = 0) -> GreenOperator:
    """Green operator of the killed walk on the n-box.

    ``linear-solve`` inverts the killed-walk generator column by column
    (exact, dense; n <= 64) and factorizes the result for sampling.
    ``walk-mc`` estimates every entry by simulating ``walks`` killed walks
    from each interior start; it carries per-entry standard errors and
    supports no sampling.
    """
    if n < 2:
        raise ValueError("box must have at least one interior site")
    if method == "linear-solve":
        if n > DENSE_MAX_BOX:
            raise BudgetExceededError(
                f"dense Green construction capped at n <= {DENSE_MAX_BOX}")
        L = _killed_walk_generator(n)
        lu = spla.splu(L)
        m = L.shape[0]
        G = lu.solve(np.eye(m))
        G = 0.5 * (G + G.T)
        chol, jitter = _factor(G)
        return GreenOperator(n, n - 1, G, method, chol=chol, jitter=jitter)
    if method == "walk-mc":
        G, se = _green_walk_mc(n, walks, seed)
        return GreenOperator(n, n - 1, G, method, stderr=se, walks=walks)
    raise ValueError(f"unknown method {method!r}")


def _factor(G: np.ndarray) -> tuple[np.ndarray, float]:
    try:
        return cholesky(G, lower=True), 0.0
    except np.linalg.LinAlgError:
        pass
    jittered = G + _JITTER * np.eye(G.shape[0])
    try:
        return cholesky(jittered, lower=True), _JITTER
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(
            f"covariance not positive definite within jitter {_JITTER}") from exc


def _green_walk_mc(n: int, walks: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    side = n - 1
    m = side * side
    G = np.empty((m, m))
    SE = np.empty((m, m))
    steps_cap = 64 * n * n    # far beyond any realistic absorption time
    for start in range(m):
        key = rng.stream_key(seed, rng.DOM_GFF, (n << 20) + start)
        si, sj = divmod(start, side)
        pi = np.full(walks, si + 1)
        pj = np.full(walks, sj + 1)
        visits = np.zeros((walks, m))
        alive = np.ones(walks, dtype=bool)
        wid = np.arange(walks)
        for step in range(steps_cap):
            aw = wid[alive]
            if aw.size == 0:
                break
            cell = (pi[aw] - 1) * side + (pj[aw] - 1)
            np.add.at(visits, (aw, cell), 1.0)
            u = rng.uniforms(key, step * walks, walks)[aw]
            d = np.floor(u * 4).astype(np.int64)
            pi[aw] += np.where(d == 0, 1, 0) - np.where(d == 1, 1, 0)
            pj[aw] += np.where(d == 2, 1, 0) - np.where(d == 3, 1, 0)
            inside = ((pi[aw] >= 1) & (pi[aw] <= side) &
                      (pj[aw] >= 1) & (pj[aw] <= side))
            alive[aw] = inside
        else:
            raise RuntimeError("walk absorption cap exceeded")
        G[start] = visits.mean(axis=0)
        SE[start] = visits.std(axis=0, ddof=1) / math.sqrt(walks)
    return G, SE


@dataclass(frozen=True)
class FieldSample2D:
    box_n: int
    values: np.ndarray      # (side, side) interior grid
    seed: int


def sample_gff(green: GreenOperator, seed: int) -> FieldSample2D:
    """Exact Gaussian sample with covariance G (boundary implicitly zero)."""
    if green.chol is None:
        raise FactorizationError(
            "this Green operator has no factorization (walk-mc estimate); "
            "rebuild with method='linear-solve'")
    z = rng.normals(rng.stream_key(seed, rng.DOM_GFF, green.box_n), 0, green.size)
    x = green.chol @ z
    return FieldSample2D(green.box_n, x.reshape(green.side, green.side), seed)


@dataclass(frozen=True)
class GffMaxStats:
    n: int
    delta: float
    trials: int
    master_seed: int
    mean_max: float
    stderr_max: float
    mean_ratio: float       # mean of max / ln(n)
    stderr_ratio: float
    limit_ratio: float      # 2 sqrt(g)


def gff_max_stats(n: int, delta: float, trials: int, master_seed: int,
                  green: GreenOperator | None = None) -> GffMaxStats:
    """Per-trial maximum of the field over the delta-interior of the box."""
    if green is None:
        green = build_green(n)
    mask = green.boundary_distance() >= delta * n
    if not mask.any():
        raise ValueError(f"delta={delta} leaves no interior sites in the {n}-box")
    mx = np.empty(trials)
    for t in range(trials):
        s = sample_gff(green, rng.trial_seed(master_seed, t))
        mx[t] = s.values.ravel()[mask].max()
    g = 2.0 / math.pi
    ln = math.log(n)
    return GffMaxStats(n, delta, trials, master_seed,
                       float(mx.mean()), float(mx.std(ddof=1) / math.sqrt(trials)),
                       float(mx.mean() / ln), float(mx.std(ddof=1) / math.sqrt(trials) / ln),
                       2.0 * math.sqrt(g))


# ----------------------------------------------------------------------
# Local projections


def condition_on_sites(green: GreenOperator, z: tuple[int, int],
                       sites: list[tuple[int, int]]) -> tuple[np.ndarray, float]:
    """Gaussian conditioning of the field at z on its values at ``sites``.

    Returns the conditional-mean coefficient vector and the residual
    variance G(z,z) - w . G(sites, z).
    """
    zi = green.site_index(z)
    si = np.array([green.site_index(s) for s in sites])
    Gbb = green.matrix[np.ix_(si, si)]
    gbz = green.matrix[si, zi]
    w = solve(Gbb, gbz, assume_a="pos")
    resid = float(green.matrix[zi, zi] - w @ gbz)
    return w, resid


def _lattice_ball(green: GreenOperator, z: tuple[int, int], radius: float):
    """Sites of the Euclidean lattice ball and its inner vertex boundary."""
    ci, cj = z
    r2 = radius * radius
    ball = set()
    rad = int(math.floor(radius))
    for di in range(-rad, rad + 1):
        for dj in range(-rad, rad + 1):
            if di * di + dj * dj <= r2:
                ball.add((ci + di, cj + dj))
    def interior(s):
        return 1 <= s[0] <= green.side and 1 <= s[1] <= green.side
    if not all(interior(s) for s in ball):
        raise ValueError("ball touches the absorbing boundary; reduce the radius "
                         "exponent or recentre")
    boundary = sorted(s for s in ball
                      if any((s[0] + di, s[1] + dj) not in ball
                             for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1))))
    return ball, boundary


def harmonic_measure(green: GreenOperator, z: tuple[int, int],
                     sites: list[tuple[int, int]]) -> np.ndarray:
    """Hitting distribution of ``sites`` for the walk from z killed at the
    box boundary (the Markov-property oracle for the conditioning weights)."""
    side = green.side
    m = side * side
    target = np.array([green.site_index(s) for s in sites])
    L = _killed_walk_generator(green.box_n).toarray()
    keep = np.setdiff1d(np.arange(m), target)
    pos = {k: i for i, k in enumerate(keep)}
    # (I - P_SS) H = P_S,target
    A = L[np.ix_(keep, keep)]
    B = -L[np.ix_(keep, target)]
    H = solve(A, B)
    return H[pos[green.site_index(z)]]


@dataclass(frozen=True)
class ProjectionResult:
    site: tuple[int, int]
    radius: float
    boundary: tuple[tuple[int, int], ...]
    coefficients: np.ndarray
    residual_variance: float
    conditional_mean_variance: float
    harmonic_gap: float          # max |coeff - harmonic measure|
    max_residual_covariance: float


def local_projection_gff(green: GreenOperator, z: tuple[int, int],
                         q: float) -> ProjectionResult:
    """Conditional mean of the field at z given its values on the boundary
    of the lattice ball of radius n^(1 - pi q / 2) around z.

    The coefficients are checked against the killed-walk harmonic measure
    (Markov property) and the residual against decorrelation from every
    conditioning site.
    """
    radius = green.box_n ** (1.0 - math.pi * q / 2.0)
    if radius < 1.0:
        raise ValueError(f"radius exponent q={q} gives radius {radius:.3f} < 1")
    _, boundary = _lattice_ball(green, z, radius)
    w, resid = condition_on_sites(green, z, boundary)
    hm = harmonic_measure(green, z, boundary)
    gap = float(np.abs(w - hm).max())
    zi = green.site_index(z)
    si = np.array([green.site_index(s) for s in boundary])
    rescov = green.matrix[si, zi] - green.matrix[np.ix_(si, si)] @ w
    cm_var = float(w @ green.matrix[np.ix_(si, si)] @ w)
    return ProjectionResult(z, radius, tuple(boundary), w, resid, cm_var,
                            gap, float(np.abs(rescov).max()))


# ----------------------------------------------------------------------
# GREM(2) local projection


@dataclass(frozen=True)
class Grem2Projection:
    """Closed-form conditioning of one leaf on its same-branch siblings.

    ``leading_coeff`` multiplies the shared first-level variable,
    ``sibling_coeff`` each sibling's own second-level variable (equals the
    coefficient on every observed sibling energy); the sibling coefficient
    decays like 2^(-n/2).
    """

    n: int
    a1: float
    sibling_count: int
    leading_coeff: float
    sibling_coeff: float
    residual_variance: float
    residual_cov_level1: float


def local_projection_grem2(n: int, a1: float) -> Grem2Projection:
    """Exact Gaussian conditioning of X_leaf on the 2^(n/2) - 1 sibling
    energies sharing its first index, reduced by exchangeability.

    With m siblings, v1 = a1*n and v2 = (1-a1)*n, the conditional mean is
    c * (sum of sibling energies) with c = a1 / (a1*m + (1-a1)); in latent
    form the first-level coefficient is m*c and the per-sibling
    second-level coefficient is c.
    """
    if n < 2 or n % 2:
        raise ValueError("n must be a positive even integer")
    if not (0.0 < a1 <= 1.0):
        raise ValueError("a1 must lie in (0, 1]")
    m = (1 << (n // 2)) - 1
    a2 = 1.0 - a1
    c = a1 / (a1 * m + a2)
    beta = m * c
    v1, v2 = a1 * n, a2 * n
    cond_var = c * c * (m * m * v1 + m * v2)
    return Grem2Projection(n, a1, m, beta, c, float(n - cond_var),
                           (1.0 - beta) * v1)


def grem2_projection_dense(n: int, a1: float) -> Grem2Projection:
    """Dense-conditioning oracle: materializes the sibling covariance and
    solves the normal equations directly (small n only)."""
    if n < 2 or n % 2:
        raise ValueError("n must be a positive even integer")
    if n > 20:
        raise BudgetExceededError("dense oracle materializes 2^(n/2) siblings")
    m = (1 << (n // 2)) - 1
    v1, v2 = a1 * n, (1.0 - a1) * n
    C = np.full((m, m), v1) + v2 * np.eye(m)
    cvec = np.full(m, v1)
    w = solve(C, cvec, assume_a="pos")
    beta = float(w.sum())
    cond_var = float(w @ C @ w)
    return Grem2Projection(n, a1, m, beta, float(w[0]), float(n - cond_var),
                           (1.0 - beta) * v1)
