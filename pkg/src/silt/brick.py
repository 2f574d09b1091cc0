"""Covering-brick algebra, isonormal sampling, and entropy-integral estimation.

A brick is the compact set {x : |(x, e_k)| <= eps_k for all k} for a labeled
orthonormal basis and a square-summable width sequence.  Only a finite width
prefix is stored, plus a declared bound on the tail square sum; all operations
here reduce to prefix arithmetic.
"""

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import NotPositiveSemidefiniteError
from .weights import CovarianceOracle


@dataclass(frozen=True)
class Brick:
    """Finite-prefix brick: nonnegative half-widths in a labeled basis.

    ``tail_sq_bound`` declares a bound on the square sum of the widths beyond
    the stored prefix (0 means the tail is all zero).
    """

    basis_label: str
    eps_seq: np.ndarray
    tail_sq_bound: float = 0.0

    def __post_init__(self):
        eps = np.asarray(self.eps_seq, dtype=float)
        if np.any(eps < 0):
            raise ValueError("brick widths must be nonnegative")
        if self.tail_sq_bound < 0:
            raise ValueError("tail_sq_bound must be >= 0")
        object.__setattr__(self, "eps_seq", eps)
        eps.setflags(write=False)

    @property
    def sq_sum(self):
        """Square sum of the stored widths plus the declared tail bound."""
        return float(np.sum(self.eps_seq**2)) + self.tail_sq_bound


@dataclass(frozen=True)
class FiniteCompact:
    """Finite skeleton of a compact set: coordinate vectors in a labeled basis."""

    points: np.ndarray
    basis_label: str = ""

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.size == 0:
            raise ValueError("point set must be nonempty")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        object.__setattr__(self, "points", pts)
        pts.setflags(write=False)

    def gram(self):
        return self.points @ self.points.T


@dataclass(frozen=True)
class IsonormalSample:
    """Joint Gaussian draws indexed by skeleton points, covariance = Gram matrix."""

    points: np.ndarray
    draws: np.ndarray
    seed: int

    def __post_init__(self):
        if self.draws.shape[1] != self.points.shape[0]:
            raise ValueError("draws must have one column per skeleton point")

    def empirical_covariance(self):
        return self.draws.T @ self.draws / self.draws.shape[0]


def _check_basis(vec_len, brick, what):
    if vec_len > brick.eps_seq.shape[0]:
        raise ValueError(
            f"basis mismatch: {what} has {vec_len} coordinates but the brick "
            f"stores only {brick.eps_seq.shape[0]} widths"
        )


def brick_contains(x, brick: Brick) -> bool:
    """Whether |x_k| <= eps_k for every stored coordinate (non-strict).

    ``x`` must be expressed in the brick's basis with at most as many
    coordinates as stored widths; missing trailing coordinates are zero.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    _check_basis(x.shape[0], brick, "vector")
    return bool(np.all(np.abs(x) <= brick.eps_seq[: x.shape[0]]))


def covering_brick(points: FiniteCompact) -> Brick:
    """Smallest axis brick containing a finite point set: widths max_k |x_k|."""
    widths = np.max(np.abs(points.points), axis=0)
    return Brick(basis_label=points.basis_label, eps_seq=widths)


def minkowski_cover(brick: Brick, h) -> Brick:
    """Brick covering {x + t h : x in brick, |t| <= 1}: widths eps_k + |h_k|."""
    h = np.asarray(h, dtype=float).reshape(-1)
    _check_basis(h.shape[0], brick, "shift")
    widths = brick.eps_seq.copy()
    widths[: h.shape[0]] += np.abs(h)
    return Brick(basis_label=brick.basis_label, eps_seq=widths,
                 tail_sq_bound=brick.tail_sq_bound)


def project_cover(brick: Brick, drop_indices) -> Brick:
    """Brick covering the image under the projection that kills the given coordinates."""
    drop = np.asarray(sorted(set(int(i) for i in drop_indices)), dtype=int)
    if drop.size and (drop.min() < 0 or drop.max() >= brick.eps_seq.shape[0]):
        raise ValueError("drop index outside the stored width range")
    widths = brick.eps_seq.copy()
    widths[drop] = 0.0
    return Brick(basis_label=brick.basis_label, eps_seq=widths,
                 tail_sq_bound=brick.tail_sq_bound)


# ---------------------------------------------------------------------------
# isonormal sampling
# ---------------------------------------------------------------------------

def isonormal_sample(skeleton, n_samples, seed, oracle: CovarianceOracle = None) -> IsonormalSample:
    """Centered Gaussian draws on a skeleton with covariance equal to its Gram matrix.

    ``skeleton`` is a FiniteCompact (Gram from coordinate vectors) or, with
    ``oracle`` given, a plain array of index points whose Gram the oracle
    supplies.  The Gram is factored symmetrically; if the factorization fails,
    a diagonal jitter of 1e-10 * trace / M is added once.  An eigenvalue below
    -1e-6 * trace signals a broken covariance and raises.
    """
    if n_samples < 2:
        raise ValueError(f"n_samples must be >= 2, got {n_samples}")
    if oracle is not None:
        points = np.atleast_2d(np.asarray(skeleton, dtype=float))
        G = oracle.gram(points)
    else:
        points = skeleton.points
        G = skeleton.gram()
    if not np.allclose(G, G.T, atol=1e-10 * max(1.0, np.abs(G).max())):
        raise ValueError("Gram matrix must be symmetric")
    G = 0.5 * (G + G.T)
    M = G.shape[0]
    trace = float(np.trace(G))
    eigs = np.linalg.eigvalsh(G)
    if eigs[0] < -1e-6 * max(trace, 1e-300):
        raise NotPositiveSemidefiniteError(
            f"Gram matrix has eigenvalue {eigs[0]:.3e} below -1e-6 * trace; "
            "the covariance oracle looks broken"
        )
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        jitter = 1e-10 * trace / M
        L = np.linalg.cholesky(G + jitter * np.eye(M))
    rng = np.random.Generator(np.random.Philox(key=seed))
    Z = rng.standard_normal((int(n_samples), M))
    return IsonormalSample(points=points, draws=Z @ L.T, seed=int(seed))


def canonical_metric(gram) -> np.ndarray:
    """Pairwise distances d(u, v) = sqrt(G_uu + G_vv - 2 G_uv) from a Gram matrix."""
    G = np.asarray(gram, dtype=float)
    d = np.diag(G)
    sq = d[:, None] + d[None, :] - 2.0 * G
    np.maximum(sq, 0.0, out=sq)
    return np.sqrt(sq)


# ---------------------------------------------------------------------------
# entropy integral
# ---------------------------------------------------------------------------

def _greedy_covering_number(dist, radius):
    n = dist.shape[0]
    covered = np.zeros(n, dtype=bool)
    count = 0
    for i in range(n):
        if not covered[i]:
            count += 1
            covered |= dist[i] <= radius
    return count


def dudley_estimate(points: FiniteCompact, metric, n_levels=32) -> float:
    """Upper Riemann estimate of the entropy integral int sqrt(ln H_eps) d eps.

    Covering numbers H_eps come from a greedy net with centers restricted to
    the point set (first uncovered point in input order, closed balls) -- a
    2-approximation of the minimal net, so the value is an upper-bound
    estimate.  The radius grid is geometric from the set diameter down to the
    smallest positive pairwise distance; the remaining strip [0, d_min)
    contributes d_min * sqrt(ln #distinct points) exactly.
    """
    dist = np.asarray(metric, dtype=float)
    n = points.points.shape[0]
    if dist.shape != (n, n):
        raise ValueError(f"metric table must be {n}x{n}")
    if not np.allclose(dist, dist.T, atol=1e-12 * max(1.0, np.abs(dist).max())):
        raise ValueError("metric table must be symmetric")
    if np.any(np.abs(np.diag(dist)) > 1e-12):
        raise ValueError("metric table must have a zero diagonal")
    off = dist[np.triu_indices(n, 1)]
    off = off[off > 0]
    if off.size == 0:
        return 0.0
    diameter, d_min = float(off.max()), float(off.min())
    total = 0.0
    if diameter > d_min * (1 + 1e-12):
        grid = np.geomspace(diameter, d_min, n_levels)
        for hi, lo in zip(grid[:-1], grid[1:]):
            H = _greedy_covering_number(dist, lo)
            total += math.sqrt(math.log(H)) * (hi - lo)
    n_distinct = _greedy_covering_number(dist, d_min * (1 - 1e-12))
    total += math.sqrt(math.log(n_distinct)) * d_min
    return total
