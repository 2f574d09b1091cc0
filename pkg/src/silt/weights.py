"""Weight functions: scalar, Jacobian-induced, and Hilbert-valued.

A Hilbert-valued weight is represented by finitely many coordinate functions
u -> (rho(u), e_m) in a labeled orthonormal basis plus a declared bound on the
square sum of the omitted coordinate sups.  The square-summability profile of
the coordinate sups decides whether the weight's range fits in a covering
brick (see the brick module).

Two concrete random-field weights are provided: a piecewise-linear chain of
independent rare-spike variables (unbounded sup, vanishing norms) and a
Gaussian-displaced occupation-density field with a log-singular kernel.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .exceptions import RankDeficiencyError, SingularityError
from .slt_core import EnsembleConfig, MCStats, ensemble_renormalized


# ---------------------------------------------------------------------------
# weight containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _ConstantEval:
    value: float

    def __call__(self, pts):
        pts = np.asarray(pts)
        return np.full(pts.shape[0], self.value)


@dataclass(frozen=True)
class ScalarWeight:
    """Real-valued weight: a vectorized evaluator plus an optional declared sup bound.

    ``evaluator`` maps an (m, d) array of points to an (m,) array.  When
    ``sup_norm`` is declared, every evaluation is checked against it.
    """

    evaluator: object
    sup_norm: float | None = None
    name: str = ""

    def values(self, pts):
        pts = np.asarray(pts, dtype=float)
        out = np.asarray(self.evaluator(pts), dtype=float)
        if self.sup_norm is not None:
            worst = float(np.max(np.abs(out))) if out.size else 0.0
            if worst > self.sup_norm * (1 + 1e-12) + 1e-300:
                raise ValueError(
                    f"weight {self.name or '<anonymous>'} exceeded its declared "
                    f"sup_norm {self.sup_norm:g} (observed {worst:g})"
                )
        return out

    @staticmethod
    def constant(c, name=None):
        return ScalarWeight(evaluator=_ConstantEval(float(c)), sup_norm=abs(float(c)),
                            name=name or f"const({c:g})")

    @staticmethod
    def from_function(func, sup_norm=None, name=""):
        return ScalarWeight(evaluator=func, sup_norm=sup_norm, name=name)


@dataclass(frozen=True)
class _ComposedEval:
    inner: object
    param_map: object

    def __call__(self, pts):
        return self.inner(self.param_map(pts))


@dataclass(frozen=True)
class RadialParameterMap:
    """Planar adapter t(u) = min(offset + ||u||, t_max) for parameter-domain weights."""

    t_max: float
    offset: float = 1.0

    def __call__(self, pts):
        pts = np.asarray(pts, dtype=float)
        return np.minimum(self.offset + np.linalg.norm(pts, axis=-1), self.t_max)


@dataclass(frozen=True)
class HilbertWeight:
    """Hilbert-valued weight given by M coordinate functions in a labeled basis.

    ``tail_bound`` is a declared bound related to the omitted coordinates
    (sum over m > M of sup (rho, e_m)^2); it is reported alongside truncation
    diagnostics, never certified numerically.
    """

    coords: tuple
    tail_bound: float
    basis_label: str

    def __post_init__(self):
        if len(self.coords) < 1:
            raise ValueError("a Hilbert weight needs at least one coordinate")
        if self.tail_bound < 0:
            raise ValueError("tail_bound must be >= 0")
        object.__setattr__(self, "coords", tuple(self.coords))

    @property
    def n_coords(self):
        return len(self.coords)

    def coordinate_values(self, pts):
        """Matrix of coordinate values on a point set, shape (M, len(pts))."""
        pts = np.asarray(pts, dtype=float)
        return np.stack([c.values(pts) for c in self.coords])

    def compose(self, param_map, basis_label=None):
        """Weight with every coordinate precomposed with ``param_map`` (new domain)."""
        coords = tuple(
            ScalarWeight(evaluator=_ComposedEval(c.evaluator, param_map),
                         sup_norm=c.sup_norm, name=c.name)
            for c in self.coords
        )
        return HilbertWeight(coords=coords, tail_bound=self.tail_bound,
                             basis_label=basis_label or self.basis_label)


@dataclass(frozen=True)
class CovarianceOracle:
    """Pairwise inner-product oracle (u, v) -> (rho(u), rho(v)) for a random field."""

    evaluator: object
    name: str = ""

    def gram(self, points):
        """Gram matrix on a point set; validated symmetric with nonnegative
        diagonal and 2x2 principal minors (up to jitter tolerance)."""
        points = np.asarray(points, dtype=float)
        n = points.shape[0]
        G = np.empty((n, n))
        for i in range(n):
            for j in range(i, n):
                G[i, j] = G[j, i] = float(self.evaluator(points[i], points[j]))
        scale = max(np.abs(G).max(), 1e-300)
        tol = 1e-8 * scale
        if np.any(np.diag(G) < -tol):
            raise ValueError("covariance oracle produced a negative diagonal entry")
        d = np.diag(G)
        minors = np.outer(d, d) - G * G
        if np.any(minors < -tol * scale):
            raise ValueError("covariance oracle violated a 2x2 principal minor bound")
        return G


# ---------------------------------------------------------------------------
# square-summability profile
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SupProfile:
    """Per-coordinate grid sups s_m = max (rho, e_m)^2 and their partial sums."""

    sup_squares: np.ndarray
    partial_sums: np.ndarray
    tail_bound: float

    @property
    def increments(self):
        return self.sup_squares


def coordinate_sup_profile(weight: HilbertWeight, grid) -> SupProfile:
    """Square-summability profile of a Hilbert weight on a finite grid.

    Returns the squared coordinate sups over the grid, their (nondecreasing)
    partial sums, and the weight's declared tail bound.  The grid stands in
    for the full domain; honest use requires the declared tail bound to cover
    whatever the grid misses.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("grid must be nonempty")
    vals = weight.coordinate_values(grid)
    sup_sq = np.max(vals * vals, axis=1)
    return SupProfile(sup_squares=sup_sq, partial_sums=np.cumsum(sup_sq),
                      tail_bound=float(weight.tail_bound))


# ---------------------------------------------------------------------------
# coupled Hilbert-valued estimation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HilbertSltResult:
    """Per-coordinate Monte Carlo stats plus the truncated squared-norm profile.

    ``norm_sq_partial[j]`` is the sample mean of sum_{m<=j+1} V_m^2 over the
    shared path ensemble (V_m the renormalized functional of coordinate m);
    it is nondecreasing in j by construction.  ``tail_bound`` is reported as
    a qualitative truncation indicator.
    """

    epsilon: float
    k: int
    coord_stats: tuple
    norm_sq_partial: np.ndarray
    tail_bound: float


def hilbert_slt(cfg: EnsembleConfig, weight: HilbertWeight, epsilon, k) -> HilbertSltResult:
    """Renormalized functionals of every coordinate of a Hilbert weight, coupled.

    All coordinates reuse the same path ensemble and the same kernel sweeps,
    so cross-coordinate combinations (notably the truncated squared norm) are
    computed pathwise.
    """
    if weight.n_coords < 1:
        raise ValueError("weight has no coordinates")
    result = ensemble_renormalized(cfg, [epsilon], k, weight)
    per_path = result.renormalized[:, :, 0]  # (n_paths, M)
    stats = tuple(MCStats.from_samples(per_path[:, m]) for m in range(weight.n_coords))
    partial = np.mean(np.cumsum(per_path * per_path, axis=1), axis=0)
    return HilbertSltResult(epsilon=float(epsilon), k=int(k), coord_stats=stats,
                            norm_sq_partial=partial, tail_bound=float(weight.tail_bound))


# ---------------------------------------------------------------------------
# Jacobian-induced weights
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _JacobianEval:
    diffeo: object
    power: int

    def __call__(self, pts):
        pts = np.asarray(pts, dtype=float)
        det = np.abs(np.asarray(self.diffeo.jac_det(pts), dtype=float))
        bad = det == 0.0
        if np.any(bad):
            where = pts[np.argmax(bad)]
            raise SingularityError(where)
        return det ** (-self.power)


def jacobian_weight(diffeo, k) -> ScalarWeight:
    """Weight u -> 1/|det F'(u)|^(k-1) induced by a diffeomorphism F.

    Requires k >= 2 (k = 1 would be the trivial unit weight).  Evaluating at a
    point with vanishing determinant raises SingularityError naming the point.
    """
    if k < 2:
        raise ValueError(f"jacobian weight needs k >= 2, got {k}")
    sup = None
    if getattr(diffeo, "det_lower_bound", 0) > 0:
        sup = float(diffeo.det_lower_bound) ** (-(k - 1))
    return ScalarWeight(evaluator=_JacobianEval(diffeo, k - 1), sup_norm=sup,
                        name=f"jacobian({getattr(diffeo, 'name', 'F')}, k={k})")


# ---------------------------------------------------------------------------
# rare-spike chain weight
# ---------------------------------------------------------------------------

def spike_gram(n_levels) -> np.ndarray:
    """Closed-form Gram matrix of the rare-spike family.

    Level n takes value n^(1/6) with probability 1/n, else 0, independently
    across levels, so (f_n, f_n) = n^(-2/3) and (f_n, f_m) = n^(-5/6) m^(-5/6)
    for n != m.
    """
    n = np.arange(1, n_levels + 1, dtype=float)
    a = n ** (-5.0 / 6.0)
    G = np.outer(a, a)
    np.fill_diagonal(G, n ** (-2.0 / 3.0))
    return G


def pivoted_cholesky(G, tol=1e-12):
    """Gram-Schmidt orthonormalization of a Gram matrix, largest pivot first.

    Returns (L, pivot_order) with row i of L holding the coordinates of the
    i-th original vector in the produced orthonormal basis (L @ L.T == G).
    Raises RankDeficiencyError naming the offending index when a pivot falls
    below tol * mean diagonal.
    """
    G = np.array(G, dtype=float)
    N = G.shape[0]
    if G.shape != (N, N) or not np.allclose(G, G.T, atol=1e-12 * max(1.0, np.abs(G).max())):
        raise ValueError("Gram matrix must be square and symmetric")
    perm = np.arange(N)
    L = np.zeros_like(G)
    floor = tol * max(np.trace(G) / N, 1e-300)
    for j in range(N):
        p = j + int(np.argmax(np.diag(G)[j:]))
        if G[p, p] <= floor:
            raise RankDeficiencyError(int(perm[p]))
        for A in (G, L):
            A[[j, p]] = A[[p, j]]
            A[:, [j, p]] = A[:, [p, j]]
        perm[[j, p]] = perm[[p, j]]
        L[j, j] = math.sqrt(G[j, j])
        L[j + 1:, j] = G[j + 1:, j] / L[j, j]
        G[j + 1:, j + 1:] -= np.outer(L[j + 1:, j], L[j + 1:, j])
    inverse = np.argsort(perm)
    return L[inverse], perm


@dataclass(frozen=True)
class _SpikeCoordEval:
    """Coordinate m of the interpolated spike chain on the parameter domain [1, N]."""

    coord_column: np.ndarray
    m: int

    def __call__(self, ts):
        ts = np.asarray(ts, dtype=float).reshape(-1)
        N = self.coord_column.shape[0]
        if np.any(ts < 1.0 - 1e-12) or np.any(ts > N + 1e-12):
            raise ValueError(f"parameter values must lie in [1, {N}]")
        base = np.clip(np.floor(ts).astype(int), 1, N - 1)
        frac = ts - base
        return (1.0 - frac) * self.coord_column[base - 1] + frac * self.coord_column[base]


@dataclass(frozen=True)
class RareSpikeWeight(HilbertWeight):
    """Interpolated chain of independent rare spikes, with its Gram data attached.

    The value at parameter t in [n, n+1] interpolates the n-th and (n+1)-th
    spike variables linearly; norms decay like n^(-1/3), while the pointwise
    sup of the family is infinite.  ``coord_rows[i]`` holds the coordinates of
    the i-th spike variable in the orthonormalized basis.
    """

    gram_matrix: np.ndarray = field(default=None, repr=False)
    coord_rows: np.ndarray = field(default=None, repr=False)
    pivot_order: np.ndarray = field(default=None, repr=False)

    def default_grid(self, points_per_segment=8):
        n = self.n_coords
        return np.linspace(1.0, n, (n - 1) * points_per_segment + 1)


def rare_spike_weight(n_levels) -> RareSpikeWeight:
    """Hilbert weight over the parameter domain [1, n_levels] from the spike chain.

    The closed-form Gram matrix is orthonormalized by pivoted Gram-Schmidt
    (the spike variables are neither centered nor orthogonal) and the returned
    weight exposes the coordinates of the interpolated chain in the resulting
    basis.  ``tail_bound`` is set to the declared norm decay of the first
    omitted level, (n_levels + 1)^(-2/3), the one-step domain-extension bound.
    """
    if n_levels < 2:
        raise ValueError(f"n_levels must be >= 2, got {n_levels}")
    G = spike_gram(n_levels)
    L, perm = pivoted_cholesky(G)
    coords = tuple(
        ScalarWeight(
            evaluator=_SpikeCoordEval(np.ascontiguousarray(L[:, m]), m),
            sup_norm=float(np.max(np.abs(L[:, m]))),
            name=f"spike-coord-{m}",
        )
        for m in range(n_levels)
    )
    return RareSpikeWeight(
        coords=coords,
        tail_bound=float((n_levels + 1) ** (-2.0 / 3.0)),
        basis_label=f"spike-gs-{n_levels}",
        gram_matrix=G,
        coord_rows=L,
        pivot_order=perm,
    )


# ---------------------------------------------------------------------------
# occupation-density field
# ---------------------------------------------------------------------------

def occupation_kernel(points) -> np.ndarray:
    """Mean occupation density of planar Brownian motion over [0, 1].

    f(u) = integral over t in (0, 1] of the centered Gaussian density of scale
    t at u, evaluated by adaptive quadrature in log time (the integrand is a
    smooth bump there).  Diverges logarithmically at the origin, which is
    rejected.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    r2 = np.sum(pts * pts, axis=-1)
    if np.any(r2 == 0.0):
        raise ValueError("occupation kernel is +inf at the origin; exclude it")
    out = np.empty(r2.shape)
    for i, s in enumerate(r2):
        half = 0.5 * s
        lo = math.log(half) - 45.0 if half < 1.0 else -45.0
        val, _ = integrate.quad(lambda x: math.exp(-half * math.exp(-x)), lo, 0.0, limit=200)
        out[i] = val / (2.0 * math.pi)
    return out if np.asarray(points).ndim > 1 else float(out[0])


@dataclass(frozen=True)
class OccupationField:
    """Gaussian-displaced occupation field rho1(u) = exp(-||u||^2) f(u - xi).

    The displacement xi is standard Gaussian; the covariance
    E rho1(u) rho1(v) = exp(-||u||^2 - ||v||^2) E[f(u - z) f(v - z)] is
    estimated by Monte Carlo over a shared, seeded z-sample, so the oracle is
    symmetric by construction and deterministic given the seed.
    """

    grid: np.ndarray
    mc_samples: int
    seed: int
    _z: np.ndarray = field(default=None, repr=False)

    def f(self, points):
        return occupation_kernel(points)

    def covariance(self, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        fu = occupation_kernel(u[None, :] - self._z)
        fv = fu if np.array_equal(u, v) else occupation_kernel(v[None, :] - self._z)
        envelope = math.exp(-float(u @ u) - float(v @ v))
        return envelope * float(np.mean(fu * fv))

    def covariance_matrix(self):
        pts = self.grid
        n = pts.shape[0]
        F = np.stack([occupation_kernel(p[None, :] - self._z) for p in pts])
        env = np.exp(-np.sum(pts * pts, axis=1))
        return np.outer(env, env) * (F @ F.T) / self.mc_samples

    @property
    def oracle(self) -> CovarianceOracle:
        return CovarianceOracle(evaluator=self.covariance, name="occupation-field")


def occupation_density_field(grid, mc_samples, seed) -> OccupationField:
    """Occupation field with its covariance oracle on a finite planar grid.

    The grid must exclude the origin (where the kernel diverges);
    ``mc_samples`` of at least 100 displacement draws are required.
    """
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if np.any(np.sum(grid * grid, axis=1) == 0.0):
        raise ValueError("grid must exclude the origin")
    if mc_samples < 100:
        raise ValueError(f"mc_samples must be >= 100, got {mc_samples}")
    rng = np.random.Generator(np.random.Philox(key=seed))
    z = rng.standard_normal((int(mc_samples), 2))
    return OccupationField(grid=grid, mc_samples=int(mc_samples), seed=int(seed), _z=z)
