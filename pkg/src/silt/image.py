"""Functionals of diffeomorphism images of planar Wiener paths.

For a planar diffeomorphism F (bounded, with bounded nonsingular derivative),
the delta family adapted to F is

    kF_eps(v_1, ..., v_k) = |det F'(F^-1(v_1))|^(1-k) *
                            prod_i g_eps(F^-1(v_{i+1}) - F^-1(v_i)),

which turns the k-fold simplex functional of the image path F(w) into the
Jacobian-weighted functional of w itself: both are the same algebraic
expression after the substitution u = F^-1(v).  ``image_slt`` evaluates both
routes numerically (the image route goes through the actual forward and
inverse maps) and reports their relative residual.
"""

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, SingularityError
from .path_sim import PlanarPath
from .slt_core import EnsembleConfig, MCStats, ensemble_renormalized, gauss_kernel, simplex_levels
from .weights import jacobian_weight


@dataclass(frozen=True)
class Diffeomorphism:
    """Planar map with inverse and Jacobian-determinant evaluators.

    All three callables are vectorized over (m, 2) arrays; ``jac_det`` returns
    (m,).  ``det_lower_bound`` declares a positive lower bound for |det F'| on
    the working region.
    """

    forward: object
    inverse: object
    jac_det: object
    det_lower_bound: float
    name: str = ""

    def __post_init__(self):
        if self.det_lower_bound <= 0:
            raise ValueError("det_lower_bound must be > 0")

    def roundtrip_residual(self, points):
        """max ||F(F^-1(v)) - v|| over the given points (invariant check)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        back = self.forward(self.inverse(pts))
        return float(np.max(np.linalg.norm(back - pts, axis=1)))


# ---------------------------------------------------------------------------
# builtin family: affine maps and bounded perturbations of the identity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _AffineFwd:
    A: np.ndarray
    b: np.ndarray

    def __call__(self, u):
        return np.atleast_2d(np.asarray(u, dtype=float)) @ self.A.T + self.b


@dataclass(frozen=True)
class _AffineInv:
    A_inv: np.ndarray
    b: np.ndarray

    def __call__(self, v):
        return (np.atleast_2d(np.asarray(v, dtype=float)) - self.b) @ self.A_inv.T


@dataclass(frozen=True)
class _ConstDet:
    value: float

    def __call__(self, u):
        return np.full(np.atleast_2d(u).shape[0], self.value)


def affine_map(A, b=(0.0, 0.0), name="affine") -> Diffeomorphism:
    """Affine diffeomorphism u -> A u + b with det A != 0."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    det = float(np.linalg.det(A))
    if det == 0.0:
        raise ValueError("affine map must have a nonsingular matrix")
    return Diffeomorphism(
        forward=_AffineFwd(A, b),
        inverse=_AffineInv(np.linalg.inv(A), b),
        jac_det=_ConstDet(det),
        det_lower_bound=abs(det),
        name=name,
    )


@dataclass(frozen=True)
class _PerturbFwd:
    alpha: float

    def __call__(self, u):
        u = np.atleast_2d(np.asarray(u, dtype=float))
        s = np.stack([np.sin(u[:, 1]), np.cos(u[:, 0])], axis=1)
        return u + self.alpha * s


@dataclass(frozen=True)
class _PerturbInv:
    """Damped fixed-point inverse of u -> u + alpha s(u); contraction rate alpha."""

    alpha: float
    damping: float = 1.0
    residual_tol: float = 1e-12
    max_iter: int = 500

    def __call__(self, v):
        v = np.atleast_2d(np.asarray(v, dtype=float))
        fwd = _PerturbFwd(self.alpha)
        u = v.copy()
        for _ in range(self.max_iter):
            s = np.stack([np.sin(u[:, 1]), np.cos(u[:, 0])], axis=1)
            u = (1.0 - self.damping) * u + self.damping * (v - self.alpha * s)
            if np.max(np.linalg.norm(fwd(u) - v, axis=1)) <= self.residual_tol:
                return u
        raise RuntimeError("fixed-point inversion failed to reach the residual tolerance")


@dataclass(frozen=True)
class _PerturbDet:
    alpha: float

    def __call__(self, u):
        u = np.atleast_2d(np.asarray(u, dtype=float))
        return 1.0 + self.alpha**2 * np.sin(u[:, 0]) * np.cos(u[:, 1])


def perturbation_map(alpha=0.2, name="swirl") -> Diffeomorphism:
    """Bounded smooth perturbation u + alpha (sin u_2, cos u_1) of the identity.

    det F' = 1 + alpha^2 sin(u_1) cos(u_2) >= 1 - alpha^2 > 0 for |alpha| < 1,
    so the map is a global diffeomorphism; the inverse iterates the fixed
    point to a 1e-12 forward residual.
    """
    if not 0 <= alpha < 1:
        raise ValueError("alpha must lie in [0, 1)")
    return Diffeomorphism(
        forward=_PerturbFwd(alpha),
        inverse=_PerturbInv(alpha),
        jac_det=_PerturbDet(alpha),
        det_lower_bound=1.0 - alpha**2,
        name=name,
    )


def builtin_maps() -> dict:
    """The builtin diffeomorphism family used by the CLI and the test suite."""
    return {
        "identity": affine_map(np.eye(2), name="identity"),
        "scale2": affine_map(2.0 * np.eye(2), name="scale2"),
        "shear": affine_map([[1.2, 0.3], [-0.2, 0.8]], b=[0.1, -0.2], name="shear"),
        "swirl": perturbation_map(0.2, name="swirl"),
    }


# ---------------------------------------------------------------------------
# adapted kernel and the substitution identity
# ---------------------------------------------------------------------------

def image_kernel(v_list, epsilon, F: Diffeomorphism) -> float:
    """Adapted delta-family kernel kF_eps(v_1, ..., v_k) for k >= 2 points."""
    v = np.atleast_2d(np.asarray(v_list, dtype=float))
    k = v.shape[0]
    if k < 2:
        raise ValueError(f"image kernel needs k >= 2 points, got {k}")
    if epsilon <= 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    u = F.inverse(v)
    det1 = float(np.abs(F.jac_det(u[:1]))[0])
    if det1 < F.det_lower_bound * (1 - 1e-12):
        raise SingularityError(tuple(u[0]), f"|det F'| = {det1:g} below declared bound "
                                            f"{F.det_lower_bound:g} at {tuple(u[0])}")
    value = det1 ** (-(k - 1))
    for i in range(k - 1):
        value *= float(gauss_kernel(u[i + 1] - u[i], epsilon))
    return value


@dataclass(frozen=True)
class ImageIdentity:
    """Both evaluation routes of the image functional and their relative residual."""

    value_image: float
    value_weighted: float
    residual: float
    k: int
    epsilon: float


def image_slt(path: PlanarPath, F: Diffeomorphism, epsilon, k) -> ImageIdentity:
    """Image-path functional evaluated both ways.

    Route (a) applies the adapted kernel to the image nodes F(w) (going
    through the numeric forward and inverse maps); route (b) is the simplex
    sum on the original path with the Jacobian weight.  They are the same
    expression after substitution, so the residual is a numerical identity
    check (inverse accuracy, rounding).
    """
    if k < 2:
        raise ValueError(f"image functional needs k >= 2, got {k}")
    n = path.n_steps
    rho = jacobian_weight(F, k)

    u_hat = F.inverse(F.forward(path.points))
    rows_a = rho.values(u_hat[:n])[None, None, :]
    val_a = float(simplex_levels(u_hat[None], rows_a, [epsilon], k)[0, 0, 0, k - 1])

    rows_b = rho.values(path.points[:n])[None, None, :]
    val_b = float(simplex_levels(path.points[None], rows_b, [epsilon], k)[0, 0, 0, k - 1])

    denom = max(abs(val_a), abs(val_b))
    residual = 0.0 if denom == 0.0 else abs(val_a - val_b) / denom
    return ImageIdentity(value_image=val_a, value_weighted=val_b, residual=residual,
                         k=int(k), epsilon=float(epsilon))


def renorm_image(cfg: EnsembleConfig, F: Diffeomorphism, epsilon, k) -> MCStats:
    """Monte Carlo estimate of the renormalized image functional.

    Equals the renormalized estimate with the Jacobian weight 1/|det F'|^(k-1);
    the weight is the k-dependent one at every renormalization level.
    """
    result = ensemble_renormalized(cfg, [epsilon], k, jacobian_weight(F, k))
    return result.stats()


# ---------------------------------------------------------------------------
# delta-family convergence check
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BumpFunction:
    """Smooth compactly supported bump, value exp(-1) at the center.

    Accepts stacked points of shape (m, 2 j) and evaluates the product of the
    planar bump over the j planar blocks, so one object serves any k.
    """

    center: np.ndarray
    radius: float

    def __call__(self, v):
        v = np.atleast_2d(np.asarray(v, dtype=float))
        out = np.ones(v.shape[0])
        for j in range(v.shape[1] // 2):
            block = v[:, 2 * j : 2 * j + 2]
            r2 = np.sum((block - self.center) ** 2, axis=1) / self.radius**2
            vals = np.zeros(v.shape[0])
            inside = r2 < 1.0
            vals[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
            out *= vals
        return out


def bump_function(center=(0.0, 0.0), radius=1.5) -> BumpFunction:
    return BumpFunction(center=np.asarray(center, dtype=float), radius=float(radius))


@dataclass(frozen=True)
class DeltaRow:
    """One scale of the delta-family check: quadrature value vs the point limit."""

    epsilon: float
    value: float
    target: float
    deviation: float


def delta_family_check(phi, v_k, F: Diffeomorphism, epsilon_levels, k=2,
                       n_nodes=41, mass_tol=1e-8):
    """Convergence table of integral(phi * kF_eps) toward phi at the collapsed point.

    The integral over the 2(k-1) free points is taken in pre-image coordinates
    where each kernel factor is a Gaussian of scale sqrt(eps); tensor
    Gauss-Hermite nodes adapted to that scale evaluate it.  The Gaussian mass
    outside the node radius must stay below ``mass_tol`` (per factor), else
    the node count is rejected as a configuration error.
    """
    if k not in (2, 3):
        raise ValueError("delta-family check supports k = 2 or 3 only")
    eps_levels = np.asarray(epsilon_levels, dtype=float)
    if np.any(eps_levels <= 0):
        raise ValueError("all epsilon levels must be > 0")
    nodes, wts = np.polynomial.hermite.hermgauss(int(n_nodes))
    x_max = float(np.max(np.abs(nodes)))
    mass_out = math.exp(-x_max * x_max)  # exact planar Gaussian tail at the node radius
    if mass_out > mass_tol:
        raise ConfigError(
            f"truncation radius too small: {n_nodes} nodes leave Gaussian mass "
            f"{mass_out:.2e} outside (tolerance {mass_tol:.1e}); increase n_nodes"
        )
    v_k = np.asarray(v_k, dtype=float)
    c = F.inverse(v_k[None, :])[0]
    target = float(phi(np.tile(v_k, (1, k - 1)))[0])

    # planar tensor nodes and weights for one Gaussian factor
    N1, N2 = np.meshgrid(nodes, nodes, indexing="ij")
    planar = np.stack([N1.ravel(), N2.ravel()], axis=1)
    pw = np.outer(wts, wts).ravel()

    rows = []
    for eps in eps_levels:
        scale = math.sqrt(2.0 * eps)
        if k == 2:
            u1 = c[None, :] + scale * planar
            vals = phi(F.forward(u1))
            value = float(np.sum(pw * vals) / math.pi)
        else:
            u2 = c[None, :] + scale * planar                      # outer shell
            value = 0.0
            det2 = np.abs(F.jac_det(u2))
            for idx in range(u2.shape[0]):
                u1 = u2[idx][None, :] + scale * planar            # inner shell
                det1 = np.abs(F.jac_det(u1))
                integrand = phi(np.hstack([F.forward(u1), np.tile(F.forward(u2[idx][None, :]), (u1.shape[0], 1))]))
                inner = np.sum(pw * integrand * det2[idx] / det1) / math.pi
                value += pw[idx] * inner
            value = float(value / math.pi)
        rows.append(DeltaRow(epsilon=float(eps), value=value, target=target,
                             deviation=abs(value - target)))
    return rows
