"""Discretized planar Wiener paths on [0, 1] with reproducible counter-based seeding.

Seed policy
-----------
All randomness flows from a single 64-bit root seed.  Path number ``i`` of an
ensemble draws its increments from ``numpy.random.Philox(key=seed).jumped(i)``,
i.e. the counter-based generator keyed by the root seed and advanced by ``i``
jumps of 2**128 steps.  The stream of a path therefore depends only on
``(n_steps, seed, stream)`` and is identical no matter how paths are batched or
distributed over workers.
"""

from dataclasses import dataclass

import numpy as np

MAX_SEED = 2**64 - 1


def _generator(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed).jumped(stream))


def _check_seed(seed):
    if not (0 <= int(seed) <= MAX_SEED):
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")


@dataclass(frozen=True)
class PlanarPath:
    """A planar Wiener trajectory sampled on the uniform grid t_i = i / n_steps.

    ``points`` has shape ``(n_steps + 1, 2)`` with ``points[0] = (0, 0)``; the
    array is frozen (read-only) so paths can be shared between workers.
    """

    n_steps: int
    points: np.ndarray
    seed: int
    stream: int = 0

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")
        _check_seed(self.seed)
        if self.points.shape != (self.n_steps + 1, 2):
            raise ValueError(
                f"points must have shape {(self.n_steps + 1, 2)}, got {self.points.shape}"
            )
        if self.points[0, 0] != 0.0 or self.points[0, 1] != 0.0:
            raise ValueError("points[0] must be the origin")
        self.points.setflags(write=False)

    @property
    def times(self) -> np.ndarray:
        """Grid times i / n_steps, i = 0..n_steps."""
        return np.arange(self.n_steps + 1) / self.n_steps


def sample_path(n_steps: int, seed: int, stream: int = 0) -> PlanarPath:
    """Sample one planar Wiener path on [0, 1] over a uniform n_steps grid.

    Increments are independent bivariate centered Gaussians with per-coordinate
    variance ``1 / n_steps``.  Identical ``(n_steps, seed, stream)`` yields
    bit-identical output across runs and worker counts.
    """
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    _check_seed(seed)
    rng = _generator(seed, stream)
    increments = rng.standard_normal((n_steps, 2)) * np.sqrt(1.0 / n_steps)
    points = np.empty((n_steps + 1, 2))
    points[0] = 0.0
    np.cumsum(increments, axis=0, out=points[1:])
    return PlanarPath(n_steps=n_steps, points=points, seed=int(seed), stream=int(stream))


def sample_path_points(n_steps: int, seed: int, streams) -> np.ndarray:
    """Node arrays for a batch of paths, shape ``(len(streams), n_steps + 1, 2)``.

    Each row equals ``sample_path(n_steps, seed, stream).points``; batching is
    a pure convenience and does not change any individual path.
    """
    streams = list(streams)
    out = np.empty((len(streams), n_steps + 1, 2))
    scale = np.sqrt(1.0 / n_steps)
    for row, stream in enumerate(streams):
        rng = _generator(seed, stream)
        out[row, 0] = 0.0
        np.cumsum(rng.standard_normal((n_steps, 2)) * scale, axis=0, out=out[row, 1:])
    return out


def path_value(path: PlanarPath, t: float) -> np.ndarray:
    """Value of the path at time t by linear interpolation; exact at grid nodes."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    tn = t * path.n_steps
    nearest = round(tn)
    # snap to the node when t was produced as i/n in floating point
    if abs(tn - nearest) <= 1e-9 * max(1.0, abs(tn)):
        return path.points[int(nearest)].copy()
    idx = min(int(np.floor(tn)), path.n_steps - 1)
    frac = tn - idx
    return (1.0 - frac) * path.points[idx] + frac * path.points[idx + 1]
