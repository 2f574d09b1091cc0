"""Shared test helpers: independent oracles kept free of the library's internals."""

import math

import numpy as np


def brute_force_simplex(points, rho_vals, epsilon, k):
    """Literal nested-loop ordered-tuple sum, written with plain python floats.

    Independent oracle for the grid simplex functional: iterates every strictly
    increasing k-tuple of node indices 0..n-1 and multiplies Gaussian kernel
    factors directly.  Deliberately avoids the library's evaluation path.
    """
    pts = [(float(p[0]), float(p[1])) for p in points]
    rho = [float(r) for r in rho_vals]
    n = len(pts) - 1
    norm = 1.0 / (2.0 * math.pi * epsilon)
    inv2e = 1.0 / (2.0 * epsilon)

    def kern(a, b):
        dx = pts[b][0] - pts[a][0]
        dy = pts[b][1] - pts[a][1]
        return norm * math.exp(-(dx * dx + dy * dy) * inv2e)

    total = 0.0
    if k == 1:
        for i in range(n):
            total += rho[i]
    elif k == 2:
        for i in range(n):
            for j in range(i + 1, n):
                total += rho[i] * kern(i, j)
    elif k == 3:
        for i in range(n):
            for j in range(i + 1, n):
                kij = kern(i, j)
                for l in range(j + 1, n):
                    total += rho[i] * kij * kern(j, l)
    else:
        raise ValueError("oracle supports k <= 3")
    return total / n**k


def lattice_mean_double(n, epsilon):
    """Exact mean of the discrete double estimator: the pair sum has mean
    1/(2 pi (d/n + eps)) at gap d, with n - d pairs per gap."""
    d = np.arange(1, n)
    return float(np.sum((n - d) / (2.0 * np.pi * (d / n + epsilon))) / n**2)
