"""Deterministic low-discrepancy sampling helpers.

Halton sequences drive every sampling stage; a seed only offsets the
starting index, so results are reproducible and independent of worker
count by construction.
"""

from __future__ import annotations

import numpy as np

_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47)


def halton(dim: int, count: int, seed: int = 0) -> np.ndarray:
    """Halton points in [0,1)^dim, shape (dim, count)."""
    if dim > len(_PRIMES):
        raise ValueError(f"halton supports up to {len(_PRIMES)} dimensions")
    start = 20 + (seed % 1_000_003) * 17
    idx = np.arange(start, start + count, dtype=np.int64)
    out = np.empty((dim, count))
    for d in range(dim):
        base = _PRIMES[d]
        x = np.zeros(count)
        denom = 1.0
        i = idx.copy()
        while np.any(i > 0):
            denom *= base
            x += (i % base) / denom
            i //= base
        out[d] = x
    return out


def gaussians(dim: int, count: int, seed: int = 0) -> np.ndarray:
    """Deterministic standard normals via Halton + Box-Muller, shape (dim, count)."""
    pairs = (dim + 1) // 2
    u = halton(2 * pairs, count, seed=seed)
    u1 = np.clip(u[:pairs], 1e-12, 1.0)
    u2 = u[pairs:2 * pairs]
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)], axis=0)
    return z[:dim]


def sphere(dim: int, count: int, seed: int = 0) -> np.ndarray:
    """Low-discrepancy points on the unit sphere, shape (dim, count)."""
    if dim == 1:
        signs = np.where(np.arange(count) % 2 == 0, 1.0, -1.0)
        return signs[None, :]
    z = gaussians(dim, count, seed=seed)
    norms = np.linalg.norm(z, axis=0)
    norms = np.where(norms > 1e-12, norms, 1.0)
    return z / norms


def ball(center, radius: float, count: int, seed: int = 0) -> np.ndarray:
    """Low-discrepancy points in the closed ball, shape (dim, count)."""
    center = np.asarray(center, dtype=float)
    dim = center.shape[0]
    dirs = sphere(dim, count, seed=seed)
    u = halton(1, count, seed=seed + 101)[0]
    radii = radius * u ** (1.0 / dim)
    return center[:, None] + dirs * radii[None, :]
