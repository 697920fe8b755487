"""Geometry of constraint cones: nonpositive orthant and second-order cone.

Supplies membership, Euclidean projection, normal/tangent cone tests at a
point, and the local smooth-reduction data (h, its Jacobian and Hessians)
that feeds the curvature correction of the second-order machinery.
Conventions: the orthant block is the NONPOSITIVE orthant {y : y <= 0};
the second-order cone soc(m) is {y : y_1 >= ||(y_2..y_m)||} with the first
coordinate on the axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Cone",
    "orthant",
    "soc",
    "Reduction",
    "project",
    "distance",
    "contains",
    "normal_cone_test",
    "tangent_cone_test",
    "reduction_at",
    "project_normal",
    "MEMBERSHIP_TOL",
]

MEMBERSHIP_TOL = 1e-9


@dataclass(frozen=True)
class Cone:
    kind: str  # "orthant" | "soc"
    m: int

    def __post_init__(self):
        if self.kind not in ("orthant", "soc"):
            raise ValueError(f"unknown cone kind {self.kind!r}")
        if self.m < 1:
            raise ValueError("cone dimension must be positive")
        if self.kind == "soc" and self.m < 2:
            raise ValueError("second-order cone needs dimension >= 2")


def orthant(m: int) -> Cone:
    return Cone("orthant", m)


def soc(m: int) -> Cone:
    return Cone("soc", m)


def project(k: Cone, y) -> np.ndarray:
    """Euclidean projection onto the cone (total on finite inputs)."""
    y = np.asarray(y, dtype=float)
    if y.shape != (k.m,):
        raise ValueError(f"expected vector of length {k.m}, got shape {y.shape}")
    if k.kind == "orthant":
        return np.minimum(y, 0.0)
    t, r = y[0], float(np.linalg.norm(y[1:]))
    if t >= r:
        return y.copy()
    if t <= -r:
        return np.zeros_like(y)
    alpha = (t + r) / 2.0
    out = np.empty_like(y)
    out[0] = alpha
    out[1:] = alpha * y[1:] / r
    return out


def project_batch(k: Cone, Y: np.ndarray) -> np.ndarray:
    """Columnwise projection; Y has shape (m, N)."""
    if k.kind == "orthant":
        return np.minimum(Y, 0.0)
    t = Y[0]
    r = np.linalg.norm(Y[1:], axis=0)
    inside = t >= r
    polar = t <= -r
    alpha = (t + r) / 2.0
    safe_r = np.where(r > 0, r, 1.0)
    out = np.concatenate([alpha[None, :], alpha / safe_r * Y[1:]], axis=0)
    out[:, inside] = Y[:, inside]
    out[:, polar] = 0.0
    return out


def distance(k: Cone, y) -> float:
    y = np.asarray(y, dtype=float)
    return float(np.linalg.norm(y - project(k, y)))


def contains(k: Cone, y, tol: float = MEMBERSHIP_TOL) -> bool:
    return distance(k, y) <= tol


def normal_cone_test(k: Cone, y, v, tol: float = MEMBERSHIP_TOL) -> bool:
    """True iff v lies in the normal cone to the cone at y, within tol.

    Orthant: v >= 0 with v_i = 0 on rows where y_i < 0.  Soc: {0} at
    interior points, the polar cone -soc(m) at the vertex, and the single
    ray spanned by (-1, ybar/||ybar||) at nonzero boundary points.
    """
    y = np.asarray(y, dtype=float)
    v = np.asarray(v, dtype=float)
    if distance(k, y) > tol:
        raise ValueError("base point is outside the cone beyond tolerance")
    if k.kind == "orthant":
        if np.any(v < -tol):
            return False
        inactive = y < -tol
        return bool(np.all(np.abs(v[inactive]) <= tol))
    t, r = y[0], float(np.linalg.norm(y[1:]))
    if r <= tol and abs(t) <= tol:  # vertex: v in -soc(m)
        return -v[0] >= float(np.linalg.norm(v[1:])) - tol
    if t > r + tol:  # interior
        return float(np.linalg.norm(v)) <= tol
    d = _boundary_ray(y)
    mu = float(v @ d) / float(d @ d)
    return mu >= -tol and float(np.linalg.norm(v - mu * d)) <= tol


def tangent_cone_test(k: Cone, y, w, tol: float = MEMBERSHIP_TOL) -> bool:
    """True iff w lies in the tangent cone to the cone at y, within tol."""
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    if k.kind == "orthant":
        active = np.abs(y) <= tol
        return bool(np.all(w[active] <= tol))
    t, r = y[0], float(np.linalg.norm(y[1:]))
    if r <= tol and abs(t) <= tol:
        return w[0] >= float(np.linalg.norm(w[1:])) - tol
    if t > r + tol:
        return True
    return float(_boundary_ray(y) @ w) <= tol


def project_normal(k: Cone, y, v) -> np.ndarray:
    """Projection of v onto the normal cone at y (y assumed in the cone)."""
    y = np.asarray(y, dtype=float)
    v = np.asarray(v, dtype=float)
    if k.kind == "orthant":
        out = np.maximum(v, 0.0)
        out[y < -MEMBERSHIP_TOL] = 0.0
        return out
    t, r = y[0], float(np.linalg.norm(y[1:]))
    if r <= MEMBERSHIP_TOL and abs(t) <= MEMBERSHIP_TOL:
        return -project(k, -v)
    if t > r + MEMBERSHIP_TOL:
        return np.zeros_like(v)
    d = _boundary_ray(y)
    mu = max(float(v @ d) / float(d @ d), 0.0)
    return mu * d


def _boundary_ray(y: np.ndarray) -> np.ndarray:
    """Generator (-1, ybar/||ybar||) of the normal ray at a soc boundary point."""
    r = float(np.linalg.norm(y[1:]))
    d = np.empty_like(y)
    d[0] = -1.0
    d[1:] = y[1:] / r
    return d


@dataclass(frozen=True)
class Reduction:
    """Local description of the cone near a point as h^{-1}(C).

    case is one of "inactive", "affine" (orthant, h = coordinate selection),
    "soc_vertex" (h = identity, C the cone itself) and "soc_boundary"
    (h(y) = ||ybar|| - y_1, C = R_-, the only case with curvature).  The
    value-level accessors return h, its Jacobian (ell x m) and the stack of
    component Hessians (ell x m x m) at a query point.  ``scale`` rescales
    h by a positive constant; any scale yields an equally valid reduction,
    which downstream code exploits as an invariance check.
    """

    case: str
    cone: Cone
    active: tuple = ()
    scale: float = 1.0

    @property
    def ell(self) -> int:
        if self.case == "inactive":
            return 0
        if self.case == "affine":
            return len(self.active)
        if self.case == "soc_vertex":
            return self.cone.m
        return 1

    def h(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.case == "inactive":
            return np.zeros(0)
        if self.case == "affine":
            return self.scale * y[list(self.active)]
        if self.case == "soc_vertex":
            return self.scale * y
        return self.scale * np.array([float(np.linalg.norm(y[1:])) - y[0]])

    def grad_h(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        m = self.cone.m
        if self.case == "inactive":
            return np.zeros((0, m))
        if self.case == "affine":
            J = np.zeros((len(self.active), m))
            for row, idx in enumerate(self.active):
                J[row, idx] = self.scale
            return J
        if self.case == "soc_vertex":
            return self.scale * np.eye(m)
        r = float(np.linalg.norm(y[1:]))
        J = np.empty((1, m))
        J[0, 0] = -self.scale
        J[0, 1:] = self.scale * y[1:] / r
        return J

    def hess_h(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        m = self.cone.m
        if self.case != "soc_boundary":
            return np.zeros((self.ell, m, m))
        ybar = y[1:]
        r = float(np.linalg.norm(ybar))
        H = np.zeros((1, m, m))
        block = (np.eye(m - 1) - np.outer(ybar, ybar) / (r * r)) / r
        H[0, 1:, 1:] = self.scale * block
        return H


def reduction_at(k: Cone, y, tol: float = 1e-8, scale: float = 1.0) -> Reduction:
    """Classify the point and return the canonical reduction there.

    Orthant points with no active rows and soc interior points are
    Inactive.  The base-point identities h(y) = 0 and surjectivity of the
    Jacobian hold by construction for every returned case.
    """
    y = np.asarray(y, dtype=float)
    if distance(k, y) > tol:
        raise ValueError("point is outside the cone beyond tolerance")
    if k.kind == "orthant":
        active = tuple(int(i) for i in np.flatnonzero(np.abs(y) <= tol))
        if not active:
            return Reduction("inactive", k)
        return Reduction("affine", k, active=active, scale=scale)
    t, r = y[0], float(np.linalg.norm(y[1:]))
    if r <= tol and abs(t) <= tol:
        return Reduction("soc_vertex", k, scale=scale)
    if t > r + tol:
        return Reduction("inactive", k)
    return Reduction("soc_boundary", k, scale=scale)
