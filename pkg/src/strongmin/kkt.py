"""Stationarity verification and the Lagrange multiplier set.

The multiplier set is the intersection of an affine set (solutions of the
stationarity equation) with per-block normal-cone constraints.  It is
stored as a particular solution plus a null-space basis, with cone
descriptors attached per block.  A linear functional can be maximized
exactly over it: a dense simplex handles the polyhedral case, and a
cutting-plane loop with projection-based separating hyperplanes handles
blocks constrained to the polar second-order cone.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from . import cones
from ._simplex import solve_lp
from .problem import PointData

__all__ = [
    "MultiplierSet",
    "LinMaxResult",
    "StationarityResult",
    "EmptyMultiplierSet",
    "stationarity_check",
    "build_multiplier_set",
    "maximize_linear",
    "sample_members",
    "STATIONARITY_TOL",
]

STATIONARITY_TOL = 1e-7


class EmptyMultiplierSet(Exception):
    """Stationarity equation is inconsistent with the cone constraints."""


@dataclass(frozen=True)
class StationarityResult:
    is_stationary: bool
    residual: float
    witness: Optional[np.ndarray]  # None when not stationary


@dataclass
class MultiplierSet:
    """Affine parameterization lam0 + basis @ t with per-block cone constraints."""

    m: int
    lam0: np.ndarray
    basis: np.ndarray                     # (m, k)
    nonneg_idx: np.ndarray                # global coordinates with lam_i >= 0
    ray_blocks: List[Tuple[slice, np.ndarray]]  # (block slice, ray direction)
    soc_blocks: List[slice]               # blocks constrained to -soc
    empty: bool = False

    @property
    def k(self) -> int:
        return self.basis.shape[1]

    def member(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return self.lam0 + self.basis @ t

    def feasible(self, lam, tol: float = 1e-9) -> bool:
        lam = np.asarray(lam, dtype=float)
        if self.nonneg_idx.size and np.any(lam[self.nonneg_idx] < -tol):
            return False
        for sl, d in self.ray_blocks:
            mu = float(lam[sl] @ d) / float(d @ d)
            if mu < -tol or np.linalg.norm(lam[sl] - mu * d) > tol:
                return False
        for sl in self.soc_blocks:
            v = lam[sl]
            if -v[0] < np.linalg.norm(v[1:]) - tol:
                return False
        return True


@dataclass(frozen=True)
class LinMaxResult:
    status: str                       # "bounded" | "unbounded" | "empty"
    value: Optional[float] = None
    argmax: Optional[np.ndarray] = None
    ray: Optional[np.ndarray] = None  # recession direction when unbounded
    cuts_exceeded: bool = False       # best bound returned, accuracy not certified


# ----------------------------------------------------------------------
# block descriptors from the activity pattern
# ----------------------------------------------------------------------

def _block_descriptors(pd: PointData):
    """Per-block normal-cone structure at q(x̄).

    Returns (nonneg_idx, ray_blocks, soc_blocks, fixed_idx) in global
    multiplier coordinates.
    """
    nonneg: List[int] = []
    rays: List[Tuple[slice, np.ndarray]] = []
    socs: List[slice] = []
    fixed: List[int] = []
    for bd, sl in zip(pd.blocks, pd.block_slices()):
        red = bd.activity
        if red.case == "inactive":
            fixed.extend(range(sl.start, sl.stop))
        elif red.case == "affine":
            active = set(red.active)
            for j in range(bd.cone.m):
                (nonneg if j in active else fixed).append(sl.start + j)
        elif red.case == "soc_vertex":
            socs.append(sl)
        elif red.case == "soc_boundary":
            d = np.empty(bd.cone.m)
            d[0] = -1.0
            d[1:] = bd.value[1:] / np.linalg.norm(bd.value[1:])
            rays.append((sl, d))
        else:
            raise ValueError(f"unknown activity case {red.case}")
    return (np.array(nonneg, dtype=int), rays, socs, np.array(fixed, dtype=int))


def _project_onto_normal_cone(pd: PointData, lam: np.ndarray,
                              nonneg_idx, rays, socs, fixed_idx) -> np.ndarray:
    out = lam.copy()
    if fixed_idx.size:
        out[fixed_idx] = 0.0
    if nonneg_idx.size:
        out[nonneg_idx] = np.maximum(out[nonneg_idx], 0.0)
    for sl, d in rays:
        mu = max(float(out[sl] @ d) / float(d @ d), 0.0)
        out[sl] = mu * d
    for sl in socs:
        out[sl] = -cones.project(cones.soc(sl.stop - sl.start), -out[sl])
    return out


# ----------------------------------------------------------------------
# stationarity
# ----------------------------------------------------------------------

def stationarity_check(pd: PointData, tol: float = STATIONARITY_TOL,
                       iters: int = 4000) -> StationarityResult:
    """Distance from -∇g(x̄) to ∇q(x̄)^T applied to the normal cone.

    Solves min ||∇g + J^T lam|| over lam in N_Θ(q(x̄)) by an accelerated
    projected-gradient loop followed by an active-face least-squares
    polish.  Stationary iff the residual is at most ``tol``.
    """
    grad_g = pd.g.gradient
    J = pd.full_jacobian()
    m = J.shape[0]
    if m == 0:
        res = float(np.linalg.norm(grad_g))
        ok = res <= tol
        return StationarityResult(ok, res, np.zeros(0) if ok else None)

    nonneg_idx, rays, socs, fixed_idx = _block_descriptors(pd)
    JT = J.T
    L = max(float(np.linalg.norm(J, 2)) ** 2, 1e-12)
    step = 1.0 / L

    lam = np.zeros(m)
    y = lam.copy()
    t_acc = 1.0
    for _ in range(iters):
        grad = J @ (grad_g + JT @ y)
        nxt = _project_onto_normal_cone(pd, y - step * grad,
                                        nonneg_idx, rays, socs, fixed_idx)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_acc * t_acc))
        y = nxt + ((t_acc - 1.0) / t_next) * (nxt - lam)
        lam, t_acc = nxt, t_next

    lam = _active_face_polish(pd, lam, grad_g, JT,
                              nonneg_idx, rays, socs, fixed_idx)
    res = float(np.linalg.norm(grad_g + JT @ lam))
    ok = res <= tol
    return StationarityResult(ok, res, lam if ok else None)


def _active_face_polish(pd, lam, grad_g, JT, nonneg_idx, rays, socs, fixed_idx):
    """Least squares on the face of the normal cone identified by lam."""
    m = lam.shape[0]
    cols = []
    for i in nonneg_idx:
        if lam[i] > 1e-10:
            e = np.zeros(m)
            e[i] = 1.0
            cols.append(e)
    for sl, d in rays:
        if float(lam[sl] @ d) / float(d @ d) > 1e-10:
            e = np.zeros(m)
            e[sl] = d
            cols.append(e)
    for sl in socs:
        v = lam[sl]
        nv = np.linalg.norm(v)
        if nv <= 1e-10:
            continue
        margin = -v[0] - np.linalg.norm(v[1:])
        if margin > 1e-10 * max(1.0, nv):  # interior of -soc: whole block free
            for j in range(sl.start, sl.stop):
                e = np.zeros(m)
                e[j] = 1.0
                cols.append(e)
        else:  # boundary of -soc: free along the ray through lam
            e = np.zeros(m)
            e[sl] = v / nv
            cols.append(e)
    if not cols:
        return lam
    F = np.stack(cols, axis=1)
    mu, *_ = np.linalg.lstsq(JT @ F, -grad_g, rcond=None)
    cand = F @ mu
    ok = True
    for bd, sl in zip(pd.blocks, pd.block_slices()):
        try:
            if not cones.normal_cone_test(bd.cone, cones.project(bd.cone, bd.value),
                                          cand[sl], tol=1e-8):
                ok = False
                break
        except ValueError:
            ok = False
            break
    if not ok:
        return lam
    old = np.linalg.norm(grad_g + JT @ lam)
    new = np.linalg.norm(grad_g + JT @ cand)
    return cand if new <= old + 1e-12 else lam


# ----------------------------------------------------------------------
# multiplier set
# ----------------------------------------------------------------------

def build_multiplier_set(pd: PointData,
                         witness: Optional[np.ndarray] = None) -> MultiplierSet:
    """Affine parameterization of the multiplier set at a stationary point."""
    if witness is None:
        st = stationarity_check(pd)
        if not st.is_stationary:
            raise EmptyMultiplierSet(
                f"point is not stationary (residual {st.residual:.3e})")
        witness = st.witness
    m = pd.m
    if m == 0:
        return MultiplierSet(0, np.zeros(0), np.zeros((0, 0)),
                             np.zeros(0, dtype=int), [], [])

    nonneg_idx, rays, socs, fixed_idx = _block_descriptors(pd)
    J = pd.full_jacobian()

    # equality system: stationarity rows, fixed coordinates, ray complements
    rows = [J.T]
    rhs = [-pd.g.gradient]
    for i in fixed_idx:
        e = np.zeros(m)
        e[i] = 1.0
        rows.append(e[None, :])
        rhs.append(np.zeros(1))
    for sl, d in rays:
        width = sl.stop - sl.start
        basis = _orthogonal_complement(d)
        block_rows = np.zeros((width - 1, m))
        block_rows[:, sl] = basis.T
        rows.append(block_rows)
        rhs.append(np.zeros(width - 1))
    A = np.vstack(rows)
    b = np.concatenate(rhs)

    lam0 = np.asarray(witness, dtype=float).copy()
    # snap the witness exactly onto the affine set
    corr, *_ = np.linalg.lstsq(A, A @ lam0 - b, rcond=None)
    lam0 = lam0 - corr
    if np.linalg.norm(A @ lam0 - b) > 1e-7 * max(1.0, np.linalg.norm(b)):
        raise EmptyMultiplierSet("stationarity system is inconsistent")

    _, s, vt = np.linalg.svd(A)
    tol = max(1e-12, (s[0] if s.size else 0.0) * 1e-10)
    rank = int(np.sum(s > tol))
    basis = vt[rank:].T  # (m, k)

    ms = MultiplierSet(m, lam0, basis, nonneg_idx, rays, socs)
    if not ms.feasible(lam0, tol=1e-7):
        raise EmptyMultiplierSet("witness violates the cone constraints")
    return ms


def _orthogonal_complement(d: np.ndarray) -> np.ndarray:
    """Orthonormal basis (len(d), len(d)-1) of the complement of span{d}."""
    n = d.shape[0]
    q, _ = np.linalg.qr(np.column_stack([d / np.linalg.norm(d), np.eye(n)]))
    return q[:, 1:n]


# ----------------------------------------------------------------------
# linear maximization over the multiplier set
# ----------------------------------------------------------------------

def maximize_linear(ms: MultiplierSet, c, gap_tol: float = 1e-9,
                    max_cuts: int = 200) -> LinMaxResult:
    """Exact maximum of c.lam over the multiplier set.

    Polyhedral sets go straight to the simplex.  When a block lives in the
    polar second-order cone, a cutting-plane loop separates infeasible LP
    argmaxes with projection hyperplanes; the loop stops once the argmax
    is feasible or the primal bound gap drops below ``gap_tol``.
    """
    if ms.empty:
        return LinMaxResult("empty")
    c = np.asarray(c, dtype=float)
    if ms.k == 0:
        return LinMaxResult("bounded", value=float(c @ ms.lam0), argmax=ms.lam0.copy())

    N, lam0 = ms.basis, ms.lam0
    f = c @ N

    # linear rows a.t <= b, valid for the whole set; t = 0 is feasible
    A_rows: List[np.ndarray] = []
    b_rows: List[float] = []

    def add_row(a_lam: np.ndarray, b_val: float):
        A_rows.append(a_lam @ N)
        b_rows.append(b_val - float(a_lam @ lam0))

    for i in ms.nonneg_idx:
        e = np.zeros(ms.m)
        e[i] = -1.0
        add_row(e, 0.0)  # -lam_i <= 0
    for sl, d in ms.ray_blocks:
        a = np.zeros(ms.m)
        a[sl] = -d
        add_row(a, 0.0)  # ray coordinate >= 0
    for sl in ms.soc_blocks:
        # valid initial relaxation of lam_B in -soc: lam_1 <= -|lam_j|
        e = np.zeros(ms.m)
        e[sl.start] = 1.0
        add_row(e, 0.0)
        for j in range(sl.start + 1, sl.stop):
            for sgn in (1.0, -1.0):
                a = np.zeros(ms.m)
                a[sl.start] = 1.0
                a[j] = sgn
                add_row(a, 0.0)

    if not ms.soc_blocks:
        return _polyhedral_max(ms, c, f, A_rows, b_rows)

    # cutting planes around the soc blocks
    best_feasible = lam0.copy()
    best_value = float(c @ lam0)
    for _ in range(max_cuts):
        res = solve_lp(f, A_ub=np.array(A_rows), b_ub=np.array(b_rows))
        if res.status == "infeasible":
            # cannot happen for a valid cut set; treat conservatively
            return LinMaxResult("bounded", value=best_value, argmax=best_feasible,
                                cuts_exceeded=True)
        if res.status == "unbounded":
            lam_dir = N @ res.ray
            if _soc_recession_ok(ms, lam_dir):
                return LinMaxResult("unbounded", ray=lam_dir)
            _cut_direction(ms, lam0, N, res.x, res.ray, add_row)
            continue
        lam_star = ms.member(res.x)
        viol = _max_soc_violation(ms, lam_star)
        ub = float(c @ lam_star)
        if viol <= 1e-9:
            return LinMaxResult("bounded", value=ub, argmax=lam_star)
        lam_feas = _shrink_to_feasible(ms, lam0, lam_star)
        lb = float(c @ lam_feas)
        if lb > best_value:
            best_value, best_feasible = lb, lam_feas
        if ub - best_value <= gap_tol * max(1.0, abs(ub)):
            return LinMaxResult("bounded", value=best_value, argmax=best_feasible)
        _add_projection_cuts(ms, lam_star, add_row)
    return LinMaxResult("bounded", value=best_value, argmax=best_feasible,
                        cuts_exceeded=True)


def _polyhedral_max(ms, c, f, A_rows, b_rows) -> LinMaxResult:
    if A_rows:
        res = solve_lp(f, A_ub=np.array(A_rows), b_ub=np.array(b_rows))
    else:
        nrm = float(np.linalg.norm(f))
        if nrm <= 1e-14:
            return LinMaxResult("bounded", value=float(c @ ms.lam0),
                                argmax=ms.lam0.copy())
        return LinMaxResult("unbounded", ray=ms.basis @ (f / nrm))
    if res.status == "unbounded":
        return LinMaxResult("unbounded", ray=ms.basis @ res.ray)
    if res.status == "infeasible":
        return LinMaxResult("empty")
    lam = ms.member(res.x)
    return LinMaxResult("bounded", value=float(c @ lam), argmax=lam)


def _max_soc_violation(ms, lam) -> float:
    worst = 0.0
    for sl in ms.soc_blocks:
        k = cones.soc(sl.stop - sl.start)
        worst = max(worst, cones.distance(k, -lam[sl]))
    return worst


def _soc_recession_ok(ms, lam_dir, tol: float = 1e-10) -> bool:
    scale = max(np.linalg.norm(lam_dir), 1e-30)
    return _max_soc_violation(ms, lam_dir / scale) <= tol


def _shrink_to_feasible(ms, lam0, lam_star):
    lo, hi = 0.0, 1.0
    if _max_soc_violation(ms, lam_star) <= 1e-12:
        return lam_star
    for _ in range(70):
        mid = 0.5 * (lo + hi)
        cand = lam0 + mid * (lam_star - lam0)
        if _max_soc_violation(ms, cand) <= 1e-12:
            lo = mid
        else:
            hi = mid
    return lam0 + lo * (lam_star - lam0)


def _add_projection_cuts(ms, lam_star, add_row):
    for sl in ms.soc_blocks:
        k = cones.soc(sl.stop - sl.start)
        z = lam_star[sl]
        p = -cones.project(k, -z)
        normal = z - p
        if np.linalg.norm(normal) <= 1e-12:
            continue
        a = np.zeros(ms.m)
        a[sl] = normal
        add_row(a, float(normal @ p))


def _cut_direction(ms, lam0, N, t0, t_ray, add_row):
    """Separate an LP recession direction that leaves a soc block."""
    base = lam0 + (N @ t0 if t0 is not None else 0.0)
    step = 1.0
    for _ in range(60):
        cand = base + step * (N @ t_ray)
        if _max_soc_violation(ms, cand) > 1e-8:
            _add_projection_cuts(ms, cand, add_row)
            return
        step *= 2.0
    # direction appears feasible after all; cut at the far point anyway
    _add_projection_cuts(ms, base + step * (N @ t_ray), add_row)


def enumerate_polyhedron(ms: MultiplierSet, tol: float = 1e-9):
    """Vertices and extreme rays of the t-parameterized multiplier set.

    Returns (vertices, rays) as (m, nv) and (m, nr) arrays in multiplier
    coordinates, or None when the set has soc blocks, k > 3, or no vertex
    (callers then fall back to per-objective LPs).  With this geometry the
    maximum of c.lam is max over vertex dot products, unbounded iff some
    ray has positive objective.
    """
    from itertools import combinations

    if ms.soc_blocks or ms.k > 3:
        return None
    k = ms.k
    if k == 0:
        return ms.lam0[:, None], np.zeros((ms.m, 0))

    # inequality rows A t <= b equivalent to the cone descriptors
    rows: List[np.ndarray] = []
    rhs: List[float] = []
    for i in ms.nonneg_idx:
        rows.append(-ms.basis[i])            # lam0_i + (N t)_i >= 0
        rhs.append(float(ms.lam0[i]))
    for sl, d in ms.ray_blocks:
        rows.append(-(d @ ms.basis[sl]))     # ray coordinate >= 0
        rhs.append(float(d @ ms.lam0[sl]))
    if not rows:
        # affine set: constant objective iff c.N = 0, else unbounded
        rays = np.hstack([ms.basis, -ms.basis])
        return ms.lam0[:, None], rays
    A = np.vstack(rows)
    b = np.array(rhs)

    verts: List[np.ndarray] = []
    for subset in combinations(range(A.shape[0]), k):
        sub = A[list(subset)]
        if abs(np.linalg.det(sub)) < 1e-10 * max(1.0, np.max(np.abs(sub)) ** k):
            continue
        t = np.linalg.solve(sub, b[list(subset)])
        if np.all(A @ t <= b + 1e-8):
            if not any(np.linalg.norm(t - v) <= 1e-8 for v in verts):
                verts.append(t)
    if not verts:
        return None
    ray_dirs: List[np.ndarray] = []
    if k == 1:
        for s in (1.0, -1.0):
            r = np.array([s])
            if np.all(A @ r <= 1e-12):
                ray_dirs.append(r)
    else:
        for subset in combinations(range(A.shape[0]), k - 1):
            sub = A[list(subset)]
            _, s, vt = np.linalg.svd(sub)
            null = vt[np.sum(s > 1e-10):]
            for u in null:
                for sgn in (1.0, -1.0):
                    r = sgn * u
                    if np.all(A @ r <= 1e-10):
                        if not any(np.linalg.norm(r - q) <= 1e-8 for q in ray_dirs):
                            ray_dirs.append(r)
    V = ms.lam0[:, None] + ms.basis @ np.stack(verts, axis=1)
    R = ms.basis @ np.stack(ray_dirs, axis=1) if ray_dirs else np.zeros((ms.m, 0))
    return V, R


def sample_members(ms: MultiplierSet, count: int, seed: int = 0,
                   scale: float = 2.0, max_tries: int = 200):
    """Rejection-sample feasible members (test helper)."""
    rng = np.random.default_rng(seed)
    out = []
    if ms.k == 0:
        return [ms.lam0.copy()] if ms.feasible(ms.lam0, tol=1e-8) else []
    for _ in range(max_tries * count):
        lam = ms.member(scale * rng.standard_normal(ms.k))
        if ms.feasible(lam, tol=1e-10):
            out.append(lam)
            if len(out) >= count:
                break
    return out
