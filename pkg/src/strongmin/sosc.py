"""Critical cone, curvature functional, second-order verdicts and modulus.

The critical cone is realized as the linearized cone
{w : ∇q(x̄) w ∈ T_Θ(q(x̄))} ∩ {∇g(x̄)}^⊥, which agrees with the tangent
description under the metric-subregularity constraint qualification that
every report assumes and records.  The curvature functional sigma(w) is
the objective Hessian form plus the exact maximum of a multiplier-linear
functional over the multiplier set, including the reduction curvature
correction contributed by active second-order-cone boundary blocks.

The infimum of sigma over unit directions of the cone is certified two
ways: an eigenvalue reduction when the cone is a subspace, the multiplier
set is a singleton and no curvature correction is present (Exact), and a
deterministic low-discrepancy sphere search with coordinate-descent
polishing otherwise (Sampled).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from . import cones
from ._sampling import sphere
from .kkt import MultiplierSet, enumerate_polyhedron, maximize_linear
from .problem import PointData

__all__ = [
    "CriticalCone",
    "SoscReport",
    "NotInCriticalCone",
    "build_critical_cone",
    "sigma",
    "analyze",
    "VERDICT_TOL",
]

VERDICT_TOL = 1e-7
_MEMBERSHIP_TOL = 1e-9


class NotInCriticalCone(Exception):
    pass


@dataclass
class CriticalCone:
    """Rows of the linearized critical cone {w : M w in D}.

    eq: stacked equality rows (E w = 0); ineq: rows with F w <= 0;
    soc: list of (matrix B, cone dim) with B w constrained to soc(m).
    """

    n: int
    eq: np.ndarray
    ineq: np.ndarray
    soc: List[Tuple[np.ndarray, int]]

    def __post_init__(self):
        if self.is_subspace and self.eq.shape[0]:
            _, s, vt = np.linalg.svd(self.eq)
            rank = int(np.sum(s > max(1e-12, (s[0] if s.size else 0) * 1e-12)))
            self._null = vt[rank:].T  # orthonormal basis of the subspace
        elif self.is_subspace:
            self._null = np.eye(self.n)
        else:
            self._null = None
        rows = [self.eq, self.ineq] + [B for B, _ in self.soc]
        self._M = np.vstack([r for r in rows if r.shape[0]]) if any(
            r.shape[0] for r in rows) else np.zeros((0, self.n))
        start = 0
        self._eq_sl = slice(start, start + self.eq.shape[0])
        start += self.eq.shape[0]
        self._ineq_sl = slice(start, start + self.ineq.shape[0])
        start += self.ineq.shape[0]
        self._soc_sl = []
        for _, m in self.soc:
            self._soc_sl.append((slice(start, start + m), m))
            start += m
        self._chol = np.linalg.cholesky(np.eye(self.n) + self._M.T @ self._M)

    @property
    def is_subspace(self) -> bool:
        return self.ineq.shape[0] == 0 and not self.soc

    def subspace_basis(self) -> np.ndarray:
        if not self.is_subspace:
            raise ValueError("cone is not a subspace")
        return self._null

    def violation(self, W: np.ndarray) -> np.ndarray:
        """Columnwise distance of M w to the target set D."""
        single = W.ndim == 1
        W2 = W[:, None] if single else W
        Z = self._M @ W2
        out = np.zeros(W2.shape[1])
        if self._eq_sl.stop > self._eq_sl.start:
            out += np.sum(Z[self._eq_sl] ** 2, axis=0)
        if self._ineq_sl.stop > self._ineq_sl.start:
            out += np.sum(np.maximum(Z[self._ineq_sl], 0.0) ** 2, axis=0)
        for sl, m in self._soc_sl:
            P = cones.project_batch(cones.soc(m), Z[sl])
            out += np.sum((Z[sl] - P) ** 2, axis=0)
        out = np.sqrt(out)
        return float(out[0]) if single else out

    def contains(self, w, tol: float = _MEMBERSHIP_TOL) -> bool:
        return float(self.violation(np.asarray(w, dtype=float))) <= tol

    def _proj_D(self, Z: np.ndarray) -> np.ndarray:
        out = Z.copy()
        out[self._eq_sl] = 0.0
        out[self._ineq_sl] = np.minimum(out[self._ineq_sl], 0.0)
        for sl, m in self._soc_sl:
            out[sl] = cones.project_batch(cones.soc(m), out[sl])
        return out

    def project(self, W: np.ndarray, iters: int = 1200,
                polish: bool = True) -> np.ndarray:
        """Euclidean projection onto the cone.

        ADMM splitting handles the general case; an active-set polish makes
        the result exact whenever the guessed active rows are right (always
        true on the polyhedral part).  Subspaces are projected exactly.
        """
        single = W.ndim == 1
        W2 = np.asarray(W, dtype=float)
        W2 = W2[:, None] if single else W2
        if self.is_subspace:
            P = self._null
            out = P @ (P.T @ W2)
            return out[:, 0] if single else out
        out = self._admm(W2, iters)
        if polish:
            for j in range(out.shape[1]):
                out[:, j] = self._polish_projection(W2[:, j], out[:, j])
        return out[:, 0] if single else out

    def _admm(self, W2: np.ndarray, iters: int) -> np.ndarray:
        if self._M.shape[0] == 0:
            return W2.copy()
        M = self._M
        Z = self._proj_D(M @ W2)
        U = np.zeros_like(Z)
        X = W2.copy()
        for _ in range(iters):
            rhs = W2 + M.T @ (Z - U)
            X = np.linalg.solve(self._chol.T, np.linalg.solve(self._chol, rhs))
            MX = M @ X
            Z = self._proj_D(MX + U)
            U = U + MX - Z
        return X

    def _polish_projection(self, w0: np.ndarray, w_admm: np.ndarray) -> np.ndarray:
        """Exact projection on the guessed active set; keep ADMM on failure."""
        rows = [self.eq] if self.eq.shape[0] else []
        Fw = self.ineq @ w_admm if self.ineq.shape[0] else np.zeros(0)
        tight = np.flatnonzero(Fw >= -1e-7)
        if tight.size:
            rows.append(self.ineq[tight])
        for B, m in self.soc:
            z = B @ w_admm
            nz = np.linalg.norm(z)
            if nz <= 1e-7:
                rows.append(B)  # vertex: B w = 0
            elif abs(z[0] - np.linalg.norm(z[1:])) <= 1e-6 * max(1.0, nz):
                d = np.empty(m)
                d[0] = -1.0
                d[1:] = z[1:] / np.linalg.norm(z[1:])
                rows.append((d @ B)[None, :])  # boundary: stay on the facet
        if not rows:
            return w0.copy() if self.contains(w0, tol=1e-11) else w_admm
        A = np.vstack(rows)
        lam, *_ = np.linalg.lstsq(A @ A.T, A @ w0, rcond=None)
        cand = w0 - A.T @ lam
        if float(self.violation(cand)) <= 1e-11 and (
                np.linalg.norm(cand - w0) <= np.linalg.norm(w_admm - w0) + 1e-9):
            return cand
        return w_admm


@dataclass(frozen=True)
class SoscReport:
    sonc_holds: bool
    sosc_holds: bool
    predicted_modulus: float           # may be +inf for the trivial cone
    worst_direction: Optional[np.ndarray]
    certification: str                 # "Exact" | "Sampled"
    sample_count: int
    seed: int
    empty_cone: bool = False
    inner_max_warning: bool = False    # some inner maximization hit its cut limit


def build_critical_cone(pd: PointData, grad_tol: float = 1e-10) -> CriticalCone:
    """Linearized critical cone at the evaluated point."""
    n = pd.n
    eq_rows: List[np.ndarray] = []
    ineq_rows: List[np.ndarray] = []
    soc_rows: List[Tuple[np.ndarray, int]] = []
    g = pd.g.gradient
    if np.linalg.norm(g) > grad_tol:
        eq_rows.append(g[None, :])
    for bd in pd.blocks:
        red = bd.activity
        if red.case == "inactive":
            continue
        if red.case == "affine":
            for j in red.active:
                ineq_rows.append(bd.jacobian[j][None, :])
        elif red.case == "soc_vertex":
            soc_rows.append((bd.jacobian.copy(), bd.cone.m))
        elif red.case == "soc_boundary":
            d = np.empty(bd.cone.m)
            d[0] = -1.0
            d[1:] = bd.value[1:] / np.linalg.norm(bd.value[1:])
            ineq_rows.append((d @ bd.jacobian)[None, :])
    eq = np.vstack(eq_rows) if eq_rows else np.zeros((0, n))
    ineq = np.vstack(ineq_rows) if ineq_rows else np.zeros((0, n))
    return CriticalCone(n, eq, ineq, soc_rows)


# ----------------------------------------------------------------------
# curvature functional
# ----------------------------------------------------------------------

def _lambda_coefficients_batch(pd: PointData, W: np.ndarray) -> np.ndarray:
    """Columnwise coefficient vectors C (m x N) of the inner maximization."""
    C = np.zeros((pd.m, W.shape[1]))
    for bd, sl in zip(pd.blocks, pd.block_slices()):
        C[sl] = np.einsum("ijk,jN,kN->iN", bd.hessians, W, W, optimize=True)
        red = bd.activity
        if red.case == "soc_boundary":
            d = red.grad_h(bd.value)[0]
            H = red.hess_h(bd.value)[0]
            JW = bd.jacobian @ W
            kappa = np.einsum("iN,ij,jN->N", JW, H, JW)
            C[sl] += np.outer(d / float(d @ d), kappa)
    return C


def _lambda_coefficients(pd: PointData, w: np.ndarray) -> np.ndarray:
    return _lambda_coefficients_batch(pd, np.asarray(w, float)[:, None])[:, 0]


def sigma(pd: PointData, ms: MultiplierSet, w,
          cone: Optional[CriticalCone] = None,
          membership_tol: float = _MEMBERSHIP_TOL):
    """Curvature functional at a critical direction; +inf when the inner
    maximization is unbounded.  Raises NotInCriticalCone outside the cone."""
    w = np.asarray(w, dtype=float)
    if cone is None:
        cone = build_critical_cone(pd)
    if not cone.contains(w, tol=membership_tol):
        raise NotInCriticalCone(
            f"direction violates the critical cone by {float(cone.violation(w)):.3e}")
    base = float(w @ pd.g.hessian @ w)
    if ms.m == 0:
        return base
    res = maximize_linear(ms, _lambda_coefficients(pd, w))
    if res.status == "unbounded":
        return math.inf
    if res.status == "empty":
        raise ValueError("multiplier set is empty")
    return base + res.value


def _fixed_multiplier_matrix(pd: PointData, lam: np.ndarray) -> np.ndarray:
    """Full quadratic form Q with sigma(w) = w.Q.w for a fixed multiplier."""
    Q = pd.g.hessian.copy()
    for bd, sl in zip(pd.blocks, pd.block_slices()):
        lam_b = lam[sl]
        Q += np.einsum("i,ijk->jk", lam_b, bd.hessians)
        red = bd.activity
        if red.case == "soc_boundary":
            d = red.grad_h(bd.value)[0]
            H = red.hess_h(bd.value)[0]
            mu = float(lam_b @ d) / float(d @ d)
            Q += mu * bd.jacobian.T @ H @ bd.jacobian
    return Q


# ----------------------------------------------------------------------
# sigma evaluators over direction batches
# ----------------------------------------------------------------------

class _SigmaEvaluator:
    """Columnwise sigma with the fastest exact backend available.

    Singleton multiplier sets reduce to one quadratic form; polyhedral sets
    with few parameters use cached vertex/ray geometry; everything else
    solves one inner maximization per direction, with a fixed-multiplier
    quadratic model available for pruning.
    """

    def __init__(self, pd: PointData, ms: MultiplierSet):
        self.pd = pd
        self.ms = ms
        self.cut_warning = False
        self.mode = "generic"
        if ms.m == 0 or ms.k == 0:
            lam = ms.lam0 if ms.m else np.zeros(0)
            self._Q = _fixed_multiplier_matrix(pd, lam) if ms.m else pd.g.hessian
            self.mode = "singleton"
            return
        geom = enumerate_polyhedron(ms)
        if geom is not None:
            self._verts, self._rays = geom
            self.mode = "enumerated"

    def __call__(self, W: np.ndarray) -> np.ndarray:
        if self.mode == "singleton":
            return np.einsum("iN,ij,jN->N", W, self._Q, W, optimize=True)
        base = np.einsum("iN,ij,jN->N", W, self.pd.g.hessian, W, optimize=True)
        C = _lambda_coefficients_batch(self.pd, W)
        if self.mode == "enumerated":
            vals = base + np.max(self._verts.T @ C, axis=0)
            if self._rays.shape[1]:
                scale = 1.0 + np.linalg.norm(C, axis=0)
                unbounded = np.any(self._rays.T @ C > 1e-9 * scale, axis=0)
                vals = np.where(unbounded, math.inf, vals)
            return vals
        out = np.empty(W.shape[1])
        for j in range(W.shape[1]):
            res = maximize_linear(self.ms, C[:, j])
            if res.status == "unbounded":
                out[j] = math.inf
            else:
                out[j] = base[j] + res.value
                if res.cuts_exceeded:
                    self.cut_warning = True
        return out

    def single_with_argmax(self, w: np.ndarray):
        """Value plus a maximizing multiplier (None when unbounded)."""
        if self.mode == "singleton":
            lam = self.ms.lam0 if self.ms.m else np.zeros(0)
            return float(w @ self._Q @ w), lam
        base = float(w @ self.pd.g.hessian @ w)
        c = _lambda_coefficients(self.pd, w)
        if self.mode == "enumerated":
            scores = self._verts.T @ c
            if self._rays.shape[1] and np.any(
                    self._rays.T @ c > 1e-9 * (1.0 + np.linalg.norm(c))):
                return math.inf, None
            j = int(np.argmax(scores))
            return base + float(scores[j]), self._verts[:, j]
        res = maximize_linear(self.ms, c)
        if res.status == "unbounded":
            return math.inf, None
        if res.cuts_exceeded:
            self.cut_warning = True
        return base + res.value, res.argmax

    @property
    def cheap(self) -> bool:
        return self.mode in ("singleton", "enumerated")

    def model_matrix(self, lam) -> np.ndarray:
        if self.mode == "singleton":
            return self._Q
        return _fixed_multiplier_matrix(self.pd, lam)


# ----------------------------------------------------------------------
# analysis: infimum of sigma over unit directions
# ----------------------------------------------------------------------

def analyze(pd: PointData, ms: MultiplierSet, samples: int = 20000,
            seed: int = 0, force: Optional[str] = None,
            polish_rounds: int = 60) -> SoscReport:
    """Second-order verdicts and the predicted quadratic-growth modulus.

    The Exact path applies when the critical cone is (structurally) a
    linear subspace, the multiplier set is a singleton and no boundary
    curvature enters; everything else is Sampled with the seed recorded.
    """
    cone = build_critical_cone(pd)
    has_boundary = any(b.activity.case == "soc_boundary" for b in pd.blocks)
    exact_ok = cone.is_subspace and ms.k == 0 and not has_boundary

    if exact_ok and force != "sampled":
        P = cone.subspace_basis()
        if P.shape[1] == 0:
            return SoscReport(True, True, math.inf, None, "Exact", 0, seed,
                              empty_cone=True)
        Q = _fixed_multiplier_matrix(pd, ms.lam0) if ms.m else pd.g.hessian
        vals, vecs = np.linalg.eigh(P.T @ Q @ P)
        modulus = float(vals[0])
        worst = P @ vecs[:, 0]
        return _verdicts(modulus, worst, "Exact", 0, seed)

    # ---- sampled path ----
    n = pd.n
    dirs = sphere(n, samples, seed=seed)
    proj = cone.project(dirs, iters=250, polish=False)
    norms = np.linalg.norm(proj, axis=0)
    if float(np.max(norms, initial=0.0)) < 1e-6:
        return SoscReport(True, True, math.inf, None, "Sampled", samples, seed,
                          empty_cone=True)
    keep = np.flatnonzero(norms >= 0.999)
    if keep.size < 50:
        keep = np.argsort(-norms)[:200]
        keep = keep[norms[keep] >= 1e-6]
    cand = proj[:, keep] / norms[keep]

    # axis seeds: cheap insurance for axis-aligned worst directions
    axes = []
    for i in range(n):
        for sgn in (1.0, -1.0):
            e = np.zeros(n)
            e[i] = sgn
            axes.append(e)
    cand = np.column_stack([cand, np.column_stack(axes)])
    cand = cone.project(cand, iters=1200)
    nrm = np.linalg.norm(cand, axis=0)
    ok = nrm >= 1e-9
    cand = cand[:, ok] / nrm[ok]

    evaluator = _SigmaEvaluator(pd, ms)
    if not evaluator.cheap and cand.shape[1] > 400:
        stride = int(np.ceil(cand.shape[1] / 400))
        cand = cand[:, ::stride]
    values = evaluator(cand)
    finite = np.isfinite(values)
    if not np.any(finite):
        return SoscReport(True, True, math.inf, None, "Sampled", samples, seed)

    order = np.argsort(np.where(finite, values, np.inf))
    top = order[: min(10, int(np.sum(finite)))]
    best_w, best_v = _polish(cone, evaluator, cand[:, top],
                             values[top], rounds=polish_rounds)
    return _verdicts(best_v, best_w, "Sampled", samples, seed,
                     warning=evaluator.cut_warning)


def _polish(cone, evaluator, W0, v0, rounds=60, step0=0.1, step_floor=1e-10):
    """Lockstep projected coordinate descent on the cone's unit sphere.

    All polish candidates advance together so projections batch; for
    expensive inner maximizations a fixed-multiplier quadratic model prunes
    trial points that provably cannot improve.
    """
    n, K = W0.shape
    W = W0.copy()
    V = np.asarray(v0, dtype=float).copy()
    steps = np.full(K, step0)
    models = None
    if not evaluator.cheap:
        models = []
        for j in range(K):
            _, lam = evaluator.single_with_argmax(W[:, j])
            models.append(evaluator.model_matrix(lam) if lam is not None else None)

    n_trials = 2 * n
    offsets = np.zeros((n, n_trials))
    for i in range(n):
        offsets[i, 2 * i] = 1.0
        offsets[i, 2 * i + 1] = -1.0

    for _ in range(rounds):
        if np.all(steps < step_floor):
            break
        trials = (W[:, :, None] + offsets[:, None, :] * steps[None, :, None])
        T = trials.reshape(n, K * n_trials)
        P = cone.project(T, iters=250)
        nrm = np.linalg.norm(P, axis=0)
        good = nrm >= 1e-9
        Pn = np.where(good[None, :], P / np.where(good, nrm, 1.0), 0.0)

        if evaluator.cheap:
            vals = np.where(good, evaluator(Pn), np.inf)
            vals = vals.reshape(K, n_trials)
            improved = np.min(vals, axis=1) < V - 1e-15
            for j in range(K):
                if improved[j]:
                    tj = int(np.argmin(vals[j]))
                    V[j] = float(vals[j, tj])
                    W[:, j] = Pn[:, j * n_trials + tj]
                else:
                    steps[j] *= 0.5
        else:
            for j in range(K):
                block = slice(j * n_trials, (j + 1) * n_trials)
                Pj = Pn[:, block]
                gj = good[block]
                if models[j] is not None:
                    cheap = np.einsum("iN,ik,kN->N", Pj, models[j], Pj)
                else:
                    cheap = np.full(n_trials, -np.inf)
                cheap = np.where(gj, cheap, np.inf)
                order = np.argsort(cheap)
                accepted = False
                for t in order:
                    if cheap[t] >= V[j] - 1e-15:
                        break  # quadratic model is a lower bound on sigma
                    val, lam = evaluator.single_with_argmax(Pj[:, t])
                    if val < V[j] - 1e-15:
                        V[j] = val
                        W[:, j] = Pj[:, t]
                        if lam is not None:
                            models[j] = evaluator.model_matrix(lam)
                        accepted = True
                        break
                if not accepted:
                    steps[j] *= 0.5

    jbest = int(np.argmin(V))
    return W[:, jbest].copy(), float(V[jbest])


def _verdicts(modulus, worst, certification, count, seed, warning=False):
    sonc = modulus >= -VERDICT_TOL
    sosc = modulus >= VERDICT_TOL
    return SoscReport(sonc, sosc, modulus, worst, certification, count, seed,
                      inner_max_warning=warning)
