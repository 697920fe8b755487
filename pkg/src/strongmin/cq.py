"""Constraint-qualification diagnostics.

MFCQ (strict descent direction for the active inequalities) and its dual
form, CRCQ (constant rank of every active-gradient subset on a sampled
neighborhood), the dual characterization of the Robinson condition
(normal cone meets the Jacobian kernel only at zero), and an empirical
metric-subregularity probe.  The probe is evidence, never proof: reports
say so explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import List, Optional, Tuple

import numpy as np

from . import expr
from ._descent import push_to_feasible
from ._sampling import ball, sphere
from ._simplex import solve_lp
from .problem import PointData, Problem, batch_distance, batch_constraint_values

__all__ = [
    "CqReport",
    "MscqProbe",
    "TooManyActiveConstraints",
    "check_mfcq",
    "check_mfcq_dual",
    "check_crcq",
    "check_rcq_dual",
    "probe_mscq",
    "run_cq",
]


class TooManyActiveConstraints(Exception):
    pass


@dataclass(frozen=True)
class MscqProbe:
    ratio_bound: float
    per_radius: Tuple[float, ...]
    samples: int
    verdict: str  # "Supported" | "Inconclusive"


@dataclass(frozen=True)
class CqReport:
    mfcq: Optional[bool]   # None = not applicable (soc blocks present)
    crcq: Optional[bool]   # None = not applicable
    rcq: bool
    mscq: MscqProbe
    notes: Tuple[str, ...]


def _orthant_only(pd: PointData) -> bool:
    return all(b.cone.kind == "orthant" for b in pd.blocks)


def _active_rows(pd: PointData):
    """(block index, row index) pairs of active orthant rows."""
    out = []
    for bi, bd in enumerate(pd.blocks):
        if bd.activity.case == "affine":
            for j in bd.activity.active:
                out.append((bi, j))
    return out


def check_mfcq(pd: PointData) -> Optional[bool]:
    """Strict descent direction for all active rows, via an LP over the unit box.

    Returns None when a second-order-cone block is present (the condition
    is stated for inequality systems only).
    """
    if not _orthant_only(pd):
        return None
    rows = _active_rows(pd)
    if not rows:
        return True
    n = pd.n
    grads = np.vstack([pd.blocks[bi].jacobian[j] for bi, j in rows])
    # variables (d, s): maximize s with grad.d + s <= 0 and |d| <= 1, s >= 0
    k = grads.shape[0]
    A = np.vstack([
        np.hstack([grads, np.ones((k, 1))]),
        np.hstack([np.eye(n), np.zeros((n, 1))]),
        np.hstack([-np.eye(n), np.zeros((n, 1))]),
        np.hstack([np.zeros((1, n)), -np.ones((1, 1))]),
    ])
    b = np.concatenate([np.zeros(k), np.ones(2 * n), np.zeros(1)])
    res = solve_lp(np.concatenate([np.zeros(n), [1.0]]), A_ub=A, b_ub=b)
    return bool(res.status == "optimal" and res.value > 1e-9)


def check_mfcq_dual(pd: PointData) -> Optional[bool]:
    """Dual form: no convex combination of active gradients vanishes."""
    if not _orthant_only(pd):
        return None
    rows = _active_rows(pd)
    if not rows:
        return True
    grads = np.vstack([pd.blocks[bi].jacobian[j] for bi, j in rows])
    k = grads.shape[0]
    A_eq = np.vstack([np.ones((1, k)), grads.T])
    b_eq = np.concatenate([[1.0], np.zeros(pd.n)])
    res = solve_lp(np.zeros(k), A_eq=A_eq, b_eq=b_eq, nonneg=True)
    return bool(res.status == "infeasible")


def check_crcq(pd: PointData, radius: float = 1e-2, samples: int = 64,
               seed: int = 0, max_active: int = 12) -> Optional[bool]:
    """Constant rank of every subset of active gradients on a sampled ball."""
    if not _orthant_only(pd):
        return None
    rows = _active_rows(pd)
    if not rows:
        return True
    if len(rows) > max_active:
        raise TooManyActiveConstraints(
            f"{len(rows)} active rows; subset enumeration capped at {max_active}")
    p = pd.problem
    pts = np.column_stack([pd.x[:, None], ball(pd.x, radius, samples, seed=seed)])
    grads = []
    for bi, j in rows:
        _, G = expr.eval_grads(p.blocks[bi].rows[j], pts)
        grads.append(G)  # (n, N)
    G = np.stack(grads)  # (k, n, N)
    for size in range(1, len(rows) + 1):
        for subset in combinations(range(len(rows)), size):
            mats = G[list(subset)].transpose(2, 0, 1)  # (N, |J|, n)
            s = np.linalg.svd(mats, compute_uv=False)
            smax = s[:, 0]
            cutoff = 1e-8 * np.where(smax > 0, smax, 1.0)
            ranks = np.sum(s > cutoff[:, None], axis=1)
            if not np.all(ranks == ranks[0]):
                return False
    return True


def check_rcq_dual(pd: PointData, tol: float = 1e-7, grid: int = 10000,
                   seed: int = 0) -> bool:
    """Robinson condition via its dual: N_Θ(q(x̄)) ∩ ker ∇q(x̄)^T = {0}.

    Polyhedral problems reduce to an LP; with second-order-cone blocks the
    kernel's unit sphere is scanned with a membership test, plus the exact
    ray directions of boundary-active blocks.
    """
    if pd.m == 0:
        return True
    J = pd.full_jacobian()
    _, s, vt = np.linalg.svd(J.T, full_matrices=True)
    rank = int(np.sum(s > max(1e-12, (s[0] if s.size else 0.0) * 1e-10)))
    null = vt[rank:].T  # (m, kappa): basis of ker J^T
    kappa = null.shape[1]
    if kappa == 0:
        return True

    if _orthant_only(pd):
        rows = _active_rows(pd)
        if not rows:
            return True
        idx = []
        offset = 0
        for bi, bd in enumerate(pd.blocks):
            for j in bd.activity.active if bd.activity.case == "affine" else ():
                idx.append(offset + j)
            offset += bd.cone.m
        idx = np.array(idx, dtype=int)
        k = idx.size
        # rows: normalization plus the stationarity system on active coordinates
        A_eq = np.vstack([np.ones((1, k)), J[idx].T])
        b_eq = np.concatenate([[1.0], np.zeros(pd.n)])
        res = solve_lp(np.zeros(k), A_eq=A_eq, b_eq=b_eq, nonneg=True)
        return bool(res.status == "infeasible")

    # scan the kernel sphere for a nonzero normal-cone member
    cands = null @ sphere(kappa, grid, seed=seed)
    # include exact boundary-ray directions when they lie in the kernel
    extra = []
    for bd, sl in zip(pd.blocks, pd.block_slices()):
        if bd.activity.case == "soc_boundary":
            d = np.zeros(pd.m)
            d[sl] = bd.activity.grad_h(bd.value)[0]
            d /= np.linalg.norm(d)
            if np.linalg.norm(J.T @ d) <= tol:
                extra.append(d)
    if extra:
        cands = np.column_stack([cands] + extra)
    member = _normal_cone_membership_batch(pd, cands, tol)
    return not bool(np.any(member))


def _normal_cone_membership_batch(pd: PointData, L: np.ndarray,
                                  tol: float) -> np.ndarray:
    ok = np.ones(L.shape[1], dtype=bool)
    for bd, sl in zip(pd.blocks, pd.block_slices()):
        lam = L[sl]
        red = bd.activity
        if red.case == "inactive":
            ok &= np.linalg.norm(lam, axis=0) <= tol
        elif red.case == "affine":
            active = np.zeros(bd.cone.m, dtype=bool)
            active[list(red.active)] = True
            ok &= np.all(lam >= -tol, axis=0)
            if np.any(~active):
                ok &= np.all(np.abs(lam[~active]) <= tol, axis=0)
        elif red.case == "soc_vertex":
            ok &= -lam[0] >= np.linalg.norm(lam[1:], axis=0) - tol
        else:  # soc_boundary
            d = red.grad_h(bd.value)[0]
            mu = (d @ lam) / float(d @ d)
            ok &= mu >= -tol
            ok &= np.linalg.norm(lam - np.outer(d, mu), axis=0) <= tol
    return ok


def probe_mscq(p: Problem, radius: float = 0.1, samples: int = 128,
               seed: int = 0) -> MscqProbe:
    """Empirical metric-subregularity ratio d(x;feasible)/d(q(x);cone).

    Numerators are upper estimates from projected penalty descent, so the
    bound is conservative.  Supported requires finite bounds at the probe
    radius and radius/4 within a factor of 4 of each other.
    """
    if p.point is None:
        raise ValueError("problem has no candidate point")
    if not p.blocks:
        return MscqProbe(0.0, (0.0, 0.0), samples, "Supported")
    bounds = []
    usable = True
    for i, r in enumerate((radius, radius / 4.0)):
        X = ball(p.point, r, samples, seed=seed + 7 * i)
        denom = batch_distance(p, batch_constraint_values(p, X))
        Y, res = push_to_feasible(p, X)
        numer = np.linalg.norm(Y - X, axis=0)
        mask = (denom > 1e-12) & (res <= 1e-9)
        failed = (denom > 1e-12) & (res > 1e-9)
        if np.sum(failed) > 0.5 * max(1, np.sum(denom > 1e-12)):
            usable = False
        bounds.append(float(np.max(numer[mask] / denom[mask])) if np.any(mask) else 0.0)
    hi, lo = max(bounds), min(bounds)
    if not usable:
        verdict = "Inconclusive"
    elif hi == 0.0:
        verdict = "Supported"
    elif lo == 0.0:
        verdict = "Inconclusive"
    else:
        verdict = "Supported" if hi / lo <= 4.0 else "Inconclusive"
    return MscqProbe(hi, tuple(bounds), samples, verdict)


def run_cq(pd: PointData, radius: float = 1e-2, samples: int = 64,
           probe_radius: float = 0.1, probe_samples: int = 128,
           seed: int = 0) -> CqReport:
    mfcq = check_mfcq(pd)
    crcq = check_crcq(pd, radius=radius, samples=samples, seed=seed)
    rcq = check_rcq_dual(pd, seed=seed)
    mscq = probe_mscq(pd.problem.with_point(pd.x), radius=probe_radius,
                      samples=probe_samples, seed=seed)
    notes: List[str] = [
        "metric subregularity is assumed by the second-order analysis; "
        "the probe supplies evidence, not proof",
    ]
    if crcq:
        notes.append("constant-rank condition implies metric subregularity")
    if rcq:
        notes.append("Robinson condition implies metric subregularity")
    if mfcq is not None:
        notes.append("for inequality blocks the Robinson condition "
                     "specializes to the strict-descent condition")
    if rcq and mscq.verdict != "Supported":
        notes.append("warning: Robinson condition holds but the "
                     "subregularity probe was inconclusive")
    return CqReport(mfcq, crcq, rcq, mscq, tuple(notes))
