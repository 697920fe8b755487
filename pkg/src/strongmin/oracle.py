"""Brute-force ground truth: empirical quadratic growth and tilt behavior.

Nothing here trusts the analytic machinery.  Feasible points are produced
by projected penalty descent, the growth modulus is an infimum of raw
difference quotients, and the tilt probe watches minimizers of linearly
perturbed problems move.  Verdict thresholds are recorded in the report:
any finite-sample check of an asymptotic property needs cutoffs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from . import expr
from ._descent import minimize_tilted, push_to_feasible
from ._sampling import ball, sphere
from .problem import Problem

__all__ = [
    "QgcEstimate",
    "TiltReport",
    "sample_feasible",
    "estimate_qg_modulus",
    "tilt_probe",
    "qgc_verdict",
    "DEFAULT_RADII",
]

DEFAULT_RADII = (0.2, 0.05, 0.0125)

# verdict thresholds (ours, recorded): hold floor, fail floor, trend decay
HOLD_FLOOR = 1e-4
FAIL_FLOOR = 1e-6
TREND_DECAY = 1.25
TREND_SLACK = 1.05


@dataclass(frozen=True)
class QgcEstimate:
    radii: Tuple[float, ...]
    per_radius: Tuple[float, ...]     # empirical modulus at each radius
    sample_counts: Tuple[int, ...]
    kept_counts: Tuple[int, ...]
    verdict: str                      # "Holds" | "Fails" | "Inconclusive"
    kappa_hat: float                  # min over radii (conservative)
    seed: int


@dataclass(frozen=True)
class TiltReport:
    single_valued: bool
    lipschitz_estimate: float         # +inf when multivalued
    refined_ratio: float              # max ratio after bisection refinement
    base_ratio: float                 # max ratio on the initial grid
    grid_size: int
    evidence_against: bool
    note: str


def _sample_feasible_full(p: Problem, radius: float, count: int, seed: int = 0,
                          keep_tol: float = 1e-9):
    if p.point is None:
        raise ValueError("problem has no candidate point")
    X = ball(p.point, radius, count, seed=seed)
    if not p.blocks:
        return X, np.zeros(count), True
    Y, res = push_to_feasible(p, X)
    dist = np.linalg.norm(Y - p.point[:, None], axis=0)
    keep = (res <= keep_tol) & (dist <= 1.05 * radius)
    return Y[:, keep], res[keep], keep.sum() >= 0.5 * count


def sample_feasible(p: Problem, radius: float, count: int, seed: int = 0,
                    keep_tol: float = 1e-9):
    """Feasible points near the candidate, or an inconclusive flag.

    Ball samples are pushed onto the feasible set; columns whose final
    residual exceeds ``keep_tol`` are discarded.  The result is flagged
    inconclusive when fewer than half the requested points survive.
    """
    Y, _, ok = _sample_feasible_full(p, radius, count, seed=seed,
                                     keep_tol=keep_tol)
    return Y, ok


def qgc_verdict(per_radius, usable=True):
    """Shared verdict logic for the conic and univariate growth estimators.

    The per-radius modulus is monotone nondecreasing as the radius shrinks
    whenever growth holds, so a nonincreasing sequence with total decay
    beyond TREND_DECAY is failure evidence even while still positive.
    """
    if not usable or not per_radius:
        return "Inconclusive"
    ks = list(per_radius)
    if ks[-1] < FAIL_FLOOR:
        return "Fails"
    if len(ks) >= 3:
        nonincreasing = all(ks[i + 1] <= ks[i] * TREND_SLACK for i in range(len(ks) - 1))
        if nonincreasing and ks[0] >= TREND_DECAY * ks[-1]:
            return "Fails"
    if ks[-1] >= HOLD_FLOOR and (len(ks) < 2 or ks[-1] >= 0.5 * ks[-2]):
        return "Holds"
    return "Inconclusive"


def estimate_qg_modulus(p: Problem, radii=DEFAULT_RADII, count: int = 20000,
                        seed: int = 0) -> QgcEstimate:
    """Empirical growth modulus: inf of 2(g(x)-g(x̄))/||x-x̄||² over feasible samples.

    Samples too close to the base point are excluded: the difference
    quotient there is dominated by rounding and by the feasibility
    tolerance (points that project onto the base point itself report a
    0/0 ratio).  The floor is residual-aware (distance at least
    150 sqrt(residual)) plus an absolute 1e-7 times the problem scale.
    """
    if p.point is None:
        raise ValueError("problem has no candidate point")
    xbar = p.point
    g0 = expr.eval_value(p.objective, xbar)
    scale = max(1.0, float(np.linalg.norm(xbar)))
    per_radius: List[float] = []
    kept: List[int] = []
    usable = True
    for i, r in enumerate(radii):
        Y, res, ok = _sample_feasible_full(p, r, count, seed=seed + 31 * i)
        usable = usable and ok
        kept.append(Y.shape[1])
        if Y.shape[1] == 0:
            per_radius.append(np.inf)
            continue
        d2 = np.sum((Y - xbar[:, None]) ** 2, axis=0)
        floor = np.maximum(150.0 * np.sqrt(np.maximum(res, 0.0)), 1e-7 * scale)
        mask = d2 > floor * floor
        if not np.any(mask):
            per_radius.append(np.inf)
            continue
        vals = expr.eval_values(p.objective, Y[:, mask])
        ratios = 2.0 * (vals - g0) / d2[mask]
        per_radius.append(float(np.min(ratios)))
    verdict = qgc_verdict(per_radius, usable=usable)
    kappa = float(min(per_radius)) if per_radius else np.inf
    return QgcEstimate(tuple(float(r) for r in radii), tuple(per_radius),
                       tuple([count] * len(radii)), tuple(kept), verdict,
                       kappa, seed)


# ----------------------------------------------------------------------
# tilt probe
# ----------------------------------------------------------------------

def _solve_tilts(p: Problem, tilts: np.ndarray, center: np.ndarray,
                 ball_radius: float, starts: int, seed: int, iters: int):
    """Global minimizers (clusters) per tilt column."""
    n, T = tilts.shape
    S = np.column_stack([center[:, None], ball(center, 0.9 * ball_radius,
                                               starts - 1, seed=seed)])
    V = np.repeat(tilts, starts, axis=1)
    X0 = np.tile(S, (1, T))
    Y, vals, res = minimize_tilted(p, V, X0, center, ball_radius, iters=iters)
    out = []
    for t in range(T):
        sl = slice(t * starts, (t + 1) * starts)
        ys, vs, rs = Y[:, sl], vals[sl], res[sl]
        ok = rs <= 1e-7
        if not np.any(ok):
            out.append(None)
            continue
        ys, vs = ys[:, ok], vs[ok]
        vbest = float(np.min(vs))
        tie = vs <= vbest + 1e-9 * max(1.0, abs(vbest))
        pts = ys[:, tie]
        clusters = _cluster(pts, tol=1e-5)
        best = pts[:, int(np.argmin(vs[tie]))]
        out.append((best, clusters, vbest))
    return out


def _cluster(pts: np.ndarray, tol: float):
    reps: List[np.ndarray] = []
    for j in range(pts.shape[1]):
        x = pts[:, j]
        if not any(np.linalg.norm(x - r) <= tol for r in reps):
            reps.append(x)
    return reps


def tilt_probe(p: Problem, tilt_radius: float = 0.01, ball_radius: float = 0.25,
               grid: int = 16, seed: int = 0, starts: int = 10,
               refine: int = 24, iters: int = 300,
               ratio_threshold: float = 100.0) -> TiltReport:
    """Watch minimizers of tilted problems: single-valued and Lipschitz?

    A coarse tilt grid seeds the probe; bisection then refines the tilt
    pair with the worst displacement ratio.  A genuine jump of the solution
    map makes the refined ratio blow up, which (like an observed
    multivalued solution set) counts as evidence against tilt stability.
    """
    if p.point is None:
        raise ValueError("problem has no candidate point")
    n = p.n
    center = p.point
    dirs = [np.zeros(n)]
    for i in range(n):
        for sgn in (1.0, -1.0):
            e = np.zeros(n)
            e[i] = sgn
            dirs.append(e)
    extra = sphere(n, max(grid - len(dirs), 0), seed=seed + 5)
    tilts = np.column_stack(dirs + [extra]) if extra.size else np.column_stack(dirs)
    tilts = tilt_radius * tilts

    solved = {}

    def solve(vcols: np.ndarray):
        res = _solve_tilts(p, vcols, center, ball_radius, starts, seed, iters)
        for j in range(vcols.shape[1]):
            solved[vcols[:, j].tobytes()] = res[j]

    solve(tilts)
    multivalued = any(r is not None and len(r[1]) > 1 for r in solved.values())

    def ratio(va, vb):
        ra, rb = solved.get(va.tobytes()), solved.get(vb.tobytes())
        if ra is None or rb is None:
            return 0.0
        dv = np.linalg.norm(va - vb)
        return float(np.linalg.norm(ra[0] - rb[0]) / dv) if dv > 1e-15 else 0.0

    cols = [tilts[:, j] for j in range(tilts.shape[1])]
    pairs = [(a, b) for i, a in enumerate(cols) for b in cols[i + 1:]]
    base_ratio = max((ratio(a, b) for a, b in pairs), default=0.0)

    best_pair = max(pairs, key=lambda ab: ratio(*ab), default=None)
    refined = base_ratio
    for _ in range(refine):
        if best_pair is None:
            break
        a, b = best_pair
        mid = 0.5 * (a + b)
        solve(mid[:, None])
        cols.append(mid)
        cand = [(a, mid), (mid, b)] + [(a, b)]
        best_pair = max(cand, key=lambda ab: ratio(*ab))
        refined = max(refined, ratio(*best_pair))
        if any(r is not None and len(r[1]) > 1 for r in solved.values()):
            multivalued = True
            break
        if np.linalg.norm(best_pair[0] - best_pair[1]) < 1e-12:
            break

    lip = np.inf if multivalued else refined
    evidence = bool(multivalued or refined > ratio_threshold)
    note = ("solution map multivalued on the tilt grid" if multivalued else
            f"max displacement ratio {refined:.3g} after refinement "
            f"(threshold {ratio_threshold:g})")
    return TiltReport(not multivalued, float(lip), float(refined),
                      float(base_ratio), tilts.shape[1], evidence, note)
