"""Batched projected penalty descent shared by the sampling oracles.

Two drivers: pushing sample points onto the feasible set (distance
estimation and feasible sampling), and minimizing a tilted objective over
the feasible set intersected with a ball (tilt probe).  Everything is
vectorized over sample columns; per-column adaptive steps keep the loops
deterministic and independent of batching.
"""

from __future__ import annotations

import numpy as np

from . import expr
from .problem import (Problem, batch_constraint_grads, batch_constraint_values,
                      batch_distance)

__all__ = ["push_to_feasible", "feasibility_residuals", "minimize_tilted"]


def feasibility_residuals(p: Problem, Y: np.ndarray) -> np.ndarray:
    if not p.blocks:
        return np.zeros(Y.shape[1])
    return batch_distance(p, batch_constraint_values(p, Y))


def _dist_grad(p: Problem, Y: np.ndarray):
    """dist^2(q(y); cones) and its gradient, columnwise."""
    q, jacs = batch_constraint_grads(p, Y)
    if q.shape[0] == 0:
        return np.zeros(Y.shape[1]), np.zeros_like(Y)
    from . import cones as _c
    resid = np.zeros_like(q)
    start = 0
    for b in p.blocks:
        sl = slice(start, start + b.cone.m)
        resid[sl] = q[sl] - _c.project_batch(b.cone, q[sl])
        start += b.cone.m
    d2 = np.sum(resid * resid, axis=0)
    grad = 2.0 * np.einsum("mnN,mN->nN", jacs, resid, optimize=True)
    return d2, grad


def push_to_feasible(p: Problem, X: np.ndarray, iters: int = 200,
                     rho0: float = 10.0, rho_doubling: int = 16,
                     restore_iters: int = 20):
    """Pull every column of X toward the nearest feasible point.

    Returns (Y, residuals).  The distance ||Y - X|| is an upper estimate of
    the true distance to the feasible set; final feasibility residuals are
    driven to ~1e-12 by a Gauss-Newton restoration whenever possible.
    """
    if not p.blocks:
        return X.copy(), np.zeros(X.shape[1])
    Y = X.copy()
    scale = max(1.0, float(np.max(np.abs(X))))
    steps = np.full(X.shape[1], 0.05 * scale)
    rho = rho0

    d2, dgrad = _dist_grad(p, Y)
    psi = np.sum((Y - X) ** 2, axis=0) + rho * d2
    for it in range(iters):
        if it and it % rho_doubling == 0:
            rho *= 2.0
            d2, dgrad = _dist_grad(p, Y)
            psi = np.sum((Y - X) ** 2, axis=0) + rho * d2
        grad = 2.0 * (Y - X) + rho * dgrad
        gn = np.linalg.norm(grad, axis=0)
        gn = np.where(gn > 1e-14, gn, 1.0)
        cand = Y - steps * grad / gn
        d2c, dgradc = _dist_grad(p, cand)
        psic = np.sum((cand - X) ** 2, axis=0) + rho * d2c
        better = np.nan_to_num(psic, nan=np.inf) < psi
        Y = np.where(better, cand, Y)
        psi = np.where(better, psic, psi)
        d2 = np.where(better, d2c, d2)
        dgrad = np.where(better, dgradc, dgrad)
        steps = np.where(better, steps * 1.2, steps * 0.5)
    Y = _restore(p, Y, restore_iters)
    return Y, feasibility_residuals(p, Y)


def _restore(p: Problem, Y: np.ndarray, iters: int) -> np.ndarray:
    """Damped Gauss-Newton on the cone residual of q(y)."""
    from . import cones as _c
    n, N = Y.shape
    eye = np.eye(p.m) * 1e-12
    best_res = feasibility_residuals(p, Y)
    for _ in range(iters):
        if np.all(best_res <= 1e-13):
            break
        q, jacs = batch_constraint_grads(p, Y)
        resid = np.zeros_like(q)
        start = 0
        for b in p.blocks:
            sl = slice(start, start + b.cone.m)
            resid[sl] = q[sl] - _c.project_batch(b.cone, q[sl])
            start += b.cone.m
        JJT = np.einsum("inN,jnN->Nij", jacs, jacs, optimize=True)
        rhs = resid.T[:, :, None]
        try:
            mu = np.linalg.solve(JJT + eye[None, :, :], rhs)[:, :, 0]
        except np.linalg.LinAlgError:
            mu = np.linalg.solve(JJT + 1e-8 * np.eye(p.m)[None, :, :], rhs)[:, :, 0]
        step = np.einsum("mnN,Nm->nN", jacs, mu, optimize=True)
        step = np.nan_to_num(step)
        cand = Y - step
        res_c = feasibility_residuals(p, cand)
        better = np.nan_to_num(res_c, nan=np.inf) < best_res
        Y = np.where(better, cand, Y)
        best_res = np.where(better, res_c, best_res)
    return Y


def minimize_tilted(p: Problem, V: np.ndarray, starts: np.ndarray,
                    center: np.ndarray, ball_radius: float,
                    iters: int = 300, rho0: float = 100.0,
                    rho_doubling: int = 20):
    """Columnwise minimization of g(y) - v.y over the feasible set ∩ ball.

    V (n, N) holds one tilt per column, starts (n, N) the initial points.
    Returns (Y, objective values, feasibility residuals).
    """
    n, N = starts.shape
    Y = _clip_ball(starts.copy(), center, ball_radius)
    steps = np.full(N, 0.05 * max(ball_radius, 1e-6))
    rho = rho0

    def objective(Z, rho_now):
        g = expr.eval_values(p.objective, Z)
        tilt = np.sum(V * Z, axis=0)
        d2, _ = _dist_grad(p, Z) if p.blocks else (np.zeros(N), None)
        return g - tilt + rho_now * d2

    val = objective(Y, rho)
    for it in range(iters):
        if it and it % rho_doubling == 0:
            rho *= 2.0
            val = objective(Y, rho)
        gval, ggrad = expr.eval_grads(p.objective, Y)
        grad = ggrad - V
        if p.blocks:
            _, dgrad = _dist_grad(p, Y)
            grad = grad + rho * dgrad
        gn = np.linalg.norm(grad, axis=0)
        gn = np.where(gn > 1e-14, gn, 1.0)
        cand = _clip_ball(Y - steps * grad / gn, center, ball_radius)
        val_c = objective(cand, rho)
        better = np.nan_to_num(val_c, nan=np.inf) < val
        Y = np.where(better, cand, Y)
        val = np.where(better, val_c, val)
        steps = np.where(better, steps * 1.2, steps * 0.5)

    if p.blocks:
        Y = _restore(p, Y, 20)
        Y = _clip_ball(Y, center, ball_radius)
    gfinal = expr.eval_values(p.objective, Y) - np.sum(V * Y, axis=0)
    return Y, gfinal, feasibility_residuals(p, Y)


def _clip_ball(Y: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    diff = Y - center[:, None]
    nrm = np.linalg.norm(diff, axis=0)
    factor = np.where(nrm > radius, radius / np.where(nrm > 0, nrm, 1.0), 1.0)
    return center[:, None] + diff * factor
