"""Dense two-phase primal simplex for the tiny LPs used across the package.

Standard form: minimize c.x subject to A x = b, x >= 0, solved with
Bland's rule (anti-cycling).  A convenience wrapper accepts inequality
rows, equality rows, and free variables (split into differences).  All
problems here have a handful of variables, so no effort is spent on
factorization or sparsity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

__all__ = ["LpResult", "solve_lp"]

_EPS = 1e-10


@dataclass
class LpResult:
    status: str  # "optimal" | "unbounded" | "infeasible"
    x: Optional[np.ndarray] = None        # optimal point (original variables)
    value: Optional[float] = None         # optimal objective (max sense of wrapper)
    ray: Optional[np.ndarray] = None      # recession direction when unbounded


def _iterate(c, A, b, basis, ban=frozenset(), max_iter=20000):
    m, n = A.shape
    basis = list(basis)
    for _ in range(max_iter):
        B = A[:, basis]
        try:
            xb = np.linalg.solve(B, b)
            lam = np.linalg.solve(B.T, c[basis])
        except np.linalg.LinAlgError:
            B = B + 1e-13 * np.eye(m)
            xb = np.linalg.solve(B, b)
            lam = np.linalg.solve(B.T, c[basis])
        reduced = c - lam @ A
        entering = -1
        for j in range(n):  # Bland: smallest eligible index
            if j in ban or j in basis:
                continue
            if reduced[j] < -1e-9:
                entering = j
                break
        if entering < 0:
            x = np.zeros(n)
            x[basis] = xb
            return x, basis, "optimal", None
        d = np.linalg.solve(B, A[:, entering])
        pos = d > _EPS
        if not np.any(pos):
            x = np.zeros(n)
            x[basis] = xb
            ray = np.zeros(n)
            ray[entering] = 1.0
            ray[basis] = -d
            return x, basis, "unbounded", ray
        ratios = np.where(pos, np.maximum(xb, 0.0) / np.where(pos, d, 1.0), np.inf)
        best = np.min(ratios)
        leave = -1
        for row in range(m):  # Bland on ties: smallest basis index
            if pos[row] and ratios[row] <= best + _EPS:
                if leave < 0 or basis[row] < basis[leave]:
                    leave = row
        basis[leave] = entering
    raise RuntimeError("simplex iteration limit exceeded")


def _simplex_core(c, A, b):
    """min c.x, Ax=b, x>=0 with b>=0. Returns (status, x, ray)."""
    m, n = A.shape
    T = np.hstack([A, np.eye(m)])
    cost1 = np.concatenate([np.zeros(n), np.ones(m)])
    basis = list(range(n, n + m))
    x, basis, status, _ = _iterate(cost1, T, b.copy(), basis)
    if status != "optimal" or float(cost1 @ x) > 1e-7:
        return "infeasible", None, None
    # drive artificials out of the basis where a real pivot exists
    for row, bi in enumerate(basis):
        if bi >= n:
            B = T[:, basis]
            tab = np.linalg.solve(B, T[:, :n])
            piv = np.flatnonzero(np.abs(tab[row]) > 1e-8)
            if piv.size:
                basis[row] = int(piv[0])
    cost2 = np.concatenate([c, np.zeros(m)])
    ban = set(range(n, n + m))
    x, basis, status, ray = _iterate(cost2, T, b.copy(), basis, ban=ban)
    if status == "unbounded":
        return "unbounded", x[:n], ray[:n]
    return status, x[:n], None


def solve_lp(objective, A_ub=None, b_ub=None, A_eq=None, b_eq=None,
             nonneg=False) -> LpResult:
    """Maximize objective.x subject to A_ub x <= b_ub and A_eq x = b_eq.

    Variables are free unless nonneg=True.  Returns status optimal /
    unbounded (with a recession ray) / infeasible.
    """
    f = np.asarray(objective, dtype=float)
    nvar = f.shape[0]
    A_ub = np.zeros((0, nvar)) if A_ub is None else np.atleast_2d(np.asarray(A_ub, float))
    b_ub = np.zeros(0) if b_ub is None else np.atleast_1d(np.asarray(b_ub, float))
    A_eq = np.zeros((0, nvar)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, float))
    b_eq = np.zeros(0) if b_eq is None else np.atleast_1d(np.asarray(b_eq, float))

    if nonneg:
        width = nvar
        cols_ub, cols_eq, cost_x = A_ub, A_eq, -f
        to_x = lambda z: z[:nvar]
    else:
        # free variables: x = u - v with u, v >= 0
        width = 2 * nvar
        cols_ub = np.hstack([A_ub, -A_ub])
        cols_eq = np.hstack([A_eq, -A_eq])
        cost_x = np.concatenate([-f, f])
        to_x = lambda z: z[:nvar] - z[nvar:2 * nvar]

    n_slack = A_ub.shape[0]
    A = np.vstack([
        np.hstack([cols_ub, np.eye(n_slack)]),
        np.hstack([cols_eq, np.zeros((A_eq.shape[0], n_slack))]),
    ])
    b = np.concatenate([b_ub, b_eq])
    cost = np.concatenate([cost_x, np.zeros(n_slack)])
    neg = b < 0
    A[neg] *= -1.0
    b[neg] *= -1.0

    status, z, ray = _simplex_core(cost, A, b)
    if status == "infeasible":
        return LpResult("infeasible")
    if status == "unbounded":
        return LpResult("unbounded", x=to_x(z), ray=to_x(ray))
    x = to_x(z)
    return LpResult("optimal", x=x, value=float(f @ x))
