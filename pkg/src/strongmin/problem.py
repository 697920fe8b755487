"""Problem model: objective, cone-tagged constraint blocks, candidate point.

The text format is line oriented (sections in fixed order, ``#`` comments)::

    vars: x1 x2 x3
    objective: 0.5*x1^2 + x2^2
    block soc 3:
      row: 2*x2^2
      row: x2^2 - x3
      row: x2^2 + x3
    point: 0 0 0

A problem may declare any number of blocks (including none) and the point
line is optional in files, but required before analysis.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from . import cones, expr
from .cones import Cone, Reduction
from .expr import EvalBundle, Expression

__all__ = [
    "Problem",
    "Block",
    "BlockData",
    "PointData",
    "ProblemFormatError",
    "load",
    "loads",
    "save_text",
    "evaluate",
    "FEASIBILITY_TOL",
    "ACTIVITY_TOL",
]

# x-bar is treated as exactly feasible; analysis refuses to run above this.
FEASIBILITY_TOL = 1e-8
# |q_i(x)| <= ACTIVITY_TOL marks an orthant row active.
ACTIVITY_TOL = 1e-8


class ProblemFormatError(Exception):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class Block:
    rows: Tuple[Expression, ...]
    cone: Cone


@dataclass(frozen=True)
class Problem:
    variables: Tuple[str, ...]
    objective: Expression
    blocks: Tuple[Block, ...]
    point: Optional[np.ndarray]

    @property
    def n(self) -> int:
        return len(self.variables)

    @property
    def m(self) -> int:
        return sum(b.cone.m for b in self.blocks)

    def with_objective(self, objective: Expression) -> "Problem":
        return Problem(self.variables, objective, self.blocks, self.point)

    def with_point(self, x) -> "Problem":
        return Problem(self.variables, self.objective, self.blocks,
                       np.asarray(x, dtype=float))

    def canonical_text(self) -> str:
        return save_text(self)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()


@dataclass(frozen=True)
class BlockData:
    cone: Cone
    value: np.ndarray          # q_B(x), shape (m_B,)
    jacobian: np.ndarray       # shape (m_B, n)
    hessians: np.ndarray       # shape (m_B, n, n)
    residual: float            # distance of value to the cone
    activity: Reduction


@dataclass(frozen=True)
class PointData:
    problem: Problem
    x: np.ndarray
    g: EvalBundle
    blocks: Tuple[BlockData, ...]

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def m(self) -> int:
        return sum(b.cone.m for b in self.blocks)

    @property
    def max_residual(self) -> float:
        return max((b.residual for b in self.blocks), default=0.0)

    @property
    def feasible(self) -> bool:
        return self.max_residual <= FEASIBILITY_TOL

    def full_jacobian(self) -> np.ndarray:
        if not self.blocks:
            return np.zeros((0, self.n))
        return np.vstack([b.jacobian for b in self.blocks])

    def full_values(self) -> np.ndarray:
        if not self.blocks:
            return np.zeros(0)
        return np.concatenate([b.value for b in self.blocks])

    def block_slices(self):
        out, start = [], 0
        for b in self.blocks:
            out.append(slice(start, start + b.cone.m))
            start += b.cone.m
        return out


# ----------------------------------------------------------------------
# parsing / serialization
# ----------------------------------------------------------------------

def _strip(line: str) -> str:
    cut = line.find("#")
    if cut >= 0:
        line = line[:cut]
    return line.rstrip("\n").rstrip()


def loads(text: str) -> Problem:
    lines = text.splitlines()
    idx = 0
    total = len(lines)

    def next_content():
        nonlocal idx
        while idx < total:
            stripped = _strip(lines[idx])
            if stripped.strip():
                return stripped, idx + 1
            idx += 1
        return None, total

    # vars
    line, lineno = next_content()
    if line is None or not line.strip().startswith("vars:"):
        raise ProblemFormatError("expected 'vars:' section", lineno)
    names = line.strip()[len("vars:"):].split()
    if not names:
        raise ProblemFormatError("no variables declared", lineno)
    if len(set(names)) != len(names):
        raise ProblemFormatError("duplicate variable name", lineno)
    idx += 1

    # objective
    line, lineno = next_content()
    if line is None or not line.strip().startswith("objective:"):
        raise ProblemFormatError("expected 'objective:' section", lineno)
    try:
        objective = expr.parse(line.strip()[len("objective:"):], names)
    except expr.ParseError as err:
        raise ProblemFormatError(f"objective: {err}", lineno) from err
    idx += 1

    # blocks
    blocks: List[Block] = []
    point = None
    seen_point = False
    while True:
        line, lineno = next_content()
        if line is None:
            break
        stripped = line.strip()
        if stripped.startswith("block "):
            if seen_point:
                raise ProblemFormatError("block after point section", lineno)
            head = stripped[len("block "):].rstrip(":")
            parts = head.split()
            if len(parts) != 2:
                raise ProblemFormatError("expected 'block <orthant|soc> <m>:'", lineno)
            kind, mtext = parts
            try:
                cone = Cone(kind, int(mtext))
            except (ValueError, TypeError) as err:
                raise ProblemFormatError(str(err), lineno) from err
            idx += 1
            rows: List[Expression] = []
            while len(rows) < cone.m:
                line, lineno = next_content()
                if line is None or not line.strip().startswith("row:"):
                    raise ProblemFormatError(
                        f"block needs {cone.m} rows, found {len(rows)}", lineno)
                try:
                    rows.append(expr.parse(line.strip()[len("row:"):], names))
                except expr.ParseError as err:
                    raise ProblemFormatError(f"row: {err}", lineno) from err
                idx += 1
            # a stray extra row is a dimension mismatch
            line, lineno = next_content()
            if line is not None and line.strip().startswith("row:"):
                raise ProblemFormatError(
                    f"block declared {cone.m} rows but more follow", lineno)
            blocks.append(Block(tuple(rows), cone))
        elif stripped.startswith("point:"):
            if seen_point:
                raise ProblemFormatError("duplicate point section", lineno)
            values = stripped[len("point:"):].split()
            if len(values) != len(names):
                raise ProblemFormatError(
                    f"point needs {len(names)} coordinates, got {len(values)}", lineno)
            try:
                point = np.array([float(v) for v in values])
            except ValueError as err:
                raise ProblemFormatError(f"bad point coordinate: {err}", lineno) from err
            seen_point = True
            idx += 1
        else:
            raise ProblemFormatError(f"unexpected line {stripped!r}", lineno)

    return Problem(tuple(names), objective, tuple(blocks), point)


def load(path_or_text: str) -> Problem:
    """Load a problem from a path, or parse the text directly if it contains newlines."""
    if "\n" in path_or_text:
        return loads(path_or_text)
    with open(path_or_text, "r", encoding="utf-8") as fh:
        return loads(fh.read())


def save_text(p: Problem) -> str:
    out = [f"vars: {' '.join(p.variables)}"]
    out.append(f"objective: {expr.to_text(p.objective, p.variables)}")
    for b in p.blocks:
        out.append(f"block {b.cone.kind} {b.cone.m}:")
        for row in b.rows:
            out.append(f"  row: {expr.to_text(row, p.variables)}")
    if p.point is not None:
        out.append("point: " + " ".join(repr(float(v)) for v in p.point))
    return "\n".join(out) + "\n"


# ----------------------------------------------------------------------
# evaluation
# ----------------------------------------------------------------------

def evaluate(p: Problem, x) -> PointData:
    """All derivative data plus per-block activity/residual at x."""
    x = np.asarray(x, dtype=float)
    if x.shape != (p.n,):
        raise ValueError(f"point must have length {p.n}")
    g = expr.eval_bundle(p.objective, x)
    blocks = []
    for b in p.blocks:
        bundles = [expr.eval_bundle(row, x) for row in b.rows]
        value = np.array([bu.value for bu in bundles])
        jac = np.vstack([bu.gradient for bu in bundles])
        hess = np.stack([bu.hessian for bu in bundles])
        residual = cones.distance(b.cone, value)
        if residual <= FEASIBILITY_TOL:
            activity = cones.reduction_at(b.cone, value, tol=ACTIVITY_TOL)
        else:
            # infeasible: classify at the nearest cone point, keep the residual
            activity = cones.reduction_at(b.cone, cones.project(b.cone, value),
                                          tol=ACTIVITY_TOL)
        blocks.append(BlockData(b.cone, value, jac, hess, residual, activity))
    return PointData(p, x, g, tuple(blocks))


def batch_constraint_values(p: Problem, X: np.ndarray) -> np.ndarray:
    """Stacked q(x) over columns of X; shape (m, N)."""
    if not p.blocks:
        return np.zeros((0, X.shape[1]))
    rows = []
    for b in p.blocks:
        for row in b.rows:
            rows.append(expr.eval_values(row, X))
    return np.vstack(rows)


def batch_constraint_grads(p: Problem, X: np.ndarray):
    """Stacked (values (m,N), jacobians (m,n,N)) over columns of X."""
    n, N = X.shape
    vals, jacs = [], []
    for b in p.blocks:
        for row in b.rows:
            v, gmat = expr.eval_grads(row, X)
            vals.append(v)
            jacs.append(gmat)
    if not vals:
        return np.zeros((0, N)), np.zeros((0, n, N))
    return np.vstack(vals), np.stack(jacs)


def batch_distance(p: Problem, Q: np.ndarray) -> np.ndarray:
    """Columnwise distance of stacked constraint values to the cone product."""
    N = Q.shape[1]
    total = np.zeros(N)
    start = 0
    for b in p.blocks:
        sl = slice(start, start + b.cone.m)
        diff = Q[sl] - cones.project_batch(b.cone, Q[sl])
        total += np.sum(diff * diff, axis=0)
        start += b.cone.m
    return np.sqrt(total)
