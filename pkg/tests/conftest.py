import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

REPO = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
CORPUS = os.path.join(REPO, "corpus")


def corpus_path(name: str, filename: str) -> str:
    return os.path.join(CORPUS, name, filename)


@pytest.fixture(scope="session")
def ex44():
    from strongmin import problem
    return problem.load(corpus_path("ex44", "problem.prob"))


@pytest.fixture(scope="session")
def ex46():
    from strongmin import problem
    return problem.load(corpus_path("ex46", "problem.prob"))


@pytest.fixture(scope="session")
def ex47():
    from strongmin import problem
    return problem.load(corpus_path("ex47", "problem.prob"))


@pytest.fixture(scope="session")
def socb():
    from strongmin import problem
    return problem.load(corpus_path("socb", "problem.prob"))


@pytest.fixture(scope="session")
def licq():
    from strongmin import problem
    return problem.load(corpus_path("licq", "problem.prob"))


def pipeline(p, samples=4000, seed=0):
    """evaluate -> stationarity -> multiplier set, shared across tests."""
    from strongmin import kkt, problem
    pd = problem.evaluate(p, p.point)
    st = kkt.stationarity_check(pd)
    assert st.is_stationary
    ms = kkt.build_multiplier_set(pd, st.witness)
    return pd, st, ms


def random_quadratic_problem(rng, n):
    """Unconstrained strictly convex quadratic with a known Hessian."""
    from strongmin import expr, problem
    A = rng.standard_normal((n, n))
    H = A @ A.T + 0.5 * np.eye(n)
    names = tuple(f"x{i+1}" for i in range(n))
    obj = quadratic_expr(np.zeros(n), H)
    p = problem.Problem(names, obj, (), np.zeros(n))
    return p, H


def quadratic_expr(c, Q):
    """Expression tree for c.x + 0.5 x.Q.x."""
    from strongmin import expr
    n = len(c)
    e = expr.Const(0.0)
    for i in range(n):
        if c[i] != 0.0:
            e = expr.Binary("add", e, expr.Binary("mul", expr.Const(float(c[i])),
                                                  expr.Var(i)))
    for i in range(n):
        for j in range(i, n):
            coef = 0.5 * Q[i][j] if i == j else Q[i][j]
            if coef != 0.0:
                term = expr.Binary("mul", expr.Const(float(coef)),
                                   expr.Binary("mul", expr.Var(i), expr.Var(j)))
                e = expr.Binary("add", e, term)
    return e
