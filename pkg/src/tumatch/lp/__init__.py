"""LP layer: problem container, built-in revised simplex, optional HiGHS adapter."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .problem import (
    LpError,
    LpProblem,
    LpSolution,
    Status,
    add_columns,
    append_block,
    make_problem,
    write_lp,
)
from .simplex import ART_PREFIX, RevisedSimplex, SimplexOptions, equilibrate

BACKENDS = ("simplex", "highs")


def solve(
    problem: LpProblem,
    warm_start: Optional[Sequence[str]] = None,
    backend: str = "simplex",
    options: Optional[SimplexOptions] = None,
) -> LpSolution:
    """Solve ``problem``; ``warm_start`` is the ``basis`` of an earlier solution.

    Columns added since that basis was taken simply start nonbasic.  The
    ``highs`` backend ignores warm starts and exists for benchmarking.
    """
    if backend == "simplex":
        return RevisedSimplex(options).solve(problem, warm_start)
    if backend == "highs":
        return _solve_highs(problem)
    raise LpError(f"unknown backend {backend!r}; choose from {BACKENDS}")


def _solve_highs(problem: LpProblem) -> LpSolution:
    from scipy.optimize import linprog

    m, n = problem.A.shape
    if m == 0:
        return RevisedSimplex().solve(problem)
    res = linprog(
        -problem.c,
        A_eq=problem.A,
        b_eq=problem.b,
        bounds=(0, None),
        method="highs-ds",
        options={"presolve": False},
    )
    status = {0: Status.OPTIMAL, 1: Status.ITERATION_LIMIT, 2: Status.INFEASIBLE, 3: Status.UNBOUNDED}.get(res.status)
    if status is None:
        raise LpError(f"HiGHS failed: {res.message}")
    if status is Status.OPTIMAL:
        x = np.maximum(res.x, 0.0)
        y = -np.asarray(res.eqlin.marginals)
    else:
        x, y = np.zeros(n), np.zeros(m)
    return LpSolution(status, x, y, float(problem.c @ x), None, int(getattr(res, "nit", 0)),
                      problem.row_labels, problem.col_labels)


def certificate(problem: LpProblem, sol: LpSolution) -> dict[str, float]:
    """Primal/dual feasibility, complementary slackness and duality-gap residuals."""
    x, y = sol.x, sol.duals
    rc = problem.c - problem.A.T @ y
    primal = float(np.max(np.abs(problem.A @ x - problem.b), initial=0.0))
    dual = float(np.max(rc, initial=0.0))
    cs = float(np.max(np.abs(x * rc), initial=0.0))
    gap = abs(float(problem.c @ x) - float(problem.b @ y))
    return {"primal": primal, "dual": dual, "cs": cs, "gap": gap}


__all__ = [
    "ART_PREFIX",
    "BACKENDS",
    "LpError",
    "LpProblem",
    "LpSolution",
    "RevisedSimplex",
    "SimplexOptions",
    "Status",
    "add_columns",
    "append_block",
    "certificate",
    "equilibrate",
    "make_problem",
    "solve",
    "write_lp",
]
