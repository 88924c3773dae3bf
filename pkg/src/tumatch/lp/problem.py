"""Sparse equality-form LP containers: max c'x s.t. Ax = b, x >= 0."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp


class LpError(Exception):
    """Malformed problem or a numerical failure inside a backend."""


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    ITERATION_LIMIT = "IterationLimit"


@dataclass(frozen=True)
class LpProblem:
    """Maximisation LP with equality rows and nonnegative, upper-unbounded variables.

    ``A`` is kept in CSC layout since both the simplex and column generation
    work column-wise.  Labels identify rows and columns across re-solves, which
    is what makes warm starts and dual lookup by name possible.
    """

    c: np.ndarray
    A: sp.csc_matrix
    b: np.ndarray
    row_labels: tuple[str, ...]
    col_labels: tuple[str, ...]

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        b = np.asarray(self.b, dtype=float).ravel()
        A = sp.csc_matrix(self.A, dtype=float)
        A.sum_duplicates()
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "row_labels", tuple(self.row_labels))
        object.__setattr__(self, "col_labels", tuple(self.col_labels))
        m, n = A.shape
        if c.size != n or b.size != m:
            raise LpError(f"dimension mismatch: A is {m}x{n}, c has {c.size}, b has {b.size}")
        if len(self.row_labels) != m or len(self.col_labels) != n:
            raise LpError("label count does not match problem dimensions")
        if len(set(self.row_labels)) != m:
            raise LpError("duplicate row label")
        if len(set(self.col_labels)) != n:
            raise LpError("duplicate column label")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(b)) and np.all(np.isfinite(A.data))):
            raise LpError("NaN or Inf coefficient")

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    @property
    def n_cols(self) -> int:
        return self.A.shape[1]

    def row_index(self) -> dict[str, int]:
        return {label: k for k, label in enumerate(self.row_labels)}

    def col_index(self) -> dict[str, int]:
        return {label: k for k, label in enumerate(self.col_labels)}

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x)


@dataclass
class LpSolution:
    status: Status
    x: np.ndarray
    duals: np.ndarray
    objective: float
    basis: Optional[tuple[str, ...]] = None
    iterations: int = 0
    row_labels: tuple[str, ...] = field(default=(), repr=False)
    col_labels: tuple[str, ...] = field(default=(), repr=False)

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL

    def dual(self, label: str) -> float:
        return float(self.duals[self.row_labels.index(label)])

    def dual_map(self) -> dict[str, float]:
        return dict(zip(self.row_labels, self.duals.tolist()))

    def primal_map(self) -> dict[str, float]:
        return dict(zip(self.col_labels, self.x.tolist()))


def make_problem(
    c: Sequence[float],
    A,
    b: Sequence[float],
    row_labels: Optional[Sequence[str]] = None,
    col_labels: Optional[Sequence[str]] = None,
) -> LpProblem:
    """Convenience constructor with default ``r{k}`` / ``x{k}`` labels."""
    A = sp.csc_matrix(np.atleast_2d(A) if not sp.issparse(A) else A, dtype=float)
    m, n = A.shape
    if row_labels is None:
        row_labels = [f"r{k}" for k in range(m)]
    if col_labels is None:
        col_labels = [f"x{k}" for k in range(n)]
    return LpProblem(np.asarray(c, float), A, np.asarray(b, float), tuple(row_labels), tuple(col_labels))


def add_columns(problem: LpProblem, new_columns) -> LpProblem:
    """Append columns given as ``(label, cost, {row_label_or_index: coef})``.

    Existing columns keep their positions, so a basis taken on ``problem``
    remains a valid warm start for the result.
    """
    new_columns = list(new_columns)
    if not new_columns:
        return problem
    rows = problem.row_index()
    labels, costs, ri, cj, vals = [], [], [], [], []
    for k, (label, cost, coefs) in enumerate(new_columns):
        labels.append(label)
        costs.append(float(cost))
        for key, val in dict(coefs).items():
            if isinstance(key, str):
                if key not in rows:
                    raise LpError(f"unknown row {key!r} in column {label!r}")
                key = rows[key]
            elif not 0 <= key < problem.n_rows:
                raise LpError(f"row index {key} out of range in column {label!r}")
            ri.append(key)
            cj.append(k)
            vals.append(float(val))
    block = sp.csc_matrix((vals, (ri, cj)), shape=(problem.n_rows, len(new_columns)))
    return append_block(problem, np.asarray(costs), block, labels)


def append_block(problem: LpProblem, costs: np.ndarray, block, labels: Sequence[str]) -> LpProblem:
    """Vectorised form of :func:`add_columns` for a ready-made sparse block."""
    labels = tuple(labels)
    clash = set(labels) & set(problem.col_labels)
    if clash or len(set(labels)) != len(labels):
        raise LpError(f"duplicate column label(s): {sorted(clash)[:5] or 'within new block'}")
    A = sp.hstack([problem.A, sp.csc_matrix(block)], format="csc")
    return LpProblem(
        np.concatenate([problem.c, np.asarray(costs, float)]),
        A,
        problem.b,
        problem.row_labels,
        problem.col_labels + labels,
    )


def write_lp(problem: LpProblem, path) -> None:
    """Dump in CPLEX LP text format for cross-checking with external solvers."""
    A = problem.A.tocsr()
    names = problem.col_labels

    def terms(idx, coefs):
        parts = []
        for j, a in zip(idx, coefs):
            if a == 0:
                continue
            sign = "-" if a < 0 else "+"
            parts.append(f"{sign} {abs(a):.17g} {names[j]}")
        if not parts:
            return "0 " + (names[0] if names else "")
        text = " ".join(parts)
        return text[2:] if text.startswith("+ ") else text

    nz = np.flatnonzero(problem.c)
    with open(path, "w") as fh:
        fh.write("\\ generated by tumatch\nMaximize\n obj: ")
        fh.write(terms(nz, problem.c[nz]) if nz.size else "0 " + (names[0] if names else ""))
        fh.write("\nSubject To\n")
        for r, label in enumerate(problem.row_labels):
            lo, hi = A.indptr[r], A.indptr[r + 1]
            fh.write(f" {label}: {terms(A.indices[lo:hi], A.data[lo:hi])} = {problem.b[r]:.17g}\n")
        fh.write("End\n")
