"""Bounded revised primal simplex with LU + eta-file basis updates.

Artificial variables carry one column per row.  They form the phase-1 basis
for rows the crash could not cover, and are kept (with bounds [0, 0]) during
phase 2 so that redundant or empty rows never make the basis singular.  A row
whose only basic entry is its artificial therefore prices at 0.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import _kernels as _k
from .problem import LpError, LpProblem, LpSolution, Status

log = logging.getLogger(__name__)

ART_PREFIX = "~art~"


@dataclass
class SimplexOptions:
    feas_tol: float = 1e-9
    opt_tol: float = 1e-7
    pivot_tol: float = 1e-9
    max_iter: Optional[int] = None
    refactor_every: int = 64
    bland_after: int = 50
    scale: bool = True


def equilibrate(A: sp.csc_matrix, passes: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Geometric-mean row/column scaling, rounded to powers of two (exact in floating point)."""
    m, n = A.shape
    r = np.ones(m)
    s = np.ones(n)
    if A.nnz == 0:
        return r, s
    coo = A.tocoo()
    absval = np.abs(coo.data)
    keep = absval > 0
    rows, cols, logv = coo.row[keep], coo.col[keep], np.log2(absval[keep])
    lr = np.zeros(m)
    ls = np.zeros(n)
    for _ in range(passes):
        cur = logv + lr[rows] + ls[cols]
        hi = np.full(m, -np.inf)
        lo = np.full(m, np.inf)
        np.maximum.at(hi, rows, cur)
        np.minimum.at(lo, rows, cur)
        has = np.isfinite(hi)
        lr[has] -= 0.5 * (hi[has] + lo[has])
        cur = logv + lr[rows] + ls[cols]
        hi = np.full(n, -np.inf)
        lo = np.full(n, np.inf)
        np.maximum.at(hi, cols, cur)
        np.minimum.at(lo, cols, cur)
        has = np.isfinite(hi)
        ls[has] -= 0.5 * (hi[has] + lo[has])
    return np.exp2(np.round(lr)), np.exp2(np.round(ls))


class _Basis:
    """LU factorisation of the basis matrix plus product-form eta updates."""

    def __init__(self, A: sp.csc_matrix, cols: np.ndarray):
        self.A = A
        self.m = A.shape[0]
        cap = 8 * self.m + 64
        self.e_idx = np.empty(cap, np.int64)
        self.e_val = np.empty(cap)
        self.refactor(cols)

    def refactor(self, cols: np.ndarray) -> None:
        B = self.A[:, cols].tocsc()
        try:
            lu = splu(B, permc_spec="COLAMD", options={"SymmetricMode": False})
        except RuntimeError as exc:
            raise LpError(f"singular basis: {exc}") from exc
        L, U = lu.L.tocsc(), lu.U.tocsc()
        L.sort_indices()
        U.sort_indices()
        self.factors = (
            lu.perm_r.astype(np.int64), lu.perm_c.astype(np.int64),
            L.indptr.astype(np.int64), L.indices.astype(np.int64), L.data,
            U.indptr.astype(np.int64), U.indices.astype(np.int64), U.data, U.diagonal(),
        )
        self.n_eta = 0
        self.e_row = np.empty(0, np.int64)
        self.e_piv = np.empty(0)
        self.e_ptr = np.zeros(1, np.int64)

    def _etas(self):
        return self.n_eta, self.e_row, self.e_piv, self.e_ptr, self.e_idx, self.e_val

    def ftran_sparse(self, idx: np.ndarray, val: np.ndarray) -> np.ndarray:
        out = np.empty(self.m)
        _k.ftran(*self.factors, *self._etas(), idx, val, out)
        return out

    def ftran(self, v: np.ndarray) -> np.ndarray:
        idx = np.flatnonzero(v)
        return self.ftran_sparse(idx, v[idx])

    def btran(self, c: np.ndarray) -> np.ndarray:
        out = np.empty(self.m)
        _k.btran(*self.factors, *self._etas(), np.ascontiguousarray(c, dtype=float), out)
        return out

    def push(self, r: int, w: np.ndarray) -> None:
        idx = np.flatnonzero(w)
        idx = idx[idx != r]
        lo = self.e_ptr[-1]
        hi = lo + idx.size
        if hi > self.e_idx.size:
            grow = max(hi, 2 * self.e_idx.size)
            self.e_idx = np.resize(self.e_idx, grow)
            self.e_val = np.resize(self.e_val, grow)
        self.e_idx[lo:hi] = idx
        self.e_val[lo:hi] = w[idx]
        self.e_row = np.append(self.e_row, r)
        self.e_piv = np.append(self.e_piv, w[r])
        self.e_ptr = np.append(self.e_ptr, hi)
        self.n_eta += 1


class RevisedSimplex:
    """Primal simplex on ``max c'x, Ax = b, x >= 0``; see module docstring."""

    def __init__(self, options: Optional[SimplexOptions] = None):
        self.options = options or SimplexOptions()

    # -- setup -------------------------------------------------------------
    def _prepare(self, problem: LpProblem):
        opt = self.options
        A = problem.A
        m, n = A.shape
        if opt.scale:
            r, s = equilibrate(A)
        else:
            r, s = np.ones(m), np.ones(n)
        As = sp.diags(r) @ A @ sp.diags(s)
        b = r * problem.b
        c = s * problem.c
        sign = np.where(b >= 0, 1.0, -1.0)
        full = sp.hstack([As, sp.diags(sign)], format="csc")
        full.sort_indices()
        self.m, self.n = m, n
        self.r, self.s = r, s
        self.A = full
        self.b = b
        self.c = np.concatenate([c, np.zeros(m)])
        self.ub = np.full(n + m, np.inf)
        self.Ap = full.indptr.astype(np.int64)
        self.Ai = full.indices.astype(np.int64)
        rows = full.tocsr()
        self.Rp = rows.indptr.astype(np.int64)
        self.Rj = rows.indices.astype(np.int64)
        self.Rx = rows.data

    def _column(self, j: int) -> np.ndarray:
        lo, hi = self.Ap[j], self.Ap[j + 1]
        return self.fac.ftran_sparse(self.Ai[lo:hi], self.A.data[lo:hi])

    def _crash(self) -> np.ndarray:
        """Initial basis: singleton columns with a feasible value where possible, artificials elsewhere."""
        m, n = self.m, self.n
        basis = np.arange(n, n + m)
        A = self.A
        counts = np.diff(A.indptr[:n + 1])
        single = np.flatnonzero(counts == 1)
        if single.size:
            rows = A.indices[A.indptr[single]]
            vals = A.data[A.indptr[single]]
            ok = (vals != 0) & (self.b[rows] * vals >= 0)
            single, rows, vals = single[ok], rows[ok], vals[ok]
            # within a row prefer the best objective per unit of row activity
            order = np.lexsort((single, -self.c[single] / vals, rows))
            single, rows = single[order], rows[order]
            first = np.ones(rows.size, bool)
            first[1:] = rows[1:] != rows[:-1]
            basis[rows[first]] = single[first]
        return basis

    # -- main loop -----------------------------------------------------------
    def solve(self, problem: LpProblem, warm_start: Optional[Sequence[str]] = None) -> LpSolution:
        opt = self.options
        self._prepare(problem)
        m, n = self.m, self.n
        if m == 0:
            return self._trivial(problem)
        self.max_iter = opt.max_iter if opt.max_iter is not None else max(10_000, 50 * (m + n))
        self.iterations = 0

        started = False
        if warm_start is not None:
            started = self._try_warm(problem, warm_start)
        if not started:
            basis = self._crash()
            self._install(basis)
            art = self.basis >= n
            if np.any(self.xB[art] > opt.feas_tol):
                status = self._phase1()
                if status is not Status.OPTIMAL:
                    return self._finish(problem, status)
                if np.max(self.xB[self.basis >= n], initial=0.0) > 1e-7:
                    return self._finish(problem, Status.INFEASIBLE)
        self.ub[n:] = 0.0
        art = self.basis >= n
        self.xB[art] = 0.0
        status = self._iterate(self.c)
        return self._finish(problem, status)

    def _install(self, basis: np.ndarray) -> None:
        self.basis = np.asarray(basis, dtype=np.int64).copy()
        # columns that may not enter: basic ones and every artificial
        self.blocked = np.zeros(self.n + self.m, np.bool_)
        self.blocked[self.n:] = True
        self.blocked[self.basis] = True
        self.fac = _Basis(self.A, self.basis)
        self.xB = self.fac.ftran(self.b.copy())

    def _try_warm(self, problem: LpProblem, warm_start: Sequence[str]) -> bool:
        m, n = self.m, self.n
        if len(warm_start) != m:
            return False
        cols = problem.col_index()
        rows = problem.row_index()
        basis = []
        for label in warm_start:
            if label.startswith(ART_PREFIX):
                k = rows.get(label[len(ART_PREFIX):])
                if k is None:
                    return False
                basis.append(n + k)
            else:
                k = cols.get(label)
                if k is None:
                    return False
                basis.append(k)
        if len(set(basis)) != m:
            return False
        try:
            self._install(np.array(basis))
        except LpError:
            return False
        art = self.basis >= n
        tol = 10 * self.options.feas_tol * (1 + np.abs(self.b).max(initial=0))
        if np.any(self.xB[~art] < -tol) or np.any(np.abs(self.xB[art]) > tol):
            log.debug("warm basis infeasible for this problem; cold start")
            return False
        self.xB[~art] = np.maximum(self.xB[~art], 0.0)
        return True

    def _phase1(self) -> Status:
        cost = np.zeros(self.n + self.m)
        cost[self.n:] = -1.0
        return self._iterate(cost)

    def _reduced(self, cost: np.ndarray) -> np.ndarray:
        y = self.fac.btran(cost[self.basis])
        d = np.empty(self.n + self.m)
        _k.reduced_costs(self.Ap, self.Ai, self.A.data, cost, y, d)
        return d

    def _ratio(self, w: np.ndarray, bland: bool) -> int:
        opt = self.options
        return _k.ratio(w, self.xB, self.ub[self.basis], self.basis, opt.pivot_tol, opt.feas_tol, bland)

    def _iterate(self, cost: np.ndarray) -> Status:
        opt = self.options
        degenerate = 0
        bland = False
        # reduced costs are updated along the pivot row and recomputed at
        # every refactorisation and before optimality is declared
        d = self._reduced(cost)
        fresh = True
        unit = np.zeros(self.m)
        while True:
            if self.iterations >= self.max_iter:
                return Status.ITERATION_LIMIT
            q = _k.choose(d, self.blocked, opt.opt_tol, bland)
            if q < 0:
                if fresh:
                    return Status.OPTIMAL
                d = self._reduced(cost)
                fresh = True
                continue
            w = self._column(q)
            r = self._ratio(w, bland)
            if r < 0:
                return Status.UNBOUNDED
            unit[r] = 1.0
            rho = self.fac.btran(unit)
            unit[r] = 0.0
            _k.update_reduced(self.Rp, self.Rj, self.Rx, rho, d[q] / w[r], d)
            fresh = False
            leave = self.basis[r]
            ubl = self.ub[leave]
            if w[r] > 0:
                theta = max(self.xB[r], 0.0) / w[r]
            else:
                theta = max(ubl - self.xB[r], 0.0) / -w[r]
            self.xB -= theta * w
            self.xB[r] = theta
            self.basis[r] = q
            if leave < self.n:
                self.blocked[leave] = False
            self.blocked[q] = True
            self.iterations += 1
            if theta <= 1e-12:
                degenerate += 1
                if degenerate >= opt.bland_after and not bland:
                    log.debug("stall after %d degenerate pivots; Bland's rule engaged", degenerate)
                    bland = True
            else:
                degenerate = 0
                bland = False
            if self.fac.n_eta + 1 >= opt.refactor_every:
                self.fac.refactor(self.basis)
                self.xB = self.fac.ftran(self.b.copy())
                d = self._reduced(cost)
                fresh = True
            else:
                self.fac.push(r, w)
            np.maximum(self.xB, 0.0, out=self.xB)

    # -- output ----------------------------------------------------------------
    def _finish(self, problem: LpProblem, status: Status) -> LpSolution:
        m, n = self.m, self.n
        xs = np.zeros(n + m)
        xs[self.basis] = self.xB
        x = self.s * xs[:n]
        x[x < 0] = 0.0
        if status is Status.OPTIMAL:
            # fresh factorisation so the reported duals carry no eta drift
            self.fac.refactor(self.basis)
            ys = self.fac.btran(self.c[self.basis])
            y = self.r * ys
        else:
            y = np.zeros(m)
        basis = tuple(
            problem.col_labels[k] if k < n else ART_PREFIX + problem.row_labels[k - n] for k in self.basis
        )
        return LpSolution(
            status=status,
            x=x,
            duals=y,
            objective=float(problem.c @ x),
            basis=basis,
            iterations=self.iterations,
            row_labels=problem.row_labels,
            col_labels=problem.col_labels,
        )

    def _trivial(self, problem: LpProblem) -> LpSolution:
        status = Status.UNBOUNDED if np.any(problem.c > self.options.opt_tol) else Status.OPTIMAL
        return LpSolution(status, np.zeros(problem.n_cols), np.zeros(0), 0.0, (), 0,
                          problem.row_labels, problem.col_labels)
