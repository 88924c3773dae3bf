"""Compiled inner loops of the revised simplex.

Triangular solves run directly on SuperLU's L and U factors (CSC), which
for the very sparse assignment bases is far cheaper than SuperLU's own
dense-vector solve.  ``Pr A Pc = L U`` with ``L`` unit lower triangular.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def ftran(perm_r, perm_c, Lp, Li, Lx, Up, Ui, Ux, Ud,
          n_eta, e_row, e_piv, e_ptr, e_idx, e_val, rhs_idx, rhs_val, out):
    """out = B^{-1} a for a sparse right-hand side ``a`` (indices/values)."""
    m = out.size
    z = np.zeros(m)
    for k in range(rhs_idx.size):
        z[perm_r[rhs_idx[k]]] += rhs_val[k]
    for j in range(m):
        zj = z[j]
        if zj != 0.0:
            for p in range(Lp[j], Lp[j + 1]):
                i = Li[p]
                if i > j:
                    z[i] -= Lx[p] * zj
    for j in range(m - 1, -1, -1):
        if z[j] != 0.0:
            zj = z[j] / Ud[j]
            z[j] = zj
            for p in range(Up[j], Up[j + 1]):
                i = Ui[p]
                if i < j:
                    z[i] -= Ux[p] * zj
    for i in range(m):
        out[i] = z[perm_c[i]]
    for k in range(n_eta):
        r = e_row[k]
        t = out[r] / e_piv[k]
        if t != 0.0:
            for p in range(e_ptr[k], e_ptr[k + 1]):
                out[e_idx[p]] -= t * e_val[p]
        out[r] = t


@njit(cache=True)
def btran(perm_r, perm_c, Lp, Li, Lx, Up, Ui, Ux, Ud,
          n_eta, e_row, e_piv, e_ptr, e_idx, e_val, c, out):
    """out = B^{-T} c."""
    m = c.size
    z = c.copy()
    for k in range(n_eta - 1, -1, -1):
        r = e_row[k]
        s = z[r]
        for p in range(e_ptr[k], e_ptr[k + 1]):
            s -= z[e_idx[p]] * e_val[p]
        z[r] = s / e_piv[k]
    t = np.empty(m)
    for i in range(m):
        t[perm_c[i]] = z[i]
    for j in range(m):
        s = t[j]
        for p in range(Up[j], Up[j + 1]):
            i = Ui[p]
            if i < j:
                s -= Ux[p] * t[i]
        t[j] = s / Ud[j]
    for j in range(m - 1, -1, -1):
        s = t[j]
        for p in range(Lp[j], Lp[j + 1]):
            i = Li[p]
            if i > j:
                s -= Lx[p] * t[i]
        t[j] = s
    for i in range(m):
        out[i] = t[perm_r[i]]


@njit(cache=True)
def ratio(w, xB, ubB, basis, ptol, ftol, bland):
    """Leaving row by Harris' two-pass test, or smallest basis index among ties when ``bland``."""
    m = w.size
    bound = np.inf
    any_cand = False
    for i in range(m):
        wi = w[i]
        if wi > ptol:
            rel = (max(xB[i], 0.0) + ftol * (not bland)) / wi
        elif wi < -ptol and ubB[i] < np.inf:
            rel = (max(ubB[i] - xB[i], 0.0) + ftol * (not bland)) / -wi
        else:
            continue
        any_cand = True
        if rel < bound:
            bound = rel
    if not any_cand:
        return -1
    if bland:
        bound += 1e-12
    r = -1
    best = -1.0
    for i in range(m):
        wi = w[i]
        if wi > ptol:
            t = max(xB[i], 0.0) / wi
        elif wi < -ptol and ubB[i] < np.inf:
            t = max(ubB[i] - xB[i], 0.0) / -wi
        else:
            continue
        if t <= bound:
            if bland:
                if r < 0 or basis[i] < basis[r]:
                    r = i
            elif abs(wi) > best:
                best = abs(wi)
                r = i
    return r


@njit(cache=True)
def reduced_costs(Ap, Ai, Ax, cost, y, out):
    for j in range(cost.size):
        d = cost[j]
        for p in range(Ap[j], Ap[j + 1]):
            d -= Ax[p] * y[Ai[p]]
        out[j] = d


@njit(cache=True)
def choose(d, blocked, tol, first):
    """Entering column: largest reduced cost above ``tol`` (or the first one when ``first``)."""
    best = tol
    q = -1
    for j in range(d.size):
        if d[j] > best and not blocked[j]:
            if first:
                return j
            best = d[j]
            q = j
    return q


@njit(cache=True)
def update_reduced(Rp, Rj, Rx, rho, step, d):
    """d -= step * (rho' A), touching only rows where rho is nonzero (A given row-wise)."""
    for i in range(rho.size):
        ri = rho[i]
        if ri != 0.0:
            s = step * ri
            for p in range(Rp[i], Rp[i + 1]):
                d[Rj[p]] -= s * Rx[p]
