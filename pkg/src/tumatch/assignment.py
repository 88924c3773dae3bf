"""Direct assignment solvers, the enumeration oracle, (dis)aggregation and the optimality certificate."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import lp
from ._master import master_for
from .market import MarketInstance, Population, match_values

BALANCE_TOL = 1e-8
PRICE_TOL = 1e-7
NAIVE_CELL_GUARD = 10**6
BRUTE_FORCE_MAX = 7


class AssignmentError(Exception):
    pass


@dataclass
class IndividualMatching:
    """Per-agent masses over partner types; dense arrays, singlehood kept separately."""

    women: np.ndarray  # |I| x |Y|: pi_iy
    women_single: np.ndarray  # pi_i0
    men: np.ndarray  # |J| x |X|: pi_xj stored as [j, x]
    men_single: np.ndarray  # pi_0j

    def check(self, population: Population, tol: float = BALANCE_TOL) -> None:
        if min(self.women.min(initial=0), self.men.min(initial=0),
               self.women_single.min(initial=0), self.men_single.min(initial=0)) < -tol:
            raise AssignmentError("negative mass")
        if np.any(np.abs(self.women.sum(1) + self.women_single - 1) > tol) or np.any(
            np.abs(self.men.sum(1) + self.men_single - 1) > tol
        ):
            raise AssignmentError("an agent's masses do not sum to one")
        gap = np.abs(women_cells(self, population) - men_cells(self, population)).max(initial=0)
        if gap > tol:
            raise AssignmentError(f"balance violated by {gap:.3g}")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["side", "agent", "partner_type", "mass"])
            for side, mat, single in (("woman", self.women, self.women_single), ("man", self.men, self.men_single)):
                for a in range(mat.shape[0]):
                    for t in np.flatnonzero(mat[a]):
                        w.writerow([side, a, int(t), repr(float(mat[a, t]))])
                    if single[a]:
                        w.writerow([side, a, -1, repr(float(single[a]))])


@dataclass
class AggregateMatching:
    mu: np.ndarray  # |X| x |Y|
    mu_x0: np.ndarray
    mu_0y: np.ndarray

    @property
    def n_x(self) -> np.ndarray:
        return self.mu.sum(1) + self.mu_x0

    @property
    def m_y(self) -> np.ndarray:
        return self.mu.sum(0) + self.mu_0y

    @classmethod
    def from_matches(cls, mu, n_x, m_y) -> "AggregateMatching":
        mu = np.asarray(mu, dtype=float)
        return cls(mu, np.asarray(n_x, float) - mu.sum(1), np.asarray(m_y, float) - mu.sum(0))

    def to_csv(self, path) -> None:
        """Rows ``x,y,mass``; single women have y = -1, single men x = -1."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "mass"])
            X, Y = self.mu.shape
            for x in range(X):
                for y in range(Y):
                    w.writerow([x, y, repr(float(self.mu[x, y]))])
            for x in range(X):
                w.writerow([x, -1, repr(float(self.mu_x0[x]))])
            for y in range(Y):
                w.writerow([-1, y, repr(float(self.mu_0y[y]))])

    @classmethod
    def from_csv(cls, path, x_count: Optional[int] = None, y_count: Optional[int] = None) -> "AggregateMatching":
        rows = []
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                rows.append((int(rec["x"]), int(rec["y"]), float(rec["mass"])))
        X = x_count if x_count is not None else 1 + max(r[0] for r in rows)
        Y = y_count if y_count is not None else 1 + max(r[1] for r in rows)
        mu, mx0, m0y = np.zeros((X, Y)), np.zeros(X), np.zeros(Y)
        for x, y, mass in rows:
            if x >= 0 and y >= 0:
                mu[x, y] += mass
            elif y < 0 <= x:
                mx0[x] += mass
            elif x < 0 <= y:
                m0y[y] += mass
        return cls(mu, mx0, m0y)


@dataclass
class DualSolution:
    """Multipliers: u (women), v (men), T (balance rows, women pay T to men), optional lambda."""

    u: np.ndarray
    v: np.ndarray
    T: np.ndarray
    lam: Optional[np.ndarray] = None


def women_cells(pi: IndividualMatching, population: Population) -> np.ndarray:
    out = np.zeros((population.types.x_count, population.types.y_count))
    np.add.at(out, population.woman_types, pi.women)
    return out


def men_cells(pi: IndividualMatching, population: Population) -> np.ndarray:
    out = np.zeros((population.types.y_count, population.types.x_count))
    np.add.at(out, population.man_types, pi.men)
    return out.T


def naive_weights(instance: MarketInstance) -> np.ndarray:
    """Match surplus net of both singlehood utilities, one entry per woman-man pair."""
    p = instance.population
    sh = instance.shocks
    W = (
        instance.phi[np.ix_(p.woman_types, p.man_types)]
        + sh.eps_match[:, p.man_types]
        + sh.eta_match[:, p.woman_types].T
    )
    return W - sh.eps_single[:, None] - sh.eta_single[None, :]


def solve_naive(instance: MarketInstance, guard: int = NAIVE_CELL_GUARD, backend: str = "simplex"):
    """Pairwise LP over all |I||J| couples; returns (pairwise matrix, objective).

    Objective is net of singlehood utilities (everyone single scores 0).
    """
    nI, nJ = instance.n_women, instance.n_men
    if nI * nJ > guard:
        raise AssignmentError(f"{nI}x{nJ} pairwise problem exceeds the {guard}-cell guard")
    if nI == 0 or nJ == 0:
        return np.zeros((nI, nJ)), 0.0
    W = naive_weights(instance)
    ii, jj = np.divmod(np.arange(nI * nJ), nJ)
    npair = nI * nJ
    rows = np.concatenate([ii, nI + jj, np.arange(nI + nJ)])
    cols = np.concatenate([np.arange(npair), np.arange(npair), npair + np.arange(nI + nJ)])
    A = sp.csc_matrix((np.ones(rows.size), (rows, cols)), shape=(nI + nJ, npair + nI + nJ))
    c = np.concatenate([W.ravel(), np.zeros(nI + nJ)])
    labels = [f"p{i}_{j}" for i, j in zip(ii.tolist(), jj.tolist())]
    labels += [f"sw{i}" for i in range(nI)] + [f"sm{j}" for j in range(nJ)]
    prob = lp.LpProblem(c, A, np.ones(nI + nJ), [f"W{i}" for i in range(nI)] + [f"M{j}" for j in range(nJ)], labels)
    sol = lp.solve(prob, backend=backend)
    if not sol.optimal:
        raise AssignmentError(f"pairwise LP ended with status {sol.status.value}")
    return sol.x[:npair].reshape(nI, nJ), sol.objective


def brute_force_optimal(instance: MarketInstance) -> float:
    """Best total net surplus over every pure partial matching (exhaustive enumeration)."""
    nI, nJ = instance.n_women, instance.n_men
    if nI > BRUTE_FORCE_MAX or nJ > BRUTE_FORCE_MAX:
        raise AssignmentError(f"enumeration limited to {BRUTE_FORCE_MAX} agents per side")
    if nI == 0 or nJ == 0:
        return 0.0
    W = naive_weights(instance).tolist()
    best = -np.inf

    def walk(i: int, used: int, total: float):
        nonlocal best
        if i == nI:
            best = max(best, total)
            return
        walk(i + 1, used, total)
        row = W[i]
        for j in range(nJ):
            if not used >> j & 1:
                walk(i + 1, used | 1 << j, total + row[j])

    walk(0, 0, 0.0)
    return float(best)


def full_master(instance: MarketInstance):
    """Master LP of the type-aggregated problem with every (agent, partner type) column present."""
    mv = match_values(instance)
    M = master_for(instance)
    nI, nJ = instance.n_women, instance.n_men
    X, Y = instance.types.x_count, instance.types.y_count
    wi, wy = np.divmod(np.arange(nI * Y), Y)
    mj, mx = np.divmod(np.arange(nJ * X), X)
    M.add(wi, wy, mv.alpha[wi, wy], mj, mx, mv.gamma[mx, mj])
    return M


def solve_refined(instance: MarketInstance, backend: str = "simplex", options=None):
    """Type-aggregated assignment LP; returns (IndividualMatching, DualSolution, objective).

    The objective includes the singlehood utilities, i.e. it exceeds the
    pairwise optimum by sum(eps_i0) + sum(eta_0j).
    """
    M = full_master(instance)
    sol = lp.solve(M.problem, backend=backend, options=options)
    if not sol.optimal:
        raise AssignmentError(f"assignment LP ended with status {sol.status.value}")
    women, ws, men, ms = M.split_primal(sol.x)
    u, v, T, _ = M.split_duals(sol.duals)
    return IndividualMatching(women, ws, men, ms), DualSolution(u, v, T), sol.objective


def aggregate(pi: IndividualMatching, population: Population, tol: float = BALANCE_TOL) -> AggregateMatching:
    """Type-pair match masses mu_xy plus singles per type."""
    wc = women_cells(pi, population)
    mc = men_cells(pi, population)
    gap = np.abs(wc - mc).max(initial=0)
    if gap > tol:
        raise AssignmentError(f"balance violated by {gap:.3g}")
    return AggregateMatching(wc, population.n_x - wc.sum(1), population.m_y - wc.sum(0))


def disaggregate(pi: IndividualMatching, population: Population, tol: float = BALANCE_TOL) -> np.ndarray:
    """Pairwise matching consistent with ``pi``: northwest-corner transport inside each type cell."""
    X, Y = population.types.x_count, population.types.y_count
    out = np.zeros((population.n_women, population.n_men))
    wt, mt = population.woman_types, population.man_types
    for x in range(X):
        women = np.flatnonzero(wt == x)
        for y in range(Y):
            men = np.flatnonzero(mt == y)
            supply = pi.women[women, y]
            demand = pi.men[men, x]
            if abs(supply.sum() - demand.sum()) > tol:
                raise AssignmentError(f"cell ({x},{y}) masses differ: {supply.sum()} vs {demand.sum()}")
            a = [k for k in range(women.size) if supply[k] > 0]
            b = [k for k in range(men.size) if demand[k] > 0]
            s = {k: float(supply[k]) for k in a}
            d = {k: float(demand[k]) for k in b}
            ia = ib = 0
            while ia < len(a) and ib < len(b):
                wa, mb = a[ia], b[ib]
                q = min(s[wa], d[mb])
                out[women[wa], men[mb]] += q
                s[wa] -= q
                d[mb] -= q
                # exhaust whichever side is (numerically) used up; ties advance both
                if s[wa] <= tol * 1e-3:
                    ia += 1
                if d[mb] <= tol * 1e-3:
                    ib += 1
    return out


def aggregate_pairwise(pairs: np.ndarray, population: Population) -> IndividualMatching:
    """Individual masses pi_iy, pi_xj from a pairwise matching."""
    X, Y = population.types.x_count, population.types.y_count
    women = np.zeros((population.n_women, Y))
    men = np.zeros((population.n_men, X))
    np.add.at(women.T, population.man_types, pairs.T)
    np.add.at(men.T, population.woman_types, pairs)
    return IndividualMatching(women, 1 - pairs.sum(1), men, 1 - pairs.sum(0))


def outside_gains(instance: MarketInstance, duals: DualSolution):
    """Women's and men's gains alpha - T - u and gamma + T - v for every partner type."""
    mv = match_values(instance)
    p = instance.population
    w_gain = mv.alpha - duals.T[p.woman_types, :] - duals.u[:, None]
    m_gain = mv.gamma.T + duals.T[:, p.man_types].T - duals.v[:, None]
    return w_gain, m_gain


def check_optimality(pi, duals: DualSolution, instance: MarketInstance, choice_sets=None,
                     price_tol: float = PRICE_TOL) -> list[tuple[str, int, int, float]]:
    """Agents who strictly prefer a partner type outside their choice set at the current prices.

    Returns ``(side, agent, type, gain)`` tuples; an empty list certifies that
    ``pi`` is optimal for the unrestricted problem.  ``choice_sets=None`` means
    full sets.
    """
    if choice_sets is None:
        return []
    w_gain, m_gain = outside_gains(instance, duals)
    w_gain = np.where(choice_sets.women, -np.inf, w_gain)
    m_gain = np.where(choice_sets.men, -np.inf, m_gain)
    out = [("woman", int(i), int(y), float(w_gain[i, y])) for i, y in zip(*np.nonzero(w_gain > price_tol))]
    out += [("man", int(j), int(x), float(m_gain[j, x])) for j, x in zip(*np.nonzero(m_gain > price_tol))]
    return out


def objective_refined(pi: IndividualMatching, instance: MarketInstance) -> float:
    mv = match_values(instance)
    return float(
        (pi.women * mv.alpha).sum() + pi.women_single @ mv.eps0
        + (pi.men * mv.gamma.T).sum() + pi.men_single @ mv.eta0
    )
