"""Simulated entropy, the moment-matching LP and its column-generation solver.

The estimator recovers lambda from the multipliers of the K moment rows.  In
the max-form LP used here a woman column (i, y) has reduced cost
``eps_iy - u_i - T_xy - sum_k dual_k * phi_xyk / 2``, so matching it with
the pricing rule ``u_i >= phi lambda / 2 - T + eps`` gives
``lambda = -dual``.  Moment rows are divided by the observed matched mass
before solving; the duals are rescaled on the way out.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import lp
from ._master import MasterLP
from .assignment import PRICE_TOL, AggregateMatching, DualSolution, IndividualMatching
from .market import Population, SurplusBasis
from .rroa import (ChoiceSets, RroaError, RroaTrace, column_generation, price_values, side_values)
from .shocks import ShockPanel

MOMENT_TOL = 1e-6
MARGIN_TOL = 1e-9


class EstimationError(Exception):
    def __init__(self, message: str, diagnostics=None, trace=None):
        super().__init__(message)
        self.diagnostics = diagnostics
        self.trace = trace


@dataclass
class ObservedMatching:
    """Observed aggregate matching; margins are implied by matches plus singles."""

    mu: AggregateMatching

    def __post_init__(self):
        m = self.mu
        if min(m.mu.min(initial=0), m.mu_x0.min(initial=0), m.mu_0y.min(initial=0)) < -MARGIN_TOL:
            raise ValueError("observed masses must be nonnegative")

    @property
    def n_x(self) -> np.ndarray:
        return self.mu.n_x

    @property
    def m_y(self) -> np.ndarray:
        return self.mu.m_y

    @property
    def matched_mass(self) -> float:
        return float(self.mu.mu.sum())

    @classmethod
    def from_csv(cls, path, x_count=None, y_count=None) -> "ObservedMatching":
        return cls(AggregateMatching.from_csv(path, x_count, y_count))

    def population(self, types) -> Population:
        """One simulated agent per observed agent; margins must be integral."""
        n_x, m_y = np.rint(self.n_x), np.rint(self.m_y)
        if np.abs(n_x - self.n_x).max(initial=0) > 1e-6 or np.abs(m_y - self.m_y).max(initial=0) > 1e-6:
            raise EstimationError("observed margins are not integral; cannot size the simulated population")
        return Population.from_margins(types, n_x.astype(np.int64), m_y.astype(np.int64))


@dataclass
class SmmOptions:
    price_tol: float = PRICE_TOL
    moment_tol: float = MOMENT_TOL
    max_iters: Optional[int] = None
    backend: str = "simplex"
    per_agent: int = 1
    warm_start: bool = True
    lp_options: Optional[lp.SimplexOptions] = None


@dataclass
class SmmResult:
    lambda_hat: np.ndarray
    matched_moments: np.ndarray
    target_moments: np.ndarray
    residual: float  # infinity norm, divided by the observed matched mass
    fitted: AggregateMatching
    objective: float
    matching: IndividualMatching
    duals: DualSolution
    trace: Optional[RroaTrace] = None
    scale: float = 1.0


def moments(basis: SurplusBasis, mu: AggregateMatching) -> np.ndarray:
    """``sum_xy mu_xy phi_xyk`` for each k."""
    m = np.asarray(mu.mu if isinstance(mu, AggregateMatching) else mu, dtype=float)
    if m.shape != basis.phi.shape[:2]:
        raise ValueError(f"matching is {m.shape}, basis is {basis.phi.shape[:2]}")
    return np.einsum("xy,xyk->k", m, basis.phi)


def nrmse(lambda_hat, lambda_true) -> float:
    """``||lambda_hat - lambda|| / ||lambda||``."""
    a = np.asarray(lambda_hat, dtype=float).ravel()
    b = np.asarray(lambda_true, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError("lambda vectors differ in length")
    norm = np.linalg.norm(b)
    if norm == 0:
        raise ValueError("true lambda has zero norm")
    return float(np.linalg.norm(a - b) / norm)


def _check_margins(population: Population, shocks: ShockPanel, observed: ObservedMatching) -> None:
    t = population.types
    if observed.mu.mu.shape != (t.x_count, t.y_count):
        raise EstimationError(f"observed matching is {observed.mu.mu.shape}, type space is {(t.x_count, t.y_count)}")
    if shocks.eps.shape != (population.n_women, t.y_count + 1) or shocks.eta.shape != (population.n_men, t.x_count + 1):
        raise EstimationError("shock panel does not match the simulated population")
    gap = max(np.abs(observed.n_x - population.n_x).max(initial=0),
              np.abs(observed.m_y - population.m_y).max(initial=0))
    if gap > 1e-6:
        raise EstimationError(f"simulated margins differ from the observed ones (max gap {gap:.3g})")


def _master(population: Population, shocks: ShockPanel, basis: Optional[SurplusBasis],
            observed: Optional[ObservedMatching]):
    t = population.types
    scale = 1.0
    mphi = rhs = None
    if basis is not None:
        if basis.phi.shape[:2] != (t.x_count, t.y_count):
            raise EstimationError("basis does not match the type space")
        scale = observed.matched_mass if observed.matched_mass > 0 else 1.0
        mphi = 0.5 * basis.phi / scale
        rhs = moments(basis, observed.mu) / scale
    M = MasterLP(population.n_women, population.n_men, population.woman_types, population.man_types,
                 t.x_count, t.y_count, shocks.eps_single, shocks.eta_single, mphi, rhs)
    return M, scale


def _add_all(M: MasterLP, shocks: ShockPanel, extra_w=None, extra_m=None) -> None:
    nI, nJ, X, Y = M.nI, M.nJ, M.X, M.Y
    wi, wy = np.divmod(np.arange(nI * Y), Y)
    mj, mx = np.divmod(np.arange(nJ * X), X)
    wc = shocks.eps_match[wi, wy]
    mc = shocks.eta_match[mj, mx]
    if extra_w is not None:
        wc = wc + extra_w[wi, wy]
        mc = mc + extra_m[mj, mx]
    M.add(wi, wy, wc, mj, mx, mc)


def build_smm_lp(shocks: ShockPanel, population: Population, basis: Optional[SurplusBasis],
                 observed: Optional[ObservedMatching]) -> lp.LpProblem:
    """Moment-matching LP over every (agent, partner type) column.

    With ``basis=None`` the moment rows are omitted, leaving the assignment
    LP with zero systematic surplus.
    """
    if basis is not None:
        _check_margins(population, shocks, observed)
    M, _ = _master(population, shocks, basis, observed)
    _add_all(M, shocks)
    return M.problem


def simulated_social_surplus(shocks: ShockPanel, population: Population, phi: np.ndarray,
                             backend: str = "simplex") -> float:
    """Shock-only LP without moment rows plus the systematic split phi/2 on each side."""
    M, _ = _master(population, shocks, None, None)
    half = 0.5 * np.asarray(phi, dtype=float)
    _add_all(M, shocks, half[population.woman_types, :], half[:, population.man_types].T)
    sol = lp.solve(M.problem, backend=backend)
    if not sol.optimal:
        raise EstimationError(f"surplus LP ended with status {sol.status.value}")
    return sol.objective


def simulated_entropy(mu: AggregateMatching, shocks: ShockPanel, population: Population,
                      backend: str = "simplex") -> float:
    """Largest total shock contribution among individual assignments that aggregate to ``mu``."""
    t = population.types
    nI, nJ, X, Y = population.n_women, population.n_men, t.x_count, t.y_count
    target = np.asarray(mu.mu, dtype=float)
    if target.shape != (X, Y):
        raise ValueError("matching does not match the type space")
    wt, mt = population.woman_types, population.man_types
    wi, wy = np.divmod(np.arange(nI * Y), Y)
    mj, mx = np.divmod(np.arange(nJ * X), X)
    # rows: women, men, women-side cells, men-side cells
    w0, m0 = nI + nJ, nI + nJ + X * Y
    n0 = nI + nJ
    cols = np.arange(n0 + wi.size + mj.size)
    rows = np.concatenate([np.arange(n0), wi, nI + mj, w0 + wt[wi] * Y + wy, m0 + mx * Y + mt[mj]])
    cidx = np.concatenate([cols, cols[n0:]])
    A = sp.csc_matrix((np.ones(rows.size), (rows, cidx)), shape=(n0 + 2 * X * Y, cols.size))
    c = np.concatenate([shocks.eps_single, shocks.eta_single, shocks.eps_match[wi, wy], shocks.eta_match[mj, mx]])
    b = np.concatenate([np.ones(n0), target.ravel(), target.ravel()])
    sol = lp.solve(lp.make_problem(c, A, b), backend=backend)
    if not sol.optimal:
        raise EstimationError(f"matching is not attainable by this population ({sol.status.value})")
    return sol.objective


def seed_choice_sets(population: Population, observed: ObservedMatching) -> ChoiceSets:
    """Choice sets that carry one feasible allocation of the observed matches.

    Within each own type, agents in index order are filled with the
    partner-type masses in type order (north-west corner rule).  An agent
    straddling two partner types gets both.
    """
    t = population.types
    sets = ChoiceSets.empty(population.n_women, population.n_men, t.x_count, t.y_count)
    mu = observed.mu.mu
    for own_types, masses, mask in ((population.woman_types, mu, sets.women),
                                    (population.man_types, mu.T, sets.men)):
        for own in range(masses.shape[0]):
            agents = np.flatnonzero(own_types == own)
            k, room = 0, 1.0
            for partner, mass in enumerate(masses[own]):
                left = float(mass)
                while left > MARGIN_TOL:
                    if k >= agents.size:
                        raise EstimationError("observed matches exceed the simulated population")
                    mask[agents[k], partner] = True
                    take = min(room, left)
                    left -= take
                    room -= take
                    if room <= MARGIN_TOL:
                        k, room = k + 1, 1.0
    return sets


def moment_ranges(shocks: ShockPanel, population: Population, basis: SurplusBasis,
                  backend: str = "simplex") -> np.ndarray:
    """Attainable (min, max) of each moment over all matchings of the simulated population."""
    M, _ = _master(population, shocks, None, None)
    _add_all(M, shocks)
    prob = M.problem
    n0 = M.nI + M.nJ
    x = np.concatenate([population.woman_types[M.agent[M.side == 0]], M.ptype[M.side == 1]])
    y = np.concatenate([M.ptype[M.side == 0], population.man_types[M.agent[M.side == 1]]])
    out = np.zeros((basis.k_count, 2))
    for k in range(basis.k_count):
        coef = np.zeros(prob.n_cols)
        coef[n0:] = 0.5 * basis.phi[x, y, k]
        for s, col in ((-1.0, 0), (1.0, 1)):
            sol = lp.solve(lp.LpProblem(s * coef, prob.A, prob.b, prob.row_labels, prob.col_labels), backend=backend)
            out[k, col] = s * sol.objective
    return out


def _infeasible(shocks, population, basis, observed, options, trace=None):
    target = moments(basis, observed.mu)
    ranges = moment_ranges(shocks, population, basis, options.backend)
    bad = [(k, float(target[k]), float(lo), float(hi)) for k, (lo, hi) in enumerate(ranges)
           if not lo - 1e-7 * (1 + abs(lo)) <= target[k] <= hi + 1e-7 * (1 + abs(hi))]
    detail = "; ".join(f"moment {k}: target {t:.6g} outside [{lo:.6g}, {hi:.6g}]" for k, t, lo, hi in bad)
    raise EstimationError("observed moments are not attainable by the simulated population"
                          + (f" ({detail})" if detail else " (jointly)"), diagnostics=bad, trace=trace)


def _result(M: MasterLP, sol: lp.LpSolution, basis: SurplusBasis, observed: ObservedMatching,
            scale: float, options: SmmOptions, trace=None) -> SmmResult:
    women, ws, men, ms = M.split_primal(sol.x)
    u, v, T, mom = M.split_duals(sol.duals)
    lam = -mom / scale
    pi = IndividualMatching(women, ws, men, ms)
    wt, mt = M.wt, M.mt
    X, Y = M.X, M.Y
    wc = np.zeros((X, Y))
    mc = np.zeros((X, Y))
    np.add.at(wc, wt, women)
    np.add.at(mc.T, mt, men)
    fitted = AggregateMatching(0.5 * (wc + mc), np.bincount(wt, ws, X), np.bincount(mt, ms, Y))
    matched = moments(basis, fitted)
    target = moments(basis, observed.mu)
    residual = float(np.abs(matched - target).max(initial=0) / scale)
    res = SmmResult(lam, matched, target, residual, fitted, sol.objective, pi, DualSolution(u, v, T, lam),
                    trace, scale)
    if residual > options.moment_tol:
        raise EstimationError(f"moment residual {residual:.3g} exceeds tolerance {options.moment_tol:.3g}",
                              trace=trace)
    return res


def solve_smm_direct(shocks: ShockPanel, population: Population, basis: SurplusBasis,
                     observed: ObservedMatching, options: Optional[SmmOptions] = None) -> SmmResult:
    """Solve the full moment-matching LP in one go."""
    options = options or SmmOptions()
    _check_margins(population, shocks, observed)
    M, scale = _master(population, shocks, basis, observed)
    _add_all(M, shocks)
    sol = lp.solve(M.problem, backend=options.backend, options=options.lp_options)
    if sol.status is lp.Status.INFEASIBLE:
        _infeasible(shocks, population, basis, observed, options)
    if not sol.optimal:
        raise EstimationError(f"moment-matching LP ended with status {sol.status.value}")
    return _result(M, sol, basis, observed, scale, options)


def run_smm_rroa(shocks: ShockPanel, population: Population, basis: SurplusBasis,
                 observed: ObservedMatching, options: Optional[SmmOptions] = None) -> SmmResult:
    """Moment-matching estimator by repeated restricted solves.

    The restricted problem starts from choice sets that admit one allocation
    of the observed matches (with empty sets the moment rows could not be met
    unless every target is zero).  Pricing uses ``phi lambda / 2 - T + eps``
    for women and ``phi lambda / 2 + T + eta`` for men at the current duals.
    """
    options = options or SmmOptions()
    _check_margins(population, shocks, observed)
    sets = seed_choice_sets(population, observed)
    M, scale = _master(population, shocks, basis, observed)
    wi, wy = np.nonzero(sets.women)
    mj, mx = np.nonzero(sets.men)
    M.add(wi, wy, shocks.eps_match[wi, wy], mj, mx, shocks.eta_match[mj, mx])

    def pricer(sol):
        u, v, T, mom = M.split_duals(sol.duals)
        phi = basis.phi @ (-mom / scale)
        w_value, m_value = side_values(population, shocks, phi, T)
        return price_values(w_value, m_value, u, v, sets, options.price_tol, options.per_agent)

    def costs(viol):
        return shocks.eps_match[viol.w_agents, viol.w_types], shocks.eta_match[viol.m_agents, viol.m_types]

    t = population.types
    max_iters = options.max_iters or max(1, population.n_women * t.y_count + population.n_men * t.x_count)
    try:
        sol, trace = column_generation(M, sets, pricer, costs, max_iters, options.backend,
                                       options.lp_options, options.warm_start)
    except RroaError as exc:
        if exc.trace is not None and exc.trace.status == f"lp-{lp.Status.INFEASIBLE.value}":
            _infeasible(shocks, population, basis, observed, options, exc.trace)
        raise EstimationError(str(exc), trace=exc.trace) from exc
    return _result(M, sol, basis, observed, scale, options, trace)

