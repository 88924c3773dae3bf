"""Repeated restricted optimal assignment: column generation over agents' choice sets."""

from __future__ import annotations

import csv
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import lp
from ._master import MasterLP, master_for
from .assignment import PRICE_TOL, DualSolution, IndividualMatching
from .market import MarketInstance, match_values

log = logging.getLogger(__name__)


class RroaError(Exception):
    def __init__(self, message: str, violations=None, trace=None):
        super().__init__(message)
        self.violations = violations
        self.trace = trace


@dataclass
class ChoiceSets:
    """Boolean masks: ``women[i, y]`` is True when y is in woman i's choice set (men over X)."""

    women: np.ndarray
    men: np.ndarray

    @classmethod
    def empty(cls, n_women: int, n_men: int, x_count: int, y_count: int) -> "ChoiceSets":
        return cls(np.zeros((n_women, y_count), bool), np.zeros((n_men, x_count), bool))

    @classmethod
    def full(cls, n_women: int, n_men: int, x_count: int, y_count: int) -> "ChoiceSets":
        return cls(np.ones((n_women, y_count), bool), np.ones((n_men, x_count), bool))

    def woman_set(self, i: int) -> list[int]:
        return np.flatnonzero(self.women[i]).tolist()

    def man_set(self, j: int) -> list[int]:
        return np.flatnonzero(self.men[j]).tolist()

    @property
    def size(self) -> int:
        return int(self.women.sum() + self.men.sum())


@dataclass
class IterationRecord:
    iter: int
    cols: int
    rows: int
    obj: float
    violations: int
    added: int
    ms: float
    lp_iterations: int = 0


@dataclass
class RroaTrace:
    records: list[IterationRecord] = field(default_factory=list)
    status: str = "running"
    objective: float = float("nan")
    choice_sets: Optional[ChoiceSets] = None

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def final_columns(self) -> int:
        return self.records[-1].cols if self.records else 0

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "cols", "obj", "violations", "added", "ms"])
            for r in self.records:
                w.writerow([r.iter, r.cols, f"{r.obj:.17g}", r.violations, r.added, f"{r.ms:.3f}"])


@dataclass
class Violations:
    """Best outside option per violating agent: parallel arrays for women and men."""

    w_agents: np.ndarray
    w_types: np.ndarray
    w_gain: np.ndarray
    m_agents: np.ndarray
    m_types: np.ndarray
    m_gain: np.ndarray

    def __len__(self) -> int:
        return self.w_agents.size + self.m_agents.size

    def as_list(self) -> list[tuple[str, int, int, float]]:
        out = [("woman", int(a), int(t), float(g)) for a, t, g in zip(self.w_agents, self.w_types, self.w_gain)]
        out += [("man", int(a), int(t), float(g)) for a, t, g in zip(self.m_agents, self.m_types, self.m_gain)]
        return out


def pricing_threads() -> int:
    try:
        return max(1, int(os.environ.get("TU_MATCH_THREADS", "1")))
    except ValueError:
        return 1


def _best_outside(gain: np.ndarray, inside: np.ndarray, tol: float, per_agent: int, threads: int):
    """Top outside options per agent with gain > tol; ties go to the lowest type index."""
    def chunk(lo: int, hi: int):
        g = np.where(inside[lo:hi], -np.inf, gain[lo:hi])
        if per_agent == 1:
            best = np.argmax(g, axis=1)  # first maximiser, i.e. lowest index
            val = g[np.arange(hi - lo), best]
            keep = val > tol
            return lo + np.flatnonzero(keep), best[keep], val[keep]
        order = np.argsort(-g, axis=1, kind="stable")[:, :per_agent]
        val = np.take_along_axis(g, order, axis=1)
        a, k = np.nonzero(val > tol)
        return lo + a, order[a, k], val[a, k]

    n = gain.shape[0]
    if threads <= 1 or n < 20_000:
        return chunk(0, n)
    bounds = np.linspace(0, n, threads + 1).astype(int)
    with ThreadPoolExecutor(threads) as pool:
        parts = list(pool.map(lambda b: chunk(*b), zip(bounds[:-1], bounds[1:])))
    # merged in ascending agent order regardless of completion order
    return tuple(np.concatenate([p[k] for p in parts]) for k in range(3))


def price_values(w_value: np.ndarray, m_value: np.ndarray, u: np.ndarray, v: np.ndarray,
                 choice_sets: ChoiceSets, price_tol: float = PRICE_TOL, per_agent: int = 1) -> Violations:
    """Reduced costs ``value - own dual`` outside the choice sets, kept when above ``price_tol``."""
    threads = pricing_threads()
    wa, wt, wg = _best_outside(w_value - u[:, None], choice_sets.women, price_tol, per_agent, threads)
    ma, mt, mg = _best_outside(m_value - v[:, None], choice_sets.men, price_tol, per_agent, threads)
    return Violations(wa, wt, wg, ma, mt, mg)


def side_values(population, shocks, phi: np.ndarray, T: np.ndarray):
    """Utilities from each partner type: women Phi/2 - T + eps (|I|x|Y|), men Phi/2 + T + eta (|J|x|X|)."""
    half = 0.5 * phi
    w_value = (half - T)[population.woman_types, :] + shocks.eps_match
    m_value = (half + T)[:, population.man_types].T + shocks.eta_match
    return w_value, m_value


def transfer_values(instance: MarketInstance, T: np.ndarray, phi: Optional[np.ndarray] = None):
    """``side_values`` for an instance, using its own surplus unless ``phi`` is given."""
    return side_values(instance.population, instance.shocks, instance.phi if phi is None else phi, T)


def price(instance: MarketInstance, duals: DualSolution, choice_sets: ChoiceSets,
          price_tol: float = PRICE_TOL, per_agent: int = 1) -> Violations:
    """Best violating outside type per agent at the given duals."""
    w_value, m_value = transfer_values(instance, duals.T)
    return price_values(w_value, m_value, duals.u, duals.v, choice_sets, price_tol, per_agent)


def restricted_master(instance: MarketInstance, choice_sets: ChoiceSets) -> MasterLP:
    mv = match_values(instance)
    M = master_for(instance)
    wi, wy = np.nonzero(choice_sets.women)
    mj, mx = np.nonzero(choice_sets.men)
    M.add(wi, wy, mv.alpha[wi, wy], mj, mx, mv.gamma[mx, mj])
    return M


def build_restricted(instance: MarketInstance, choice_sets: ChoiceSets) -> lp.LpProblem:
    """Assignment LP restricted to each agent's choice set (singlehood always available)."""
    return restricted_master(instance, choice_sets).problem


def column_generation(
    master: MasterLP,
    choice_sets: ChoiceSets,
    pricer: Callable[[lp.LpSolution], Violations],
    costs: Callable[[Violations], tuple[np.ndarray, np.ndarray]],
    max_iters: int,
    backend: str = "simplex",
    options: Optional[lp.SimplexOptions] = None,
    warm_start: bool = True,
):
    """Solve, price, expand; repeat until no agent has a profitable outside option.

    Returns the final LP solution and the trace.  The master's rows never
    change, so the previous basis stays a valid warm start.
    """
    trace = RroaTrace()
    basis = None
    for it in range(1, max_iters + 1):
        t0 = time.perf_counter()
        sol = lp.solve(master.problem, warm_start=basis if warm_start else None, backend=backend, options=options)
        if not sol.optimal:
            trace.status = f"lp-{sol.status.value}"
            raise RroaError(f"restricted problem ended with status {sol.status.value} at iteration {it}",
                            trace=trace)
        basis = sol.basis
        viol = pricer(sol)
        added = len(viol)
        if added:
            w_cost, m_cost = costs(viol)
            master.add(viol.w_agents, viol.w_types, w_cost, viol.m_agents, viol.m_types, m_cost)
            choice_sets.women[viol.w_agents, viol.w_types] = True
            choice_sets.men[viol.m_agents, viol.m_types] = True
        ms = 1e3 * (time.perf_counter() - t0)
        trace.records.append(IterationRecord(it, master.n_match_columns - added, master.problem.n_rows,
                                             sol.objective, len(viol), added, ms, sol.iterations))
        log.debug("iter %d: obj=%.10g cols=%d added=%d (%.1f ms)", it, sol.objective,
                  master.n_match_columns - added, added, ms)
        if not added:
            trace.status = "optimal"
            trace.objective = sol.objective
            trace.choice_sets = choice_sets
            return sol, trace
    trace.status = "iteration-limit"
    raise RroaError(f"no convergence within {max_iters} iterations; {len(viol)} agents still violate",
                    violations=viol, trace=trace)


def default_max_iters(instance: MarketInstance) -> int:
    t = instance.types
    return max(1, instance.n_women * t.y_count + instance.n_men * t.x_count)


def run_rroa(
    instance: MarketInstance,
    price_tol: float = PRICE_TOL,
    max_iters: Optional[int] = None,
    backend: str = "simplex",
    warm_start: bool = True,
    per_agent: int = 1,
    options: Optional[lp.SimplexOptions] = None,
):
    """Optimal assignment by repeated restricted solves from the everyone-single start.

    Returns ``(IndividualMatching, DualSolution, RroaTrace)``; the trace
    carries the final objective and choice sets.
    """
    t = instance.types
    sets = ChoiceSets.empty(instance.n_women, instance.n_men, t.x_count, t.y_count)
    master = restricted_master(instance, sets)
    mv = match_values(instance)

    def pricer(sol):
        u, v, T, _ = master.split_duals(sol.duals)
        return price(instance, DualSolution(u, v, T), sets, price_tol, per_agent)

    def costs(viol):
        return mv.alpha[viol.w_agents, viol.w_types], mv.gamma[viol.m_types, viol.m_agents]

    sol, trace = column_generation(master, sets, pricer, costs, max_iters or default_max_iters(instance),
                                   backend, options, warm_start)
    women, ws, men, ms = master.split_primal(sol.x)
    u, v, T, _ = master.split_duals(sol.duals)
    return IndividualMatching(women, ws, men, ms), DualSolution(u, v, T), trace
