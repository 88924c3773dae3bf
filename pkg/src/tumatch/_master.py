"""Column/row layout shared by the assignment, restricted and SMM linear programs.

Rows: one convexity row per woman, one per man, one balance row per type
pair (women minus men), and optionally K moment rows.  Columns: every
agent's singlehood variable first, then match variables in insertion order.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import lp
from .market import MarketInstance


class MasterLP:
    def __init__(self, n_women: int, n_men: int, woman_types: np.ndarray, man_types: np.ndarray,
                 x_count: int, y_count: int, eps0: np.ndarray, eta0: np.ndarray,
                 moment_phi: Optional[np.ndarray] = None, moment_rhs: Optional[np.ndarray] = None):
        self.nI, self.nJ = n_women, n_men
        self.wt, self.mt = woman_types, man_types
        self.X, self.Y = x_count, y_count
        self.moment_phi = moment_phi  # already multiplied by 1/2 and the row scale
        self.K = 0 if moment_phi is None else moment_phi.shape[2]
        self.bal0 = n_women + n_men
        self.mom0 = self.bal0 + x_count * y_count
        m = self.mom0 + self.K
        rows = (
            [f"W{i}" for i in range(n_women)]
            + [f"M{j}" for j in range(n_men)]
            + [f"B{x}_{y}" for x in range(x_count) for y in range(y_count)]
            + [f"K{k}" for k in range(self.K)]
        )
        b = np.zeros(m)
        b[: self.bal0] = 1.0
        if self.K:
            b[self.mom0:] = moment_rhs
        n0 = n_women + n_men
        A = sp.csc_matrix((np.ones(n0), (np.arange(n0), np.arange(n0))), shape=(m, n0))
        cols = [f"w{i}s" for i in range(n_women)] + [f"m{j}s" for j in range(n_men)]
        self.problem = lp.LpProblem(np.concatenate([eps0, eta0]), A, b, tuple(rows), tuple(cols))
        # per match column: side (0 women, 1 men), agent, partner type
        self.side = np.zeros(0, np.int8)
        self.agent = np.zeros(0, np.int64)
        self.ptype = np.zeros(0, np.int64)

    def _block(self, side: int, agents: np.ndarray, ptypes: np.ndarray):
        count = agents.size
        if side == 0:
            x, y = self.wt[agents], ptypes
            own_row = agents
            sign = 1.0
        else:
            x, y = ptypes, self.mt[agents]
            own_row = self.nI + agents
            sign = -1.0
        bal_row = self.bal0 + x * self.Y + y
        ri = [own_row, bal_row]
        vals = [np.ones(count), np.full(count, sign)]
        ci = [np.arange(count), np.arange(count)]
        for k in range(self.K):
            coef = self.moment_phi[x, y, k]
            nz = coef != 0
            ri.append(np.full(int(nz.sum()), self.mom0 + k))
            vals.append(coef[nz])
            ci.append(np.flatnonzero(nz))
        return sp.csc_matrix(
            (np.concatenate(vals), (np.concatenate(ri), np.concatenate(ci))),
            shape=(self.problem.n_rows, count),
        )

    def add(self, w_agents, w_types, w_costs, m_agents, m_types, m_costs) -> None:
        """Append woman columns (i, y) and man columns (j, x) with the given objective costs."""
        w_agents = np.asarray(w_agents, np.int64)
        w_types = np.asarray(w_types, np.int64)
        m_agents = np.asarray(m_agents, np.int64)
        m_types = np.asarray(m_types, np.int64)
        if w_agents.size + m_agents.size == 0:
            return
        block = sp.hstack([self._block(0, w_agents, w_types), self._block(1, m_agents, m_types)], format="csc")
        labels = [f"w{i}y{y}" for i, y in zip(w_agents.tolist(), w_types.tolist())]
        labels += [f"m{j}x{x}" for j, x in zip(m_agents.tolist(), m_types.tolist())]
        costs = np.concatenate([np.asarray(w_costs, float), np.asarray(m_costs, float)])
        self.problem = lp.append_block(self.problem, costs, block, labels)
        self.side = np.concatenate([self.side, np.zeros(w_agents.size, np.int8), np.ones(m_agents.size, np.int8)])
        self.agent = np.concatenate([self.agent, w_agents, m_agents])
        self.ptype = np.concatenate([self.ptype, w_types, m_types])

    @property
    def n_match_columns(self) -> int:
        return self.agent.size

    def split_primal(self, x: np.ndarray):
        """Dense (women |I|x|Y|, women_single, men |J|x|X|, men_single) from a primal vector."""
        n0 = self.nI + self.nJ
        women = np.zeros((self.nI, self.Y))
        men = np.zeros((self.nJ, self.X))
        xm = x[n0:]
        w = self.side == 0
        np.add.at(women, (self.agent[w], self.ptype[w]), xm[w])
        np.add.at(men, (self.agent[~w], self.ptype[~w]), xm[~w])
        return women, x[: self.nI].copy(), men, x[self.nI:n0].copy()

    def split_duals(self, y: np.ndarray):
        u = y[: self.nI].copy()
        v = y[self.nI: self.bal0].copy()
        T = y[self.bal0: self.mom0].reshape(self.X, self.Y).copy()
        mom = y[self.mom0:].copy()
        return u, v, T, mom


def master_for(instance: MarketInstance, moment_phi=None, moment_rhs=None) -> MasterLP:
    p = instance.population
    t = instance.types
    return MasterLP(p.n_women, p.n_men, p.woman_types, p.man_types, t.x_count, t.y_count,
                    instance.shocks.eps_single, instance.shocks.eta_single, moment_phi, moment_rhs)
