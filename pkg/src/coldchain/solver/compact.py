"""Exact compact form of the scenario block.

For one (vaccine, clinic, period) cell with served amount ``y`` the S scenario
rows ``y + v_s - z_s = d_s`` contribute ``-pi * sum_s max(0, d_s - y)`` to the
objective at optimum. With the demands sorted, that penalty is concave
piecewise linear in ``y``, so ``y`` can be split into segment columns
``[0, d_(1)], [d_(1), d_(2)], ...`` plus an open excess segment, segment ``m``
earning ``pi * (S - m)``. The LP fills segments in order by itself. This
replaces ``cells * S`` rows by ``cells`` rows. The full DEF point (v, z) and
row multipliers are reconstructed afterwards, so callers see an ordinary
solution of the original problem.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from . import LinearProgram


def has_scenario_block(problem) -> bool:
    index = getattr(problem, "index", None)
    return index is not None and getattr(index, "v_offset", -1) >= 0 and problem.n_scenarios > 0


def compact_applicable(problem) -> bool:
    if not has_scenario_block(problem):
        return False
    idx = problem.index
    slack = slice(idx.v_offset, problem.n_cols)
    return bool(np.all(problem.lb[slack] == 0) and np.all(np.isinf(problem.ub[slack])))


class CompactForm:
    def __init__(self, problem) -> None:
        idx = problem.index
        S = problem.n_scenarios
        n_cells = len(idx.cells)
        ns = idx.v_offset
        m_struct = problem.n_rows - n_cells * S
        self.problem, self.S, self.n_cells, self.ns, self.m_struct = problem, S, n_cells, ns, m_struct

        A = sp.csr_matrix(problem.A)
        delta = problem.rhs[m_struct:].reshape(n_cells, S)
        self.delta = delta
        srt = np.sort(delta, axis=1)
        lengths = np.diff(srt, axis=1, prepend=0.0)
        pi = problem.penalties.reshape(-1)
        keep = lengths > 0
        cell_of, seg_of = np.nonzero(keep)
        seg_ub = lengths[keep]
        seg_cost = pi[cell_of] * (S - seg_of)
        n_seg = cell_of.size
        # open excess segment per cell
        cell_all = np.concatenate([cell_of, np.arange(n_cells)])
        ub_all = np.concatenate([seg_ub, np.full(n_cells, np.inf)])
        cost_all = np.concatenate([seg_cost, np.zeros(n_cells)])
        n_new = n_seg + n_cells

        top = sp.hstack([A[:m_struct, :ns], sp.csr_matrix((m_struct, n_new))])
        link = sp.hstack(
            [
                sp.csr_matrix(problem.served_weights)[:, :ns],
                sp.csr_matrix((-np.ones(n_new), (cell_all, np.arange(n_new))), shape=(n_cells, n_new)),
            ]
        )
        self.lp = LinearProgram(
            sp.vstack([top, link], format="csr"),
            np.concatenate([problem.senses[:m_struct], np.full(n_cells, "E")]),
            np.concatenate([problem.rhs[:m_struct], np.zeros(n_cells)]),
            np.concatenate([problem.lb[:ns], np.zeros(n_new)]),
            np.concatenate([problem.ub[:ns], ub_all]),
            np.concatenate([problem.c[:ns], cost_all]),
        )
        self.constant = -float(pi @ delta.sum(axis=1))

    def expand(self, x_compact: np.ndarray) -> np.ndarray:
        """Full DEF point from a compact solution."""
        p = self.problem
        x = np.zeros(p.n_cols)
        x[: self.ns] = x_compact[: self.ns]
        served = (p.served_weights @ x).reshape(self.n_cells, 1)
        v = np.maximum(0.0, self.delta - served)
        z = np.maximum(0.0, served - self.delta)
        idx = p.index
        x[idx.v_block()] = v.reshape(-1)
        x[idx.z_block()] = z.reshape(-1)
        return x

    def expand_duals(self, y_compact: np.ndarray, x: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        """Row multipliers of the DEF from those of the compact problem.

        Scenario rows short of demand price at ``-pi``, rows in excess at 0;
        tied rows share what is left of the cell's linking multiplier.
        """
        p = self.problem
        y = np.full(p.n_rows, np.nan)
        if y_compact is None or np.all(np.isnan(y_compact)):
            return y
        y[: self.m_struct] = y_compact[: self.m_struct]
        w = y_compact[self.m_struct :]
        served = (p.served_weights @ x).reshape(self.n_cells, 1)
        pi = p.penalties.reshape(-1, 1)
        short = self.delta > served + tol * (1 + np.abs(self.delta))
        over = self.delta < served - tol * (1 + np.abs(self.delta))
        tie = ~(short | over)
        ys = np.where(short, -pi, 0.0)
        n_tie = tie.sum(axis=1, keepdims=True)
        rest = w.reshape(-1, 1) - ys.sum(axis=1, keepdims=True)
        share = np.divide(rest, n_tie, out=np.zeros_like(rest), where=n_tie > 0)
        ys = np.where(tie, np.clip(share, -pi, 0.0), ys)
        y[self.m_struct :] = ys.reshape(-1)
        return y
