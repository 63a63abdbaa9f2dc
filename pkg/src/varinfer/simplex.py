"""Dense two-phase primal simplex for small linear programs.

Solves ``min c'x  s.t.  A x <= b, x >= 0`` on an explicit tableau with
Bland's anti-cycling pivot rule, so the solve is exact (a vertex),
deterministic, and degeneracy-safe. Problem sizes here are a few hundred
variables at most, where dense tableau updates are plenty fast.

The solver also reports the dual objective, computed from the simplex
multipliers of the final basis, so callers can certify optimality with a
duality-gap check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PIVOT_TOL = 1e-11
FEAS_TOL = 1e-9
_MAX_PIVOTS = 200_000


class InfeasibleError(RuntimeError):
    """The constraint set is empty (phase 1 ended with a positive sum)."""


class UnboundedError(RuntimeError):
    """The objective is unbounded below over the feasible set."""


@dataclass(frozen=True)
class LpSolution:
    x: np.ndarray
    objective: float
    dual_objective: float

    @property
    def duality_gap(self) -> float:
        return abs(self.objective - self.dual_objective)


def _pivot(tableau, obj_row, basis, row, col):
    """Pivot in place on (row, col), keeping basic columns exact units."""
    tableau[row] /= tableau[row, col]
    factors = tableau[:, col].copy()
    factors[row] = 0.0
    tableau -= np.outer(factors, tableau[row])
    obj_row -= obj_row[col] * tableau[row]
    tableau[:, col] = 0.0
    tableau[row, col] = 1.0
    obj_row[col] = 0.0
    basis[row] = col


def _bland_iterate(tableau, obj_row, basis):
    """Pivot with Bland's rule until no reduced cost is below -PIVOT_TOL."""
    for _ in range(_MAX_PIVOTS):
        negative = np.nonzero(obj_row[:-1] < -PIVOT_TOL)[0]
        if negative.size == 0:
            return
        enter = int(negative[0])
        col = tableau[:, enter]
        eligible = np.nonzero(col > PIVOT_TOL)[0]
        if eligible.size == 0:
            raise UnboundedError("objective unbounded below")
        ratios = tableau[eligible, -1] / col[eligible]
        tied = eligible[ratios == ratios.min()]
        leave = int(tied[np.argmin(basis[tied])])
        _pivot(tableau, obj_row, basis, leave, enter)
    raise RuntimeError("simplex pivot limit exceeded")


def solve_lp(c, a_ub, b_ub) -> LpSolution:
    """Exact solve of ``min c'x  s.t.  a_ub x <= b_ub, x >= 0``.

    Raises
    ------
    InfeasibleError
        If no feasible point exists.
    UnboundedError
        If the optimum is -infinity.
    """
    c = np.asarray(c, dtype=float)
    a = np.atleast_2d(np.asarray(a_ub, dtype=float))
    b = np.asarray(b_ub, dtype=float)
    m, n = a.shape
    if c.shape != (n,) or b.shape != (m,):
        raise ValueError("inconsistent LP dimensions")

    # Equality form A x + s = b; rows with negative b are flipped and get
    # an artificial variable so the initial basis is feasible.
    neg = b < 0
    n_art = int(neg.sum())
    width = n + m + n_art + 1
    tableau = np.zeros((m, width))
    tableau[:, :n] = np.where(neg[:, None], -a, a)
    tableau[np.arange(m), n + np.arange(m)] = np.where(neg, -1.0, 1.0)
    tableau[:, -1] = np.abs(b)
    basis = np.empty(m, dtype=int)
    art_rows = np.nonzero(neg)[0]
    tableau[art_rows, n + m + np.arange(n_art)] = 1.0
    basis[~neg] = n + np.nonzero(~neg)[0]
    basis[neg] = n + m + np.arange(n_art)
    row_ids = np.arange(m)

    if n_art:
        # Phase 1: minimize the sum of artificials.
        obj_row = np.zeros(width)
        obj_row[n + m:-1] = 1.0
        obj_row -= tableau[art_rows].sum(axis=0)
        obj_row[n + m + np.arange(n_art)] = 0.0
        _bland_iterate(tableau, obj_row, basis)
        if -obj_row[-1] > FEAS_TOL:
            raise InfeasibleError(f"phase 1 optimum {-obj_row[-1]:.3e} > 0")
        # Drive leftover zero-valued artificials out of the basis; a row
        # with no eligible pivot is linearly redundant and gets dropped.
        keep = np.ones(tableau.shape[0], dtype=bool)
        for i in range(tableau.shape[0]):
            if basis[i] < n + m:
                continue
            candidates = np.nonzero(np.abs(tableau[i, :n + m]) > PIVOT_TOL)[0]
            if candidates.size == 0:
                keep[i] = False
                continue
            _pivot(tableau, obj_row, basis, i, int(candidates[0]))
        tableau = tableau[keep]
        basis = basis[keep]
        row_ids = row_ids[keep]

    # Phase 2 on the original objective, artificial columns dropped.
    tableau = np.hstack([tableau[:, :n + m], tableau[:, -1:]])
    c_full = np.concatenate([c, np.zeros(m + 1)])
    obj_row = c_full - c_full[basis] @ tableau
    obj_row[basis] = 0.0
    _bland_iterate(tableau, obj_row, basis)

    x_full = np.zeros(n + m)
    x_full[basis] = tableau[:, -1]
    x = x_full[:n]
    objective = float(c @ x)

    # Simplex multipliers of the final basis against the original columns;
    # dropped redundant rows implicitly carry a zero multiplier.
    cols = np.hstack([a, np.eye(m)])
    basis_matrix = cols[np.ix_(row_ids, basis)]
    pi = np.linalg.solve(basis_matrix.T, c_full[basis])
    dual_objective = float(pi @ b[row_ids])
    return LpSolution(x=x, objective=objective, dual_objective=dual_objective)
