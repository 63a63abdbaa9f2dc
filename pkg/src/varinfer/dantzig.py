"""Row-wise l1 minimization under an l-infinity residual constraint.

The matrix program

    min ||A||_1  s.t.  || G1 - G0 A' ||_max <= tau

separates over the rows of A because the max-norm constraint decouples
over the columns of A'. Each row is the linear program

    min ||a||_1  s.t.  || g1 - G0 a ||_inf <= tau,

solved exactly by splitting ``a = a+ - a-`` with nonnegative parts and
running the embedded simplex. Only the objective value and feasibility
are contract-bound; when the minimizer is not unique the returned vertex
is whichever the deterministic pivot rule selects.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .simplex import InfeasibleError, solve_lp

FEAS_SLACK = 1e-9
GAP_TOL = 1e-9
_G0_ASYM_TOL = 1e-8


@dataclass(frozen=True)
class DantzigProblem:
    """Moment matrices and tolerance for the matrix program.

    ``G0`` averages posterior second moments so it must be symmetric up
    to 1e-8; it is symmetrized exactly on construction.
    """

    G0: np.ndarray
    G1: np.ndarray
    tau: float

    def __post_init__(self):
        g0 = np.array(self.G0, dtype=float)
        g1 = np.array(self.G1, dtype=float)
        p = g0.shape[0]
        if g0.shape != (p, p) or g1.shape != (p, p):
            raise ValueError("G0 and G1 must be square matrices of equal size")
        if not (np.all(np.isfinite(g0)) and np.all(np.isfinite(g1))):
            raise ValueError("moment matrices must be finite")
        if np.max(np.abs(g0 - g0.T)) > _G0_ASYM_TOL:
            raise ValueError("G0 is not symmetric within 1e-8")
        if not np.isfinite(self.tau) or self.tau < 0:
            raise ValueError("tau must be finite and >= 0")
        object.__setattr__(self, "G0", 0.5 * (g0 + g0.T))
        object.__setattr__(self, "G1", g1)

    @property
    def p(self) -> int:
        return self.G0.shape[0]


def dantzig_row(g0: np.ndarray, g1: np.ndarray, tau: float) -> np.ndarray:
    """Solve one row program ``min ||a||_1 s.t. ||g1 - G0 a||_inf <= tau``.

    The returned vertex is certified feasible within 1e-9 and optimal by
    an LP duality gap of at most 1e-9.

    Raises
    ------
    InfeasibleError
        When no ``a`` satisfies the residual constraint (possible for
        singular ``g0`` with tau too small); raise tau to recover.
    """
    g0 = np.asarray(g0, dtype=float)
    g1 = np.asarray(g1, dtype=float)
    p = g1.shape[0]
    if g0.shape != (p, p):
        raise ValueError("g0 and g1 dimensions do not match")
    if tau < 0:
        raise ValueError("tau must be >= 0")
    c = np.ones(2 * p)
    a_ub = np.block([[g0, -g0], [-g0, g0]])
    b_ub = np.concatenate([g1 + tau, tau - g1])
    sol = solve_lp(c, a_ub, b_ub)
    a = sol.x[:p] - sol.x[p:]
    residual = float(np.max(np.abs(g1 - g0 @ a)))
    if residual > tau + FEAS_SLACK:
        raise RuntimeError(f"simplex returned an infeasible point (residual {residual:.3e})")
    if sol.duality_gap > GAP_TOL:
        raise RuntimeError(f"duality gap {sol.duality_gap:.3e} exceeds tolerance")
    return a


def dantzig_matrix(problem: DantzigProblem) -> np.ndarray:
    """Solve the matrix program row by row.

    Row i of the result solves ``dantzig_row(G0, G1[:, i], tau)``; the
    full max-norm constraint is re-verified on the assembled matrix.
    """
    p = problem.p
    a_hat = np.empty((p, p))
    for i in range(p):
        try:
            a_hat[i] = dantzig_row(problem.G0, problem.G1[:, i], problem.tau)
        except InfeasibleError as exc:
            raise InfeasibleError(f"row {i} infeasible at tau={problem.tau:.6g}: {exc}") from exc
    residual = float(np.max(np.abs(problem.G1 - problem.G0 @ a_hat.T)))
    if residual > problem.tau + FEAS_SLACK:
        raise RuntimeError(f"assembled matrix violates the constraint (residual {residual:.3e})")
    return a_hat
