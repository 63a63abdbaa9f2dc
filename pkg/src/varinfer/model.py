"""Core model types and stationary-process linear algebra.

The observation model is a lag-1 vector autoregression watched through
additive noise:

    y_t = x_t + eps_t,        eps_t ~ N(0, sigma_eps^2 I)
    x_{t+1} = A x_t + eta_t,  eta_t ~ N(0, sigma_eta^2 I)

This module holds the parameter/data containers shared by every other
module, plus the stationary covariance solve, spectral-norm rescaling,
and the companion-form embedding for higher-lag models.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class NonStationaryError(ValueError):
    """Raised when an operation requires a spectral norm below one."""


def _as_square_matrix(a, name: str = "A") -> np.ndarray:
    a = np.array(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be finite-valued")
    return a


@dataclass(frozen=True)
class ModelParams:
    """Transition matrix plus the two noise variances.

    Attributes
    ----------
    A : (p, p) ndarray
        Transition matrix. Estimation accepts any finite matrix; only
        simulation and the stationary solve require a spectral norm < 1.
    sigma_eta_sq : float
        Innovation variance of the latent process, must be > 0.
    sigma_eps_sq : float
        Measurement-error variance, must be >= 0.
    """

    A: np.ndarray
    sigma_eta_sq: float
    sigma_eps_sq: float

    def __post_init__(self):
        object.__setattr__(self, "A", _as_square_matrix(self.A))
        if not np.isfinite(self.sigma_eta_sq) or self.sigma_eta_sq <= 0:
            raise ValueError("sigma_eta_sq must be finite and > 0")
        if not np.isfinite(self.sigma_eps_sq) or self.sigma_eps_sq < 0:
            raise ValueError("sigma_eps_sq must be finite and >= 0")

    @property
    def p(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class Dataset:
    """An observed T x p series, optionally with the latent truth.

    The latent ``x`` is only ever populated by the simulator; estimation
    code must not read it.
    """

    y: np.ndarray
    x: np.ndarray | None = None

    def __post_init__(self):
        y = np.array(self.y, dtype=float)
        if y.ndim != 2:
            raise ValueError(f"y must be a T x p matrix, got shape {y.shape}")
        if y.shape[0] < 3:
            raise ValueError("need T >= 3 observations")
        if not np.all(np.isfinite(y)):
            raise ValueError("y contains non-finite values")
        object.__setattr__(self, "y", y)
        if self.x is not None:
            x = np.array(self.x, dtype=float)
            if x.shape != y.shape:
                raise ValueError("x must have the same shape as y")
            if not np.all(np.isfinite(x)):
                raise ValueError("x contains non-finite values")
            object.__setattr__(self, "x", x)

    @property
    def T(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.y.shape[1]


@dataclass(frozen=True)
class HypothesisSpec:
    """Null matrix A0 and the index set S of entries under test."""

    A0: np.ndarray
    S: frozenset = field(default=None)

    def __post_init__(self):
        a0 = _as_square_matrix(self.A0, "A0")
        object.__setattr__(self, "A0", a0)
        p = a0.shape[0]
        if self.S is None:
            pairs = frozenset((i, j) for i in range(p) for j in range(p))
        else:
            pairs = frozenset((int(i), int(j)) for i, j in self.S)
        if not pairs:
            raise ValueError("index set S must be nonempty")
        for i, j in pairs:
            if not (0 <= i < p and 0 <= j < p):
                raise ValueError(f"index pair ({i}, {j}) out of range for p={p}")
        object.__setattr__(self, "S", pairs)

    @property
    def p(self) -> int:
        return self.A0.shape[0]

    def mask(self) -> np.ndarray:
        """Boolean p x p mask with True at every tested entry."""
        m = np.zeros((self.p, self.p), dtype=bool)
        rows, cols = zip(*sorted(self.S))
        m[list(rows), list(cols)] = True
        return m


_POWER_TOL = 1e-12
_POWER_MAX_ITERS = 10_000


def spectral_norm(a) -> float:
    """Largest singular value of ``a`` by power iteration on A^T A.

    Uses the normalized all-ones start vector for reproducibility; if an
    iterate is annihilated exactly (start vector in the null space), falls
    back through a fixed ladder of deterministic start vectors.
    """
    a = _as_square_matrix(a)
    p = a.shape[0]
    m = a.T @ a
    starts = [np.ones(p), np.arange(1.0, p + 1.0)]
    starts += [np.eye(p)[i] for i in range(p)]
    for v0 in starts:
        v = v0 / np.linalg.norm(v0)
        lam_prev = np.inf
        for _ in range(_POWER_MAX_ITERS):
            w = m @ v
            lam = float(v @ w)
            norm_w = np.linalg.norm(w)
            if norm_w == 0.0:
                break
            v = w / norm_w
            if abs(lam - lam_prev) <= _POWER_TOL * max(1.0, abs(lam)):
                return float(np.sqrt(max(lam, 0.0)))
            lam_prev = lam
        else:
            return float(np.sqrt(max(lam_prev, 0.0)))
    # Every start vector was annihilated, so A^T A = 0 and A = 0.
    return 0.0


_LYAPUNOV_TOL = 1e-12
_LYAPUNOV_MAX_ITERS = 10_000


def stationary_covariance(params: ModelParams) -> np.ndarray:
    """Stationary covariance of the latent VAR state.

    Solves the discrete Lyapunov equation ``S = A S A^T + sigma_eta^2 I``
    by fixed-point iteration from ``S = sigma_eta^2 I``; convergence is
    geometric because the spectral norm of A is below one.

    Raises
    ------
    NonStationaryError
        If the spectral norm of A is >= 1.
    """
    a = params.A
    if spectral_norm(a) >= 1.0:
        raise NonStationaryError("stationary covariance requires ||A||_2 < 1")
    q = params.sigma_eta_sq * np.eye(params.p)
    s = q.copy()
    for _ in range(_LYAPUNOV_MAX_ITERS):
        s_next = a @ s @ a.T + q
        delta = float(np.max(np.abs(s_next - s)))
        s = s_next
        if delta < _LYAPUNOV_TOL:
            return 0.5 * (s + s.T)
    raise RuntimeError("Lyapunov fixed-point iteration did not converge")


def spectral_rescale(a, target: float) -> np.ndarray:
    """Scale ``a`` so its spectral norm equals ``target``.

    The zero pattern is preserved exactly since this is a scalar multiple.
    """
    a = _as_square_matrix(a)
    if not np.isfinite(target) or target <= 0:
        raise ValueError("target spectral norm must be > 0")
    norm = spectral_norm(a)
    if norm == 0.0:
        raise ValueError("cannot rescale the zero matrix")
    return (target / norm) * a


def companion_embed(blocks: Sequence[np.ndarray]) -> np.ndarray:
    """Stack lag-d coefficient blocks into the lag-1 companion matrix.

    The output has the blocks [A_1 ... A_d] across the top block row,
    identity blocks on the subdiagonal, and zeros elsewhere, so that the
    stacked state (x_t, ..., x_{t-d+1}) follows a lag-1 recursion.
    """
    blocks = [np.array(b, dtype=float) for b in blocks]
    if not blocks:
        raise ValueError("need at least one coefficient block")
    p = blocks[0].shape[0]
    for k, b in enumerate(blocks):
        if b.ndim != 2 or b.shape != (p, p):
            raise ValueError(f"block {k} has shape {b.shape}, expected ({p}, {p})")
    d = len(blocks)
    if d == 1:
        return blocks[0].copy()
    out = np.zeros((p * d, p * d))
    for k, b in enumerate(blocks):
        out[:p, k * p:(k + 1) * p] = b
    for k in range(1, d):
        out[k * p:(k + 1) * p, (k - 1) * p:k * p] = np.eye(p)
    return out
