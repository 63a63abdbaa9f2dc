"""Conditional latent moments given the full observation record.

``kalman_smooth`` runs a standard Kalman filter followed by the
fixed-interval Rauch-Tung-Striebel smoother, including the lag-one
smoothed covariance recursion, and returns the three moment arrays the
EM updates consume. ``exact_condition`` computes the same moments by one
dense joint-Gaussian conditioning solve and serves as the independent
oracle for the recursive implementation. ``log_likelihood`` evaluates the
observed-data log density through the filter's prediction-error
decomposition.

The filter starts from the stationary prior: predicted mean zero and
predicted covariance equal to the stationary state covariance, so all
three entry points require a stationary transition matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Dataset, ModelParams, stationary_covariance

_JITTER_SCALE = 1e-10

EXACT_CONDITION_MAX_PT = 2000


@dataclass(frozen=True)
class SmoothedMoments:
    """Smoothed first and second latent moments.

    Attributes
    ----------
    mean : (T, p) ndarray
        ``mean[t] = E[x_t | y_{1:T}]``.
    second : (T, p, p) ndarray
        ``second[t] = E[x_t x_t^T | y_{1:T}]``.
    cross : (T-1, p, p) ndarray
        ``cross[t] = E[x_t x_{t+1}^T | y_{1:T}]``.
    """

    mean: np.ndarray
    second: np.ndarray
    cross: np.ndarray

    @property
    def T(self) -> int:
        return self.mean.shape[0]

    @property
    def p(self) -> int:
        return self.mean.shape[1]


def _spd_solve(m: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve m @ x = b for symmetric positive-definite m.

    Adds a jitter of 1e-10 * trace/p once if the Cholesky test fails;
    raises if the matrix is still not positive definite.
    """
    try:
        np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        m = m + (_JITTER_SCALE * np.trace(m) / m.shape[0]) * np.eye(m.shape[0])
        np.linalg.cholesky(m)
    return np.linalg.solve(m, b)


def _sym(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def _filter(data: Dataset, params: ModelParams, with_loglik: bool):
    """Forward pass. Returns predicted/filtered moments, last gain, loglik."""
    y = data.y
    T, p = y.shape
    a = params.A
    q = params.sigma_eta_sq
    r = params.sigma_eps_sq
    noiseless = r == 0.0
    sigma_x = stationary_covariance(params)
    eye = np.eye(p)

    m_pred = np.empty((T, p))
    p_pred = np.empty((T, p, p))
    m_filt = np.empty((T, p))
    p_filt = np.empty((T, p, p))
    gain_last = None
    loglik = 0.0

    for t in range(T):
        if t == 0:
            mp = np.zeros(p)
            pp = sigma_x
        else:
            mp = a @ m_filt[t - 1]
            pp = _sym(a @ p_filt[t - 1] @ a.T + q * eye)
        m_pred[t] = mp
        p_pred[t] = pp
        innov = y[t] - mp
        if noiseless:
            # Exact limit of the update: gain I, posterior concentrated at y.
            gain = eye
            m_filt[t] = y[t]
            p_filt[t] = np.zeros((p, p))
            s = pp
        else:
            s = pp + r * eye
            gain = _spd_solve(s, pp).T
            m_filt[t] = mp + gain @ innov
            p_filt[t] = _sym(pp - gain @ pp)
        if with_loglik:
            chol = np.linalg.cholesky(s)
            z = np.linalg.solve(chol, innov)
            loglik -= 0.5 * (p * math.log(2.0 * math.pi) + z @ z)
            loglik -= float(np.sum(np.log(np.diag(chol))))
        gain_last = gain
    return m_pred, p_pred, m_filt, p_filt, gain_last, loglik


def kalman_smooth(data: Dataset, params: ModelParams) -> SmoothedMoments:
    """Exact conditional latent moments via Kalman filter + RTS smoother.

    The lag-one smoothed covariance uses the standard backward recursion
    initialized at ``P_{T,T-1|T} = (I - K_T) A P_{T-1|T-1}``.
    """
    y = data.y
    T, p = y.shape
    if params.p != p:
        raise ValueError(f"params are {params.p}-dimensional but data has p={p}")
    a = params.A
    m_pred, p_pred, m_filt, p_filt, gain_last, _ = _filter(data, params, with_loglik=False)

    m_smooth = np.empty((T, p))
    p_smooth = np.empty((T, p, p))
    gains = np.empty((T - 1, p, p))
    m_smooth[T - 1] = m_filt[T - 1]
    p_smooth[T - 1] = p_filt[T - 1]
    for t in range(T - 2, -1, -1):
        j = _spd_solve(p_pred[t + 1], a @ p_filt[t]).T
        gains[t] = j
        m_smooth[t] = m_filt[t] + j @ (m_smooth[t + 1] - m_pred[t + 1])
        p_smooth[t] = _sym(p_filt[t] + j @ (p_smooth[t + 1] - p_pred[t + 1]) @ j.T)

    # p_lag[t] = Cov(x_{t+1}, x_t | y_{1:T})
    p_lag = np.empty((T - 1, p, p))
    p_lag[T - 2] = (np.eye(p) - gain_last) @ a @ p_filt[T - 2]
    for t in range(T - 3, -1, -1):
        p_lag[t] = (
            p_filt[t + 1] @ gains[t].T
            + gains[t + 1] @ (p_lag[t + 1] - a @ p_filt[t + 1]) @ gains[t].T
        )

    second = p_smooth + m_smooth[:, :, None] * m_smooth[:, None, :]
    cross = np.transpose(p_lag, (0, 2, 1)) + m_smooth[:-1, :, None] * m_smooth[1:, None, :]
    return SmoothedMoments(mean=m_smooth, second=second, cross=cross)


def exact_condition(data: Dataset, params: ModelParams) -> SmoothedMoments:
    """Brute-force moments from one dense joint-Gaussian conditioning.

    Builds the stacked covariance of (x_{1:T}, y_{1:T}) with
    ``Cov(x_t, x_s) = A^{t-s} Sigma_x`` for t >= s and conditions in a
    single solve. Only intended as a test oracle; guarded to pT <= 2000.
    """
    y = data.y
    T, p = y.shape
    if params.p != p:
        raise ValueError(f"params are {params.p}-dimensional but data has p={p}")
    if p * T > EXACT_CONDITION_MAX_PT:
        raise ValueError(f"exact_condition limited to p*T <= {EXACT_CONDITION_MAX_PT}")
    sigma_x = stationary_covariance(params)

    powers = [np.eye(p)]
    for _ in range(T - 1):
        powers.append(params.A @ powers[-1])
    cov_x = np.empty((p * T, p * T))
    for t in range(T):
        for s in range(t + 1):
            block = powers[t - s] @ sigma_x
            cov_x[t * p:(t + 1) * p, s * p:(s + 1) * p] = block
            if s != t:
                cov_x[s * p:(s + 1) * p, t * p:(t + 1) * p] = block.T
    cov_y = cov_x + params.sigma_eps_sq * np.eye(p * T)

    y_vec = y.reshape(-1)
    solve_y = _spd_solve(cov_y, np.column_stack([y_vec, cov_x.T]))
    mean_vec = cov_x @ solve_y[:, 0]
    cond_cov = cov_x - cov_x @ solve_y[:, 1:]

    mean = mean_vec.reshape(T, p)
    second = np.empty((T, p, p))
    cross = np.empty((T - 1, p, p))
    for t in range(T):
        blk = cond_cov[t * p:(t + 1) * p, t * p:(t + 1) * p]
        second[t] = _sym(blk) + np.outer(mean[t], mean[t])
    for t in range(T - 1):
        blk = cond_cov[t * p:(t + 1) * p, (t + 1) * p:(t + 2) * p]
        cross[t] = blk + np.outer(mean[t], mean[t + 1])
    return SmoothedMoments(mean=mean, second=second, cross=cross)


def log_likelihood(data: Dataset, params: ModelParams) -> float:
    """Observed-data log density under the model, via the filter."""
    if params.p != data.p:
        raise ValueError(f"params are {params.p}-dimensional but data has p={data.p}")
    *_, loglik = _filter(data, params, with_loglik=True)
    return float(loglik)
