"""Lagged data matrices, sample covariances and covariance scaling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError
from .noise_model import inverse_sqrt
from .signal_gen import TimeSeriesPair


@dataclass(frozen=True)
class LaggedMatrix:
    """Rows ``[y[k], ..., y[k-L], u[k], ..., u[k-L]]`` for ``k = L..N-1``."""

    data: np.ndarray
    lag: int

    @property
    def row_count(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class SampleCovariance:
    matrix: np.ndarray
    row_count: int

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def _lag_block(x: np.ndarray, lag: int) -> np.ndarray:
    n = x.size
    return np.column_stack([x[lag - j : n - j] for j in range(lag + 1)])


def stack(series: TimeSeriesPair, lag: int, center: bool = False) -> LaggedMatrix:
    """Stack ``lag + 1`` output lags followed by ``lag + 1`` input lags.

    With ``center=True`` the series are demeaned first.
    """
    if lag < 0:
        raise ValueError("lag must be non-negative")
    n = len(series)
    if n <= 2 * (lag + 1) + lag:
        raise InsufficientDataError(
            f"{n} samples are too few for lag {lag}; need more than {3 * lag + 2}"
        )
    y, u = series.y, series.u
    if center:
        y = y - y.mean()
        u = u - u.mean()
    data = np.hstack((_lag_block(y, lag), _lag_block(u, lag)))
    return LaggedMatrix(np.ascontiguousarray(data), lag)


def sample_covariance(Z: LaggedMatrix) -> SampleCovariance:
    """``Z^T Z / rows``, symmetrized."""
    rows = Z.row_count
    m = Z.data.T @ Z.data / rows
    return SampleCovariance(0.5 * (m + m.T), rows)


def scale_covariance(S: SampleCovariance, sigma_e) -> SampleCovariance:
    """``Sigma_e^{-1/2} S Sigma_e^{-1/2}`` for a covariance model or plain SPD matrix."""
    w = inverse_sqrt(sigma_e)
    if w.shape != S.matrix.shape:
        raise ValueError(f"covariance shape {w.shape} does not match {S.matrix.shape}")
    m = w @ S.matrix @ w
    return SampleCovariance(0.5 * (m + m.T), S.row_count)
