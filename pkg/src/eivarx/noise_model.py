"""Structured error covariance of lagged EIV-ARX measurements.

The output error follows the AR part of the process, ``A(q^-1) v_y = e_y``,
so its autocovariance is fixed by the AR coefficients and the driving
variance through the Yule-Walker equations. Stacking ``L + 1`` lags of the
output and the input gives the block covariance

    Sigma_eL = blockdiag(Toeplitz(acvf[0..L]), sigma2_eu * I_{L+1}).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import block_diag, toeplitz

from .errors import NotPositiveDefiniteError, UnstableModelError

STABILITY_MARGIN = 1e-8
PROJECTION_RADIUS = 0.999
EIG_FLOOR = 1e-12


def ar_roots(a) -> np.ndarray:
    """Roots of ``1 + a_1 z^-1 + ... + a_n z^-n`` in the z-plane."""
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return np.empty(0, dtype=complex)
    return np.roots(np.concatenate(([1.0], a)))


def is_stable(a, margin: float = STABILITY_MARGIN) -> bool:
    roots = ar_roots(a)
    return bool(np.all(np.abs(roots) < 1.0 - margin))


def check_stable(a, margin: float = STABILITY_MARGIN) -> None:
    if not is_stable(a, margin):
        radius = np.max(np.abs(ar_roots(a)))
        raise UnstableModelError(
            f"AR polynomial {list(np.round(a, 6))} is not stable (max |root| = {radius:.6g})"
        )


def project_stable(a, radius: float = PROJECTION_RADIUS) -> np.ndarray:
    """Pull any root with modulus >= ``radius`` back onto that radius.

    Stable coefficient vectors are returned unchanged (as a float copy).
    """
    a = np.array(a, dtype=float)
    if a.size == 0 or is_stable(a, 1.0 - radius):
        return a
    roots = ar_roots(a)
    mod = np.abs(roots)
    big = mod >= radius
    roots[big] = roots[big] / mod[big] * radius
    return np.real(np.poly(roots))[1:]


@dataclass(frozen=True)
class Acvf:
    """Autocovariance values at lags ``0..max_lag``.

    Indexing with a negative lag returns the mirrored value.
    """

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("acvf values must be a non-empty 1-D array")
        object.__setattr__(self, "values", values)

    @property
    def max_lag(self) -> int:
        return self.values.size - 1

    def __getitem__(self, lag: int) -> float:
        return float(self.values[abs(int(lag))])

    def __mul__(self, scale: float) -> "Acvf":
        return Acvf(self.values * float(scale))

    __rmul__ = __mul__

    def toeplitz(self, size: int) -> np.ndarray:
        if size > self.values.size:
            raise ValueError(f"acvf holds {self.values.size} lags, {size} requested")
        return toeplitz(self.values[:size])


def yule_walker_acvf(a, sigma2_ey: float, max_lag: int) -> Acvf:
    """ACVF of the AR process ``A(q^-1) v = e`` with ``var(e) = sigma2_ey``.

    The first ``n_y + 1`` values come from a dense linear solve of the
    Yule-Walker system; larger lags follow from the homogeneous recursion
    ``acvf[l] = -sum_k a_k acvf[l - k]``.
    """
    a = np.asarray(a, dtype=float)
    if sigma2_ey < 0:
        raise ValueError(f"sigma2_ey must be non-negative, got {sigma2_ey}")
    if max_lag < 0:
        raise ValueError("max_lag must be non-negative")
    check_stable(a)
    n = a.size
    coeffs = np.concatenate(([1.0], a))

    system = np.zeros((n + 1, n + 1))
    for lag in range(n + 1):
        for k in range(n + 1):
            system[lag, abs(lag - k)] += coeffs[k]
    rhs = np.zeros(n + 1)
    rhs[0] = sigma2_ey

    if np.linalg.cond(system) > 1e12:
        raise UnstableModelError(
            f"Yule-Walker system is singular for a = {list(a)}; AR polynomial is not stable"
        )
    head = np.linalg.solve(system, rhs)

    values = np.zeros(max(max_lag, n) + 1)
    values[: n + 1] = head
    for lag in range(n + 1, values.size):
        values[lag] = -np.dot(a, values[lag - 1 :: -1][:n])
    return Acvf(values[: max_lag + 1])


def scaled_acvf_basis(a, max_lag: int) -> Acvf:
    """Unit-driving-variance ACVF; multiply by ``sigma2_ey`` to scale."""
    return yule_walker_acvf(a, 1.0, max_lag)


def symmetric_inverse_sqrt(matrix: np.ndarray, floor: float = EIG_FLOOR) -> np.ndarray:
    """``Q diag(lambda^-1/2) Q^T`` for a symmetric positive definite matrix."""
    matrix = np.asarray(matrix, dtype=float)
    evals, evecs = np.linalg.eigh(0.5 * (matrix + matrix.T))
    top = np.max(np.abs(evals)) if evals.size else 0.0
    if top <= 0 or evals[0] <= floor * top:
        raise NotPositiveDefiniteError(
            f"matrix is not positive definite (eigenvalue range [{evals[0]:.3g}, {top:.3g}])"
        )
    out = (evecs / np.sqrt(evals)) @ evecs.T
    return 0.5 * (out + out.T)


@dataclass(frozen=True)
class CovarianceModel:
    """Error covariance of a lag-``L`` stacked vector ``[y[k..k-L], u[k..k-L]]``."""

    sigma_vy_block: np.ndarray
    sigma2_eu: float
    lag: int

    @cached_property
    def matrix(self) -> np.ndarray:
        return block_diag(self.sigma_vy_block, self.sigma2_eu * np.eye(self.lag + 1))

    @cached_property
    def inv_sqrt(self) -> np.ndarray:
        return symmetric_inverse_sqrt(self.matrix)

    @property
    def dim(self) -> int:
        return 2 * (self.lag + 1)


def inverse_sqrt(sigma_e) -> np.ndarray:
    """Inverse square root of a :class:`CovarianceModel` or a plain SPD array."""
    if isinstance(sigma_e, CovarianceModel):
        return sigma_e.inv_sqrt
    return symmetric_inverse_sqrt(sigma_e)


def build_covariance(acvf: Acvf, sigma2_eu: float, lag: int) -> CovarianceModel:
    if lag < 0:
        raise ValueError("lag must be non-negative")
    if acvf.max_lag < lag:
        raise ValueError(f"acvf reaches lag {acvf.max_lag}, lag {lag} needed")
    if sigma2_eu <= 0:
        raise ValueError(f"sigma2_eu must be positive, got {sigma2_eu}")
    return CovarianceModel(acvf.toeplitz(lag + 1), float(sigma2_eu), int(lag))


def arx_covariance(a, sigma2_ey: float, sigma2_eu: float, lag: int) -> CovarianceModel:
    """Shortcut: Yule-Walker ACVF followed by :func:`build_covariance`."""
    return build_covariance(yule_walker_acvf(a, sigma2_ey, lag), sigma2_eu, lag)
