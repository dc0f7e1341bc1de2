"""Constraint subspace extraction and structured recovery of ``[A  -B]``.

With ``d`` constraints at stacking lag ``L`` the process order is
``eta = L - d + 1``. Row ``i`` of the constraint matrix ``A`` is the monic
AR polynomial shifted right by ``i`` places, so its entries are known to be
1 at column ``i`` and 0 outside columns ``i..i+eta``. Those ``d`` known
entries per row pin down the matching row of the ``d x d`` mixing matrix
``R`` in ``[A  -B] = R V2^T Sigma_e^{-1/2}``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import WrongOrderError
from .lagged_data import SampleCovariance
from .noise_model import inverse_sqrt
from .signal_gen import DifferenceEquation

COND_LIMIT = 1e10


@dataclass(frozen=True)
class EigenResult:
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # column j pairs with eigenvalues[j]

    def smallest(self, count: int) -> np.ndarray:
        """The ``count`` smallest eigenvalues, still in descending order."""
        return self.eigenvalues[self.eigenvalues.size - count :]


@dataclass(frozen=True)
class ConstraintEstimate:
    A_hat: np.ndarray
    B_hat: np.ndarray
    rotation: np.ndarray

    @property
    def d(self) -> int:
        return self.A_hat.shape[0]

    @property
    def lag(self) -> int:
        return self.A_hat.shape[1] - 1

    @property
    def eta(self) -> int:
        return self.lag - self.d + 1

    @property
    def matrix(self) -> np.ndarray:
        """``[A_hat  -B_hat]``, applied to stacked ``[y; u]`` vectors."""
        return np.hstack((self.A_hat, -self.B_hat))


def eigendecompose(S) -> EigenResult:
    """Descending spectral decomposition with a fixed eigenvector sign.

    Each eigenvector is flipped so its largest-magnitude entry is positive.
    """
    m = S.matrix if isinstance(S, SampleCovariance) else np.asarray(S, dtype=float)
    evals, evecs = np.linalg.eigh(m)
    evals = evals[::-1].copy()
    evecs = evecs[:, ::-1].copy()
    pivot = np.argmax(np.abs(evecs), axis=0)
    signs = np.sign(evecs[pivot, np.arange(evecs.shape[1])])
    signs[signs == 0] = 1.0
    return EigenResult(evals, evecs * signs)


def known_columns(row: int, d: int, lag: int) -> np.ndarray:
    """Columns of ``A`` row ``row`` whose values are fixed by structure.

    The diagonal (value 1) comes first, then the zero positions.
    """
    return np.array([row] + list(zero_columns(row, d, lag)), dtype=int)


def zero_columns(row: int, d: int, lag: int) -> np.ndarray:
    """Positions outside the ``eta + 1`` wide band of row ``row``.

    They are zero in both the output block and the input block.
    """
    eta = lag - d + 1
    return np.array([c for c in range(lag + 1) if c < row or c > row + eta], dtype=int)


def recover_constraints(E: EigenResult, d: int, sigma_e) -> ConstraintEstimate:
    """Rotate the ``d`` minor eigenvectors into the shifted-row structure.

    ``sigma_e`` is the covariance used to scale the data (a
    :class:`~eivarx.noise_model.CovarianceModel` or SPD array); the
    eigenvectors are mapped back to the original variables with its
    inverse square root before rotation.

    Each row of the rotation solves, in the least-squares sense, the unit
    diagonal plus the out-of-band zeros of both blocks. The output block on
    its own only fixes the rotation when the last AR coefficient is
    nonzero; the input-block zeros resolve the remaining cases (e.g. a
    pure input lag at the top order).
    """
    dim = E.eigenvectors.shape[0]
    lag = dim // 2 - 1
    if not 1 <= d <= lag + 1:
        raise ValueError(f"d must lie in [1, {lag + 1}], got {d}")
    v2 = E.eigenvectors[:, dim - d :]
    w = v2.T @ inverse_sqrt(sigma_e)
    w_a = w[:, : lag + 1]
    w_b = w[:, lag + 1 :]

    rotation = np.empty((d, d))
    for i in range(d):
        zeros = zero_columns(i, d, lag)
        system = np.vstack((w_a[:, known_columns(i, d, lag)].T, w_b[:, zeros].T))
        target = np.zeros(system.shape[0])
        target[0] = 1.0
        cond = np.linalg.cond(system)
        if not np.isfinite(cond) or cond > COND_LIMIT:
            raise WrongOrderError(
                f"structural solve for row {i} is ill-conditioned (cond={cond:.3g}) at d={d}"
            )
        rotation[i] = np.linalg.lstsq(system, target, rcond=None)[0]

    rotated = rotation @ w
    A_hat = rotated[:, : lag + 1].copy()
    B_hat = -rotated[:, lag + 1 :]
    for i in range(d):
        cols = known_columns(i, d, lag)
        A_hat[i, cols] = 0.0
        A_hat[i, i] = 1.0
    return ConstraintEstimate(A_hat, B_hat, rotation)


def average_coefficients(C: ConstraintEstimate) -> DifferenceEquation:
    """Average the shifted copies of each coefficient over the ``d`` rows.

    Returns a model with ``n_y = n_u = eta`` and zero delay.
    """
    eta = C.eta
    rows = np.arange(C.d)
    a = np.array([C.A_hat[rows, rows + m].mean() for m in range(1, eta + 1)])
    b = np.array([C.B_hat[rows, rows + m].mean() for m in range(eta + 1)])
    return DifferenceEquation(a, b, 0)
