"""Maximum-likelihood noise variances from constraint residuals.

For a constraint estimate ``[A  -B]`` the residuals ``r[k] = [A  -B] z[k]``
are zero-mean Gaussian with covariance

    Sigma_r = sigma2_ey * A T A^T + sigma2_eu * B B^T

where ``T`` is the Toeplitz matrix of the unit-variance output-noise ACVF.
The covariance is linear in the two variances, which keeps the likelihood
and its gradient cheap to evaluate.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.optimize import minimize

from .constraint_est import ConstraintEstimate
from .errors import DegenerateNoiseError, NotPositiveDefiniteError
from .lagged_data import LaggedMatrix
from .noise_model import Acvf, scaled_acvf_basis

VARIANCE_FLOOR = 1e-6


@dataclass(frozen=True)
class VarianceEstimate:
    sigma2_ey: float
    sigma2_eu: float
    objective_value: float
    iterations: int
    converged: bool


def compute_residuals(C: ConstraintEstimate, Z: LaggedMatrix) -> np.ndarray:
    """One row of constraint residuals per stacked sample."""
    if Z.dim != C.matrix.shape[1]:
        raise ValueError(f"constraint width {C.matrix.shape[1]} != data width {Z.dim}")
    return Z.data @ C.matrix.T


class ResidualLikelihood:
    """Negative log-likelihood of constraint residuals in the two variances.

    ``acvf_basis`` is the output-noise ACVF for unit driving variance; pass
    a white basis (1, 0, 0, ...) to get the diagonal-covariance model.
    """

    def __init__(self, C: ConstraintEstimate, acvf_basis: Acvf, residuals: np.ndarray):
        residuals = np.asarray(residuals, dtype=float)
        if residuals.ndim == 1:
            residuals = residuals[:, None]
        if residuals.shape[1] != C.d:
            raise ValueError(f"residuals have {residuals.shape[1]} columns, expected {C.d}")
        self.rows = residuals.shape[0]
        self.moment = residuals.T @ residuals / self.rows
        toep = acvf_basis.toeplitz(C.lag + 1)
        self.P = C.A_hat @ toep @ C.A_hat.T
        self.Q = C.B_hat @ C.B_hat.T
        self.P = 0.5 * (self.P + self.P.T)
        self.Q = 0.5 * (self.Q + self.Q.T)

    def residual_covariance(self, sigma2_ey: float, sigma2_eu: float) -> np.ndarray:
        return sigma2_ey * self.P + sigma2_eu * self.Q

    def _factor(self, sigma2_ey, sigma2_eu):
        try:
            return cho_factor(self.residual_covariance(sigma2_ey, sigma2_eu), lower=True)
        except LinAlgError as exc:
            raise NotPositiveDefiniteError(
                f"residual covariance is not positive definite at "
                f"({sigma2_ey:.4g}, {sigma2_eu:.4g})"
            ) from exc

    def __call__(self, sigma2_ey: float, sigma2_eu: float) -> float:
        factor = self._factor(sigma2_ey, sigma2_eu)
        logdet = 2.0 * np.sum(np.log(np.diag(factor[0])))
        quad = np.trace(cho_solve(factor, self.moment))
        return float(self.rows * (logdet + quad))

    def gradient(self, sigma2_ey: float, sigma2_eu: float) -> np.ndarray:
        """Partial derivatives with respect to the two variances."""
        factor = self._factor(sigma2_ey, sigma2_eu)
        inv = cho_solve(factor, np.eye(self.P.shape[0]))
        core = inv - inv @ self.moment @ inv
        return self.rows * np.array([np.sum(core * self.P), np.sum(core * self.Q)])

    def log_gradient(self, log_params) -> np.ndarray:
        """Gradient with respect to ``(log sigma2_ey, log sigma2_eu)``."""
        params = np.exp(np.asarray(log_params, dtype=float))
        return params * self.gradient(*params)

    def moment_seed(self) -> Tuple[float, float]:
        """Equal variances matching the total residual power."""
        total = np.trace(self.moment)
        scale = np.trace(self.P) + np.trace(self.Q)
        s = total / scale
        return s, s


def negative_log_likelihood(sigma2_ey: float, sigma2_eu: float, C: ConstraintEstimate,
                            acvf_basis: Acvf, residuals: np.ndarray) -> float:
    """``M log|Sigma_r| + sum_k r_k^T Sigma_r^{-1} r_k`` with ``M`` residual rows."""
    if sigma2_ey <= 0 or sigma2_eu <= 0:
        raise ValueError("variances must be positive")
    return ResidualLikelihood(C, acvf_basis, residuals)(sigma2_ey, sigma2_eu)


def estimate_variances(C: ConstraintEstimate, Z: LaggedMatrix, a_current,
                       initial: Optional[Tuple[float, float]] = None,
                       max_iter: int = 500, xtol: float = 1e-8,
                       acvf_basis: Optional[Acvf] = None) -> VarianceEstimate:
    """Minimize the residual negative log-likelihood over both variances.

    The search runs Nelder-Mead on log-variances, so both estimates stay
    positive. ``a_current`` fixes the output-noise correlation structure
    for the duration of the search. Without ``initial`` the search starts
    from equal variances that match the total residual power.
    """
    if acvf_basis is None:
        acvf_basis = scaled_acvf_basis(a_current, C.lag)
    residuals = compute_residuals(C, Z)
    lik = ResidualLikelihood(C, acvf_basis, residuals)
    scale = np.trace(lik.P) + np.trace(lik.Q)
    if not np.trace(lik.moment) > 1e-20 * max(scale, 1.0):
        raise DegenerateNoiseError("constraint residuals vanish; variances are not identifiable")

    seed = lik.moment_seed()
    if initial is None:
        initial = seed
    # A collapsed variance makes Sigma_eL singular; keep both well above zero.
    lower = np.log(VARIANCE_FLOOR * seed[0])
    x0 = np.maximum(np.log(np.maximum(np.asarray(initial, dtype=float), 1e-300)), lower + 0.2)

    def objective(x):
        try:
            return lik(*np.exp(x))
        except NotPositiveDefiniteError:
            return np.inf

    simplex = np.array([x0, x0 + [0.1, 0.0], x0 + [0.0, 0.1]])
    res = minimize(
        objective, x0, method="Nelder-Mead", bounds=[(lower, None)] * 2,
        options={"xatol": xtol, "fatol": 1e-10, "maxiter": max_iter,
                 "initial_simplex": simplex},
    )
    converged = bool(res.success)
    if not converged:
        try:
            converged = bool(np.linalg.norm(lik.log_gradient(res.x)) < xtol)
        except NotPositiveDefiniteError:
            pass
    s_ey, s_eu = np.exp(res.x)
    return VarianceEstimate(float(s_ey), float(s_eu), float(res.fun), int(res.nit), converged)
