"""Reference estimators used in the comparison tables.

``dpca`` ignores noise structure entirely, ``dipca_diag`` scales by a
diagonal error covariance (white output error), and ``ols_arx`` is plain
least squares that treats the input as noise-free. All three are handed
the true structural information (order, or orders and delay).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .constraint_est import eigendecompose
from .lagged_data import sample_covariance, stack
from .pipeline import PipelineConfig, _refine, inner_iteration
from .signal_gen import DifferenceEquation, TimeSeriesPair
from .variance_est import VarianceEstimate

METHODS = ("dpca", "dipca_diag", "ols_arx")


@dataclass
class BaselineResult:
    method: str
    model: DifferenceEquation
    variances: Optional[VarianceEstimate] = None
    diagnostics: dict = field(default_factory=dict)


def dpca(series: TimeSeriesPair, eta: int) -> BaselineResult:
    """Minor eigenvector of the unscaled lag-``eta`` covariance."""
    S = sample_covariance(stack(series, eta))
    eigen = eigendecompose(S)
    model = DifferenceEquation.from_theta(eigen.eigenvectors[:, -1])
    return BaselineResult("dpca", model, diagnostics={"eigenvalues": eigen.eigenvalues})


def dipca_diag(series: TimeSeriesPair, eta: int, lag: Optional[int] = None,
               config: Optional[PipelineConfig] = None) -> BaselineResult:
    """Iterative PCA that assumes a diagonal error covariance.

    Variances come from the residual likelihood at a larger ``lag``
    (default ``eta + 3``) with the output error modelled as white; the
    coefficients then come from the lag-``eta`` minor eigenvector scaled by
    ``diag(sigma2_vy I, sigma2_eu I)``.
    """
    lag = eta + 3 if lag is None else lag
    base = config or PipelineConfig(lag=max(lag, 2))
    cfg = PipelineConfig(**{**base.__dict__, "lag": lag, "noise_structure": "diagonal"})
    Z = stack(series, lag)
    inner = inner_iteration(Z, lag - eta + 1, cfg)
    v = inner.variances
    ref = _refine(sample_covariance(stack(series, eta)), eta, v.sigma2_ey, v.sigma2_eu,
                  np.zeros(eta), cfg)
    return BaselineResult(
        "dipca_diag", ref.model, v,
        diagnostics={"eigenvalues": ref.eigenvalues, "converged": inner.converged and ref.converged,
                     "search_eigenvalues": inner.eigen.eigenvalues},
    )


def ols_arx(series: TimeSeriesPair, n_y: int, n_u: int, delay: int) -> BaselineResult:
    """Least-squares ARX fit; the residual variance estimates ``sigma2_ey``."""
    if n_u < delay:
        raise ValueError("n_u must be >= delay")
    y, u = series.y, series.u
    start = max(n_y, n_u)
    n = y.size
    cols = [-y[start - i : n - i] for i in range(1, n_y + 1)]
    cols += [u[start - j : n - j] for j in range(delay, n_u + 1)]
    X = np.column_stack(cols)
    target = y[start:]
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise np.linalg.LinAlgError("regressor matrix is rank deficient")
    coef, *_ = np.linalg.lstsq(X, target, rcond=None)
    resid = target - X @ coef
    dof = target.size - X.shape[1]
    sigma2 = float(resid @ resid / dof)
    model = DifferenceEquation(coef[:n_y], coef[n_y:], delay)
    return BaselineResult(
        "ols_arx", model, VarianceEstimate(sigma2, float("nan"), float("nan"), 0, True),
        diagnostics={"residual_dof": dof},
    )
