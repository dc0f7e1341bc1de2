"""End-to-end identification of EIV-ARX models.

The search stacks the data at a generous lag ``L`` and, for each guess of
the number of constraints ``d`` (starting at ``L``), alternates between

1. scaling the sample covariance by the current error covariance,
   extracting the ``d`` minor eigenvectors and rotating them into the
   shifted-row constraint structure, and
2. re-estimating both noise variances by maximum likelihood on the
   constraint residuals and rebuilding the error covariance through the
   Yule-Walker ACVF of the current AR estimate,

until both coefficients and variances settle. The first guess whose
minor eigenvalues pass the equality test fixes ``d`` and hence the order
``eta = L - d + 1``. A final pass re-stacks at lag ``eta`` and takes the
single minor eigenvector of the scaled covariance, iterating the AR part
of the error covariance with the variances held fixed.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Union

import numpy as np

from .constraint_est import (ConstraintEstimate, EigenResult, average_coefficients,
                             eigendecompose, recover_constraints)
from .errors import ConvergenceError
from .lagged_data import LaggedMatrix, SampleCovariance, sample_covariance, scale_covariance, stack
from .noise_model import (CovarianceModel, build_covariance, project_stable,
                          scaled_acvf_basis)
from .order_select import EigenEqualityTest, select_order
from .signal_gen import DifferenceEquation, TimeSeriesPair
from .variance_est import VarianceEstimate, estimate_variances

log = logging.getLogger(__name__)

NOISE_FREE_TOL = 1e-12
STRUCTURES = ("arx", "diagonal")


@dataclass
class PipelineConfig:
    """Tuning knobs for :func:`identify`.

    ``noise_structure`` selects the output-noise covariance model: ``"arx"``
    propagates the AR estimate through Yule-Walker, ``"diagonal"`` treats
    the output error as white.
    """

    lag: int = 5
    alpha: float = 0.05
    max_outer_iter: int = 100
    tol_theta: float = 1e-6
    tol_var: float = 1e-6
    zero_threshold: float = 2.0
    seed: int = 0
    noise_structure: str = "arx"
    jackknife_segments: int = 10
    center: bool = False

    def __post_init__(self):
        if self.lag < 2:
            raise ValueError("lag must be at least 2")
        if self.tol_theta <= 0 or self.tol_var <= 0:
            raise ValueError("tolerances must be positive")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.noise_structure not in STRUCTURES:
            raise ValueError(f"noise_structure must be one of {STRUCTURES}")
        if self.jackknife_segments < 2:
            raise ValueError("jackknife_segments must be >= 2")


@dataclass
class InnerResult:
    constraints: ConstraintEstimate
    variances: VarianceEstimate
    eigen: EigenResult
    model: DifferenceEquation
    sigma_e: Union[CovarianceModel, np.ndarray]
    iterations: int
    converged: bool
    damped: bool = False


@dataclass
class RefineResult:
    model: DifferenceEquation
    eigenvalues: np.ndarray
    iterations: int
    converged: bool


@dataclass
class IdentificationReport:
    lag: int
    eta_hat: int
    d_hat: int
    delay_hat: int
    model: DifferenceEquation
    variances: VarianceEstimate
    eigenvalue_trail: List[dict]
    test_trail: List[EigenEqualityTest]
    iterations_used: int
    converged: bool
    refine_eigenvalues: np.ndarray
    b_std_error: np.ndarray
    degenerate_noise: bool = False
    search_model: Optional[DifferenceEquation] = None

    @property
    def smallest_refine_eigenvalue(self) -> float:
        return float(self.refine_eigenvalues[-1])

    def eigenvalues_for(self, d_guess: int) -> np.ndarray:
        for entry in self.eigenvalue_trail:
            if entry["d_guess"] == d_guess:
                return np.asarray(entry["eigenvalues"])
        raise KeyError(d_guess)

    def to_dict(self) -> dict:
        a, b = self.model.padded(self.eta_hat)
        return {
            "lag": self.lag,
            "eta_hat": self.eta_hat,
            "d_hat": self.d_hat,
            "delay_hat": self.delay_hat,
            "a": a.tolist(),
            "b": b.tolist(),
            "b_std_error": np.asarray(self.b_std_error).tolist(),
            "sigma2_ey": self.variances.sigma2_ey,
            "sigma2_eu": self.variances.sigma2_eu,
            "eigenvalue_trail": [
                {"d_guess": e["d_guess"], "eigenvalues": np.asarray(e["eigenvalues"]).tolist()}
                for e in self.eigenvalue_trail
            ],
            "tests": [t.as_dict() for t in self.test_trail],
            "refine_eigenvalues": np.asarray(self.refine_eigenvalues).tolist(),
            "converged": self.converged,
            "iterations": self.iterations_used,
            "degenerate_noise": self.degenerate_noise,
        }


def _noise_basis(a, lag: int, structure: str):
    return scaled_acvf_basis(a if structure == "arx" else [], lag)


def _rel_change(new: np.ndarray, old: np.ndarray) -> float:
    return float(np.linalg.norm(new - old) / max(np.linalg.norm(old), 1e-12))


def inner_iteration(Z: LaggedMatrix, d_guess: int, config: PipelineConfig,
                    S: Optional[SampleCovariance] = None) -> InnerResult:
    """Alternate constraint and variance estimation at a fixed ``d_guess``.

    Starts from an identity error covariance. Stops once the relative
    changes of the averaged coefficients and of the two variances both drop
    below their tolerances.
    """
    lag = Z.lag
    S = sample_covariance(Z) if S is None else S
    sigma: Union[CovarianceModel, np.ndarray] = np.eye(Z.dim)
    prev_theta = prev_var = None
    objectives: List[float] = []
    rising = 0
    damped = False
    converged = False

    for it in range(1, config.max_outer_iter + 1):
        eigen = eigendecompose(scale_covariance(S, sigma))
        constraints = recover_constraints(eigen, d_guess, sigma)
        model = average_coefficients(constraints)
        a_cur = project_stable(model.a)
        basis = _noise_basis(a_cur, lag, config.noise_structure)
        init = None if prev_var is None else tuple(prev_var)
        variances = estimate_variances(constraints, Z, a_cur, initial=init, acvf_basis=basis)
        new_sigma = build_covariance(basis * variances.sigma2_ey, variances.sigma2_eu, lag)

        if objectives and variances.objective_value > objectives[-1]:
            rising += 1
        else:
            rising = 0
        objectives.append(variances.objective_value)
        if rising >= 2 and not damped:
            log.debug("d_guess=%d: objective rose twice, damping covariance updates", d_guess)
            damped = True

        theta = np.concatenate((model.a, model.b))
        var = np.array([variances.sigma2_ey, variances.sigma2_eu])
        if prev_theta is not None and (
            _rel_change(theta, prev_theta) < config.tol_theta
            and _rel_change(var, prev_var) < config.tol_var
        ):
            converged = True
            break
        prev_theta, prev_var = theta, var
        if damped:
            old = sigma.matrix if isinstance(sigma, CovarianceModel) else sigma
            sigma = 0.5 * (new_sigma.matrix + old)
        else:
            sigma = new_sigma

    return InnerResult(constraints, variances, eigen, model, sigma, it, converged, damped)


def _refine(S: SampleCovariance, eta: int, sigma2_ey: float, sigma2_eu: float, a0,
            config: PipelineConfig, noise_free: bool = False) -> RefineResult:
    """Single-constraint estimate at lag ``eta`` with the variances held fixed."""
    a = project_stable(np.asarray(a0, dtype=float)[:eta])
    prev = None
    converged = False
    for it in range(1, config.max_outer_iter + 1):
        if noise_free:
            sigma = np.eye(S.dim)
            w = sigma
        else:
            basis = _noise_basis(a, eta, config.noise_structure)
            sigma = build_covariance(basis * sigma2_ey, sigma2_eu, eta)
            w = sigma.inv_sqrt
        eigen = eigendecompose(scale_covariance(S, sigma))
        theta = w @ eigen.eigenvectors[:, -1]
        model = DifferenceEquation.from_theta(theta)
        current = model.theta()
        if noise_free or (prev is not None and _rel_change(current, prev) < config.tol_theta):
            converged = True
            break
        prev = current
        a = project_stable(model.a)
    return RefineResult(model, eigen.eigenvalues, it, converged)


def refine_at_eta(series: TimeSeriesPair, eta_hat: int, variance_estimate: VarianceEstimate,
                  config: Optional[PipelineConfig] = None,
                  initial: Optional[DifferenceEquation] = None) -> DifferenceEquation:
    """Known-order estimate from the minor eigenvector of the scaled covariance.

    The AR part of the error covariance is iterated to a fixed point with the
    variances held at ``variance_estimate``. Starts from ``initial`` when
    given, otherwise from white output noise.
    """
    if eta_hat < 1:
        raise ValueError("eta_hat must be >= 1")
    if variance_estimate.sigma2_ey <= 0 or variance_estimate.sigma2_eu <= 0:
        raise ValueError("variances must be positive")
    config = config or PipelineConfig()
    S = sample_covariance(stack(series, eta_hat, config.center))
    a0 = np.zeros(eta_hat) if initial is None else initial.padded(max(eta_hat, initial.eta))[0]
    res = _refine(S, eta_hat, variance_estimate.sigma2_ey, variance_estimate.sigma2_eu, a0, config)
    if not res.converged:
        raise ConvergenceError(f"refinement did not converge in {config.max_outer_iter} iterations")
    return res.model


def _segment_covariances(Z: LaggedMatrix, segments: int):
    """Delete-one-segment covariances over contiguous blocks of rows."""
    total = Z.data.T @ Z.data
    bounds = np.linspace(0, Z.row_count, segments + 1).astype(int)
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        block = Z.data[lo:hi]
        m = (total - block.T @ block) / (Z.row_count - (hi - lo))
        yield SampleCovariance(0.5 * (m + m.T), Z.row_count - (hi - lo))


def jackknife_b_error(Z: LaggedMatrix, eta: int, sigma2_ey: float, sigma2_eu: float,
                      model: DifferenceEquation, config: PipelineConfig,
                      noise_free: bool = False) -> np.ndarray:
    """Jackknife standard error of ``b_0..b_eta`` over deleted row segments."""
    g = config.jackknife_segments
    estimates = []
    for S_g in _segment_covariances(Z, g):
        res = _refine(S_g, eta, sigma2_ey, sigma2_eu, model.padded(eta)[0], config, noise_free)
        estimates.append(res.model.padded(eta)[1])
    estimates = np.array(estimates)
    spread = estimates - estimates.mean(axis=0)
    return np.sqrt((g - 1) / g * np.sum(spread ** 2, axis=0))


def estimate_delay(b, b_std_error, zero_threshold: float) -> int:
    """Index of the first input coefficient that is significant.

    Falls back to the most significant coefficient when none clears the
    threshold.
    """
    b = np.asarray(b, dtype=float)
    se = np.maximum(np.asarray(b_std_error, dtype=float), np.finfo(float).tiny)
    ratio = np.abs(b) / se
    significant = np.flatnonzero(ratio > zero_threshold)
    if significant.size:
        return int(significant[0])
    return int(np.argmax(ratio))


def _noise_free_rank(eigenvalues: np.ndarray) -> int:
    return int(np.sum(eigenvalues <= NOISE_FREE_TOL * eigenvalues[0]))


def _identify_noise_free(series: TimeSeriesPair, Z: LaggedMatrix, E0: EigenResult,
                         config: PipelineConfig) -> IdentificationReport:
    lag = config.lag
    d_hat = min(_noise_free_rank(E0.eigenvalues), lag + 1)
    eta_hat = lag - d_hat + 1
    constraints = recover_constraints(E0, d_hat, np.eye(Z.dim))
    search_model = average_coefficients(constraints)
    eta_ref = max(eta_hat, 1)
    Z_eta = stack(series, eta_ref, config.center)
    ref = _refine(sample_covariance(Z_eta), eta_ref, 0.0, 0.0, search_model.padded(eta_ref)[0],
                  config, noise_free=True)
    # Jackknife spreads are ~0 here, so significance is judged against a
    # relative floor instead.
    _, b = ref.model.padded(eta_ref)
    se = np.full(b.size, 1e-8 * max(np.max(np.abs(b)), 1.0))
    delay = estimate_delay(b, se, config.zero_threshold)
    return IdentificationReport(
        lag=lag, eta_hat=eta_hat, d_hat=d_hat, delay_hat=delay, model=ref.model,
        variances=VarianceEstimate(0.0, 0.0, float("nan"), 0, True),
        eigenvalue_trail=[{"d_guess": d_hat, "eigenvalues": E0.eigenvalues}],
        test_trail=[], iterations_used=ref.iterations, converged=True,
        refine_eigenvalues=ref.eigenvalues, b_std_error=se, degenerate_noise=True,
        search_model=search_model,
    )


def identify(series: TimeSeriesPair, config: Optional[PipelineConfig] = None) -> IdentificationReport:
    """Estimate order, delay, noise variances and coefficients from ``series``.

    Raises :class:`~eivarx.errors.NoStructureError` when no ``d_guess`` is
    accepted. Data with (numerically) zero noise skip the likelihood step;
    the order then comes from the rank of the sample covariance and the
    report carries ``degenerate_noise=True``.
    """
    config = config or PipelineConfig()
    lag = config.lag
    if len(series) <= 4 * (lag + 1):
        raise ValueError(f"need more than {4 * (lag + 1)} samples for lag {lag}")
    Z = stack(series, lag, config.center)
    S = sample_covariance(Z)
    E0 = eigendecompose(S)
    if _noise_free_rank(E0.eigenvalues) > 0:
        return _identify_noise_free(series, Z, E0, config)

    trail: List[dict] = []

    def hook(d_guess: int):
        res = inner_iteration(Z, d_guess, config, S)
        trail.append({"d_guess": d_guess, "eigenvalues": res.eigen.eigenvalues})
        return res.eigen.eigenvalues, Z.row_count, res

    search = select_order(hook, lag, config.alpha)
    inner: InnerResult = search.results[search.d_hat]
    eta_hat = search.eta_hat
    v = inner.variances

    Z_eta = stack(series, eta_hat, config.center)
    ref = _refine(sample_covariance(Z_eta), eta_hat, v.sigma2_ey, v.sigma2_eu,
                  inner.model.a, config)
    se = jackknife_b_error(Z_eta, eta_hat, v.sigma2_ey, v.sigma2_eu, ref.model, config)
    delay = estimate_delay(ref.model.padded(eta_hat)[1], se, config.zero_threshold)
    iterations = sum(r.iterations for r in search.results.values()) + ref.iterations

    return IdentificationReport(
        lag=lag, eta_hat=eta_hat, d_hat=search.d_hat, delay_hat=delay, model=ref.model,
        variances=v, eigenvalue_trail=trail, test_trail=search.tests,
        iterations_used=iterations, converged=inner.converged and ref.converged,
        refine_eigenvalues=ref.eigenvalues, b_std_error=se, search_model=inner.model,
    )
