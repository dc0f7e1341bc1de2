"""Choice of the number of constraints by testing equality of minor eigenvalues.

The statistic is Bartlett's likelihood-ratio test that the ``q`` smallest
eigenvalues of a covariance matrix are equal,

    T = n * (q * ln(mean(lambda)) - sum(ln(lambda))),

referred to a chi-square law with ``(q - 1)(q + 2) / 2`` degrees of freedom.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Sequence, Tuple

import numpy as np
from scipy.stats import chi2

from .errors import NoStructureError, WrongOrderError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EigenEqualityTest:
    d_guess: int
    statistic: float
    dof: int
    critical_value: float
    alpha: float
    reject: bool
    mean_eigenvalue: float = float("nan")
    note: str = ""

    def as_dict(self) -> dict:
        return {
            "d_guess": self.d_guess,
            "statistic": self.statistic,
            "dof": self.dof,
            "critical": self.critical_value,
            "alpha": self.alpha,
            "reject": self.reject,
            "mean_eigenvalue": self.mean_eigenvalue,
            "note": self.note,
        }


def equality_dof(q: int) -> int:
    return (q - 1) * (q + 2) // 2


def equality_test(eigenvalues: Sequence[float], d_guess: int, row_count: int,
                  alpha: float = 0.05) -> EigenEqualityTest:
    """Test that the ``d_guess`` smallest entries of ``eigenvalues`` are equal.

    ``eigenvalues`` may be the full spectrum or just its tail; only the
    ``d_guess`` smallest values are used.
    """
    if d_guess < 2:
        raise ValueError("equality test needs d_guess >= 2")
    lam = np.sort(np.asarray(eigenvalues, dtype=float))[:d_guess]
    if lam.size < d_guess:
        raise ValueError(f"only {lam.size} eigenvalues for d_guess={d_guess}")
    if np.any(lam <= 0):
        raise ValueError("tail eigenvalues must be positive")
    mean = float(lam.mean())
    stat = float(row_count * (d_guess * np.log(mean) - np.sum(np.log(lam))))
    stat = max(stat, 0.0)
    dof = equality_dof(d_guess)
    crit = float(chi2.ppf(1.0 - alpha, dof))
    return EigenEqualityTest(d_guess, stat, dof, crit, alpha, stat > crit, mean)


@dataclass
class OrderSearch:
    d_hat: int
    eta_hat: int
    tests: List[EigenEqualityTest] = field(default_factory=list)
    results: dict = field(default_factory=dict)


def select_order(hook: Callable[[int], Tuple[np.ndarray, int, object]], lag: int,
                 alpha: float = 0.05) -> OrderSearch:
    """Walk ``d_guess`` down from ``lag`` until the equality test accepts.

    ``hook(d_guess)`` runs the converged inner iteration and returns
    ``(eigenvalues, row_count, payload)``; payloads are kept per guess in
    ``OrderSearch.results``. A :class:`WrongOrderError` from the hook counts
    as a rejection.
    """
    if lag < 1:
        raise ValueError("lag must be >= 1")
    search = OrderSearch(0, 0)
    for d_guess in range(lag, 1, -1):
        try:
            eigenvalues, rows, payload = hook(d_guess)
        except WrongOrderError as exc:
            log.debug("d_guess=%d rejected structurally: %s", d_guess, exc)
            search.tests.append(EigenEqualityTest(
                d_guess, float("inf"), equality_dof(d_guess),
                float(chi2.ppf(1.0 - alpha, equality_dof(d_guess))), alpha, True,
                note=str(exc),
            ))
            continue
        search.results[d_guess] = payload
        test = equality_test(eigenvalues, d_guess, rows, alpha)
        search.tests.append(test)
        log.debug("d_guess=%d T=%.4g crit=%.4g reject=%s", d_guess, test.statistic,
                  test.critical_value, test.reject)
        if not test.reject:
            search.d_hat = d_guess
            search.eta_hat = lag - d_guess + 1
            return search
    raise NoStructureError(
        f"no constraint structure found for lag {lag}: every d_guess in [2, {lag}] was rejected"
    )
