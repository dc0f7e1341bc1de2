"""Seeded Monte Carlo replications of simulate -> corrupt -> estimate."""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import baselines
from .errors import EivArxError
from .pipeline import PipelineConfig, _refine, identify
from .lagged_data import sample_covariance, stack
from .signal_gen import DifferenceEquation, NoiseSpec, TimeSeriesPair, simulate_dataset

log = logging.getLogger(__name__)

METHODS = ("proposed", "known_noise") + baselines.METHODS


@dataclass
class Scenario:
    model: DifferenceEquation
    noise: NoiseSpec
    n: int
    prbs_bits: Optional[int] = None
    levels: Tuple[float, float] = (-1.0, 1.0)

    def simulate(self, seed: int) -> TimeSeriesPair:
        return simulate_dataset(self.model, self.noise, self.n, seed, self.prbs_bits, self.levels)


@dataclass
class McConfig:
    """Monte Carlo study. Replicate ``r`` uses seed ``base_seed + r`` unless
    ``seeds`` lists them explicitly."""

    scenario: Scenario
    replications: int = 100
    base_seed: int = 0
    methods: Sequence[str] = ("proposed",)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    dipca_lag: Optional[int] = None
    workers: int = 1
    seeds: Optional[Sequence[int]] = None

    def __post_init__(self):
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown method(s) {sorted(unknown)}; choose from {METHODS}")
        if self.seeds is not None:
            self.replications = len(self.seeds)
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not self.scenario.model.is_stable():
            raise ValueError("scenario model is not stable")

    def seed_list(self) -> List[int]:
        if self.seeds is not None:
            return [int(s) for s in self.seeds]
        return [self.base_seed + r for r in range(self.replications)]


def true_parameters(method: str, scenario: Scenario) -> Dict[str, float]:
    model, noise = scenario.model, scenario.noise
    out: Dict[str, float] = {}
    if method == "ols_arx":
        out["sigma2_ey"] = noise.sigma2_ey
        out.update({f"a{i + 1}": v for i, v in enumerate(model.a)})
        out.update({f"b{model.delay + j}": v for j, v in enumerate(model.b)})
        return out
    if method in ("proposed", "dipca_diag"):
        out["sigma2_ey"] = noise.sigma2_ey
        out["sigma2_eu"] = noise.sigma2_eu
    a, b = model.padded()
    out.update({f"a{i + 1}": v for i, v in enumerate(a)})
    out.update({f"b{j}": v for j, v in enumerate(b)})
    return out


def _coefficient_dict(model: DifferenceEquation, eta: int) -> Dict[str, float]:
    a, b = model.padded(eta)
    out = {f"a{i + 1}": float(v) for i, v in enumerate(a)}
    out.update({f"b{j}": float(v) for j, v in enumerate(b)})
    return out


@dataclass
class ReplicateResult:
    index: int
    seed: int
    estimates: Dict[str, Dict[str, float]] = field(default_factory=dict)
    eta_hat: Optional[int] = None
    delay_hat: Optional[int] = None
    eigenvalues: Optional[List[float]] = None
    refine_min_eigenvalue: Optional[float] = None
    errors: Dict[str, str] = field(default_factory=dict)


def run_replicate(config: McConfig, index: int, seed: int) -> ReplicateResult:
    sc = config.scenario
    eta = sc.model.eta
    series = sc.simulate(seed)
    out = ReplicateResult(index, seed)
    for method in config.methods:
        try:
            if method == "proposed":
                rep = identify(series, config.pipeline)
                out.eta_hat = rep.eta_hat
                out.delay_hat = rep.delay_hat
                out.eigenvalues = rep.eigenvalues_for(rep.d_hat).tolist()
                out.refine_min_eigenvalue = rep.smallest_refine_eigenvalue
                if rep.eta_hat != eta:
                    out.errors[method] = f"order miss: eta_hat={rep.eta_hat}"
                    continue
                est = {"sigma2_ey": rep.variances.sigma2_ey, "sigma2_eu": rep.variances.sigma2_eu}
                est.update(_coefficient_dict(rep.model, eta))
            elif method == "known_noise":
                S = sample_covariance(stack(series, eta))
                ref = _refine(S, eta, sc.noise.sigma2_ey, sc.noise.sigma2_eu, np.zeros(eta),
                              config.pipeline)
                est = _coefficient_dict(ref.model, eta)
            elif method == "dpca":
                est = _coefficient_dict(baselines.dpca(series, eta).model, eta)
            elif method == "dipca_diag":
                lag = config.dipca_lag or (config.pipeline.lag if config.pipeline.lag > eta else eta + 3)
                res = baselines.dipca_diag(series, eta, lag, config.pipeline)
                est = {"sigma2_ey": res.variances.sigma2_ey, "sigma2_eu": res.variances.sigma2_eu}
                est.update(_coefficient_dict(res.model, eta))
            else:
                m = sc.model
                res = baselines.ols_arx(series, m.n_y, m.n_u, m.delay)
                est = {"sigma2_ey": res.variances.sigma2_ey}
                est.update({f"a{i + 1}": float(v) for i, v in enumerate(res.model.a)})
                est.update({f"b{m.delay + j}": float(v) for j, v in enumerate(res.model.b)})
        except (EivArxError, np.linalg.LinAlgError, ValueError) as exc:
            log.warning("replicate %d (seed %d) %s failed: %s", index, seed, method, exc)
            out.errors[method] = f"{type(exc).__name__}: {exc}"
            continue
        out.estimates[method] = est
    return out


def _two_sigma(values: np.ndarray) -> float:
    if values.size < 2:
        return float("nan")
    return float(2.0 * np.std(values, ddof=1))


@dataclass
class McSummary:
    """Per-method, per-parameter mean and 2-sigma over successful replicates."""

    config: dict
    seeds: List[int]
    stats: Dict[str, Dict[str, Dict[str, float]]]
    failures: Dict[str, List[Tuple[int, str]]]
    order_recovery: Optional[float]
    eigenvalue_mean: Optional[List[float]]
    eigenvalue_two_sigma: Optional[List[float]]
    refine_min_eigenvalue_mean: Optional[float]
    replicates: List[ReplicateResult] = field(repr=False, default_factory=list)

    def mean(self, method: str, parameter: str) -> float:
        return self.stats[method][parameter]["mean"]

    def two_sigma(self, method: str, parameter: str) -> float:
        return self.stats[method][parameter]["two_sigma"]

    def failure_count(self, method: str) -> int:
        return len(self.failures.get(method, []))

    def rows(self) -> List[dict]:
        out = []
        for method, params in self.stats.items():
            for name, s in params.items():
                out.append({"method": method, "parameter": name, "true": s["true"],
                            "mean": s["mean"], "two_sigma": s["two_sigma"]})
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, ["method", "parameter", "true", "mean", "two_sigma"],
                                    lineterminator="\n")
            writer.writeheader()
            for row in self.rows():
                writer.writerow({k: (f"{v:.12g}" if isinstance(v, float) else v)
                                 for k, v in row.items()})

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "seeds": self.seeds,
            "rows": self.rows(),
            "failures": {m: [list(f) for f in fs] for m, fs in self.failures.items()},
            "order_recovery": self.order_recovery,
            "eigenvalue_mean": self.eigenvalue_mean,
            "eigenvalue_two_sigma": self.eigenvalue_two_sigma,
            "refine_min_eigenvalue_mean": self.refine_min_eigenvalue_mean,
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, default=_json_default)
            fh.write("\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def config_dict(config: McConfig) -> dict:
    sc = config.scenario
    return {
        "model": {"a": sc.model.a.tolist(), "b": sc.model.b.tolist(), "delay": sc.model.delay},
        "noise": asdict(sc.noise),
        "n": sc.n,
        "prbs_bits": sc.prbs_bits,
        "levels": list(sc.levels),
        "replications": config.replications,
        "base_seed": config.base_seed,
        "methods": list(config.methods),
        "pipeline": asdict(config.pipeline),
        "dipca_lag": config.dipca_lag,
    }


def summarize(config: McConfig, results: Sequence[ReplicateResult]) -> McSummary:
    results = sorted(results, key=lambda r: r.index)
    stats: Dict[str, Dict[str, Dict[str, float]]] = {}
    failures: Dict[str, List[Tuple[int, str]]] = {}
    for method in config.methods:
        truth = true_parameters(method, config.scenario)
        ok = [r.estimates[method] for r in results if method in r.estimates]
        failures[method] = [(r.seed, r.errors[method]) for r in results if method in r.errors]
        if not ok:
            continue
        stats[method] = {}
        for name, true_value in truth.items():
            values = np.array([e[name] for e in ok])
            stats[method][name] = {"true": float(true_value), "mean": float(values.mean()),
                                   "two_sigma": _two_sigma(values), "count": int(values.size)}
    if not stats:
        raise EivArxError("every Monte Carlo replicate failed")

    order_recovery = eig_mean = eig_2s = refine_mean = None
    if "proposed" in config.methods:
        eta = config.scenario.model.eta
        order_recovery = sum(r.eta_hat == eta for r in results) / len(results)
        eig = [r.eigenvalues for r in results if r.eta_hat == eta and r.eigenvalues is not None]
        if eig:
            eig = np.array(eig)
            eig_mean = eig.mean(axis=0).tolist()
            eig_2s = [_two_sigma(col) for col in eig.T]
        mins = [r.refine_min_eigenvalue for r in results if r.refine_min_eigenvalue is not None]
        if mins:
            refine_mean = float(np.mean(mins))
    return McSummary(config_dict(config), [r.seed for r in results], stats, failures,
                     order_recovery, eig_mean, eig_2s, refine_mean, list(results))


def _run_one(args):
    config, index, seed = args
    return run_replicate(config, index, seed)


def run_mc(config: McConfig) -> McSummary:
    """Run every replicate and aggregate; results do not depend on execution order."""
    seeds = config.seed_list()
    if len(seeds) < 2:
        log.warning("fewer than two replicates: only means are reported")
    jobs = [(config, i, s) for i, s in enumerate(seeds)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(job) for job in jobs]
    return summarize(config, results)


def eigenvalue_summary(config: McConfig, sizes: Optional[Sequence[int]] = None,
                       tail: int = 6) -> Dict[int, dict]:
    """Mean and 2-sigma of the trailing converged eigenvalues for each sample size."""
    sizes = [config.scenario.n] if sizes is None else list(sizes)
    table = {}
    for n in sizes:
        sc = Scenario(config.scenario.model, config.scenario.noise, n,
                      None if sizes != [config.scenario.n] else config.scenario.prbs_bits,
                      config.scenario.levels)
        cfg = McConfig(sc, config.replications, config.base_seed, ("proposed",), config.pipeline,
                       workers=config.workers, seeds=config.seeds)
        summary = run_mc(cfg)
        if summary.eigenvalue_mean is None:
            raise EivArxError(f"no successful replicate at N={n}")
        table[n] = {
            "mean": summary.eigenvalue_mean[-tail:],
            "two_sigma": summary.eigenvalue_two_sigma[-tail:],
            "order_recovery": summary.order_recovery,
        }
    return table


EXAMPLE1 = DifferenceEquation([-1.5, 0.7], [1.0, 0.5], 1)
EXAMPLE2 = DifferenceEquation([-1.1, 0.7], [1.0, 0.5], 2)


def preset(name: str, replications: int = 100, base_seed: int = 0) -> List[McConfig]:
    """Ready-made studies mirroring the reference comparison tables."""
    ex1_noise = NoiseSpec(0.2, 0.1)
    if name == "table1":
        return [McConfig(Scenario(EXAMPLE1, ex1_noise, 4095), replications, base_seed,
                         ("dpca", "dipca_diag"), PipelineConfig(lag=5))]
    if name == "table2":
        return [McConfig(Scenario(EXAMPLE1, ex1_noise, 4095), replications, base_seed,
                         ("dipca_diag", "known_noise"), PipelineConfig(lag=5))]
    if name == "example1":
        return [McConfig(Scenario(EXAMPLE1, ex1_noise, 1023), replications, base_seed,
                         ("proposed",), PipelineConfig(lag=5))]
    if name == "table7":
        return [McConfig(Scenario(EXAMPLE1, ex1_noise, n), replications, base_seed,
                         ("proposed",), PipelineConfig(lag=5)) for n in (511, 4095, 8191)]
    if name == "table8":
        return [McConfig(Scenario(EXAMPLE2, NoiseSpec(0.15, 0.1), 4095), replications, base_seed,
                         ("ols_arx", "proposed"), PipelineConfig(lag=6))]
    if name == "table9":
        return [McConfig(Scenario(EXAMPLE2, NoiseSpec(0.15, 0.01), 4095), replications, base_seed,
                         ("ols_arx", "proposed"), PipelineConfig(lag=6))]
    raise ValueError(f"unknown preset {name!r}; choose from {PRESETS}")


PRESETS = ("table1", "table2", "example1", "table7", "table8", "table9")
