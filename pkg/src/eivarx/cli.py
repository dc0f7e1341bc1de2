"""Command-line front end: ``eivarx {simulate,identify,mc,acvf,compare}``.

Exit codes: 0 success, 1 I/O failure, 2 invalid configuration or no
constraint structure found in the data.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import sys
import time
from dataclasses import asdict
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import __version__, baselines
from .errors import EivArxError, NoStructureError
from .mc_harness import PRESETS, McConfig, Scenario, preset, run_mc
from .noise_model import scaled_acvf_basis, yule_walker_acvf
from .pipeline import PipelineConfig, identify
from .signal_gen import (DifferenceEquation, NoiseSpec, corrupt_measurements, generate_prbs,
                         read_csv, register_for_length, simulate_system, write_csv)

log = logging.getLogger("eivarx")

EXIT_IO = 1
EXIT_STRUCTURE = 2

LIST_KEYS = {"model.a", "model.b", "mc.methods", "mc.sizes"}
INT_KEYS = {"model.delay", "sim.n", "sim.prbs_bits", "pipeline.lag", "mc.replications",
            "mc.base_seed", "mc.workers", "seed"}
FLOAT_KEYS = {"noise.sigma2_ey", "noise.sigma2_eu", "noise.snr_y", "noise.snr_u",
              "pipeline.alpha"}
KNOWN_KEYS = LIST_KEYS | INT_KEYS | FLOAT_KEYS


class ConfigError(ValueError):
    pass


class Config:
    """Parsed key-value configuration that remembers where each key came from."""

    def __init__(self, values: Dict[str, object], where: Dict[str, str]):
        self.values = values
        self.where = where

    def get(self, key, default=None):
        return self.values.get(key, default)

    def require(self, key):
        if key not in self.values:
            raise ConfigError(f"missing required key {key!r}")
        return self.values[key]

    def fail(self, key, message) -> ConfigError:
        return ConfigError(f"{self.where.get(key, key)}: {message}")


def _convert(key: str, raw, where: str):
    try:
        if key in LIST_KEYS:
            if isinstance(raw, list):
                items = raw
            else:
                items = [t.strip() for t in str(raw).split(",") if t.strip()]
            if key == "mc.methods":
                return [str(t) for t in items]
            if key == "mc.sizes":
                return [int(t) for t in items]
            return [float(t) for t in items]
        if key in INT_KEYS:
            value = float(raw)
            if value != int(value):
                raise ValueError("not an integer")
            return int(value)
        return float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: cannot parse {key} = {raw!r}") from None


def _flatten(obj, prefix="") -> Dict[str, object]:
    out = {}
    for key, value in obj.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(_flatten(value, name + "."))
        else:
            out[name] = value
    return out


def parse_config(text: str, source: str = "<config>") -> Config:
    """Parse flat ``key = value`` lines (``#`` comments) or a JSON object."""
    values: Dict[str, object] = {}
    where: Dict[str, str] = {}
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{source}:{exc.lineno}: invalid JSON: {exc.msg}") from None
        for key, raw in _flatten(data).items():
            loc = f"{source}: key {key}"
            if key not in KNOWN_KEYS:
                raise ConfigError(f"{loc}: unknown key")
            values[key] = _convert(key, raw, loc)
            where[key] = loc
        return Config(values, where)

    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        loc = f"{source}:{lineno}"
        if "=" not in line:
            raise ConfigError(f"{loc}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{loc}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{loc}: duplicate key {key!r} (first set at {where[key]})")
        values[key] = _convert(key, raw, loc)
        where[key] = loc
    return Config(values, where)


def load_config(path) -> Config:
    return parse_config(Path(path).read_text(), str(path))


def model_from_config(cfg: Config) -> DifferenceEquation:
    a = cfg.get("model.a", [])
    b = cfg.require("model.b")
    delay = cfg.get("model.delay", 0)
    try:
        model = DifferenceEquation(a, b, delay)
    except ValueError as exc:
        raise cfg.fail("model.b", str(exc)) from None
    if not model.is_stable():
        raise cfg.fail("model.a", f"unstable AR polynomial {list(a)}")
    return model


def scenario_from_config(cfg: Config, noise: Optional[NoiseSpec] = None) -> Scenario:
    model = model_from_config(cfg)
    n = cfg.require("sim.n")
    if n <= 0:
        raise cfg.fail("sim.n", "sim.n must be positive")
    bits = cfg.get("sim.prbs_bits")
    if bits is not None and not 2 <= bits <= 31:
        raise cfg.fail("sim.prbs_bits", "register length must lie in [2, 31]")
    if noise is None:
        try:
            noise = NoiseSpec(cfg.require("noise.sigma2_ey"), cfg.require("noise.sigma2_eu"))
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise cfg.fail("noise.sigma2_ey", str(exc)) from None
    return Scenario(model, noise, n, bits)


def pipeline_from_config(cfg: Config, lag=None, alpha=None) -> PipelineConfig:
    lag = lag if lag is not None else cfg.get("pipeline.lag", 5)
    alpha = alpha if alpha is not None else cfg.get("pipeline.alpha", 0.05)
    try:
        return PipelineConfig(lag=lag, alpha=alpha)
    except ValueError as exc:
        raise cfg.fail("pipeline.lag", str(exc)) from None


def write_manifest(path: Path, subcommand: str, config: dict, inputs: List[str],
                   outputs: List[str], seed) -> Path:
    manifest = {
        "subcommand": subcommand,
        "config": config,
        "inputs": inputs,
        "outputs": outputs,
        "seed": seed,
        "version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "argv": sys.argv[1:],
    }
    path.write_text(json.dumps(manifest, indent=2, default=_jsonable) + "\n")
    return path


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _manifest_path(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


def _snr_variances(cfg: Config, model: DifferenceEquation, y_star, u_star) -> NoiseSpec:
    """Variances that hit the requested SNRs on the simulated noise-free signals."""
    s2_ey = cfg.get("noise.sigma2_ey")
    s2_eu = cfg.get("noise.sigma2_eu")
    if cfg.get("noise.snr_y") is not None:
        snr_y = cfg.get("noise.snr_y")
        if snr_y <= 0:
            raise cfg.fail("noise.snr_y", "SNR must be positive")
        unit = scaled_acvf_basis(model.a, 0)[0]
        s2_ey = float(np.var(y_star)) / (snr_y * unit)
    if cfg.get("noise.snr_u") is not None:
        snr_u = cfg.get("noise.snr_u")
        if snr_u <= 0:
            raise cfg.fail("noise.snr_u", "SNR must be positive")
        s2_eu = float(np.var(u_star)) / snr_u
    if s2_ey is None or s2_eu is None:
        raise ConfigError("noise needs sigma2_ey/sigma2_eu or snr_y/snr_u for both channels")
    return NoiseSpec(s2_ey, s2_eu)


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.get("seed")
    if seed is None:
        seed = time.time_ns() % (2 ** 32)
        log.warning("no --seed given; using time-derived seed %d", seed)
    model = model_from_config(cfg)
    n = cfg.require("sim.n")
    if n <= 0:
        raise cfg.fail("sim.n", "sim.n must be positive")
    bits = cfg.get("sim.prbs_bits") or register_for_length(n)
    ss = np.random.SeedSequence(seed)
    prbs_seed, noise_seed = (int(c.generate_state(1)[0]) for c in ss.spawn(2))
    needs_snr = cfg.get("noise.snr_y") is not None or cfg.get("noise.snr_u") is not None
    if not needs_snr:
        scenario = scenario_from_config(cfg)
        series = scenario.simulate(seed)
        noise = scenario.noise
    else:
        u_star = generate_prbs(bits, n, prbs_seed)
        y_star = simulate_system(model, u_star)
        noise = _snr_variances(cfg, model, y_star, u_star)
        series = corrupt_measurements(y_star, u_star, model, noise, noise_seed)
    out = Path(args.out)
    write_csv(series, out)
    resolved = {k: v for k, v in cfg.values.items()}
    resolved.update({"noise.sigma2_ey": noise.sigma2_ey, "noise.sigma2_eu": noise.sigma2_eu,
                     "sim.prbs_bits": bits})
    write_manifest(_manifest_path(out), "simulate", resolved, [str(args.config)], [str(out)], seed)
    print(f"wrote {len(series)} samples to {out}")
    return 0


def _load_series(path):
    try:
        return read_csv(path)
    except (OSError, ValueError, KeyError) as exc:
        raise OSError(f"cannot read dataset {path}: {exc}") from None


def cmd_identify(args) -> int:
    series = _load_series(args.data)
    config = PipelineConfig(lag=args.lag, alpha=args.alpha)
    try:
        report = identify(series, config)
    except NoStructureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STRUCTURE
    result = report.to_dict()
    text = json.dumps(result, indent=2, default=_jsonable) + "\n"
    if args.out:
        out = Path(args.out)
        out.write_text(text)
        write_manifest(_manifest_path(out), "identify", asdict(config), [str(args.data)],
                       [str(out)], config.seed)
    else:
        sys.stdout.write(text)
    return 0


def _mc_configs(args) -> Tuple[List[McConfig], dict]:
    if args.preset:
        if args.seed is None:
            raise ConfigError("mc requires --seed")
        configs = preset(args.preset, args.replications or 100, args.seed)
        for c in configs:
            c.workers = args.workers
        return configs, {"preset": args.preset, "replications": configs[0].replications,
                         "base_seed": args.seed}
    if not args.config:
        raise ConfigError("mc needs --config or --preset")
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.get("mc.base_seed")
    if seed is None:
        raise ConfigError("mc requires --seed or mc.base_seed")
    reps = args.replications or cfg.get("mc.replications", 100)
    methods = tuple(cfg.get("mc.methods", ["proposed"]))
    pipe = pipeline_from_config(cfg)
    base = scenario_from_config(cfg)
    sizes = cfg.get("mc.sizes") or [base.n]
    configs = []
    for n in sizes:
        sc = Scenario(base.model, base.noise, n, base.prbs_bits if n == base.n else None)
        try:
            configs.append(McConfig(sc, reps, seed, methods, pipe, workers=args.workers))
        except ValueError as exc:
            raise cfg.fail("mc.methods", str(exc)) from None
    resolved = dict(cfg.values)
    resolved.update({"mc.base_seed": seed, "mc.replications": reps})
    return configs, resolved


def cmd_mc(args) -> int:
    configs, resolved = _mc_configs(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for cfg in configs:
        summary = run_mc(cfg)
        stem = f"summary_N{cfg.scenario.n}"
        summary.write_csv(out / f"{stem}.csv")
        summary.write_json(out / f"{stem}.json")
        written += [str(out / f"{stem}.csv"), str(out / f"{stem}.json")]
        print(f"N={cfg.scenario.n}: {len(summary.seeds)} replicates, failures "
              f"{ {m: len(f) for m, f in summary.failures.items()} }")
        for row in summary.rows():
            print(f"  {row['method']:<11} {row['parameter']:<10} true={row['true']:<8.4g} "
                  f"mean={row['mean']:<10.4f} 2sigma={row['two_sigma']:.4f}")
    write_manifest(out / "manifest.json", "mc", resolved,
                   [str(args.config)] if args.config else [], written, configs[0].base_seed)
    return 0


def _parse_floats(text: str) -> List[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def cmd_acvf(args) -> int:
    try:
        a = _parse_floats(args.a)
    except ValueError:
        raise ConfigError(f"--a: cannot parse {args.a!r}") from None
    acvf = yule_walker_acvf(a, args.sigma2, args.max_lag)
    print("lag,acvf")
    for lag, value in enumerate(acvf.values):
        print(f"{lag},{value + 0.0:.6g}")
    return 0


def cmd_compare(args) -> int:
    series = _load_series(args.data)
    config = PipelineConfig(lag=args.lag, alpha=args.alpha)
    results = {}
    eta = args.eta
    try:
        report = identify(series, config)
        results["proposed"] = report.to_dict()
        eta = eta or report.eta_hat
    except NoStructureError as exc:
        results["proposed"] = {"error": str(exc)}
        if eta is None:
            print(f"error: {exc}; pass --eta to run the baselines", file=sys.stderr)
            return EXIT_STRUCTURE

    def pack(res):
        a, b = res.model.padded(max(eta, res.model.eta))
        out = {"a": a.tolist(), "b": b.tolist()}
        if res.variances is not None:
            out.update(sigma2_ey=res.variances.sigma2_ey, sigma2_eu=res.variances.sigma2_eu)
        return out

    results["dpca"] = pack(baselines.dpca(series, eta))
    results["dipca_diag"] = pack(baselines.dipca_diag(series, eta, config=config))
    n_y = args.n_y if args.n_y is not None else eta
    n_u = args.n_u if args.n_u is not None else eta
    results["ols_arx"] = pack(baselines.ols_arx(series, n_y, n_u, args.delay))
    text = json.dumps(results, indent=2, default=_jsonable) + "\n"
    if args.out:
        out = Path(args.out)
        out.write_text(text)
        write_manifest(_manifest_path(out), "compare",
                       {**asdict(config), "eta": eta, "n_y": n_y, "n_u": n_u, "delay": args.delay},
                       [str(args.data)], [str(out)], config.seed)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eivarx", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--version", action="version", version=f"eivarx {__version__}")
        return p

    p = add("simulate", "simulate a noisy PRBS-driven dataset")
    p.add_argument("config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_simulate)

    p = add("identify", "identify order, delay, variances and coefficients from a CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--lag", type=int, default=5)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out")
    p.set_defaults(func=cmd_identify)

    p = add("mc", "run a seeded Monte Carlo study")
    p.add_argument("config", nargs="?")
    p.add_argument("--preset", choices=PRESETS)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--replications", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_mc)

    p = add("acvf", "print the output-noise autocovariance of an AR polynomial")
    p.add_argument("--a", required=True, help="comma-separated AR coefficients (may be empty)")
    p.add_argument("--sigma2", type=float, required=True)
    p.add_argument("--max-lag", type=int, default=10)
    p.set_defaults(func=cmd_acvf)

    p = add("compare", "run the proposed method and the baselines on one dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--lag", type=int, default=5)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--eta", type=int)
    p.add_argument("--n-y", type=int)
    p.add_argument("--n-u", type=int)
    p.add_argument("--delay", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, EivArxError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STRUCTURE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
