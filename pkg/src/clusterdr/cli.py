"""Command-line entry point.

Exit codes: 0 success, 2 bad input or configuration, 3 estimation failure,
4 internal invariant breach.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict, fields
from pathlib import Path

from . import __version__
from .data import EstimationError, InfluencePanel, ValidationError
from .dataio import emit_text, ingest
from .estimators import EstimatorSpec, SummaryConfig, estimate, with_warning
from .nuisance import DEFAULT_CLIP, FeatureMap, KnownNuisance, NuisanceMaps
from .parallel import THREADS_ENV
from .simulation import dgp as dgps
from .simulation.experiments import run_coverage_experiment, run_misspec_experiment, run_rmse_experiment
from .simulation.omega import KINDS, omega_scaling_diagnostic
from .variance import cluster_bootstrap, var_cluster_robust, var_iid, with_variance

REPORT_SCHEMA_VERSION = 1
EXIT_OK, EXIT_INPUT, EXIT_ESTIMATION, EXIT_INTERNAL = 0, 2, 3, 4
MIN_REPLICATIONS = 50


class InvariantError(RuntimeError):
    """A computed report violates a property that must always hold."""


_ESTIMATE_DEFAULTS = {
    "estimator": "dr",
    "propensity_map": "linear",
    "outcome_map": "linear",
    "folds": 2,
    "clip_epsilon": DEFAULT_CLIP,
    "variance": "cluster_robust",
    "ci_level": 0.95,
    "small_sample_correction": False,
    "summary": None,
    "known_nuisance": None,
    "bootstrap_B": 500,
    "bootstrap_mode": "fixed_nuisances",
}

DEFAULTS = {
    "estimate": _ESTIMATE_DEFAULTS,
    "bootstrap": {**_ESTIMATE_DEFAULTS, "variance": "cluster_bootstrap"},
    "simulate": {"dgp": "homogeneous", "n": 1000, "n_g": None, "dgp_params": {}},
    "mc-coverage": {"n": 10000, "alphas": [0.2, 0.4], "M": 300, "level": 0.95, "folds": 2,
                    "clip_epsilon": DEFAULT_CLIP, "dgp_params": {}},
    "mc-rmse": {"n_grid": [4000, 8000], "M": 200, "folds": 2, "clip_epsilon": DEFAULT_CLIP, "dgp_params": {}},
    "mc-misspec": {"n": 10000, "n_g": 100, "M": 200, "folds": 2, "clip_epsilon": DEFAULT_CLIP,
                   "dgp_params": {}},
    "omega-diag": {"kind": "perfect_correlation", "alpha": 0.5, "n_grid": [1000, 4000, 16000, 64000],
                   "reps": 200},
}

DGP_CLASSES = {"homogeneous": dgps.HomogeneousDgp, "quadratic": dgps.QuadraticDgp,
               "sequential": dgps.SequentialDgp}


# -- configuration ------------------------------------------------------------------

def _fail(msg: str):
    raise ValidationError(msg)


def _int(cfg, key, lo=None):
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, int):
        _fail(f"{key} must be an integer")
    if lo is not None and v < lo:
        _fail(f"{key} must be at least {lo}")
    return v


def _real(cfg, key, lo=None, hi=None, open_lo=True, open_hi=True):
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        _fail(f"{key} must be a finite number")
    if lo is not None and (v <= lo if open_lo else v < lo):
        _fail(f"{key} out of range")
    if hi is not None and (v >= hi if open_hi else v > hi):
        _fail(f"{key} out of range")
    return float(v)


def _choice(cfg, key, options):
    if cfg[key] not in options:
        _fail(f"{key} must be one of {sorted(options)}")
    return cfg[key]


def _increasing(values, key, kind=int):
    if not isinstance(values, list) or not values:
        _fail(f"{key} must be a non-empty list")
    if any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in values):
        _fail(f"{key} must contain numbers")
    if kind is int and any(not isinstance(v, int) for v in values):
        _fail(f"{key} must contain integers")
    if any(b <= a for a, b in zip(values, values[1:])):
        _fail(f"{key} must be strictly increasing")
    return [kind(v) for v in values]


def resolve_config(command: str, raw: dict, seed: int | None) -> dict:
    """Defaults overlaid with ``raw``; unknown keys are rejected."""
    if not isinstance(raw, dict):
        _fail("config must be a JSON object")
    defaults = DEFAULTS[command]
    unknown = sorted(set(raw) - set(defaults) - {"seed"})
    if unknown:
        _fail(f"unknown config key(s) for {command}: {', '.join(unknown)}")
    cfg = {**defaults, **raw}
    cfg["seed"] = seed if seed is not None else raw.get("seed", 0)
    _int(cfg, "seed", 0)
    return cfg


def _check_dgp_params(cls, params: dict):
    if not isinstance(params, dict):
        _fail("dgp_params must be an object")
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(params) - names)
    if unknown:
        _fail(f"unknown DGP parameter(s): {', '.join(unknown)}")
    tupled = {k: _as_tuple(v) for k, v in params.items()}
    try:
        return cls(**tupled)
    except TypeError as exc:
        _fail(f"bad DGP parameters: {exc}")


def _as_tuple(v):
    return tuple(_as_tuple(e) for e in v) if isinstance(v, list) else v


def _estimator_spec(cfg: dict) -> tuple[EstimatorSpec, str]:
    kind = _choice(cfg, "estimator", {"plugin", "ipw", "dr", "dr_sequential"})
    folds = _int(cfg, "folds", 2)
    clip = _real(cfg, "clip_epsilon", 0.0, 0.5)
    variance = _choice(cfg, "variance", {"none", "iid", "cluster_robust", "cluster_bootstrap"})
    _real(cfg, "ci_level", 0.0, 1.0)
    if not isinstance(cfg["small_sample_correction"], bool):
        _fail("small_sample_correction must be true or false")
    _int(cfg, "bootstrap_B", 100)
    _choice(cfg, "bootstrap_mode", {"fixed_nuisances", "refit_nuisances"})
    maps = NuisanceMaps(FeatureMap(_choice(cfg, "propensity_map", {"linear", "quadratic", "history"})),
                        FeatureMap(_choice(cfg, "outcome_map", {"linear", "quadratic", "history"})))
    summary = None
    if cfg["summary"] is not None:
        s = cfg["summary"]
        if not isinstance(s, dict) or set(s) - {"components", "window_d", "include_past_ry"}:
            _fail("summary must be an object with components, window_d, include_past_ry")
        summary = SummaryConfig(tuple(s.get("components", SummaryConfig().components)),
                                int(s.get("window_d", 1)), bool(s.get("include_past_ry", False)))
    known = None
    if cfg["known_nuisance"] is not None:
        k = cfg["known_nuisance"]
        if not isinstance(k, dict) or set(k) != {"pi", "mu"}:
            _fail("known_nuisance must be an object with constants pi and mu")
        pi = _real(k, "pi", 0.0, 1.0, open_hi=False)
        mu = _real(k, "mu")
        known = KnownNuisance(pi, mu)
    return EstimatorSpec(kind, maps, folds, clip, cfg["seed"], summary, known), variance


# -- commands -------------------------------------------------------------------------

def _estimate(cfg: dict, data: Path | None, threads: int | None) -> dict:
    spec, variance = _estimator_spec(cfg)
    if data is None:
        _fail("--data is required")
    dataset = ingest(data)
    report, fitted = estimate(dataset, spec)
    level = cfg["ci_level"]
    if spec.known is not None and spec.known.pi == 1.0 and int(dataset.r.sum()) < dataset.n:
        report = with_warning(report, "known propensity 1 is inconsistent with missing outcomes; "
                                      "missing members contribute the known outcome mean only")
    extra = {}
    if variance in ("iid", "cluster_robust"):
        panel = InfluencePanel(fitted.terms, fitted.dataset.offsets)
        if variance == "iid":
            vr = var_iid(panel, report.theta_hat)
        else:
            vr = var_cluster_robust(fitted.dataset, panel, report.theta_hat, cfg["small_sample_correction"])
        report = with_variance(report, vr, level)
    elif variance == "cluster_bootstrap":
        boot = cluster_bootstrap(dataset, spec, cfg["bootstrap_B"], cfg["bootstrap_mode"], level,
                                 cfg["seed"], threads)
        report = with_variance(report, boot.report, level)
        extra = {"bootstrap": boot.report.to_dict()}
    if not math.isfinite(report.theta_hat):
        raise InvariantError("non-finite point estimate")
    return {**report.to_dict(), **extra}


def _simulate(cfg: dict, out: Path | None) -> tuple[dict, str]:
    kind = _choice(cfg, "dgp", set(DGP_CLASSES))
    n = _int(cfg, "n", 2)
    spec = _check_dgp_params(DGP_CLASSES[kind], cfg["dgp_params"])
    n_g = None if cfg["n_g"] is None else _int(cfg, "n_g", 1)
    seed = cfg["seed"]
    if kind == "sequential":
        if n_g is not None:
            _fail("n_g is not used by the sequential DGP; set dgp_params.alpha")
        ds, truth = dgps.gen_sequential(spec, n, seed)
    else:
        draw = dgps.draw_homogeneous(spec, n, seed, (), n_g)
        ds, truth = draw.dataset, draw.truth
    text = emit_text(ds)
    report = {"dgp": kind, "dgp_params": asdict(spec), "truth": truth, "n": ds.n, "G": ds.G,
              "observed": int(ds.r.sum())}
    if out is not None:
        report["dataset_file"] = "dataset.csv"
    return report, text


def _mc(command: str, cfg: dict, threads: int | None):
    seed = cfg["seed"]
    M = _int(cfg, "M", MIN_REPLICATIONS) if "M" in cfg else None
    if "folds" in cfg:
        _int(cfg, "folds", 2)
        _real(cfg, "clip_epsilon", 0.0, 0.5)
    if command == "mc-coverage":
        spec = _check_dgp_params(dgps.HomogeneousDgp, cfg["dgp_params"])
        alphas = _increasing(cfg["alphas"], "alphas", float)
        if any(not 0.0 < a < 1.0 for a in alphas):
            _fail("alphas must lie in (0, 1)")
        return run_coverage_experiment(spec, _int(cfg, "n", 2), alphas, M, _real(cfg, "level", 0.0, 1.0),
                                       seed, threads, cfg["folds"], cfg["clip_epsilon"])
    if command == "mc-rmse":
        spec = _check_dgp_params(dgps.SequentialDgp, cfg["dgp_params"])
        n_grid = _increasing(cfg["n_grid"], "n_grid")
        if n_grid[0] < 2:
            _fail("n_grid values must be at least 2")
        return run_rmse_experiment(spec, n_grid, M, seed, threads, cfg["folds"], cfg["clip_epsilon"])
    if command == "mc-misspec":
        spec = _check_dgp_params(dgps.QuadraticDgp, cfg["dgp_params"])
        n = _int(cfg, "n", 2)
        n_g = _int(cfg, "n_g", 1)
        if n_g > n // 2:
            _fail("n_g must leave at least 2 clusters")
        return run_misspec_experiment(spec, n, n_g, M, seed, threads, cfg["folds"], cfg["clip_epsilon"])
    kind = _choice(cfg, "kind", set(KINDS))
    n_grid = _increasing(cfg["n_grid"], "n_grid")
    if len(n_grid) < 3:
        _fail("n_grid needs at least 3 points")
    return omega_scaling_diagnostic(kind, _real(cfg, "alpha", 0.0, 1.0), n_grid, _int(cfg, "reps", 2),
                                    seed, threads)


def _check_report(result) -> None:
    arms = getattr(result, "arms", None)
    if arms is not None:
        for a in arms:
            if a.replications == 0:
                raise EstimationError(f"every replication failed for arm {a.label}")
            if not math.isfinite(a.value) or a.value < 0:
                raise InvariantError(f"arm {a.label}: invalid metric {a.value}")
            if a.metric == "coverage" and a.value > 1:
                raise InvariantError(f"arm {a.label}: coverage above 1")
    else:
        for p in result.points:
            if not (math.isfinite(p.omega_mc) and p.omega_mc >= 0):
                raise InvariantError("invalid Omega estimate")


def _summary_lines(result) -> list[str]:
    if hasattr(result, "arms"):
        return [f"{a.label} x={a.x_value:g} {a.metric}={a.value:.6g} (mc_se {a.mc_se if a.mc_se is None else f'{a.mc_se:.3g}'}, "
                f"{a.replications} reps, {a.failures} failed)" for a in result.arms]
    return [f"{result.kind} n={p.n} omega={p.omega_mc:.6g} (se {p.omega_se:.3g}, theory {p.omega_theory:.6g})"
            for p in result.points] + [f"{result.kind} {result.fit} slope={result.slope:.4f} (se {result.slope_se:.3g})"]


def _dump(d: dict) -> str:
    return json.dumps(d, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _envelope(command: str, cfg: dict, body: dict) -> dict:
    return {**body, "schema_version": REPORT_SCHEMA_VERSION, "version": __version__, "command": command,
            "config": cfg, "seed": cfg["seed"]}


def _estimate_csv(report: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["estimator", "theta_hat", "variance_method", "variance", "ci_low", "ci_high"])
    ci = report["ci"] or ["", ""]
    var = "" if report["variance"] is None else repr(report["variance"])
    w.writerow([report["estimator"], repr(report["theta_hat"]), report["variance_method"], var,
                *(repr(c) if c != "" else "" for c in ci)])
    return buf.getvalue()


def run(args: argparse.Namespace) -> int:
    raw = {}
    if args.config is not None:
        try:
            raw = json.loads(Path(args.config).read_text())
        except OSError as exc:
            _fail(f"cannot read config {args.config}: {exc.strerror}")
        except json.JSONDecodeError as exc:
            _fail(f"config is not valid JSON: {exc}")
    cmd = args.command
    cfg = resolve_config(cmd, raw, args.seed)
    out = Path(args.out) if args.out is not None else None
    data = Path(args.data) if args.data is not None else None
    if args.threads is not None and args.threads < 1:
        _fail("--threads must be at least 1")

    files: dict[str, str] = {}
    if cmd in ("estimate", "bootstrap"):
        report = _envelope(cmd, cfg, _estimate(cfg, data, args.threads))
        primary = _dump(report) if args.format == "json" else _estimate_csv(report)
        summary = [f"{report['estimator']} theta_hat={report['theta_hat']:.6g}"]
        files["report.json"] = _dump(report)
    elif cmd == "simulate":
        body, dataset_text = _simulate(cfg, out)
        report = _envelope(cmd, cfg, body)
        primary = dataset_text if args.format == "csv" or out is None else _dump(report)
        summary = [f"{body['dgp']} n={body['n']} G={body['G']} observed={body['observed']} truth={body['truth']}"]
        files["dataset.csv"] = dataset_text
        files["report.json"] = _dump(report)
    else:
        result = _mc(cmd, cfg, args.threads)
        _check_report(result)
        body = result.to_dict()
        body.pop("config", None)
        report = _envelope(cmd, cfg, body)
        primary = _dump(report) if args.format == "json" else result.to_csv()
        summary = _summary_lines(result)
        files["report.json"] = _dump(report)
        files["curves.csv"] = result.to_csv()

    if out is None:
        sys.stdout.write(primary)
    else:
        out.mkdir(parents=True, exist_ok=True)
        for name, text in files.items():
            (out / name).write_text(text)
        for line in summary:
            print(line)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clusterdr", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in DEFAULTS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--data", help="dataset CSV (estimate, bootstrap)")
        p.add_argument("--out", help="output directory; reports go to stdout when absent")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int, help=f"worker threads (default: ${THREADS_ENV} or 1)")
        p.add_argument("--format", choices=("json", "csv"), default="json")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except EstimationError as exc:
        print(f"estimation failed: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    except Exception as exc:  # anything else is a bug, reported as such
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
