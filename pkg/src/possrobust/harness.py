"""Seeded, parallel experiment runner with CSV traces and JSON summaries.

Every repeat draws from its own Philox stream keyed by ``(seed, sweep
index, repeat)``, and results are reduced in repeat order, so traces are
byte-identical for any number of worker processes.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import changepoint as cp
from . import feature as ft
from . import kalman as kf
from . import scalar as sc

__all__ = [
    "ConfigError",
    "DataError",
    "ExperimentConfig",
    "EXPERIMENTS",
    "parse_config",
    "load_series",
    "make_rng",
    "run_experiment",
    "format_trace",
    "emit_plotdata",
    "write_outputs",
]

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid or unknown configuration."""


class DataError(ValueError):
    """Unreadable or malformed input data."""


@dataclass(frozen=True)
class _CPParams:
    sigma: float = 2500.0
    hazard: float = 2.5e-3
    precision_decay: float = 0.9
    tau: float | None = None
    d_eff: float = 2
    min_run: int = 5
    T: int = 4050
    n_spikes: int = 20


@dataclass(frozen=True)
class _KalmanParams:
    T: int = 250
    eps: float = 0.1
    outlier_std: float = 10.0
    d_eff: float = 2
    tau: float | None = None
    delta: float = 1.0
    sigma_a: float = 0.05
    R: float = 1.0


# experiment -> (parameter record, available methods, default methods)
EXPERIMENTS = {
    "feature": (ft.FeatureConfig, ft.METHODS, ft.METHODS),
    "kalman": (_KalmanParams, kf.METHODS, ("std-inliers", "std-all", "discount")),
    "changepoint": (_CPParams, cp.METHODS, ("std-all", "discount")),
    "normal-gamma": (sc.NGConfig, sc.NG_METHODS, sc.NG_METHODS),
    "known-precision": (sc.KnownPrecisionConfig, sc.KP_METHODS, sc.KP_METHODS),
    "soft-uniform": (sc.SUConfig, sc.SU_METHODS, sc.SU_METHODS),
}

_TOP_KEYS = {"experiment", "methods", "params", "seed", "repeats", "trace_repeats", "sweep", "data"}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    methods: tuple
    params: dict = field(default_factory=dict)
    seed: int = 0
    repeats: int = 1
    trace_repeats: int = 1
    sweep: dict | None = None
    data: str | None = None

    def record(self, **overrides):
        """Parameter record for the experiment, optionally with overrides."""
        cls = EXPERIMENTS[self.experiment][0]
        return cls(**{**self.params, **overrides})

    def sweep_values(self) -> list:
        return [None] if self.sweep is None else list(self.sweep["values"])

    def to_dict(self) -> dict:
        out = asdict(self)
        out["methods"] = list(self.methods)
        return out


def _resolve_params(experiment, params) -> dict:
    cls = EXPERIMENTS[experiment][0]
    known = {f.name for f in fields(cls)}
    unknown = set(params) - known
    if unknown:
        raise ConfigError(f"unknown {experiment} parameters: {sorted(unknown)}")
    try:
        rec = cls(**params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {experiment} parameters: {exc}") from None
    out = asdict(rec)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in out.items()}


def parse_config(source) -> ExperimentConfig:
    """Build a validated config from a JSON string, a path or a mapping.

    Missing parameters are filled with the experiment defaults; unknown keys
    are rejected.
    """
    if isinstance(source, (str, Path)):
        text = str(source)
        if not text.lstrip().startswith("{"):
            try:
                text = Path(text).read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc}") from None
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
    else:
        raw = dict(source)
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    exp = raw.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {sorted(EXPERIMENTS)}, got {exp!r}")
    _, available, default = EXPERIMENTS[exp]
    methods = raw.get("methods", list(default))
    if isinstance(methods, str):
        methods = list(available) if methods == "all" else methods.split(",")
    methods = tuple(m.strip() for m in methods)
    bad = [m for m in methods if m not in available]
    if bad or not methods:
        raise ConfigError(f"methods {bad} not available for {exp}; choose from {available}")
    params = _resolve_params(exp, raw.get("params") or {})
    if "threshold" in methods and params.get("tau") is None:
        raise ConfigError("method 'threshold' needs params.tau")
    default_tau = getattr(EXPERIMENTS[exp][0](), "tau", None)
    if methods == ("discount",) and params.get("tau") != default_tau:
        warnings.warn("tau is ignored by method 'discount'", stacklevel=2)
    seed, repeats, trace_repeats = raw.get("seed", 0), raw.get("repeats", 1), raw.get("trace_repeats", 1)
    for name, v, lo in (("seed", seed, 0), ("repeats", repeats, 1), ("trace_repeats", trace_repeats, 0)):
        if not isinstance(v, int) or isinstance(v, bool) or v < lo:
            raise ConfigError(f"{name} must be an integer >= {lo}")
    sweep = raw.get("sweep")
    if sweep is not None:
        if not isinstance(sweep, dict) or set(sweep) != {"param", "values"} or not sweep["values"]:
            raise ConfigError("sweep must be {'param': name, 'values': [...]} with values")
        if sweep["param"] not in params:
            raise ConfigError(f"sweep parameter {sweep['param']!r} unknown for {exp}")
        for v in sweep["values"]:
            _resolve_params(exp, {**params, sweep["param"]: v})
        sweep = {"param": sweep["param"], "values": list(sweep["values"])}
    data = raw.get("data")
    if data is not None and exp != "changepoint":
        raise ConfigError("input data is only supported for the changepoint experiment")
    return ExperimentConfig(exp, methods, params, seed, repeats, trace_repeats, sweep, data)


def load_series(path) -> np.ndarray:
    """Read a one-column numeric CSV (first column used); a non-numeric first line is a header."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read data file: {exc}") from None
    values = []
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or not row[0].strip():
            continue
        try:
            v = float(row[0])
        except ValueError:
            if lineno == 1:
                continue
            raise DataError(f"{path}:{lineno}: not a number: {row[0]!r}") from None
        if not math.isfinite(v):
            raise DataError(f"{path}:{lineno}: non-finite value")
        values.append(v)
    if not values:
        raise DataError(f"{path}: no data")
    return np.array(values)


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *keys])))


# -- per-experiment repeat functions ---------------------------------------------

def _feature(rec, methods, rng, want_trace, data):
    ds = ft.simulate_feature(rec, rng)
    metrics, rows = {}, []
    for m in methods:
        tr = ft.run_feature(ds, m, rec.tau)
        metrics[m] = {"final_error": tr.final_error}
        if want_trace:
            rows += [(m, t, tr.consistency[t], tr.discount[t], tr.error[t], int(ds.outliers[t]))
                     for t in range(rec.T)]
    return metrics, rows


_feature.columns = ("consistency", "discount", "error", "outlier")


def _kalman(rec, methods, rng, want_trace, data):
    model = kf.make_cv_model(rec.delta, rec.sigma_a, rec.R)
    cfg = kf.KalmanConfig(T=rec.T, eps=rec.eps, outlier_std=rec.outlier_std, d_eff=rec.d_eff, tau=rec.tau)
    sim = kf.simulate_kalman(cfg, model, rng)
    metrics, rows = {}, []
    for m in methods:
        tr = kf.run_kalman(sim, model, m, rec.d_eff, rec.tau)
        metrics[m] = {"mean_abs_error": tr.mean_abs_error}
        if want_trace:
            rows += [(m, t, sim.obs[t], tr.estimates[t, 0], tr.consistency[t], tr.discount[t],
                      tr.abs_error[t], int(sim.outliers[t])) for t in range(rec.T)]
    return metrics, rows


_kalman.columns = ("y", "position", "consistency", "discount", "abs_error", "outlier")


def _changepoint(rec, methods, rng, want_trace, data):
    cfg = cp.CPConfig(sigma=rec.sigma, hazard=rec.hazard, precision_decay=rec.precision_decay,
                      tau=rec.tau, d_eff=rec.d_eff, min_run=rec.min_run)
    if data is None:
        y, truth, spikes = cp.synthetic_well_log(rng, rec.T, rec.sigma, rec.n_spikes)
    else:
        y, truth, spikes = data, None, None
    metrics, rows = {}, []
    for m in methods:
        tr = cp.run_changepoint(y, cfg, m)
        found = set(tr.changepoints)
        met = {"n_changepoints": len(found), "max_nodes": int(tr.n_nodes.max())}
        if truth is not None:
            met["exact_detection"] = float(sorted(found) == truth)
            met["spikes_flagged"] = sum(1 for s in spikes if s in found or s + 1 in found)
        metrics[m] = met
        if want_trace:
            rows += [(m, t, y[t], tr.map_run_length[t], tr.segment_mean[t], tr.consistency[t],
                      tr.discount[t], int(t in found)) for t in range(y.size)]
    return metrics, rows


_changepoint.columns = ("y", "map_run_length", "segment_mean", "consistency", "discount", "changepoint")


def _normal_gamma(rec, methods, rng, want_trace, data):
    res, out = sc.ng_run(rec, rng, methods)
    metrics = {m: {"mu_error": mu - rec.mu, "lam_error": lam - rec.lam} for m, (mu, lam) in res.items()}
    rows = [(m, 0, res[m][0], res[m][1]) for m in methods] if want_trace else []
    return metrics, rows


_normal_gamma.columns = ("mu", "lam")


def _known_precision(rec, methods, rng, want_trace, data):
    res, out = sc.known_precision_run(rec, rng, methods)
    metrics = {m: {"mu_error": v - rec.mu} for m, v in res.items()}
    rows = [(m, 0, res[m]) for m in methods] if want_trace else []
    return metrics, rows


_known_precision.columns = ("mu",)


def _soft_uniform(rec, methods, rng, want_trace, data):
    res, out = sc.su_run(rec, rng, methods)
    metrics = {m: {"error": v - rec.theta, "abs_error": abs(v - rec.theta)} for m, v in res.items()}
    rows = [(m, 0, res[m]) for m in methods] if want_trace else []
    return metrics, rows


_soft_uniform.columns = ("theta",)

_RUNNERS = {
    "feature": _feature,
    "kalman": _kalman,
    "changepoint": _changepoint,
    "normal-gamma": _normal_gamma,
    "known-precision": _known_precision,
    "soft-uniform": _soft_uniform,
}


def _run_one(task):
    config, k, value, repeat, data = task
    rec = config.record(**({config.sweep["param"]: value} if config.sweep else {}))
    rng = make_rng(config.seed, k, repeat)
    return _RUNNERS[config.experiment](rec, config.methods, rng, repeat < config.trace_repeats, data)


def _summarize(values):
    a = np.asarray(values, dtype=float)
    return {
        "mean": float(a.mean()),
        "std": float(a.std(ddof=1)) if a.size > 1 else 0.0,
        "median": float(np.median(a)),
        "rms": float(np.sqrt(np.mean(a ** 2))),
    }


def run_experiment(config: ExperimentConfig, jobs: int = 1, data=None):
    """Run all repeats (and sweep values); returns ``(trace_rows, summary)``.

    Trace rows are ``(sweep value, repeat, method, t, ...)`` tuples.
    """
    if jobs < 1:
        raise ConfigError("jobs must be >= 1")
    if data is None and config.data is not None:
        data = load_series(config.data)
    repeats = 1 if data is not None else config.repeats
    tasks = [(config, k, v, r, data) for k, v in enumerate(config.sweep_values()) for r in range(repeats)]
    start = time.perf_counter()
    if jobs == 1:
        results = [_run_one(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    wall = time.perf_counter() - start
    trace = []
    collected = {}
    for (_, k, v, r, _), (metrics, rows) in zip(tasks, results):
        trace += [(v, r, *row) for row in rows]
        for m, met in metrics.items():
            for name, x in met.items():
                collected.setdefault(k, {}).setdefault(m, {}).setdefault(name, []).append(x)
    sweeps = []
    for k, v in enumerate(config.sweep_values()):
        stats = {m: {name: _summarize(xs) for name, xs in met.items()}
                 for m, met in collected.get(k, {}).items()}
        sweeps.append({"value": v, "methods": stats})
    summary = {
        "experiment": config.experiment,
        "seed": config.seed,
        "repeats": repeats,
        "sweep_param": config.sweep["param"] if config.sweep else None,
        "results": sweeps,
        "wall_time_s": wall,
    }
    log.info("%s: %d tasks in %.2f s", config.experiment, len(tasks), wall)
    return trace, summary


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def format_trace(config: ExperimentConfig, rows) -> str:
    cols = ("sweep_value", "repeat", "method", "t") + _RUNNERS[config.experiment].columns
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def emit_plotdata(summary: dict) -> str:
    """Long-format table ``sweep_value, method, metric, statistic, value``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("sweep_value", "method", "metric", "statistic", "value"))
    for sweep in summary["results"]:
        for m, met in sweep["methods"].items():
            for name, stats in met.items():
                for stat, val in stats.items():
                    w.writerow((_fmt(sweep["value"]), m, name, stat, _fmt(val)))
    return buf.getvalue()


def write_outputs(config: ExperimentConfig, trace, summary, outdir) -> dict:
    """Write ``trace.csv``, ``summary.json``, ``plotdata.csv`` and the resolved ``config.json``."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "trace": out / "trace.csv",
        "summary": out / "summary.json",
        "plotdata": out / "plotdata.csv",
        "config": out / "config.json",
    }
    paths["trace"].write_text(format_trace(config, trace))
    paths["summary"].write_text(json.dumps(summary, indent=2) + "\n")
    paths["plotdata"].write_text(emit_plotdata(summary))
    paths["config"].write_text(json.dumps(config.to_dict(), indent=2) + "\n")
    return paths

