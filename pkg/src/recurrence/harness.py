"""Replicated simulation studies: convergence, detection thresholds, parameter
stability, carrying capacity and bootstrap refinement.

Every replicate draws its random stream from ``replicate_seed(base_seed, i)``,
so the rows written are a pure function of the configuration and never depend
on the worker count or on scheduling.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import engine, oracle
from .errors import ConsistencyWarning, DegenerateSample, InvalidParams, SchemaError
from .estimators import (
    Observation,
    bootstrap_simpson,
    detectable_simpson_index,
    apply_detection_threshold,
    estimate,
    relative_errors,
    simpson_index,
    surviving_clone_count,
)
from .model import ModelParams, limit_constants, validate_params, zeta
from .rng import replicate_seed
from .stats import welch_one_sided_t

log = logging.getLogger(__name__)

CONFIG_SCHEMA_VERSION = 1

EXPERIMENTS = ("convergence", "threshold", "stability", "capacity", "bootstrap", "verify")

THETA_STAR = {"alpha": 0.5, "r0": 0.5, "d0": 1.0, "r1": 1.5, "d1": 1.0, "beta": 1.0}
# capacity study: lambda0 = -0.5, lambda1 = 0.5 with d1 small enough that the capped
# resistant equilibrium C(1 - d1/r1) exceeds n for every C >= 2n
CAPACITY_PARAMS = {"alpha": 0.5, "r0": 0.5, "d0": 1.0, "r1": 0.6, "d1": 0.1, "beta": 1.0}
THETA_PRIME = {"alpha": 0.8, "r0": 1.3, "d0": 1.5, "r1": 2.0, "d1": 1.2, "beta": 1.0}

_DEFAULTS = {
    "convergence": {"params": THETA_STAR, "n_values": [1_000, 10_000, 100_000]},
    "threshold": {"params": THETA_PRIME, "n_values": [100_000]},
    "stability": {"params": THETA_STAR, "n_values": [1_000_000]},
    "capacity": {"params": CAPACITY_PARAMS, "n_values": [100_000]},
    "bootstrap": {"params": THETA_PRIME, "n_values": [1_000_000], "replicates": 10},
    "verify": {"params": THETA_STAR, "n_values": [10_000], "replicates": 1},
}

# fixed rates and sampling windows of the three stability sweeps
STABILITY_SWEEPS = {
    "lambda0": {"fixed": {"alpha": 0.5, "r1": 1.5, "d1": 1.0},
                "uniform": {"r0": (0.8, 1.2), "d0": (1.3, 1.7)}},
    "lambda1": {"fixed": {"alpha": 0.5, "r0": 1.0, "d0": 1.5},
                "uniform": {"r1": (1.4, 1.8), "d1": (0.7, 1.1)}},
    "alpha": {"fixed": {"r0": 1.0, "d0": 1.5, "r1": 1.5, "d1": 1.0},
              "uniform": {"alpha": (0.0, 1.0)}},
}

ERROR_FIELDS = ("lambda0", "lambda1", "r1", "alpha")
TTEST_FIELDS = ("lambda0", "lambda1", "alpha")


@dataclass
class ExperimentConfig:
    experiment: str
    params: dict = field(default_factory=dict)
    n_values: list = field(default_factory=list)
    replicates: int = 40
    base_seed: int = 0
    threshold_fracs: list = field(default_factory=lambda: [0.0, 0.02, 0.10])
    # "simpson_only": only the Simpson index sees the threshold; "filter": drop clones outright
    threshold_mode: str = "simpson_only"
    # carrying capacities as multiples of n
    capacity_values: list = field(default_factory=lambda: [2.0, 3.0, 4.0, 5.0])
    bootstrap: dict = field(default_factory=lambda: {"keep_frac": 0.2, "resample_frac": 0.625,
                                                     "b": 1000})
    stability_mode: str = "lambda0"
    verify: Optional[dict] = None
    output_path: Optional[str] = None
    parallelism: int = 1
    max_events: int = engine.DEFAULT_MAX_EVENTS

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = dict(raw)
        raw.pop("schema_version", None)
        name = raw.get("experiment")
        if name not in EXPERIMENTS:
            raise SchemaError(f"experiment must be one of {EXPERIMENTS}, got {name!r}")
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise SchemaError(f"unknown config keys: {sorted(unknown)}")
        defaults = _DEFAULTS[name]
        params = dict(defaults["params"])
        params.update(raw.pop("params", None) or {})
        raw.setdefault("n_values", list(defaults["n_values"]))
        if "replicates" in defaults:
            raw.setdefault("replicates", defaults["replicates"])
        cfg = cls(params=params, **raw)
        cfg.check()
        return cfg

    def check(self):
        if self.replicates < 1:
            raise SchemaError("replicates must be >= 1")
        if not self.n_values:
            raise SchemaError("n_values must be non-empty")
        if self.parallelism < 1:
            raise SchemaError("parallelism must be >= 1")
        if self.threshold_mode not in ("simpson_only", "filter"):
            raise SchemaError(f"unknown threshold_mode {self.threshold_mode!r}")
        if self.stability_mode not in STABILITY_SWEEPS:
            raise SchemaError(f"stability_mode must be one of {sorted(STABILITY_SWEEPS)}")
        if self.experiment == "threshold" and not self.threshold_fracs:
            raise SchemaError("threshold_fracs must be non-empty")
        if self.experiment == "capacity" and not self.capacity_values:
            raise SchemaError("capacity_values must be non-empty")
        if self.experiment == "capacity":
            for n in self.n_values:
                p = self.model(n)
                for factor in self.capacity_values:
                    if engine.capacity_equilibrium(p, factor * n) <= p.threshold:
                        raise SchemaError(
                            f"capacity {factor:g}n leaves the resistant equilibrium below "
                            f"beta*n; recurrence is unreachable")
        if self.experiment != "stability":
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ConsistencyWarning)
                for n in self.n_values:
                    validate_params(self.model(n))

    def model(self, n: int) -> ModelParams:
        p = {k: self.params[k] for k in ("alpha", "r0", "d0", "r1", "d1")}
        return ModelParams(n=int(n), beta=float(self.params.get("beta", 1.0)), **p)


@dataclass
class ResultRow:
    experiment: str
    variant: str
    n: int
    replicate: int
    seed: int
    alpha: float
    r0: float
    d0: float
    r1: float
    d1: float
    beta: float
    termination: str
    gamma: Optional[float]
    z0_at_end: int
    i_hat: int
    r_n: Optional[float]
    lambda0_hat: Optional[float] = None
    lambda1_hat: Optional[float] = None
    r1_hat: Optional[float] = None
    alpha_hat: Optional[float] = None
    u_n: Optional[float] = None
    err_lambda0: Optional[float] = None
    err_lambda1: Optional[float] = None
    err_r1: Optional[float] = None
    err_alpha: Optional[float] = None
    diagnostics: str = ""

    @property
    def excluded(self) -> bool:
        return self.termination != engine.RECURRENCE or bool(self.diagnostics)


ROW_FIELDS = tuple(f.name for f in fields(ResultRow))


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list
    summary: list
    extras: dict = field(default_factory=dict)
    timings: list = field(default_factory=list)


def _row(cfg, variant, p, rep, seed, out, i_hat=None, r_n=None):
    """Estimate from one outcome and fold everything into a result row."""
    if i_hat is None:
        i_hat = surviving_clone_count(out.clone_sizes)
    if r_n is None:
        r_n = simpson_index(out.clone_sizes)
    row = ResultRow(cfg.experiment, variant, p.n, rep, seed, p.alpha, p.r0, p.d0, p.r1, p.d1,
                    p.beta, out.termination, out.gamma, out.z0_at_end, i_hat, r_n)
    if out.termination != engine.RECURRENCE:
        row.diagnostics = out.termination
        return row
    est = estimate(Observation(p.n, out.gamma, out.z0_at_end, i_n=i_hat, r_n=r_n))
    err = relative_errors(est, p)
    row.lambda0_hat, row.lambda1_hat = est.lambda0_hat, est.lambda1_hat
    row.r1_hat, row.alpha_hat, row.u_n = est.r1_hat, est.alpha_hat, est.u_n
    row.err_lambda0, row.err_lambda1 = err.lambda0, err.lambda1
    row.err_r1, row.err_alpha = err.r1, err.alpha
    row.diagnostics = ";".join(sorted(est.diagnostics))
    return row


def _convergence_task(cfg, n, rep, seed):
    p = cfg.model(n)
    out = engine.simulate(p, seed, max_events=cfg.max_events)
    return [_row(cfg, "plain", p, rep, seed, out)]


def _threshold_task(cfg, n, rep, seed):
    p = cfg.model(n)
    out = engine.simulate(p, seed, max_events=cfg.max_events)
    rows = []
    sizes = out.observed_sizes
    for frac in cfg.threshold_fracs:
        variant = f"threshold={frac:g}"
        if cfg.threshold_mode == "filter":
            kept = apply_detection_threshold(sizes, out.z0_at_end, frac)
            i_hat, r_n = surviving_clone_count(kept), simpson_index(kept)
        else:
            i_hat = surviving_clone_count(sizes)
            r_n = detectable_simpson_index(sizes, out.z0_at_end, frac)
        rows.append(_row(cfg, variant, p, rep, seed, out, i_hat, r_n))
    return rows


def sample_stability_params(cfg: ExperimentConfig, n: int, seed: int) -> ModelParams:
    """Draw one parameter set for the configured sweep, resampling invalid draws."""
    sweep = STABILITY_SWEEPS[cfg.stability_mode]
    rng = np.random.default_rng([seed, 1])
    for _ in range(1000):
        values = dict(cfg.params)
        values.update(sweep["fixed"])
        for key in sorted(sweep["uniform"]):
            lo, hi = sweep["uniform"][key]
            values[key] = float(rng.uniform(lo, hi))
        p = ModelParams(n=int(n), alpha=values["alpha"], r0=values["r0"], d0=values["d0"],
                        r1=values["r1"], d1=values["d1"], beta=float(values.get("beta", 1.0)))
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ConsistencyWarning)
                return validate_params(p)
        except InvalidParams:
            continue
    raise SchemaError(f"could not draw valid parameters for sweep {cfg.stability_mode!r}")


def _stability_task(cfg, n, rep, seed):
    p = sample_stability_params(cfg, n, seed)
    out = engine.simulate(p, seed, max_events=cfg.max_events)
    return [_row(cfg, f"sweep={cfg.stability_mode}", p, rep, seed, out)]


def _capacity_task(cfg, n, rep, seed):
    p = cfg.model(n)
    rows = []
    for factor in cfg.capacity_values:
        out = engine.simulate_capacity(p, factor * p.n, seed, max_events=cfg.max_events)
        rows.append(_row(cfg, f"capacity={factor:g}n", p, rep, seed, out))
    return rows


def _bootstrap_task(cfg, n, rep, seed):
    p = cfg.model(n)
    out = engine.simulate(p, seed, max_events=cfg.max_events)
    plain = _row(cfg, "plain", p, rep, seed, out)
    r_boot = bootstrap_simpson(out.observed_sizes, seed=replicate_seed(seed, 1), **cfg.bootstrap)
    boot = _row(cfg, "bootstrap", p, rep, seed, out, r_n=r_boot)
    return [plain, boot]


_TASKS = {
    "convergence": _convergence_task,
    "threshold": _threshold_task,
    "stability": _stability_task,
    "capacity": _capacity_task,
    "bootstrap": _bootstrap_task,
}


def _run_replicates(cfg: ExperimentConfig):
    task = _TASKS[cfg.experiment]
    jobs = [(n, rep, replicate_seed(cfg.base_seed, rep))
            for n in cfg.n_values for rep in range(cfg.replicates)]

    def work(job):
        n, rep, seed = job
        start = time.perf_counter()
        rows = task(cfg, n, rep, seed)
        return job, rows, time.perf_counter() - start

    if cfg.parallelism == 1:
        done = [work(job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
            done = list(pool.map(work, jobs))
    done.sort(key=lambda item: (item[0][0], item[0][1]))
    rows = [row for _, batch, _ in done for row in batch]
    timings = [{"n": n, "replicate": rep, "wall_time": wall} for (n, rep, _), _, wall in done]
    return rows, timings


def _stats(values):
    arr = np.asarray([v for v in values if v is not None], dtype=float)
    if arr.size == 0:
        return None, None, None
    sd = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), sd, float(np.median(arr))


def summarize(rows) -> list[dict]:
    """Mean, SD and median of each relative error per (variant, n).

    Excluded replicates (no recurrence or a failed estimate) are counted but
    left out of every aggregate.
    """
    groups: dict = {}
    for row in rows:
        groups.setdefault((row.variant, row.n), []).append(row)
    summary = []
    for (variant, n), members in groups.items():
        kept = [r for r in members if not r.excluded]
        entry = {"variant": variant, "n": n, "replicates": len(members),
                 "excluded": len(members) - len(kept)}
        for name in ERROR_FIELDS:
            mean, sd, median = _stats(getattr(r, f"err_{name}") for r in kept)
            entry[f"{name}_mean"] = mean
            entry[f"{name}_sd"] = sd
            entry[f"{name}_median"] = median
        summary.append(entry)
    return summary


def gamma_gap_diagnostic(rows) -> dict:
    """Median |gamma - zeta| per n and its log-log slope (reported, not asserted)."""
    by_n: dict = {}
    for row in rows:
        if row.gamma is None:
            continue
        p = ModelParams(row.n, row.alpha, row.r0, row.d0, row.r1, row.d1, row.beta)
        by_n.setdefault(row.n, []).append(abs(row.gamma - zeta(p)))
    ns = sorted(by_n)
    medians = [float(np.median(by_n[n])) for n in ns]
    slope = None
    if len(ns) >= 2 and all(m > 0 for m in medians):
        slope = float(np.polyfit(np.log(ns), np.log(medians), 1)[0])
    return {"median_gamma_gap": {str(n): m for n, m in zip(ns, medians)}, "slope": slope}


def run_convergence(cfg: ExperimentConfig) -> ExperimentResult:
    rows, timings = _run_replicates(cfg)
    return ExperimentResult(cfg, rows, summarize(rows),
                            {"diagnostics.json": gamma_gap_diagnostic(rows)}, timings)


def run_threshold(cfg: ExperimentConfig) -> ExperimentResult:
    rows, timings = _run_replicates(cfg)
    return ExperimentResult(cfg, rows, summarize(rows), {}, timings)


def run_stability(cfg: ExperimentConfig) -> ExperimentResult:
    rows, timings = _run_replicates(cfg)
    return ExperimentResult(cfg, rows, summarize(rows), {}, timings)


def capacity_ttests(cfg: ExperimentConfig, rows) -> dict:
    """One-sided Welch tests: is the error larger at the lower capacities?

    The capacity grid is split in half; the lower half is tested against the
    upper half, pooling all n values.
    """
    factors = sorted(cfg.capacity_values)
    half = len(factors) // 2
    low = {f"capacity={f:g}n" for f in factors[:half]}
    high = {f"capacity={f:g}n" for f in factors[len(factors) - half:]}
    report = {"low_capacities": sorted(low), "high_capacities": sorted(high), "tests": {}}
    for name in TTEST_FIELDS:
        a = [getattr(r, f"err_{name}") for r in rows if r.variant in low and not r.excluded]
        b = [getattr(r, f"err_{name}") for r in rows if r.variant in high and not r.excluded]
        try:
            res = welch_one_sided_t(a, b)
            report["tests"][name] = {"t": res.t, "df": res.df, "p": res.p,
                                     "n_low": len(a), "n_high": len(b)}
        except DegenerateSample as exc:
            report["tests"][name] = {"error": str(exc), "n_low": len(a), "n_high": len(b)}
    return report


def run_capacity(cfg: ExperimentConfig) -> ExperimentResult:
    rows, timings = _run_replicates(cfg)
    return ExperimentResult(cfg, rows, summarize(rows),
                            {"ttest.json": capacity_ttests(cfg, rows)}, timings)


def bootstrap_ratios(rows) -> list[dict]:
    """Post/pre bootstrap relative-error ratios per replicate."""
    pairs: dict = {}
    for row in rows:
        pairs.setdefault((row.n, row.replicate), {})[row.variant] = row
    out = []
    for (n, rep), pair in sorted(pairs.items()):
        plain, boot = pair.get("plain"), pair.get("bootstrap")
        if plain is None or boot is None or plain.excluded or boot.excluded:
            continue
        p = ModelParams(plain.n, plain.alpha, plain.r0, plain.d0, plain.r1, plain.d1, plain.beta)
        coef = limit_constants(p).simpson_coef
        scale = float(p.n) ** (1.0 - p.alpha)
        entry = {"n": n, "replicate": rep, "seed": plain.seed}
        for name in ERROR_FIELDS:
            before, after = getattr(plain, f"err_{name}"), getattr(boot, f"err_{name}")
            entry[f"ratio_{name}"] = after / before if before else None
        s_before = abs(scale * plain.r_n - coef) / coef
        s_after = abs(scale * boot.r_n - coef) / coef
        entry["ratio_simpson"] = s_after / s_before if s_before else None
        out.append(entry)
    return out


def run_bootstrap_eval(cfg: ExperimentConfig) -> ExperimentResult:
    rows, timings = _run_replicates(cfg)
    return ExperimentResult(cfg, rows, summarize(rows),
                            {"ratios.csv": bootstrap_ratios(rows)}, timings)


def run_verify(cfg: ExperimentConfig) -> ExperimentResult:
    results = oracle.verify_suite(cfg.base_seed, cfg.verify)
    report = json.loads(oracle.report_json(results))
    return ExperimentResult(cfg, [], [], {"verify_report.json": report}, [])


RUNNERS = {
    "convergence": run_convergence,
    "threshold": run_threshold,
    "stability": run_stability,
    "capacity": run_capacity,
    "bootstrap": run_bootstrap_eval,
    "verify": run_verify,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    log.info("running %s: n=%s, %d replicates, %d workers", cfg.experiment, cfg.n_values,
             cfg.replicates, cfg.parallelism)
    return RUNNERS[cfg.experiment](cfg)


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return value


def to_csv(records, columns) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for rec in records:
        get = rec.get if isinstance(rec, dict) else (lambda k, rec=rec: getattr(rec, k))
        writer.writerow([_cell(get(c)) for c in columns])
    return buf.getvalue()


def write_outputs(result: ExperimentResult, out_dir, fmt: str = "csv",
                  raw_config: Optional[dict] = None) -> Path:
    """Write rows, summary, extras and the config echo into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    echo = {"schema_version": CONFIG_SCHEMA_VERSION, "input": raw_config,
            "resolved": asdict(result.config)}
    (out / "config-echo.json").write_text(json.dumps(echo, indent=2) + "\n", encoding="utf-8")
    if result.config.experiment != "verify":
        summary_cols = list(result.summary[0]) if result.summary else ["variant", "n"]
        if fmt == "json":
            (out / "rows.json").write_text(
                json.dumps([asdict(r) for r in result.rows], indent=1) + "\n", encoding="utf-8")
            (out / "summary.json").write_text(json.dumps(result.summary, indent=1) + "\n",
                                              encoding="utf-8")
        else:
            (out / "rows.csv").write_text(to_csv(result.rows, ROW_FIELDS), encoding="utf-8")
            (out / "summary.csv").write_text(to_csv(result.summary, summary_cols),
                                             encoding="utf-8")
        # wall times vary run to run, so they stay out of rows.csv
        (out / "timings.csv").write_text(
            to_csv(result.timings, ["n", "replicate", "wall_time"]), encoding="utf-8")
    for name, payload in result.extras.items():
        if name.endswith(".csv"):
            cols = list(payload[0]) if payload else []
            (out / name).write_text(to_csv(payload, cols), encoding="utf-8")
        else:
            (out / name).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return out
