"""Command-line entry point: ``recurrence {simulate,estimate,experiment,verify}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import engine, harness, oracle
from .errors import RecurrenceError
from .estimators import estimate
from .io import ingest_observation, load_json, params_from_dict
from .model import validate_params

log = logging.getLogger("recurrence")


def _emit(payload) -> None:
    print(json.dumps(payload, indent=2))


def cmd_simulate(args) -> int:
    raw = load_json(args.config)
    p = validate_params(params_from_dict(raw))
    seed = args.seed if args.seed is not None else int(raw.get("seed", 0))
    times = tuple(raw.get("record_times", ()))
    if "capacity" in raw:
        out = engine.simulate_capacity(p, float(raw["capacity"]), seed, record_times=times)
    else:
        out = engine.simulate(p, seed, record_times=times)
    summary = {
        "termination": out.termination, "gamma": out.gamma, "time_at_end": out.time_at_end,
        "z0_at_end": out.z0_at_end, "z1_at_end": out.z1_at_end,
        "surviving_clones": int(out.observed_sizes.size), "event_count": out.event_count,
        "seed": out.seed,
    }
    if args.out:
        dest = Path(args.out)
        dest.mkdir(parents=True, exist_ok=True)
        (dest / "outcome.json").write_text(json.dumps(
            {**summary, "clone_sizes": out.clone_sizes.tolist(),
             "founding_times": out.founding_times.tolist()}) + "\n", encoding="utf-8")
        if out.snapshots:
            engine.write_snapshots_csv(out, dest / "snapshots.csv")
    _emit(summary)
    return 0


def cmd_estimate(args) -> int:
    est = estimate(ingest_observation(args.config))
    _emit({"lambda0": est.lambda0_hat, "lambda1": est.lambda1_hat, "r1": est.r1_hat,
           "alpha": est.alpha_hat, "u_n": est.u_n, "diagnostics": sorted(est.diagnostics)})
    return 0


def _experiment_config(name, args) -> tuple[harness.ExperimentConfig, dict]:
    raw = load_json(args.config) if args.config else {}
    if raw.get("experiment", name) != name:
        raise RecurrenceError(f"config is for experiment {raw['experiment']!r}, not {name!r}")
    merged = dict(raw, experiment=name)
    if args.seed is not None:
        merged["base_seed"] = args.seed
    if args.replicates is not None:
        merged["replicates"] = args.replicates
    if args.threads is not None:
        merged["parallelism"] = args.threads
    if args.out is not None:
        merged["output_path"] = args.out
    merged.setdefault("output_path", f"results/{name}")
    return harness.ExperimentConfig.from_dict(merged), raw


def cmd_experiment(args) -> int:
    cfg, raw = _experiment_config(args.name, args)
    result = harness.run_experiment(cfg)
    out = harness.write_outputs(result, cfg.output_path, args.format, raw)
    _emit({"experiment": cfg.experiment, "output": str(out), "rows": len(result.rows)})
    return 0


def cmd_verify(args) -> int:
    battery = load_json(args.config) if args.config else None
    results = oracle.verify_suite(args.seed if args.seed is not None else 0, battery)
    report = oracle.report_json(results)
    if args.out:
        dest = Path(args.out)
        dest.mkdir(parents=True, exist_ok=True)
        (dest / "verify_report.json").write_text(report + "\n", encoding="utf-8")
    print(report)
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="recurrence",
                                     description="Tumour recurrence simulation and estimation")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=False):
        p.add_argument("--config", required=config_required, help="JSON input file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("simulate", help="run one replicate from a parameter file")
    common(p, config_required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="estimate parameters from an observation file")
    common(p, config_required=True)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("experiment", help="run a replicated study")
    p.add_argument("name", choices=[e for e in harness.EXPERIMENTS if e != "verify"])
    common(p)
    p.add_argument("--replicates", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("verify", help="run the Monte Carlo audit battery")
    common(p)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (RecurrenceError, ValueError, OSError, KeyError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        if hasattr(exc, "field"):
            err["field"] = exc.field
        print(json.dumps(err), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
