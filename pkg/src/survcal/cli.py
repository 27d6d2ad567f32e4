"""Command-line entry point: ``survcal {run,single,pseudo,validate}``."""

import argparse
import csv
import io
import logging
import sys
from dataclasses import replace

import numpy as np

from survcal.data import TARGET, SchemaError, SurvivalDataset, read_csv
from survcal.harness import (
    METHODS,
    ScenarioFailed,
    estimate_single,
    load_config,
    run_scenario,
)
from survcal.survival import compute_pseudo

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_FAILED = 4


def _floats(text):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("no horizons given")
    return vals


def _method(text):
    if text not in METHODS:
        raise argparse.ArgumentTypeError(
            f"unknown method {text!r}; choose from {', '.join(METHODS)}")
    return text


def build_parser():
    p = argparse.ArgumentParser(prog="survcal", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="verb", required=True)

    run = sub.add_parser("run", help="run a scenario config")
    run.add_argument("config", help="YAML scenario file")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--seed", type=int, help="seed base (replication r uses seed + r)")
    run.add_argument("--reps", type=int)
    run.add_argument("--threads", type=int, default=1, help="worker processes")
    run.add_argument("--q", type=float, help="shift strength")
    run.add_argument("--functional", choices=("sp", "rm"))
    run.add_argument("--horizons", type=_floats)
    run.add_argument("--method", type=_method, action="append",
                     help="restrict to a method (repeatable)")

    single = sub.add_parser("single", help="estimate on one dataset with one method")
    single.add_argument("dataset", help="CSV with x*,time,event,domain columns")
    single.add_argument("--method", type=_method, required=True)
    single.add_argument("--functional", choices=("sp", "rm"), default="sp")
    single.add_argument("--horizons", type=_floats, required=True)
    single.add_argument("--pseudo", choices=("jackknife", "ipcw"), default="jackknife")
    single.add_argument("--target-csv", help="target rows in a separate file")
    single.add_argument("--subgroup", type=int, help="covariate column for ipsw-sub")
    single.add_argument("--seed", type=int, default=0)
    single.add_argument("--out", help="write the estimate CSV here instead of stdout")
    single.add_argument("--trace", help="write the audit trace CSV here")

    pseudo = sub.add_parser("pseudo", help="dump pseudo-observations as CSV")
    pseudo.add_argument("dataset")
    pseudo.add_argument("--functional", choices=("sp", "rm"), default="sp")
    pseudo.add_argument("--horizons", type=_floats, required=True)
    pseudo.add_argument("--pseudo", choices=("jackknife", "ipcw"), default="jackknife")
    pseudo.add_argument("--out")

    val = sub.add_parser("validate", help="schema-check a dataset CSV")
    val.add_argument("dataset")
    return p


def _emit(text, path):
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _merge_target(data, target):
    """Relabel every row of ``data`` as source and append ``target`` as the target."""
    dom = np.where(data.domain == TARGET, "source", data.domain).astype(object)
    return SurvivalDataset(
        np.vstack([data.covariates, target.covariates]),
        np.concatenate([data.observed_time, target.observed_time]),
        np.concatenate([data.event, target.event]),
        np.concatenate([dom, np.full(len(target), TARGET, dtype=object)]),
    )


def cmd_run(args):
    overrides = {"seed": args.seed, "reps": args.reps, "q": args.q,
                 "functionals": [args.functional] if args.functional else None,
                 "horizons": args.horizons,
                 "methods": args.method}
    cfg = load_config(args.config, overrides)
    _, manifest = run_scenario(cfg, args.out, args.threads)
    n_fail = len(manifest["failures"])
    logging.info("scenario %s: %d/%d replications ok, outputs in %s",
                 cfg.scenario.name, cfg.reps - n_fail, cfg.reps, args.out)
    return 0


def _with_strata(data, pseudo):
    if pseudo != "ipcw":
        return data
    from survcal.datagen import censoring_strata
    return replace(data, strata=censoring_strata(data.covariates,
                                                 tuple(range(1, data.n_features))))


def cmd_single(args):
    data = read_csv(args.dataset)
    if args.target_csv:
        data = _merge_target(data, read_csv(args.target_csv))
    data = _with_strata(data, args.pseudo)
    results = estimate_single(data, args.method, args.functional, args.horizons, args.pseudo,
                              seed=args.seed, subgroup=args.subgroup)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "functional", "horizon", "group", "estimate"])
    traces = []
    for h, est, trace in results:
        items = est.items() if isinstance(est, dict) else [("all", est)]
        for g, v in items:
            w.writerow([args.method, args.functional, repr(h), g, repr(float(v))])
        if trace is not None:
            traces.append((h, trace))
    _emit(buf.getvalue(), args.out)
    if args.trace and traces:
        tb = io.StringIO()
        tw = csv.writer(tb, lineterminator="\n")
        tw.writerow(["horizon", "iteration", "bucket", "delta", "audit_stat", "mse"])
        for h, trace in traces:
            for r in trace.records:
                tw.writerow([repr(h), r.iteration, r.bucket + 1, repr(r.delta),
                             repr(r.audit_stat), repr(r.mse)])
        _emit(tb.getvalue(), args.trace)
    return 0


def cmd_pseudo(args):
    data = _with_strata(read_csv(args.dataset), args.pseudo)
    pm = compute_pseudo(data, args.functional, args.horizons, args.pseudo)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["row"] + [f"h={g!r}" for g in pm.grid.tolist()])
    for i, row in enumerate(pm.values):
        w.writerow([i] + [repr(float(v)) for v in row])
    _emit(buf.getvalue(), args.out)
    return 0


def cmd_validate(args):
    data = read_csv(args.dataset)
    n_t = int(np.sum(data.domain == TARGET))
    print(f"ok: {len(data)} rows, {data.n_features} covariates, "
          f"{int(data.event.sum())} events, {n_t} target rows")
    return 0


COMMANDS = {"run": cmd_run, "single": cmd_single, "pseudo": cmd_pseudo, "validate": cmd_validate}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.verb](args)
    except SchemaError as exc:
        print(f"survcal: schema error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ScenarioFailed as exc:
        print(f"survcal: scenario failed: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except (ValueError, OSError) as exc:
        print(f"survcal: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
