"""Replicated simulation runs over the comparison methods, with CSV outputs.

A run is described by a YAML file with two sections::

    scenario:            # fields of datagen.ScenarioSpec
      name: ph_indep_q1
      n_total: 1000
      q: 1
      hazard: {kind: weibull_ph, eta: 1.0e-4, nu: 3, coef: [0, 2, 1, -1.2, 0.8]}
      censoring: {kind: uniform, low: 0, high: 120}
      omegas: [[0, 0.5, 0.45, -0.9, -0.7]]
      assignment: softmax
    experiment:          # fields of ExperimentConfig
      reps: 100
      seed: 1
      functionals: [sp]
      horizons: [5, 10, 30, 50, 70]

Every omitted key takes its default.
"""

import csv
import hashlib
import io
import json
import logging
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import yaml

from survcal._backend import BACKEND
from survcal.data import TARGET
from survcal.datagen import ScenarioSpec, censoring_strata, generate_cohort, stream
from survcal.learners import AuditorSpec, ConstantModel, fit_forest, fit_ols
from survcal.mcboost import CalibrationConfig, Halt, calibrate
from survcal.metrics import aggregate, c_index, report_to_csv
from survcal.shift import (
    _weighted_mean,
    fit_propensity,
    multisource_weights,
    naive_estimate,
)
from survcal.survival import FunctionalKind, compute_pseudo

log = logging.getLogger(__name__)

METHODS = ("naive", "ipsw", "ipsw-sub", "lm", "mclm-ridge", "mclm-tree",
           "rf", "mcrf-ridge", "mcrf-tree")
LEARNER_METHODS = METHODS[3:]
SUBGROUPS = ("all", "x3=1", "x3=0", "x4=1", "x4=0")
ABORT_FRACTION = 0.10


class ScenarioFailed(RuntimeError):
    """More than 10% of the replications aborted."""


@dataclass(frozen=True)
class CalibrationSettings:
    alpha: float | None = None
    eta: float = 0.3
    n_buckets: int = 5
    max_iters: int = 200
    bound_h: float | None = None
    ridge_lambda: float = 1.0
    tree_depth: int = 2
    tree_min_leaf: int = 10
    global_auditors: bool = False

    def config(self, auditor):
        spec = (AuditorSpec("ridge", lam=self.ridge_lambda, min_leaf=self.tree_min_leaf)
                if auditor == "ridge"
                else AuditorSpec("tree", depth=self.tree_depth, min_leaf=self.tree_min_leaf))
        return CalibrationConfig(self.alpha, self.eta, self.n_buckets, self.max_iters, spec,
                                 self.bound_h, None, self.global_auditors)


@dataclass(frozen=True)
class ForestSettings:
    n_trees: int = 100
    max_depth: int = 6
    mtry: int | None = None
    min_leaf: int = 5


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioSpec = field(default_factory=ScenarioSpec)
    reps: int = 100
    seed: int = 1
    functionals: tuple = ("sp",)
    horizons: tuple = (5.0, 10.0, 30.0, 50.0, 70.0)
    pseudo: str = "jackknife"
    methods: tuple = METHODS
    subgroups: tuple = SUBGROUPS
    split: tuple = (0.5, 0.25, 0.25)
    calibration: CalibrationSettings = field(default_factory=CalibrationSettings)
    forest: ForestSettings = field(default_factory=ForestSettings)
    cindex: bool = True

    def __post_init__(self):
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}; choose from {', '.join(METHODS)}")
        for f in self.functionals:
            FunctionalKind.parse(f)
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        if abs(sum(self.split) - 1.0) > 1e-9 or len(self.split) != 3:
            raise ValueError("split must be three fractions summing to 1")

    def to_dict(self):
        return json.loads(json.dumps(asdict(self)))

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _tuples(d, keys):
    return {k: tuple(v) if k in keys and isinstance(v, list) else v for k, v in d.items()}


def config_from_dict(raw, overrides=None):
    """Build an :class:`ExperimentConfig` from the YAML tree plus flat overrides.

    Recognised overrides: ``seed``, ``reps``, ``q``, ``functionals``, ``horizons``,
    ``methods``.
    """
    raw = dict(raw or {})
    scen = dict(raw.get("scenario", {}))
    exp = dict(raw.get("experiment", {}))
    unknown = set(raw) - {"scenario", "experiment"}
    if unknown:
        raise ValueError(f"unknown config sections {sorted(unknown)}")
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    if "q" in overrides:
        scen["q"] = float(overrides.pop("q"))
    exp.update(overrides)
    scenario = ScenarioSpec.from_dict(scen)
    cal = CalibrationSettings(**exp.pop("calibration", {}))
    forest = ForestSettings(**exp.pop("forest", {}))
    exp = _tuples(exp, {"functionals", "horizons", "methods", "subgroups", "split"})
    if "horizons" in exp:
        exp["horizons"] = tuple(float(h) for h in exp["horizons"])
    return ExperimentConfig(scenario=scenario, calibration=cal, forest=forest, **exp)


def load_config(path, overrides=None):
    with open(path, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    return config_from_dict(raw, overrides)


def subgroup_mask(X, name):
    """Rows of ``X`` in a named subgroup: ``all`` or ``x<j>=<value>``."""
    if name == "all":
        return np.ones(X.shape[0], dtype=bool)
    col, _, val = name.partition("=")
    if not col.startswith("x") or not val:
        raise ValueError(f"bad subgroup {name!r}")
    return X[:, int(col[1:])] == float(val)


def split_rows(n, fractions, rng):
    """Random train/calibration/validation partition of ``range(n)``."""
    perm = rng.permutation(n)
    n_train = int(round(fractions[0] * n))
    n_cal = int(round(fractions[1] * n))
    return perm[:n_train], perm[n_train:n_train + n_cal], perm[n_train + n_cal:]


def _forest_seed(rep_seed, f_idx, m):
    ss = np.random.SeedSequence([rep_seed, f_idx, m], spawn_key=(5,))
    return int(ss.generate_state(1, np.uint32)[0])


@dataclass
class ReplicationResult:
    rep: int
    seed: int
    # (functional, method, subgroup, horizon) -> (estimate, benchmark)
    estimates: dict = field(default_factory=dict)
    # (method, subgroup, horizon) -> c-index on target rows
    cindex: dict = field(default_factory=dict)
    # (functional, method, horizon, AuditTrace)
    traces: list = field(default_factory=list)
    seconds: float = 0.0
    error: str | None = None


def _ipsw_estimates(cfg, src, tgt, theta, source_names):
    """Pooled and subgroup-refit IPSW estimates for every subgroup."""
    Xs, Xt = src.covariates, tgt.covariates
    multi = len(source_names) > 1
    if multi:
        parts = [Xs[src.domain == s] for s in source_names]
        order = np.concatenate([np.flatnonzero(src.domain == s) for s in source_names])
        model = fit_propensity(parts, Xt)
        w = np.empty(Xs.shape[0])
        w[order] = multisource_weights(parts, model)
    else:
        w = fit_propensity(Xs, Xt).odds(Xs)
    out = {}
    for g in cfg.subgroups:
        ms, mt = subgroup_mask(Xs, g), subgroup_mask(Xt, g)
        if not ms.any() or not mt.any():
            continue
        out[("ipsw", g)] = _weighted_mean(theta[ms], w[ms])
        if g == "all" or "ipsw-sub" not in cfg.methods:
            continue
        if multi:
            parts = [Xs[ms & (src.domain == s)] for s in source_names]
            if any(p.shape[0] == 0 for p in parts):
                continue
            order = np.concatenate([np.flatnonzero(ms & (src.domain == s)) for s in source_names])
            sub_model = fit_propensity(parts, Xt[mt])
            wg = np.empty(Xs.shape[0])
            wg[order] = multisource_weights(parts, sub_model)
            out[("ipsw-sub", g)] = _weighted_mean(theta[ms], wg[ms])
        else:
            sub_model = fit_propensity(Xs[ms], Xt[mt])
            out[("ipsw-sub", g)] = _weighted_mean(theta[ms], sub_model.odds(Xs[ms]))
    return out


def _pseudo(cfg, data, kind):
    if cfg.pseudo == "ipcw":
        cols = cfg.scenario.censoring.columns if cfg.scenario.censoring.kind == "weibull" else (3, 4)
        data = replace(data, strata=censoring_strata(data.covariates, cols))
    return compute_pseudo(data, kind, cfg.horizons, cfg.pseudo)


def run_replication(cfg, rep):
    """One replication: generate, estimate with every method, score on the target."""
    seed = cfg.seed + rep
    res = ReplicationResult(rep, seed)
    start = time.perf_counter()
    cohort = generate_cohort(cfg.scenario, seed)
    data = cohort.dataset
    src, tgt = data.source(), data.target()
    if len(src) < 4 or len(tgt) < 2:
        raise ValueError("degenerate domain split")
    source_names = sorted(set(src.domain))
    Xs, Xt = src.covariates, tgt.covariates
    train, cal, val = split_rows(len(src), cfg.split, stream(seed, "split"))
    masks_t = {g: subgroup_mask(Xt, g) for g in cfg.subgroups}
    masks_s = {g: subgroup_mask(Xs, g) for g in cfg.subgroups}

    for f_idx, fname in enumerate(cfg.functionals):
        kind = FunctionalKind.parse(fname)
        theta_s = _pseudo(cfg, src, kind).values
        theta_t = _pseudo(cfg, tgt, kind).values
        for m, h in enumerate(cfg.horizons):
            upper = 1.0 if kind is FunctionalKind.SP else float(h)
            th_s, th_t = theta_s[:, m], theta_t[:, m]
            bench = {g: float(np.mean(th_t[mk])) for g, mk in masks_t.items() if mk.any()}

            def put(method, g, est):
                if g in bench:
                    res.estimates[(fname, method, g, h)] = (float(est), bench[g])

            if "naive" in cfg.methods:
                for g, mk in masks_s.items():
                    if mk.any():
                        put("naive", g, naive_estimate(th_s[mk]))
            if "ipsw" in cfg.methods or "ipsw-sub" in cfg.methods:
                for (method, g), est in _ipsw_estimates(cfg, src, tgt, th_s, source_names).items():
                    if method in cfg.methods:
                        put(method, g, est)

            wanted = [mth for mth in LEARNER_METHODS if mth in cfg.methods]
            if not wanted:
                continue
            bases = {}
            if any(mth.endswith("lm") or mth.startswith("mclm") for mth in wanted):
                bases["lm"] = fit_ols(Xs[train], th_s[train])
            if any(mth == "rf" or mth.startswith("mcrf") for mth in wanted):
                fs = cfg.forest
                bases["rf"] = fit_forest(Xs[train], th_s[train], fs.n_trees, fs.max_depth,
                                         fs.mtry, _forest_seed(seed, f_idx, m), fs.min_leaf)
            for mth in wanted:
                if mth in bases:
                    predictor = bases[mth]
                else:
                    base_name, auditor = mth[2:].split("-")
                    predictor, trace = calibrate(bases[base_name], Xs, th_s, cal, val,
                                                 cfg.calibration.config(auditor), upper)
                    res.traces.append((fname, mth, h, trace))
                pred_t = predictor.predict(Xt)
                for g, mk in masks_t.items():
                    if mk.any():
                        put(mth, g, float(np.mean(pred_t[mk])))
                if cfg.cindex and kind is FunctionalKind.SP:
                    for g, mk in masks_t.items():
                        try:
                            res.cindex[(mth, g, h)] = c_index(
                                pred_t[mk], tgt.observed_time[mk], tgt.event[mk])
                        except ValueError:
                            pass
    res.seconds = time.perf_counter() - start
    return res


def _safe_replication(args):
    cfg, rep = args
    try:
        return run_replication(cfg, rep)
    except Exception as exc:  # one replication never takes down the run
        log.warning("replication %d (seed %d) failed: %s", rep, cfg.seed + rep, exc)
        res = ReplicationResult(rep, cfg.seed + rep)
        res.error = "".join(traceback.format_exception_only(type(exc), exc)).strip()
        return res


def run_replications(cfg, threads=1):
    """Run all replications; results come back in replication order."""
    jobs = [(cfg, r) for r in range(cfg.reps)]
    if threads <= 1:
        return [_safe_replication(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_safe_replication, jobs))


def summarize(cfg, results):
    """Aggregate successful replications into report rows per functional."""
    ok = [r for r in results if r.error is None]
    reports = {}
    for fname in cfg.functionals:
        rows = []
        for method in cfg.methods:
            for g in cfg.subgroups:
                for h in cfg.horizons:
                    pairs = [r.estimates[(fname, method, g, h)] for r in ok
                             if (fname, method, g, h) in r.estimates]
                    if not pairs:
                        continue
                    est, ben = zip(*pairs)
                    rows.append(aggregate(method, g, h, est, ben))
        reports[fname] = rows
    return reports


def _cindex_csv(cfg, results):
    ok = [r for r in results if r.error is None]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "subgroup", "horizon", "c_index", "se", "reps"])
    for method in cfg.methods:
        for g in cfg.subgroups:
            for h in cfg.horizons:
                vals = [r.cindex[(method, g, h)] for r in ok if (method, g, h) in r.cindex]
                if not vals:
                    continue
                v = np.asarray(vals)
                se = float(np.std(v, ddof=1) / np.sqrt(v.size)) if v.size > 1 else float("nan")
                w.writerow([method, g, repr(float(h)), repr(float(v.mean())),
                            "NA" if np.isnan(se) else repr(se), v.size])
    return buf.getvalue()


def _traces_csv(results, fname):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rep", "method", "horizon", "iteration", "bucket", "delta", "audit_stat",
                "mse", "halt"])
    for r in results:
        for f, method, h, trace in r.traces:
            if f != fname:
                continue
            for rec in trace.records:
                w.writerow([r.rep, method, repr(float(h)), rec.iteration, rec.bucket + 1,
                            repr(rec.delta), repr(rec.audit_stat), repr(rec.mse),
                            trace.halt.value])
    return buf.getvalue()


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def run_scenario(cfg, out_dir, threads=1):
    """Run a configured scenario and write its CSV tables plus ``manifest.json``.

    Returns ``(reports, manifest)``. Raises :class:`ScenarioFailed` (after
    writing outputs) when more than 10% of replications abort.
    """
    os.makedirs(out_dir, exist_ok=True)
    results = run_replications(cfg, threads)
    reports = summarize(cfg, results)
    outputs = {}
    for fname, rows in reports.items():
        path = os.path.join(out_dir, f"report_{fname}.csv")
        report_to_csv(rows, path)
        outputs[f"report_{fname}"] = path
        tpath = os.path.join(out_dir, f"traces_{fname}.csv")
        _write(tpath, _traces_csv(results, fname))
        outputs[f"traces_{fname}"] = tpath
    if cfg.cindex and "sp" in [FunctionalKind.parse(f).value for f in cfg.functionals]:
        cpath = os.path.join(out_dir, "cindex.csv")
        _write(cpath, _cindex_csv(cfg, results))
        outputs["cindex"] = cpath
    failures = [{"rep": r.rep, "seed": r.seed, "error": r.error} for r in results if r.error]
    halts = [t.halt.value for r in results for *_, t in r.traces]
    manifest = {
        "scenario": cfg.scenario.name,
        "config_hash": cfg.digest(),
        "scenario_hash": cfg.scenario.digest(),
        "seed_base": cfg.seed,
        "reps": cfg.reps,
        "methods": list(cfg.methods),
        "split": {"train": cfg.split[0], "calibration": cfg.split[1], "validation": cfg.split[2]},
        "nonstandard_q": cfg.scenario.nonstandard_q,
        "backend": BACKEND,
        "outputs": outputs,
        "seconds_per_replication": [round(r.seconds, 3) for r in results],
        "failures": failures,
        "calibrate_runs": len(halts),
        "converged_runs": halts.count(Halt.CONVERGED.value),
        "config": cfg.to_dict(),
    }
    _write(os.path.join(out_dir, "manifest.json"), json.dumps(manifest, indent=2) + "\n")
    if len(failures) > ABORT_FRACTION * cfg.reps:
        raise ScenarioFailed(f"{len(failures)} of {cfg.reps} replications failed")
    return reports, manifest


def estimate_single(data, method, kind, horizons, pseudo="jackknife", calibration=None,
                    forest=None, seed=0, split=(0.5, 0.25, 0.25), subgroup=None):
    """Estimate the target-domain functional of a user dataset with one method.

    Source rows are every row whose domain is not ``"target"``. Returns a list
    of ``(horizon, estimate, trace_or_None)``; for ``ipsw-sub`` the estimate is
    a dict keyed by the values of covariate column ``subgroup``.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    kind = FunctionalKind.parse(kind)
    calibration = calibration or CalibrationSettings()
    forest = forest or ForestSettings()
    src = data.subset(data.domain != TARGET)
    tgt = data.subset(data.domain == TARGET)
    if len(src) < 2:
        raise ValueError("need at least two source rows")
    needs_target = method != "naive"
    if needs_target and len(tgt) == 0:
        raise ValueError(f"method {method!r} needs target rows (domain == 'target')")
    theta = compute_pseudo(src, kind, horizons, pseudo).values
    names = sorted(set(src.domain))
    Xs = src.covariates
    out = []
    rng_split = np.random.default_rng([seed, 4])
    train, cal, val = split_rows(len(src), split, rng_split)
    for m, h in enumerate(np.atleast_1d(np.asarray(horizons, dtype=float))):
        th = theta[:, m]
        upper = 1.0 if kind is FunctionalKind.SP else float(h)
        trace = None
        if method == "naive":
            est = naive_estimate(th)
        elif method == "ipsw":
            if len(names) > 1:
                parts = [Xs[src.domain == s] for s in names]
                order = np.concatenate([np.flatnonzero(src.domain == s) for s in names])
                model = fit_propensity(parts, tgt.covariates)
                w = np.empty(len(src))
                w[order] = multisource_weights(parts, model)
            else:
                w = fit_propensity(Xs, tgt.covariates).odds(Xs)
            est = _weighted_mean(th, w)
        elif method == "ipsw-sub":
            if subgroup is None:
                raise ValueError("ipsw-sub needs a subgroup column")
            from survcal.shift import ipsw_subgroup
            est = ipsw_subgroup(th, Xs, Xs[:, subgroup], tgt.covariates, tgt.covariates[:, subgroup])
        else:
            if method in ("lm", "mclm-ridge", "mclm-tree"):
                base = fit_ols(Xs[train], th[train])
            else:
                base = fit_forest(Xs[train], th[train], forest.n_trees, forest.max_depth,
                                  forest.mtry, _forest_seed(seed, 0, m), forest.min_leaf)
            predictor = base
            if method.startswith("mc"):
                predictor, trace = calibrate(base, Xs, th, cal, val,
                                             calibration.config(method.split("-")[1]), upper)
            est = float(np.mean(predictor.predict(tgt.covariates)))
        out.append((float(h), est, trace))
    return out


__all__ = [
    "METHODS", "SUBGROUPS", "ExperimentConfig", "CalibrationSettings", "ForestSettings",
    "ScenarioFailed", "config_from_dict", "load_config", "run_replication", "run_scenario",
    "estimate_single", "subgroup_mask", "split_rows", "ConstantModel",
]
