"""Command-line entry points: pipeline, sweep, verify-theory, sensitivity, explain, segment.

Exit codes: 0 success, 1 usage error, 2 run failure, 3 verification failure.
"""
from __future__ import annotations

import argparse
import csv
import itertools
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import interp_eval, metrics, theory
from .basemodel import load_scores, proba_to_logit, train_logreg
from .debias import CommodConfig, ConceptRatioNet, explain, train_commod
from .netcore import sigmoid
from .synthetic import make_synthetic
from .tabular import Schema, SplitSpec, load_csv, preprocess, split

EXIT_OK, EXIT_USAGE, EXIT_RUN, EXIT_VERIFY = 0, 1, 2, 3

# Settings used for the built-in synthetic data when no config is given.
SYNTHETIC_COMMOD = {"lambda_fair": 4.0, "lambda_ratio": 0.05, "lr_gen": 0.002, "epochs": 150}
DEFAULT_CONFIG = {
    "data": {"synthetic": {"n": 4000, "seed": 0}},
    "split": {"train_fraction": 0.7, "seed": 0, "refit_on_train": False},
    "base": {"epochs": 2000, "lr": 0.5},
    "commod": {},
    "grid": {"lambda_fair": [1.0, 2.0, 4.0, 8.0], "lambda_ratio": [0.05], "seeds": [0]},
    "segments": "from_results",
}


class UsageError(Exception):
    pass


class RunFailure(Exception):
    def __init__(self, stage, cause):
        super().__init__(f"run failed at stage '{stage}': {cause}")
        self.stage = stage


class _Stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, kind, exc, tb):
        if exc is not None and not isinstance(exc, (RunFailure, UsageError)):
            raise RunFailure(self.name, f"{kind.__name__}: {exc}") from exc
        return False


# --------------------------------------------------------------------------
# configuration


def load_run_config(path=None, synthetic=False, seed=None, fairness=None, strict_paper=False):
    """Merge a JSON run config over the defaults and apply CLI overrides."""
    cfg = json.loads(json.dumps(DEFAULT_CONFIG))
    if path is not None:
        try:
            with open(path) as fh:
                user = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from None
        for key, val in user.items():
            if key not in cfg and key not in ("out",):
                raise UsageError(f"unknown config section '{key}'")
            cfg[key] = {**cfg[key], **val} if isinstance(cfg.get(key), dict) and isinstance(val, dict) else val
        if "data" in user:
            cfg["data"] = user["data"]
    if synthetic or path is None:
        cfg["data"] = {"synthetic": cfg["data"].get("synthetic", DEFAULT_CONFIG["data"]["synthetic"])}
        if path is None:
            cfg["commod"] = {**SYNTHETIC_COMMOD, **cfg["commod"]}
    if seed is not None:
        cfg["split"]["seed"] = seed
        cfg["commod"]["seed"] = seed
    if fairness is not None:
        cfg["commod"]["fairness_mode"] = fairness.upper()
    if strict_paper:
        cfg["commod"]["diversity"] = "cosine_distance"
    data = cfg["data"]
    if "synthetic" not in data:
        for key in ("path", "schema"):
            if key not in data:
                raise UsageError(f"data section needs '{key}' (or 'synthetic')")
            if not Path(data[key]).exists():
                raise UsageError(f"{key} does not exist: {data[key]}")
    scores = cfg["base"].get("scores_path")
    if scores is not None and not Path(scores).exists():
        raise UsageError(f"scores_path does not exist: {scores}")
    try:
        CommodConfig.from_dict(cfg["commod"])
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid commod config: {exc}") from None
    return cfg


def load_dataset(data_cfg):
    if "synthetic" in data_cfg:
        syn = data_cfg["synthetic"]
        return make_synthetic(**syn)
    schema = Schema.load(data_cfg["schema"])
    return preprocess(load_csv(data_cfg["path"], schema), schema)


def fairness_of(yhat, y, s, mode):
    if mode == "DP":
        return metrics.p_rule(yhat, s)
    return metrics.disparate_mistreatment(yhat, y, s)[2]


def _base_logits(cfg, ds, train, test):
    base_cfg = cfg["base"]
    if base_cfg.get("scores_path"):
        clamp = base_cfg.get("clamp_eps", 1e-6)
        p_tr = load_scores(base_cfg["scores_path"], train.index)
        p_te = load_scores(base_cfg["scores_path"], test.index)
        return None, proba_to_logit(p_tr, clamp), proba_to_logit(p_te, clamp)
    model = train_logreg(train, base_cfg.get("epochs", 2000), base_cfg.get("lr", 0.5),
                         clamp_eps=base_cfg.get("clamp_eps", 1e-6))
    return model, model.logits(train.X), model.logits(test.X)


def run_once(cfg, ds=None, keep_models=False):
    """Split, fit f, fit COMMOD and measure both on the test rows."""
    with _Stage("load"):
        ds = load_dataset(cfg["data"]) if ds is None else ds
    with _Stage("split"):
        sp = cfg["split"]
        train, test = split(ds, SplitSpec(sp.get("train_fraction", 0.7), sp.get("seed", 0)),
                            sp.get("refit_on_train", False))
    with _Stage("base_model"):
        base, f_tr, f_te = _base_logits(cfg, ds, train, test)
    with _Stage("commod"):
        ccfg = CommodConfig.from_dict(cfg["commod"])
        t0 = time.perf_counter()
        trained = train_commod(train, None, ccfg, f_logit=f_tr)
        runtime = time.perf_counter() - t0
    with _Stage("report"):
        mode = ccfg.fairness_mode
        yf, yg = (f_te > 0).astype(int), trained.predict(test.X, f_te)
        result = {
            "fair_f": fairness_of(yf, test.y, test.s, mode),
            "acc_f": metrics.accuracy(yf, test.y),
            "fair_g": fairness_of(yg, test.y, test.s, mode),
            "acc_g": metrics.accuracy(yg, test.y),
            "change_proportion": metrics.change_proportion(yf, yg),
            "sparsity": metrics.concept_sparsity(trained.ratio_net.W)[1],
            "max_abs_cos": metrics.max_abs_cosine(trained.ratio_net.W),
            "runtime": runtime,
        }
    if keep_models:
        result["_objects"] = dict(ds=ds, train=train, test=test, base=base, f_tr=f_tr, f_te=f_te,
                                  trained=trained)
    return result


# --------------------------------------------------------------------------
# commands


def _write_rows_csv(rows, path):
    rows = list(rows)
    if not rows:
        Path(path).write_text("")
        return
    keys = list(rows[0])
    for r in rows[1:]:
        keys += [k for k in r if k not in keys]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        w.writerows(rows)


def _dump(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _report_pair(yf, yg, y, s):
    before = metrics.FairnessReport.from_predictions(yf, y, s)
    after = metrics.FairnessReport.from_predictions(yg, y, s, yhat_ref=yf)
    return {"before": before.to_dict(), "after": after.to_dict()}


def cmd_pipeline(cfg, out):
    """End-to-end run; writes reports, explanation, calibration and models into ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    res = run_once(cfg, keep_models=True)
    o = res.pop("_objects")
    with _Stage("report"):
        train, test, trained = o["train"], o["test"], o["trained"]
        yf_tr, yf_te = (o["f_tr"] > 0).astype(int), (o["f_te"] > 0).astype(int)
        yg_tr, yg_te = trained.predict(train.X, o["f_tr"]), trained.predict(test.X, o["f_te"])
        concepts = explain(trained.ratio_net, train.feature_names)
        report = {
            "config": cfg,
            "seed": trained.config.seed,
            "train": _report_pair(yf_tr, yg_tr, train.y, train.s),
            "test": _report_pair(yf_te, yg_te, test.y, test.s),
            "concepts": concepts,
            "concept_sparsity": res["sparsity"],
            "max_abs_cos": res["max_abs_cos"],
        }
        _dump(report, out / "report.json")
        cal = metrics.calibration_table(sigmoid(o["f_te"]), trained.predict_proba(test.X, o["f_te"]))
        metrics.write_csv(cal, out / "calibration.csv")
        _write_rows_csv(trained.history, out / "history.csv")
        model = trained.to_dict()
        model["feature_names"] = list(train.feature_names)
        _dump(model, out / "commod_model.json")
        if o["base"] is not None:
            _dump(o["base"].to_dict(), out / "base_model.json")
        _dump({"timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"), "wall_seconds": time.time() - t0,
               "train_seconds": res["runtime"]}, out / "run_info.json")
    return report


def _grid_runs(cfg):
    grid = dict(cfg["grid"])
    seeds = grid.pop("seeds", [cfg["split"].get("seed", 0)])
    if not seeds or any(len(v) == 0 for v in grid.values()):
        raise UsageError("sweep grid must be nonempty")
    keys = sorted(grid)
    runs = []
    for values in itertools.product(*(grid[k] for k in keys)):
        for seed in seeds:
            run = json.loads(json.dumps(cfg))
            run["commod"].update(dict(zip(keys, values)), seed=seed)
            run["split"]["seed"] = seed
            runs.append((dict(zip(keys, values)), seed, run))
    return runs


def _safe_run(run):
    try:
        return run_once(run), None
    except Exception as exc:  # recorded per row, the sweep continues
        return None, str(exc)


def _resolve_grid(spec, fair, acc, mode):
    orientation = "higher_fair_better" if mode == "DP" else "lower_fair_better"
    if spec == "from_results" or spec is None:
        return interp_eval.grid_from_results(fair, acc, orientation)
    if isinstance(spec, str):
        grids = interp_eval.default_grids()
        if spec in grids:
            return grids[spec]
        return interp_eval.SegmentGrid.load(spec)
    return interp_eval.SegmentGrid.from_dict(spec)


def quartile_table(rows, grid):
    """Mean change proportion per (fairness quartile, accuracy quartile); None when empty."""
    cells = {}
    for r in rows:
        if r.get("error"):
            continue
        fq, aq = interp_eval.segment_assign(r["fair_g"], r["acc_g"], grid)
        cells.setdefault((fq, aq), []).append(r["change_proportion"])
    return [{"fair_quartile": f"Q{fq}", "acc_quartile": f"Q{aq}",
             "mean_change_proportion": float(np.mean(cells[(fq, aq)])) if (fq, aq) in cells else None,
             "runs": len(cells.get((fq, aq), []))}
            for fq in range(1, 5) for aq in range(1, 5)]


def cmd_sweep(cfg, out, parallel=None):
    """Run the whole grid, then segment the runs and aggregate changes per cell."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    runs = _grid_runs(cfg)
    parallel = parallel or os.cpu_count() or 1
    if parallel > 1 and len(runs) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(_safe_run, [r for _, _, r in runs]))
    else:
        results = [_safe_run(r) for _, _, r in runs]
    rows = []
    for i, ((lams, seed, _), (res, err)) in enumerate(zip(runs, results)):
        row = {"config_id": i, **lams, "seed": seed}
        if err is None:
            row.update(res)
            row["error"] = ""
        else:
            row["error"] = err
        rows.append(row)
    ok = [r for r in rows if not r["error"]]
    mode = cfg["commod"].get("fairness_mode", "DP")
    table, grid = [], None
    if ok:
        grid = _resolve_grid(cfg.get("segments"), [r["fair_g"] for r in ok], [r["acc_g"] for r in ok], mode)
        table = quartile_table(rows, grid)
    _write_rows_csv(rows, out / "sweep.csv")
    _write_rows_csv(table, out / "quartiles.csv")
    stable_rows = [{k: v for k, v in r.items() if k != "runtime"} for r in rows]
    _dump({"rows": stable_rows, "segment_grid": None if grid is None else grid.to_dict(),
           "quartile_table": table}, out / "sweep.json")
    _dump({"timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
           "runtimes": [r.get("runtime") for r in rows]}, out / "run_info.json")
    return rows, table


def cmd_verify_theory(seed=0, out=None, inject_bug=False, strict_paper=False):
    report = theory.verify_all(seed=seed, negate_boc=inject_bug, balanced=not strict_paper)
    if out is not None:
        Path(out).mkdir(parents=True, exist_ok=True)
        Path(out, "theory_report.json").write_text(theory.dumps_report(report) + "\n")
    return report


SENSITIVITY_COLUMNS = ["fair_f", "acc_f", "lambda_ratio", "lambda_fair"]
SENSITIVITY_TARGETS = {"dist": "change_proportion", "acc": "acc_g", "fair": "fair_g"}


def sensitivity_fit(rows):
    """The three regressions of change, accuracy and fairness of g on f's scores and the λs."""
    lf = {r["lambda_fair"] for r in rows}
    lr = {r["lambda_ratio"] for r in rows}
    if len(lf) < 2 or len(lr) < 2:
        raise ValueError("λ columns constant, regression rank-deficient")
    X = np.array([[r[c] for c in SENSITIVITY_COLUMNS] for r in rows], dtype=float)
    out = {}
    for name, col in SENSITIVITY_TARGETS.items():
        coef, r2 = metrics.ols_fit(X, [r[col] for r in rows], SENSITIVITY_COLUMNS)
        out[name] = {"r_squared": r2,
                     "coefficients": dict(zip(["intercept", *SENSITIVITY_COLUMNS], map(float, coef)))}
    return out


def cmd_sensitivity(cfg, seeds=20, lambda_fair=(0.5, 1.0, 1.5), lambda_ratio=(0.01, 0.05, 0.1),
                    out=None, parallel=1):
    """Fixed dataset; each seed re-splits, refits f and refits COMMOD over the λ grid."""
    if seeds < 5:
        raise UsageError("sensitivity needs at least 5 seeds")
    if len(set(lambda_fair)) < 2 or len(set(lambda_ratio)) < 2:
        raise ValueError("λ columns constant, regression rank-deficient")
    ds = load_dataset(cfg["data"])
    jobs = []
    for seed in range(seeds):
        for a, b in itertools.product(lambda_fair, lambda_ratio):
            run = json.loads(json.dumps(cfg))
            run["split"]["seed"] = seed
            run["commod"].update(seed=seed, lambda_fair=a, lambda_ratio=b)
            jobs.append(run)
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(run_once, jobs, itertools.repeat(ds)))
    else:
        results = [run_once(j, ds) for j in jobs]
    rows = [{"seed": j["split"]["seed"], "lambda_fair": j["commod"]["lambda_fair"],
             "lambda_ratio": j["commod"]["lambda_ratio"], **res} for j, res in zip(jobs, results)]
    fit = sensitivity_fit(rows)
    if out is not None:
        Path(out).mkdir(parents=True, exist_ok=True)
        _write_rows_csv(rows, Path(out, "sensitivity_runs.csv"))
        _dump({"seeds": seeds, "lambda_fair": list(lambda_fair), "lambda_ratio": list(lambda_ratio),
               "regressions": fit}, Path(out, "sensitivity.json"))
    return fit, rows


def cmd_explain(model_path, eps=0.01):
    with open(model_path) as fh:
        d = json.load(fh)
    net = ConceptRatioNet.from_dict(d["ratio_net"])
    return explain(net, d.get("feature_names"), eps)


def cmd_segment(fairness, accuracy, grid="law_dp"):
    g = _resolve_grid(grid, None, None, "DP")
    fq, aq = interp_eval.segment_assign(fairness, accuracy, g)
    return {"grid": g.name or str(grid), "fair_quartile": f"Q{fq}", "acc_quartile": f"Q{aq}"}


# --------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", help="run config JSON")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--parallel", type=int, default=1)
    common.add_argument("--synthetic", action="store_true", help="use the built-in synthetic dataset")
    common.add_argument("--fairness", choices=["dp", "eo"])
    common.add_argument("--strict-paper", action="store_true",
                        help="literal formulas: unbalanced theory terms, 1-cos diversity")
    p = _Parser(prog="commod", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("pipeline", parents=[common])
    sub.add_parser("sweep", parents=[common])
    v = sub.add_parser("verify-theory", parents=[common])
    v.add_argument("--inject-bug", action="store_true", help="negate the optimal score (harness check)")
    s = sub.add_parser("sensitivity", parents=[common])
    s.add_argument("--seeds", type=int, default=20)
    s.add_argument("--lambda-fair", type=float, nargs="+", default=[0.5, 1.0, 1.5])
    s.add_argument("--lambda-ratio", type=float, nargs="+", default=[0.01, 0.05, 0.1])
    e = sub.add_parser("explain", parents=[common])
    e.add_argument("model", help="commod_model.json written by pipeline")
    e.add_argument("--eps", type=float, default=0.01)
    g = sub.add_parser("segment", parents=[common])
    g.add_argument("fairness_value", type=float)
    g.add_argument("accuracy", type=float)
    g.add_argument("--grid", default="law_dp", help="packaged grid name or JSON path")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify-theory":
            report = cmd_verify_theory(args.seed or 0, args.out, args.inject_bug, args.strict_paper)
            for suite in report["suites"]:
                print(f"{suite['suite']}: {'pass' if suite['passed'] else 'FAIL'}")
            return EXIT_OK if report["passed"] else EXIT_VERIFY
        if args.command == "explain":
            print(json.dumps(cmd_explain(args.model, args.eps), indent=1))
            return EXIT_OK
        if args.command == "segment":
            print(json.dumps(cmd_segment(args.fairness_value, args.accuracy, args.grid)))
            return EXIT_OK
        cfg = load_run_config(args.config, args.synthetic, args.seed, args.fairness, args.strict_paper)
        if args.command == "pipeline":
            report = cmd_pipeline(cfg, args.out)
            print(json.dumps(report["test"], indent=1))
        elif args.command == "sweep":
            rows, _ = cmd_sweep(cfg, args.out, args.parallel)
            failed = sum(1 for r in rows if r["error"])
            print(f"{len(rows)} runs, {failed} failed; results in {args.out}")
        elif args.command == "sensitivity":
            fit, _ = cmd_sensitivity(cfg, args.seeds, args.lambda_fair, args.lambda_ratio,
                                     args.out, args.parallel)
            for name, r in fit.items():
                print(f"{name}: R^2 = {r['r_squared']:.4f}")
        return EXIT_OK
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RunFailure, ValueError, KeyError, OSError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUN


if __name__ == "__main__":
    sys.exit(main())
