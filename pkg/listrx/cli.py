"""
Command-line interface: fit, evaluate, mincost, score, simulate and probe.

Exit codes: 0 success, 2 invalid input, 3 a fit did not converge, 4 I/O
failure. Diagnostics go to standard error; data goes to files or standard
output.
"""
import sys
import json
import argparse

import numpy as np
import pandas as pd

import listrx
from listrx.data import load_csv, load_covariates
from listrx.regime import DecisionList, CostModel, empirical_cost, \
    needed_covariates
from listrx.costmin import min_cost_equivalent
from listrx.control import RegimeLearner
from listrx.search import complexity_probe
from listrx.simlab import get_setting, run_study, consistency_probe, \
    alpha_sensitivity
from listrx.utils import get_logger, set_log_level, dump_json, \
    DataValidationError, FitError, BootstrapError, StudyError

__author__ = "The listrx developers"

logger = get_logger("listrx.cli")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_FIT = 3
EXIT_IO = 4

FAST_PROFILE = {"n_bootstraps": 100, "reps": 50}


def _run_flags():
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--seed", type=int, default=0,
                        help="Seed for folds, bootstrap weights and "
                             "simulated data (default 0).")
    parent.add_argument("--threads", type=int, default=1,
                        help="joblib workers for replicates (default 1).")
    parent.add_argument("--log-level", default="INFO",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                        help="Standard error log level (default INFO).")
    return parent


def _data_flags():
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--data", required=True, help="Input CSV file.")
    parent.add_argument("--treatment-col", required=True,
                        help="Column holding the treatment labels.")
    parent.add_argument("--outcome-col", required=True,
                        help="Column holding the outcome (higher is "
                             "better).")
    parent.add_argument("--outcome-kind", default="continuous",
                        choices=["continuous", "binary"])
    parent.add_argument("--covariates", default=None,
                        help="Comma-separated covariate columns (default: "
                             "all other columns).")
    parent.add_argument("--cutoffs", default="percentiles:9",
                        help="'percentiles:k' or 'file:PATH' (default "
                             "percentiles:9).")
    parent.add_argument("--propensity", default="multinomial-logistic",
                        choices=["multinomial-logistic",
                                 "sample-proportion"])
    parent.add_argument("--penalty", default="lasso",
                        choices=["lasso", "none"])
    return parent


def _search_flags():
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--l-max", type=int, default=10,
                        help="Maximum number of clauses (default 10).")
    parent.add_argument("--alpha", type=float, default=0.05,
                        help="One-sided level of the variance gate "
                             "(default 0.05).")
    parent.add_argument("--min-region", type=int, default=0,
                        help="Minimum subjects on each side of a clause.")
    parent.add_argument("--cost-file", default=None,
                        help="'covariate,cost' lines; unlisted covariates "
                             "cost 1.")
    return parent


def build_parser():
    """
    The argument parser of the listrx command.

    Returns:
        (argparse.ArgumentParser)
    """
    parser = argparse.ArgumentParser(
        prog="listrx",
        description="Estimate, evaluate and apply decision-list treatment "
                    "regimes.")
    parser.add_argument("--version", action="version",
                        version="listrx {}".format(listrx.__version__))
    sub = parser.add_subparsers(dest="command")
    sub.required = True
    run, data, search = _run_flags(), _data_flags(), _search_flags()

    p = sub.add_parser("fit", parents=[data, search, run],
                       help="Fit a decision-list regime.")
    p.add_argument("--no-mincost", action="store_true",
                   help="Keep the searched list instead of its minimal-cost "
                        "equivalent.")
    p.add_argument("--out", default=None,
                   help="Regime JSON (default standard output).")
    p.add_argument("--text", default=None, help="Rendered if-then text.")
    p.add_argument("--trace", default=None, help="Search trace JSON.")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("evaluate", parents=[data, search, run],
                       help="Value of the fitted (or a given) regime with a "
                            "prediction interval.")
    p.add_argument("--regime", default=None,
                   help="Regime JSON to evaluate (default: refit and "
                        "bias-correct the fitted regime).")
    p.add_argument("--bootstrap", type=int, default=200,
                   help="Bootstrap replicates B (default 200).")
    p.add_argument("--level", type=float, default=0.95,
                   help="Interval coverage (default 0.95).")
    p.add_argument("--refit-cv", action="store_true",
                   help="Rerun the LASSO cross-validation in every "
                        "replicate.")
    p.add_argument("--out", default=None,
                   help="Report JSON (default standard output).")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("mincost", parents=[run],
                       help="Rewrite a regime into its cheapest equivalent "
                            "on a dataset.")
    p.add_argument("--data", required=True, help="Input CSV file.")
    p.add_argument("--regime", required=True, help="Regime JSON.")
    p.add_argument("--cost-file", default=None,
                   help="'covariate,cost' lines; unlisted covariates cost "
                        "1.")
    p.add_argument("--l-max", type=int, default=None,
                   help="Longest rewrite (default: the input length).")
    p.add_argument("--out", default=None,
                   help="Regime JSON (default standard output).")
    p.set_defaults(func=cmd_mincost)

    p = sub.add_parser("score", parents=[run],
                       help="Recommend a treatment for every row.")
    p.add_argument("--data", required=True, help="Input CSV file.")
    p.add_argument("--regime", required=True, help="Regime JSON.")
    p.add_argument("--out", default=None,
                   help="Output CSV (default standard output).")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("simulate", parents=[run],
                       help="Run a Monte Carlo study on a benchmark "
                            "setting.")
    p.add_argument("--setting", default="I",
                   choices=["I", "II", "III", "IV", "V", "VI", "VII"])
    p.add_argument("--outcome", default="cont", choices=["cont", "bin"])
    p.add_argument("--p", type=int, default=10, choices=[10, 50])
    p.add_argument("--n", default=None,
                   help="Training size; comma-separated sizes for the "
                        "consistency study (default: the setting's size, "
                        "10000 for consistency).")
    p.add_argument("--reps", type=int, default=100,
                   help="Replicates (default 100).")
    p.add_argument("--estimator", default="both",
                   choices=["decision-list", "q-linear", "both"])
    p.add_argument("--test-n", type=int, default=100000,
                   help="Test draws for true values (default 100000).")
    p.add_argument("--full-test", action="store_true",
                   help="Use 1000000 test draws.")
    p.add_argument("--study", default="table",
                   choices=["table", "consistency", "alpha", "coverage"])
    p.add_argument("--bootstrap", type=int, default=200,
                   help="Bootstrap replicates in coverage studies.")
    p.add_argument("--fast", action="store_true",
                   help="Coverage profile with B=100 and 50 studies.")
    p.add_argument("--out", default=None,
                   help="Results JSON (default standard output).")
    p.add_argument("--csv", default=None, help="Also write rows as CSV.")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("probe", parents=[run],
                       help="Measure how the clause search scales.")
    p.add_argument("--repeats", type=int, default=3,
                   help="Timings per point (default 3).")
    p.add_argument("--out", default=None,
                   help="Report JSON (default standard output).")
    p.set_defaults(func=cmd_probe)
    return parser


def _learner(args, **extra):
    settings = dict(grid=args.cutoffs, propensity=args.propensity,
                    penalty=args.penalty, l_max=args.l_max, alpha=args.alpha,
                    min_region=args.min_region, seed=args.seed,
                    threads=args.threads, log_level=args.log_level)
    settings.update(extra)
    return RegimeLearner(**settings)


def _load(args):
    covariates = args.covariates.split(",") if args.covariates else None
    return load_csv(args.data, args.treatment_col, args.outcome_col,
                    args.outcome_kind, covariates)


def _costs(path, names):
    return CostModel.from_file(path, names) if path else \
        CostModel.uniform(len(names))


def _emit(doc, path):
    text = dump_json(doc, path)
    if path is None:
        sys.stdout.write(text + "\n")


def _data_doc(data, path):
    return {"path": path, "treatment_col": data.treatment_name,
            "outcome_col": data.outcome_name,
            "outcome_kind": data.outcome_kind, "n": data.n,
            "covariates": list(data.covariate_names),
            "treatments": list(data.treatment_labels)}


def _read_regime(path):
    with open(path) as f:
        doc = json.load(f)
    for key in ("regime", "data"):
        if key not in doc:
            raise DataValidationError("{} is not a listrx regime file "
                                      "(missing '{}').".format(path, key))
    return doc


def cmd_fit(args):
    """Fit a regime and write it with its text rendering and trace."""
    data = _load(args)
    learner = _learner(args, mincost=not args.no_mincost)
    costs = _costs(args.cost_file, data.covariate_names)
    fit = learner.fit(data, costs=costs)
    doc = fit.to_dict()
    doc["data"] = _data_doc(data, args.data)
    _emit(doc, args.out)
    if args.text:
        with open(args.text, "w") as f:
            f.write(fit.text() + "\n")
    elif args.out:
        sys.stdout.write(fit.text() + "\n")
    if args.trace:
        trace = fit.trace.to_dict(data.covariate_names,
                                  data.treatment_labels)
        trace["version"] = listrx.__version__
        dump_json(trace, args.trace)
    return EXIT_OK


def cmd_evaluate(args):
    """Value report of the fitted regime, or of a regime file."""
    data = _load(args)
    learner = _learner(args, n_bootstraps=args.bootstrap, level=args.level,
                       refit_cv=args.refit_cv)
    fit = learner.fit(data, costs=_costs(args.cost_file,
                                         data.covariate_names))
    if args.regime:
        regime = DecisionList.from_dict(_read_regime(args.regime)["regime"],
                                        data.covariate_names,
                                        data.treatment_labels)
        report = learner.evaluate(fit, regime)
        mode = "plug-in"
    else:
        regime = fit.regime
        report = learner.evaluate(fit)
        mode = "bootstrap"
    names, labels = data.covariate_names, data.treatment_labels
    doc = {"version": listrx.__version__, "config": dict(learner.config),
           "data": _data_doc(data, args.data), "mode": mode,
           "regime": regime.to_dict(names, labels),
           "text": regime.render(names, labels),
           "report": report.to_dict()}
    _emit(doc, args.out)
    block = "{}\nValue {:.4f} (se {:.4f}), corrected {:.4f}, {:.0f}% " \
            "interval [{:.4f}, {:.4f}]\n".format(
                doc["text"], report.value, report.sigma, report.corrected,
                100 * report.level, *report.interval)
    if args.out:
        sys.stdout.write(block)
    else:
        logger.info(block)
    return EXIT_OK


def cmd_mincost(args):
    """Rewrite a regime file into its minimal-cost equivalent."""
    doc = _read_regime(args.regime)
    names = doc["data"]["covariates"]
    labels = doc["data"]["treatments"]
    X, _ = load_covariates(args.data, names)
    pi = DecisionList.from_dict(doc["regime"], names, labels)
    costs = _costs(args.cost_file, names)
    best = min_cost_equivalent(pi, X, costs, l_max=args.l_max)
    out = {"version": listrx.__version__,
           "config": {"cost_file": args.cost_file, "l_max": args.l_max},
           "data": dict(doc["data"], path=args.data, n=int(X.shape[0])),
           "regime": best.to_dict(names, labels),
           "text": best.render(names, labels),
           "cost": empirical_cost(best, X, costs),
           "original_cost": empirical_cost(pi, X, costs),
           "original": doc["regime"]}
    _emit(out, args.out)
    logger.info("Cost {:.4f} -> {:.4f}".format(out["original_cost"],
                                               out["cost"]))
    return EXIT_OK


def cmd_score(args):
    """One recommendation per row, with the covariates each row needed."""
    doc = _read_regime(args.regime)
    labels = doc["data"]["treatments"]
    used = []
    for cl in doc["regime"]["clauses"]:
        for at in cl["atoms"]:
            if at["col"] not in used:
                used.append(at["col"])
    X, frame = load_covariates(args.data, used)
    pi = DecisionList.from_dict(doc["regime"], used, labels)
    rec = pi.recommend(X)
    needed = needed_covariates(pi, X)
    out = pd.DataFrame({
        "row": np.arange(len(frame)),
        "recommendation": [labels[a] for a in rec],
        "needed": [";".join(used[j] for j in sorted(s)) for s in needed]})
    if args.out:
        out.to_csv(args.out, index=False)
    else:
        out.to_csv(sys.stdout, index=False)
    return EXIT_OK


def _sizes(text, default):
    if text is None:
        return default
    return tuple(int(v) for v in str(text).split(",") if v.strip())


def cmd_simulate(args):
    """Monte Carlo study of a benchmark setting."""
    setting = get_setting(args.setting, args.p, args.outcome)
    test_n = 1000000 if args.full_test else args.test_n
    reps, B = args.reps, args.bootstrap
    if args.fast:
        reps, B = FAST_PROFILE["reps"], FAST_PROFILE["n_bootstraps"]
    common = dict(test_n=test_n, seed=args.seed, n_jobs=args.threads,
                  learner_kwargs={"log_level": args.log_level})
    if args.study == "table":
        n = _sizes(args.n, (None,))[0]
        metrics = run_study(setting, reps, args.estimator, n=n, **common)
        rows = [m.to_dict() for m in metrics]
        results = {"metrics": rows}
    elif args.study == "coverage":
        n = _sizes(args.n, (None,))[0]
        metrics = run_study(setting, reps, "decision-list", n=n,
                            coverage=True, n_bootstraps=B, **common)
        rows = [m.to_dict() for m in metrics]
        results = {"metrics": rows}
    elif args.study == "consistency":
        rows = consistency_probe(setting, _sizes(args.n, (10000,)), reps,
                                 setting.p, setting.outcome_kind, **common)
        results = {"rows": rows}
    else:
        n = _sizes(args.n, (None,))[0]
        results = alpha_sensitivity(setting, reps=reps, n=n, p=setting.p,
                                    outcome_kind=setting.outcome_kind,
                                    **common)
        rows = results["per_level"]
    doc = {"version": listrx.__version__,
           "config": {"setting": setting.id, "outcome": args.outcome,
                      "p": args.p, "n": args.n, "reps": reps,
                      "estimator": args.estimator, "test_n": test_n,
                      "study": args.study, "bootstrap": B,
                      "seed": args.seed, "threads": args.threads},
           "setting": setting.to_dict(), "study": args.study,
           "results": results}
    _emit(doc, args.out)
    if args.csv:
        pd.DataFrame(rows).to_csv(args.csv, index=False)
    return EXIT_OK


def cmd_probe(args):
    """Timing report of the clause search."""
    report = complexity_probe(repeats=args.repeats, seed=args.seed)
    report["version"] = listrx.__version__
    _emit(report, args.out)
    return EXIT_OK


def main(argv=None):
    """
    Entry point of the listrx command.

    Args:
        argv ([str]): Arguments; sys.argv[1:] if None.

    Returns:
        (int) The exit code.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_INVALID
    set_log_level(args.log_level)
    try:
        return args.func(args)
    except (DataValidationError, KeyError, ValueError) as e:
        logger.error("Invalid input: {}".format(e))
        return EXIT_INVALID
    except (FitError, BootstrapError, StudyError) as e:
        logger.error("Fit failed: {}".format(e))
        return EXIT_FIT
    except OSError as e:
        logger.error("I/O error: {}".format(e))
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
