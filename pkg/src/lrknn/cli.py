"""Command-line front end.

Every subcommand maps onto one library operation. Exit status is 0 on
success, 1 on a domain error and 2 on a usage error. Errors go to stderr as a
human-readable line followed by one JSON object.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
import tempfile
from pathlib import Path

from . import LrknnError, __version__
from .dataset import (
    SyntheticSpec,
    case_base_to_csv,
    chi_square_homogeneity,
    generate_synthetic,
    inject_random_attributes,
    cohort_spec,
    random_split,
    read_case_base,
    validate,
)
from .evaluation import bootstrap_auc, load_scores, replicates_to_csv, roc_points, roc_to_csv
from .experiment import ALL_VARIANTS, ExperimentPlan, Variant, emit_reports, run_matrix
from .logistic import (
    FitConfig,
    LogisticModel,
    SeparationError,
    fit,
    pearson_residuals,
    stepwise_select,
    wald_statistics,
)
from .retrieval import RetrievalConfig, default_k_max, predict_batch, predictions_to_csv, traces_to_json, tune_k
from .weighting import (
    attribute_weights_from_wald,
    case_weights_from_residuals,
    uniform_attribute_weights,
    uniform_case_weights,
    weights_to_csv,
)

DEFAULT_SEED = 1


class UsageError(Exception):
    pass


# -- output helpers ---------------------------------------------------------


def write_atomic(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(args, text: str) -> None:
    if args.out:
        write_atomic(args.out, text)
    else:
        sys.stdout.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _dict_csv(d: dict) -> str:
    return "key,value\n" + "".join(f"{k},{v!r}\n" if isinstance(v, float) else f"{k},{v}\n" for k, v in d.items())


def _read_cases(path):
    if not Path(path).is_file():
        raise UsageError(f"input file not found: {path}")
    return read_case_base(path)


def _read_model(path) -> LogisticModel:
    if not Path(path).is_file():
        raise UsageError(f"input file not found: {path}")
    return LogisticModel.from_json(Path(path).read_text(encoding="utf-8"))


def _weights_for(variant: Variant, model: LogisticModel, train):
    if variant.weights_attributes:
        w_a = attribute_weights_from_wald(wald_statistics(model), train.schema)
    else:
        w_a = uniform_attribute_weights(train.schema, model.selected_attributes)
    if variant.weights_cases:
        w_p = case_weights_from_residuals(pearson_residuals(model, train), train.ids)
    else:
        w_p = uniform_case_weights(train)
    return w_a, w_p


# -- subcommands ------------------------------------------------------------


def cmd_synth(args):
    if args.spec:
        raw = json.loads(Path(args.spec).read_text(encoding="utf-8"))
        raw.setdefault("seed", args.seed)
        spec = SyntheticSpec(**raw)
    else:
        spec = cohort_spec(args.seed, args.n_cases, args.prevalence, args.noise)
    _emit(args, case_base_to_csv(generate_synthetic(spec)))


def cmd_split(args):
    cb = _read_cases(args.data)
    if args.inject:
        cb = inject_random_attributes(cb, args.inject, args.seed)
    sizes = tuple(int(s) for s in args.sizes.split(","))
    split = random_split(cb, sizes, args.seed)
    report = chi_square_homogeneity(split, args.alpha)
    out = Path(args.out or ".")
    names = ("training.csv", "setting.csv", "evaluation.csv")
    for name, part in zip(names, split.parts):
        write_atomic(out / name, case_base_to_csv(part))
    manifest = {"seed": args.seed, "sizes": list(split.sizes), "files": list(names),
                "injected_attributes": args.inject, "chi_square": report.to_dict()}
    write_atomic(out / "manifest.json", _json(manifest))
    if report.flagged:
        print(f"attributes flagged at alpha={args.alpha}: {', '.join(report.flagged)}", file=sys.stderr)


def cmd_fit(args):
    train = _read_cases(args.train)
    report = validate(train)
    if not report.ok:
        raise LrknnError("dataset: " + "; ".join(f.message for f in report.fatal))
    config = FitConfig(args.tolerance, args.max_iterations, args.clamp, args.divergence_bound)
    if args.stepwise:
        model = stepwise_select(train, config)
        if model.excluded_attributes and not args.drop_separating:
            raise SeparationError(model.excluded_attributes)
    else:
        model = fit(train, config)
    if args.format == "csv":
        rows = ["attribute,coefficient,std_error"]
        rows.append(f"(intercept),{model.intercept!r},")
        rows += [f"{a},{b!r},{s!r}" for a, b, s in zip(model.selected_attributes, model.coefficients, model.std_errors)]
        _emit(args, "\n".join(rows) + "\n")
    else:
        _emit(args, model.to_json() + "\n")


def cmd_weights(args):
    model = _read_model(args.model)
    train = _read_cases(args.train) if args.train else None
    names = train.schema.names if train is not None else model.selected_attributes
    if args.attributes == "wald":
        w_a = attribute_weights_from_wald(wald_statistics(model), names)
    else:
        w_a = uniform_attribute_weights(names, model.selected_attributes)
    if args.format == "json":
        _emit(args, _json({"source": w_a.source, "weights": w_a.as_dict()}))
    else:
        _emit(args, weights_to_csv(w_a))
    if args.case_out:
        if train is None:
            raise UsageError("--case-out needs --train")
        w_p = (case_weights_from_residuals(pearson_residuals(model, train), train.ids)
               if args.cases == "pearson" else uniform_case_weights(train))
        text = "case_id,weight,source\n" + "".join(f"{i},{w!r},{w_p.source}\n" for i, w in zip(w_p.ids, map(float, w_p.raw)))
        write_atomic(args.case_out, text)


def cmd_tune_k(args):
    train, setting = _read_cases(args.train), _read_cases(args.setting)
    model = _read_model(args.model)
    w_a, w_p = _weights_for(Variant(args.variant), model, train)
    k_max = args.k_max or default_k_max(len(train))
    res = tune_k(train, setting, w_a, w_p, k_max)
    out = {"variant": args.variant, "k": res.k, "k_max": k_max, "metric": "auc", "metric_values": list(res.metric_values)}
    if args.format == "csv":
        _emit(args, "k,auc\n" + "".join(f"{i},{v!r}\n" for i, v in enumerate(res.metric_values, start=1)))
    else:
        _emit(args, _json(out))


def cmd_predict(args):
    train, query = _read_cases(args.train), _read_cases(args.query)
    model = _read_model(args.model)
    w_a, w_p = _weights_for(Variant(args.variant), model, train)
    preds = predict_batch(query, train, w_a, w_p, RetrievalConfig(k=args.k), with_neighbors=True)
    scores = [p.score for p in preds]
    if args.format == "json":
        _emit(args, traces_to_json(preds) + "\n")
    else:
        _emit(args, predictions_to_csv(query.ids, scores, query.labels))
    if args.trace:
        write_atomic(args.trace, traces_to_json(preds) + "\n")


def cmd_eval(args):
    if not Path(args.scores).is_file():
        raise UsageError(f"input file not found: {args.scores}")
    with open(args.scores, newline="", encoding="utf-8") as fh:
        scored = load_scores(fh)
    est = bootstrap_auc(scored, k=args.replicates, seed=args.seed, workers=args.workers)
    if args.format == "csv":
        _emit(args, _dict_csv(est.to_dict()))
    else:
        _emit(args, _json(est.to_dict()))
    if args.roc:
        write_atomic(args.roc, roc_to_csv(roc_points(scored)))
    if args.dump:
        write_atomic(args.dump, replicates_to_csv(est))


def cmd_experiment(args):
    if not Path(args.plan).is_file():
        raise UsageError(f"plan file not found: {args.plan}")
    plan = ExperimentPlan.read(args.plan)
    if args.seed_given:
        plan = ExperimentPlan(**{**plan.__dict__, "seed": args.seed})
    table = run_matrix(plan)
    emit_reports(table, args.out or "results")
    print(table.summary())


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help=f"master seed for every random choice (default {DEFAULT_SEED})")
    common.add_argument("--out", help="output file (or directory for split/experiment); stdout if omitted")
    common.add_argument("--format", choices=("json", "csv"), default=None, help="output format")

    parser = argparse.ArgumentParser(prog="lrknn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic case base (CSV)")
    p.add_argument("--spec", help="JSON SyntheticSpec; default is the 19-factor cohort-scale model")
    p.add_argument("--n-cases", type=int, default=1137, help="number of cases (default 1137)")
    p.add_argument("--prevalence", type=float, default=0.23, help="target label prevalence (default 0.23)")
    p.add_argument("--noise", type=int, default=0, help="extra Bernoulli(0.5) null attributes (default 0)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("split", parents=[common], help="random tri-split plus chi-square homogeneity check")
    p.add_argument("--data", required=True, help="case-base CSV")
    p.add_argument("--sizes", required=True, help="training,setting,evaluation sizes, e.g. 379,379,379")
    p.add_argument("--alpha", type=float, default=0.05, help="significance level (default 0.05)")
    p.add_argument("--inject", type=int, default=0, help="append this many random attributes before splitting")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("fit", parents=[common], help="fit logistic regression (JSON model)")
    p.add_argument("--train", required=True, help="labeled case-base CSV")
    p.add_argument("--stepwise", action="store_true", help="bidirectional stepwise AIC selection")
    p.add_argument("--drop-separating", action="store_true",
                   help="with --stepwise, drop separating attributes instead of failing")
    p.add_argument("--tolerance", type=float, default=1e-8, help="max coefficient change at convergence")
    p.add_argument("--max-iterations", type=int, default=50, help="Newton iteration cap")
    p.add_argument("--clamp", type=float, default=1e-6, help="probability clamp for residuals")
    p.add_argument("--divergence-bound", type=float, default=30.0, help="largest allowed |coefficient|")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("weights", parents=[common], help="attribute (and case) weights from a model")
    p.add_argument("--model", required=True, help="model JSON from 'fit'")
    p.add_argument("--train", help="training CSV; fixes the attribute list and enables case weights")
    p.add_argument("--attributes", choices=("wald", "uniform"), default="wald", help="attribute weighting")
    p.add_argument("--cases", choices=("pearson", "uniform"), default="pearson", help="case weighting")
    p.add_argument("--case-out", help="write case weights CSV here")
    p.set_defaults(func=cmd_weights)

    variants = [v.value for v in ALL_VARIANTS if v.is_knn]
    p = sub.add_parser("tune-k", parents=[common], help="choose K on the setting set by AUC")
    p.add_argument("--train", required=True, help="retrieval base (training CSV)")
    p.add_argument("--setting", required=True, help="setting CSV")
    p.add_argument("--model", required=True, help="model JSON fitted on the training set")
    p.add_argument("--variant", choices=variants, default="CBR+WA+WP", help="weighting variant")
    p.add_argument("--k-max", type=int, default=None, help="largest K tried (default min(50, 3*isqrt(n)))")
    p.set_defaults(func=cmd_tune_k)

    p = sub.add_parser("predict", parents=[common], help="soft K-NN scores for query cases")
    p.add_argument("--train", required=True, help="retrieval base (training CSV)")
    p.add_argument("--query", required=True, help="cases to score (CSV; labels optional)")
    p.add_argument("--model", required=True, help="model JSON fitted on the training set")
    p.add_argument("--variant", choices=variants, default="CBR+WA+WP", help="weighting variant")
    p.add_argument("--k", type=int, required=True, help="number of neighbours")
    p.add_argument("--trace", help="write the JSON neighbour trace here")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", parents=[common], help="bootstrap AUC of a scores file")
    p.add_argument("--scores", required=True, help="CSV with case_id,score,label")
    p.add_argument("--replicates", type=int, default=500, help="bootstrap replicates (default 500)")
    p.add_argument("--workers", type=int, default=None, help="threads for replicates; result is unchanged")
    p.add_argument("--roc", help="write the ROC staircase CSV here")
    p.add_argument("--dump", help="write every replicate AUC here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("experiment", parents=[common], help="run the scenario x mode x variant matrix")
    p.add_argument("--plan", required=True, help="INI plan file with an [experiment] section")
    p.set_defaults(func=cmd_experiment)
    return parser


def _report_error(exc: BaseException, code: int) -> int:
    module = type(exc).__module__.rsplit(".", 1)[-1]
    if module in ("__init__", "lrknn", "builtins", "cli"):
        module = "lrknn"
    message = str(exc)
    print(f"error: {module}: {message}", file=sys.stderr)
    print(json.dumps({"error": type(exc).__name__, "module": module, "message": message, "exit": code}),
          file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.seed_given = args.seed is not None
    if args.seed is None:
        args.seed = DEFAULT_SEED
    if args.format is None:
        args.format = "csv" if args.command in ("synth", "predict", "weights") else "json"
    try:
        args.func(args)
    except (UsageError, ValueError, configparser.Error) as e:
        return _report_error(e, 2)
    except LrknnError as e:
        return _report_error(e, 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
