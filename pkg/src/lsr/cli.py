"""Command-line entry point: simulate, estimate, classify, bench, render.

Exit codes: 0 success, 1 usage or config error, 2 data error (parse,
schema, degenerate source, division guard, missing input file), 3
numerical failure. Every failure also prints a single JSON diagnostic
line to stderr. Output files are written atomically (temp file plus
rename), so no subcommand leaves a partial file behind. The LSR_LOG
environment variable sets the log level (DEBUG, INFO, WARNING, ERROR);
unset or unrecognized values mean WARNING.

All randomness flows from --seed: generation and contamination streams
in simulate, solver restarts and the single-source pick in estimate and
classify, and the per-replication streams in bench (where the flag is
mandatory). The oracle estimator is available only inside bench, since
it needs the true outlier set that only the harness knows.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from .bench import (
    ExperimentGrid,
    run_experiment_grid,
    weighting_config_for,
    write_results_csv,
)
from .classifier import (
    predict_labels,
    save_classifier,
    train_calibrated_classifier,
)
from .datasets import (
    LabeledDataset,
    atomic_writer,
    load_csv_labeled,
    load_csv_unlabeled,
    write_labeled_csv,
    write_unlabeled_csv,
)
from .errors import (
    DegenerateSourceError,
    DivisionGuardError,
    EstimationError,
    NumericalError,
    ParseError,
    SchemaError,
)
from .kernels import KernelSpec, fit_mmd_terms
from .simplex import (
    OptimizerConfig,
    baseline_estimate,
    rod_estimate,
    roe_estimate,
    roe_multistep,
)
from .simulate import ContaminationPlan, contaminate, default_mixture, generate_sources

log = logging.getLogger("lsr.cli")

SCHEMA_VERSION = 1

# short flag spellings -> weighting rule names
_RULE_NAMES = {"mwv": "mwv", "trunc": "truncated", "trim": "trimmed",
               "mom": "median_of_means"}
_CLI_ESTIMATORS = ("single", "average", "trim", "rod", "roe", "roe-multi")
_ROBUST_ESTIMATORS = ("trim", "rod", "roe", "roe-multi")

# checked in order; the first match fixes the diagnostic code and exit code
_ERROR_TABLE = (
    (NumericalError, "numerical_error", 3),
    (ParseError, "parse_error", 2),
    (SchemaError, "schema_error", 2),
    (DegenerateSourceError, "degenerate_source", 2),
    (DivisionGuardError, "division_guard", 2),
    (EstimationError, "estimation_error", 2),
    (FileNotFoundError, "file_not_found", 2),
    (ValueError, "config_error", 1),
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _diagnostic(code: str, message: str) -> None:
    print(json.dumps({"error": code, "message": message}, sort_keys=True),
          file=sys.stderr)


def _configure_logging() -> None:
    name = os.environ.get("LSR_LOG", "WARNING").upper()
    level = getattr(logging, name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    root = logging.getLogger()
    if not root.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
        root.addHandler(handler)
    logging.getLogger("lsr").setLevel(level)


def _write_json(doc: dict, path: str) -> None:
    with atomic_writer(path) as handle:
        handle.write(json.dumps(doc, sort_keys=True, indent=2))
        handle.write("\n")


def _add_optimizer_flags(parser) -> None:
    parser.add_argument("--max-iters", type=int, default=500,
                        help="gradient iteration cap (default 500)")
    parser.add_argument("--tol", type=float, default=1e-8,
                        help="stop when an update moves less than this")
    parser.add_argument("--refine-steps", type=int, default=2,
                        help="re-weighting rounds for roe-multi (default 2)")


def _add_estimator_flags(parser) -> None:
    parser.add_argument("sources", nargs="+", metavar="SOURCE_CSV",
                        help="labeled source CSVs (header y,x1,...,xd)")
    parser.add_argument("--target", required=True,
                        help="unlabeled target CSV (header x1,...,xd)")
    parser.add_argument("--estimator", required=True, choices=_CLI_ESTIMATORS)
    parser.add_argument("--rule", choices=sorted(_RULE_NAMES), default="mwv",
                        help="robust weighting rule (default mwv)")
    parser.add_argument("--eps-h", type=float, default=None,
                        help="contamination budget; required for "
                             "trim, rod, roe, and roe-multi")
    parser.add_argument("--classes", type=int, default=None,
                        help="class count K (default: largest label seen)")
    parser.add_argument("--seed", type=int, default=0,
                        help="seed for solver restarts and the single pick")
    _add_optimizer_flags(parser)


def _build_parser() -> _Parser:
    parser = _Parser(prog="lsr", description=__doc__.splitlines()[0])
    commands = parser.add_subparsers(dest="command", required=True)

    sim = commands.add_parser("simulate",
                              help="generate contaminated sources and a target")
    sim.add_argument("--m", type=int, required=True, help="number of sources")
    sim.add_argument("--n", type=int, required=True, help="rows per source")
    sim.add_argument("--big-n", type=int, default=None,
                     help="target rows (default m*n)")
    sim.add_argument("--eps", type=float, default=0.0,
                     help="fraction of sources to contaminate (default 0)")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", required=True, help="output directory")
    sim.set_defaults(func=_cmd_simulate)

    est = commands.add_parser("estimate",
                              help="estimate target class proportions")
    _add_estimator_flags(est)
    est.add_argument("--out", required=True, help="output JSON path")
    est.set_defaults(func=_cmd_estimate)

    cls = commands.add_parser("classify",
                              help="estimate, then train and apply a classifier")
    _add_estimator_flags(cls)
    cls.add_argument("--out", required=True, help="estimate JSON path")
    cls.add_argument("--predictions", required=True,
                     help="predicted-label CSV for the target rows")
    cls.add_argument("--model-out", required=True,
                     help="model file path (text matrix format)")
    cls.set_defaults(func=_cmd_classify)

    ben = commands.add_parser("bench", help="run an experiment grid")
    ben.add_argument("--config", required=True, help="grid config JSON")
    ben.add_argument("--seed", type=int, required=True,
                     help="base seed for every replication stream")
    ben.add_argument("--workers", type=int, default=1)
    ben.add_argument("--rule", choices=sorted(_RULE_NAMES), default="mwv")
    ben.add_argument("--out", required=True, help="results CSV path")
    ben.add_argument("--figures-dir", default=None,
                     help="also render one panel per metric into this directory")
    ben.set_defaults(func=_cmd_bench)

    ren = commands.add_parser("render",
                              help="render a metric panel from a results CSV")
    ren.add_argument("--in", dest="input", required=True, help="results CSV")
    ren.add_argument("--metric", required=True,
                     choices=("mse", "fsn", "misclassification"))
    ren.add_argument("--x", dest="x_axis", required=True,
                     choices=("m", "n", "N", "eps", "eps_h"))
    ren.add_argument("--estimators", default=None,
                     help="comma-separated series order (default: all present)")
    ren.add_argument("--out", required=True, help="output image path")
    ren.set_defaults(func=_cmd_render)

    return parser


def _cmd_simulate(args) -> None:
    mixture = default_mixture()
    big_n = args.m * args.n if args.big_n is None else args.big_n
    gen_key = np.random.SeedSequence(args.seed, spawn_key=(0,))
    con_key = np.random.SeedSequence(args.seed, spawn_key=(1,))
    sources, target, target_labels = generate_sources(
        mixture, args.m, args.n, big_n, gen_key)
    plan = ContaminationPlan(eps=args.eps, scheme="flip_largest")
    contaminated, outliers = contaminate(sources, plan, con_key)

    os.makedirs(args.out, exist_ok=True)
    names = []
    for j, source in enumerate(contaminated):
        name = f"source_{j + 1}.csv"
        write_labeled_csv(source, os.path.join(args.out, name))
        names.append(name)
    write_unlabeled_csv(target, os.path.join(args.out, "target.csv"))
    write_labeled_csv(LabeledDataset(target.covariates, target_labels),
                      os.path.join(args.out, "target_labeled.csv"))
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "m": args.m,
        "n": args.n,
        "N": big_n,
        "eps": args.eps,
        "seed": args.seed,
        "scheme": "flip_largest",
        "outlier_sources": [int(j) + 1 for j in sorted(outliers)],
        "target_proportions": [float(v) for v in mixture.target_proportions],
        "sources": names,
        "target": "target.csv",
        "target_labeled": "target_labeled.csv",
    }
    _write_json(manifest, os.path.join(args.out, "manifest.json"))
    log.info("wrote %d sources, target, and manifest under %s",
             len(names), args.out)


def _load_sources(paths, n_classes):
    sources = [load_csv_labeled(path, n_classes) for path in paths]
    if n_classes is None:
        k = max(source.n_classes for source in sources)
        sources = [source if source.n_classes == k
                   else LabeledDataset(source.covariates, source.labels,
                                       n_classes=k)
                   for source in sources]
    return sources


def _run_estimator(quads, args):
    kind = args.estimator
    if kind in _ROBUST_ESTIMATORS and args.eps_h is None:
        raise ValueError(f"--eps-h is required for estimator {kind!r}")
    cfg = OptimizerConfig(max_iters=args.max_iters, tol=args.tol,
                          refine_steps=args.refine_steps, seed=args.seed)
    if kind == "single":
        pick = np.random.Generator(np.random.Philox(
            np.random.SeedSequence(args.seed, spawn_key=(2,))))
        index = int(pick.integers(len(quads)))
        return cfg, baseline_estimate(quads, "single", cfg, source_index=index)
    if kind == "average":
        return cfg, baseline_estimate(quads, "average", cfg)
    if kind == "trim":
        return cfg, baseline_estimate(quads, "trim", cfg, eps_h=args.eps_h)
    wcfg = weighting_config_for(_RULE_NAMES[args.rule], args.eps_h, len(quads))
    if kind == "rod":
        return cfg, rod_estimate(quads, cfg, wcfg)
    if kind == "roe":
        return cfg, roe_estimate(quads, cfg, wcfg)
    return cfg, roe_multistep(quads, cfg, wcfg)


def _estimate_doc(result, args) -> dict:
    # selected is reported 1-based to match the source_<j>.csv naming
    return {
        "schema_version": SCHEMA_VERSION,
        "estimator": args.estimator,
        "rule": _RULE_NAMES[args.rule],
        "eps_h": args.eps_h,
        "seed": args.seed,
        "q_hat": [float(v) for v in result.q_hat],
        "weights": [float(v) for v in result.weights.weights],
        "selected": [int(j) + 1 for j in result.weights.selected],
        "iterations": int(result.iterations_used),
        "objective": float(result.objective),
        "sources": list(args.sources),
        "target": args.target,
    }


def _cmd_estimate(args) -> None:
    sources = _load_sources(args.sources, args.classes)
    target = load_csv_unlabeled(args.target)
    quads = [fit_mmd_terms(source, target, KernelSpec()) for source in sources]
    _, result = _run_estimator(quads, args)
    _write_json(_estimate_doc(result, args), args.out)
    log.info("estimate %s -> %s", args.estimator, args.out)


def _cmd_classify(args) -> None:
    sources = _load_sources(args.sources, args.classes)
    target = load_csv_unlabeled(args.target)
    quads = [fit_mmd_terms(source, target, KernelSpec()) for source in sources]
    cfg, result = _run_estimator(quads, args)
    _write_json(_estimate_doc(result, args), args.out)

    eps_h = 0.0 if args.eps_h is None else args.eps_h
    wcfg = weighting_config_for(_RULE_NAMES[args.rule], eps_h, len(sources))
    params = train_calibrated_classifier(sources, result.q_hat, cfg, wcfg)
    predicted = predict_labels(params, target.covariates)
    write_labeled_csv(LabeledDataset(target.covariates, predicted,
                                     n_classes=params.n_classes),
                      args.predictions)
    save_classifier(params, args.model_out)
    log.info("classify %s -> %s, %s", args.estimator, args.predictions,
             args.model_out)


def _swept_axis(grid: ExperimentGrid) -> str:
    axes = (("m", grid.ms), ("n", grid.ns), ("N", grid.big_ns),
            ("eps", grid.epss), ("eps_h", grid.eps_hs))
    for name, values in axes:
        if len(values) > 1:
            return name
    return "eps"


def _cmd_bench(args) -> None:
    try:
        grid = ExperimentGrid.from_json(args.config)
    except (FileNotFoundError, SchemaError) as exc:
        raise ValueError(f"bad grid config: {exc}") from exc
    rows = run_experiment_grid(grid, workers=args.workers, base_seed=args.seed,
                               rule=_RULE_NAMES[args.rule])
    write_results_csv(rows, args.out)
    log.info("wrote %d result rows to %s", len(rows), args.out)
    if args.figures_dir is None:
        return
    from .figures import FigureSpec, render_metric_panels

    os.makedirs(args.figures_dir, exist_ok=True)
    x_axis = _swept_axis(grid)
    for metric in grid.metrics:
        out = os.path.join(args.figures_dir, f"{metric}_vs_{x_axis}.png")
        render_metric_panels(FigureSpec(
            input_path=args.out, metric=metric, x_axis=x_axis,
            output_path=out, estimators=list(grid.estimators)))
        log.info("rendered %s", out)


def _cmd_render(args) -> None:
    from .bench import ESTIMATOR_NAMES, load_results_csv
    from .figures import FigureSpec, render_metric_panels

    if args.estimators is not None:
        estimators = [name.strip() for name in args.estimators.split(",")
                      if name.strip()]
    else:
        seen = {row[7] for row in load_results_csv(args.input)}
        known = [name for name in ESTIMATOR_NAMES if name in seen]
        estimators = known + sorted(seen.difference(known))
    render_metric_panels(FigureSpec(
        input_path=args.input, metric=args.metric, x_axis=args.x_axis,
        output_path=args.out, estimators=estimators))
    log.info("rendered %s", args.out)


def run_cli(argv=None) -> int:
    _configure_logging()
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        _diagnostic("usage", str(exc))
        return 1
    try:
        args.func(args)
        return 0
    except Exception as exc:
        for kind, code, exit_code in _ERROR_TABLE:
            if isinstance(exc, kind):
                _diagnostic(code, str(exc))
                return exit_code
        raise


def main() -> None:
    sys.exit(run_cli())
