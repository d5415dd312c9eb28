import argparse
import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import ValidationError

from lcnn import config
from lcnn.analysis.capacity import load_trace_csv, vc_bound
from lcnn.analysis.statistics import friedman_test, wilcoxon_signed_rank
from lcnn.config import (
    EXIT_CONFIG_ERROR,
    EXIT_DIVERGED,
    EXIT_FAILURE,
    EXIT_OK,
    GRADCHECK_TOLERANCE,
    KL_RHO,
    SAE_HIDDEN,
    SPARSITY_EPS,
)
from lcnn.data.dataset import CsvSchema, Dataset, knn_impute, load_csv, scale_features
from lcnn.data.sources import load_dataset, load_mnist_subset
from lcnn.errors import ConfigError, DivergenceError, LcnnError, SpecError, UndefinedTestError
from lcnn.experiment.learner import LcnnLearner
from lcnn.experiment.manifest import GRID_PRESETS, GridSpec, MethodEntry, ModelConfig
from lcnn.experiment.protocol import cross_validate, grid_search, scalability_probe
from lcnn.experiment.runner import run_experiment
from lcnn.logger import logger, set_verbosity
from lcnn.nn.autoencoder import (
    Autoencoder,
    linear_probe,
    sae_objective,
    sae_train,
    sparsity_fraction,
    weight_histogram,
)
from lcnn.nn.linalg import ActivationKind
from lcnn.nn.network import Network, NetworkConfig, forward, init_network
from lcnn.nn.objective import LossKind, ObjectiveSpec
from lcnn.nn.training import TrainSchedule, gradient_check
from lcnn.utils.utils import Utils
from lcnn.visualization.filters import export_filters


def _csv_list(cast):
    return lambda text: [cast(v) for v in text.split(",") if v]


def _add_dataset_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dataset", default="iris", help="iris, wine, breast_cancer, pima, ionosphere or synthetic")
    parser.add_argument("--csv", type=Path, help="CSV file (overrides --dataset)")
    parser.add_argument("--label-column", default="-1")
    parser.add_argument("--seed", type=int, default=config.DEFAULT_SEED)


def _add_model_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--method", default="SE+W+LC-A", help="notation preset, e.g. SE+W+LC-A")
    parser.add_argument("--hidden", type=_csv_list(int), default=[16])
    parser.add_argument("--activation", type=ActivationKind, default=ActivationKind.TANH)
    parser.add_argument("--epochs", type=int, default=100)
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--lr", type=float, default=0.05)
    parser.add_argument("--lr-decay", type=float, default=1.0)


def _add_grid_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--grid", choices=sorted(GRID_PRESETS), help="preset grid to start from")
    parser.add_argument("--widths", type=_csv_list(int), help="single-hidden-layer widths to search")
    parser.add_argument("--c", type=_csv_list(float), help="weight-decay values")
    parser.add_argument("--d", type=_csv_list(float), help="LCNN D values")
    parser.add_argument("--dropout", type=_csv_list(float))


def _dataset(args) -> Dataset:
    if args.csv is not None:
        label = int(args.label_column) if args.label_column.lstrip("-").isdigit() else args.label_column
        ds = load_csv(args.csv, CsvSchema(label_column=label))
    else:
        ds = load_dataset(args.dataset, seed=args.seed)
    return knn_impute(ds) if ds.has_missing else ds


def _method(args) -> MethodEntry:
    schedule = TrainSchedule(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        lr_decay=args.lr_decay,
        shuffle_seed=args.seed,
    )
    return MethodEntry(
        name=args.method,
        preset=args.method,
        hidden_widths=args.hidden,
        hidden_activation=args.activation,
        schedule=schedule,
    )


def _grid(args) -> GridSpec:
    base = GRID_PRESETS[args.grid]() if args.grid else GridSpec()
    overrides = {
        key: value
        for key, value in (("c_values", args.c), ("d_values", args.d), ("dropout_rates", args.dropout))
        if value
    }
    if args.widths:
        overrides["hidden_widths"] = [[w] for w in args.widths]
    return GridSpec(**{**base.model_dump(), **overrides})


def _single_point(args) -> ModelConfig:
    points = _method(args).grid_points(_grid(args), seed=args.seed)
    if len(points) > 1:
        logger.info(f"{len(points)} grid points given; using the first ({points[0].describe()})")
    return points[0]


def cmd_train(args) -> int:
    ds = scale_features(_dataset(args))
    point = _single_point(args)
    learner = LcnnLearner(point)
    report = learner.fit(ds)
    out = args.out
    learner.save_weights(out / "network.json")
    report.to_json(out / "train_report.json")
    report.to_csv(out / "train_report.csv")
    vc_bound(learner.trace(ds.features), point.objective.target_magnitude).to_json(out / "capacity.json")
    final = report.epochs[-1] if report.epochs else None
    logger.info(f"Train accuracy {final.train_accuracy if final else 'n/a'}; outputs in {out}")
    return EXIT_OK


def cmd_gridsearch(args) -> int:
    ds = _dataset(args)
    points = _method(args).grid_points(_grid(args), seed=args.seed)
    result = grid_search(points, ds, args.folds, args.repeats, args.seed, args.jobs)
    result.to_csv(args.out / "grid.csv")
    Utils.dump_json(result.best.model_dump(mode="json"), args.out / "best.json")
    logger.info(f"Best: {result.best.describe()} mean={result.best_row.result.mean:.4f}")
    return EXIT_OK


def cmd_cv(args) -> int:
    ds = _dataset(args)
    result = cross_validate(_single_point(args), ds, args.folds, args.repeats, args.seed, args.jobs)
    Utils.dump_json(result.to_dict(), args.out / "cv.json")
    print(json.dumps({"mean": result.mean, "std": result.std, "n_failed": result.n_failed}))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    widths = args.widths
    loss = LossKind(args.loss)
    output = ActivationKind.SOFTMAX if loss == LossKind.SOFTMAX_CROSS_ENTROPY else args.output
    net = init_network(
        NetworkConfig.classifier(widths[0], widths[1:-1], widths[-1], args.activation, output, args.seed)
    )
    rng = Utils.rng(args.seed)
    batch = rng.uniform(-1.0, 1.0, size=(args.batch, widths[0]))
    if loss == LossKind.SOFTMAX_CROSS_ENTROPY:
        targets = rng.integers(0, widths[-1], size=args.batch)
    else:
        targets = rng.choice([-0.9, 0.9], size=(args.batch, widths[-1]))
    spec = ObjectiveSpec(
        loss=loss,
        weight_decay=args.c,
        lcnn_mode=args.lcnn_mode,
        lcnn_d=args.d,
    )
    error = gradient_check(net, spec, batch, targets, max_parameters=args.max_parameters, seed=args.seed)
    passed = error < GRADCHECK_TOLERANCE
    print(json.dumps({"spec": spec.method_name, "max_relative_error": error, "passed": bool(passed)}))
    return EXIT_OK if passed else EXIT_FAILURE


def cmd_capacity(args) -> int:
    if args.trace_csv is not None:
        report = load_trace_csv(args.trace_csv, output_kind=args.output, t=args.t)
    else:
        if args.network is None:
            raise ConfigError("capacity needs --network or --trace-csv")
        net = Network.load(args.network, kind="classifier")
        ds = scale_features(_dataset(args))
        report = vc_bound(forward(net, ds.features), args.t)
    report.to_json(args.out / "capacity.json")
    print(json.dumps(report.to_dict(), sort_keys=True))
    return EXIT_OK


def cmd_sae(args) -> int:
    if args.csv is not None:
        ds = scale_features(knn_impute(load_csv(args.csv)), feature_range=(0.0, 1.0))
        train, test = ds, None
        height = width = int(round(np.sqrt(ds.n_features)))
    else:
        train, test = load_mnist_subset(args.mnist_root, args.train_size, args.test_size, args.seed)
        height = width = 28
    schedule = TrainSchedule(
        epochs=args.epochs, batch_size=args.batch_size, learning_rate=args.lr, shuffle_seed=args.seed
    )
    ae = Autoencoder.create(train.n_features, args.hidden, args.seed)
    report = sae_train(ae, train.features, args.c, args.d, schedule, args.rho, args.weight_decay)
    trained = Autoencoder(report.network)

    out = args.out
    trained.save(out / "autoencoder.json")
    report.to_json(out / "train_report.json")
    weight_histogram(trained.weight_blocks(), args.bins).to_csv(out / "histogram.csv")
    summary = {
        "objective": sae_objective(trained, train.features, args.c, args.d, args.rho, args.weight_decay).as_dict(),
        "sparsity_fraction": sparsity_fraction(trained.weight_blocks(), args.eps),
    }
    if height * width == train.n_features:
        export_filters(trained.encoder_weights, height, width, out / "filters")
    if test is not None and args.probe:
        summary["probe_accuracy"] = linear_probe(
            trained, train.features, train.labels, test.features, test.labels, schedule, args.seed
        )
    Utils.dump_json(summary, out / "summary.json")
    print(json.dumps(Utils.to_builtin(summary), sort_keys=True))
    return EXIT_OK


def cmd_stats(args) -> int:
    """Scores CSV: one row per dataset, first column the dataset name, one column per method."""
    frame = pd.read_csv(args.scores, index_col=0)
    methods = list(frame.columns)
    result: dict = {"methods": methods}
    try:
        result["friedman"] = friedman_test(frame.to_numpy()).to_dict()
    except LcnnError as e:
        result["friedman"] = {"skipped": str(e)}
    result["wilcoxon"] = {}
    for method in methods[1:]:
        try:
            outcome = wilcoxon_signed_rank(frame[methods[0]], frame[method]).to_dict()
        except UndefinedTestError as e:
            outcome = {"skipped": str(e)}
        result["wilcoxon"][method] = outcome
    Utils.dump_json(result, args.out / "statistics.json")
    print(json.dumps(Utils.to_builtin(result), sort_keys=True))
    return EXIT_OK


def cmd_probe(args) -> int:
    ds = _dataset(args)
    rows = scalability_probe(_single_point(args), ds, args.sizes, args.seed)
    path = args.out / "probe.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame([Utils.to_builtin(r) for r in rows]).to_csv(path, index=False)
    return EXIT_OK


def cmd_report(args) -> int:
    result = run_experiment(args.manifest, args.out, n_jobs=args.jobs)
    print(result.table.to_frame().to_string(index=False))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lcnn", description="Low-complexity neural network toolkit")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    parser.add_argument("--quiet", action="store_true", help="hide progress bars")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train one configuration on a whole dataset")
    _add_dataset_args(train)
    _add_model_args(train)
    _add_grid_args(train)
    train.set_defaults(handler=cmd_train)

    for name, handler, help_text in (
        ("gridsearch", cmd_gridsearch, "cross-validated grid search"),
        ("cv", cmd_cv, "repeated k-fold cross-validation of one configuration"),
    ):
        command = sub.add_parser(name, help=help_text)
        _add_dataset_args(command)
        _add_model_args(command)
        _add_grid_args(command)
        command.add_argument("--folds", type=int, default=config.CV_FOLDS)
        command.add_argument("--repeats", type=int, default=config.CV_REPEATS)
        command.add_argument("--jobs", type=int, default=1)
        command.set_defaults(handler=handler)
    # model selection searches the hidden width unless told otherwise
    sub.choices["gridsearch"].set_defaults(grid="uci")

    gradcheck = sub.add_parser("gradcheck", help="finite-difference gradient check")
    gradcheck.add_argument("--widths", type=_csv_list(int), default=[4, 6, 3])
    gradcheck.add_argument("--loss", choices=[k.value for k in LossKind if k != LossKind.RECONSTRUCTION], default="squared_error")
    gradcheck.add_argument("--activation", type=ActivationKind, default=ActivationKind.TANH)
    gradcheck.add_argument("--output", type=ActivationKind, default=ActivationKind.TANH)
    gradcheck.add_argument("--lcnn-mode", default="all_layers")
    gradcheck.add_argument("--c", type=float, default=1e-2)
    gradcheck.add_argument("--d", type=float, default=1e-2)
    gradcheck.add_argument("--batch", type=int, default=5)
    gradcheck.add_argument("--max-parameters", type=int)
    gradcheck.add_argument("--seed", type=int, default=config.DEFAULT_SEED)
    gradcheck.set_defaults(handler=cmd_gradcheck)

    capacity = sub.add_parser("capacity", help="VC-dimension bound of a trained network or trace CSV")
    _add_dataset_args(capacity)
    capacity.add_argument("--network", type=Path)
    capacity.add_argument("--trace-csv", type=Path)
    capacity.add_argument("--output", type=ActivationKind, default=ActivationKind.TANH)
    capacity.add_argument("--t", type=float, default=config.TARGET_MAGNITUDE)
    capacity.set_defaults(handler=cmd_capacity)

    sae = sub.add_parser("sae", help="sparse autoencoder with the LCNN decoder term")
    sae.add_argument("--csv", type=Path, help="CSV instead of the MNIST subset")
    sae.add_argument("--mnist-root", type=Path, default=Path("data/mnist"))
    sae.add_argument("--train-size", type=int, default=config.MNIST_TRAIN_SIZE)
    sae.add_argument("--test-size", type=int, default=config.MNIST_TEST_SIZE)
    sae.add_argument("--hidden", type=int, default=SAE_HIDDEN)
    sae.add_argument("--c", type=float, default=1e-2)
    sae.add_argument("--d", type=float, default=1e-4)
    sae.add_argument("--rho", type=float, default=KL_RHO)
    sae.add_argument("--weight-decay", type=float, default=0.0)
    sae.add_argument("--epochs", type=int, default=20)
    sae.add_argument("--batch-size", type=int, default=100)
    sae.add_argument("--lr", type=float, default=1e-3)
    sae.add_argument("--bins", type=int, default=50)
    sae.add_argument("--eps", type=float, default=SPARSITY_EPS)
    sae.add_argument("--probe", action="store_true", help="linear-probe accuracy on the test split")
    sae.add_argument("--seed", type=int, default=config.DEFAULT_SEED)
    sae.set_defaults(handler=cmd_sae)

    stats = sub.add_parser("stats", help="Friedman and Wilcoxon tests over a scores table")
    stats.add_argument("scores", type=Path)
    stats.set_defaults(handler=cmd_stats)

    probe = sub.add_parser("probe", help="training time and accuracy against dataset size")
    _add_dataset_args(probe)
    _add_model_args(probe)
    _add_grid_args(probe)
    probe.add_argument("--sizes", type=_csv_list(int), required=True)
    probe.set_defaults(handler=cmd_probe)

    report = sub.add_parser("report", help="run a manifest and write the report bundle")
    report.add_argument("manifest", type=Path)
    report.add_argument("--jobs", type=int)
    report.set_defaults(handler=cmd_report)

    for command in sub.choices.values():
        command.add_argument("--out", type=Path, default=Path("out"))
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    set_verbosity(args.verbose)
    if args.quiet:
        config.SHOW_PROGRESS = False
    try:
        return args.handler(args)
    except DivergenceError as e:
        logger.error(str(e))
        return EXIT_DIVERGED
    except (ConfigError, SpecError, ValidationError) as e:
        logger.error(str(e))
        return EXIT_CONFIG_ERROR
    except LcnnError as e:
        logger.error(str(e))
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
