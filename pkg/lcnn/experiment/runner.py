import logging
import re
import time
from dataclasses import dataclass, field
from pathlib import Path

from lcnn.analysis.capacity import vc_bound
from lcnn.data.dataset import Dataset, knn_impute, scale_features
from lcnn.data.sources import load_dataset
from lcnn.errors import DegenerateClassifierError, DivergenceError
from lcnn.experiment.learner import LcnnLearner
from lcnn.experiment.manifest import DatasetEntry, Manifest, ModelConfig
from lcnn.experiment.protocol import NestedCvResult, nested_cross_validate
from lcnn.experiment.report import ComparisonTable, TableCell, compare_methods
from lcnn.logger import logger
from lcnn.utils.utils import Utils


def _slug(*parts: str) -> str:
    return "__".join(re.sub(r"[^A-Za-z0-9]+", "_", p).strip("_") for p in parts)


@dataclass
class ExperimentResult:
    table: ComparisonTable
    statistics: dict
    output_dir: Path
    selections: dict[str, NestedCvResult] = field(default_factory=dict)


def prepare_dataset(entry: DatasetEntry, manifest: Manifest) -> Dataset:
    ds = load_dataset(entry.name, entry.path, entry.csv, seed=manifest.master_seed)
    if ds.has_missing:
        logger.info(f"{entry.name}: imputing {int(ds.missing_mask.sum())} missing cells")
        ds = knn_impute(ds, manifest.protocol.impute_neighbors)
    return ds


def _final_fit(name: str, ds: Dataset, best: ModelConfig, manifest: Manifest, output_dir: Path) -> None:
    """Refit the consensus configuration on all rows; write its train and capacity reports."""
    scaled = scale_features(ds)
    learner = LcnnLearner(best.reseeded(manifest.master_seed))
    try:
        report = learner.fit(scaled)
    except DivergenceError as e:
        logger.warning(f"{name}: final fit diverged ({e})")
        return
    report.to_json(output_dir / "train_reports" / f"{name}.json", include_timing=False)
    if not manifest.capacity:
        return
    try:
        capacity = vc_bound(learner.trace(scaled.features), best.objective.target_magnitude)
    except DegenerateClassifierError as e:
        logger.warning(f"{name}: no capacity report ({e})")
        return
    capacity.to_json(output_dir / "capacity" / f"{name}.json")


def run_experiment(
    manifest: Manifest | str | Path, output_dir: str | Path, n_jobs: int | None = None
) -> ExperimentResult:
    """Impute, then nested-cross-validate and compare every method on every dataset.

    Everything but timing.json and run.log is a function of the manifest alone.
    """
    if not isinstance(manifest, Manifest):
        manifest = Manifest.load(manifest)
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    protocol = manifest.protocol
    n_jobs = protocol.n_jobs if n_jobs is None else n_jobs

    handler = logging.FileHandler(output_dir / "run.log", mode="w")
    handler.setFormatter(logging.Formatter("%(levelname)s - %(message)s"))
    logger.addHandler(handler)
    try:
        logger.info(f"Experiment {manifest.name!r}, master seed {manifest.master_seed}")
        Utils.dump_json(manifest.model_dump(mode="json"), output_dir / "manifest.json")

        table = ComparisonTable(
            datasets=[d.name for d in manifest.datasets],
            methods=[m.name for m in manifest.methods],
        )
        selections: dict[str, NestedCvResult] = {}
        timing: dict = {"selection_seconds": {}, "training_seconds": {}}

        for d_index, entry in enumerate(manifest.datasets):
            ds = prepare_dataset(entry, manifest)
            # one split seed per dataset so that methods are compared on paired folds
            split_seed = Utils.derive_seed(manifest.master_seed, d_index)
            for method in manifest.methods:
                name = _slug(entry.name, method.name)
                start = time.perf_counter()
                nested = nested_cross_validate(
                    method.grid_points(manifest.grid, seed=manifest.master_seed),
                    ds,
                    protocol.folds,
                    protocol.repeats,
                    inner_folds=protocol.grid_folds,
                    inner_repeats=protocol.grid_repeats,
                    seed=split_seed,
                    n_jobs=n_jobs,
                )
                timing["selection_seconds"][name] = time.perf_counter() - start
                nested.to_csv(output_dir / "grid" / f"{name}.csv")
                selections[name] = nested

                cell = TableCell.from_cv(nested.cv)
                table.set(entry.name, method.name, cell)
                best = nested.consensus
                Utils.dump_json(
                    {"config": best.model_dump(mode="json"), "cv": nested.cv.to_dict(include_timing=False)},
                    output_dir / "cv" / f"{name}.json",
                )
                logger.info(f"{entry.name} / {method.name}: {cell.text}")
                _final_fit(name, ds, best, manifest, output_dir)

        table.write(output_dir)
        statistics = compare_methods(table)
        Utils.dump_json(statistics, output_dir / "statistics.json")
        timing["training_seconds"] = table.timing()
        Utils.dump_json(timing, output_dir / "timing.json")
        logger.info(f"Report bundle written to {output_dir}")
    finally:
        logger.removeHandler(handler)
        handler.close()

    return ExperimentResult(table=table, statistics=statistics, output_dir=output_dir, selections=selections)
