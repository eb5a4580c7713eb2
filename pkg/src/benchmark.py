"""
Cross-validation orchestration: ingest, trim, fold, then per scheme and fold
inflate the training folds, train a fresh reference network and score the
held-out fold.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Optional, Sequence, TextIO, Tuple

import numpy as np

from .config import RunConfig, settings
from .dataset import inflate, ingest, make_folds, subset, trim_to_multiple
from .errors import AugBenchError, EmptyDataset
from .evaluation import aggregate, score_fold, write_reports
from .models import (
    AugmentationScheme,
    BenchmarkReport,
    EpochStats,
    FoldSplit,
    LabeledDataset,
    ResultRow,
    TrainingTrace,
)
from .nn import CnnModel, OptimizerState, build_reference_model, predict_proba, train

logger = logging.getLogger(__name__)

_SCHEME_KEYS = {scheme: i for i, scheme in enumerate(AugmentationScheme)}


def derive_seed(seed: int, *keys: int) -> int:
    """Independent, reproducible child seed for a (seed, keys...) tuple."""
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1)[0])


class BenchmarkRunner:
    """Runs the augmentation benchmark for one RunConfig."""

    def __init__(self, config: RunConfig, dataset: Optional[LabeledDataset] = None):
        self.config = config
        self.options = config.augmentation_options()
        self._source = dataset
        self.dataset: Optional[LabeledDataset] = None
        self.split: Optional[FoldSplit] = None

    def prepare(self) -> Tuple[LabeledDataset, FoldSplit]:
        """Ingest (unless a dataset was given), subset, trim and assign folds."""
        if self.dataset is not None and self.split is not None:
            return self.dataset, self.split

        cfg = self.config
        ds = self._source
        if ds is None:
            if cfg.dataset_root is None:
                raise EmptyDataset("no dataset root configured")
            ds = ingest(cfg.dataset_root, cfg.excluded_classes)
        if cfg.max_classes is not None or cfg.max_per_class is not None:
            ds = subset(ds, cfg.max_classes, cfg.max_per_class)
        ds = trim_to_multiple(ds, cfg.folds, cfg.seed)
        split = make_folds(ds, cfg.seed, cfg.folds)

        for fold in range(cfg.folds):
            logger.info(
                f"Fold {fold}: {len(split.training_indices(fold))} training, "
                f"{len(split.validation_indices(fold))} validation images"
            )
        self.dataset, self.split = ds, split
        return ds, split

    def train_fold(
        self,
        scheme: AugmentationScheme,
        fold: int,
        on_epoch: Optional[Callable[[EpochStats], None]] = None,
    ) -> Tuple[CnnModel, TrainingTrace, ResultRow]:
        """Train on every fold but ``fold`` and score the held-out fold."""
        ds, split = self.prepare()
        cfg = self.config
        started = time.perf_counter()

        training = [ds.items[i] for i in split.training_indices(fold)]
        validation = [ds.items[i] for i in split.validation_indices(fold)]
        scheme_key = _SCHEME_KEYS[scheme]

        inflated = inflate(
            training, scheme, derive_seed(cfg.seed, 1, scheme_key, fold), self.options
        )
        # same initial weights for every scheme on a given fold
        model = build_reference_model(
            class_count=len(ds.classes),
            seed=derive_seed(cfg.seed, 2, fold),
            weight_init=cfg.weight_init,
            input_size=cfg.input_size,
        )
        state = OptimizerState(
            learning_rate=cfg.learning_rate, momentum=cfg.momentum, l2=cfg.l2
        )
        trace = train(
            model,
            inflated,
            epochs=cfg.epochs,
            minibatch=cfg.minibatch,
            state=state,
            seed=derive_seed(cfg.seed, 3, scheme_key, fold),
            grad_clip_norm=cfg.grad_clip_norm,
            on_epoch=on_epoch,
        )

        probs = predict_proba(model, [item.image for item in validation])
        result = score_fold(probs, [item.label for item in validation], fold)
        logger.info(
            f"{scheme.value} fold {fold}: top-1 {result.top1:.4f}, "
            f"top-5 {result.top5:.4f}"
        )
        row = ResultRow(
            scheme=scheme.value,
            fold=fold,
            top1=result.top1,
            top5=result.top5,
            items=result.item_count,
            wall_seconds=(
                round(time.perf_counter() - started, 3)
                if cfg.record_wall_time
                else None
            ),
        )
        return model, trace, row

    def _score_fold(self, scheme: AugmentationScheme, fold: int) -> ResultRow:
        return self.train_fold(scheme, fold)[2]

    def run_scheme(
        self, scheme: AugmentationScheme, emit: Callable[[ResultRow], None]
    ) -> BenchmarkReport:
        """All folds of one scheme; rows are emitted in fold order as they finish."""
        folds = range(self.config.folds)
        rows: List[ResultRow] = []
        with ThreadPoolExecutor(max_workers=self.config.fold_workers) as pool:
            for row in pool.map(lambda f: self._score_fold(scheme, f), folds):
                emit(row)
                rows.append(row)
        return aggregate([row.to_fold_result() for row in rows], scheme.value)

    def run(
        self,
        schemes: Optional[Sequence[AugmentationScheme]] = None,
        on_row: Optional[Callable[[ResultRow], None]] = None,
    ) -> Tuple[List[BenchmarkReport], Dict[str, AugBenchError]]:
        """
        Run every scheme, writing result rows to the results file as they finish.

        A scheme that fails is recorded as a failed row and the run moves on.
        Returns the per-scheme reports and the failures keyed by scheme name.
        """
        cfg = self.config
        schemes = list(schemes or cfg.schemes)
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        results_path = cfg.output_dir / settings.results_filename
        report_path = cfg.output_dir / settings.report_filename

        reports: List[BenchmarkReport] = []
        failures: Dict[str, AugBenchError] = {}
        self.prepare()

        with open(results_path, "w", encoding="utf-8") as fh:

            def emit(row: ResultRow) -> None:
                _write_row(fh, row)
                if on_row:
                    on_row(row)

            for scheme in schemes:
                logger.info(f"Benchmarking scheme {scheme.value}")
                try:
                    reports.append(self.run_scheme(scheme, emit))
                except AugBenchError as e:
                    logger.warning(f"Scheme {scheme.value} failed: {e}")
                    failures[scheme.value] = e
                    emit(ResultRow(scheme=scheme.value, status="failed", error=str(e)))

        write_reports(reports, report_path)
        logger.info(f"Results written to {results_path}, report to {report_path}")
        return reports, failures


def _write_row(fh: TextIO, row: ResultRow) -> None:
    fh.write(row.model_dump_json(exclude_none=True) + "\n")
    fh.flush()