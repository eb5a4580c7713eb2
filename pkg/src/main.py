"""
Main entry point for the augmentation benchmark.
"""

import logging
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Iterator, List, Optional

import click
import typer
from pydantic import ValidationError
from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel

from .benchmark import BenchmarkRunner
from .config import RunConfig, settings
from .dataset import inflate, ingest, materialize, write_fold_manifest
from .errors import AugBenchError
from .evaluation import read_results, reports_from_rows
from .models import AugmentationScheme
from .nn import save_checkpoint
from .visualiser import BenchmarkVisualiser, console

# Configure logging
if settings.enable_rich_output:
    logging.basicConfig(
        level=getattr(logging, settings.log_level),
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=Console(stderr=True), rich_tracebacks=True)],
    )
else:
    logging.basicConfig(level=getattr(logging, settings.log_level))
logger = logging.getLogger(__name__)

app = typer.Typer()
visualiser = BenchmarkVisualiser(console)

DATASET_ROOT = typer.Option(
    None, "--dataset-root", "-d", help="Directory of <class>/<image> files"
)
OUT = typer.Option(None, "--out", "-o", help="Output directory")
CONFIG = typer.Option(
    None,
    "--config",
    "-c",
    exists=True,
    dir_okay=False,
    help="Flat key=value run configuration; flags override its values",
)
SEED = typer.Option(None, "--seed", help="Seed for trimming, folds, augmentation and training")
SCHEMES = typer.Option(
    None, "--scheme", "--schemes", "-s", help="Scheme name(s), repeatable or comma-separated"
)
EXCLUDE = typer.Option(None, "--exclude-class", help="Class directory to skip (repeatable)")
MAX_CLASSES = typer.Option(None, "--max-classes", help="Keep only the first N classes")
MAX_PER_CLASS = typer.Option(
    None, "--max-per-class", help="Keep only the first M images of each class"
)
EPOCHS = typer.Option(None, "--epochs", help="Training epochs per fold")
MINIBATCH = typer.Option(None, "--minibatch", help="Minibatch size")
LEARNING_RATE = typer.Option(None, "--lr", help="Learning rate")
MOMENTUM = typer.Option(None, "--momentum", help="Nesterov momentum")
L2 = typer.Option(None, "--l2", help="L2 weight decay")
INPUT_SIZE = typer.Option(None, "--input-size", help="Network input side in pixels")
DELTA_HUE = typer.Option(None, "--delta-hue", help="Hue shift as a fraction of the circle")
DELTA_SATURATION = typer.Option(None, "--delta-saturation", help="Saturation shift")
DELTA_BRIGHTNESS = typer.Option(None, "--delta-brightness", help="Brightness shift")
S_P = typer.Option(None, "--s-p", help="Fancy PCA eigenvalue scale")
PCA_ALPHA_STD = typer.Option(None, "--pca-alpha-std", help="Std of the fancy PCA alphas")
PCA_EIGENVALUES = typer.Option(
    None, "--pca-eigenvalues", help="Fancy PCA eigenvalues: covariance or scatter"
)
ROTATION_ANGLES = typer.Option(
    None, "--rotation-angles", help="Comma-separated angles in degrees, e.g. -30,30"
)
CROP_SIZE = typer.Option(None, "--crop-size", help="Side of the five crops")
WEIGHT_INIT = typer.Option(None, "--weight-init", help="Initialisation: xavier or gaussian")
GRAD_CLIP_NORM = typer.Option(None, "--grad-clip-norm", help="Clip gradients to this L2 norm")



def _build_config(config_file: Optional[Path], **flags: Any) -> RunConfig:
    """RunConfig from flags layered over the optional config file."""
    values = {k: v for k, v in flags.items() if v not in (None, [], ())}
    if isinstance(values.get("schemes"), (list, tuple)):
        values["schemes"] = ",".join(values["schemes"])
    try:
        if config_file is not None:
            return RunConfig(_env_file=config_file, **values)
        return RunConfig(**values)
    except ValidationError as e:
        visualiser.display_error(f"Invalid configuration:\n{e}")
        raise typer.Exit(code=1)


@contextmanager
def _reported_errors() -> Iterator[None]:
    """Render library errors and exit with their code."""
    try:
        yield
    except AugBenchError as e:
        logger.debug("Command failed", exc_info=True)
        visualiser.display_error(str(e))
        raise typer.Exit(code=e.exit_code)


def _require_root(cfg: RunConfig) -> Path:
    if cfg.dataset_root is None:
        visualiser.display_error("--dataset-root is required")
        raise typer.Exit(code=1)
    return cfg.dataset_root


def _single_scheme(cfg: RunConfig) -> AugmentationScheme:
    if len(cfg.schemes) != 1:
        visualiser.display_error("exactly one --scheme is required")
        raise typer.Exit(code=1)
    return cfg.schemes[0]


@app.command()
def augment(
    dataset_root: Optional[Path] = DATASET_ROOT,
    out: Optional[Path] = OUT,
    schemes: Optional[List[str]] = SCHEMES,
    seed: Optional[int] = SEED,
    exclude_class: Optional[List[str]] = EXCLUDE,
    delta_hue: Optional[float] = DELTA_HUE,
    delta_saturation: Optional[float] = DELTA_SATURATION,
    delta_brightness: Optional[float] = DELTA_BRIGHTNESS,
    s_p: Optional[float] = S_P,
    pca_alpha_std: Optional[float] = PCA_ALPHA_STD,
    pca_eigenvalues: Optional[str] = PCA_EIGENVALUES,
    rotation_angles: Optional[str] = ROTATION_ANGLES,
    crop_size: Optional[int] = CROP_SIZE,
    config_file: Optional[Path] = CONFIG,
):
    """Write every standardized image plus its variants under one scheme."""
    cfg = _build_config(
        config_file,
        dataset_root=dataset_root,
        output_dir=out,
        schemes=schemes,
        seed=seed,
        excluded_classes=exclude_class,
        delta_hue=delta_hue,
        delta_saturation=delta_saturation,
        delta_brightness=delta_brightness,
        s_p=s_p,
        pca_alpha_std=pca_alpha_std,
        pca_eigenvalues=pca_eigenvalues,
        rotation_angles=rotation_angles,
        crop_size=crop_size,
    )
    root = _require_root(cfg)
    scheme = _single_scheme(cfg)

    console.print(
        Panel.fit(
            f"[bold blue]🖼  Augment[/bold blue]\n{root} → {cfg.output_dir} "
            f"with {scheme.display_name}",
            border_style="blue",
        )
    )
    with _reported_errors():
        with visualiser.progress() as progress:
            progress.add_task("Loading images...", total=None)
            ds = ingest(root, cfg.excluded_classes)
        items = inflate(ds.items, scheme, cfg.seed, cfg.augmentation_options())
        counts = materialize(items, ds.classes, cfg.output_dir)
    visualiser.display_counts(counts, title=f"Files written ({scheme.value})")


@app.command()
def standardize(
    dataset_root: Optional[Path] = DATASET_ROOT,
    out: Optional[Path] = OUT,
    exclude_class: Optional[List[str]] = EXCLUDE,
    config_file: Optional[Path] = CONFIG,
):
    """Write 256x256 standardized copies mirroring the class directories."""
    cfg = _build_config(
        config_file,
        dataset_root=dataset_root,
        output_dir=out,
        excluded_classes=exclude_class,
    )
    root = _require_root(cfg)
    with _reported_errors():
        ds = ingest(root, cfg.excluded_classes)
        counts = materialize(ds.items, ds.classes, cfg.output_dir)
    visualiser.display_counts(counts, title="Standardized images")
    if ds.skipped:
        visualiser.display_notice(
            f"Skipped {len(ds.skipped)} undecodable files:\n" + "\n".join(ds.skipped)
        )


@app.command()
def split(
    dataset_root: Optional[Path] = DATASET_ROOT,
    out: Optional[Path] = OUT,
    seed: Optional[int] = SEED,
    exclude_class: Optional[List[str]] = EXCLUDE,
    max_classes: Optional[int] = MAX_CLASSES,
    max_per_class: Optional[int] = MAX_PER_CLASS,
    config_file: Optional[Path] = CONFIG,
):
    """Trim classes to a multiple of four and write the fold manifest."""
    cfg = _build_config(
        config_file,
        dataset_root=dataset_root,
        output_dir=out,
        seed=seed,
        excluded_classes=exclude_class,
        max_classes=max_classes,
        max_per_class=max_per_class,
    )
    _require_root(cfg)
    runner = BenchmarkRunner(cfg)
    with _reported_errors():
        ds, folds = runner.prepare()
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        manifest = cfg.output_dir / "folds.json"
        write_fold_manifest(folds, manifest)
    visualiser.display_counts(ds.class_counts(), title="Images per class after trimming")
    visualiser.display_counts(
        {f"fold {k}": len(folds.validation_indices(k)) for k in range(folds.fold_count)},
        title="Images per fold",
    )
    console.print(f"[green]Fold manifest written to {manifest}[/green]")


@app.command()
def train(
    dataset_root: Optional[Path] = DATASET_ROOT,
    out: Optional[Path] = OUT,
    schemes: Optional[List[str]] = SCHEMES,
    fold: int = typer.Option(0, "--fold", "-f", min=0, max=3, help="Held-out fold"),
    seed: Optional[int] = SEED,
    epochs: Optional[int] = EPOCHS,
    minibatch: Optional[int] = MINIBATCH,
    lr: Optional[float] = LEARNING_RATE,
    momentum: Optional[float] = MOMENTUM,
    l2: Optional[float] = L2,
    input_size: Optional[int] = INPUT_SIZE,
    weight_init: Optional[str] = WEIGHT_INIT,
    grad_clip_norm: Optional[float] = GRAD_CLIP_NORM,
    delta_hue: Optional[float] = DELTA_HUE,
    delta_saturation: Optional[float] = DELTA_SATURATION,
    delta_brightness: Optional[float] = DELTA_BRIGHTNESS,
    s_p: Optional[float] = S_P,
    pca_alpha_std: Optional[float] = PCA_ALPHA_STD,
    pca_eigenvalues: Optional[str] = PCA_EIGENVALUES,
    rotation_angles: Optional[str] = ROTATION_ANGLES,
    crop_size: Optional[int] = CROP_SIZE,
    exclude_class: Optional[List[str]] = EXCLUDE,
    max_classes: Optional[int] = MAX_CLASSES,
    max_per_class: Optional[int] = MAX_PER_CLASS,
    config_file: Optional[Path] = CONFIG,
):
    """Train one network on all folds but --fold and score the held-out fold."""
    cfg = _build_config(
        config_file,
        dataset_root=dataset_root,
        output_dir=out,
        schemes=schemes,
        seed=seed,
        epochs=epochs,
        minibatch=minibatch,
        learning_rate=lr,
        momentum=momentum,
        l2=l2,
        input_size=input_size,
        weight_init=weight_init,
        grad_clip_norm=grad_clip_norm,
        delta_hue=delta_hue,
        delta_saturation=delta_saturation,
        delta_brightness=delta_brightness,
        s_p=s_p,
        pca_alpha_std=pca_alpha_std,
        pca_eigenvalues=pca_eigenvalues,
        rotation_angles=rotation_angles,
        crop_size=crop_size,
        excluded_classes=exclude_class,
        max_classes=max_classes,
        max_per_class=max_per_class,
    )
    _require_root(cfg)
    scheme = _single_scheme(cfg)

    console.print(
        Panel.fit(
            f"[bold green]🧠 Train[/bold green]\n{scheme.display_name}, "
            f"fold {fold} held out, {cfg.epochs} epochs",
            border_style="green",
        )
    )
    runner = BenchmarkRunner(cfg)
    with _reported_errors():
        model, trace, row = runner.train_fold(scheme, fold)
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        stem = cfg.output_dir / f"{scheme.value}_fold{fold}"
        save_checkpoint(model, stem.with_suffix(".ckpt"))
        Path(f"{stem}_trace.jsonl").write_text(trace.to_jsonl())
        Path(f"{stem}_result.json").write_text(row.model_dump_json(exclude_none=True) + "\n")

    visualiser.display_trace(trace)
    visualiser.display_fold(row)


@app.command()
def benchmark(
    dataset_root: Optional[Path] = DATASET_ROOT,
    out: Optional[Path] = OUT,
    schemes: Optional[List[str]] = SCHEMES,
    seed: Optional[int] = SEED,
    epochs: Optional[int] = EPOCHS,
    minibatch: Optional[int] = MINIBATCH,
    lr: Optional[float] = LEARNING_RATE,
    momentum: Optional[float] = MOMENTUM,
    l2: Optional[float] = L2,
    input_size: Optional[int] = INPUT_SIZE,
    weight_init: Optional[str] = WEIGHT_INIT,
    grad_clip_norm: Optional[float] = GRAD_CLIP_NORM,
    delta_hue: Optional[float] = DELTA_HUE,
    delta_saturation: Optional[float] = DELTA_SATURATION,
    delta_brightness: Optional[float] = DELTA_BRIGHTNESS,
    s_p: Optional[float] = S_P,
    pca_alpha_std: Optional[float] = PCA_ALPHA_STD,
    pca_eigenvalues: Optional[str] = PCA_EIGENVALUES,
    rotation_angles: Optional[str] = ROTATION_ANGLES,
    crop_size: Optional[int] = CROP_SIZE,
    exclude_class: Optional[List[str]] = EXCLUDE,
    max_classes: Optional[int] = MAX_CLASSES,
    max_per_class: Optional[int] = MAX_PER_CLASS,
    fold_workers: Optional[int] = typer.Option(
        None, "--fold-workers", help="Folds of one scheme trained concurrently"
    ),
    record_wall_time: Optional[bool] = typer.Option(
        None,
        "--wall-time/--no-wall-time",
        help="Record per-fold wall-clock seconds in the results file",
    ),
    config_file: Optional[Path] = CONFIG,
):
    """Run 4-fold cross-validation for every scheme and report Top-1/Top-5."""
    cfg = _build_config(
        config_file,
        dataset_root=dataset_root,
        output_dir=out,
        schemes=schemes,
        seed=seed,
        epochs=epochs,
        minibatch=minibatch,
        learning_rate=lr,
        momentum=momentum,
        l2=l2,
        input_size=input_size,
        weight_init=weight_init,
        grad_clip_norm=grad_clip_norm,
        delta_hue=delta_hue,
        delta_saturation=delta_saturation,
        delta_brightness=delta_brightness,
        s_p=s_p,
        pca_alpha_std=pca_alpha_std,
        pca_eigenvalues=pca_eigenvalues,
        rotation_angles=rotation_angles,
        crop_size=crop_size,
        excluded_classes=exclude_class,
        max_classes=max_classes,
        max_per_class=max_per_class,
        fold_workers=fold_workers,
        record_wall_time=record_wall_time,
    )
    _require_root(cfg)

    console.print(
        Panel.fit(
            "[bold magenta]📊 Augmentation Benchmark[/bold magenta]\n"
            f"Schemes: {', '.join(s.value for s in cfg.schemes)}; "
            f"{cfg.folds} folds, {cfg.epochs} epochs, seed {cfg.seed}",
            border_style="magenta",
        )
    )
    runner = BenchmarkRunner(cfg)
    with _reported_errors():
        reports, failures = runner.run(on_row=visualiser.display_fold)

    visualiser.display_report(
        reports, {scheme: str(e) for scheme, e in failures.items()}
    )
    if failures and not reports:
        raise typer.Exit(code=max(e.exit_code for e in failures.values()))


@app.command()
def report(
    results: Path = typer.Argument(
        ..., exists=True, dir_okay=False, help="JSON-lines results file"
    ),
    out: Optional[Path] = typer.Option(
        None, "--out", "-o", help="Also write the table as plain text"
    ),
    folds: bool = typer.Option(False, "--folds", help="Show per-fold scores"),
):
    """Render the benchmark table from a results file."""
    with _reported_errors():
        rows = read_results(results)
    if not rows:
        console.print("no results")
        return

    reports, failures = reports_from_rows(rows)
    visualiser.display_report(reports, failures)
    if folds:
        for r in reports:
            visualiser.display_folds(r)
    if out is not None:
        out.write_text(visualiser.render_report_text(reports, failures))
        console.print(f"[green]Report written to {out}[/green]")


@app.callback()
def main():
    """
    📊 Augmentation Benchmark

    Applies geometric and photometric data augmentation schemes to an
    image-classification dataset and measures their effect with 4-fold
    cross-validation of a small convolutional network.
    """
    pass


def run() -> None:
    """Console entry point: usage errors exit 1, data errors 2, numerical 3."""
    try:
        code = app(standalone_mode=False)
    except click.exceptions.UsageError as e:
        e.show()
        sys.exit(1)
    except click.exceptions.Abort:
        sys.exit(1)
    sys.exit(code or 0)


if __name__ == "__main__":
    run()
