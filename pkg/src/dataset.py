"""
Dataset ingestion, trimming, stratified folds and training-set inflation.
"""

import asyncio
import json
import logging
from collections import defaultdict
from pathlib import Path, PurePosixPath
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from .config import settings
from .errors import (
    AlreadyAugmented,
    AugBenchError,
    DuplicateOutput,
    EmptyDataset,
    ImageIoError,
    InvalidParameters,
    NotTrimmed,
)
from .geometric import five_crop, flip_horizontal, rotate
from .imagecore import PathLike, RawImage, load_image, save_image, standardize
from .models import (
    AugmentationOptions,
    AugmentationScheme,
    FoldSplit,
    LabeledDataset,
    LabeledImage,
    Provenance,
    RotationParams,
)
from .photometric import (
    color_jitter,
    compute_pca_basis,
    draw_alphas,
    edge_enhance,
    fancy_pca,
)

logger = logging.getLogger(__name__)

FOLD_COUNT = 4


def _load_standardized(path: Path) -> RawImage:
    return standardize(load_image(path))


async def ingest_async(
    root: PathLike,
    excluded_classes: Iterable[str] = (),
    concurrency: Optional[int] = None,
) -> LabeledDataset:
    """
    Load ``<root>/<class>/<image>`` into a standardized, labelled dataset.

    Files that fail to decode are logged and listed in ``skipped``.
    """
    root = Path(root)
    if not root.is_dir():
        raise EmptyDataset(f"dataset root {root} is not a directory")

    excluded = set(excluded_classes)
    classes = sorted(
        d.name
        for d in root.iterdir()
        if d.is_dir() and not d.name.startswith(".") and d.name not in excluded
    )
    for name in sorted(excluded):
        if (root / name).is_dir():
            logger.info(f"Excluding class {name}")

    jobs = []
    for label, name in enumerate(classes):
        for path in sorted((root / name).iterdir()):
            if path.is_file() and not path.name.startswith("."):
                jobs.append((label, path))

    semaphore = asyncio.Semaphore(concurrency or settings.ingest_concurrency)

    async def decode(path: Path) -> Optional[RawImage]:
        async with semaphore:
            try:
                return await asyncio.to_thread(_load_standardized, path)
            except AugBenchError as e:
                logger.warning(f"Skipping {path}: {e}")
                return None

    images = await asyncio.gather(*(decode(path) for _, path in jobs))

    items = []
    skipped = []
    for (label, path), image in zip(jobs, images):
        source_id = path.relative_to(root).as_posix()
        if image is None:
            skipped.append(source_id)
            continue
        items.append(LabeledImage(image=image, label=label, source_id=source_id))

    if not items:
        raise EmptyDataset(f"no decodable images under {root}")

    logger.info(
        f"Ingested {len(items)} images in {len(classes)} classes "
        f"({len(skipped)} skipped)"
    )
    return LabeledDataset(classes=classes, items=items, skipped=skipped)


def ingest(root: PathLike, excluded_classes: Iterable[str] = ()) -> LabeledDataset:
    """Synchronous wrapper around ingest_async."""
    return asyncio.run(ingest_async(root, excluded_classes))


def _group_by_label(items: Sequence[LabeledImage]) -> Dict[int, List[int]]:
    groups: Dict[int, List[int]] = defaultdict(list)
    for i, item in enumerate(items):
        groups[item.label].append(i)
    return groups


def _relabel(
    ds: LabeledDataset, selection: Dict[int, List[int]]
) -> LabeledDataset:
    """Keep the selected item indices per old label, compacting class indices."""
    classes = []
    items = []
    for old_label, name in enumerate(ds.classes):
        chosen = selection.get(old_label)
        if not chosen:
            continue
        new_label = len(classes)
        classes.append(name)
        items.extend(
            ds.items[i].model_copy(update={"label": new_label}) for i in chosen
        )
    if not items:
        raise EmptyDataset("no classes left after selection")
    return LabeledDataset(classes=classes, items=items, skipped=ds.skipped)


def trim_to_multiple(
    ds: LabeledDataset, k: int = FOLD_COUNT, seed: int = 0
) -> LabeledDataset:
    """Drop a seeded random subset per class so each class count divides by k."""
    rng = np.random.default_rng(seed)
    groups = _group_by_label(ds.items)
    selection = {}
    for label, name in enumerate(ds.classes):
        indices = groups.get(label, [])
        if len(indices) < k:
            logger.warning(f"Dropping class {name}: {len(indices)} < {k} images")
            continue
        keep = len(indices) - len(indices) % k
        chosen = np.sort(rng.choice(len(indices), size=keep, replace=False))
        if keep < len(indices):
            logger.info(f"Trimmed class {name} from {len(indices)} to {keep}")
        selection[label] = [indices[j] for j in chosen]
    return _relabel(ds, selection)


def subset(
    ds: LabeledDataset,
    max_classes: Optional[int] = None,
    max_per_class: Optional[int] = None,
) -> LabeledDataset:
    """Lexicographically first classes and, within each, first items by path."""
    groups = _group_by_label(ds.items)
    selection = {}
    for label in range(len(ds.classes)):
        if max_classes is not None and label >= max_classes:
            break
        indices = sorted(groups.get(label, []), key=lambda i: ds.items[i].source_id)
        selection[label] = indices[:max_per_class]
    return _relabel(ds, selection)


def make_folds(
    ds: LabeledDataset, seed: int = 0, fold_count: int = FOLD_COUNT
) -> FoldSplit:
    """Stratified folds: each class shuffled and dealt round-robin."""
    if any(not item.provenance.is_original for item in ds.items):
        raise AlreadyAugmented("folds are assigned to original images only")

    groups = _group_by_label(ds.items)
    for label, indices in sorted(groups.items()):
        if len(indices) % fold_count:
            raise NotTrimmed(
                f"class {ds.classes[label]} has {len(indices)} images, "
                f"not divisible by {fold_count}"
            )

    rng = np.random.default_rng(seed)
    assignments = [0] * len(ds.items)
    for label in sorted(groups):
        indices = groups[label]
        for position, j in enumerate(rng.permutation(len(indices))):
            assignments[indices[j]] = position % fold_count

    return FoldSplit(
        fold_count=fold_count,
        assignments=assignments,
        source_ids=[item.source_id for item in ds.items],
    )


def augment_image(
    img: RawImage,
    scheme: AugmentationScheme,
    options: AugmentationOptions,
    rng: np.random.Generator,
) -> List[RawImage]:
    """Variants of one image under a scheme; the original is not included."""
    if scheme is AugmentationScheme.NONE:
        return []
    if scheme is AugmentationScheme.FLIP:
        return [flip_horizontal(img)]
    if scheme is AugmentationScheme.ROTATE:
        try:
            angles = [RotationParams(theta=a) for a in options.rotation_angles]
        except ValidationError as e:
            raise InvalidParameters(f"rotation angle: {e.errors()[0]['msg']}") from e
        return [rotate(img, params) for params in angles]
    if scheme is AugmentationScheme.CROP:
        return five_crop(img, options.crop)
    if scheme is AugmentationScheme.JITTER:
        return [color_jitter(img, options.jitter)]
    if scheme is AugmentationScheme.EDGE:
        return [edge_enhance(img)]
    if scheme is AugmentationScheme.FANCY_PCA:
        basis = compute_pca_basis(img, options.pca_scale, options.pca_eigenvalues)
        return [fancy_pca(img, basis, draw_alphas(rng, options.pca_alpha_std))]
    raise ValueError(f"unknown scheme {scheme}")


def augmented_id(parent_id: str, scheme: AugmentationScheme, variant: int) -> str:
    stem = PurePosixPath(parent_id).with_suffix("").as_posix()
    return f"{stem}__{scheme.value}{variant}"


def inflate(
    training_items: Sequence[LabeledImage],
    scheme: AugmentationScheme,
    seed: int = 0,
    options: Optional[AugmentationOptions] = None,
) -> List[LabeledImage]:
    """
    S' = S u T: every original followed by its variants, labels copied.
    """
    options = options or AugmentationOptions()
    rng = np.random.default_rng(seed)
    inflated: List[LabeledImage] = []
    for item in training_items:
        if not item.provenance.is_original:
            raise AlreadyAugmented(f"{item.source_id} is already augmented")
        inflated.append(item)
        for variant, image in enumerate(augment_image(item.image, scheme, options, rng)):
            inflated.append(
                LabeledImage(
                    image=image,
                    label=item.label,
                    source_id=augmented_id(item.source_id, scheme, variant),
                    provenance=Provenance(
                        scheme=scheme, variant=variant, parent_id=item.source_id
                    ),
                )
            )
    logger.info(
        f"Inflated {len(training_items)} images to {len(inflated)} with {scheme.value}"
    )
    return inflated


def materialize(
    items: Iterable[LabeledImage], classes: Sequence[str], out_dir: PathLike
) -> Dict[str, int]:
    """Write items as ``<out>/<class>/<stem>[__<scheme><variant>].ppm``."""
    out_dir = Path(out_dir)
    counts: Dict[str, int] = {name: 0 for name in classes}
    written: Dict[Path, str] = {}
    for item in items:
        name = classes[item.label]
        class_dir = out_dir / name
        filename = PurePosixPath(item.source_id).name
        if item.provenance.is_original:
            filename = PurePosixPath(filename).stem
        target = class_dir / f"{filename}.ppm"
        if target in written:
            raise DuplicateOutput(
                f"{item.source_id} and {written[target]} both map to {target}"
            )
        written[target] = item.source_id
        try:
            class_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ImageIoError(f"cannot create {class_dir}: {e}") from e
        save_image(item.image, target)
        counts[name] += 1
    return counts


def write_fold_manifest(split: FoldSplit, path: PathLike) -> None:
    try:
        Path(path).write_text(json.dumps(split.manifest(), indent=2) + "\n")
    except OSError as e:
        raise ImageIoError(f"cannot write fold manifest {path}: {e}") from e


def read_fold_manifest(path: PathLike) -> Dict[str, int]:
    return {k: int(v) for k, v in json.loads(Path(path).read_text()).items()}
