"""
Data models for the augmentation benchmark.
"""

import json
from enum import Enum
from typing import Annotated, Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class AugmentationScheme(str, Enum):
    """The seven evaluated schemes, baseline included."""

    NONE = "none"
    FLIP = "flip"
    ROTATE = "rotate"
    CROP = "crop"
    JITTER = "jitter"
    EDGE = "edge"
    FANCY_PCA = "fancy_pca"

    @property
    def display_name(self) -> str:
        return _DISPLAY_NAMES[self]

    @property
    def category(self) -> str:
        if self is AugmentationScheme.NONE:
            return "baseline"
        if self in (
            AugmentationScheme.FLIP,
            AugmentationScheme.ROTATE,
            AugmentationScheme.CROP,
        ):
            return "geometric"
        return "photometric"


_DISPLAY_NAMES = {
    AugmentationScheme.NONE: "Baseline",
    AugmentationScheme.FLIP: "Flipping",
    AugmentationScheme.ROTATE: "Rotating",
    AugmentationScheme.CROP: "Cropping",
    AugmentationScheme.JITTER: "Color Jittering",
    AugmentationScheme.EDGE: "Edge Enhancement",
    AugmentationScheme.FANCY_PCA: "Fancy PCA",
}


RotationAngle = Annotated[float, Field(gt=-180.0, le=180.0)]


class RotationParams(BaseModel):
    """Rotation angle in degrees, positive counter-clockwise."""

    model_config = ConfigDict(frozen=True)

    theta: RotationAngle


class CropParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    crop_size: int = Field(default=224, gt=0)
    source_size: int = Field(default=256, gt=0)

    @model_validator(mode="after")
    def crop_fits_source(self) -> "CropParams":
        if self.crop_size > self.source_size:
            raise ValueError("crop_size must not exceed source_size")
        return self


class JitterParams(BaseModel):
    """Set HSB adjustment; hue is a fraction of the full circle."""

    model_config = ConfigDict(frozen=True)

    delta_hue: float = Field(default=0.05, ge=-0.5, le=0.5)
    delta_saturation: float = Field(default=0.15, ge=-1.0, le=1.0)
    delta_brightness: float = Field(default=0.15, ge=-1.0, le=1.0)


class FancyPcaBasis(BaseModel):
    """Eigenvectors as the columns of a 3x3 matrix, with their eigenvalues."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    eigenvectors: np.ndarray
    eigenvalues: np.ndarray
    scale: float = Field(default=5e6, gt=0.0)

    @field_validator("eigenvectors")
    @classmethod
    def orthonormal_columns(cls, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (3, 3):
            raise ValueError("eigenvectors must be a 3x3 matrix")
        if not np.allclose(v.T @ v, np.eye(3), atol=1e-9):
            raise ValueError("eigenvector columns must be orthonormal")
        return v

    @field_validator("eigenvalues")
    @classmethod
    def sorted_non_negative(cls, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (3,):
            raise ValueError("exactly three eigenvalues are required")
        if np.any(v < -1e-12):
            raise ValueError("eigenvalues must be non-negative")
        v = np.clip(v, 0.0, None)
        if np.any(np.diff(v) > 0):
            raise ValueError("eigenvalues must be sorted non-increasing")
        return v


class AlphaDraw(BaseModel):
    model_config = ConfigDict(frozen=True)

    alphas: List[float] = Field(min_length=3, max_length=3)


class AugmentationOptions(BaseModel):
    """Per-scheme parameters used when inflating a training set."""

    model_config = ConfigDict(frozen=True)

    rotation_angles: List[RotationAngle] = Field(default_factory=lambda: [-30.0, 30.0])
    crop: CropParams = Field(default_factory=CropParams)
    jitter: JitterParams = Field(default_factory=JitterParams)
    pca_scale: float = Field(default=5e6, gt=0.0)
    pca_alpha_std: float = Field(default=0.1, ge=0.0)
    pca_eigenvalues: Literal["covariance", "scatter"] = "covariance"

    def variants_per_image(self, scheme: AugmentationScheme) -> int:
        if scheme is AugmentationScheme.NONE:
            return 0
        if scheme is AugmentationScheme.ROTATE:
            return len(self.rotation_angles)
        if scheme is AugmentationScheme.CROP:
            return 5
        return 1


class Provenance(BaseModel):
    """Original image, or the variant of a parent produced by a scheme."""

    model_config = ConfigDict(frozen=True)

    scheme: Optional[AugmentationScheme] = None
    variant: Optional[int] = None
    parent_id: Optional[str] = None

    @property
    def is_original(self) -> bool:
        return self.scheme is None


class LabeledImage(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    image: np.ndarray
    label: int = Field(ge=0)
    source_id: str
    provenance: Provenance = Field(default_factory=Provenance)

    @field_validator("image")
    @classmethod
    def rgb_uint8(cls, v: np.ndarray) -> np.ndarray:
        if v.dtype != np.uint8 or v.ndim != 3 or v.shape[2] != 3:
            raise ValueError("image must be a uint8 array of shape (h, w, 3)")
        return v


class LabeledDataset(BaseModel):
    model_config = ConfigDict(frozen=True)

    classes: List[str]
    items: List[LabeledImage] = Field(default_factory=list)
    skipped: List[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def classes_consistent(self) -> "LabeledDataset":
        if len(set(self.classes)) != len(self.classes):
            raise ValueError("class names must be unique")
        if list(self.classes) != sorted(self.classes):
            raise ValueError("class names must be sorted")
        for item in self.items:
            if item.label >= len(self.classes):
                raise ValueError(f"label {item.label} of {item.source_id} out of range")
        return self

    def class_counts(self) -> Dict[str, int]:
        counts = {name: 0 for name in self.classes}
        for item in self.items:
            counts[self.classes[item.label]] += 1
        return counts


class FoldSplit(BaseModel):
    """Fold index per dataset item, aligned with LabeledDataset.items."""

    model_config = ConfigDict(frozen=True)

    fold_count: int = Field(default=4, ge=2)
    assignments: List[int]
    source_ids: List[str]

    @model_validator(mode="after")
    def aligned(self) -> "FoldSplit":
        if len(self.assignments) != len(self.source_ids):
            raise ValueError("assignments and source_ids must align")
        if any(not 0 <= a < self.fold_count for a in self.assignments):
            raise ValueError("fold index out of range")
        return self

    def validation_indices(self, fold: int) -> List[int]:
        return [i for i, a in enumerate(self.assignments) if a == fold]

    def training_indices(self, fold: int) -> List[int]:
        return [i for i, a in enumerate(self.assignments) if a != fold]

    def manifest(self) -> Dict[str, int]:
        return dict(zip(self.source_ids, self.assignments))


class LayerKind(str, Enum):
    CONV = "conv"
    MAXPOOL = "maxpool"
    DENSE = "dense"
    SOFTMAX = "softmax"


class LayerSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: LayerKind
    kernel: int = Field(default=1, ge=1)
    stride: int = Field(default=1, ge=1)
    padding: int = Field(default=0, ge=0)
    units: Optional[int] = Field(default=None, ge=1)
    relu: bool = False

    @model_validator(mode="after")
    def units_when_trainable(self) -> "LayerSpec":
        if self.kind is not LayerKind.MAXPOOL and self.units is None:
            raise ValueError(f"{self.kind.value} layer needs units")
        return self


class EpochStats(BaseModel):
    epoch: int
    loss: float
    train_top1: float


class TrainingTrace(BaseModel):
    epochs: List[EpochStats] = Field(default_factory=list)

    def losses(self) -> List[float]:
        return [e.loss for e in self.epochs]

    def to_jsonl(self) -> str:
        return "".join(e.model_dump_json() + "\n" for e in self.epochs)


class FoldResult(BaseModel):
    fold_index: int = Field(ge=0)
    top1: float = Field(ge=0.0, le=1.0)
    top5: float = Field(ge=0.0, le=1.0)
    item_count: int = Field(ge=0)

    @model_validator(mode="after")
    def top5_dominates(self) -> "FoldResult":
        if self.top5 < self.top1:
            raise ValueError("top5 must be at least top1")
        return self


class BenchmarkReport(BaseModel):
    scheme: str
    folds: List[FoldResult]
    top1_mean: float
    top1_std: float
    top5_mean: float
    top5_std: float

    def summary_json(self) -> str:
        return json.dumps(
            {
                "scheme": self.scheme,
                "folds": len(self.folds),
                "top1_mean": self.top1_mean,
                "top1_std": self.top1_std,
                "top5_mean": self.top5_mean,
                "top5_std": self.top5_std,
            }
        )


class ResultRow(BaseModel):
    """One line of the results file: a scored fold, or a failed scheme."""

    scheme: str
    fold: Optional[int] = None
    top1: Optional[float] = None
    top5: Optional[float] = None
    items: Optional[int] = None
    wall_seconds: Optional[float] = None
    status: str = "ok"
    error: Optional[str] = None

    def to_fold_result(self) -> FoldResult:
        return FoldResult(
            fold_index=self.fold or 0,
            top1=self.top1 or 0.0,
            top5=self.top5 or 0.0,
            item_count=self.items or 0,
        )
