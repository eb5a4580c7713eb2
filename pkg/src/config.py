"""
Configuration settings for the augmentation benchmark.
"""

from pathlib import Path
from typing import Annotated, Any, List, Literal, Optional, Tuple, Type

from pydantic import Field, field_validator
from pydantic_settings import (
    BaseSettings,
    NoDecode,
    PydanticBaseSettingsSource,
    SettingsConfigDict,
)

from .models import (
    AugmentationOptions,
    AugmentationScheme,
    CropParams,
    JitterParams,
    RotationAngle,
)


class Settings(BaseSettings):
    """Process-wide settings."""

    model_config = SettingsConfigDict(
        env_file=".env", case_sensitive=False, extra="ignore"
    )

    # Logging Configuration
    log_level: str = "INFO"
    enable_rich_output: bool = True

    # Output Configuration
    results_filename: str = "results.jsonl"
    report_filename: str = "report.jsonl"

    # Ingest Configuration
    ingest_concurrency: int = Field(default=8, ge=1)

    @field_validator("log_level")
    @classmethod
    def known_level(cls, v: str) -> str:
        v = v.upper()
        if v not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise ValueError(f"unknown log level {v}")
        return v


def _split_list(v: Any) -> Any:
    if isinstance(v, str):
        return [part.strip() for part in v.split(",") if part.strip()]
    return v


class RunConfig(BaseSettings):
    """
    Declarative run configuration.

    Values come from keyword arguments (command-line flags) first, then from
    the flat key=value file passed as ``_env_file``. Environment variables are
    not consulted.
    """

    model_config = SettingsConfigDict(case_sensitive=False, extra="forbid")

    dataset_root: Optional[Path] = None
    output_dir: Path = Path("runs")
    schemes: Annotated[List[AugmentationScheme], NoDecode] = Field(
        default_factory=lambda: list(AugmentationScheme)
    )
    seed: int = 0

    # Training hyper-parameters
    epochs: int = Field(default=30, ge=0)
    minibatch: int = Field(default=16, ge=1)
    learning_rate: float = Field(default=0.01, gt=0.0)
    momentum: float = Field(default=0.90, ge=0.0, lt=1.0)
    l2: float = Field(default=5e-4, ge=0.0)
    folds: Literal[4] = 4

    excluded_classes: Annotated[List[str], NoDecode] = Field(
        default_factory=lambda: ["BACKGROUND_Google"]
    )

    # Scheme parameters
    delta_hue: float = Field(default=0.05, ge=-0.5, le=0.5)
    delta_saturation: float = Field(default=0.15, ge=-1.0, le=1.0)
    delta_brightness: float = Field(default=0.15, ge=-1.0, le=1.0)
    s_p: float = Field(default=5e6, gt=0.0)
    pca_alpha_std: float = Field(default=0.1, ge=0.0)
    pca_eigenvalues: Literal["covariance", "scatter"] = "covariance"
    rotation_angles: Annotated[List[RotationAngle], NoDecode] = Field(
        default_factory=lambda: [-30.0, 30.0]
    )
    crop_size: int = Field(default=224, gt=0, le=256)

    # Network
    input_size: int = Field(default=224, gt=0)
    weight_init: Literal["xavier", "gaussian"] = "xavier"
    grad_clip_norm: Optional[float] = Field(default=None, gt=0.0)

    # Desk-scale subsetting
    max_classes: Optional[int] = Field(default=None, ge=1)
    max_per_class: Optional[int] = Field(default=None, ge=1)

    fold_workers: int = Field(default=1, ge=1)
    record_wall_time: bool = True

    @field_validator("schemes", "excluded_classes", "rotation_angles", mode="before")
    @classmethod
    def comma_separated(cls, v: Any) -> Any:
        return _split_list(v)

    @field_validator("schemes")
    @classmethod
    def at_least_one_scheme(
        cls, v: List[AugmentationScheme]
    ) -> List[AugmentationScheme]:
        if not v:
            raise ValueError("at least one scheme is required")
        return v

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: Type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> Tuple[PydanticBaseSettingsSource, ...]:
        return init_settings, dotenv_settings

    def augmentation_options(self) -> AugmentationOptions:
        return AugmentationOptions(
            rotation_angles=self.rotation_angles,
            crop=CropParams(crop_size=self.crop_size),
            jitter=JitterParams(
                delta_hue=self.delta_hue,
                delta_saturation=self.delta_saturation,
                delta_brightness=self.delta_brightness,
            ),
            pca_scale=self.s_p,
            pca_alpha_std=self.pca_alpha_std,
            pca_eigenvalues=self.pca_eigenvalues,
        )


# Global settings instance
settings = Settings()
