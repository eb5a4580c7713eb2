from pathlib import Path
from typing import Callable, Dict, Tuple
from unittest.mock import patch

import numpy as np
import pytest
from dotenv import load_dotenv


def pytest_configure(config):
    """
    Pytest hook that runs before test collection.
    We use this to load our test environment variables.
    This runs in the same Python session as the tests,
    before any test modules or fixtures are imported.
    """
    print("\n------------ Loading test environment ------------")
    test_env_path = Path(__file__).parent / "test.env"
    if not load_dotenv(str(test_env_path), override=True):
        raise RuntimeError(
            f"Failed to load test environment variables from {test_env_path}"
        )
    print(f"Test environment loaded from {test_env_path}")
    print("--------------------------------------------------\n")


@pytest.fixture
def rng():
    """Seeded generator for reproducible synthetic data."""
    return np.random.default_rng(1234)


@pytest.fixture
def make_class_tree(tmp_path) -> Callable[..., Path]:
    """Builds ``<root>/<class>/img_NNN.ppm`` trees of random images."""
    from src.imagecore import save_image

    def _make(
        counts: Dict[str, int], size: Tuple[int, int] = (12, 10), seed: int = 0
    ) -> Path:
        root = tmp_path / "data"
        gen = np.random.default_rng(seed)
        height, width = size
        for name, count in counts.items():
            class_dir = root / name
            class_dir.mkdir(parents=True, exist_ok=True)
            for i in range(count):
                img = gen.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
                save_image(img, class_dir / f"img_{i:03d}.ppm")
        return root

    return _make


@pytest.fixture
def make_dataset() -> Callable:
    """In-memory standardized dataset with one random image per item."""
    from src.models import LabeledDataset, LabeledImage

    def _make(counts: Dict[str, int], size: int = 256, seed: int = 0):
        gen = np.random.default_rng(seed)
        classes = sorted(counts)
        items = []
        for label, name in enumerate(classes):
            for i in range(counts[name]):
                img = gen.integers(0, 256, size=(size, size, 3), dtype=np.uint8)
                items.append(
                    LabeledImage(image=img, label=label, source_id=f"{name}/img_{i:03d}.ppm")
                )
        return LabeledDataset(classes=classes, items=items)

    return _make


def _tiny_model(class_count=101, seed=0, weight_init="xavier", input_size=16):
    from src.models import LayerKind, LayerSpec
    from src.nn import build_model

    specs = [
        LayerSpec(kind=LayerKind.CONV, kernel=3, stride=2, units=2, relu=True),
        LayerSpec(kind=LayerKind.MAXPOOL, kernel=3, stride=2),
        LayerSpec(kind=LayerKind.SOFTMAX, units=class_count),
    ]
    return build_model(specs, (3, input_size, input_size), seed, weight_init)


@pytest.fixture
def tiny_network():
    """Swap the reference network for a two-layer one so folds train quickly."""
    with patch("src.benchmark.build_reference_model", side_effect=_tiny_model) as factory:
        yield factory
