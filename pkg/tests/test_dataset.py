"""
Tests for ingestion, trimming, folds and training-set inflation.
"""

import numpy as np
import pytest
from pydantic import ValidationError

from src.dataset import (
    augment_image,
    augmented_id,
    inflate,
    ingest,
    ingest_async,
    make_folds,
    materialize,
    read_fold_manifest,
    subset,
    trim_to_multiple,
    write_fold_manifest,
)
from src.errors import (
    AlreadyAugmented,
    DuplicateOutput,
    EmptyDataset,
    InvalidParameters,
    NotTrimmed,
)
from src.imagecore import load_image
from src.models import AugmentationOptions, AugmentationScheme, Provenance


class TestIngest:
    def test_counts_classes_and_items(self, make_class_tree):
        root = make_class_tree({"ant": 4, "bee": 4})

        ds = ingest(root)

        assert ds.classes == ["ant", "bee"]
        assert len(ds.items) == 8
        assert ds.class_counts() == {"ant": 4, "bee": 4}

    def test_excluded_class(self, make_class_tree):
        root = make_class_tree({"ant": 4, "bee": 4})

        ds = ingest(root, excluded_classes=["bee"])

        assert ds.classes == ["ant"]
        assert len(ds.items) == 4

    def test_items_are_standardized_and_original(self, make_class_tree):
        root = make_class_tree({"ant": 2}, size=(30, 50))

        ds = ingest(root)

        for item in ds.items:
            assert item.image.shape == (256, 256, 3)
            assert item.provenance.is_original
        assert [item.source_id for item in ds.items] == ["ant/img_000.ppm", "ant/img_001.ppm"]

    def test_undecodable_files_are_skipped(self, make_class_tree):
        root = make_class_tree({"ant": 3})
        (root / "ant" / "broken.ppm").write_bytes(b"P6\n4 4\n255\n" + bytes(5))

        ds = ingest(root)

        assert len(ds.items) == 3
        assert ds.skipped == ["ant/broken.ppm"]

    def test_empty_root(self, tmp_path):
        with pytest.raises(EmptyDataset):
            ingest(tmp_path)

    async def test_async_ingest_preserves_path_order(self, make_class_tree):
        root = make_class_tree({"cat": 5, "dog": 3})

        ds = await ingest_async(root, concurrency=2)

        ids = [item.source_id for item in ds.items]
        assert ids == sorted(ids)
        assert [item.label for item in ds.items] == [0] * 5 + [1] * 3


class TestTrim:
    def test_ten_items_trim_to_eight(self, make_dataset):
        ds = trim_to_multiple(make_dataset({"a": 10}, size=4), k=4, seed=0)

        assert len(ds.items) == 8

    def test_multiple_is_a_no_op(self, make_dataset):
        original = make_dataset({"a": 8}, size=4)

        ds = trim_to_multiple(original, k=4, seed=0)

        assert [i.source_id for i in ds.items] == [i.source_id for i in original.items]

    def test_seeded_selection_is_deterministic(self, make_dataset):
        original = make_dataset({"a": 11, "b": 6}, size=4)

        first = trim_to_multiple(original, seed=7)
        second = trim_to_multiple(original, seed=7)

        assert [i.source_id for i in first.items] == [i.source_id for i in second.items]
        assert first.class_counts() == {"a": 8, "b": 4}

    def test_small_classes_are_dropped_and_relabelled(self, make_dataset):
        ds = trim_to_multiple(make_dataset({"a": 3, "b": 4}, size=4))

        assert ds.classes == ["b"]
        assert {item.label for item in ds.items} == {0}


def test_subset_takes_first_classes_and_items(make_dataset):
    ds = subset(make_dataset({"c": 5, "a": 5, "b": 5}, size=4), max_classes=2, max_per_class=3)

    assert ds.classes == ["a", "b"]
    assert [i.source_id for i in ds.items] == [
        "a/img_000.ppm",
        "a/img_001.ppm",
        "a/img_002.ppm",
        "b/img_000.ppm",
        "b/img_001.ppm",
        "b/img_002.ppm",
    ]


class TestFolds:
    def test_single_class_of_eight(self, make_dataset):
        split = make_folds(make_dataset({"a": 8}, size=4), seed=0)

        assert [split.assignments.count(f) for f in range(4)] == [2, 2, 2, 2]

    def test_stratified(self, make_dataset):
        ds = make_dataset({"a": 4, "b": 4}, size=4)

        split = make_folds(ds, seed=3)

        for fold in range(4):
            labels = sorted(ds.items[i].label for i in split.validation_indices(fold))
            assert labels == [0, 1]

    def test_deterministic(self, make_dataset):
        ds = make_dataset({"a": 12, "b": 8}, size=4)

        assert make_folds(ds, seed=5) == make_folds(ds, seed=5)

    def test_training_and_validation_partition(self, make_dataset):
        ds = make_dataset({"a": 8, "b": 4}, size=4)
        split = make_folds(ds, seed=1)

        for fold in range(4):
            train = set(split.training_indices(fold))
            val = set(split.validation_indices(fold))
            assert not train & val
            assert train | val == set(range(len(ds.items)))

    def test_untrimmed_class(self, make_dataset):
        with pytest.raises(NotTrimmed):
            make_folds(make_dataset({"a": 6}, size=4))

    def test_rejects_augmented_items(self, make_dataset):
        ds = make_dataset({"a": 4}, size=4)
        variant = ds.items[0].model_copy(
            update={"provenance": Provenance(scheme=AugmentationScheme.FLIP, variant=0)}
        )
        ds = ds.model_copy(update={"items": [variant] + ds.items[1:]})

        with pytest.raises(AlreadyAugmented):
            make_folds(ds)


    def test_manifest_round_trip(self, make_dataset, tmp_path):
        ds = make_dataset({"a": 4}, size=4)
        split = make_folds(ds, seed=0)

        write_fold_manifest(split, tmp_path / "folds.json")

        assert read_fold_manifest(tmp_path / "folds.json") == split.manifest()


class TestInflate:
    @pytest.mark.parametrize(
        "scheme, per_item",
        [
            (AugmentationScheme.NONE, 1),
            (AugmentationScheme.FLIP, 2),
            (AugmentationScheme.ROTATE, 3),
            (AugmentationScheme.CROP, 6),
            (AugmentationScheme.JITTER, 2),
            (AugmentationScheme.EDGE, 2),
            (AugmentationScheme.FANCY_PCA, 2),
        ],
    )
    def test_counts_and_label_preservation(self, make_dataset, scheme, per_item):
        ds = make_dataset({"a": 2, "b": 1, "c": 1})

        inflated = inflate(ds.items, scheme, seed=0)

        assert len(inflated) == len(ds.items) * per_item
        parents = {item.source_id: item for item in ds.items}
        for item in inflated:
            if item.provenance.is_original:
                continue
            parent = parents[item.provenance.parent_id]
            assert item.label == parent.label
            assert item.provenance.scheme is scheme

    def test_crop_of_hundred(self, make_dataset):
        items = make_dataset({"a": 100}, size=256).items

        assert len(inflate(items, AugmentationScheme.CROP)) == 600

    def test_none_returns_the_originals(self, make_dataset):
        items = make_dataset({"a": 3}, size=8).items

        assert inflate(items, AugmentationScheme.NONE) == items

    def test_variants_follow_their_parent(self, make_dataset):
        items = make_dataset({"a": 2}, size=8).items

        inflated = inflate(items, AugmentationScheme.FLIP)

        assert [i.source_id for i in inflated] == [
            "a/img_000.ppm",
            "a/img_000__flip0",
            "a/img_001.ppm",
            "a/img_001__flip0",
        ]
        np.testing.assert_array_equal(inflated[1].image, items[0].image[:, ::-1])

    def test_fancy_pca_is_seeded(self, make_dataset):
        items = make_dataset({"a": 2}, size=8).items
        options = AugmentationOptions(pca_eigenvalues="scatter")

        first = inflate(items, AugmentationScheme.FANCY_PCA, seed=4, options=options)
        second = inflate(items, AugmentationScheme.FANCY_PCA, seed=4, options=options)

        for a, b in zip(first, second):
            np.testing.assert_array_equal(a.image, b.image)

    def test_rejects_already_augmented_items(self, make_dataset):
        item = make_dataset({"a": 1}, size=8).items[0]
        variant = item.model_copy(
            update={"provenance": Provenance(scheme=AugmentationScheme.FLIP, variant=0)}
        )

        with pytest.raises(AlreadyAugmented):
            inflate([variant], AugmentationScheme.FLIP)


    def test_custom_rotation_angles(self, rng):
        img = rng.integers(0, 256, size=(9, 9, 3), dtype=np.uint8)
        options = AugmentationOptions(rotation_angles=[-15.0, 15.0, 90.0])

        variants = augment_image(img, AugmentationScheme.ROTATE, options, rng)

        assert len(variants) == options.variants_per_image(AugmentationScheme.ROTATE) == 3

    @pytest.mark.parametrize("angle", [200.0, -180.0])
    def test_rotation_angles_out_of_range(self, angle):
        with pytest.raises(ValidationError):
            AugmentationOptions(rotation_angles=[30.0, angle])

    def test_unchecked_rotation_angle_is_a_benchmark_error(self, rng):
        img = rng.integers(0, 256, size=(9, 9, 3), dtype=np.uint8)
        options = AugmentationOptions.model_construct(rotation_angles=[200.0])

        with pytest.raises(InvalidParameters):
            augment_image(img, AugmentationScheme.ROTATE, options, rng)



def test_augmented_id():
    assert augmented_id("ant/img_001.jpg", AugmentationScheme.CROP, 3) == "ant/img_001__crop3"


def test_materialize_writes_class_layout(make_dataset, tmp_path):
    ds = make_dataset({"ant": 2, "bee": 1}, size=8)
    items = inflate(ds.items, AugmentationScheme.FLIP)

    counts = materialize(items, ds.classes, tmp_path / "out")

    assert counts == {"ant": 4, "bee": 2}
    assert sorted(p.name for p in (tmp_path / "out" / "ant").iterdir()) == [
        "img_000.ppm",
        "img_000__flip0.ppm",
        "img_001.ppm",
        "img_001__flip0.ppm",
    ]
    np.testing.assert_array_equal(
        load_image(tmp_path / "out" / "bee" / "img_000__flip0.ppm"), items[-1].image
    )


def test_materialize_rejects_shared_stems(make_dataset, tmp_path):
    first, second = make_dataset({"ant": 2}, size=8).items
    items = [
        first.model_copy(update={"source_id": "ant/a.jpg"}),
        second.model_copy(update={"source_id": "ant/a.png"}),
    ]

    with pytest.raises(DuplicateOutput) as exc:
        materialize(items, ["ant"], tmp_path / "out")

    assert "ant/a.png" in str(exc.value)
