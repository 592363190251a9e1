"""Group prototypes: means, lookups, archive round-trip."""

import os

import numpy as np
import pytest

from facepriv.core import (AttributeLabels, DatasetManifest, ManifestRecord,
                           group_of, group_token, labels_of, load_image,
                           save_image)
from facepriv.prototypes import (PrototypeError, PrototypeSet,
                                 compute_prototypes, load_prototypes,
                                 opposite_gender_prototype,
                                 same_gender_prototype, save_prototypes)


def _make_dataset(tmp_path, per_group, seed=0, skip_group=None):
    """Write per_group random images for each group; return the manifest."""
    rng = np.random.default_rng(seed)
    records = []
    for g in range(8):
        if g == skip_group:
            continue
        labels = labels_of(g)
        for i in range(per_group):
            rel = f"g{g}_{i}.png"
            save_image(str(tmp_path / rel), rng.uniform(0, 1, (16, 16)))
            records.append(ManifestRecord(rel, f"g{g}s{i}", labels, "train"))
    return DatasetManifest(records, root=str(tmp_path))


def test_prototype_single_image(tmp_path):
    manifest = _make_dataset(tmp_path, per_group=1)
    protos = compute_prototypes(manifest)
    for rec in manifest.records:
        img = load_image(manifest.resolve(rec))
        assert np.array_equal(protos[group_of(rec.labels)], img)


def test_prototype_two_point_mean(tmp_path):
    manifest = _make_dataset(tmp_path, per_group=2)
    protos = compute_prototypes(manifest)
    by_group = {}
    for rec in manifest.records:
        by_group.setdefault(group_of(rec.labels), []).append(
            load_image(manifest.resolve(rec)))
    for g, (a, b) in by_group.items():
        assert np.allclose(protos[g], (a + b) / 2.0, atol=0, rtol=0)


def test_prototype_mean_oracle_80_images(tmp_path):
    manifest = _make_dataset(tmp_path, per_group=10, seed=3)
    assert len(manifest.records) == 80
    protos = compute_prototypes(manifest)
    # independent accumulate-and-divide oracle
    for g in range(8):
        acc, count = np.zeros((16, 16)), 0
        for rec in manifest.records:
            if group_of(rec.labels) == g:
                acc += load_image(manifest.resolve(rec))
                count += 1
        assert count == 10
        assert np.max(np.abs(protos[g] - acc / count)) <= 1e-6
        assert protos[g].min() >= 0.0 and protos[g].max() <= 1.0


def test_prototype_missing_group_named(tmp_path):
    manifest = _make_dataset(tmp_path, per_group=1, skip_group=5)
    with pytest.raises(PrototypeError, match=group_token(5)):
        compute_prototypes(manifest)


def test_incomplete_prototype_set_rejected():
    with pytest.raises(PrototypeError, match="missing groups"):
        PrototypeSet({g: np.zeros((4, 4)) for g in range(7)})


def test_same_and_opposite_lookup(tmp_path):
    manifest = _make_dataset(tmp_path, per_group=2, seed=11)
    protos = compute_prototypes(manifest)
    lab = AttributeLabels("female", "young", "white")
    assert np.array_equal(same_gender_prototype(lab, protos),
                          protos[group_of(lab)])
    flipped = AttributeLabels("male", "young", "white")
    assert np.array_equal(opposite_gender_prototype(lab, protos),
                          protos[group_of(flipped)])
    lab2 = AttributeLabels("male", "old", "black")
    assert np.array_equal(
        opposite_gender_prototype(lab2, protos),
        protos[group_of(AttributeLabels("female", "old", "black"))])


def test_opposite_twice_is_same(tmp_path):
    manifest = _make_dataset(tmp_path, per_group=2, seed=12)
    protos = compute_prototypes(manifest)
    for g in range(8):
        lab = labels_of(g)
        assert np.array_equal(
            opposite_gender_prototype(lab.flip_gender(), protos),
            same_gender_prototype(lab, protos))


def test_same_and_opposite_differ_when_distinct(tmp_path):
    manifest = _make_dataset(tmp_path, per_group=2, seed=13)
    protos = compute_prototypes(manifest)
    for g in range(8):
        lab = labels_of(g)
        assert not np.array_equal(same_gender_prototype(lab, protos),
                                  opposite_gender_prototype(lab, protos))


def test_degenerate_gender_symmetric_set():
    rng = np.random.default_rng(4)
    images = {}
    for g in range(8):
        # same image for both genders of each (age, race) pair
        partner = group_of(labels_of(g).flip_gender())
        images[g] = (images[partner] if partner in images
                     else rng.uniform(0, 1, (8, 8)))
    protos = PrototypeSet(images)
    for g in range(8):
        lab = labels_of(g)
        assert np.array_equal(same_gender_prototype(lab, protos),
                              opposite_gender_prototype(lab, protos))


def test_archive_round_trip_exact(tmp_path):
    manifest = _make_dataset(tmp_path, per_group=3, seed=21)
    protos = compute_prototypes(manifest)
    out = str(tmp_path / "protoarchive")
    save_prototypes(protos, out)
    for g in range(8):
        assert os.path.isfile(os.path.join(out, f"{group_token(g)}.png"))
    reloaded = load_prototypes(out)
    for g in range(8):
        assert np.array_equal(reloaded[g], protos[g])


def test_archive_png_fallback(tmp_path):
    manifest = _make_dataset(tmp_path, per_group=3, seed=22)
    protos = compute_prototypes(manifest)
    out = str(tmp_path / "protoarchive")
    save_prototypes(protos, out)
    os.remove(os.path.join(out, "prototypes.npy"))
    reloaded = load_prototypes(out)
    for g in range(8):
        # 8-bit quantization bounds the fallback error
        assert np.max(np.abs(reloaded[g] - protos[g])) <= 0.5 / 255.0


def test_load_missing_archive(tmp_path):
    with pytest.raises(PrototypeError):
        load_prototypes(str(tmp_path / "nowhere"))
