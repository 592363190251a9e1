"""Seeded generator of face-like synthetic images with controllable factors.

Every image is an additive composition on a fixed oval "face" template:
three smooth, spatially disjoint attribute blobs (gender, age, race) whose
sign follows the label, a per-subject smooth identity pattern masked away
from the attribute regions, and optional pixel noise. Labels in the emitted
manifest are therefore ground truth by construction, and a linear probe on
an attribute pattern separates the two classes perfectly at zero noise.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, asdict

import numpy as np
from scipy.ndimage import gaussian_filter

from .core import (AttributeLabels, DatasetManifest, ManifestRecord,
                   labels_of, save_image, save_manifest)

MIN_SIZE = 16

# Blob centers in unit coordinates (row, col) and their common radius.
_BLOB_CENTERS = {"gender": (0.32, 0.30), "age": (0.32, 0.70),
                 "race": (0.72, 0.30)}
_BLOB_SIGMA = 0.09

# +1 direction of each attribute pattern.
_POSITIVE = {"gender": "male", "age": "old", "race": "white"}


@dataclass
class SyntheticSpec:
    """Parameters of one synthetic dataset."""

    size: int = 64
    subjects_per_group: int = 4
    images_per_subject: int = 8
    gender_strength: float = 0.12
    age_strength: float = 0.12
    race_strength: float = 0.12
    identity_strength: float = 0.10
    noise: float = 0.02
    test_fraction: float = 0.25
    seed: int = 0

    def validate(self) -> None:
        if self.size < MIN_SIZE:
            raise ValueError(f"image size {self.size} below minimum {MIN_SIZE}")
        if self.subjects_per_group < 1 or self.images_per_subject < 1:
            raise ValueError("counts must be >= 1")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")


def _grid(size: int):
    r = (np.arange(size) + 0.5) / size
    return np.meshgrid(r, r, indexing="ij")


def _blob(size: int, center, sigma=_BLOB_SIGMA) -> np.ndarray:
    rr, cc = _grid(size)
    d2 = (rr - center[0]) ** 2 + (cc - center[1]) ** 2
    return np.exp(-d2 / (2.0 * sigma ** 2))


def base_face(size: int) -> np.ndarray:
    """Oval face template on a mid-gray background."""
    rr, cc = _grid(size)
    d2 = ((rr - 0.5) / 0.38) ** 2 + ((cc - 0.5) / 0.30) ** 2
    return 0.42 + 0.22 * np.exp(-d2 * 1.5)

def attribute_pattern(name: str, size: int) -> np.ndarray:
    """Unit-amplitude spatial pattern added (signed) for one attribute."""
    return _blob(size, _BLOB_CENTERS[name])


def attribute_sign(labels: AttributeLabels, name: str) -> float:
    value = getattr(labels, name if name != "gender" else "gender")
    return 1.0 if value == _POSITIVE[name] else -1.0


def identity_mask(size: int) -> np.ndarray:
    """Mask keeping identity patterns away from the attribute blobs."""
    occupied = sum(attribute_pattern(n, size) for n in _BLOB_CENTERS)
    return (occupied < 0.05).astype(np.float64)


def _identity_pattern(size: int, rng: np.random.Generator) -> np.ndarray:
    field = rng.normal(0.0, 1.0, size=(size, size))
    field = gaussian_filter(field, sigma=size / 16.0, mode="reflect")
    peak = np.abs(field).max()
    if peak > 0:
        field = field / peak
    return field * identity_mask(size)


def render_image(spec: SyntheticSpec, labels: AttributeLabels,
                 identity: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    img = base_face(spec.size).copy()
    strengths = {"gender": spec.gender_strength, "age": spec.age_strength,
                 "race": spec.race_strength}
    for name in ("gender", "age", "race"):
        img += (attribute_sign(labels, name) * strengths[name]
                * attribute_pattern(name, spec.size))
    img += spec.identity_strength * identity
    if spec.noise > 0:
        img += rng.normal(0.0, spec.noise, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def generate(spec: SyntheticSpec, out_dir: str) -> DatasetManifest:
    """Generate image files plus a manifest under ``out_dir``.

    Subjects are split subject-disjointly: within each group the last
    ``ceil(test_fraction * subjects_per_group)`` subjects go to the test
    partition (at least one stays in train when there are >= 2 subjects).
    """
    spec.validate()
    os.makedirs(out_dir, exist_ok=True)
    img_dir = os.path.join(out_dir, "images")
    os.makedirs(img_dir, exist_ok=True)

    records = []
    n_test = int(np.ceil(spec.test_fraction * spec.subjects_per_group))
    if spec.subjects_per_group >= 2:
        n_test = min(n_test, spec.subjects_per_group - 1)
    for group in range(8):
        labels = labels_of(group)
        for si in range(spec.subjects_per_group):
            subject_id = f"g{group}s{si}"
            sub_ss = np.random.SeedSequence(
                entropy=spec.seed, spawn_key=(group, si))
            sub_rng = np.random.Generator(np.random.PCG64(sub_ss))
            identity = _identity_pattern(spec.size, sub_rng)
            partition = ("test" if si >= spec.subjects_per_group - n_test
                         else "train")
            for ii in range(spec.images_per_subject):
                img = render_image(spec, labels, identity, sub_rng)
                rel = os.path.join("images", f"{subject_id}_{ii}.png")
                save_image(os.path.join(out_dir, rel), img)
                records.append(ManifestRecord(rel, subject_id, labels,
                                              partition))
    manifest = DatasetManifest(records, root=out_dir)
    save_manifest(manifest, os.path.join(out_dir, "manifest.csv"))
    with open(os.path.join(out_dir, "spec.json"), "w", encoding="utf-8") as fh:
        json.dump(asdict(spec), fh, indent=2, sort_keys=True)
    return manifest
