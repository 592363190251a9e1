"""Attribute-group face prototypes: pixelwise group means plus lookups.

A prototype set holds one mean face per (gender, age, race) group. The
perturbation network fuses an input with the prototype of its own group and
writes its output against the prototype of the gender-flipped group.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .core import (AttributeLabels, DatasetManifest, group_of, group_token,
                   load_image, save_image)


class PrototypeError(ValueError):
    """Raised when a prototype set cannot be computed or loaded."""


@dataclass
class PrototypeSet:
    """Map of group index -> mean face image, tagged with its source."""

    images: dict = field(default_factory=dict)
    source: str = ""

    def __post_init__(self):
        if set(self.images) != set(range(8)):
            missing = sorted(set(range(8)) - set(self.images))
            raise PrototypeError(
                "incomplete prototype set, missing groups "
                + ", ".join(group_token(g) for g in missing))

    def __getitem__(self, group: int) -> np.ndarray:
        return self.images[group]


def compute_prototypes(manifest: DatasetManifest,
                       partition: str = "train") -> PrototypeSet:
    """Pixelwise mean image of every group in the given partition.

    Raises PrototypeError naming the first group with no images.
    """
    sums = {g: None for g in range(8)}
    counts = {g: 0 for g in range(8)}
    for rec in manifest.partition(partition):
        g = group_of(rec.labels)
        img = load_image(manifest.resolve(rec))
        if sums[g] is None:
            sums[g] = np.zeros_like(img)
        sums[g] += img
        counts[g] += 1
    for g in range(8):
        if counts[g] == 0:
            raise PrototypeError(
                f"no {partition} images for group {group_token(g)}")
    images = {g: sums[g] / counts[g] for g in range(8)}
    return PrototypeSet(images, source=partition)


def same_gender_prototype(labels: AttributeLabels,
                          protos: PrototypeSet) -> np.ndarray:
    return protos[group_of(labels)]


def opposite_gender_prototype(labels: AttributeLabels,
                              protos: PrototypeSet) -> np.ndarray:
    """Prototype of the group with only the gender label flipped."""
    return protos[group_of(labels.flip_gender())]


def save_prototypes(protos: PrototypeSet, out_dir: str) -> None:
    """Write the 8 prototypes as PNGs named by group token (e.g. Y-M-W.png).

    A float64 sidecar (``prototypes.npy``) is written next to the PNGs so
    reloading is bit-exact; the PNGs are the viewable 8-bit rendering.
    """
    os.makedirs(out_dir, exist_ok=True)
    for g in range(8):
        save_image(os.path.join(out_dir, f"{group_token(g)}.png"), protos[g])
    stack = np.stack([protos[g] for g in range(8)])
    np.save(os.path.join(out_dir, "prototypes.npy"), stack)


def load_prototypes(archive_dir: str) -> PrototypeSet:
    """Load an archive, preferring the exact float sidecar when present."""
    sidecar = os.path.join(archive_dir, "prototypes.npy")
    if os.path.isfile(sidecar):
        stack = np.load(sidecar)
        if stack.shape[0] != 8:
            raise PrototypeError(f"bad sidecar shape {stack.shape} in {sidecar}")
        return PrototypeSet({g: stack[g] for g in range(8)}, source=archive_dir)
    images = {}
    for g in range(8):
        path = os.path.join(archive_dir, f"{group_token(g)}.png")
        if not os.path.isfile(path):
            raise PrototypeError(f"prototype archive missing {path}")
        images[g] = load_image(path)
    return PrototypeSet(images, source=archive_dir)
