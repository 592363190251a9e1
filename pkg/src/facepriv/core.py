"""Domain types: face images, attribute labels, dataset manifests, race voting.

Images are 2-D float64 arrays with values in [0, 1]. Attribute labels are
binary triples (gender, age, race) indexing one of eight disjoint groups.
A dataset manifest is a flat CSV table mapping image files to subject ids,
labels and a subject-disjoint train/test partition.
"""

from __future__ import annotations

import csv
import os
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

GENDERS = ("female", "male")
AGES = ("young", "old")
RACES = ("black", "white")
PARTITIONS = ("train", "test")

#: Letter codes used in prototype archive file names (age, gender, race).
AGE_CODES = {"young": "Y", "old": "O"}
GENDER_CODES = {"female": "F", "male": "M"}
RACE_CODES = {"black": "B", "white": "W"}

MANIFEST_HEADER = ["path", "subject_id", "gender", "age", "race",
                   "partition", "race_override"]


class ManifestError(ValueError):
    """Raised when a manifest file violates the format or its invariants."""


@dataclass(frozen=True)
class AttributeLabels:
    """One binary (gender, age, race) label triple."""

    gender: str
    age: str
    race: str

    def __post_init__(self):
        if self.gender not in GENDERS:
            raise ValueError(f"unknown gender label {self.gender!r}")
        if self.age not in AGES:
            raise ValueError(f"unknown age label {self.age!r}")
        if self.race not in RACES:
            raise ValueError(f"unknown race label {self.race!r}")

    def flip_gender(self) -> "AttributeLabels":
        other = GENDERS[1 - GENDERS.index(self.gender)]
        return AttributeLabels(other, self.age, self.race)


def group_of(labels: AttributeLabels) -> int:
    """Map a label triple to its group index in [0, 7] (bijective)."""
    return (4 * GENDERS.index(labels.gender)
            + 2 * AGES.index(labels.age)
            + RACES.index(labels.race))


def labels_of(group: int) -> AttributeLabels:
    """Inverse of :func:`group_of`."""
    if not 0 <= group <= 7:
        raise ValueError(f"group index {group} out of range [0, 7]")
    return AttributeLabels(GENDERS[group // 4], AGES[(group // 2) % 2],
                           RACES[group % 2])


def group_token(group: int) -> str:
    """Short age-gender-race code for a group, e.g. 'Y-M-W'."""
    lab = labels_of(group)
    return f"{AGE_CODES[lab.age]}-{GENDER_CODES[lab.gender]}-{RACE_CODES[lab.race]}"


def load_image(path: str) -> np.ndarray:
    """Load an 8-bit grayscale image as a float64 array scaled to [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.float64)
    return arr / 255.0


def save_image(path: str, pixels: np.ndarray) -> None:
    """Save a [0, 1] float array as an 8-bit grayscale PNG/PGM."""
    arr = np.clip(pixels, 0.0, 1.0)
    quant = np.rint(arr * 255.0).astype(np.uint8)
    Image.fromarray(quant, mode="L").save(path)


@dataclass(frozen=True)
class ManifestRecord:
    """One row of a dataset manifest.

    ``race`` already reflects ``race_override`` when the override column is
    nonempty; the raw override token is kept so save/load round-trips.
    """

    path: str
    subject_id: str
    labels: AttributeLabels
    partition: str
    race_override: str = ""

    def __post_init__(self):
        if self.partition not in PARTITIONS:
            raise ValueError(f"unknown partition {self.partition!r}")


@dataclass
class DatasetManifest:
    """A list of manifest records plus the directory image paths resolve in."""

    records: list = field(default_factory=list)
    root: str = "."

    def resolve(self, record: ManifestRecord) -> str:
        return os.path.join(self.root, record.path)

    def partition(self, name: str) -> list:
        return [r for r in self.records if r.partition == name]

    def subjects(self, partition: str | None = None) -> set:
        recs = self.records if partition is None else self.partition(partition)
        return {r.subject_id for r in recs}

    def check(self, check_images: bool = True) -> None:
        """Validate the manifest invariants, raising ManifestError."""
        overlap = self.subjects("train") & self.subjects("test")
        if overlap:
            raise ManifestError(
                "partition overlap: subjects in both train and test: "
                + ", ".join(sorted(overlap)))
        if check_images:
            for rec in self.records:
                full = self.resolve(rec)
                if not os.path.isfile(full):
                    raise ManifestError(f"image reference not found: {full}")


def load_manifest(path: str, check_images: bool = True) -> DatasetManifest:
    """Load and validate a manifest CSV.

    Raises ManifestError on parse failures, unknown label tokens, subjects
    appearing in both partitions, or (if ``check_images``) unresolvable
    image references.
    """
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestError(f"{path}: empty manifest") from None
        if [h.strip() for h in header] != MANIFEST_HEADER:
            raise ManifestError(
                f"{path}: bad header {header!r}, expected {MANIFEST_HEADER}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(MANIFEST_HEADER):
                raise ManifestError(f"{path}:{lineno}: expected "
                                    f"{len(MANIFEST_HEADER)} fields, got {len(row)}")
            img, subj, gender, age, race, part, override = [c.strip() for c in row]
            if override and override not in RACES:
                raise ManifestError(
                    f"{path}:{lineno}: unknown race_override token {override!r}")
            try:
                labels = AttributeLabels(gender, age, override or race)
            except ValueError as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from None
            if part not in PARTITIONS:
                raise ManifestError(
                    f"{path}:{lineno}: unknown partition token {part!r}")
            records.append(ManifestRecord(img, subj, labels, part, override))
    manifest = DatasetManifest(records, root=os.path.dirname(os.path.abspath(path)))
    manifest.check(check_images=check_images)
    return manifest


def save_manifest(manifest: DatasetManifest, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_HEADER)
        for r in manifest.records:
            writer.writerow([r.path, r.subject_id, r.labels.gender,
                             r.labels.age, r.labels.race, r.partition,
                             r.race_override])


@dataclass(frozen=True)
class RaceVote:
    """Majority-voted race label for one subject."""

    subject_id: str
    predictions: tuple
    label: str


def aggregate_race(per_image_predictions) -> list:
    """Aggregate per-image race predictions to one label per subject.

    Each subject's label is the modal label over its images; the label is
    implicitly assigned to all of that subject's images. Ties are broken by
    lexicographic label order (black < white).
    """
    by_subject: dict = {}
    for subject_id, race in per_image_predictions:
        if race not in RACES:
            raise ValueError(f"unknown race label {race!r}")
        by_subject.setdefault(subject_id, []).append(race)
    votes = []
    for subject_id in sorted(by_subject):
        preds = by_subject[subject_id]
        counts = Counter(preds)
        top = max(counts.values())
        label = min(lab for lab, n in counts.items() if n == top)
        votes.append(RaceVote(subject_id, tuple(preds), label))
    return votes
