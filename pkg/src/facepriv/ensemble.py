"""Ensembles of perturbation networks: schemes E1/E2/E3, diversity, reports.

E1 varies only the initial random weights across the t members. E2
additionally trains each member on a manifest where all images of a
member-specific random subject subset (about 10% of training images,
disjoint across members) are duplicated four times. E3 instead duplicates a
random 10% subset of black-labeled training images forty times per member,
rebalancing the race distribution.
"""

from __future__ import annotations

import hashlib
import json
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig
from .core import DatasetManifest
from .models import Autoencoder, FaceMatcher, GenderClassifier
from .prototypes import (PrototypeSet, compute_prototypes, load_prototypes,
                         save_prototypes)
from .training import (DatasetArrays, TrainState, load_arrays,
                       pretrain_classifier, pretrain_matcher, train_san)

SCHEMES = ("E1", "E2", "E3")


@dataclass
class EnsembleSpec:
    """Scheme, member count, seeds and resampling parameters."""

    scheme: str = "E1"
    t: int = 5
    base_seed: int = 0
    subject_fraction: float = 0.10
    subject_duplication: int = 4
    race_fraction: float = 0.10
    race_duplication: int = 40
    seeds: list = field(default_factory=list)

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.t < 1:
            raise ValueError("member count must be >= 1")
        if not (0 < self.subject_fraction <= 1):
            raise ValueError("subject fraction must be in (0, 1]")
        if not (0 < self.race_fraction <= 1):
            raise ValueError("race fraction must be in (0, 1]")
        if self.subject_duplication < 0 or self.race_duplication < 0:
            raise ValueError("duplication factors must be >= 0")
        if not self.seeds:
            self.seeds = [self.base_seed + 1000 * (i + 1)
                          for i in range(self.t)]
        if len(self.seeds) != self.t or len(set(self.seeds)) != self.t:
            raise ValueError("need t pairwise-distinct member seeds")


def _disjoint_subject_subsets(manifest: DatasetManifest, spec: EnsembleSpec,
                              seed: int) -> list:
    """t pairwise-disjoint subject subsets, each covering <= fraction of
    training images (greedy closest-under in a seeded random order)."""
    train = manifest.partition("train")
    images_per_subject: dict = {}
    for rec in train:
        images_per_subject[rec.subject_id] = \
            images_per_subject.get(rec.subject_id, 0) + 1
    target = spec.subject_fraction * len(train)
    rng = np.random.default_rng(seed)
    order = list(rng.permutation(sorted(images_per_subject)))
    subsets = []
    for _ in range(spec.t):
        chosen, total = [], 0
        while order and total + images_per_subject[order[0]] <= target:
            subj = order.pop(0)
            chosen.append(subj)
            total += images_per_subject[subj]
        if not chosen:
            raise ValueError(
                f"dataset too small to allocate {spec.t} disjoint "
                f"{spec.subject_fraction:.0%} subject subsets")
        subsets.append(set(chosen))
    return subsets


def resample_e2(manifest: DatasetManifest, member: int, spec: EnsembleSpec,
                seed: int) -> DatasetManifest:
    """Training manifest for member ``member`` under subject oversampling.

    All members' subject subsets are derived from the same seed so they are
    disjoint by construction; each selected training image appears
    1 + subject_duplication times.
    """
    if not 0 <= member < spec.t:
        raise ValueError(f"member index {member} out of range [0, {spec.t})")
    subset = _disjoint_subject_subsets(manifest, spec, seed)[member]
    records = list(manifest.records)
    for rec in manifest.partition("train"):
        if rec.subject_id in subset:
            records.extend([rec] * spec.subject_duplication)
    return DatasetManifest(records, root=manifest.root)


def resample_e3(manifest: DatasetManifest, spec: EnsembleSpec,
                seed: int) -> DatasetManifest:
    """Duplicate a random fraction of black training images many times."""
    train = manifest.partition("train")
    black = [rec for rec in train if rec.labels.race == "black"]
    if not black:
        raise ValueError("no black-labeled training images to oversample")
    k = int(spec.race_fraction * len(black))
    if k == 0:
        warnings.warn("race fraction selects zero images; manifest unchanged")
        return DatasetManifest(list(manifest.records), root=manifest.root)
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(black), size=k, replace=False)
    records = list(manifest.records)
    for i in sorted(picks):
        records.extend([black[i]] * spec.race_duplication)
    return DatasetManifest(records, root=manifest.root)


def member_manifest(manifest: DatasetManifest, member: int,
                    spec: EnsembleSpec) -> DatasetManifest:
    if spec.scheme == "E1":
        return manifest
    if spec.scheme == "E2":
        return resample_e2(manifest, member, spec, spec.base_seed)
    return resample_e3(manifest, spec, spec.seeds[member])


# -- diversity and error reporting ------------------------------------------

def entropy_diversity(correct: np.ndarray) -> float:
    """Per-sample disagreement of a (t, N) correctness matrix, in [0, 1].

    E = (1/N) sum_k min(l_k, t - l_k) / (t - ceil(t/2)), where l_k counts
    the members correct on sample k; 0 iff all members agree everywhere.
    """
    correct = np.asarray(correct, dtype=bool)
    if correct.ndim != 2:
        raise ValueError("expected a (t, N) matrix")
    t, n = correct.shape
    if t < 2:
        raise ValueError("diversity needs at least 2 members")
    if n < 1:
        raise ValueError("diversity needs at least 1 sample")
    l = correct.sum(axis=0)
    denom = t - (-(-t // 2))
    return float(np.mean(np.minimum(l, t - l)) / denom)


@dataclass
class DiversityReport:
    member_errors: list
    mean_error: float
    diversity: float

    def to_dict(self) -> dict:
        return {"member_errors": self.member_errors,
                "mean_error": self.mean_error,
                "diversity": self.diversity}


def correctness_matrix(classifiers: list, data: DatasetArrays) -> np.ndarray:
    targets = data.gender_targets
    rows = []
    for clf in classifiers:
        scores = clf.score(data.images)
        rows.append((scores >= 0.5) == (targets == 1.0))
    return np.array(rows)


def error_report(classifiers: list, data: DatasetArrays) -> DiversityReport:
    """Per-member error rate at threshold 0.5, mean, and entropy diversity."""
    correct = correctness_matrix(classifiers, data)
    errors = [float(1.0 - row.mean()) for row in correct]
    return DiversityReport(member_errors=errors,
                           mean_error=float(np.mean(errors)),
                           diversity=entropy_diversity(correct))


# -- ensemble training --------------------------------------------------------

@dataclass
class EnsembleModel:
    """t trained members plus the shared matcher and prototype set."""

    spec: EnsembleSpec
    members: list                      # (Autoencoder, GenderClassifier) pairs
    matcher: FaceMatcher
    prototypes: PrototypeSet
    root: str = ""


def file_sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _member_dir(root: str, i: int) -> str:
    return os.path.join(root, f"san_{i}")


def train_ensemble(manifest: DatasetManifest, spec: EnsembleSpec,
                   config: RunConfig, out_root: str,
                   manifest_path: str | None = None,
                   log=None) -> EnsembleModel:
    """Train the t members independently and checkpoint everything.

    Members already checkpointed under ``out_root`` are skipped, which makes
    interrupted runs resumable: every member is trained from its own seeds,
    so a resumed run produces checkpoints identical to an uninterrupted one.
    """
    def say(msg):
        if log is not None:
            log(msg)

    os.makedirs(out_root, exist_ok=True)
    size = config.image_size
    weights = config.loss_weights()

    protos_dir = os.path.join(out_root, "prototypes")
    if os.path.isdir(protos_dir):
        protos = load_prototypes(protos_dir)
    else:
        protos = compute_prototypes(manifest, "train")
        save_prototypes(protos, protos_dir)

    base_train = load_arrays(manifest, "train")

    matcher_dir = os.path.join(out_root, "matcher")
    matcher_seed = spec.base_seed + 99
    if os.path.isdir(matcher_dir):
        matcher = load_checkpoint(matcher_dir).matcher
        say("matcher: loaded existing checkpoint")
    else:
        matcher = FaceMatcher(size=size, embed_dim=config.embed_dim,
                              seed=matcher_seed)
        say("matcher: pretraining on subject identity")
        pretrain_matcher(matcher, base_train,
                         epochs=config.matcher_pretrain_epochs,
                         batch_size=config.batch_size,
                         lr=config.matcher_pretrain_lr, seed=matcher_seed)
        # placeholder autoencoder satisfies the checkpoint layout
        save_checkpoint(matcher_dir, Autoencoder(size=size, feature_maps=1,
                                                 enc_channels=(1, 1),
                                                 dec_channels=(1, 1)),
                        matcher=matcher, seed=matcher_seed,
                        scheme=spec.scheme)

    members = []
    for i in range(spec.t):
        mdir = _member_dir(out_root, i)
        if os.path.isdir(mdir):
            ckpt = load_checkpoint(mdir)
            members.append((ckpt.autoencoder, ckpt.classifier))
            say(f"member {i}: loaded existing checkpoint")
            continue
        try:
            m_manifest = member_manifest(manifest, i, spec)
            m_train = (base_train if spec.scheme == "E1"
                       else load_arrays(m_manifest, "train"))
            seed = spec.seeds[i]
            clf = GenderClassifier(size=size,
                                   channels=tuple(config.classifier_channels),
                                   seed=seed + 1)
            say(f"member {i}: pretraining gender classifier "
                f"({len(m_train)} images)")
            pretrain_classifier(clf, m_train,
                                epochs=config.classifier_pretrain_epochs,
                                batch_size=config.batch_size,
                                lr=config.classifier_pretrain_lr,
                                seed=seed + 2)
            auto = Autoencoder(size=size, feature_maps=config.feature_maps,
                               enc_channels=tuple(config.enc_channels),
                               dec_channels=tuple(config.dec_channels),
                               seed=seed + 3)
            state = TrainState(auto, clf, matcher, weights=weights,
                               lr=config.learning_rate,
                               optimizer=config.optimizer,
                               joint_classifier_update=config.joint_classifier_update,
                               classifier_lr=config.joint_classifier_lr)
            say(f"member {i}: adversarial training "
                f"({config.epochs} epochs)")
            train_san(state, m_train, protos, epochs=config.epochs,
                      batch_size=config.batch_size, seed=seed + 4)
            save_checkpoint(mdir, auto, classifier=clf, weights=weights,
                            seed=seed, scheme=spec.scheme,
                            extra={"member": i,
                                   "train_images": len(m_train)})
            members.append((auto, clf))
        except Exception as exc:
            raise RuntimeError(f"training member {i} failed: {exc}") from exc

    info = {
        "scheme": spec.scheme,
        "t": spec.t,
        "seeds": list(spec.seeds),
        "base_seed": spec.base_seed,
        "subject_fraction": spec.subject_fraction,
        "subject_duplication": spec.subject_duplication,
        "race_fraction": spec.race_fraction,
        "race_duplication": spec.race_duplication,
        "manifest_sha256": (file_sha256(manifest_path)
                            if manifest_path else None),
    }
    with open(os.path.join(out_root, "ensemble.json"), "w",
              encoding="utf-8") as fh:
        json.dump(info, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return EnsembleModel(spec, members, matcher, protos, root=out_root)


def load_ensemble(root: str) -> EnsembleModel:
    info_path = os.path.join(root, "ensemble.json")
    if not os.path.isfile(info_path):
        raise FileNotFoundError(f"not an ensemble directory: {root}")
    with open(info_path, encoding="utf-8") as fh:
        info = json.load(fh)
    spec = EnsembleSpec(scheme=info["scheme"], t=info["t"],
                        base_seed=info["base_seed"],
                        subject_fraction=info["subject_fraction"],
                        subject_duplication=info["subject_duplication"],
                        race_fraction=info["race_fraction"],
                        race_duplication=info["race_duplication"],
                        seeds=list(info["seeds"]))
    members = []
    for i in range(spec.t):
        ckpt = load_checkpoint(_member_dir(root, i))
        members.append((ckpt.autoencoder, ckpt.classifier))
    matcher = load_checkpoint(os.path.join(root, "matcher")).matcher
    protos = load_prototypes(os.path.join(root, "prototypes"))
    return EnsembleModel(spec, members, matcher, protos, root=root)
