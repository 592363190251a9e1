"""Evaluation harness: ROC/AUC/EER, eval-time augmentation, score dumps.

"Unseen" evaluators are desk-scale stand-ins: small CNNs and a pixel
logistic scorer trained on a held-out synthetic distribution, plus a raw
pixel-cosine matcher. Every reported number is recomputable from the
persisted CSV score dumps.
"""

from __future__ import annotations

import csv
import hashlib
import os
from dataclasses import dataclass

import numpy as np

from .models import FaceMatcher, GenderClassifier
from .prototypes import (PrototypeSet, opposite_gender_prototype,
                         same_gender_prototype)
from .selection import select_best, select_random
from .training import DatasetArrays

N_AUG_VARIANTS = 7


# -- ROC ----------------------------------------------------------------------

@dataclass
class RocCurve:
    """Threshold sweep with (0,0) and (1,1) endpoints, AUC and EER."""

    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float
    eer: float

    def to_dict(self) -> dict:
        return {"auc": self.auc, "eer": self.eer}


def roc(scored) -> RocCurve:
    """ROC from (label, score) pairs; higher score = predict positive.

    Equal scores are processed atomically, making the trapezoid AUC equal
    to P(score_pos > score_neg) + 0.5 P(tie). EER is interpolated where
    FPR = 1 - TPR.
    """
    pairs = list(scored)
    labels = np.array([int(l) for l, _ in pairs])
    scores = np.array([float(s) for _, s in pairs])
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs both classes present")
    order = np.argsort(-scores, kind="stable")
    labels, scores = labels[order], scores[order]
    # group tied scores atomically
    boundaries = np.flatnonzero(np.diff(scores)) + 1
    ends = np.append(boundaries, len(scores))
    cum_pos = np.cumsum(labels == 1)
    cum_neg = np.cumsum(labels == 0)
    tpr = np.concatenate([[0.0], cum_pos[ends - 1] / n_pos])
    fpr = np.concatenate([[0.0], cum_neg[ends - 1] / n_neg])
    thresholds = np.concatenate([[np.inf], scores[ends - 1]])
    auc = float(np.trapezoid(tpr, fpr))
    return RocCurve(fpr=fpr, tpr=tpr, thresholds=thresholds, auc=auc,
                    eer=_eer(fpr, tpr))


def _eer(fpr: np.ndarray, tpr: np.ndarray) -> float:
    """Operating point where FPR equals 1 - TPR, linearly interpolated."""
    diff = fpr - (1.0 - tpr)
    for k in range(len(fpr)):
        if diff[k] == 0.0:
            return float(fpr[k])
        if k + 1 < len(fpr) and diff[k] < 0.0 <= diff[k + 1]:
            df = fpr[k + 1] - fpr[k]
            dt = tpr[k + 1] - tpr[k]
            denom = df + dt
            if denom == 0.0:
                continue
            alpha = (1.0 - tpr[k] - fpr[k]) / denom
            return float(fpr[k] + alpha * df)
    return float(fpr[-1])


def auc_pairwise(scored) -> float:
    """O(n^2) pairwise AUC statistic; independent oracle for roc()."""
    pos = [s for l, s in scored if int(l) == 1]
    neg = [s for l, s in scored if int(l) == 0]
    if not pos or not neg:
        raise ValueError("needs both classes")
    total = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                total += 1.0
            elif p == q:
                total += 0.5
    return total / (len(pos) * len(neg))


# -- eval-time augmentation ----------------------------------------------------

@dataclass
class AugmentResult:
    mean: float
    scores: list
    params: list                       # (gain, bias) per variant


def augment_eval(score_fn, image: np.ndarray, seed: int,
                 gain_range=(0.7, 1.3), bias_range=(-0.15, 0.15)) -> AugmentResult:
    """Score 7 random illumination/contrast variants and average.

    Each variant applies clamp(g*(x-0.5)+0.5+b, 0, 1) with per-variant
    uniform gain g and bias b; deterministic for a fixed seed.
    """
    rng = np.random.default_rng(seed)
    scores, params = [], []
    for _ in range(N_AUG_VARIANTS):
        g = rng.uniform(*gain_range)
        b = rng.uniform(*bias_range)
        variant = np.clip(g * (image - 0.5) + 0.5 + b, 0.0, 1.0)
        scores.append(float(score_fn(variant)))
        params.append((float(g), float(b)))
    return AugmentResult(mean=float(np.mean(scores)), scores=scores,
                         params=params)


def _stable_seed(*parts) -> int:
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big")


# -- predictor / matcher stand-ins ----------------------------------------------

class CnnGenderPredictor:
    """Wraps a trained CNN scorer as an evaluation predictor."""

    def __init__(self, name: str, classifier: GenderClassifier):
        self.name = name
        self.classifier = classifier

    def score_batch(self, images: np.ndarray, ids=None) -> np.ndarray:
        return self.classifier.score(images)


class PixelLogisticPredictor:
    """Logistic regression on downsampled pixels; deliberately simple."""

    def __init__(self, name: str, size: int, pool_to: int = 16):
        self.name = name
        self.size = size
        self.factor = max(size // pool_to, 1)
        self.w = None
        self.b = 0.0
        self.mu = None
        self.sd = None

    def _features(self, images: np.ndarray) -> np.ndarray:
        n, _, h, w = images.shape
        f = self.factor
        x = images[:, 0, :h - h % f, :w - w % f]
        x = x.reshape(n, h // f, f, w // f, f).mean(axis=(2, 4))
        return x.reshape(n, -1)

    def fit(self, data: DatasetArrays, iters: int = 300, lr: float = 0.5):
        x = self._features(data.images)
        self.mu = x.mean(axis=0)
        self.sd = x.std(axis=0) + 1e-8
        x = (x - self.mu) / self.sd
        y = data.gender_targets
        self.w = np.zeros(x.shape[1])
        self.b = 0.0
        n = len(y)
        for _ in range(iters):
            p = 1.0 / (1.0 + np.exp(-(x @ self.w + self.b)))
            g = p - y
            self.w -= lr * (x.T @ g) / n
            self.b -= lr * float(g.mean())
        return self

    def score_batch(self, images: np.ndarray, ids=None) -> np.ndarray:
        x = (self._features(images) - self.mu) / self.sd
        return 1.0 / (1.0 + np.exp(-(x @ self.w + self.b)))


class AugmentedPredictor:
    """Predictor scored as the mean over 7 photometric variants per image.

    The per-image augmentation seed derives from (seed, image id), so dumps
    are reproducible image by image.
    """

    def __init__(self, name: str, base, seed: int,
                 gain_range=(0.7, 1.3), bias_range=(-0.15, 0.15)):
        self.name = name
        self.base = base
        self.seed = seed
        self.gain_range = tuple(gain_range)
        self.bias_range = tuple(bias_range)
        self.variant_log = []          # (image_id, variant_idx, score)

    def score_batch(self, images: np.ndarray, ids=None) -> np.ndarray:
        ids = ids if ids is not None else [str(i) for i in range(len(images))]
        out = np.empty(images.shape[0])
        for k in range(images.shape[0]):
            res = augment_eval(
                lambda img: self.base.score_batch(img[None, None])[0],
                images[k, 0], _stable_seed(self.seed, ids[k]),
                self.gain_range, self.bias_range)
            out[k] = res.mean
            for vi, s in enumerate(res.scores):
                self.variant_log.append((ids[k], vi, s))
        return out


class CnnMatcherIface:
    """Cosine-similarity matcher backed by a CNN embedding network."""

    def __init__(self, name: str, matcher: FaceMatcher):
        self.name = name
        self.matcher = matcher

    def embed_batch(self, images: np.ndarray) -> np.ndarray:
        return self.matcher.embed(images)


class PixelCosineMatcher:
    """Embedding = unit-normalized downsampled pixels (no training)."""

    def __init__(self, name: str, size: int, pool_to: int = 16):
        self.name = name
        self.factor = max(size // pool_to, 1)

    def embed_batch(self, images: np.ndarray) -> np.ndarray:
        n, _, h, w = images.shape
        f = self.factor
        x = images[:, 0, :h - h % f, :w - w % f]
        x = x.reshape(n, h // f, f, w // f, f).mean(axis=(2, 4)).reshape(n, -1)
        x = x - x.mean(axis=1, keepdims=True)
        norm = np.linalg.norm(x, axis=1, keepdims=True) + 1e-12
        return x / norm


def build_predictors(names, heldout: DatasetArrays, size: int, seed: int,
                     gain_range=(0.7, 1.3), bias_range=(-0.15, 0.15),
                     pretrain_epochs: int = 10, batch_size: int = 32) -> dict:
    """Instantiate and train the named evaluation predictors."""
    from .training import pretrain_classifier
    registry = {}
    cnn = None
    for name in names:
        if name == "pixel_logit":
            registry[name] = PixelLogisticPredictor(name, size).fit(heldout)
        elif name in ("cnn_heldout", "cnn_heldout_aug"):
            if cnn is None:
                clf = GenderClassifier(size=size, channels=(8, 8, 16),
                                       seed=seed + 17)
                pretrain_classifier(clf, heldout, epochs=pretrain_epochs,
                                    batch_size=batch_size, lr=3e-3,
                                    seed=seed + 18)
                cnn = CnnGenderPredictor("cnn_heldout", clf)
            if name == "cnn_heldout":
                registry[name] = cnn
            else:
                registry[name] = AugmentedPredictor(name, cnn, seed + 19,
                                                    gain_range, bias_range)
        else:
            raise ValueError(f"unknown predictor {name!r}")
    return registry


def build_matchers(names, heldout: DatasetArrays, size: int, seed: int,
                   embed_dim: int = 128, pretrain_epochs: int = 10,
                   batch_size: int = 32) -> dict:
    from .training import pretrain_matcher
    registry = {}
    for name in names:
        if name == "pixel_cosine":
            registry[name] = PixelCosineMatcher(name, size)
        elif name == "cnn_heldout":
            m = FaceMatcher(size=size, embed_dim=embed_dim,
                            channels=(8, 8, 16), seed=seed + 23)
            pretrain_matcher(m, heldout, epochs=pretrain_epochs,
                             batch_size=batch_size, lr=3e-3, seed=seed + 24)
            registry[name] = CnnMatcherIface(name, m)
        else:
            raise ValueError(f"unknown matcher {name!r}")
    return registry


# -- dataset perturbation --------------------------------------------------------

def perturb_dataset(members: list, protos: PrototypeSet, data: DatasetArrays,
                    identity: bool = False) -> dict:
    """Per-member perturbed copies of a dataset.

    With ``identity`` the "perturbation" returns the inputs unchanged,
    giving the no-op baseline every metric must match exactly.
    """
    out = {}
    for m, entry in enumerate(members):
        auto = entry[0] if isinstance(entry, tuple) else entry
        if identity:
            out[m] = data.images.copy()
            continue
        proto_same = np.stack(
            [same_gender_prototype(l, protos) for l in data.labels])[:, None]
        proto_opp = np.stack(
            [opposite_gender_prototype(l, protos) for l in data.labels])[:, None]
        out[m] = auto.forward(data.images, proto_same, proto_opp)
    return out


# -- gender evaluation ------------------------------------------------------------

class DominanceError(AssertionError):
    """Best-selection AUC exceeded a member AUC; violates the selection rule."""


def eval_gender(predictors: dict, data: DatasetArrays, perturbed: dict,
                out_dir: str, selection_seed: int) -> dict:
    """Scores and ROC metrics per predictor for originals, members, policies.

    Emits ``gender_scores.csv`` (and ``augmented_scores.csv`` for augmented
    predictors); asserts best-selection dominance on every run. Predictor
    failures are isolated: the report carries an ``error`` entry instead.
    """
    os.makedirs(out_dir, exist_ok=True)
    t = len(perturbed)
    genders = [l.gender for l in data.labels]
    labels01 = [1 if g == "male" else 0 for g in genders]
    rows = []
    report = {}
    curves = {}
    for name, pred in predictors.items():
        try:
            section, pred_curves, pred_rows = _eval_one_predictor(
                pred, data, perturbed, t, labels01, genders, selection_seed)
        except DominanceError:
            raise
        except Exception as exc:           # isolate per predictor
            report[name] = {"error": str(exc)}
            curves[name] = {}
            continue
        rows.extend(pred_rows)
        report[name] = section
        curves[name] = pred_curves
    _write_scores(os.path.join(out_dir, "gender_scores.csv"),
                  ["predictor", "san_member", "image_id", "label", "score"],
                  rows)
    _emit_curves(os.path.join(out_dir, "curves", "gender"), curves)
    aug_rows = []
    for name, pred in predictors.items():
        for image_id, vi, s in getattr(pred, "variant_log", []):
            aug_rows.append((name, "member_scores", image_id, vi, repr(s)))
    if aug_rows:
        _write_scores(os.path.join(out_dir, "augmented_scores.csv"),
                      ["predictor", "context", "image_id", "variant", "score"],
                      aug_rows)
    return report, curves


def _eval_one_predictor(pred, data, perturbed, t, labels01, genders,
                        selection_seed):
    name = pred.name
    rows = []
    orig_scores = pred.score_batch(data.images, data.ids)
    member_scores = {m: pred.score_batch(perturbed[m], data.ids)
                     for m in range(t)}
    best_scores, random_scores = [], []
    for k, image_id in enumerate(data.ids):
        per_member = [member_scores[m][k] for m in range(t)]
        _, p_best = select_best(per_member, genders[k])
        best_scores.append(p_best)
        random_scores.append(
            per_member[select_random(t, selection_seed, image_id)])
    groups = {"original": orig_scores, "best": best_scores,
              "random": random_scores}
    for m in range(t):
        groups[f"member_{m}"] = member_scores[m]
    section = {}
    pred_curves = {}
    for tag, scores in groups.items():
        for k, image_id in enumerate(data.ids):
            rows.append((name, tag, image_id, labels01[k],
                         repr(float(scores[k]))))
        curve = roc(zip(labels01, scores))
        section[tag] = curve.to_dict()
        pred_curves[tag] = curve
    best_auc = section["best"]["auc"]
    for m in range(t):
        if best_auc > section[f"member_{m}"]["auc"]:
            raise DominanceError(
                f"{name}: best-selection AUC {best_auc} exceeds member {m} "
                f"AUC {section[f'member_{m}']['auc']}")
    return section, pred_curves, rows


# -- matching evaluation ------------------------------------------------------------

def genuine_impostor_pairs(subjects: list, impostor_cap: int, seed: int):
    """Ordered index pairs (a, b), a != b: exhaustive genuine, capped impostor."""
    n = len(subjects)
    genuine, impostor = [], []
    for a in range(n):
        for b in range(n):
            if a == b:
                continue
            (genuine if subjects[a] == subjects[b] else impostor).append((a, b))
    if not genuine:
        raise ValueError("no genuine pairs: every subject has a single image")
    if len(impostor) > impostor_cap:
        rng = np.random.default_rng(seed)
        picks = rng.choice(len(impostor), size=impostor_cap, replace=False)
        impostor = [impostor[i] for i in sorted(picks)]
    return genuine, impostor


def eval_matching(matchers: dict, data: DatasetArrays, perturbed: dict,
                  out_dir: str, impostor_cap: int = 10000,
                  seed: int = 0) -> dict:
    """Genuine/impostor ROC per matcher: original baseline plus each member.

    Genuine pairs compare an original image of a subject to a (perturbed)
    different image of the same subject; impostor pairs cross subjects.
    """
    os.makedirs(out_dir, exist_ok=True)
    genuine, impostor = genuine_impostor_pairs(data.subjects, impostor_cap,
                                               seed)
    pairs = [(a, b, 1) for a, b in genuine] + [(a, b, 0) for a, b in impostor]
    rows = []
    report = {}
    curves = {}
    for name, matcher in matchers.items():
        try:
            emb_orig = matcher.embed_batch(data.images)
            variants = {"original": emb_orig}
            for m in sorted(perturbed):
                variants[f"member_{m}"] = matcher.embed_batch(perturbed[m])
            section = {}
            matcher_curves = {}
            for tag, emb_b in variants.items():
                scored = []
                for a, b, lab in pairs:
                    s = float(np.dot(emb_orig[a], emb_b[b]))
                    pair_id = f"{data.ids[a]}|{data.ids[b]}"
                    rows.append((name, tag, pair_id, lab, repr(s)))
                    scored.append((lab, s))
                curve = roc(scored)
                section[tag] = curve.to_dict()
                matcher_curves[tag] = curve
            report[name] = section
            curves[name] = matcher_curves
        except Exception as exc:
            report[name] = {"error": str(exc)}
            curves[name] = {}
    _write_scores(os.path.join(out_dir, "matching_scores.csv"),
                  ["matcher", "san_member", "pair_id", "label", "score"],
                  rows)
    _emit_curves(os.path.join(out_dir, "curves", "matching"), curves)
    return report, curves


def _emit_curves(curve_dir: str, curves: dict) -> None:
    """Per-curve CSV of (threshold, fpr, tpr) under ``curve_dir``."""
    os.makedirs(curve_dir, exist_ok=True)
    for name, tags in curves.items():
        for tag, curve in tags.items():
            path = os.path.join(curve_dir, f"{name}__{tag}.csv")
            with open(path, "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(["threshold", "fpr", "tpr"])
                for thr, f, t in zip(curve.thresholds, curve.fpr, curve.tpr):
                    writer.writerow([repr(float(thr)), repr(float(f)),
                                     repr(float(t))])


def _write_scores(path: str, header: list, rows: list) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
