"""Training: the three-term objective, SGD steps, aux-net pretraining.

One training step reconstructs each batch image twice through the shared
autoencoder body -- once fused with the same-gender prototype (held to the
input pixelwise and to the true gender label) and once with the
opposite-gender prototype (held to the reversed label) -- while a frozen
matcher penalizes embedding drift of both outputs. Only autoencoder
parameters are updated; the matcher never changes, and the gender scorer
changes only when alternating updates are explicitly enabled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .core import DatasetManifest, group_of, load_image
from .losses import PROB_EPS, LossBreakdown, LossWeights, clamp_prob
from .models import Autoencoder, FaceMatcher, GenderClassifier
from .prototypes import PrototypeSet


@dataclass
class DatasetArrays:
    """A manifest partition materialized as arrays for training/eval."""

    images: np.ndarray                    # (N, 1, H, W) float64 in [0, 1]
    labels: list
    subjects: list
    ids: list

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def gender_targets(self) -> np.ndarray:
        return np.array([1.0 if l.gender == "male" else 0.0
                         for l in self.labels])


def load_arrays(manifest: DatasetManifest, partition: str) -> DatasetArrays:
    recs = manifest.partition(partition)
    if not recs:
        raise ValueError(f"manifest has no {partition!r} records")
    images = np.stack([load_image(manifest.resolve(r)) for r in recs])
    return DatasetArrays(images[:, None, :, :],
                         [r.labels for r in recs],
                         [r.subject_id for r in recs],
                         [r.path for r in recs])


def proto_batches(protos: PrototypeSet, labels: list):
    """Same-gender and opposite-gender prototype stacks for a label batch."""
    same = np.stack([protos[group_of(l)] for l in labels])[:, None]
    opp = np.stack([protos[group_of(l.flip_gender())] for l in labels])[:, None]
    return same, opp


class TrainState:
    """Mutable state of one perturbation-network training run."""

    def __init__(self, autoencoder: Autoencoder, classifier: GenderClassifier,
                 matcher: FaceMatcher, weights: LossWeights = LossWeights(),
                 lr: float = 0.05, optimizer: str = "sgd",
                 joint_classifier_update: bool = False,
                 classifier_lr: float = 0.01):
        if optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {optimizer!r}")
        self.autoencoder = autoencoder
        self.classifier = classifier
        self.matcher = matcher
        self.weights = weights
        self.lr = lr
        self.optimizer = optimizer
        self.joint_classifier_update = joint_classifier_update
        self.classifier_lr = classifier_lr
        self.adam = _AutoAdam(autoencoder) if optimizer == "adam" else None
        self.step = 0


class _AutoAdam:
    def __init__(self, auto: Autoencoder):
        self.state = nn.AdamState(_ParamView(auto))

    def update(self, auto: Autoencoder, lr: float):
        self.state.update(_ParamView(auto), lr)


class _ParamView:
    """Adapter exposing an Autoencoder as a single nn.Layer-like object."""

    def __init__(self, auto: Autoencoder):
        self._auto = auto

    def params(self):
        return self._auto.params()

    def grads(self):
        return self._auto.grads()


def _gender_score_grad(s: np.ndarray, target: np.ndarray, n: int) -> np.ndarray:
    """d/ds of the mean clamped cross-entropy; zero where the clamp binds."""
    clamped = (s < PROB_EPS) | (s > 1.0 - PROB_EPS)
    sc = clamp_prob(s)
    grad = (sc - target) / (sc * (1.0 - sc)) / n
    grad[clamped] = 0.0
    return grad


def compute_loss_and_grads(state: TrainState, images: np.ndarray,
                           labels: list, protos: PrototypeSet,
                           accumulate: bool = True) -> LossBreakdown:
    """Batch loss; when ``accumulate`` the autoencoder grads are filled in.

    The reconstruction term is the batch-mean MSE of the same-prototype
    output, the match term the batch-mean squared embedding distance of the
    two outputs to the input (averaged over the two branches), the gender
    term the batch-mean of the two-branch cross-entropy.
    """
    auto, clf, matcher, w = (state.autoencoder, state.classifier,
                             state.matcher, state.weights)
    n = images.shape[0]
    proto_same, proto_opp = proto_batches(protos, labels)
    g = np.array([[1.0 if l.gender == "male" else 0.0] for l in labels])

    feats, body_cache = auto.encode(images, proto_same)
    y_same, fuse_same = auto.fuse(feats, proto_same)
    y_opp, fuse_opp = auto.fuse(feats, proto_opp)

    # reconstruction (same-prototype branch only)
    diff = y_same - images
    recon = float(np.mean(diff * diff))

    # matching: both branches vs the (frozen) input embedding
    e_x = matcher.embed(images)
    e_same, mc_same = matcher.net.forward(y_same)
    e_opp, mc_opp = matcher.net.forward(y_opp)
    ds, do = e_same - e_x, e_opp - e_x
    match = float((np.sum(ds * ds, axis=1) + np.sum(do * do, axis=1)).mean() / 2)

    # gender confusion: true label on same branch, reversed on opposite
    s_same, gc_same = clf.net.forward(y_same)
    s_opp, gc_opp = clf.net.forward(y_opp)
    cs, co = clamp_prob(s_same), clamp_prob(s_opp)
    gender = float(np.mean(
        -g * np.log(cs) - (1 - g) * np.log(1 - cs)
        - (1 - g) * np.log(co) - g * np.log(1 - co)))

    if accumulate:
        dy_same = w.recon * 2.0 * diff / diff.size
        dy_same = dy_same + w.match * matcher.net.backward(ds / n, mc_same)
        dy_opp = w.match * matcher.net.backward(do / n, mc_opp)
        dy_same = dy_same + w.gender * clf.net.backward(
            _gender_score_grad(s_same, g, n), gc_same)
        dy_opp = dy_opp + w.gender * clf.net.backward(
            _gender_score_grad(s_opp, 1.0 - g, n), gc_opp)
        dfeats = auto.backward_fuse(dy_same, fuse_same)
        dfeats += auto.backward_fuse(dy_opp, fuse_opp)
        auto.backward_body(dfeats, body_cache)

    return LossBreakdown(recon=recon, match=match, gender=gender, weights=w)


def _zero_all(state: TrainState) -> None:
    state.autoencoder.zero_grads()
    state.classifier.net.zero_grads()
    state.matcher.net.zero_grads()


def train_step(state: TrainState, images: np.ndarray, labels: list,
               protos: PrototypeSet) -> LossBreakdown:
    """One gradient step on the autoencoder; matcher always frozen.

    Returns the batch loss evaluated before the update. Raises on a
    non-finite loss, naming the offending term.
    """
    if images.shape[0] == 0:
        raise ValueError("empty batch")
    _zero_all(state)
    breakdown = compute_loss_and_grads(state, images, labels, protos)
    for name, value in (("recon", breakdown.recon), ("match", breakdown.match),
                        ("gender", breakdown.gender)):
        if not np.isfinite(value):
            raise RuntimeError(f"non-finite {name} loss at step {state.step}")
    if state.optimizer == "adam":
        state.adam.update(state.autoencoder, state.lr)
    else:
        for p, grad in zip(state.autoencoder.params(),
                           state.autoencoder.grads()):
            p -= state.lr * grad
    if state.joint_classifier_update:
        _classifier_step(state.classifier, images,
                         np.array([[1.0 if l.gender == "male" else 0.0]
                                   for l in labels]), state.classifier_lr)
    state.step += 1
    return breakdown


def _classifier_step(clf: GenderClassifier, images: np.ndarray,
                     targets: np.ndarray, lr: float) -> None:
    clf.net.zero_grads()
    s, cache = clf.net.forward(images)
    clf.net.backward(_gender_score_grad(s, targets, images.shape[0]), cache)
    nn.sgd_update(clf.net, lr)


def train_san(state: TrainState, data: DatasetArrays, protos: PrototypeSet,
              epochs: int, batch_size: int, seed: int,
              log=None) -> list:
    """Seeded epoch loop; returns the per-step loss history."""
    rng = np.random.default_rng(seed)
    history = []
    n = len(data)
    for epoch in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            breakdown = train_step(state, data.images[idx],
                                   [data.labels[i] for i in idx], protos)
            history.append(breakdown)
        if log is not None:
            log(epoch, history[-1])
    return history


# -- auxiliary-network pretraining -----------------------------------------

def pretrain_classifier(clf: GenderClassifier, data: DatasetArrays,
                        epochs: int, batch_size: int, lr: float,
                        seed: int) -> None:
    """Binary cross-entropy training of a gender scorer (Adam)."""
    rng = np.random.default_rng(seed)
    adam = nn.AdamState(clf.net)
    targets = data.gender_targets[:, None]
    n = len(data)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            clf.net.zero_grads()
            s, cache = clf.net.forward(data.images[idx])
            clf.net.backward(_gender_score_grad(s, targets[idx], idx.size),
                             cache)
            adam.update(clf.net, lr)


def pretrain_matcher(matcher: FaceMatcher, data: DatasetArrays, epochs: int,
                     batch_size: int, lr: float, seed: int,
                     logit_scale: float = 10.0) -> None:
    """Train the embedding trunk via subject classification, then drop the head."""
    rng = np.random.default_rng(seed)
    subject_ids = sorted(set(data.subjects))
    index = {s: i for i, s in enumerate(subject_ids)}
    y = np.array([index[s] for s in data.subjects])
    head = nn.Dense(matcher.embed_dim, len(subject_ids),
                    rng=np.random.default_rng(seed + 1))
    adam = nn.AdamState(matcher.net)
    adam_head = nn.AdamState(head)
    n = len(data)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            matcher.net.zero_grads()
            head.zero_grads()
            e, cache = matcher.net.forward(data.images[idx])
            logits, head_cache = head.forward(e)
            logits = logit_scale * logits
            logits -= logits.max(axis=1, keepdims=True)
            p = np.exp(logits)
            p /= p.sum(axis=1, keepdims=True)
            dlogits = p.copy()
            dlogits[np.arange(idx.size), y[idx]] -= 1.0
            dlogits *= logit_scale / idx.size
            de = head.backward(dlogits, head_cache)
            matcher.net.backward(de, cache)
            adam.update(matcher.net, lr)
            adam_head.update(head, lr)


# -- gradient check ----------------------------------------------------------

def gradient_check(state: TrainState, images: np.ndarray, labels: list,
                   protos: PrototypeSet, n_samples: int = 60,
                   step: float = 1e-5, seed: int = 0) -> float:
    """Max relative error of analytic vs central-finite-difference gradients.

    Samples autoencoder parameters uniformly; intended for shrunken models
    (a few thousand parameters) and tiny batches.
    """
    _zero_all(state)
    compute_loss_and_grads(state, images, labels, protos)
    analytic = np.concatenate([grad.ravel()
                               for grad in state.autoencoder.grads()])
    params = state.autoencoder.params()
    flat_index = []
    for ti, p in enumerate(params):
        flat_index.extend((ti, i) for i in range(p.size))
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(flat_index), size=min(n_samples, len(flat_index)),
                       replace=False)

    def loss_at() -> float:
        return compute_loss_and_grads(state, images, labels, protos,
                                      accumulate=False).total

    max_rel = 0.0
    offsets = np.cumsum([0] + [p.size for p in params])
    for pick in picks:
        ti, i = flat_index[pick]
        flat = params[ti].reshape(-1)
        orig = flat[i]
        flat[i] = orig + step
        up = loss_at()
        flat[i] = orig - step
        down = loss_at()
        flat[i] = orig
        fd = (up - down) / (2.0 * step)
        ana = analytic[offsets[ti] + i]
        rel = abs(ana - fd) / (abs(ana) + abs(fd) + 1e-8)
        max_rel = max(max_rel, rel)
    return max_rel
