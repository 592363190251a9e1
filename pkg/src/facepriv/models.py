"""Network architectures: perturbation autoencoder, gender scorer, matcher.

The autoencoder takes the input image stacked with its same-group prototype
as a two-channel image, encodes/decodes it to ``feature_maps`` full-resolution
feature maps, concatenates the output-side prototype as one extra channel,
and collapses everything with a 1x1 convolution followed by a sigmoid, so
outputs always lie in [0, 1].

The gender scorer and the face matcher share a small strided conv trunk;
the scorer ends in a single sigmoid unit (score = P(male)), the matcher in
an L2-normalized embedding so cosine similarity is a plain dot product.
"""

from __future__ import annotations

import numpy as np

from . import nn


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def as_batch(img: np.ndarray) -> np.ndarray:
    """Promote one H x W image to a (1, 1, H, W) batch."""
    return img[None, None, :, :]


class Autoencoder:
    """Prototype-fused convolutional autoencoder."""

    def __init__(self, size: int = 64, feature_maps: int = 128,
                 enc_channels: tuple = (12, 24), dec_channels: tuple = (12, 12),
                 seed: int = 0):
        if size % 4 != 0:
            raise ValueError(f"image size {size} must be divisible by 4")
        self.size = size
        self.feature_maps = feature_maps
        self.enc_channels = tuple(enc_channels)
        self.dec_channels = tuple(dec_channels)
        self.seed = seed
        rng = np.random.default_rng(seed)
        c1, c2 = self.enc_channels
        d1, d2 = self.dec_channels
        self.body = nn.Sequential([
            nn.Conv2d(2, c1, 3, stride=2, rng=rng), nn.Elu(),
            nn.Conv2d(c1, c2, 3, stride=2, rng=rng), nn.Elu(),
            nn.Upsample2x(), nn.Conv2d(c2, d1, 3, rng=rng), nn.Elu(),
            nn.Upsample2x(), nn.Conv2d(d1, d2, 3, rng=rng), nn.Elu(),
            nn.Conv2d(d2, feature_maps, 1, rng=rng), nn.Elu(),
        ])
        # small fusion init keeps the output sigmoid away from saturation
        self.fusion = nn.Conv2d(feature_maps + 1, 1, 1, rng=rng,
                                init_scale=0.02)
        self.out = nn.Sigmoid()

    # -- parameter plumbing -------------------------------------------------
    def networks(self) -> list:
        return [self.body, self.fusion]

    def params(self) -> list:
        return self.body.params() + self.fusion.params()

    def grads(self) -> list:
        return self.body.grads() + self.fusion.grads()

    def zero_grads(self) -> None:
        self.body.zero_grads()
        self.fusion.zero_grads()

    # -- forward / backward -------------------------------------------------
    def encode(self, x: np.ndarray, proto_in: np.ndarray):
        """Run the shared body on (image, same-prototype) channel stacks."""
        stacked = np.concatenate([x, proto_in], axis=1)
        return self.body.forward(stacked)

    def fuse(self, feats: np.ndarray, proto_out: np.ndarray):
        """1x1-combine decoder feature maps with one prototype channel."""
        stacked = np.concatenate([feats, proto_out], axis=1)
        pre, fuse_cache = self.fusion.forward(stacked)
        y, sig_cache = self.out.forward(pre)
        return y, (fuse_cache, sig_cache)

    def backward_fuse(self, dy: np.ndarray, cache):
        fuse_cache, sig_cache = cache
        dpre = self.out.backward(dy, sig_cache)
        dstacked = self.fusion.backward(dpre, fuse_cache)
        return dstacked[:, :self.feature_maps]  # prototype channel grad unused

    def backward_body(self, dfeats: np.ndarray, cache) -> None:
        self.body.backward(dfeats, cache)

    def forward(self, x: np.ndarray, proto_in: np.ndarray,
                proto_out: np.ndarray) -> np.ndarray:
        feats, _ = self.encode(x, proto_in)
        y, _ = self.fuse(feats, proto_out)
        return y


def perturb(model: Autoencoder, x: np.ndarray, proto_in: np.ndarray,
            proto_out: np.ndarray) -> np.ndarray:
    """Perturb one H x W image; deterministic, output pixels in [0, 1]."""
    expected = (model.size, model.size)
    for name, img in (("input", x), ("input prototype", proto_in),
                      ("output prototype", proto_out)):
        if img.shape != expected:
            raise ValueError(
                f"{name} shape {img.shape} does not match model {expected}")
    y = model.forward(as_batch(x), as_batch(proto_in), as_batch(proto_out))
    return y[0, 0]


def _trunk(size: int, channels: tuple, rng: np.random.Generator):
    c1, c2, c3 = channels
    layers = [
        nn.Conv2d(1, c1, 3, stride=2, rng=rng), nn.Elu(),
        nn.Conv2d(c1, c2, 3, stride=2, rng=rng), nn.Elu(),
        nn.Conv2d(c2, c3, 3, stride=2, rng=rng), nn.Elu(),
        nn.Flatten(),
    ]
    s = _ceil_div(_ceil_div(_ceil_div(size, 2), 2), 2)
    return layers, c3 * s * s


class GenderClassifier:
    """CNN scoring P(male) in [0, 1] for a batch of grayscale images."""

    def __init__(self, size: int = 64, channels: tuple = (6, 12, 12),
                 seed: int = 0):
        self.size = size
        self.channels = tuple(channels)
        self.seed = seed
        rng = np.random.default_rng(seed)
        layers, flat = _trunk(size, self.channels, rng)
        layers += [nn.Dense(flat, 1, rng=rng), nn.Sigmoid()]
        self.net = nn.Sequential(layers)

    def score(self, images: np.ndarray) -> np.ndarray:
        """(N, 1, H, W) -> (N,) scores."""
        return nn.predict(self.net, images)[:, 0]

    def score_image(self, img: np.ndarray) -> float:
        return float(self.score(as_batch(img))[0])


class FaceMatcher:
    """CNN embedding network; embeddings are unit-norm vectors."""

    def __init__(self, size: int = 64, embed_dim: int = 128,
                 channels: tuple = (6, 12, 12), seed: int = 0):
        self.size = size
        self.embed_dim = embed_dim
        self.channels = tuple(channels)
        self.seed = seed
        rng = np.random.default_rng(seed)
        layers, flat = _trunk(size, self.channels, rng)
        layers += [nn.Dense(flat, embed_dim, rng=rng), nn.L2Normalize()]
        self.net = nn.Sequential(layers)

    def embed(self, images: np.ndarray) -> np.ndarray:
        """(N, 1, H, W) -> (N, D) unit-norm embeddings."""
        return nn.predict(self.net, images)

    def embed_image(self, img: np.ndarray) -> np.ndarray:
        return self.embed(as_batch(img))[0]


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))
