"""Minimal float64 conv-net layers with manual backprop.

Layers are stateful only in their parameters and accumulated gradients;
``forward`` returns an explicit cache that is passed back to ``backward``,
so one layer instance can be run several times per step (the perturbation
network's fusion head sees two prototype channels per batch). All math is
float64 NumPy, so results are bit-reproducible for a fixed seed.

Activations are smooth (ELU, sigmoid) so central finite differences agree
closely with the analytic gradients.
"""

from __future__ import annotations

import numpy as np


def he_scale(fan_in: int) -> float:
    return float(np.sqrt(1.0 / fan_in))


class Layer:
    """Base layer: parameter-free unless overridden."""

    def params(self) -> list:
        return []

    def grads(self) -> list:
        return []

    def zero_grads(self) -> None:
        for g in self.grads():
            g[...] = 0.0

    def forward(self, x):
        raise NotImplementedError

    def backward(self, dy, cache):
        raise NotImplementedError


def _same_pad(size: int, k: int, stride: int) -> tuple:
    out = -(-size // stride)
    total = max((out - 1) * stride + k - size, 0)
    return total // 2, total - total // 2


def im2col(x: np.ndarray, k: int, stride: int):
    """(N, C, H, W) -> (N, C*k*k, L) patch matrix with 'same' padding."""
    n, c, h, w = x.shape
    pt, pb = _same_pad(h, k, stride)
    pl, pr = _same_pad(w, k, stride)
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    oh = (h + pt + pb - k) // stride + 1
    ow = (w + pl + pr - k) // stride + 1
    cols = np.empty((n, c, k, k, oh, ow), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            cols[:, :, i, j] = xp[:, :, i:i + stride * oh:stride,
                                  j:j + stride * ow:stride]
    return cols.reshape(n, c * k * k, oh * ow), (h, w, pt, pl, oh, ow)


def col2im(dcols: np.ndarray, c: int, k: int, stride: int, geom) -> np.ndarray:
    h, w, pt, pl, oh, ow = geom
    n = dcols.shape[0]
    pb = _same_pad(h, k, stride)[1]
    pr = _same_pad(w, k, stride)[1]
    dxp = np.zeros((n, c, h + pt + pb, w + pl + pr), dtype=dcols.dtype)
    dcols = dcols.reshape(n, c, k, k, oh, ow)
    for i in range(k):
        for j in range(k):
            dxp[:, :, i:i + stride * oh:stride,
                j:j + stride * ow:stride] += dcols[:, :, i, j]
    return dxp[:, :, pt:pt + h, pl:pl + w]


class Conv2d(Layer):
    """2-D convolution with 'same' padding."""

    def __init__(self, in_ch: int, out_ch: int, k: int, stride: int = 1,
                 rng: np.random.Generator | None = None,
                 init_scale: float | None = None):
        self.in_ch, self.out_ch, self.k, self.stride = in_ch, out_ch, k, stride
        rng = rng or np.random.default_rng(0)
        scale = he_scale(in_ch * k * k) if init_scale is None else init_scale
        self.w = rng.normal(0.0, scale, size=(out_ch, in_ch, k, k))
        self.b = np.zeros(out_ch)
        self.gw = np.zeros_like(self.w)
        self.gb = np.zeros_like(self.b)

    def params(self):
        return [self.w, self.b]

    def grads(self):
        return [self.gw, self.gb]

    def forward(self, x):
        cols, geom = im2col(x, self.k, self.stride)
        wmat = self.w.reshape(self.out_ch, -1)
        y = (cols.transpose(0, 2, 1) @ wmat.T).transpose(0, 2, 1) \
            + self.b[None, :, None]
        oh, ow = geom[4], geom[5]
        return y.reshape(x.shape[0], self.out_ch, oh, ow), (cols, geom)

    def backward(self, dy, cache):
        cols, geom = cache
        n = dy.shape[0]
        dyf = dy.reshape(n, self.out_ch, -1)
        self.gw += (dyf @ cols.transpose(0, 2, 1)).sum(axis=0) \
            .reshape(self.w.shape)
        self.gb += dyf.sum(axis=(0, 2))
        wmat = self.w.reshape(self.out_ch, -1)
        dcols = wmat.T @ dyf
        return col2im(dcols, self.in_ch, self.k, self.stride, geom)


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int,
                 rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        self.w = rng.normal(0.0, he_scale(n_in), size=(n_out, n_in))
        self.b = np.zeros(n_out)
        self.gw = np.zeros_like(self.w)
        self.gb = np.zeros_like(self.b)

    def params(self):
        return [self.w, self.b]

    def grads(self):
        return [self.gw, self.gb]

    def forward(self, x):
        return x @ self.w.T + self.b, x

    def backward(self, dy, cache):
        x = cache
        self.gw += dy.T @ x
        self.gb += dy.sum(axis=0)
        return dy @ self.w


class Elu(Layer):
    def __init__(self, alpha: float = 1.0):
        self.alpha = alpha

    def forward(self, x):
        neg = self.alpha * np.expm1(np.minimum(x, 0.0))
        y = np.where(x > 0, x, neg)
        return y, (x > 0, neg)

    def backward(self, dy, cache):
        pos, neg = cache
        return dy * np.where(pos, 1.0, neg + self.alpha)


class Sigmoid(Layer):
    def forward(self, x):
        y = 1.0 / (1.0 + np.exp(-x))
        return y, y

    def backward(self, dy, cache):
        y = cache
        return dy * y * (1.0 - y)


class Upsample2x(Layer):
    """Nearest-neighbour 2x spatial upsampling."""

    def forward(self, x):
        y = x.repeat(2, axis=2).repeat(2, axis=3)
        return y, None

    def backward(self, dy, cache):
        n, c, h, w = dy.shape
        return dy.reshape(n, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5))


class Flatten(Layer):
    def forward(self, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, dy, cache):
        return dy.reshape(cache)


class L2Normalize(Layer):
    """Row-wise x / ||x||, with a small floor for stability."""

    eps = 1e-12

    def forward(self, x):
        norm = np.sqrt((x * x).sum(axis=1, keepdims=True) + self.eps)
        y = x / norm
        return y, (x, norm)

    def backward(self, dy, cache):
        x, norm = cache
        dot = (dy * x).sum(axis=1, keepdims=True)
        return dy / norm - x * (dot / norm ** 3)


class Sequential(Layer):
    def __init__(self, layers):
        self.layers = list(layers)

    def params(self):
        return [p for layer in self.layers for p in layer.params()]

    def grads(self):
        return [g for layer in self.layers for g in layer.grads()]

    def forward(self, x):
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x)
            caches.append(cache)
        return x, caches

    def backward(self, dy, caches):
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            dy = layer.backward(dy, cache)
        return dy


def predict(net: Layer, x: np.ndarray) -> np.ndarray:
    """Forward pass discarding the cache."""
    return net.forward(x)[0]


def flatten_params(net: Layer) -> np.ndarray:
    return np.concatenate([p.ravel() for p in net.params()])


def set_params(net: Layer, vec: np.ndarray) -> None:
    offset = 0
    for p in net.params():
        p[...] = vec[offset:offset + p.size].reshape(p.shape)
        offset += p.size
    if offset != vec.size:
        raise ValueError(f"parameter vector size {vec.size}, expected {offset}")


def flatten_grads(net: Layer) -> np.ndarray:
    return np.concatenate([g.ravel() for g in net.grads()])


def sgd_update(net: Layer, lr: float) -> None:
    for p, g in zip(net.params(), net.grads()):
        p -= lr * g


class AdamState:
    """Adam moments for one network; optional alternative to plain SGD."""

    def __init__(self, net: Layer, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in net.params()]
        self.v = [np.zeros_like(p) for p in net.params()]
        self.t = 0

    def update(self, net: Layer, lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, g, m, v in zip(net.params(), net.grads(), self.m, self.v):
            m[...] = b1 * m + (1 - b1) * g
            v[...] = b2 * v + (1 - b2) * g * g
            mhat = m / (1 - b1 ** self.t)
            vhat = v / (1 - b2 ** self.t)
            p -= lr * mhat / (np.sqrt(vhat) + self.eps)
