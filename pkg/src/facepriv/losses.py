"""The three training cost terms and their weighted combination."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PROB_EPS = 1e-6


@dataclass(frozen=True)
class LossWeights:
    recon: float = 1.0
    match: float = 1.0
    gender: float = 1.0


@dataclass(frozen=True)
class LossBreakdown:
    """Per-term batch losses; ``total`` is the weighted sum."""

    recon: float
    match: float
    gender: float
    weights: LossWeights

    @property
    def total(self) -> float:
        w = self.weights
        return w.recon * self.recon + w.match * self.match + w.gender * self.gender


def loss_reconstruction(x: np.ndarray, y_same: np.ndarray) -> float:
    """Mean squared pixel difference; zero iff the images are equal."""
    if x.shape != y_same.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y_same.shape}")
    d = y_same - x
    return float(np.mean(d * d))


def loss_match(e_x: np.ndarray, e_y: np.ndarray) -> float:
    """Squared Euclidean distance between two embeddings."""
    if e_x.shape != e_y.shape:
        raise ValueError(f"dimension mismatch: {e_x.shape} vs {e_y.shape}")
    d = e_x - e_y
    return float(np.sum(d * d))


def clamp_prob(s):
    return np.clip(s, PROB_EPS, 1.0 - PROB_EPS)


def cross_entropy(s: float, target: float) -> float:
    s = clamp_prob(s)
    return float(-target * np.log(s) - (1.0 - target) * np.log(1.0 - s))


def loss_gender(s_same: float, s_opp: float, gender: str) -> float:
    """Cross-entropy on both outputs' gender scores.

    The same-prototype output is held to the true label, the
    opposite-prototype output to the reversed label. Score polarity is
    P(male): g = 1 for male, 0 for female.
    """
    g = 1.0 if gender == "male" else 0.0
    return cross_entropy(s_same, g) + cross_entropy(s_opp, 1.0 - g)
