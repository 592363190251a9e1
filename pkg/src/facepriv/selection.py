"""Deployment policies over the ensemble's t perturbed outputs.

``select_best`` is an evaluation-only diagnostic: it needs the true gender
and picks the output whose P(male) score is most confounding (minimum for
male inputs, maximum for female). ``select_random`` is the deployable
policy: a uniform, per-image-deterministic draw that conceals the true
label without knowledge of the attacking classifier.
"""

from __future__ import annotations

import hashlib

import numpy as np


def select_best(scores, gender: str):
    """Pick the most gender-confounding output index and its score.

    ``scores`` are P(male) values, one per ensemble member. Ties break to
    the lowest index (argmin/argmax semantics).
    """
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        raise ValueError("empty score list")
    if gender == "male":
        idx = int(np.argmin(scores))
    elif gender == "female":
        idx = int(np.argmax(scores))
    else:
        raise ValueError(f"unknown gender label {gender!r}")
    return idx, float(scores[idx])


def select_random(t: int, seed: int, image_id: str = "") -> int:
    """Uniform member index, deterministic per (seed, image id)."""
    if t < 1:
        raise ValueError("member count must be >= 1")
    digest = hashlib.sha256(f"{seed}|{image_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % t
