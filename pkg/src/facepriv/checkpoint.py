"""Checkpoint persistence: raw little-endian tensors plus JSON metadata.

Layout of a checkpoint directory::

    meta.json          architecture, shapes, seeds, loss weights, scheme tag,
                       and a tensor table per network
    autoencoder.bin    float64 little-endian tensors, concatenated in table order
    classifier.bin     (optional)
    matcher.bin        (optional)
    prototypes/        prototype archive (optional, written by the trainer)

Tensors are stored as '<f8' bytes at the offsets recorded in the table, so
save followed by load reproduces every parameter bit-exactly.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .losses import LossWeights
from .models import Autoencoder, FaceMatcher, GenderClassifier

FORMAT = "facepriv-checkpoint-1"
DTYPE = "<f8"


class CheckpointError(ValueError):
    """Raised when a checkpoint directory is missing or inconsistent."""


def _write_tensors(path: str, params: list) -> list:
    table = []
    offset = 0
    with open(path, "wb") as fh:
        for i, p in enumerate(params):
            data = np.ascontiguousarray(p, dtype=DTYPE).tobytes()
            fh.write(data)
            table.append({"name": f"t{i:03d}", "shape": list(p.shape),
                          "dtype": DTYPE, "offset": offset,
                          "nbytes": len(data)})
            offset += len(data)
    return table


def _read_tensors(path: str, table: list, params: list) -> None:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(table) != len(params):
        raise CheckpointError(
            f"{path}: {len(table)} stored tensors, model has {len(params)}")
    for entry, p in zip(table, params):
        if list(p.shape) != entry["shape"]:
            raise CheckpointError(
                f"{path}:{entry['name']}: stored shape {entry['shape']} "
                f"!= model shape {list(p.shape)}")
        raw = blob[entry["offset"]:entry["offset"] + entry["nbytes"]]
        p[...] = np.frombuffer(raw, dtype=entry["dtype"]).reshape(p.shape)


@dataclass
class Checkpoint:
    autoencoder: Autoencoder
    classifier: GenderClassifier | None
    matcher: FaceMatcher | None
    meta: dict


def save_checkpoint(out_dir: str, autoencoder: Autoencoder,
                    classifier: GenderClassifier | None = None,
                    matcher: FaceMatcher | None = None,
                    weights: LossWeights = LossWeights(),
                    seed: int = 0, scheme: str = "",
                    extra: dict | None = None) -> None:
    os.makedirs(out_dir, exist_ok=True)
    meta = {
        "format": FORMAT,
        "image_size": autoencoder.size,
        "feature_maps": autoencoder.feature_maps,
        "weights": {"recon": weights.recon, "match": weights.match,
                    "gender": weights.gender},
        "seed": seed,
        "scheme": scheme,
        "autoencoder": {
            "enc_channels": list(autoencoder.enc_channels),
            "dec_channels": list(autoencoder.dec_channels),
            "seed": autoencoder.seed,
        },
        "tensors": {},
    }
    meta["tensors"]["autoencoder"] = _write_tensors(
        os.path.join(out_dir, "autoencoder.bin"), autoencoder.params())
    if classifier is not None:
        meta["classifier"] = {"channels": list(classifier.channels),
                              "seed": classifier.seed}
        meta["tensors"]["classifier"] = _write_tensors(
            os.path.join(out_dir, "classifier.bin"), classifier.net.params())
    if matcher is not None:
        meta["matcher"] = {"embed_dim": matcher.embed_dim,
                           "channels": list(matcher.channels),
                           "seed": matcher.seed}
        meta["tensors"]["matcher"] = _write_tensors(
            os.path.join(out_dir, "matcher.bin"), matcher.net.params())
    if extra:
        meta["extra"] = extra
    with open(os.path.join(out_dir, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_checkpoint(ckpt_dir: str) -> Checkpoint:
    meta_path = os.path.join(ckpt_dir, "meta.json")
    if not os.path.isfile(meta_path):
        raise CheckpointError(f"missing checkpoint metadata: {meta_path}")
    with open(meta_path, encoding="utf-8") as fh:
        meta = json.load(fh)
    if meta.get("format") != FORMAT:
        raise CheckpointError(
            f"{meta_path}: unknown format {meta.get('format')!r}")
    size = meta["image_size"]
    auto = Autoencoder(size=size, feature_maps=meta["feature_maps"],
                       enc_channels=tuple(meta["autoencoder"]["enc_channels"]),
                       dec_channels=tuple(meta["autoencoder"]["dec_channels"]),
                       seed=meta["autoencoder"]["seed"])
    _read_tensors(os.path.join(ckpt_dir, "autoencoder.bin"),
                  meta["tensors"]["autoencoder"], auto.params())
    classifier = None
    if "classifier" in meta:
        classifier = GenderClassifier(
            size=size, channels=tuple(meta["classifier"]["channels"]),
            seed=meta["classifier"]["seed"])
        _read_tensors(os.path.join(ckpt_dir, "classifier.bin"),
                      meta["tensors"]["classifier"], classifier.net.params())
    matcher = None
    if "matcher" in meta:
        matcher = FaceMatcher(
            size=size, embed_dim=meta["matcher"]["embed_dim"],
            channels=tuple(meta["matcher"]["channels"]),
            seed=meta["matcher"]["seed"])
        _read_tensors(os.path.join(ckpt_dir, "matcher.bin"),
                      meta["tensors"]["matcher"], matcher.net.params())
    return Checkpoint(auto, classifier, matcher, meta)
