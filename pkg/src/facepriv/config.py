"""Run configuration: documented defaults, JSON round-trip, overrides."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields

OUTPUT_ROOT_ENV = "FACEPRIV_OUTPUT_ROOT"


def default_output_root() -> str:
    return os.environ.get(OUTPUT_ROOT_ENV, "out")


@dataclass
class RunConfig:
    """Every knob of the pipeline; all fields have working defaults."""

    # paths
    manifest: str = "data/manifest.csv"
    output_dir: str = ""                      # empty -> <output root>/run

    # model
    image_size: int = 64
    feature_maps: int = 128                   # decoder maps fed to the 1x1 fusion
    embed_dim: int = 128
    enc_channels: list = field(default_factory=lambda: [12, 24])
    dec_channels: list = field(default_factory=lambda: [12, 12])
    classifier_channels: list = field(default_factory=lambda: [6, 12, 12])

    # loss weights
    lambda_recon: float = 1.0
    lambda_match: float = 1.0
    lambda_gender: float = 1.0

    # perturbation-network training
    learning_rate: float = 3e-3
    epochs: int = 20
    batch_size: int = 32
    optimizer: str = "adam"
    joint_classifier_update: bool = False
    joint_classifier_lr: float = 0.01

    # auxiliary-network pretraining
    classifier_pretrain_epochs: int = 15
    classifier_pretrain_lr: float = 3e-3
    matcher_pretrain_epochs: int = 20
    matcher_pretrain_lr: float = 3e-3

    # ensemble
    scheme: str = "E1"
    members: int = 5
    subject_fraction: float = 0.10
    subject_duplication: int = 4
    race_fraction: float = 0.10
    race_duplication: int = 40

    # evaluation
    predictors: list = field(default_factory=lambda: [
        "pixel_logit", "cnn_heldout", "cnn_heldout_aug"])
    matchers: list = field(default_factory=lambda: [
        "pixel_cosine", "cnn_heldout"])
    aug_gain: list = field(default_factory=lambda: [0.7, 1.3])
    aug_bias: list = field(default_factory=lambda: [-0.15, 0.15])
    impostor_cap: int = 10000
    identity_perturbation: bool = False
    eval_partition: str = "test"
    make_plots: bool = True

    seed: int = 1234

    def __post_init__(self):
        if not self.output_dir:
            self.output_dir = os.path.join(default_output_root(), "run")

    def loss_weights(self):
        from .losses import LossWeights
        return LossWeights(self.lambda_recon, self.lambda_match,
                           self.lambda_gender)


def save_config(config: RunConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(asdict(config), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_config(path: str) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"{path}: unknown config fields: {sorted(unknown)}")
    return RunConfig(**data)


def apply_overrides(config: RunConfig, overrides: dict) -> RunConfig:
    """Return a copy of ``config`` with non-None overrides applied."""
    data = asdict(config)
    known = {f.name for f in fields(RunConfig)}
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in known:
            raise ValueError(f"unknown config field {key!r}")
        data[key] = value
    return RunConfig(**data)
