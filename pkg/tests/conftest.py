"""Shared fixtures: a small synthetic dataset and tiny model factories."""

import numpy as np
import pytest

from facepriv.models import Autoencoder, FaceMatcher, GenderClassifier
from facepriv.prototypes import compute_prototypes
from facepriv.synthetic import SyntheticSpec, generate

ACCEPTANCE_LINES = []


def record_acceptance(line: str) -> None:
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """32x32 dataset: 8 groups x 2 subjects x 3 images, seeded."""
    out = tmp_path_factory.mktemp("smalldata")
    spec = SyntheticSpec(size=32, subjects_per_group=2, images_per_subject=3,
                         seed=7)
    manifest = generate(spec, str(out))
    return spec, manifest, str(out)


@pytest.fixture(scope="session")
def small_protos(small_dataset):
    _, manifest, _ = small_dataset
    return compute_prototypes(manifest, "train")


def tiny_autoencoder(seed=0, size=16):
    return Autoencoder(size=size, feature_maps=4, enc_channels=(3, 4),
                       dec_channels=(3, 3), seed=seed)


def tiny_classifier(seed=0, size=16):
    return GenderClassifier(size=size, channels=(3, 4, 4), seed=seed)


def tiny_matcher(seed=0, size=16, embed_dim=8):
    return FaceMatcher(size=size, embed_dim=embed_dim, channels=(3, 4, 4),
                       seed=seed)


@pytest.fixture()
def tiny_batch():
    rng = np.random.default_rng(3)
    images = rng.uniform(0.0, 1.0, size=(2, 1, 16, 16))
    return images
