"""Train a small perturber ensemble and perturb a test image.

Trains a shared face matcher, then two independent perturbation
autoencoders (scheme E1), each with its own frozen gender classifier.
Finally perturbs one test image with both members and reports how each
member shifts the classifier's P(male).

Run demos/01_synthetic_data.py first, then:
    python3 demos/03_train_and_perturb.py     (about a minute)
"""

import os

from facepriv.config import RunConfig
from facepriv.core import load_image, load_manifest, save_image
from facepriv.ensemble import EnsembleSpec, train_ensemble
from facepriv.models import perturb
from facepriv.prototypes import (opposite_gender_prototype,
                                 same_gender_prototype)

DATA = "demo_output/data"
OUT = "demo_output/ensemble"


def main():
    manifest = load_manifest(os.path.join(DATA, "manifest.csv"))
    config = RunConfig(image_size=32, feature_maps=16, enc_channels=[6, 12],
                       dec_channels=[6, 6], classifier_channels=[4, 8, 8],
                       embed_dim=32, epochs=10, batch_size=16,
                       classifier_pretrain_epochs=10,
                       matcher_pretrain_epochs=10, seed=2024)
    spec = EnsembleSpec(scheme="E1", t=2, base_seed=config.seed)

    def log(msg):
        print(f"  {msg}")

    model = train_ensemble(manifest, spec, config, OUT, log=log)
    print(f"checkpointed ensemble under {OUT}")

    record = manifest.partition("test")[0]
    image = load_image(manifest.resolve(record))
    p_in = same_gender_prototype(record.labels, model.prototypes)
    p_out = opposite_gender_prototype(record.labels, model.prototypes)

    print(f"test image {record.path} (true gender: {record.labels.gender})")
    for i, (auto, clf) in enumerate(model.members):
        out = perturb(auto, image, p_in, p_out)
        before = clf.score_image(image)
        after = clf.score_image(out)
        save_image(os.path.join(OUT, f"demo_perturbed_{i}.png"), out)
        print(f"  member {i}: P(male) {before:.3f} -> {after:.3f}")


if __name__ == "__main__":
    main()
