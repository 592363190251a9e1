"""Compute the eight group prototypes and look up same/opposite-gender pairs.

A prototype is the pixel mean of all training images in one
(gender, age, race) group. The perturber conditions on the same-gender
prototype at the input and an output prototype (same- or opposite-gender)
in its fusion stage.

Run demos/01_synthetic_data.py first, then:
    python3 demos/02_prototypes.py
"""

import os

from facepriv.core import group_token, labels_of, load_manifest
from facepriv.prototypes import (compute_prototypes, load_prototypes,
                                 opposite_gender_prototype, save_prototypes,
                                 same_gender_prototype)

DATA = "demo_output/data"
OUT = "demo_output/prototypes"


def main():
    manifest = load_manifest(os.path.join(DATA, "manifest.csv"))
    protos = compute_prototypes(manifest, "train")
    save_prototypes(protos, OUT)
    print(f"saved 8 prototype images + float archive under {OUT}")

    for g in range(8):
        labels = labels_of(g)
        same = same_gender_prototype(labels, protos)
        opp = opposite_gender_prototype(labels, protos)
        print(f"  group {group_token(g):6s} mean={same.mean():.3f} "
              f"opposite-gender mean={opp.mean():.3f}")

    reloaded = load_prototypes(OUT)
    exact = all((reloaded[g] == protos[g]).all() for g in range(8))
    print(f"archive round-trip exact: {exact}")


if __name__ == "__main__":
    main()
