"""Resampling schemes and the entropy diversity of an ensemble.

Shows the three training-set schemes (E1 shared, E2 subject-disjoint
oversampling, E3 minority-race oversampling) and computes the entropy
diversity and oracle error rates of a toy ensemble's gender decisions.

Run demos/01_synthetic_data.py first, then:
    python3 demos/05_ensemble_diversity.py
"""

import os

import numpy as np

from facepriv.core import load_manifest
from facepriv.ensemble import (EnsembleSpec, entropy_diversity,
                               member_manifest)

DATA = "demo_output/data"


def main():
    manifest = load_manifest(os.path.join(DATA, "manifest.csv"))
    n = len(manifest.partition("train"))
    for scheme in ("E1", "E2", "E3"):
        # the default 10% subject fraction targets full-sized datasets; the
        # demo set is tiny, so oversample a quarter of the subjects instead
        spec = EnsembleSpec(scheme=scheme, t=3, base_seed=5,
                            subject_fraction=0.25)
        sizes = [len(member_manifest(manifest, i, spec).partition("train"))
                 for i in range(3)]
        print(f"{scheme}: member training-set sizes {sizes} (base {n})")

    # toy (t, N) correctness matrix: one member always right, one mostly
    # right, one always wrong
    rng = np.random.default_rng(0)
    correct = np.array([np.ones(12, dtype=bool),
                        rng.uniform(size=12) < 0.8,
                        np.zeros(12, dtype=bool)])
    errors = 1.0 - correct.mean(axis=1)
    print(f"member error rates: {np.round(errors, 3).tolist()}")
    print(f"entropy diversity:  {entropy_diversity(correct):.3f}")


if __name__ == "__main__":
    main()
