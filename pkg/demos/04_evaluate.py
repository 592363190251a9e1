"""Evaluate a trained ensemble: gender suppression and matching utility.

Loads the ensemble trained by demos/03_train_and_perturb.py, perturbs the
test partition with every member, and reports per-member, best-selection,
and random-selection gender AUCs (scores are P(male)) plus face-matching
AUC/EER on (original, perturbed) pairs.

Run demos 01 and 03 first, then:
    python3 demos/04_evaluate.py
"""

import json
import os

from facepriv.core import load_manifest
from facepriv.ensemble import load_ensemble
from facepriv.evaluation import (PixelCosineMatcher, PixelLogisticPredictor,
                                 eval_gender, eval_matching, perturb_dataset)
from facepriv.training import load_arrays

DATA = "demo_output/data"
ENSEMBLE = "demo_output/ensemble"
OUT = "demo_output/evaluation"


def main():
    manifest = load_manifest(os.path.join(DATA, "manifest.csv"))
    model = load_ensemble(ENSEMBLE)
    train = load_arrays(manifest, "train")
    test = load_arrays(manifest, "test")

    perturbed = perturb_dataset(model.members, model.prototypes, test)

    predictor = PixelLogisticPredictor("pixel_logit", size=32)
    predictor.fit(train)
    gender, _ = eval_gender({"pixel_logit": predictor}, test, perturbed,
                            os.path.join(OUT, "gender"), selection_seed=1)

    matcher = PixelCosineMatcher("pixel_cosine", size=32)
    matching, _ = eval_matching({"pixel_cosine": matcher}, test, perturbed,
                                os.path.join(OUT, "matching"),
                                impostor_cap=2000, seed=1)

    section = gender["pixel_logit"]
    print("gender AUC (lower = better privacy):")
    for tag in sorted(section):
        print(f"  {tag:10s} auc={section[tag]['auc']:.3f} "
              f"eer={section[tag]['eer']:.3f}")
    print("matching AUC (higher = better utility):")
    for tag, metrics in sorted(matching["pixel_cosine"].items()):
        print(f"  {tag:10s} auc={metrics['auc']:.3f} "
              f"eer={metrics['eer']:.3f}")

    with open(os.path.join(OUT, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump({"gender": gender, "matching": matching}, fh, indent=2,
                  sort_keys=True)
    print(f"score dumps and curves under {OUT}")


if __name__ == "__main__":
    main()
