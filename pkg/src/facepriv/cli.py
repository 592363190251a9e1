"""Operator entry point: synth / prototypes / train / perturb / evaluate.

Every command is deterministic for a fixed config: all randomness flows
from the configured seed, and the effective config is echoed into the
command's output directory for provenance.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .config import RunConfig, apply_overrides, load_config, save_config
from .core import AttributeLabels, load_image, load_manifest, save_image
from .ensemble import EnsembleSpec, load_ensemble, train_ensemble
from .evaluation import (build_matchers, build_predictors, eval_gender,
                         eval_matching, perturb_dataset)
from .models import perturb
from .prototypes import (compute_prototypes, opposite_gender_prototype,
                         same_gender_prototype, save_prototypes)
from .selection import select_random
from .synthetic import SyntheticSpec, generate
from .training import load_arrays


def _echo_config(config: RunConfig, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    save_config(config, os.path.join(out_dir, "config.used.json"))


def _load_cfg(args) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    overrides = {k: getattr(args, k, None)
                 for k in ("manifest", "output_dir", "seed", "scheme",
                           "members", "epochs")}
    return apply_overrides(config, overrides)


def cmd_init(args) -> int:
    config = RunConfig()
    if args.output_dir:
        config.output_dir = args.output_dir
    save_config(config, args.path)
    print(f"wrote default config to {args.path}")
    return 0


def cmd_synth(args) -> int:
    config = _load_cfg(args)
    out_dir = args.out or os.path.join(config.output_dir, "data")
    spec = SyntheticSpec(size=config.image_size,
                         subjects_per_group=args.subjects_per_group,
                         images_per_subject=args.images_per_subject,
                         noise=args.noise, seed=config.seed)
    manifest = generate(spec, out_dir)
    _echo_config(config, out_dir)
    print(f"generated {len(manifest.records)} images under {out_dir}")
    return 0


def cmd_prototypes(args) -> int:
    config = _load_cfg(args)
    manifest = load_manifest(config.manifest)
    protos = compute_prototypes(manifest, partition=args.partition)
    out_dir = args.out or os.path.join(config.output_dir, "prototypes")
    save_prototypes(protos, out_dir)
    _echo_config(config, out_dir)
    print(f"wrote 8 prototypes to {out_dir}")
    return 0


def cmd_train(args) -> int:
    config = _load_cfg(args)
    manifest = load_manifest(config.manifest)
    spec = EnsembleSpec(scheme=config.scheme, t=config.members,
                        base_seed=config.seed,
                        subject_fraction=config.subject_fraction,
                        subject_duplication=config.subject_duplication,
                        race_fraction=config.race_fraction,
                        race_duplication=config.race_duplication)
    out_root = os.path.join(config.output_dir, "ensemble", spec.scheme)
    _echo_config(config, out_root)
    train_ensemble(manifest, spec, config, out_root,
                   manifest_path=config.manifest,
                   log=lambda msg: print(msg, flush=True))
    print(f"trained {spec.t} members into {out_root}")
    return 0


def cmd_perturb(args) -> int:
    config = _load_cfg(args)
    ensemble = load_ensemble(args.ensemble)
    out_dir = args.out or os.path.join(config.output_dir, "perturbed")
    os.makedirs(out_dir, exist_ok=True)
    _echo_config(config, out_dir)

    inputs = []                       # (image_id, image, labels)
    if args.images:
        if not (args.gender and args.age and args.race):
            raise SystemExit("--images requires --gender, --age and --race")
        labels = AttributeLabels(args.gender, args.age, args.race)
        for path in args.images:
            inputs.append((os.path.basename(path), load_image(path), labels))
    else:
        manifest = load_manifest(config.manifest)
        for rec in manifest.partition(args.partition):
            inputs.append((rec.path, load_image(manifest.resolve(rec)),
                           rec.labels))

    t = ensemble.spec.t
    for image_id, img, labels in inputs:
        stem = os.path.splitext(os.path.basename(image_id))[0]
        proto_in = same_gender_prototype(labels, ensemble.prototypes)
        proto_out = opposite_gender_prototype(labels, ensemble.prototypes)
        outputs = []
        for m, (auto, _) in enumerate(ensemble.members):
            y = perturb(auto, img, proto_in, proto_out)
            outputs.append(y)
            save_image(os.path.join(out_dir, f"{stem}__san{m}.png"), y)
        if args.policy == "random":
            pick = select_random(t, args.policy_seed, image_id)
            save_image(os.path.join(out_dir, f"{stem}__policy_random.png"),
                       outputs[pick])
        elif args.policy == "best":
            raise SystemExit(
                "best-selection needs ground truth and a target predictor; "
                "it is an evaluation diagnostic -- use 'facepriv evaluate'")
    print(f"perturbed {len(inputs)} images x {t} members into {out_dir}")
    return 0


def cmd_evaluate(args) -> int:
    config = _load_cfg(args)
    if args.identity_perturbation:
        config.identity_perturbation = True
    ensemble = load_ensemble(args.ensemble)
    out_dir = args.out or os.path.join(config.output_dir, "evaluation")
    os.makedirs(out_dir, exist_ok=True)
    _echo_config(config, out_dir)

    manifest = load_manifest(config.manifest)
    data = load_arrays(manifest, config.eval_partition)

    heldout_dir = os.path.join(out_dir, "heldout_data")
    heldout_spec = SyntheticSpec(size=config.image_size,
                                 subjects_per_group=3, images_per_subject=6,
                                 noise=0.03, seed=config.seed + 7777)
    heldout = load_arrays(generate(heldout_spec, heldout_dir), "train")

    predictors = build_predictors(config.predictors, heldout,
                                  config.image_size, config.seed,
                                  gain_range=tuple(config.aug_gain),
                                  bias_range=tuple(config.aug_bias))
    matchers = build_matchers(config.matchers, heldout, config.image_size,
                              config.seed, embed_dim=config.embed_dim)

    perturbed = perturb_dataset(ensemble.members, ensemble.prototypes, data,
                                identity=config.identity_perturbation)
    gender_report, gender_curves = eval_gender(
        predictors, data, perturbed, out_dir, selection_seed=config.seed)
    matching_report, matching_curves = eval_matching(
        matchers, data, perturbed, out_dir,
        impostor_cap=config.impostor_cap, seed=config.seed)

    report = {
        "settings": {
            "score_polarity": "P(male)",
            "aug_gain": list(config.aug_gain),
            "aug_bias": list(config.aug_bias),
            "impostor_cap": config.impostor_cap,
            "identity_perturbation": config.identity_perturbation,
            "seed": config.seed,
            "members": ensemble.spec.t,
        },
        "gender": gender_report,
        "matching": matching_report,
    }
    with open(os.path.join(out_dir, "report.json"), "w",
              encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if config.make_plots:
        from .plots import plot_roc_grid
        plot_roc_grid(gender_curves, os.path.join(out_dir, "gender_roc.png"),
                      "Gender prediction ROC")
        plot_roc_grid(matching_curves,
                      os.path.join(out_dir, "matching_roc.png"),
                      "Face matching ROC")
    print(f"evaluation report written to {out_dir}/report.json")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="facepriv",
        description="Gender-privacy face perturbation: train ensembles of "
                    "adversarial autoencoders, perturb images, evaluate "
                    "privacy/utility ROC.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="config JSON (see 'init')")
        p.add_argument("--manifest", help="override manifest path")
        p.add_argument("--output-dir", dest="output_dir",
                       help="override output directory")
        p.add_argument("--seed", type=int, help="override global seed")

    p = sub.add_parser("init", help="write a default config file")
    p.add_argument("--path", default="facepriv.json")
    p.add_argument("--output-dir", dest="output_dir", default="")
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    common(p)
    p.add_argument("--out", help="dataset directory")
    p.add_argument("--subjects-per-group", type=int, default=4)
    p.add_argument("--images-per-subject", type=int, default=8)
    p.add_argument("--noise", type=float, default=0.02)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prototypes", help="compute the 8 group prototypes")
    common(p)
    p.add_argument("--out", help="prototype archive directory")
    p.add_argument("--partition", default="train",
                   choices=("train", "test"))
    p.set_defaults(func=cmd_prototypes)

    p = sub.add_parser("train", help="train an ensemble")
    common(p)
    p.add_argument("--scheme", choices=("E1", "E2", "E3"))
    p.add_argument("--members", type=int)
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("perturb", help="emit t perturbed outputs per input")
    common(p)
    p.add_argument("--ensemble", required=True, help="ensemble directory")
    p.add_argument("--out", help="output directory")
    p.add_argument("--images", nargs="*", help="explicit input image files")
    p.add_argument("--gender", choices=("male", "female"))
    p.add_argument("--age", choices=("young", "old"))
    p.add_argument("--race", choices=("black", "white"))
    p.add_argument("--partition", default="test", choices=("train", "test"))
    p.add_argument("--policy", choices=("random", "best"))
    p.add_argument("--policy-seed", type=int, default=0)
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("evaluate", help="privacy/utility ROC evaluation")
    common(p)
    p.add_argument("--ensemble", required=True, help="ensemble directory")
    p.add_argument("--out", help="output directory")
    p.add_argument("--identity-perturbation", action="store_true",
                   help="no-op perturbation debug baseline")
    p.set_defaults(func=cmd_evaluate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SystemExit:
        raise
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
