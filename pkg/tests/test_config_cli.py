"""Config round-trip and the operator command surface."""

import hashlib
import json
import os
import shutil

import numpy as np
import pytest

from facepriv.cli import main
from facepriv.config import (OUTPUT_ROOT_ENV, RunConfig, apply_overrides,
                             load_config, save_config)
from facepriv.core import group_token, load_image
from facepriv.selection import select_random

SCHEMA_PATH = os.path.join(os.path.dirname(__file__), os.pardir, "src",
                           "facepriv", "schemas", "report.schema.json")


def tree_hashes(root, skip=()):
    out = {}
    for dirpath, _, files in os.walk(root):
        for name in sorted(files):
            path = os.path.join(dirpath, name)
            rel = os.path.relpath(path, root)
            if any(rel.startswith(s) for s in skip):
                continue
            with open(path, "rb") as fh:
                out[rel] = hashlib.sha256(fh.read()).hexdigest()
    return out


# -- config ---------------------------------------------------------------------

def test_config_round_trip(tmp_path):
    config = RunConfig(seed=99, epochs=3, scheme="E3",
                       output_dir=str(tmp_path / "o"))
    path = str(tmp_path / "c.json")
    save_config(config, path)
    assert load_config(path) == config


def test_config_unknown_field_rejected(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"bogus_field": 1}))
    with pytest.raises(ValueError, match="bogus_field"):
        load_config(str(path))


def test_config_defaults_documented():
    config = RunConfig()
    assert config.feature_maps == 128
    assert config.members == 5
    assert config.subject_fraction == 0.10
    assert config.subject_duplication == 4
    assert config.race_fraction == 0.10
    assert config.race_duplication == 40
    assert config.aug_gain == [0.7, 1.3]
    assert config.aug_bias == [-0.15, 0.15]
    assert config.impostor_cap == 10000
    assert (config.lambda_recon, config.lambda_match,
            config.lambda_gender) == (1.0, 1.0, 1.0)


def test_apply_overrides():
    config = RunConfig()
    out = apply_overrides(config, {"epochs": 7, "seed": None})
    assert out.epochs == 7
    assert out.seed == config.seed
    with pytest.raises(ValueError, match="unknown config field"):
        apply_overrides(config, {"nope": 1})


def test_output_root_env(monkeypatch, tmp_path):
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path / "root"))
    config = RunConfig()
    assert config.output_dir == os.path.join(str(tmp_path / "root"), "run")


# -- CLI pipeline -----------------------------------------------------------------

def small_cli_config(out_dir, manifest):
    return RunConfig(manifest=manifest, output_dir=out_dir, image_size=32,
                     feature_maps=6, enc_channels=[4, 6], dec_channels=[4, 4],
                     classifier_channels=[3, 4, 4], embed_dim=16, epochs=1,
                     batch_size=16, classifier_pretrain_epochs=2,
                     matcher_pretrain_epochs=2, members=2, make_plots=False,
                     impostor_cap=500, seed=2024)


@pytest.fixture(scope="module")
def cli_workspace(tmp_path_factory):
    """Dataset + config + trained 2-member E1 ensemble, via the CLI."""
    root = tmp_path_factory.mktemp("cli")
    out = str(root / "out")
    data = str(root / "data")
    config = small_cli_config(out, os.path.join(data, "manifest.csv"))
    cfg_path = str(root / "config.json")
    save_config(config, cfg_path)
    assert main(["synth", "--config", cfg_path, "--out", data,
                 "--subjects-per-group", "2", "--images-per-subject", "2"]) == 0
    assert main(["train", "--config", cfg_path]) == 0
    ensemble_dir = os.path.join(out, "ensemble", "E1")
    assert os.path.isdir(ensemble_dir)
    return {"root": str(root), "out": out, "data": data,
            "config": cfg_path, "ensemble": ensemble_dir}


def test_cli_init(tmp_path):
    path = str(tmp_path / "facepriv.json")
    assert main(["init", "--path", path]) == 0
    config = load_config(path)
    assert config == RunConfig(output_dir=config.output_dir)


def test_cli_synth_outputs(cli_workspace):
    data = cli_workspace["data"]
    assert os.path.isfile(os.path.join(data, "manifest.csv"))
    assert os.path.isfile(os.path.join(data, "spec.json"))
    assert os.path.isfile(os.path.join(data, "config.used.json"))


def test_cli_prototypes_naming(cli_workspace, tmp_path):
    out = str(tmp_path / "protos")
    assert main(["prototypes", "--config", cli_workspace["config"],
                 "--out", out]) == 0
    names = sorted(f for f in os.listdir(out) if f.endswith(".png"))
    assert names == sorted(f"{group_token(g)}.png" for g in range(8))


def test_cli_prototypes_round_trip(cli_workspace, tmp_path):
    from facepriv.core import load_manifest
    from facepriv.prototypes import compute_prototypes, load_prototypes
    out = str(tmp_path / "protos")
    assert main(["prototypes", "--config", cli_workspace["config"],
                 "--out", out]) == 0
    manifest = load_manifest(
        os.path.join(cli_workspace["data"], "manifest.csv"))
    expected = compute_prototypes(manifest, "train")
    reloaded = load_prototypes(out)
    for g in range(8):
        assert np.array_equal(reloaded[g], expected[g])


def test_cli_prototypes_missing_group(tmp_path, capsys):
    # manifest with one group absent
    from facepriv.core import save_image
    lines = ["path,subject_id,gender,age,race,partition,race_override"]
    for i, (g, a, r) in enumerate([("male", "young", "white")] * 3):
        save_image(str(tmp_path / f"i{i}.png"), np.full((16, 16), 0.5))
        lines.append(f"i{i}.png,s{i},{g},{a},{r},train,")
    manifest_path = tmp_path / "m.csv"
    manifest_path.write_text("\n".join(lines) + "\n")
    code = main(["prototypes", "--manifest", str(manifest_path),
                 "--out", str(tmp_path / "p"),
                 "--output-dir", str(tmp_path / "o")])
    assert code == 1
    # first missing group is (female, young, black) -> token Y-F-B
    assert "Y-F-B" in capsys.readouterr().err


def test_cli_train_artifacts(cli_workspace):
    ens = cli_workspace["ensemble"]
    for rel in ("ensemble.json", "san_0/meta.json", "san_0/autoencoder.bin",
                "san_1/meta.json", "matcher/meta.json",
                "prototypes/prototypes.npy", "config.used.json"):
        assert os.path.isfile(os.path.join(ens, rel)), rel


def test_cli_train_rerun_identical_manifest_hash(cli_workspace, tmp_path):
    # fresh output root, same config -> identical ensemble.json content
    out2 = str(tmp_path / "out2")
    cfg = load_config(cli_workspace["config"])
    cfg.output_dir = out2
    cfg_path = str(tmp_path / "config2.json")
    save_config(cfg, cfg_path)
    assert main(["train", "--config", cfg_path]) == 0
    with open(os.path.join(cli_workspace["ensemble"], "ensemble.json")) as fh:
        a = fh.read()
    with open(os.path.join(out2, "ensemble", "E1", "ensemble.json")) as fh:
        b = fh.read()
    assert a == b
    # and byte-identical checkpoints
    assert tree_hashes(os.path.join(cli_workspace["ensemble"], "san_0")) == \
        tree_hashes(os.path.join(out2, "ensemble", "E1", "san_0"))


def test_cli_perturb_fanout_and_policy(cli_workspace, tmp_path):
    data = cli_workspace["data"]
    img = os.path.join(data, "images", "g0s0_0.png")
    out = str(tmp_path / "pert")
    assert main(["perturb", "--config", cli_workspace["config"],
                 "--ensemble", cli_workspace["ensemble"], "--out", out,
                 "--images", img, "--gender", "female", "--age", "young",
                 "--race", "black", "--policy", "random",
                 "--policy-seed", "5"]) == 0
    files = sorted(os.listdir(out))
    assert "g0s0_0__san0.png" in files
    assert "g0s0_0__san1.png" in files
    assert "g0s0_0__policy_random.png" in files
    pick = select_random(2, 5, "g0s0_0.png")
    with open(os.path.join(out, f"g0s0_0__san{pick}.png"), "rb") as fh:
        member_bytes = fh.read()
    with open(os.path.join(out, "g0s0_0__policy_random.png"), "rb") as fh:
        assert fh.read() == member_bytes
    # outputs differ from the input and lie in [0, 1]
    y = load_image(os.path.join(out, "g0s0_0__san0.png"))
    assert y.shape == (32, 32)
    assert not np.array_equal(y, load_image(img))


def test_cli_perturb_reproducible(cli_workspace, tmp_path):
    out1, out2 = str(tmp_path / "p1"), str(tmp_path / "p2")
    for out in (out1, out2):
        assert main(["perturb", "--config", cli_workspace["config"],
                     "--ensemble", cli_workspace["ensemble"],
                     "--out", out, "--partition", "test"]) == 0
    assert tree_hashes(out1) == tree_hashes(out2)


def test_cli_perturb_images_require_labels(cli_workspace, tmp_path):
    img = os.path.join(cli_workspace["data"], "images", "g0s0_0.png")
    with pytest.raises(SystemExit):
        main(["perturb", "--config", cli_workspace["config"],
              "--ensemble", cli_workspace["ensemble"],
              "--out", str(tmp_path / "x"), "--images", img])


def test_cli_perturb_best_policy_rejected(cli_workspace, tmp_path):
    img = os.path.join(cli_workspace["data"], "images", "g0s0_0.png")
    with pytest.raises(SystemExit, match="evaluate"):
        main(["perturb", "--config", cli_workspace["config"],
              "--ensemble", cli_workspace["ensemble"],
              "--out", str(tmp_path / "x"), "--images", img,
              "--gender", "female", "--age", "young", "--race", "black",
              "--policy", "best"])


@pytest.fixture(scope="module")
def cli_evaluation(cli_workspace, tmp_path_factory):
    out = str(tmp_path_factory.mktemp("eval"))
    assert main(["evaluate", "--config", cli_workspace["config"],
                 "--ensemble", cli_workspace["ensemble"], "--out", out]) == 0
    with open(os.path.join(out, "report.json"), encoding="utf-8") as fh:
        report = json.load(fh)
    return out, report


def test_cli_evaluate_report_schema(cli_evaluation):
    import jsonschema
    out, report = cli_evaluation
    with open(SCHEMA_PATH, encoding="utf-8") as fh:
        schema = json.load(fh)
    jsonschema.validate(report, schema)
    assert report["settings"]["score_polarity"] == "P(male)"
    assert report["settings"]["members"] == 2


def test_cli_evaluate_sections_and_dominance(cli_evaluation):
    out, report = cli_evaluation
    for name, section in report["gender"].items():
        assert "error" not in section, (name, section)
        assert "best" in section
        members = [k for k in section if k.startswith("member_")]
        assert len(members) == 2
        for m in members:
            assert section["best"]["auc"] <= section[m]["auc"]
    for name, section in report["matching"].items():
        assert "original" in section
    assert os.path.isfile(os.path.join(out, "gender_scores.csv"))
    assert os.path.isfile(os.path.join(out, "matching_scores.csv"))


def test_cli_evaluate_identity_baseline(cli_workspace, tmp_path):
    out = str(tmp_path / "eval_id")
    assert main(["evaluate", "--config", cli_workspace["config"],
                 "--ensemble", cli_workspace["ensemble"], "--out", out,
                 "--identity-perturbation"]) == 0
    with open(os.path.join(out, "report.json"), encoding="utf-8") as fh:
        report = json.load(fh)
    assert report["settings"]["identity_perturbation"] is True
    for section in report["gender"].values():
        for tag, metrics in section.items():
            if tag != "original":
                assert metrics == section["original"], tag
    for section in report["matching"].values():
        for tag, metrics in section.items():
            assert metrics == section["original"], tag


def test_cli_evaluate_deterministic(cli_workspace, tmp_path):
    hashes = []
    out = str(tmp_path / "eval_det")
    for _ in range(2):
        if os.path.isdir(out):
            shutil.rmtree(out)
        assert main(["evaluate", "--config", cli_workspace["config"],
                     "--ensemble", cli_workspace["ensemble"],
                     "--out", out]) == 0
        hashes.append(tree_hashes(out))
    assert hashes[0] == hashes[1]


def test_cli_evaluate_plots(cli_workspace, tmp_path):
    cfg = load_config(cli_workspace["config"])
    cfg.make_plots = True
    cfg_path = str(tmp_path / "cfg.json")
    save_config(cfg, cfg_path)
    out = str(tmp_path / "eval_plots")
    assert main(["evaluate", "--config", cfg_path,
                 "--ensemble", cli_workspace["ensemble"], "--out", out]) == 0
    assert os.path.isfile(os.path.join(out, "gender_roc.png"))
    assert os.path.isfile(os.path.join(out, "matching_roc.png"))


def test_cli_error_surface(tmp_path, capsys):
    code = main(["evaluate", "--ensemble", str(tmp_path / "missing"),
                 "--output-dir", str(tmp_path / "o")])
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_cli_config_echoed(cli_workspace):
    path = os.path.join(cli_workspace["ensemble"], "config.used.json")
    echoed = load_config(path)
    assert echoed == load_config(cli_workspace["config"])
