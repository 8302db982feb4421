"""CLI surface tests against a temporary micro configuration."""

import numpy as np
import pytest
import yaml

from motionscore.cli import main
from motionscore.flo_io import FLOW_MAGIC, MB_MAGIC, read_flo


@pytest.fixture()
def micro_cfg_file(tmp_path):
    cfg = {
        "seed": 1,
        "workdir": str(tmp_path / "out"),
        "task": "hand_movement",
        "dataset": {"synth": {
            "n_subjects": 4, "clips_per_subject": 1, "frame_size": [32, 32],
            "frame_count": [18, 20], "fps": 10.0, "rng_seed": 1}},
        "sampler": {"k_segments": 2, "train_len": 6, "test_snippets": 8, "test_len": 4},
        "augment": {"enabled": True, "out_size": [24, 24]},
        "model": {"stages": [
            {"channels": 4, "kernel": [3, 3, 3], "stride": [2, 2, 2]},
            {"channels": 8, "kernel": [3, 3, 3], "stride": [2, 2, 2]}],
            "dropout": 0.2},
        "training": {"epochs": 2, "learning_rate": 1.0e-3, "batch_size": 2,
                     "val_every": 0},
        "folds": 2,
        "run": {"modalities": ["mb"]},
    }
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return path, tmp_path


def test_synth_and_ingest(micro_cfg_file, capsys):
    cfg, tmp = micro_cfg_file
    assert main(["synth", "--config", str(cfg), "--out", str(tmp / "ds")]) == 0
    assert (tmp / "ds" / "manifest.json").exists()
    assert main(["ingest", "--root", str(tmp / "ds"),
                 "--manifest", str(tmp / "ds" / "manifest.json")]) == 0
    out = capsys.readouterr().out
    assert "4 clips" in out


def test_extract_flow_and_mb(micro_cfg_file, tmp_path):
    cfg, tmp = micro_cfg_file
    main(["synth", "--config", str(cfg), "--out", str(tmp / "ds")])
    clip_dir = next((tmp / "ds" / "frames").iterdir())
    assert main(["extract-flow", "--in", str(clip_dir), "--out", str(tmp / "flo"),
                 "--param", "lambda=0.2", "--param", "pyramid_levels=3"]) == 0
    flo = sorted((tmp / "flo").glob("*.flo"))
    assert flo
    read_flo(flo[0], expect_magic=FLOW_MAGIC)
    assert main(["extract-mb", "--in", str(tmp / "flo"), "--out", str(tmp / "mb")]) == 0
    mb = sorted((tmp / "mb").glob("*.flo"))
    assert len(mb) == len(flo)
    read_flo(mb[0], expect_magic=MB_MAGIC)


def test_sample_manifest_lines(micro_cfg_file, capsys):
    cfg, tmp = micro_cfg_file
    assert main(["sample", "--mode", "train", "--config", str(cfg),
                 "--modality", "mb"]) == 0
    lines = [l for l in capsys.readouterr().out.splitlines() if l]
    assert len(lines) == 4 * 2  # 4 clips x k_segments
    clip_id, modality, start, length, transform = lines[0].split("\t")
    assert modality == "mb"
    assert int(length) == 6
    assert transform.startswith("scale=")
    assert main(["sample", "--mode", "test", "--config", str(cfg)]) == 0
    lines = [l for l in capsys.readouterr().out.splitlines() if l]
    assert len(lines) == 4 * 8


def test_train_evaluate_run_cycle(micro_cfg_file, capsys):
    cfg, tmp = micro_cfg_file
    assert main(["run", "--config", str(cfg)]) == 0
    report1 = (tmp / "out" / "report.txt").read_text()
    assert report1.startswith("motionscore-report/1")
    # per-fold training through the train verb hits the same cache
    assert main(["train", "--config", str(cfg), "--modality", "mb", "--fold", "0"]) == 0
    assert (tmp / "out" / "models" / "mb" / "fold0.ckpt").exists()
    assert main(["train", "--config", str(cfg), "--modality", "mb", "--fold", "1"]) == 0
    capsys.readouterr()
    assert main(["evaluate", "--config", str(cfg),
                 "--plan", str(tmp / "out" / "folds.json"),
                 "--models", str(tmp / "out" / "models"), "--fuse", "mb"]) == 0
    text = capsys.readouterr().out
    assert text == report1  # same models, same data, same report


def test_seed_override_changes_report(micro_cfg_file):
    cfg, tmp = micro_cfg_file
    main(["run", "--config", str(cfg)])
    base = (tmp / "out" / "report.txt").read_text()
    main(["run", "--config", str(cfg), "--seed", "9"])
    other = (tmp / "out" / "report.txt").read_text()
    assert "seed=9" in other
    assert base != other


def test_missing_model_checkpoint_errors(micro_cfg_file, tmp_path):
    cfg, tmp = micro_cfg_file
    main(["run", "--config", str(cfg)])
    with pytest.raises(SystemExit):
        main(["evaluate", "--config", str(cfg),
              "--plan", str(tmp / "out" / "folds.json"),
              "--models", str(tmp / "nope"), "--fuse", "mb"])
