import json

import pytest

from sketchadapt.cli import main
from sketchadapt.synthetic import write_demo_tree

CATS = ["circle", "triangle", "zigzag"]


@pytest.fixture(scope="module")
def demo(tmp_path_factory):
    root = tmp_path_factory.mktemp("demo")
    data = root / "data"
    paths = write_demo_tree(data, CATS + ["star"], per_category=8, seed=0, side=32)
    config = {
        "adapter": "toy",
        "adapter_seed": 0,
        "out_dir": str(root / "prep"),
        "source_high": str(paths["high"]),
        "source_medium": str(paths["medium"]),
        "source_low_dir": str(paths["edgemaps"]),
        "seen": CATS,
        "unseen": ["star"],
        "shots": 5,
        "em_keep_fraction": 1.0,
        "seed": 0,
        "prompt_depth": 2,
        "context_tokens": 4,
        "batch_size": 16,
        "epochs": 2,
        "learning_rate": 5e-3,
        "decoder_hidden": 16,
    }
    cfg_path = root / "config.json"
    cfg_path.write_text(json.dumps(config))
    return root, cfg_path, config


def test_prepare_data(demo, capsys):
    root, cfg_path, config = demo
    assert main(["prepare-data", "--config", str(cfg_path)]) == 0
    out = capsys.readouterr().out
    assert "HIGH: 32 samples" in out
    assert (root / "prep" / "manifest.json").exists()
    assert (root / "prep" / "split.json").exists()
    assert (root / "prep" / "config.json").exists()
    split = json.loads((root / "prep" / "split.json").read_text())
    assert split["unseen_categories"] == ["star"]
    assert len(split["train_samples"]) == 5 * 3 * 3


def test_prepare_data_missing_path(demo, capsys):
    root, cfg_path, config = demo
    code = main(["prepare-data", "--config", str(cfg_path),
                 "--source-high", str(root / "nope.ndjson"),
                 "--out-dir", str(root / "prep2")])
    assert code == 2
    assert "nope.ndjson" in capsys.readouterr().err


def test_prepare_data_rerun_byte_identical(demo, tmp_path):
    root, cfg_path, config = demo
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["prepare-data", "--config", str(cfg_path), "--out-dir", str(out_a)]) == 0
    assert main(["prepare-data", "--config", str(cfg_path), "--out-dir", str(out_b)]) == 0
    assert (out_a / "split.json").read_bytes() == (out_b / "split.json").read_bytes()
    manifest_a = (out_a / "manifest.json").read_bytes()
    manifest_b = (out_b / "manifest.json").read_bytes()
    assert manifest_a == manifest_b


@pytest.fixture(scope="module")
def trained(demo):
    root, cfg_path, config = demo
    prep = root / "prep"
    if not (prep / "manifest.json").exists():
        assert main(["prepare-data", "--config", str(cfg_path)]) == 0
    run_dir = root / "run"
    code = main(["train", "--config", str(cfg_path),
                 "--manifest", str(prep / "manifest.json"),
                 "--split", str(prep / "split.json"),
                 "--out-dir", str(run_dir)])
    assert code == 0
    return root, cfg_path, run_dir, prep


def test_train_outputs(trained):
    root, cfg_path, run_dir, prep = trained
    assert (run_dir / "checkpoints" / "checkpoint_last.pt").exists()
    assert (run_dir / "train_log.jsonl").exists()
    echo = json.loads((run_dir / "config.json").read_text())
    assert echo["epochs"] == 2 and echo["prompt_depth"] == 2


def test_train_flag_overrides_config(demo, tmp_path):
    root, cfg_path, config = demo
    prep = root / "prep"
    run_dir = tmp_path / "flags"
    code = main(["train", "--config", str(cfg_path),
                 "--manifest", str(prep / "manifest.json"),
                 "--split", str(prep / "split.json"),
                 "--out-dir", str(run_dir),
                 "--prompt-depth", "1", "--context-tokens", "2", "--epochs", "1",
                 "--no-mixup", "--no-sketch2vec"])
    assert code == 0
    echo = json.loads((run_dir / "config.json").read_text())
    assert echo["prompt_depth"] == 1
    assert echo["context_tokens"] == 2
    assert echo["mixup"] is False and echo["sketch2vec"] is False

    import torch
    payload = torch.load(run_dir / "checkpoints" / "checkpoint_last.pt",
                         weights_only=False)
    assert payload["config"]["prompt_depth"] == 1
    assert payload["config"]["context_tokens"] == 2
    assert payload["prompts"]["text_prompts"].shape[:2] == (1, 2)


def test_default_config_echo_matches_published_defaults(tmp_path):
    from sketchadapt.config import TrainConfig
    cfg = TrainConfig()
    assert cfg.prompt_depth == 9
    assert cfg.context_tokens == 5
    assert cfg.learning_rate == 1e-4
    assert cfg.batch_size == 64
    assert cfg.epochs == 7


def test_eval_reports_and_plots(trained, capsys):
    root, cfg_path, run_dir, prep = trained
    out_dir = root / "eval_seen"
    code = main(["eval", "--config", str(cfg_path),
                 "--checkpoint", str(run_dir / "checkpoints" / "checkpoint_last.pt"),
                 "--manifest", str(prep / "manifest.json"),
                 "--split", str(prep / "split.json"),
                 "--which", "seen", "--out-dir", str(out_dir)])
    assert code == 0
    report = json.loads((out_dir / "report_seen.json").read_text())
    assert 0.0 <= report["top1"] <= 100.0
    assert sum(report["membership_bins"]) == report["n_samples"]
    assert sum(r["count"] for r in report["per_source"].values()) == report["n_samples"]
    for name in ("membership_histogram_seen.png", "accuracy_vs_abstraction_seen.png",
                 "per_category_seen.csv", "per_source_seen.csv"):
        path = out_dir / name
        assert path.exists() and path.stat().st_size > 0


def test_eval_unseen(trained):
    root, cfg_path, run_dir, prep = trained
    out_dir = root / "eval_unseen"
    code = main(["eval", "--config", str(cfg_path),
                 "--checkpoint", str(run_dir / "checkpoints" / "checkpoint_last.pt"),
                 "--manifest", str(prep / "manifest.json"),
                 "--split", str(prep / "split.json"),
                 "--which", "unseen", "--out-dir", str(out_dir)])
    assert code == 0
    report = json.loads((out_dir / "report_unseen.json").read_text())
    assert report["n_samples"] > 0


def test_eval_unseen_empty_split_errors(demo, tmp_path, capsys):
    root, cfg_path, config = demo
    prep = root / "prep"
    run_dir = root / "run"
    # craft a split without unseen categories
    split = json.loads((prep / "split.json").read_text())
    split["unseen_categories"] = []
    split["eval_unseen_samples"] = []
    empty_split = tmp_path / "empty_split.json"
    empty_split.write_text(json.dumps(split))
    code = main(["eval", "--config", str(cfg_path),
                 "--checkpoint", str(run_dir / "checkpoints" / "checkpoint_last.pt"),
                 "--manifest", str(prep / "manifest.json"),
                 "--split", str(empty_split),
                 "--which", "unseen", "--out-dir", str(tmp_path / "out")])
    assert code == 2


def test_eval_missing_checkpoint(demo, tmp_path):
    root, cfg_path, config = demo
    prep = root / "prep"
    code = main(["eval", "--config", str(cfg_path),
                 "--checkpoint", str(tmp_path / "missing.pt"),
                 "--manifest", str(prep / "manifest.json"),
                 "--split", str(prep / "split.json"),
                 "--out-dir", str(tmp_path / "out")])
    assert code == 2


def test_predict_stroke_input(trained, capsys, tmp_path):
    root, cfg_path, run_dir, prep = trained
    record = {"category": "circle",
              "strokes": [[0, 5, 5, 0, -5], [0, 0, 5, 5, 0], [0, 0, 0, 0, 1]]}
    stroke_file = tmp_path / "one.ndjson"
    stroke_file.write_text(json.dumps(record) + "\n")
    code = main(["predict",
                 "--checkpoint", str(run_dir / "checkpoints" / "checkpoint_last.pt"),
                 "--input", str(stroke_file),
                 "--categories", ",".join(CATS),
                 "--top-k", "2", "--decode"])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert len(payload["top_categories"]) == 2
    total = sum(r["probability"] for r in payload["top_categories"])
    assert total <= 1.0 + 1e-6
    abst = payload["abstraction"]
    assert abs(abst["low"] + abst["medium"] + abst["high"] - 1.0) < 1e-6
    rows = payload["decoded_stroke5"]
    assert all(sum(r[2:]) == 1.0 for r in rows)


def test_predict_image_input_deterministic(trained, capsys):
    root, cfg_path, run_dir, prep = trained
    image = next((prep / "rasters").glob("*.png"))
    argv = ["predict",
            "--checkpoint", str(run_dir / "checkpoints" / "checkpoint_last.pt"),
            "--input", str(image),
            "--categories", ",".join(CATS)]
    assert main(argv) == 0
    first = capsys.readouterr().out
    assert main(argv) == 0
    second = capsys.readouterr().out
    assert first == second


def test_predict_single_category_probability_one(trained, capsys, tmp_path):
    root, cfg_path, run_dir, prep = trained
    image = next((prep / "rasters").glob("*.png"))
    code = main(["predict",
                 "--checkpoint", str(run_dir / "checkpoints" / "checkpoint_last.pt"),
                 "--input", str(image), "--categories", "circle"])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["top_categories"][0]["probability"] == pytest.approx(1.0)


def test_predict_unreadable_input(trained, tmp_path):
    root, cfg_path, run_dir, prep = trained
    code = main(["predict",
                 "--checkpoint", str(run_dir / "checkpoints" / "checkpoint_last.pt"),
                 "--input", str(tmp_path / "ghost.png"),
                 "--categories", "circle"])
    assert code == 2


def test_help_lists_ablation_flags(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    for flag in ("--no-meta-net", "--no-layer-norm", "--no-codebook", "--no-mixup",
                 "--no-sketch2vec", "--prompt-depth", "--context-tokens"):
        assert flag in out


def test_unknown_flag_nonzero_exit(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--frobnicate"])
    assert exc.value.code != 0


def test_unknown_config_key_rejected(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"adapter": "toy", "frobnicate": 1}))
    code = main(["prepare-data", "--config", str(bad)])
    assert code == 2
    assert "frobnicate" in capsys.readouterr().err
