import json
from pathlib import Path

import pytest
import yaml

from memeclf.cli import main

PIPELINE = [
    ["enrich", "--split", "train"],
    ["enrich", "--split", "dev"],
    ["build-inputs", "--split", "train"],
    ["build-inputs", "--split", "dev"],
    ["pretrain-itm"],
    ["train"],
    ["predict", "--split", "dev"],
]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Tiny corpus plus a fast config, shared by the CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    cfg_path = root / "cfg.yaml"
    cfg_path.write_text(yaml.safe_dump({
        "seed": 11,
        "out_dir": str(root / "run"),
        "paths": {
            "train": str(root / "corpus/train.jsonl"),
            "dev": str(root / "corpus/dev.jsonl"),
            "fixtures": str(root / "corpus/fixtures.jsonl"),
            "cache": str(root / "corpus/cache"),
        },
        "train": {"epochs": 1, "itm_steps": 5},
    }), encoding="utf-8")
    assert main(["--config", str(cfg_path), "make-corpus",
                 "--corpus-dir", str(root / "corpus"), "--n", "60"]) == 0
    return root, cfg_path


def run(cfg_path, *argv) -> int:
    return main(["--config", str(cfg_path), *argv])


class TestStageOrdering:
    def test_missing_prerequisite_exits_2(self, workspace, capsys):
        root, cfg_path = workspace
        assert run(cfg_path, "train") == 2
        assert "inputs" in capsys.readouterr().err

    def test_predict_without_model_exits_2(self, workspace):
        root, cfg_path = workspace
        assert run(cfg_path, "predict", "--split", "dev") == 2


class TestFullPipeline:
    def test_all_stages_succeed(self, workspace):
        root, cfg_path = workspace
        for argv in PIPELINE:
            assert run(cfg_path, *argv) == 0, argv
        assert (root / "run/predictions_dev.csv").exists()

    def test_ensemble_and_evaluate(self, workspace):
        root, cfg_path = workspace
        csv = root / "run/predictions_dev.csv"
        assert run(cfg_path, "ensemble", str(csv), str(csv),
                   "--method", "rank_mean") == 0
        assert run(cfg_path, "evaluate",
                   "--predictions", str(root / "run/ensemble.csv"),
                   "--split", "dev") == 0
        metrics = json.loads((root / "run/metrics_dev.json").read_text())
        assert 0.0 <= metrics["auroc"] <= 1.0
        assert 0.0 <= metrics["accuracy"] <= 1.0

    def test_warm_cache_reports_zero_external_calls(self, workspace, capsys):
        root, cfg_path = workspace
        assert run(cfg_path, "enrich", "--split", "train") == 0
        out = capsys.readouterr().out
        assert "(0 external calls)" in out

    def test_manifests_list_every_output(self, workspace):
        root, cfg_path = workspace
        manifests = list((root / "run").glob("manifest_*.json"))
        assert manifests
        for path in manifests:
            manifest = json.loads(path.read_text())
            assert {"stage", "config_hash", "seed", "inputs",
                    "outputs"} <= set(manifest)
            for produced in manifest["outputs"]:
                assert Path(produced).exists(), (path.name, produced)

    def test_use_tags_false_strips_tag_segments(self, workspace, tmp_path):
        import numpy as np
        root, cfg_path = workspace
        ablated = tmp_path / "ablated.yaml"
        data = yaml.safe_load(cfg_path.read_text())
        data["out_dir"] = str(tmp_path / "run")
        data["train"]["use_tags"] = False
        ablated.write_text(yaml.safe_dump(data), encoding="utf-8")
        # reuse the already-enriched split from the shared run directory
        (tmp_path / "run").mkdir()
        for name in ("enriched_train.jsonl", "enriched_dev.jsonl"):
            (tmp_path / "run" / name).write_bytes(
                (root / "run" / name).read_bytes())
        assert run(ablated, "build-inputs", "--split", "dev") == 0
        arrays = np.load(tmp_path / "run/inputs_dev.npz")
        segments = arrays["segment_ids"][arrays["attention_mask"] == 1]
        assert not np.isin(segments, [1, 2]).any()

    def test_enriched_rerun_is_idempotent(self, workspace):
        root, cfg_path = workspace
        target = root / "run/enriched_train.jsonl"
        first = target.read_bytes()
        assert run(cfg_path, "enrich", "--split", "train") == 0
        assert target.read_bytes() == first


class TestValidationFailures:
    def test_bad_config_exits_1(self, tmp_path, capsys):
        cfg = tmp_path / "bad.yaml"
        cfg.write_text("no_such_section: {}\n", encoding="utf-8")
        assert main(["--config", str(cfg), "pretrain-itm"]) == 1

    def test_unknown_provider_kind_exits_1(self, tmp_path, workspace):
        root, _ = workspace
        cfg = tmp_path / "cfg.yaml"
        cfg.write_text(yaml.safe_dump({
            "out_dir": str(tmp_path / "run"),
            "paths": {"train": str(root / "corpus/train.jsonl"),
                      "fixtures": str(root / "corpus/fixtures.jsonl"),
                      "cache": str(tmp_path / "cache")},
            "provider": {"kind": "martian"},
        }), encoding="utf-8")
        assert main(["--config", str(cfg), "enrich", "--split", "train"]) == 1
