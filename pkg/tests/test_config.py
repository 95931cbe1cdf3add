import pytest

from memeclf.config import RunConfig, load_config, save_config


class TestRunConfig:
    def test_defaults_load_without_file(self):
        cfg = load_config(None)
        assert cfg.seed == 0
        assert cfg.model.d_h == 64
        assert cfg.provider.kind == "synthetic"

    def test_yaml_round_trip_lossless(self, tmp_path):
        cfg = load_config(None)
        cfg.seed = 17
        cfg.paths.train = "elsewhere/train.jsonl"
        cfg.train.epochs = 3
        path = tmp_path / "cfg.yaml"
        save_config(cfg, path)
        reloaded = load_config(path)
        assert reloaded == cfg
        assert reloaded.config_hash() == cfg.config_hash()

    def test_flag_overrides_take_precedence(self, tmp_path):
        path = tmp_path / "cfg.yaml"
        path.write_text("seed: 3\nout_dir: from_file\n", encoding="utf-8")
        cfg = load_config(path, seed=9, out_dir="from_flag")
        assert cfg.seed == 9
        assert cfg.out_dir == "from_flag"

    def test_partial_file_merges_with_defaults(self, tmp_path):
        path = tmp_path / "cfg.yaml"
        path.write_text("model:\n  d_h: 16\n", encoding="utf-8")
        cfg = load_config(path)
        assert cfg.model.d_h == 16
        assert cfg.model.n_l == 2  # untouched default

    def test_unknown_keys_rejected(self, tmp_path):
        path = tmp_path / "cfg.yaml"
        path.write_text("bogus_key: 1\n", encoding="utf-8")
        with pytest.raises(ValueError, match="bogus_key"):
            load_config(path)

    def test_hash_differs_when_config_differs(self):
        a, b = RunConfig(), RunConfig(seed=1)
        assert a.config_hash() != b.config_hash()
