import warnings

import pytest

from graphpool import harness
from graphpool.cli import build_parser, load_config, main


class TestConfigFile:
    def test_key_value_parsing(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("# comment\nlr = 0.001\nmax-epochs = 7\npool = topk\n")
        values = load_config(str(path))
        assert values == {"lr": 0.001, "max_epochs": 7, "pool": "topk"}

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("lrr = 0.001\n")
        with pytest.raises(ValueError, match="unknown option"):
            load_config(str(path))

    def test_malformed_line_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("just words\n")
        with pytest.raises(ValueError, match="key=value"):
            load_config(str(path))


class TestTrainCommand:
    def _run(self, tmp_path, extra=(), config_text=None):
        out = tmp_path / "results.json"
        argv = [
            "train", "--dataset", "synthetic:cycles_vs_paths",
            "--synthetic-size", "24", "--runs", "1", "--max-epochs", "2",
            "--patience", "2", "--batch-size", "8", "--hidden", "8",
            "--out", str(out), *extra,
        ]
        if config_text is not None:
            cfg_path = tmp_path / "run.cfg"
            cfg_path.write_text(config_text)
            argv += ["--config", str(cfg_path)]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            code = main(argv)
        return code, out

    def test_train_writes_results_and_csv(self, tmp_path, capsys):
        code, out = self._run(tmp_path)
        assert code == 0
        records = harness.load_records(out)
        assert len(records) == 1
        assert out.with_suffix(".csv").exists()
        assert "mean_accuracy" in capsys.readouterr().out

    def test_config_file_supplies_flags(self, tmp_path):
        code, out = self._run(tmp_path, config_text="pool = topk\nseed = 3\n")
        assert code == 0
        rec = harness.load_records(out)[0]
        assert rec.model.pool == "topk"
        assert rec.run_seed == 3

    def test_cli_flag_overrides_config(self, tmp_path):
        code, out = self._run(tmp_path, extra=["--pool", "sag"],
                              config_text="pool = topk\n")
        assert code == 0
        assert harness.load_records(out)[0].model.pool == "sag"

    def test_explicit_default_valued_flag_beats_config(self, tmp_path):
        code, out = self._run(tmp_path, extra=["--pool", "lcpool"],
                              config_text="pool = topk\n")
        assert code == 0
        assert harness.load_records(out)[0].model.pool == "lcpool"

    def test_rank_round_trip(self, tmp_path, capsys):
        _, out = self._run(tmp_path)
        ranking = tmp_path / "ranking.csv"
        assert main(["rank", "--in", str(out), "--out", str(ranking)]) == 0
        text = ranking.read_text()
        assert text.splitlines()[0].startswith("backbone,")
        assert "1.0000" in text

    def test_synthetic_kind_validated(self, tmp_path):
        with pytest.raises(SystemExit):
            main(["train", "--dataset", "synthetic:bogus", "--out",
                  str(tmp_path / "r.json")])

    def test_dataset_required(self, tmp_path):
        with pytest.raises(SystemExit):
            main(["train", "--out", str(tmp_path / "r.json")])


def test_parser_pool_choices_use_hyphens():
    parser = build_parser()
    args = parser.parse_args(["train", "--dataset", "x", "--pool", "lcpool-star"])
    assert args.pool == "lcpool-star"


def test_selftest_command_passes(capsys):
    assert main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 8 and "FAIL" not in out
