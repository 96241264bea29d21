import json

import pytest

from imbench.cli import main
from imbench.dataset import (GeneratorConfig, generate_synthetic,
                             synthetic_schema, write_csv)

GEN_FLAGS = ["--data", "synthetic", "--n-normal", "300", "--n-failure", "30",
             "--overlap", "0.5", "--gen-seed", "7"]


def run_cli(args):
    return main(args)


class TestListTechniques:
    def test_prints_all(self, capsys):
        assert run_cli(["list-techniques"]) == 0
        out = capsys.readouterr().out
        assert "baseline" in out
        assert "pre:smote" in out
        assert "post:threshold" in out


class TestRun:
    def test_small_suite(self, tmp_path, capsys):
        code = run_cli(["run", *GEN_FLAGS, "--techniques",
                        "baseline,pre:rus,post:threshold", "--runs", "2",
                        "--seed", "3", "--trees", "10", "--out",
                        str(tmp_path), "--no-timing"])
        assert code == 0
        assert (tmp_path / "report.csv").exists()
        assert (tmp_path / "fig2.json").exists()
        assert (tmp_path / "fig3.json").exists()
        assert (tmp_path / "fig4.json").exists()
        out = capsys.readouterr().out
        assert "0.7659" in out

    def test_no_timing_byte_identical(self, tmp_path):
        args = ["run", *GEN_FLAGS, "--techniques",
                "baseline,pre:rus,in:brf,post:threshold", "--runs", "2",
                "--seed", "5", "--trees", "10", "--no-timing"]
        out1 = tmp_path / "a"
        out2 = tmp_path / "b"
        assert run_cli([*args, "--out", str(out1)]) == 0
        assert run_cli([*args, "--out", str(out2)]) == 0
        for name in ("report.csv", "fig2.json", "fig3.json", "fig4.json"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_bad_technique_exit_code(self, tmp_path):
        code = run_cli(["run", *GEN_FLAGS, "--techniques", "pre:bogus",
                        "--runs", "2", "--out", str(tmp_path)])
        assert code == 2

    def test_bad_split_exit_code(self, tmp_path):
        code = run_cli(["run", *GEN_FLAGS, "--split", "0.5,0.5,0.1",
                        "--runs", "2", "--out", str(tmp_path)])
        assert code == 2

    def test_missing_data_exit_code(self, tmp_path):
        schema_path = tmp_path / "schema.json"
        synthetic_schema().to_json(schema_path)
        code = run_cli(["run", "--data", str(tmp_path / "absent.csv"),
                        "--schema", str(schema_path), "--runs", "2",
                        "--out", str(tmp_path)])
        assert code == 3

    def test_gen_config_file(self, tmp_path):
        cfg_path = tmp_path / "gen.json"
        cfg_path.write_text('{"n_normal": 250, "n_failure": 25, '
                            '"overlap": 0.4, "seed": 3}')
        code = run_cli(["run", "--data", "synthetic", "--gen-config",
                        str(cfg_path), "--techniques", "baseline,pre:rus",
                        "--runs", "2", "--trees", "10", "--no-timing",
                        "--out", str(tmp_path / "out")])
        assert code == 0


class TestTrainEval:
    @pytest.mark.parametrize("technique", ["baseline", "post:threshold",
                                           "in:bagging?members=2",
                                           "in:meta"])
    def test_round_trip(self, technique, tmp_path, capsys):
        model_path = tmp_path / "model.json"
        code = run_cli(["train", *GEN_FLAGS, "--technique", technique,
                        "--trees", "8", "--seed", "2", "--out",
                        str(model_path)])
        assert code == 0
        doc = json.loads(model_path.read_text())
        assert doc["format"] == "imbench-model"
        assert doc["technique"] == technique

        metrics_path = tmp_path / "metrics.json"
        code = run_cli(["eval", *GEN_FLAGS, "--model", str(model_path),
                        "--out", str(metrics_path)])
        assert code == 0
        metrics = json.loads(metrics_path.read_text())
        assert 0.0 <= metrics["f1"] <= 1.0
        assert metrics["n_rows"] == 330

    def test_eval_from_csv(self, tmp_path):
        data = generate_synthetic(GeneratorConfig(n_normal=200, n_failure=20,
                                                  seed=9))
        csv_path = tmp_path / "data.csv"
        write_csv(data, csv_path)
        schema_path = tmp_path / "schema.json"
        synthetic_schema().to_json(schema_path)

        model_path = tmp_path / "model.json"
        assert run_cli(["train", *GEN_FLAGS, "--technique", "baseline",
                        "--trees", "8", "--out", str(model_path)]) == 0
        assert run_cli(["eval", "--data", str(csv_path), "--schema",
                        str(schema_path), "--model", str(model_path)]) == 0
