import csv
import json

import pytest

from amclab import cli, dataset


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def tiny(tmp_path_factory):
    """Two-class, one-SNR T=1024 dataset small enough to train every preset for an epoch."""
    root = tmp_path_factory.mktemp("tiny")
    code = cli.main([
        "synth", "--out", str(root), "--seed", "3",
        "--set", "schemes=BPSK,FM", "--set", "snr_grid=20",
        "--set", "frames_per_class_per_snr=4", "--set", "frame_len=1024",
    ])
    assert code == 0
    return root


class TestParams:
    @pytest.mark.parametrize("model, count", [("1110", "202880"), ("xvector-base", "110680"), ("resnet", "165144")])
    def test_single(self, capsys, model, count):
        code, out, _ = run(capsys, "params", "--model", model)
        assert code == 0 and out.strip() == count

    def test_listing(self, capsys):
        code, out, _ = run(capsys, "params")
        table = dict(line.split("\t") for line in out.strip().splitlines())
        assert code == 0 and len(table) == 20
        assert table["1111"] == "249968" and table["more-filters"] == "149168"

    def test_unknown_preset(self, capsys):
        code, _, err = run(capsys, "params", "--model", "9999")
        assert code == 2 and "unknown model preset" in err


class TestUsage:
    def test_unknown_subcommand(self, capsys):
        code, _, err = run(capsys, "frobnicate")
        assert code == 2 and "usage" in err

    def test_no_subcommand(self, capsys):
        assert run(capsys)[0] == 2

    def test_missing_dataset(self, capsys, tmp_path):
        code, _, err = run(capsys, "train", "--out", tmp_path, "--dataset", tmp_path / "nope.amcd")
        assert code == 2 and "not found" in err

    def test_dataset_required(self, capsys, tmp_path):
        assert run(capsys, "eval", "--out", tmp_path, "--checkpoint", tmp_path / "x.amcw")[0] == 2

    def test_unknown_config_key(self, capsys, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("seed = 1\nlearning_speed = 3\n")
        code, _, err = run(capsys, "params", "--config", cfg)
        assert code == 2 and "learning_speed" in err

    def test_malformed_config(self, capsys, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("just words\n")
        assert run(capsys, "params", "--config", cfg)[0] == 2

    def test_bad_value(self, capsys):
        assert run(capsys, "params", "--set", "seed=abc")[0] == 2

    def test_corrupt_dataset(self, capsys, tmp_path):
        bad = tmp_path / "bad.amcd"
        bad.write_bytes(b"AMCD\x01")
        assert run(capsys, "train", "--out", tmp_path, "--dataset", bad)[0] == 2


class TestConfig:
    def test_flags_override_file(self, tmp_path):
        file_values = cli.parse_config_file(_write(tmp_path / "c.cfg", "seed = 4  # comment\nmodel = 0000\n"))
        cfg = cli.resolve_config(file_values, {"seed": "9"})
        assert cfg["seed"] == 9 and cfg["model"] == "0000"
        assert cfg["lr0"] == 1e-4 and cfg["batch_size"] == 32

    def test_list_values(self):
        cfg = cli.resolve_config({"snr_grid": "-4, 0 ,4", "schemes": "BPSK QPSK"}, {})
        assert cfg["snr_grid"] == [-4, 0, 4] and cfg["schemes"] == ["BPSK", "QPSK"]


def _write(path, text):
    path.write_text(text)
    return str(path)


class TestPipeline:
    def test_synth_writes_dataset_and_run_json(self, tiny):
        ds = dataset.read_dataset(tiny / "dataset.amcd")
        assert len(ds) == 8 and ds.frame_len == 1024
        run_json = json.loads((tiny / "run.json").read_text())
        assert run_json["command"] == "synth" and run_json["config"]["seed"] == 3

    def test_rerun_from_run_json_is_identical(self, tiny, tmp_path):
        code = cli.main(["synth", "--config", str(tiny / "run.json"), "--out", str(tmp_path)])
        assert code == 0
        assert (tmp_path / "dataset.amcd").read_bytes() == (tiny / "dataset.amcd").read_bytes()

    def test_train_eval_burst(self, tiny, tmp_path, capsys):
        data = tiny / "dataset.amcd"
        common = ["--dataset", data, "--model", "0000", "--set", "test_fraction=0.5", "--set", "n_classes=2"]
        code, out, err = run(capsys, "train", "--out", tmp_path / "t", "--max-epochs", 2, *common)
        assert code == 0, err
        ckpt = tmp_path / "t" / "best.amcw"
        assert ckpt.exists() and (tmp_path / "t" / "history.csv").exists()

        code, _, err = run(capsys, "eval", "--out", tmp_path / "e", "--checkpoint", ckpt, *common)
        assert code == 0, err
        for name in ("snr_accuracy", "confusion", "topk", "ablation_summary"):
            assert (tmp_path / "e" / f"{name}.csv").exists()

        code, out, err = run(capsys, "burst-sweep", "--out", tmp_path / "b", "--checkpoint", ckpt,
                             "--set", "lengths=1024,64,16", *common)
        assert code == 0, err
        with open(tmp_path / "b" / "burst_sweep.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert {r["length"] for r in rows} == {"1024", "64", "16"}
        assert json.loads((tmp_path / "b" / "run.json").read_text())["command"] == "burst-sweep"

    def test_eval_json_format(self, tiny, tmp_path, capsys):
        common = ["--dataset", tiny / "dataset.amcd", "--model", "0000", "--set", "test_fraction=0.5", "--set", "n_classes=2"]
        assert run(capsys, "train", "--out", tmp_path / "t", "--max-epochs", 1, *common)[0] == 0
        code, _, err = run(capsys, "eval", "--out", tmp_path / "e", "--checkpoint", tmp_path / "t" / "best.amcw",
                           "--format", "json", *common)
        assert code == 0, err
        assert json.loads((tmp_path / "e" / "topk.json").read_text())["schema"] == "topk"

    def test_checkpoint_model_mismatch(self, tiny, tmp_path, capsys):
        common = ["--dataset", tiny / "dataset.amcd", "--set", "test_fraction=0.5", "--set", "n_classes=2"]
        assert run(capsys, "train", "--out", tmp_path / "t", "--max-epochs", 1, "--model", "0000", *common)[0] == 0
        code, _, _ = run(capsys, "eval", "--out", tmp_path / "e", "--model", "1111",
                         "--checkpoint", tmp_path / "t" / "best.amcw", *common)
        assert code == 2

    def test_ablate_eighteen_rows(self, tiny, tmp_path, capsys):
        code, _, err = run(capsys, "ablate", "--out", tmp_path, "--dataset", tiny / "dataset.amcd",
                           "--max-epochs", 1, "--set", "test_fraction=0.5")
        assert code == 0, err
        with open(tmp_path / "ablation_summary.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 18
        assert {r["model"] for r in rows} == set(cli.ABLATION_MODELS)
        counts = {r["model"]: int(r["params"]) for r in rows}
        assert counts["1110"] == 202880 and counts["resnet"] == 165144
        with open(tmp_path / "snr_accuracy.csv") as fh:
            assert len(list(csv.DictReader(fh))) == 18  # one SNR in this dataset
        mcnemar = json.loads((tmp_path / "mcnemar_vs_0000.json").read_text())
        assert mcnemar["0000"]["statistic"] == 0.0
