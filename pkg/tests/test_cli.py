import logging

import pytest

from wpos import cli
from wpos.config import CONDITIONS


def write_config(tmp_path):
    path = tmp_path / "tiny.conf"
    path.write_text(
        "schema_version 1\n"
        "experiment snr_db=15 scenario_seeds=1 d_train=240 d_test=40 f_grid=3:4 repeats=1 "
        "calibration_samples=200 models=toa-rss\n"
        "training epochs=1 batch_size=64\n"
        "selection neighbors=2\n"
    )
    return path


def test_flags_override_config(tmp_path):
    args = cli.build_parser().parse_args(
        ["train", "--config", str(write_config(tmp_path)), "--seed", "9", "--out", "elsewhere",
         "--repeats", "2", "--nlos", "--model", "pnn", "--model", "pnn", "--no-deterministic"]
    )
    cfg = cli.resolve_config(args)

    assert cfg.seed == 9
    assert cfg.out == "elsewhere"
    assert cfg.experiment.repeats == 2
    assert cfg.experiment.conditions == (CONDITIONS[1],)
    assert cfg.experiment.models == ("pnn",)
    assert cfg.experiment.deterministic is False


def test_unknown_model_is_rejected():
    with pytest.raises(SystemExit):
        cli.build_parser().parse_args(["train", "--model", "svm"])


def test_table1_prints_selection(capsys):
    assert cli.main(["table1"]) == 0

    assert capsys.readouterr().out.strip().endswith("F* = 5")


def test_pipeline(tmp_path, capsys):
    common = ["--config", str(write_config(tmp_path)), "--out", str(tmp_path / "out")]

    assert cli.main(["generate", *common]) == 0
    assert cli.main(["select-f", *common]) == 0
    assert "F*=" in capsys.readouterr().out
    assert cli.main(["train", *common]) == 0
    assert cli.main(["eval", *common]) == 0
    assert cli.main(["sanity", *common]) == 0
    assert "chance 12.50%" in capsys.readouterr().out
    assert cli.main(["report", *common]) == 0
    assert "toa-rss" in capsys.readouterr().out
    assert (tmp_path / "out" / "eval.csv").exists()


def test_missing_data_returns_error(tmp_path, caplog):
    with caplog.at_level(logging.ERROR, logger="wpos"):
        code = cli.main(["train", "--config", str(write_config(tmp_path)), "--out", str(tmp_path / "nothing")])

    assert code == 2
    assert "run generate first" in caplog.text


def test_bad_config_returns_error(tmp_path):
    path = tmp_path / "bad.conf"
    path.write_text("schema_version 1\nwidgets n=1\n")

    assert cli.main(["generate", "--config", str(path)]) == 2
