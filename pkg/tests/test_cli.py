"""End-to-end drives of the command-line front end."""

import os

import numpy as np
import pytest
import yaml

from powergnn.cli import main
from powergnn.gnn import FilterTaps, GnnConfig, save_checkpoint


def _write_config(path, outdir, m=4, iters=25, seed=0):
    doc = {
        "network": {"m": m, "seed": seed},
        "problem": {"sigma2": 5e-3, "P_max": m / 2.0, "p0": 1.0},
        "regnn": {"L": 2, "K": 3},
        "train": {"iters": iters, "batch": 2},
        "output": {"directory": str(outdir), "eval_every": 25,
                   "eval_samples": 8},
    }
    path.write_text(yaml.safe_dump(doc))
    return path


def _checkpoint(path):
    config = GnnConfig(layers=1, features=(1, 1), tap_lengths=(2,))
    save_checkpoint(FilterTaps.from_flat(config, np.array([3.0, 0.5])), path)
    return str(path)


def test_train_then_eval_pipeline(tmp_path, capsys):
    cfg = _write_config(tmp_path / "c.yaml", tmp_path / "run")
    assert main(["train", "--config", str(cfg), "--quiet"]) == 0
    assert sorted(os.listdir(tmp_path / "run")) == [
        "checkpoint.json", "run_header.yaml", "training.csv"]
    rc = main(["eval", "--config", str(cfg), "--quiet",
               "--checkpoint", str(tmp_path / "run" / "checkpoint.json"),
               "--samples", "6"])
    assert rc == 0
    lines = (tmp_path / "run" / "eval.csv").read_text().splitlines()
    assert len(lines) == 2 + 6
    assert capsys.readouterr().out == ""


def test_gen_network_and_external_topology_eval(tmp_path):
    cfg = _write_config(tmp_path / "c.yaml", tmp_path / "run")
    assert main(["gen-network", "--config", str(cfg), "--quiet"]) == 0
    net_path = tmp_path / "run" / "network.json"
    assert net_path.exists()
    rc = main(["eval", "--config", str(cfg), "--quiet",
               "--checkpoint", _checkpoint(tmp_path / "ck.json"),
               "--network", str(net_path), "--samples", "4"])
    assert rc == 0


def test_baseline_subcommand(tmp_path):
    cfg = _write_config(tmp_path / "c.yaml", tmp_path / "run")
    assert main(["baseline", "--config", str(cfg), "--quiet",
                 "--samples", "5"]) == 0
    lines = (tmp_path / "run" / "baseline.csv").read_text().splitlines()
    assert lines[0] == "draw,wmmse,equal,random"


def test_transfer_subcommand(tmp_path):
    cfg = _write_config(tmp_path / "c.yaml", tmp_path / "run")
    rc = main(["transfer", "--config", str(cfg), "--quiet",
               "--checkpoint", _checkpoint(tmp_path / "ck.json"),
               "--sizes", "5,6", "--networks-per-size", "1",
               "--samples", "3"])
    assert rc == 0
    body = (tmp_path / "run" / "transfer.csv").read_text().splitlines()[2:]
    assert {l.split(",")[0] for l in body} == {"5", "6"}


def test_invalid_config_exits_2_with_diagnostics(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({"network": {"m": 4, "oops": 1},
                                   "train": {"iters": -3}}))
    rc = main(["train", "--config", str(bad)])
    assert rc == 2
    err = capsys.readouterr().err
    assert "network.oops" in err
    assert "train.iters" in err


def test_missing_checkpoint_is_an_error(tmp_path, capsys):
    cfg = _write_config(tmp_path / "c.yaml", tmp_path / "run")
    rc = main(["eval", "--config", str(cfg), "--quiet",
               "--checkpoint", str(tmp_path / "absent.json")])
    assert rc == 1
    assert "error" in capsys.readouterr().err


def test_seed_override_changes_outputs(tmp_path):
    cfg = _write_config(tmp_path / "c.yaml", tmp_path / "a", iters=10)
    assert main(["train", "--config", str(cfg), "--quiet"]) == 0
    assert main(["train", "--config", str(cfg), "--quiet", "--seed", "7",
                 "--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "training.csv").read_text()
    b = (tmp_path / "b" / "training.csv").read_text()
    assert a != b
    assert "# seed=7" in b


def test_oracle_check_subcommand_exit_codes():
    assert main(["oracle-check", "--m", "5", "--instances", "3",
                 "--quiet"]) == 0
    assert main(["oracle-check", "--m", "5", "--instances", "2",
                 "--inject-sign-flip", "--quiet"]) == 1
