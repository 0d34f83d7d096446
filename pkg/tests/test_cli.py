from __future__ import annotations

import json

import pytest

from lham.cli import build_parser, main
from lham.ham import LiftedSystem


def test_run_prints_errors(capsys):
    assert main(["run", "--preset", "mhd-paper", "--engine", "classical-expm"]) == 0
    out = capsys.readouterr().out
    assert "mhd  J=1  order=1" in out
    assert "combined_rel_l2" in out


def test_run_json(capsys):
    assert main(["run", "--preset", "mhd-paper", "--engine", "classical-expm",
                 "--reference", "false", "--json"]) == 0
    out = capsys.readouterr().out
    report = json.loads(out[out.index("{"):])
    assert report["config"]["engine"] == "classical-expm"


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "c.txt"
    cfg.write_text("preset = mhd-paper\norder = 0\nengine = classical-expm\n")
    assert main(["run", "--config", str(cfg), "--order", "1", "--reference", "no"]) == 0
    assert "order=1" in capsys.readouterr().out


def test_sweep(tmp_path, capsys):
    assert main(["sweep", "--preset", "mhd-paper", "--engine", "classical-expm",
                 "--max-order", "1", "--output-dir", str(tmp_path)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("order 0:") and lines[1].startswith("order 1:")
    assert (tmp_path / "errors_vs_order.csv").exists()


def test_dump_system(tmp_path, capsys):
    path = tmp_path / "sys.json"
    assert main(["dump-system", "--preset", "mhd-paper", "-o", str(path)]) == 0
    system = LiftedSystem.from_json(json.loads(path.read_text()))
    assert system.dim == 41
    assert "dim 41" in capsys.readouterr().out


def test_check_passes(capsys):
    assert main(["check", "--preset", "mhd-paper"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "invariants hold" in out


def test_bad_config_exit_code(capsys):
    assert main(["run", "--preset", "mhd-paper", "--n-steps", "0"]) == 2
    assert "n_steps" in capsys.readouterr().err
    assert main(["run", "--order", "x"]) == 2


def test_parser_requires_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])
