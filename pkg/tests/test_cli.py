import subprocess
import sys

import pytest

from shell_obstacle_lab.cli import build_parser, main
from shell_obstacle_lab.harness import load_field_dump


def _summary(text):
    return dict(line.split("=", 1) for line in text.strip().splitlines())


def test_help_lists_subcommands(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    for cmd in ("geometry-check", "solve2d", "solve3d", "sweep-eps", "sweep-kappa"):
        assert cmd in out


def test_every_subcommand_has_help():
    parser = build_parser()
    for cmd in ("geometry-check", "solve2d", "solve3d", "sweep-eps", "sweep-kappa"):
        with pytest.raises(SystemExit) as exc:
            parser.parse_args([cmd, "--help"])
        assert exc.value.code == 0


def test_geometry_check_stdout(capsys):
    assert main(["geometry-check", "--eps", "0.1,0.01", "--samples", "5"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "quantity,eps,sup_remainder,fitted_slope"
    assert len(lines) == 1 + 4 * 2


def test_solve2d_writes_dump(tmp_path, capsys):
    out = tmp_path / "z.txt"
    rc = main(["solve2d", "--mesh", "4x4", "--q", "0,0,1", "--offset", "0,0,0.01", "--load", "0,0,-50", "--out", str(out)])
    assert rc == 0
    s = _summary(capsys.readouterr().out)
    assert float(s["violation_norm"]) > 0
    assert float(s["oracle_gap"]) < 0.05
    assert load_field_dump(out).mesh.n1 == 4


def test_solve3d_summary(tmp_path, capsys):
    out = tmp_path / "u.txt"
    rc = main(["solve3d", "--mesh", "2x2x2", "--eps", "0.04", "--q", "0,0,1", "--offset", "0,0,1", "--out", str(out)])
    assert rc == 0
    s = _summary(capsys.readouterr().out)
    assert float(s["kappa"]) == pytest.approx(0.2)
    assert float(s["violation_norm"]) == 0.0
    assert load_field_dump(out).mesh.n3 == 2


def test_sweeps_from_config(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("chart = plane:lengths=6x6\nmesh2d = 4x4\nmesh3d = 4x4x2\nload = 0,0,-0.25\noffset = 0,0,0.3\neps_list = 0.2,0.1\n")
    assert main(["sweep-eps", str(cfg), "--out-dir", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "eps_sweep.csv").exists()
    assert main(["sweep-kappa", str(cfg), "--kappas", "1e-2,1e-3", "--out-dir", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "kappa_sweep.csv").read_text().count("\n") == 3
    capsys.readouterr()


def test_errors_exit_with_code_two(tmp_path, capsys):
    assert main(["sweep-eps", str(tmp_path / "nope.cfg")]) == 2
    assert "nope.cfg" in capsys.readouterr().err
    assert main(["solve2d", "--mesh", "2x2", "--q", "0,0,1", "--offset", "0,0,-1"]) == 2
    assert "violates" in capsys.readouterr().err
    assert main(["solve3d", "--chart", "cylinder", "--mesh", "2x2x2", "--eps", "3"]) == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "shell_obstacle_lab", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "solve3d" in res.stdout
