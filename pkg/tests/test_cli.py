import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from mvmlab.cli import main
from mvmlab.io import read_csv

TINY = Path(__file__).with_name("tiny.ini")


def run(args):
    return subprocess.run([sys.executable, "-m", "mvmlab.cli", *args], capture_output=True, text=True)


def test_unknown_subcommand_exits_with_usage():
    out = run(["frobnicate"])
    assert out.returncode != 0
    assert "usage:" in out.stderr


def test_invalid_config_exits_non_zero(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[opt1]\nn_paths = -1\n")
    out = run(["opt1", "--config", str(bad), "--out", str(tmp_path / "o")])
    assert out.returncode != 0
    assert "must be positive" in out.stderr


def test_bad_threads(tmp_path):
    assert main(["appendix", "--threads", "0", "--out", str(tmp_path)]) != 0


def test_appendix_defaults(tmp_path):
    assert main(["appendix", "--config", str(TINY), "--out", str(tmp_path)]) == 0
    tv = read_csv_text(tmp_path / "tv_bound.csv")
    assert tv and all(row[-1] == "true" for row in tv)
    manifest = (tmp_path / "manifest.txt").read_text()
    assert "config_sha256:" in manifest and "seed: 7" in manifest
    assert (tmp_path / "hitting_densities.svg").exists()


def read_csv_text(path):
    lines = path.read_bytes().decode().split("\r\n")[1:]
    return [ln.split(",") for ln in lines if ln]


def test_barrier_gaussian(tmp_path):
    cfg = tmp_path / "g.ini"
    cfg.write_text(TINY.read_text().replace("dt = 0.01\n", "dt = 0.005\nmeasure = gaussian(1)\n", 1))
    assert main(["barrier", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    t = read_csv(tmp_path / "barrier.csv")
    x, r = np.array(t.column("x")), np.array(t.column("r"))
    sel = np.abs(x) <= 1.5
    assert np.max(np.abs(r[sel] - 1.0)) <= 0.02


def test_all_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["all", "--config", str(TINY), "--out", str(a)]) == 0
    assert main(["all", "--config", str(TINY), "--out", str(b), "--threads", "2"]) == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    assert sum(n.endswith(".csv") for n in names) >= 20
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes(), n


def test_seed_flag_changes_output(tmp_path):
    assert main(["simulate", "--config", str(TINY), "--out", str(tmp_path / "s1")]) == 0
    assert main(["simulate", "--config", str(TINY), "--seed", "8", "--out", str(tmp_path / "s2")]) == 0
    assert (tmp_path / "s1" / "path.csv").read_bytes() != (tmp_path / "s2" / "path.csv").read_bytes()
    assert "seed: 8" in (tmp_path / "s2" / "manifest.txt").read_text()


@pytest.mark.parametrize("sub", ["speed", "opt2", "opt1", "wasserstein"])
def test_subcommands_write_plots(tmp_path, sub):
    assert main([sub, "--config", str(TINY), "--out", str(tmp_path)]) == 0
    assert any(p.suffix == ".svg" for p in tmp_path.iterdir())
    assert any(p.suffix == ".csv" for p in tmp_path.iterdir())
