import numpy as np
import pytest

from mvmlab.config import DEFAULTS, ExperimentConfig, parse_measure
from mvmlab.measure import QuantileMeasure


class TestMeasureSpecs:
    def test_gaussian(self):
        mu = parse_measure("gaussian(2)", 512)
        assert mu.variance() == pytest.approx(4.0, rel=0.01)

    def test_uniform(self):
        mu = parse_measure("uniform(-2, 2)", 512)
        assert mu.support == pytest.approx((-2.0, 2.0), abs=0.01)

    def test_two_point_default(self):
        assert np.all(np.abs(parse_measure("two_point", 16).values) == 1.0)

    def test_truncated(self):
        mu = parse_measure("truncated_gaussian(1, 3)", 512)
        assert mu.support[1] < 3.0

    def test_from_csv_relative(self, tmp_path):
        QuantileMeasure.uniform(-1, 1, 32).to_csv(tmp_path / "m.csv")
        mu = parse_measure("from_csv(m.csv)", 8, tmp_path)
        assert mu.M == 32

    @pytest.mark.parametrize("spec", ["cauchy(1)", "gaussian(", "2 + 2"])
    def test_bad_specs(self, spec):
        with pytest.raises(ValueError):
            parse_measure(spec, 8)

    def test_missing_csv(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            parse_measure("from_csv(nope.csv)", 8, tmp_path)


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig.load()
        assert cfg.seed == int(DEFAULTS["general"]["seed"])
        assert cfg.floats("opt1", "p") == [1.0, 2.0]
        assert cfg.names("opt1", "weights") == ["one", "linear", "bump"]

    def test_file_and_overrides(self, tmp_path):
        f = tmp_path / "c.ini"
        f.write_text("[general]\nseed = 11\n[opt1]\nn_paths = 5\n")
        cfg = ExperimentConfig.load(f, {"general": {"seed": "12", "threads": None}})
        assert cfg.seed == 12 and cfg.int("opt1", "n_paths") == 5

    def test_digest_ignores_out_and_threads(self):
        a = ExperimentConfig.load(overrides={"general": {"out": "x", "threads": "4"}})
        b = ExperimentConfig.load(overrides={"general": {"out": "y", "threads": "1"}})
        c = ExperimentConfig.load(overrides={"general": {"seed": "1"}})
        assert a.digest() == b.digest() != c.digest()

    @pytest.mark.parametrize("text", [
        "[opt1]\nn_paths = 0\n",
        "[speed]\nn_steps = many\n",
        "[general]\nseed = -3\n",
        "[extra]\nkey = 1\n",
        "[opt2]\nF = cube\n",
        "[barrier]\nmeasure = from_csv(missing.csv)\n",
    ])
    def test_invalid(self, tmp_path, text):
        f = tmp_path / "bad.ini"
        f.write_text(text)
        with pytest.raises((ValueError, FileNotFoundError)):
            ExperimentConfig.load(f)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            ExperimentConfig.load(tmp_path / "none.ini")
