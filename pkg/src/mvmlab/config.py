"""Experiment configuration read from INI files."""

from __future__ import annotations

import configparser
import hashlib
import re
from dataclasses import dataclass
from pathlib import Path

from .measure import QuantileMeasure

DEFAULTS: dict[str, dict[str, str]] = {
    "general": {"seed": "20240601", "M": "512", "threads": "1", "out": "results"},
    "barrier": {
        "measure": "truncated_gaussian(1, 4)",
        "dt": "0.005",
        "margin": "0.1",
        "ks_measure": "uniform(-1, 1)",
        "ks_dt": "1e-4",
        "ks_paths": "20000",
    },
    "simulate": {"measure": "uniform(-1, 1)", "n_steps": "4000", "dt": "1e-4", "decimate": "40", "max_levels": "32"},
    "wasserstein": {
        "bass_measure": "gaussian(2)",
        "bass_paths": "20000",
        "root_measure": "uniform(-1, 1)",
        "root_paths": "2000",
        "root_dt": "2.5e-4",
        "checkpoints": "0, 0.1, 0.2, 0.3, 0.4",
        "lm_pairs": "200",
        "branch_outer": "100",
        "branch_inner": "20",
    },
    "opt1": {"measure": "uniform(-2, 2)", "n_paths": "500", "p": "1, 2", "weights": "one, linear, bump"},
    "speed": {"measure": "gaussian(2)", "n_paths": "50", "n_steps": "1000", "ladder": "4", "coinflip_eps": "0.05"},
    "opt2": {"measure": "uniform(-1, 1)", "n_paths": "2000", "dt": "1e-4", "F": "square"},
    "appendix": {"a": "1.0", "K": "20", "mc_paths": "20000", "mc_dt": "1e-4"},
}

_SPEC = re.compile(r"^\s*([a-z_]+)\s*(?:\((.*)\))?\s*$")


def parse_measure(spec: str, M: int, base: Path | None = None) -> QuantileMeasure:
    """Build a measure from ``gaussian(s)``, ``uniform(a, b)``, ``two_point(a)``,
    ``truncated_gaussian(s, L)`` or ``from_csv(path)``."""
    m = _SPEC.match(spec)
    if not m:
        raise ValueError(f"cannot parse measure spec {spec!r}")
    name, args = m.group(1), (m.group(2) or "").strip()
    if name == "from_csv":
        path = Path(args.strip("'\""))
        if base is not None and not path.is_absolute():
            path = base / path
        if not path.exists():
            raise FileNotFoundError(f"measure file {path} does not exist")
        return QuantileMeasure.from_csv(path)
    vals = [float(a) for a in args.split(",")] if args else []
    if name == "gaussian":
        return QuantileMeasure.gaussian(0.0, vals[0] if vals else 1.0, M)
    if name == "uniform":
        a, b = vals if vals else (-1.0, 1.0)
        return QuantileMeasure.uniform(a, b, M)
    if name == "two_point":
        return QuantileMeasure.two_point(vals[0] if vals else 1.0, M)
    if name == "truncated_gaussian":
        s, L = (vals + [1.0, 4.0][len(vals):])[:2]
        return QuantileMeasure.truncated_gaussian(s, L, M)
    raise ValueError(f"unknown measure family {name!r}")


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]


def _names(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


@dataclass
class ExperimentConfig:
    """Resolved configuration; ``sections`` maps section to key to raw string."""

    sections: dict[str, dict[str, str]]
    base: Path

    @classmethod
    def load(cls, path=None, overrides: dict[str, dict[str, str]] | None = None) -> "ExperimentConfig":
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        parser.read_dict(DEFAULTS)
        base = Path.cwd()
        if path is not None:
            path = Path(path)
            if not path.exists():
                raise FileNotFoundError(f"config file {path} does not exist")
            parser.read(path, encoding="utf-8")
            base = path.parent
        for sec, kv in (overrides or {}).items():
            for k, v in kv.items():
                if v is not None:
                    parser.set(sec, k, str(v))
        unknown = set(parser.sections()) - set(DEFAULTS)
        if unknown:
            raise ValueError(f"unknown config sections: {', '.join(sorted(unknown))}")
        sections = {s: dict(parser.items(s)) for s in DEFAULTS}
        cfg = cls(sections, base)
        cfg.validate()
        return cfg

    def get(self, section: str, key: str) -> str:
        return self.sections[section][key]

    def int(self, section: str, key: str) -> int:
        return int(float(self.get(section, key)))

    def float(self, section: str, key: str) -> float:
        return float(self.get(section, key))

    def floats(self, section: str, key: str) -> list[float]:
        return _floats(self.get(section, key))

    def names(self, section: str, key: str) -> list[str]:
        return _names(self.get(section, key))

    def measure(self, section: str, key: str = "measure", M: int | None = None) -> QuantileMeasure:
        return parse_measure(self.get(section, key), M or 4096, self.base)

    @property
    def seed(self) -> int:
        return self.int("general", "seed")

    @property
    def M(self) -> int:
        return self.int("general", "M")

    def validate(self) -> None:
        general = self.sections["general"]
        if "seed" not in general or not general["seed"].strip():
            raise ValueError("a seed is required")
        seed = int(general["seed"])
        if not 0 <= seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        for sec, kv in self.sections.items():
            for k, v in kv.items():
                if k in ("seed", "out") or k.endswith("measure") or k in ("weights", "F", "p", "checkpoints"):
                    continue
                try:
                    x = float(v)
                except ValueError:
                    raise ValueError(f"[{sec}] {k} = {v!r} is not a number") from None
                if not x > 0:
                    raise ValueError(f"[{sec}] {k} must be positive, got {v!r}")
        for sec, kv in self.sections.items():
            for k, v in kv.items():
                if k.endswith("measure") and v.strip().startswith("from_csv"):
                    parse_measure(v, 8, self.base)
        if self.get("opt2", "F") not in ("square", "identity"):
            raise ValueError("[opt2] F must be 'square' or 'identity'")

    def canonical_text(self) -> str:
        lines = []
        for sec in sorted(self.sections):
            if sec == "general":
                items = {k: v for k, v in self.sections[sec].items() if k not in ("out", "threads")}
            else:
                items = self.sections[sec]
            lines.append(f"[{sec}]")
            lines.extend(f"{k}={items[k].strip()}" for k in sorted(items))
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        """SHA-256 of the configuration, ignoring output directory and thread count."""
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()
