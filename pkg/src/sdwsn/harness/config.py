"""YAML experiment configuration.

Top-level keys (all optional except ``experiment``)::

    experiment: example1 | example2 | example4 | example5
    seed: 0
    partition: {r: [..], m_split: [..], lifting: full|reduced}
    signal:    {E_xx: [[..]] | E_xx_path: file.csv}
    noise:     {sigma: [..], beta: [..], delta: [..], gamma: [..]}
    channel:   {D: [[[..]], ..], E_eta: [[[..]], ..]} or {D_paths: [..], E_eta_paths: [..]}
    data:      {m: 8, n: [8, 8], samples: 60, sensor_counts: [2, 3]}
    image:     {path: img.pgm | null, size: 64}
    fit:       {epsilon: 1e-9, max_iterations: 100, init: sdt}
    output:    {dir: out, format: csv|svg|both}

Relative paths are resolved against the directory of the config file.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from ..covmodel import read_matrix

EXPERIMENTS = {
    "example1": ("ideal", "analytic-gaussian"),
    "example2": ("ideal", "sample-data"),
    "example4": ("ideal", "image"),
    "example5": ("channel", "analytic-gaussian"),
}
FORMATS = ("csv", "svg", "both")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int = 0
    partition: dict = field(default_factory=dict)
    signal: dict = field(default_factory=dict)
    noise: dict = field(default_factory=dict)
    channel: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)
    image: dict = field(default_factory=dict)
    fit: dict = field(default_factory=dict)
    out_dir: Path = Path("out")
    format: str = "both"
    base_dir: Path = Path(".")

    @property
    def mode(self) -> str:
        return EXPERIMENTS[self.experiment][0]

    @property
    def model_source(self) -> str:
        return EXPERIMENTS[self.experiment][1]

    @classmethod
    def from_dict(cls, raw: dict, base_dir=".") -> "ExperimentConfig":
        raw = dict(raw or {})
        exp = raw.pop("experiment", None)
        if exp not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {sorted(EXPERIMENTS)}, got {exp!r}")
        output = raw.pop("output", {}) or {}
        known = {"seed", "partition", "signal", "noise", "channel", "data", "image", "fit"}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        base = Path(base_dir)
        cfg = cls(
            experiment=exp,
            seed=int(raw.get("seed", 0)),
            partition=dict(raw.get("partition") or {}),
            signal=dict(raw.get("signal") or {}),
            noise=dict(raw.get("noise") or {}),
            channel=dict(raw.get("channel") or {}),
            data=dict(raw.get("data") or {}),
            image=dict(raw.get("image") or {}),
            fit=dict(raw.get("fit") or {}),
            out_dir=base / output.get("dir", "out"),
            format=output.get("format", "both"),
            base_dir=base,
        )
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        with open(path) as fh:
            raw = yaml.safe_load(fh)
        return cls.from_dict(raw, base_dir=path.parent)

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def referenced_files(self) -> list[Path]:
        files = []
        if "E_xx_path" in self.signal:
            files.append(self.resolve(self.signal["E_xx_path"]))
        for key in ("D_paths", "E_eta_paths"):
            files += [self.resolve(p) for p in self.channel.get(key, [])]
        if self.image.get("path"):
            files.append(self.resolve(self.image["path"]))
        return files

    def validate(self) -> None:
        if self.format not in FORMATS:
            raise ConfigError(f"output.format must be one of {FORMATS}")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        missing = [str(f) for f in self.referenced_files() if not f.exists()]
        if missing:
            raise ConfigError(f"referenced files do not exist: {missing}")
        lifting = self.partition.get("lifting")
        if lifting is not None and lifting not in ("full", "reduced"):
            raise ConfigError("partition.lifting must be 'full' or 'reduced'")
        eps = float(self.fit.get("epsilon", 1e-9))
        iters = int(self.fit.get("max_iterations", 100))
        if eps < 0 or iters < 1:
            raise ConfigError("fit.epsilon must be >= 0 and fit.max_iterations >= 1")

    def E_xx(self, default) -> np.ndarray:
        if "E_xx_path" in self.signal:
            return read_matrix(self.resolve(self.signal["E_xx_path"]))
        return np.asarray(self.signal.get("E_xx", default), dtype=float)

    def channel_matrices(self, default_D):
        if "D_paths" in self.channel:
            D = [read_matrix(self.resolve(p)) for p in self.channel["D_paths"]]
        else:
            D = [np.asarray(d, dtype=float) for d in self.channel.get("D", default_D)]
        E_eta = None
        if "E_eta_paths" in self.channel:
            E_eta = [read_matrix(self.resolve(p)) for p in self.channel["E_eta_paths"]]
        elif "E_eta" in self.channel:
            E_eta = [np.asarray(e, dtype=float) for e in self.channel["E_eta"]]
        return D, E_eta
