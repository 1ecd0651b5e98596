"""Experiment configuration: a single JSON document resolved into package objects.

Example::

    {
      "transform": {"name": "identity", "n": 256},
      "blocks": "isolated",
      "support": {"kind": "uniform_random", "s": 16},
      "pi": "restricted",
      "m_grid": [600, 984],
      "trials": 50,
      "seed": 0
    }
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .. import blocks, coherence, linops

TRANSFORMS_1D = {
    "identity": lambda n: linops.identity(n),
    "dft": lambda n: linops.dft1d(n),
    "haar": lambda n: linops.haar1d(n),
    "fourier_haar": lambda n: linops.fourier_haar1d(n),
    "shannon": lambda n: linops.shannon_fw1d(n),
}
TRANSFORMS_2D = {
    "dft2d": linops.dft2d,
    "fourier_haar2d": linops.fourier_haar2d,
    "shannon2d": linops.shannon2d,
    "haar2d": linops.haar2d,
}
BLOCK_SCHEMES = ("isolated", "lines-horizontal", "lines-vertical", "lines-both")
PI_STRATEGIES = ("uniform", "optimal_theta", "level_fourier_haar", "level_scol", "level_flat",
                 "restricted", "explicit")
DRAW_MODES = ("iid", "bernoulli", "full")
AMPLITUDES = ("gaussian", "complex_gaussian", "sign", "phase")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    transform: dict
    blocks: str = "isolated"
    support: dict = field(default_factory=dict)
    pi: object = "uniform"
    m_grid: list = field(default_factory=list)
    trials: int = 20
    seed: int = 0
    seeds: list | None = None
    draw: str = "iid"
    amplitudes: str = "gaussian"
    signal_field: str | None = "complex"
    solver: dict = field(default_factory=lambda: {"tol": 1e-9, "max_iter": 20000})
    recovery_tol: float = 1e-5
    gamma: str = "auto"
    image: dict | None = None
    out: str = "results"

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        if not isinstance(obj, dict):
            raise ConfigError("config must be a JSON object")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "transform" not in obj:
            raise ConfigError("config needs a 'transform'")
        cfg = cls(**obj)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
        return cls.from_dict(obj)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                return cls.from_json(fh.read())
        except OSError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def override(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        new = dataclasses.replace(self, **kw)
        if "seed" in kw or "trials" in kw:
            new.seeds = None if self.seeds is None or "seed" in kw else new.seeds[: new.trials]
        new.validate()
        return new

    def validate(self) -> None:
        t = self.transform
        if not isinstance(t, dict) or "name" not in t:
            raise ConfigError("transform must be an object with a 'name'")
        if t["name"] not in TRANSFORMS_1D and t["name"] not in TRANSFORMS_2D:
            raise ConfigError(f"unknown transform {t['name']!r}")
        if t["name"] in TRANSFORMS_2D and "side" not in t:
            raise ConfigError(f"{t['name']} needs 'side'")
        if t["name"] in TRANSFORMS_1D and "n" not in t:
            raise ConfigError(f"{t['name']} needs 'n'")
        if self.blocks not in BLOCK_SCHEMES:
            raise ConfigError(f"unknown block scheme {self.blocks!r}")
        if self.blocks != "isolated" and t["name"] not in TRANSFORMS_2D:
            raise ConfigError("line blocks need a 2D transform")
        strategy = self.pi if isinstance(self.pi, str) else "explicit"
        if strategy not in PI_STRATEGIES:
            raise ConfigError(f"unknown pi strategy {self.pi!r}")
        if strategy == "explicit" and isinstance(self.pi, str):
            raise ConfigError("explicit pi must be given as a list of weights")
        grid = list(self.m_grid)
        if any(int(m) != m or m < 0 for m in grid):
            raise ConfigError("m grid must hold nonnegative integers")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("m grid must be strictly increasing")
        if self.trials <= 0:
            raise ConfigError("trials must be positive")
        if self.seeds is not None and len(self.seeds) < self.trials:
            raise ConfigError("seed list shorter than the trial count")
        if self.draw not in DRAW_MODES:
            raise ConfigError(f"unknown draw mode {self.draw!r}")
        if self.amplitudes not in AMPLITUDES:
            raise ConfigError(f"unknown amplitude law {self.amplitudes!r}")
        if self.signal_field not in (None, "real", "complex"):
            raise ConfigError(f"unknown field {self.signal_field!r}")
        if self.gamma not in ("auto", "exact", "upper", "none"):
            raise ConfigError(f"unknown gamma mode {self.gamma!r}")
        if self.support:
            kind = self.support.get("kind")
            if kind not in ("explicit", "uniform_random", "by_levels", "row_concentrated", "column_capped"):
                raise ConfigError(f"unknown support kind {kind!r}")

    # resolution ---------------------------------------------------------

    @property
    def n(self) -> int:
        t = self.transform
        return t["side"] ** 2 if "side" in t else t["n"]

    @property
    def is_2d(self) -> bool:
        return self.transform["name"] in TRANSFORMS_2D

    def trial_seeds(self) -> list:
        if self.seeds is not None:
            return [int(s) for s in self.seeds[: self.trials]]
        return [self.seed + t for t in range(self.trials)]

    def hash(self) -> str:
        d = self.to_dict()
        d.pop("out")
        text = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def build_transform(self) -> linops.OrthoOperator:
        t = self.transform
        try:
            if self.is_2d:
                return TRANSFORMS_2D[t["name"]](int(t["side"]))
            return TRANSFORMS_1D[t["name"]](int(t["n"]))
        except (linops.DimensionError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def build_dictionary(self) -> blocks.BlockDictionary:
        base = self.build_transform()
        if self.blocks == "isolated":
            return blocks.isolated_dictionary(base)
        if self.blocks == "lines-both":
            return blocks.horizontal_vertical_cover(base)
        return blocks.line_dictionary(base, self.blocks.split("-")[1])

    def support_model(self, **over) -> blocks.SupportModel:
        desc = dict(self.support, **over)
        kind = desc.pop("kind")
        try:
            return getattr(blocks.SupportModel, kind)(self.n, **desc)
        except TypeError as exc:
            raise ConfigError(f"bad support description {self.support}: {exc}") from exc

    def build_pi(self, d: blocks.BlockDictionary, S) -> np.ndarray:
        """Drawing weights for support ``S`` (a probability vector over blocks)."""
        strategy = self.pi if isinstance(self.pi, str) else "explicit"
        if strategy == "uniform":
            return coherence.uniform_pi(d.M)
        if strategy == "optimal_theta":
            return coherence.optimal_pi_theta(d, S)
        if strategy == "restricted":
            if self.blocks != "isolated":
                raise ConfigError("restricted pi needs isolated blocks")
            pi = np.zeros(d.M)
            pi[np.asarray(S, dtype=int)] = 1.0 / len(S)
            return pi
        if strategy == "explicit":
            pi = np.asarray(self.pi, dtype=float)
            if pi.size != d.M:
                raise ConfigError(f"explicit pi has {pi.size} weights for {d.M} blocks")
            return pi / pi.sum()
        # level strategies are constant on dyadic levels of the block index
        if self.blocks == "isolated":
            counts = blocks.level_counts(S, self.n)
        elif self.blocks in ("lines-horizontal", "lines-vertical"):
            S2 = np.asarray(S, dtype=int)
            if self.blocks == "lines-vertical":
                side = self.transform["side"]
                S2 = (S2 % side) * side + S2 // side
            counts = coherence.column_sparsities(S2, self.n)
        else:
            raise ConfigError(f"{strategy} pi is not defined for {self.blocks}")
        if strategy == "level_flat":
            counts = np.ones_like(counts)
        if strategy == "level_scol":
            return coherence.level_pi_scol(counts)
        return coherence.level_pi_fourier_haar(counts)
