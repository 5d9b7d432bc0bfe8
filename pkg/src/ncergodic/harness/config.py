"""Scenario configuration files (JSON)."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from ..errors import ConfigError
from ..orlicz import OrliczFunction

KINDS = ("permutation", "free_rotation", "custom_unitaries", "random_markov", "two_point")
RUNS = ("certification", "identities", "even_spheres", "cesaro", "rota", "semigroup")
RANDOMIZED = ("random_markov",)

DEFAULT_TOLERANCES = {
    "identity": 1e-9,
    "oracle": 1e-10,
    "contraction": 1e-10,
    "flags": 1e-10,
    "convergence_target": 1e-6,
    "fixed_point": 1e-9,
    "merge": 1e-8,
}


@dataclass
class ScenarioConfig:
    """One experiment.

    ``algebra`` is ``{"points": k}`` for a diagonal algebra with uniform
    weights, ``{"matrix": n}`` for a normalized matrix block, or
    ``{"blocks": [[dim, weight], ...], "normalized": bool}``.
    ``permutations`` lists one permutation of the points per generator and
    ``unitaries`` one list of blocks (real or ``[re, im]`` pairs) per generator.
    """

    kind: str
    m: int = 2
    algebra: dict = field(default_factory=dict)
    orlicz: list = field(default_factory=list)
    n_max: int = 20
    seed: int | None = None
    tolerances: dict = field(default_factory=dict)
    output_dir: str | None = None
    permutations: list | None = None
    unitaries: list | None = None
    runs: list = field(default_factory=lambda: list(RUNS))
    oracle_radius: int = 6

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind: expected one of {KINDS}, got {self.kind!r}")
        if not isinstance(self.m, int) or self.m < 1:
            raise ConfigError("m: must be a positive integer")
        if not isinstance(self.n_max, int) or self.n_max < 1:
            raise ConfigError("n_max: must be a positive integer")
        if not isinstance(self.oracle_radius, int) or self.oracle_radius < 1:
            raise ConfigError("oracle_radius: must be a positive integer")
        if self.kind in RANDOMIZED and self.seed is None:
            raise ConfigError(f"seed: required for kind {self.kind!r}")
        if self.seed is not None and not (isinstance(self.seed, int) and 0 <= self.seed < 2**64):
            raise ConfigError("seed: must be an unsigned 64-bit integer")
        bad = set(self.tolerances) - set(DEFAULT_TOLERANCES)
        if bad:
            raise ConfigError(f"tolerances: unknown keys {sorted(bad)}")
        bad = set(self.runs) - set(RUNS)
        if bad:
            raise ConfigError(f"runs: unknown phases {sorted(bad)}")
        for k, name in enumerate(self.orlicz):
            try:
                OrliczFunction.from_name(name)
            except Exception as exc:
                raise ConfigError(f"orlicz[{k}]: {exc}") from exc

    @property
    def tol(self) -> dict:
        return {**DEFAULT_TOLERANCES, **self.tolerances}

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ScenarioConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "kind" not in data:
            raise ConfigError("kind: missing")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> ScenarioConfig:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return ScenarioConfig.from_dict(data)
