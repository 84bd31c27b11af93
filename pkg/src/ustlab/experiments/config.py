"""Sweep configuration: JSON file plus flag overrides (flags > file > defaults)."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

from ..walk_stats import ALL_STATS

DEFAULT_MEMORY_CAP = 2**26
RESULT_FIELDS = ("d", "L", "boundary", "n_grid", "exit_grid", "ball_grid", "ball_offsets", "trees", "walks", "statistics", "seed")


class ConfigError(ValueError):
    """Invalid configuration (exit code 2)."""


class ResourceGuardError(RuntimeError):
    """Refused before sampling: the box would exceed the memory cap (exit code 3)."""


@dataclass
class SweepConfig:
    d: int = 4
    L: int = 32
    boundary: str = "wired"
    n_grid: list[int] = field(default_factory=lambda: [2**k for k in range(6, 15)])
    exit_grid: list[int] = field(default_factory=lambda: [16, 32, 64, 128])
    ball_grid: list[int] = field(default_factory=lambda: [16, 24, 32, 48, 64, 96, 128])
    ball_offsets: list[int] = field(default_factory=lambda: [-4, 0, 4])
    trees: int = 50
    walks: int = 200
    statistics: list[str] = field(default_factory=lambda: list(ALL_STATS))
    seed: int = 0
    out: str = "sweep.csv"
    format: str = "csv"
    threads: int = 1
    memory_cap: int = DEFAULT_MEMORY_CAP

    def validate(self) -> list[str]:
        """Raise ConfigError on invalid fields; return soft policy warnings."""
        if not 1 <= self.d <= 8:
            raise ConfigError("d must be in 1..8")
        if self.L < 2:
            raise ConfigError("L must be >= 2")
        if self.boundary not in ("wired", "zero-wired", "line"):
            raise ConfigError(f"unknown boundary {self.boundary!r}")
        for name in ("n_grid", "exit_grid", "ball_grid"):
            g = getattr(self, name)
            if any(int(n) <= 0 for n in g) or list(g) != sorted(set(g)):
                raise ConfigError(f"{name} must be positive and strictly ascending")
        if not self.ball_offsets or any(abs(int(o)) >= self.L for o in self.ball_offsets):
            raise ConfigError("ball_offsets must be nonempty with |offset| < L")
        if self.trees < 2 or self.walks < 1:
            raise ConfigError("need trees >= 2 and walks >= 1")
        bad = [s for s in self.statistics if s not in ALL_STATS]
        if bad:
            raise ConfigError(f"unknown statistics {bad}; choose from {list(ALL_STATS)}")
        if self.format not in ("csv", "json"):
            raise ConfigError("format must be csv or json")
        warnings = []
        # expected extrinsic radii: walks ~ n^{1/6}, intrinsic balls ~ n^{1/2}
        if self.n_grid and 4 * max(self.n_grid) ** (1 / 6) > self.L:
            warnings.append(f"walk grid up to {max(self.n_grid)} may feel the boundary at L={self.L}")
        ball_n = [max(g) for g, s in ((self.exit_grid, "exit"), (self.ball_grid, "volume")) if g and s in self.statistics]
        if ball_n and 4 * max(ball_n) ** 0.5 > self.L:
            warnings.append(f"intrinsic radius {max(ball_n)} exceeds the L >= 4 x radius policy at L={self.L}")
        return warnings

    def check_resources(self) -> None:
        vertices = (2 * self.L + 1) ** self.d
        if vertices > self.memory_cap:
            raise ResourceGuardError(f"(2L+1)^d = {vertices} vertices exceeds the cap {self.memory_cap}")

    def config_hash(self) -> str:
        blob = json.dumps({k: getattr(self, k) for k in RESULT_FIELDS}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    @classmethod
    def load(cls, path=None, **overrides) -> "SweepConfig":
        data: dict = {}
        if path is not None:
            try:
                with open(path) as fh:
                    data = json.load(fh)
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        data.update({k: v for k, v in overrides.items() if v is not None})
        try:
            cfg = cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        cfg.validate()
        return cfg
