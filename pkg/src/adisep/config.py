"""Run configuration: one JSON file, overridden by CLI flags."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .evaluation import DEFAULT_IOU_THRESHOLDS


@dataclass
class Config:
    n_d: int = 8
    d_max: float = 80.0
    tau: float = 0.5
    seed: int = 0
    # Inputs are padded to this (width, height) before the bound head so
    # the fully connected layer sees a fixed size.
    pad_width: int = 1760
    pad_height: int = 512
    iou_thresholds: dict = field(default_factory=lambda: dict(DEFAULT_IOU_THRESHOLDS))
    difficulties: tuple = ("easy", "moderate", "hard")

    def validate(self) -> None:
        if self.n_d < 1:
            raise ValueError(f"n_d must be >= 1, got {self.n_d}")
        if self.d_max <= 0:
            raise ValueError(f"d_max must be > 0, got {self.d_max}")
        if self.tau <= 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if self.pad_width < 1 or self.pad_height < 1:
            raise ValueError("padding target must be positive")

    @classmethod
    def load(cls, path) -> "Config":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**raw)
        cfg.difficulties = tuple(cfg.difficulties)
        return cfg

    def to_json(self) -> str:
        data = asdict(self)
        data["difficulties"] = list(self.difficulties)
        return json.dumps(data, indent=2)


def resolve_config(config_path: str | Path | None = None, **overrides) -> Config:
    """Load the JSON config (or defaults) and apply non-None overrides."""
    cfg = Config.load(config_path) if config_path else Config()
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in Config.__dataclass_fields__:
            raise ValueError(f"unknown config override: {key}")
        setattr(cfg, key, value)
    cfg.validate()
    return cfg


def worker_count() -> int:
    """Parallelism cap from ADISEP_THREADS (default: single-threaded)."""
    raw = os.environ.get("ADISEP_THREADS", "")
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"ADISEP_THREADS must be an integer, got {raw!r}") from None
