"""Engine configuration (JSON file, located via ``BZ_CONFIG``)."""
from __future__ import annotations

import dataclasses
import json
import os
from pathlib import Path
from typing import Any

from .clock import DAY, HOUR, MINUTE, SECOND


@dataclasses.dataclass(frozen=True)
class EngineConfig:
    ring_size: int = 256
    clock: str = "sim"
    clock_start_ms: int = 0
    seed: int = 0

    # peer volume
    peer_volume_ratio: float = 6.0
    peer_volume_window_ms: int = DAY
    peer_volume_ttl_ms: int = DAY
    # scope deviation
    scope_crossover_max: float = 0.2
    scope_fraction_min: float = 0.5
    scope_min_support: int = 5
    scope_window_ms: int = DAY
    scope_ttl_ms: int = DAY
    # rapid succession
    rapid_ops: int = 10
    rapid_span_ms: int = 5 * SECOND
    rapid_window_ms: int = 10 * MINUTE
    rapid_ttl_ms: int = HOUR
    # knowledge inconsistency
    knowledge_min_queries: int = 3
    knowledge_value: float = 0.8
    knowledge_window_ms: int = DAY
    knowledge_ttl_ms: int = 12 * HOUR
    # exfiltration
    exfil_min_events: int = 3
    exfil_window_ms: int = DAY
    exfil_ttl_ms: int = DAY

    investigation_threshold: float = 0.8
    investigation_window_ms: int = 7 * DAY
    challenge_expiry_ms: int = DAY
    # how long a passed challenge discharges the same obligation on retry
    grant_ttl_ms: int = HOUR

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "EngineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | os.PathLike[str] | None = None) -> "EngineConfig":
        """Read ``path`` (or ``$BZ_CONFIG``); env ``BZ_CLOCK``/``BZ_SEED`` override."""
        path = path or os.environ.get("BZ_CONFIG")
        data: dict[str, Any] = {}
        if path:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        if "BZ_CLOCK" in os.environ:
            data["clock"] = os.environ["BZ_CLOCK"]
        if "BZ_SEED" in os.environ:
            data["seed"] = int(os.environ["BZ_SEED"])
        return cls.from_dict(data)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)
