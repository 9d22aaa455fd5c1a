"""Event intake: the append-only long-term log and the per-accessor hot cache.

The hot cache holds the newest ``K`` events per accessor plus the live risk
attributes published by the slow path. The fast path only ever touches the
hot cache; reads of the long-term log are counted, and reads made while a
:func:`fast_path` block is active are counted separately so benches can
assert there are none.
"""
from __future__ import annotations

import contextlib
import contextvars
import dataclasses
import json
import os
import threading
from collections import deque
from pathlib import Path
from types import MappingProxyType
from typing import Any, Callable, Iterable, Iterator, Mapping

from .clock import SimClock
from .errors import BZError, DuplicateEventId, MalformedLine, OutOfOrderEvent, UnknownAccessor
from .world import WorldStore

EVENT_KINDS = ("access", "file_op", "query", "email_external", "bulk_export", "agent_prompt",
               "agent_plan", "agent_tool_call", "signal")
# client-side signals need detector pre-processing before anything may act on them
QUARANTINED_KINDS = frozenset({"signal"})

_in_fast_path: contextvars.ContextVar[bool] = contextvars.ContextVar("bz_fast_path", default=False)


@contextlib.contextmanager
def fast_path() -> Iterator[None]:
    token = _in_fast_path.set(True)
    try:
        yield
    finally:
        _in_fast_path.reset(token)


@dataclasses.dataclass(frozen=True)
class Event:
    id: str
    ts: int
    accessor_id: str
    kind: str
    resource_id: str | None = None
    operation: str | None = None
    payload: Mapping[str, str] = dataclasses.field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")
        object.__setattr__(self, "payload", MappingProxyType(
            {str(k): str(v) for k, v in dict(self.payload).items()}))

    @property
    def quarantined(self) -> bool:
        return self.kind in QUARANTINED_KINDS

    @property
    def tags(self) -> frozenset[str]:
        raw = self.payload.get("tags", "")
        return frozenset(t.strip().lower() for t in raw.split(",") if t.strip())

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Event":
        missing = {"id", "accessor_id", "kind"} - set(d)
        if missing:
            raise ValueError(f"event missing fields {sorted(missing)}")
        return cls(id=str(d["id"]), ts=int(d.get("ts") or 0), accessor_id=str(d["accessor_id"]),
                   kind=str(d["kind"]), resource_id=d.get("resource_id"),
                   operation=d.get("operation"), payload=d.get("payload") or {})

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "ts": self.ts, "accessor_id": self.accessor_id, "kind": self.kind,
                "resource_id": self.resource_id, "operation": self.operation,
                "payload": dict(self.payload)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


@dataclasses.dataclass(frozen=True)
class RiskAttribute:
    name: str
    value: float
    issued_ts: int
    ttl: int
    detector: str = ""
    evidence: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"risk attribute {self.name} value {self.value} outside [0, 1]")

    @property
    def expires_at(self) -> int:
        return self.issued_ts + self.ttl

    def readable(self, now: int) -> bool:
        return now <= self.expires_at

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "value": self.value, "issued_ts": self.issued_ts,
                "ttl": self.ttl, "provenance": {"detector": self.detector,
                                                "evidence": list(self.evidence)}}


class EventLog:
    """Append-only event sequence, optionally mirrored to an NDJSON file."""

    def __init__(self, path: str | os.PathLike[str] | None = None):
        self._events: list[Event] = []
        self._ids: set[str] = set()
        self._lock = threading.Lock()
        self.path = Path(path) if path is not None else None
        self._fh = None
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.path, "a", encoding="utf-8")
        self.reads = 0
        self.fast_path_reads = 0

    def __len__(self) -> int:
        return len(self._events)

    def __contains__(self, event_id: str) -> bool:
        return event_id in self._ids

    def append(self, e: Event) -> None:
        with self._lock:
            if e.id in self._ids:
                raise DuplicateEventId(f"duplicate event id {e.id!r}")
            self._events.append(e)
            self._ids.add(e.id)
            if self._fh is not None:
                self._fh.write(e.to_json() + "\n")

    def _count_read(self) -> None:
        self.reads += 1
        if _in_fast_path.get():
            self.fast_path_reads += 1

    def scan(self, since: int | None = None, until: int | None = None,
             accessor_ids: Iterable[str] | None = None) -> list[Event]:
        """Events with ``since <= ts <= until``, optionally for some accessors only."""
        self._count_read()
        wanted = None if accessor_ids is None else frozenset(accessor_ids)
        return [e for e in list(self._events)
                if (since is None or e.ts >= since) and (until is None or e.ts <= until)
                and (wanted is None or e.accessor_id in wanted)]

    def events(self) -> list[Event]:
        self._count_read()
        return list(self._events)

    def flush(self) -> None:
        if self._fh is not None:
            self._fh.flush()
            os.fsync(self._fh.fileno())

    def close(self) -> None:
        if self._fh is not None:
            self._fh.flush()
            self._fh.close()
            self._fh = None

    @classmethod
    def load(cls, path: str | os.PathLike[str]) -> "EventLog":
        """Rebuild an in-memory log from an NDJSON file."""
        log = cls()
        for e in read_ndjson_events(path):
            log.append(e)
        return log


def read_ndjson_events(path: str | os.PathLike[str]) -> list[Event]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(Event.from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise MalformedLine(no, str(exc)) from None
    return out


class HotCache:
    """Per-accessor event rings and live risk attributes.

    Writers replace whole per-accessor views, so readers see either the old
    or the new view and never a partial update.
    """

    def __init__(self, ring_size: int = 256):
        if ring_size < 1:
            raise ValueError("ring_size must be positive")
        self.ring_size = ring_size
        self._rings: dict[str, deque[Event]] = {}
        self._ring_views: dict[str, tuple[Event, ...]] = {}
        self._risk: dict[str, Mapping[str, RiskAttribute]] = {}
        self._lock = threading.Lock()

    def push(self, e: Event) -> None:
        with self._lock:
            ring = self._rings.get(e.accessor_id)
            if ring is None:
                ring = self._rings[e.accessor_id] = deque(maxlen=self.ring_size)
            ring.append(e)
            self._ring_views[e.accessor_id] = tuple(ring)

    def ring(self, accessor_id: str) -> tuple[Event, ...]:
        return self._ring_views.get(accessor_id, ())

    def publish(self, accessor_id: str, attr: RiskAttribute) -> None:
        with self._lock:
            table = dict(self._risk.get(accessor_id, {}))
            table[attr.name] = attr
            self._risk[accessor_id] = MappingProxyType(table)

    def attributes(self, accessor_id: str, now: int) -> dict[str, RiskAttribute]:
        """Readable (unexpired) attributes for one accessor."""
        table = self._risk.get(accessor_id)
        if not table:
            return {}
        return {k: a for k, a in table.items() if a.readable(now)}

    def risk_view(self, accessor_id: str, now: int) -> dict[str, float]:
        table = self._risk.get(accessor_id)
        if not table:
            return {}
        return {k: a.value for k, a in table.items() if now <= a.issued_ts + a.ttl}


class EventIntake:
    def __init__(self, world: WorldStore, clock: Any, ring_size: int = 256,
                 log: EventLog | None = None):
        self.world = world
        self.clock = clock
        self.log = log if log is not None else EventLog()
        self.hot = HotCache(ring_size)
        self._lock = threading.Lock()
        self.listeners: list[Callable[[Event], None]] = []

    @property
    def simulated(self) -> bool:
        return isinstance(self.clock, SimClock)

    def ingest(self, e: Event) -> dict[str, Any]:
        snap = self.world.snapshot()
        if e.accessor_id not in snap.accessors:
            raise UnknownAccessor(f"unknown accessor {e.accessor_id!r}")
        with self._lock:
            if e.id in self.log:
                raise DuplicateEventId(f"duplicate event id {e.id!r}")
            if self.simulated:
                if e.ts < self.clock.now():
                    raise OutOfOrderEvent(
                        f"event {e.id} at {e.ts} precedes simulated clock {self.clock.now()}")
                self.clock.advance_to(e.ts)
            self.log.append(e)
            self.hot.push(e)
        for fn in self.listeners:
            fn(e)
        return {"id": e.id, "log_size": len(self.log)}

    def ingest_many(self, events: Iterable[Event]) -> tuple[int, list[dict[str, Any]]]:
        accepted, rejected = 0, []
        for i, e in enumerate(events, 1):
            try:
                self.ingest(e)
                accepted += 1
            except BZError as exc:
                rejected.append({"line": i, "error": exc.code, "message": str(exc)})
        return accepted, rejected

    def recent_window(self, accessor_id: str, duration: int,
                      include_quarantined: bool = False) -> list[Event]:
        """Hot-ring events with ``ts >= now - duration``, oldest first."""
        if accessor_id not in self.world.snapshot().accessors:
            raise UnknownAccessor(f"unknown accessor {accessor_id!r}")
        if duration <= 0:
            return []
        cutoff = self.clock.now() - duration
        return [e for e in self.ring(accessor_id)
                if e.ts >= cutoff and (include_quarantined or not e.quarantined)]

    def ring(self, accessor_id: str) -> tuple[Event, ...]:
        return self.hot.ring(accessor_id)


def replay(log_path: str | os.PathLike[str], engine: Any) -> list[Any]:
    """Feed an NDJSON file of events and ``{"authorize": request}`` lines to
    ``engine`` in file order and return the decision records produced.

    The slow path is drained after every line so detector output lands at a
    deterministic point.
    """
    from .reasoning.context import Request

    if not isinstance(engine.clock, SimClock):
        raise ValueError("replay needs an engine on the simulated clock")
    records = []
    with open(log_path, encoding="utf-8") as fh:
        for no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                item: Any = (Request.from_dict(obj["authorize"]) if "authorize" in obj
                             else Event.from_dict(obj))
            except (ValueError, KeyError, TypeError) as exc:
                raise MalformedLine(no, str(exc)) from None
            if isinstance(item, Event):
                engine.ingest(item)
            else:
                records.append(engine.authorize(item))
            engine.run_slow_path()
    return records


def trace_text(records: Iterable[Any]) -> str:
    return "".join(r.to_json() + "\n" for r in records)
