"""Slow-path detectors.

Each detector reads raw events from the long-term log and either returns a
:class:`RiskAttribute` or ``None``. They never run inside ``authorize``.
"""
from __future__ import annotations

import statistics
from typing import Sequence

from ..config import EngineConfig
from ..intake import Event, EventLog, RiskAttribute
from ..world import SENSITIVITY_RANK, WorldSnapshot, assignment_covers, subject_crossover

BASIC_QUESTION_TAG = "basic_question"
EXFIL_KINDS = frozenset({"email_external", "bulk_export"})


def touches_resource(e: Event) -> bool:
    return e.resource_id is not None and not e.quarantined


def _window(log: EventLog, now: int, window: int, accessors: Sequence[str] | None = None) -> list[Event]:
    return log.scan(since=now - window, until=now, accessor_ids=accessors)


def peer_volume_ratio(events: Sequence[Event], snapshot: WorldSnapshot,
                      accessor_id: str) -> float | None:
    """Distinct-resource count relative to the job-function peer median.

    ``None`` when the accessor has no peers.
    """
    me = snapshot.accessor(accessor_id)
    peers = [a.id for a in snapshot.accessors.values()
             if a.job_function == me.job_function and a.id != me.id]
    if not peers:
        return None
    distinct: dict[str, set[str]] = {}
    for e in events:
        if touches_resource(e):
            distinct.setdefault(e.accessor_id, set()).add(e.resource_id)  # type: ignore[arg-type]
    median = statistics.median(len(distinct.get(p, ())) for p in peers)
    return len(distinct.get(me.id, ())) / max(median, 1)


def detect_peer_volume_anomaly(log: EventLog, snapshot: WorldSnapshot, accessor_id: str,
                               now: int, cfg: EngineConfig, window: int | None = None
                               ) -> RiskAttribute | None:
    window = cfg.peer_volume_window_ms if window is None else window
    events = _window(log, now, window)
    ratio = peer_volume_ratio(events, snapshot, accessor_id)
    if ratio is None or ratio < cfg.peer_volume_ratio:
        return None
    evidence = tuple(e.id for e in events if e.accessor_id == accessor_id and touches_resource(e))
    return RiskAttribute("peer_volume_anomaly", min(1.0, ratio / 10), now,
                         cfg.peer_volume_ttl_ms, "peer_volume", evidence)


def detect_scope_deviation(log: EventLog, snapshot: WorldSnapshot, accessor_id: str, now: int,
                           cfg: EngineConfig, window: int | None = None) -> RiskAttribute | None:
    window = cfg.scope_window_ms if window is None else window
    accesses = [e for e in _window(log, now, window, [accessor_id])
                if touches_resource(e) and e.resource_id in snapshot.resources]
    if len(accesses) < cfg.scope_min_support:
        return None
    off = [e for e in accesses
           if not assignment_covers(accessor_id, e.resource_id, snapshot, e.ts)  # type: ignore[arg-type]
           and subject_crossover(accessor_id, e.resource_id, snapshot) < cfg.scope_crossover_max]  # type: ignore[arg-type]
    fraction = len(off) / len(accesses)
    if fraction < cfg.scope_fraction_min:
        return None
    return RiskAttribute("scope_deviation", fraction, now, cfg.scope_ttl_ms, "scope_deviation",
                         tuple(e.id for e in off))


def detect_rapid_succession(log: EventLog, snapshot: WorldSnapshot, accessor_id: str, now: int,
                            cfg: EngineConfig, window: int | None = None) -> RiskAttribute | None:
    if snapshot.accessor(accessor_id).kind != "human":
        return None
    window = cfg.rapid_window_ms if window is None else window
    ops = [e for e in _window(log, now, window, [accessor_id]) if not e.quarantined]
    ops.sort(key=lambda e: e.ts)
    k = cfg.rapid_ops
    for i in range(len(ops) - k + 1):
        if ops[i + k - 1].ts - ops[i].ts <= cfg.rapid_span_ms:
            return RiskAttribute("rapid_succession", 1.0, now, cfg.rapid_ttl_ms,
                                 "rapid_succession", tuple(e.id for e in ops[i:i + k]))
    return None


def detect_knowledge_inconsistency(log: EventLog, snapshot: WorldSnapshot, accessor_id: str,
                                   now: int, cfg: EngineConfig, window: int | None = None
                                   ) -> RiskAttribute | None:
    window = cfg.knowledge_window_ms if window is None else window
    administers = snapshot.accessor(accessor_id).topic_tags
    hits = [e for e in _window(log, now, window, [accessor_id])
            if e.kind == "query" and BASIC_QUESTION_TAG in e.tags
            and (e.tags - {BASIC_QUESTION_TAG}) & administers]
    if len(hits) < cfg.knowledge_min_queries:
        return None
    return RiskAttribute("knowledge_inconsistency", cfg.knowledge_value, now,
                         cfg.knowledge_ttl_ms, "knowledge_inconsistency",
                         tuple(e.id for e in hits))


def detect_exfiltration_pattern(log: EventLog, snapshot: WorldSnapshot, accessor_id: str,
                                now: int, cfg: EngineConfig, window: int | None = None
                                ) -> RiskAttribute | None:
    window = cfg.exfil_window_ms if window is None else window
    floor = SENSITIVITY_RANK["confidential"]
    hits = [e for e in _window(log, now, window, [accessor_id])
            if e.kind in EXFIL_KINDS and e.resource_id in snapshot.resources
            and snapshot.resources[e.resource_id].sensitivity_rank >= floor]
    if len(hits) < cfg.exfil_min_events:
        return None
    return RiskAttribute("exfiltration_pattern", 1.0, now, cfg.exfil_ttl_ms, "exfiltration",
                         tuple(e.id for e in hits))


DETECTORS = {
    "peer_volume_anomaly": detect_peer_volume_anomaly,
    "scope_deviation": detect_scope_deviation,
    "rapid_succession": detect_rapid_succession,
    "knowledge_inconsistency": detect_knowledge_inconsistency,
    "exfiltration_pattern": detect_exfiltration_pattern,
}


def run_detectors(log: EventLog, snapshot: WorldSnapshot, accessor_id: str, now: int,
                  cfg: EngineConfig, window: int | None = None) -> list[RiskAttribute]:
    found = []
    for fn in DETECTORS.values():
        attr = fn(log, snapshot, accessor_id, now, cfg, window)
        if attr is not None:
            found.append(attr)
    return found
