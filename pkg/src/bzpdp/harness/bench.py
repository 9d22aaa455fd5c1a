"""Sustained authorize load against synthetic fixtures."""
from __future__ import annotations

import dataclasses
import json
import math
import os
import threading
import time
from pathlib import Path
from typing import Any, Sequence

from ..clock import SimClock
from ..config import EngineConfig
from ..intake import Event
from ..reasoning.context import Request
from ..reasoning.engine import Engine
from ..world import WorldStore
from .synth import SIM_EPOCH, gen_policy_text, gen_requests, gen_synthetic


def percentile(samples: Sequence[float], p: float) -> float:
    """Nearest-rank percentile; ``p`` in (0, 100]."""
    if not samples:
        raise ValueError("no samples")
    ordered = sorted(samples)
    rank = max(1, math.ceil(p / 100 * len(ordered)))
    return ordered[rank - 1]


@dataclasses.dataclass
class BenchReport:
    policies: int
    duration_s: float
    concurrency: int
    wire: bool
    decisions: int
    decisions_per_sec: float
    p50_ms: float
    p99_ms: float
    fast_path_reads: int
    long_store_reads: int
    verdicts: dict[str, int]

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


def build_bench_engine(policies: int, seed: int = 0, n_accessors: int = 200,
                       n_resources: int = 2000, n_events: int = 5000) -> tuple[Engine, dict[str, Any]]:
    world_doc, events = gen_synthetic(seed, n_accessors, n_resources, n_events)
    cfg = EngineConfig(clock="sim", clock_start_ms=SIM_EPOCH, seed=seed)
    engine = Engine(WorldStore.from_document(world_doc), gen_policy_text(seed, policies), cfg,
                    clock=SimClock(SIM_EPOCH))
    for raw in events:
        engine.ingest(Event.from_dict(raw))
    engine.run_slow_path()
    return engine, world_doc


def _issue_inprocess(engine: Engine, requests: list[dict[str, Any]], stop_at: float,
                     lat: list[float], verdicts: dict[str, int]) -> None:
    now = engine.clock.now()
    i = 0
    while time.perf_counter() < stop_at:
        raw = requests[i % len(requests)]
        req = Request(f"{raw['id']}-{i}", now, raw["accessor_id"], raw["resource_id"],
                      raw["operation"])
        t0 = time.perf_counter()
        record = engine.authorize(req)
        lat.append((time.perf_counter() - t0) * 1000.0)
        verdicts[record.verdict] = verdicts.get(record.verdict, 0) + 1
        i += 1


def _issue_wire(base_url: str, now: int, requests: list[dict[str, Any]], stop_at: float,
                lat: list[float], verdicts: dict[str, int], tag: int) -> None:
    import httpx

    with httpx.Client(base_url=base_url, timeout=10.0) as client:
        i = 0
        while time.perf_counter() < stop_at:
            body = {**requests[i % len(requests)], "ts": now}
            body["id"] = f"{body['id']}-{tag}-{i}"
            t0 = time.perf_counter()
            resp = client.post("/v1/authorize", json=body)
            lat.append((time.perf_counter() - t0) * 1000.0)
            resp.raise_for_status()
            v = resp.json()["verdict"]
            verdicts[v] = verdicts.get(v, 0) + 1
            i += 1


def bench(policies: int, duration: float, wire: bool = False, concurrency: int = 1,
          seed: int = 0, latency_dump: str | os.PathLike[str] | None = None) -> BenchReport:
    """Drive authorize for ``duration`` seconds and report throughput and latency.

    A zero-policy set raises ``CompileRejected`` before any load is issued.
    """
    engine, world_doc = build_bench_engine(policies, seed)
    requests = gen_requests(seed + 1, world_doc, 4096, engine.clock.now())
    lat_per: list[list[float]] = [[] for _ in range(concurrency)]
    ver_per: list[dict[str, int]] = [{} for _ in range(concurrency)]
    reads_before = engine.intake.log.reads
    server = None
    if wire:
        server = _start_server(engine)
    started = time.perf_counter()
    stop_at = started + duration
    threads = []
    for k in range(concurrency):
        if wire:
            assert server is not None
            args: tuple = (server[1], engine.clock.now(), requests, stop_at, lat_per[k], ver_per[k], k)
            target: Any = _issue_wire
        else:
            args = (engine, requests, stop_at, lat_per[k], ver_per[k])
            target = _issue_inprocess
        threads.append(threading.Thread(target=target, args=args))
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    elapsed = time.perf_counter() - started
    if server is not None:
        server[0].should_exit = True
        server[2].join(timeout=5)

    samples = [x for part in lat_per for x in part]
    verdicts: dict[str, int] = {}
    for part in ver_per:
        for k, v in part.items():
            verdicts[k] = verdicts.get(k, 0) + v
    if latency_dump is not None:
        Path(latency_dump).write_text("".join(f"{x!r}\n" for x in samples), encoding="utf-8")
    return BenchReport(
        policies=policies, duration_s=round(elapsed, 3), concurrency=concurrency, wire=wire,
        decisions=len(samples), decisions_per_sec=len(samples) / elapsed if elapsed else 0.0,
        p50_ms=percentile(samples, 50) if samples else 0.0,
        p99_ms=percentile(samples, 99) if samples else 0.0,
        fast_path_reads=engine.intake.log.fast_path_reads,
        long_store_reads=engine.intake.log.reads - reads_before,
        verdicts=dict(sorted(verdicts.items())),
    )


def _start_server(engine: Engine) -> tuple[Any, str, threading.Thread]:
    import socket

    import uvicorn

    from ..service import create_app

    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    app = create_app(engine, drain_inline=False)
    server = uvicorn.Server(uvicorn.Config(app, host="127.0.0.1", port=port, log_level="warning",
                                           access_log=False))
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.monotonic() + 10
    while not server.started:
        if time.monotonic() > deadline:
            raise RuntimeError("bench server did not start")
        time.sleep(0.01)
    return server, f"http://127.0.0.1:{port}", thread


def report_json(report: BenchReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True)
