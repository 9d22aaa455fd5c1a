"""Deterministic scenario runner.

A scenario file is JSON::

    {
      "name": "...",
      "world": "world.json" | {...},        # path relative to the scenario, or inline
      "policy": "baseline.bzp",             # path relative to the scenario
      "start_ms": 0,                        # simulated clock origin
      "config": {...},                      # EngineConfig overrides
      "steps": [ {"label": "a1", "authorize": {...}}, {"expect": {...}}, ... ]
    }

Step kinds: ``ingest_event`` (one event or a list), ``authorize``,
``respond_challenge``, ``advance_clock``, ``lift_containment`` and
``expect``. Expectations look up earlier step outputs by label.
"""
from __future__ import annotations

import dataclasses
import difflib
import json
import os
import time
from pathlib import Path
from typing import Any

from ..clock import SimClock
from ..config import EngineConfig
from ..errors import BZError, ExpectationFailure, MalformedScenario
from ..intake import Event
from ..reasoning.context import DecisionRecord, Request
from ..reasoning.engine import Engine
from ..world import WorldStore

STEP_KINDS = ("ingest_event", "authorize", "respond_challenge", "advance_clock",
              "lift_containment", "expect")


@dataclasses.dataclass
class ScenarioResult:
    name: str
    trace: str
    failures: list[ExpectationFailure]
    diff: str | None = None
    elapsed_s: float = 0.0

    @property
    def passed(self) -> bool:
        return not self.failures and not self.diff


def dump_trace(doc: Any) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def load_scenario(path: str | os.PathLike[str]) -> dict[str, Any]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise MalformedScenario(f"{path}: {exc}") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("steps"), list):
        raise MalformedScenario(f"{path}: expected an object with a 'steps' list")
    for i, step in enumerate(doc["steps"]):
        kinds = [k for k in STEP_KINDS if k in step]
        if len(kinds) != 1:
            raise MalformedScenario(f"{path}: step {i} must have exactly one of {STEP_KINDS}")
    return doc


def build_engine(doc: dict[str, Any], base: Path) -> Engine:
    world_doc = doc.get("world")
    if isinstance(world_doc, str):
        world_doc = json.loads((base / world_doc).read_text(encoding="utf-8"))
    if not isinstance(world_doc, dict):
        raise MalformedScenario("scenario needs a world definition")
    policy = doc.get("policy")
    if not isinstance(policy, str):
        raise MalformedScenario("scenario needs a policy path")
    text = (base / policy).read_text(encoding="utf-8")
    start = int(doc.get("start_ms", 0))
    cfg = EngineConfig.from_dict({**doc.get("config", {}), "clock": "sim", "clock_start_ms": start})
    return Engine(WorldStore.from_document(world_doc), text, cfg, clock=SimClock(start))


class _Runner:
    def __init__(self, engine: Engine):
        self.engine = engine
        self.outputs: dict[str, Any] = {}
        self.failures: list[ExpectationFailure] = []

    def step(self, i: int, step: dict[str, Any]) -> dict[str, Any]:
        kind = next(k for k in STEP_KINDS if k in step)
        body = step[kind]
        entry: dict[str, Any] = {"step": i, "op": kind}
        if "label" in step:
            entry["label"] = step["label"]
        if kind == "expect":
            entry["checked"] = self.expect(i, body)
            return entry
        try:
            result = getattr(self, f"do_{kind}")(body)
        except BZError as exc:
            result = exc.to_dict()
            wanted = step.get("expect_error")
            if wanted != exc.code:
                self.failures.append(ExpectationFailure(i, wanted or "no error", exc.code))
        else:
            if "expect_error" in step:
                self.failures.append(ExpectationFailure(i, step["expect_error"], "no error"))
        if "label" in step:
            self.outputs[step["label"]] = result
        entry["result"] = result
        reports = self.engine.run_slow_path()
        if reports:
            entry["investigations"] = [r.to_dict() for r in reports]
        return entry

    def do_ingest_event(self, body: Any) -> dict[str, Any]:
        items = body if isinstance(body, list) else [body]
        for raw in items:
            self.engine.ingest(Event.from_dict(raw))
        return {"ingested": [raw["id"] for raw in items]}

    def do_authorize(self, body: dict[str, Any]) -> dict[str, Any]:
        record: DecisionRecord = self.engine.authorize(Request.from_dict(body))
        return record.to_dict()

    def _challenge_id(self, body: dict[str, Any]) -> str:
        if "challenge_id" in body:
            return body["challenge_id"]
        decision = self.outputs.get(body.get("ref", ""))
        if not decision or "obligations" not in decision:
            raise MalformedScenario(f"respond_challenge: no decision labelled {body.get('ref')!r}")
        for ob in decision["obligations"]:
            if ob["kind"] == body.get("kind"):
                return ob["challenge_id"]
        raise MalformedScenario(f"decision {body['ref']!r} has no {body.get('kind')!r} obligation")

    def do_respond_challenge(self, body: dict[str, Any]) -> dict[str, Any]:
        cid = self._challenge_id(body)
        state = self.engine.challenges.respond(cid, body.get("payload", {}))
        return {"challenge_id": cid, "kind": self.engine.challenges.get(cid).kind, "state": state}

    def do_advance_clock(self, body: Any) -> dict[str, Any]:
        ms = body["ms"] if isinstance(body, dict) else body
        assert isinstance(self.engine.clock, SimClock)
        return {"now": self.engine.clock.advance(int(ms))}

    def do_lift_containment(self, body: dict[str, Any]) -> dict[str, Any]:
        cid = body.get("containment_id")
        if cid is None:
            active = self.engine.challenges.active_containment(body["accessor"])
            if active is None:
                raise MalformedScenario(f"no active containment for {body['accessor']!r}")
            cid = active.id
        c = self.engine.challenges.lift_containment(cid, body.get("authority", "manual"),
                                                    body.get("reason", ""))
        return c.to_dict()

    def _check(self, i: int, what: str, expected: Any, actual: Any) -> dict[str, Any]:
        if expected != actual:
            self.failures.append(ExpectationFailure(i, {what: expected}, {what: actual}))
        return {what: actual, "ok": expected == actual}

    def expect(self, i: int, body: dict[str, Any]) -> list[dict[str, Any]]:
        checked = []
        ref = self.outputs.get(body.get("ref", "")) if "ref" in body else None
        if "ref" in body and ref is None:
            raise MalformedScenario(f"step {i}: unknown label {body['ref']!r}")
        if "verdict" in body:
            checked.append(self._check(i, "verdict", body["verdict"], ref.get("verdict")))
        if "obligations" in body:
            kinds = [o["kind"] for o in ref.get("obligations", [])]
            checked.append(self._check(i, "obligations", body["obligations"], kinds))
        if "state" in body:
            checked.append(self._check(i, "state", body["state"], ref.get("state")))
        if "containment" in body:
            want = body["containment"]
            active = self.engine.challenges.active_containment(want["accessor"])
            level = active.level if active is not None else None
            checked.append(self._check(i, "containment", want.get("level"), level))
        if "attribute" in body:
            want = body["attribute"]
            attrs = self.engine.intake.hot.attributes(want["accessor"], self.engine.clock.now())
            attr = attrs.get(want["name"])
            value = attr.value if attr is not None else None
            checked.append(self._check(i, "attribute", want.get("value"), value))
        if "investigation" in body:
            want = body["investigation"]
            last = next((r for r in reversed(self.engine.investigations)
                         if r.accessor_id == want["accessor"]), None)
            checked.append(self._check(i, "investigation", want.get("action"),
                                       last.action if last else None))
        return checked


def run_scenario(path: str | os.PathLike[str], golden_path: str | os.PathLike[str] | None = None,
                 trace_out: str | os.PathLike[str] | None = None) -> ScenarioResult:
    """Run a scenario on a fresh simulated-clock engine and optionally diff
    the trace against a golden file."""
    started = time.perf_counter()
    path = Path(path)
    doc = load_scenario(path)
    engine = build_engine(doc, path.parent)
    runner = _Runner(engine)
    steps = [runner.step(i, step) for i, step in enumerate(doc["steps"])]
    trace_doc = {
        "scenario": doc.get("name", path.stem),
        "steps": steps,
        "final": {
            "containments": [c.to_dict() for c in engine.challenges.containments()],
            "challenges": [c.to_dict() for c in engine.challenges.challenges()],
            "policy_version": engine.policy_version,
            "log_size": len(engine.intake.log),
        },
    }
    trace = dump_trace(trace_doc)
    if trace_out is not None:
        Path(trace_out).write_text(trace, encoding="utf-8")
    diff = None
    if golden_path is not None:
        golden = Path(golden_path).read_text(encoding="utf-8")
        if golden != trace:
            diff = "".join(difflib.unified_diff(golden.splitlines(True), trace.splitlines(True),
                                                str(golden_path), "actual"))
    return ScenarioResult(doc.get("name", path.stem), trace, runner.failures, diff,
                          time.perf_counter() - started)
