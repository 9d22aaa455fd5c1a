"""The decision engine: fast-path ``authorize`` plus the slow path that turns
raw events into risk attributes, investigations and containments.

The fast path reads one world snapshot, one compiled policy, the hot cache
and the challenge tables. Work that needs the long-term log is queued and
executed by :meth:`Engine.run_slow_path`, either by a background worker
(real clock) or explicitly after each step (simulated clock, which keeps
scenario runs deterministic).
"""
from __future__ import annotations

import dataclasses
import threading
from collections import OrderedDict
from typing import Any

from ..challenge import Challenge, ChallengeService
from ..clock import SimClock, make_clock
from ..config import EngineConfig
from ..errors import CompileRejected
from ..intake import Event, EventIntake, EventLog, RiskAttribute, fast_path
from ..policy.ast import ALLOW, Effect, PolicySet
from ..policy.compiler import CompiledPolicySet, compile_policy
from ..policy.evaluation import RuleOutcome
from ..policy.lint import Diagnostic
from ..policy.parser import parse
from ..policy.schema import DEFAULT_SCHEMA, AttributeSchema
from ..world import WorldStore
from . import detectors
from .context import DecisionRecord, Obligation, Request, build_context, intent_alignment
from .lattice import combine

CONTAIN_RANK = {"soft": 1, "hard": 2}


@dataclasses.dataclass(frozen=True)
class InvestigationReport:
    id: str
    trigger_kind: str  # challenge_failed | risk_threshold
    trigger_detail: str
    accessor_id: str
    principal_id: str
    window_from: int
    window_to: int
    findings: tuple[tuple[str, RiskAttribute], ...]
    action: str  # none | contain_soft | contain_hard
    containment_id: str | None = None
    escalated: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "trigger": {"kind": self.trigger_kind, "detail": self.trigger_detail},
            "accessor_id": self.accessor_id,
            "principal_id": self.principal_id,
            "window": [self.window_from, self.window_to],
            "findings": [{"accessor_id": who, **attr.to_dict()} for who, attr in self.findings],
            "action": self.action,
            "containment_id": self.containment_id,
            "escalated": self.escalated,
        }


def decide_action(findings: list[RiskAttribute], threshold: float = 0.8) -> str:
    names = {f.name for f in findings}
    exfil = "exfiltration_pattern" in names
    scope = "scope_deviation" in names
    if exfil and scope:
        action = "contain_hard"
    elif exfil or scope:
        action = "contain_soft"
    else:
        action = "none"
    # containment needs at least one strong finding
    if action != "none" and not any(f.value >= threshold for f in findings):
        action = "none"
    return action


def discharge(outcomes: tuple[RuleOutcome, ...], granted: frozenset[str]) -> tuple[RuleOutcome, ...]:
    """Replace challenges already passed for this request shape with allow."""
    out = []
    for o in outcomes:
        effects = tuple(ALLOW if e.kind == "challenge" and e.arg in granted else e for e in o.effects)
        out.append(o if effects == o.effects else dataclasses.replace(o, effects=effects))
    return tuple(out)


class Engine:
    def __init__(self, world: WorldStore, policy: PolicySet | str,
                 config: EngineConfig | None = None, clock: Any = None,
                 log: EventLog | None = None, schema: AttributeSchema = DEFAULT_SCHEMA):
        self.config = config or EngineConfig()
        self.clock = clock if clock is not None else make_clock(self.config.clock,
                                                                self.config.clock_start_ms)
        self.schema = schema
        self.world = world
        self.intake = EventIntake(world, self.clock, self.config.ring_size, log)
        self.intake.listeners.append(self._on_event)
        self.challenges = ChallengeService(world, self.clock, self.config.challenge_expiry_ms,
                                           self.config.grant_ttl_ms,
                                           on_fail=self._on_challenge_failed)
        self._policy: tuple[int, CompiledPolicySet] | None = None
        self._policy_lock = threading.Lock()
        self.policy_source: PolicySet | None = None
        self.install_policy(policy)

        self.audit: list[DecisionRecord] = []
        self.investigations: list[InvestigationReport] = []
        self._queue: OrderedDict[tuple, None] = OrderedDict()
        self._queue_lock = threading.Lock()
        self._slow_lock = threading.Lock()
        self._triggered: set[tuple[str, str, int]] = set()
        self._seq = 0
        self._seq_lock = threading.Lock()

    # -- policy ---------------------------------------------------------------

    def install_policy(self, policy: PolicySet | str) -> int:
        """Compile and atomically swap in a policy; the old one survives failures."""
        ps = parse(policy) if isinstance(policy, str) else policy
        if not ps.rules:
            raise CompileRejected([Diagnostic("empty-policy", "", "policy set has no rules")])
        cps = compile_policy(ps, self.schema)
        with self._policy_lock:
            version = (self._policy[0] if self._policy else 0) + 1
            self._policy = (version, cps)
            self.policy_source = ps
        return version

    @property
    def policy_version(self) -> int:
        return self._policy[0] if self._policy else 0

    @property
    def compiled(self) -> CompiledPolicySet:
        assert self._policy is not None
        return self._policy[1]

    # -- fast path ----------------------------------------------------------

    def _next(self) -> int:
        with self._seq_lock:
            self._seq += 1
            return self._seq

    def authorize(self, req: Request) -> DecisionRecord:
        if isinstance(self.clock, SimClock):
            self.clock.advance_to(req.ts)
        with fast_path():
            policy_version, cps = self._policy  # type: ignore[misc]
            snap = self.world.snapshot()
            now = self.clock.now()
            ctx = build_context(req, snap, self.intake.hot, now)
            outcomes = cps.evaluate(ctx)
            principal = snap.principal(req.accessor_id).id
            granted = self.challenges.granted_kinds(principal, req.resource_id, req.operation, now)
            if granted:
                outcomes = discharge(outcomes, granted)
            verdict, kinds, suppressed = combine(
                outcomes, self.challenges.active_obligations(req.accessor_id))

            obligations: tuple[Obligation, ...] = ()
            if verdict == "challenge":
                obligations = tuple(self._issue(kind, principal, req, outcomes) for kind in kinds)
            elif verdict == "contain":
                self._contain_from_rules(principal, outcomes)

            used = {f"risk.{k}": v for k, v in ctx.risk.items()}
            used.update(ctx.builtins)
            record = DecisionRecord(
                request_id=req.id, accessor_id=req.accessor_id, resource_id=req.resource_id,
                operation=req.operation, verdict=verdict, obligations=obligations,
                suppressed_challenges=suppressed,
                matched_rules=tuple(sorted(o.rule_name for o in outcomes)),
                attributes_used=used, snapshot_version=snap.version,
                policy_version=policy_version, ts=req.ts)
            self.intake.ingest(Event(f"access-{self._next():08d}", now, req.accessor_id, "access",
                                     req.resource_id, req.operation, {"verdict": verdict}))
            if any(v >= self.config.investigation_threshold for v in ctx.risk.values()):
                self._risk_trigger(req.accessor_id, principal, now)
            self.audit.append(record)
        return record

    def _issue(self, kind: str, principal: str, req: Request,
               outcomes: tuple[RuleOutcome, ...]) -> Obligation:
        wanted = Effect("challenge", kind)
        investigate = any(o.investigate_on_fail and wanted in o.effects for o in outcomes)
        ch = self.challenges.issue(kind, principal, req.id, resource_id=req.resource_id,
                                   operation=req.operation, requester=req.accessor_id,
                                   investigate_on_fail=investigate)
        return Obligation(ch.id, kind)

    def _contain_from_rules(self, principal: str, outcomes: tuple[RuleOutcome, ...]) -> None:
        levels = [(CONTAIN_RANK[e.arg], e.arg, o.rule_name)  # type: ignore[index]
                  for o in outcomes for e in o.effects if e.kind == "contain"]
        _, level, rule = max(levels)
        self.challenges.apply_containment(principal, level, f"policy rule {rule}")

    def _risk_trigger(self, accessor_id: str, principal: str, now: int) -> None:
        for who in dict.fromkeys((accessor_id, principal)):
            for attr in self.intake.hot.attributes(who, now).values():
                key = (who, attr.name, attr.issued_ts)
                if attr.value >= self.config.investigation_threshold and key not in self._triggered:
                    self._triggered.add(key)
                    self._enqueue(("investigate", "risk_threshold", accessor_id,
                                   f"{who}:{attr.name}={attr.value:g}"))

    # -- slow path ----------------------------------------------------------

    def ingest(self, e: Event) -> dict[str, Any]:
        return self.intake.ingest(e)

    def _enqueue(self, task: tuple) -> None:
        with self._queue_lock:
            self._queue[task] = None

    def _on_event(self, e: Event) -> None:
        self._enqueue(("detect", e.accessor_id))

    def _on_challenge_failed(self, ch: Challenge) -> None:
        self._enqueue(("investigate", "challenge_failed", ch.requester or ch.subject_accessor, ch.id))

    def pending_tasks(self) -> int:
        return len(self._queue)

    def run_slow_path(self) -> list[InvestigationReport]:
        """Drain queued detector runs and investigations, in FIFO order."""
        reports = []
        with self._slow_lock:
            while True:
                with self._queue_lock:
                    if not self._queue:
                        break
                    task, _ = self._queue.popitem(last=False)
                if task[0] == "detect":
                    self.refresh_attributes(task[1])
                else:
                    _, kind, accessor_id, detail = task
                    reports.append(self.open_investigation(kind, accessor_id, detail))
            self.challenges.expire_due()
        return reports

    def refresh_attributes(self, accessor_id: str) -> list[RiskAttribute]:
        snap = self.world.snapshot()
        if accessor_id not in snap.accessors:
            return []
        found = detectors.run_detectors(self.intake.log, snap, accessor_id, self.clock.now(),
                                        self.config)
        for attr in found:
            self.intake.hot.publish(accessor_id, attr)
        return found

    def detect_peer_volume_anomaly(self, accessor_id: str, window: int | None = None):
        return detectors.detect_peer_volume_anomaly(self.intake.log, self.world.snapshot(),
                                                    accessor_id, self.clock.now(), self.config, window)

    def detect_scope_deviation(self, accessor_id: str, window: int | None = None):
        return detectors.detect_scope_deviation(self.intake.log, self.world.snapshot(),
                                                accessor_id, self.clock.now(), self.config, window)

    def detect_rapid_succession(self, accessor_id: str, window: int | None = None):
        return detectors.detect_rapid_succession(self.intake.log, self.world.snapshot(),
                                                 accessor_id, self.clock.now(), self.config, window)

    def detect_knowledge_inconsistency(self, accessor_id: str, window: int | None = None):
        return detectors.detect_knowledge_inconsistency(self.intake.log, self.world.snapshot(),
                                                        accessor_id, self.clock.now(), self.config,
                                                        window)

    def detect_exfiltration_pattern(self, accessor_id: str, window: int | None = None):
        return detectors.detect_exfiltration_pattern(self.intake.log, self.world.snapshot(),
                                                     accessor_id, self.clock.now(), self.config,
                                                     window)

    def intent_alignment(self, req: Request) -> float:
        return intent_alignment(req.agent_context, self.world.snapshot().resource(req.resource_id))

    def open_investigation(self, trigger_kind: str, accessor_id: str,
                           detail: str = "") -> InvestigationReport:
        """Run every detector over the long window and contain if warranted."""
        if trigger_kind not in ("challenge_failed", "risk_threshold"):
            raise ValueError(f"unknown trigger {trigger_kind!r}")
        snap = self.world.snapshot()
        principal = snap.principal(accessor_id).id
        now = self.clock.now()
        window = self.config.investigation_window_ms
        findings: list[tuple[str, RiskAttribute]] = []
        for who in dict.fromkeys((accessor_id, principal)):
            for attr in detectors.run_detectors(self.intake.log, snap, who, now, self.config, window):
                findings.append((who, attr))
                self.intake.hot.publish(who, attr)
        action = decide_action([a for _, a in findings], self.config.investigation_threshold)
        report_id = f"inv-{len(self.investigations) + 1:06d}"
        containment_id = None
        if action != "none":
            level = action.removeprefix("contain_")
            c = self.challenges.apply_containment(principal, level,
                                                  f"investigation {report_id} ({trigger_kind})")
            containment_id = c.id
        report = InvestigationReport(report_id, trigger_kind, detail, accessor_id, principal,
                                     now - window, now, tuple(findings), action, containment_id)
        self.investigations.append(report)
        return report

    # -- background worker ------------------------------------------------------

    def start_worker(self, interval: float = 0.05) -> threading.Event:
        """Drain the slow path periodically on a daemon thread; set the event to stop."""
        stop = threading.Event()

        def loop() -> None:
            while not stop.wait(interval):
                self.run_slow_path()

        threading.Thread(target=loop, name="bz-slow-path", daemon=True).start()
        return stop
