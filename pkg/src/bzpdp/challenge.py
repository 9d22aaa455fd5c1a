"""Challenges (short, per-decision interruptions) and containments (durable
per-accessor restrictions).

Hardware and biometric verifiers are simulated: a response payload with
``asserted: "true"`` stands in for a security-key touch or selfie match.
"""
from __future__ import annotations

import dataclasses
import re
import threading
from types import MappingProxyType
from typing import Any, Callable, Mapping

from .errors import (
    AlreadyTerminal,
    ChallengeExpired,
    NotActive,
    UnknownAccessor,
    UnknownChallenge,
    WrongAuthority,
)
from .policy.ast import CHALLENGE_KINDS, DENY, Effect
from .world import ResourceDescriptor, WorldStore

STATES = ("pending", "passed", "failed", "expired")
TERMINAL = frozenset({"passed", "failed", "expired"})
LEVELS = {"soft": 1, "hard": 2}
LIFT_AUTHORITIES = ("challenge_pass", "manual")
# passing one of these proves presence and clears a soft containment
PRESENCE_KINDS = frozenset({"verification", "biometric"})
SOFT_OBLIGATION = Effect("challenge", "verification")

_TOKEN_RE = re.compile(r"[\w:-]+")


@dataclasses.dataclass(frozen=True)
class Challenge:
    id: str
    kind: str
    subject_accessor: str
    linked_decision: str
    issued_ts: int
    expiry: int
    state: str = "pending"
    response_payload: Mapping[str, str] = dataclasses.field(default_factory=dict)
    resource_id: str | None = None
    operation: str | None = None
    requester: str | None = None
    investigate_on_fail: bool = False

    @property
    def expires_at(self) -> int:
        return self.issued_ts + self.expiry

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "kind": self.kind, "subject_accessor": self.subject_accessor,
                "linked_decision": self.linked_decision, "state": self.state,
                "issued_ts": self.issued_ts, "expiry": self.expiry,
                "response_payload": dict(self.response_payload), "resource_id": self.resource_id,
                "operation": self.operation, "requester": self.requester,
                "investigate_on_fail": self.investigate_on_fail}


@dataclasses.dataclass(frozen=True)
class Containment:
    id: str
    accessor_id: str
    level: str
    reason: str
    created_ts: int
    lift_authority: str
    lifted: bool = False
    lifted_ts: int | None = None
    lift_reason: str = ""

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


@dataclasses.dataclass(frozen=True)
class Grant:
    """A passed challenge that discharges the same obligation on retry."""

    kind: str
    expires_at: int


def justification_tokens(text: str) -> frozenset[str]:
    return frozenset(_TOKEN_RE.findall(text.lower()))


def verify_justification(text: str, resource: ResourceDescriptor) -> int:
    """Number of resource topic tags mentioned in the justification."""
    return len(justification_tokens(text) & resource.topic_tags)


def _truthy(v: Any) -> bool:
    return str(v).strip().lower() == "true"


class ChallengeService:
    """Single-writer tables of challenges, containments and grants.

    ``on_fail`` is called with a failed challenge whose originating rule
    asked for an investigation.
    """

    def __init__(self, world: WorldStore, clock: Any, expiry: int, grant_ttl: int,
                 on_fail: Callable[[Challenge], None] | None = None):
        self.world = world
        self.clock = clock
        self.expiry = expiry
        self.grant_ttl = grant_ttl
        self.on_fail = on_fail
        self._lock = threading.RLock()
        self._challenges: dict[str, Challenge] = {}
        self._pending_index: dict[tuple[str, str, str], str] = {}
        self._containments: dict[str, Containment] = {}
        # published copy-on-write views read by the fast path
        self._active: Mapping[str, Containment] = MappingProxyType({})
        self._grants: Mapping[tuple[str, str, str | None], tuple[Grant, ...]] = MappingProxyType({})
        self._seq = 0

    def _next_id(self, prefix: str) -> str:
        self._seq += 1
        return f"{prefix}-{self._seq:06d}"

    def _require_accessor(self, accessor_id: str) -> None:
        if accessor_id not in self.world.snapshot().accessors:
            raise UnknownAccessor(f"unknown accessor {accessor_id!r}")

    # -- challenges -----------------------------------------------------------

    def issue(self, kind: str, subject: str, linked_decision: str, *,
              resource_id: str | None = None, operation: str | None = None,
              requester: str | None = None, investigate_on_fail: bool = False) -> Challenge:
        if kind not in CHALLENGE_KINDS:
            raise ValueError(f"unknown challenge kind {kind!r}")
        self._require_accessor(subject)
        with self._lock:
            key = (kind, subject, linked_decision)
            existing = self._pending_index.get(key)
            if existing is not None and self._challenges[existing].state == "pending":
                return self._challenges[existing]
            ch = Challenge(self._next_id("ch"), kind, subject, linked_decision,
                           self.clock.now(), self.expiry, resource_id=resource_id,
                           operation=operation, requester=requester,
                           investigate_on_fail=investigate_on_fail)
            self._challenges[ch.id] = ch
            self._pending_index[key] = ch.id
            return ch

    def get(self, challenge_id: str) -> Challenge:
        try:
            return self._challenges[challenge_id]
        except KeyError:
            raise UnknownChallenge(f"unknown challenge {challenge_id!r}") from None

    def challenges(self) -> list[Challenge]:
        return list(self._challenges.values())

    def _set_state(self, ch: Challenge, state: str, payload: Mapping[str, str]) -> Challenge:
        ch = dataclasses.replace(ch, state=state, response_payload=MappingProxyType(dict(payload)))
        self._challenges[ch.id] = ch
        self._pending_index.pop((ch.kind, ch.subject_accessor, ch.linked_decision), None)
        return ch

    def _adjudicate(self, ch: Challenge, payload: Mapping[str, str]) -> bool:
        snap = self.world.snapshot()
        if ch.kind in PRESENCE_KINDS:
            return _truthy(payload.get("asserted", ""))
        resource = snap.resources.get(ch.resource_id or "")
        if ch.kind == "justification":
            return resource is not None and verify_justification(payload.get("text", ""), resource) >= 1
        approver = payload.get("approver", "")
        if not _truthy(payload.get("approved", "true")):
            return False
        if not approver or approver == ch.subject_accessor or approver not in snap.accessors:
            return False
        if ch.kind == "approval_owner":
            return resource is not None and snap.accessors[approver].team_id == resource.owning_team
        if ch.kind == "approval_manager":
            subject = snap.accessors.get(ch.subject_accessor)
            return subject is not None and subject.manager == approver
        return False

    def respond(self, challenge_id: str, payload: Mapping[str, Any]) -> str:
        payload = {str(k): str(v) for k, v in payload.items()}
        failed: Challenge | None = None
        with self._lock:
            ch = self.get(challenge_id)
            if ch.state in TERMINAL:
                raise AlreadyTerminal(f"challenge {challenge_id} is already {ch.state}")
            now = self.clock.now()
            if now > ch.expires_at:
                self._set_state(ch, "expired", payload)
                raise ChallengeExpired(f"challenge {challenge_id} expired at {ch.expires_at}")
            passed = self._adjudicate(ch, payload)
            ch = self._set_state(ch, "passed" if passed else "failed", payload)
            if passed:
                self._grant(ch, now)
                active = self._active.get(ch.subject_accessor)
                if (active is not None and active.level == "soft"
                        and active.lift_authority == "challenge_pass" and ch.kind in PRESENCE_KINDS):
                    self._lift(active, "challenge_pass", f"passed {ch.id}")
            elif ch.investigate_on_fail:
                failed = ch
        if failed is not None and self.on_fail is not None:
            self.on_fail(failed)
        return ch.state

    def expire_due(self) -> list[str]:
        """Mark every overdue pending challenge expired."""
        now = self.clock.now()
        with self._lock:
            due = [c for c in self._challenges.values()
                   if c.state == "pending" and now > c.expires_at]
            for c in due:
                self._set_state(c, "expired", {})
            return [c.id for c in due]

    def _grant(self, ch: Challenge, now: int) -> None:
        key = (ch.subject_accessor, ch.resource_id or "", ch.operation)
        grants = dict(self._grants)
        live = tuple(g for g in grants.get(key, ()) if g.expires_at >= now and g.kind != ch.kind)
        grants[key] = live + (Grant(ch.kind, now + self.grant_ttl),)
        self._grants = MappingProxyType(grants)

    def granted_kinds(self, subject: str, resource_id: str, operation: str, now: int) -> frozenset[str]:
        return frozenset(g.kind for g in self._grants.get((subject, resource_id, operation), ())
                         if g.expires_at >= now)

    # -- containments -----------------------------------------------------------

    def apply_containment(self, accessor_id: str, level: str, reason: str,
                          lift_authority: str | None = None) -> Containment:
        if level not in LEVELS:
            raise ValueError(f"unknown containment level {level!r}")
        self._require_accessor(accessor_id)
        if level == "hard":
            lift_authority = "manual"
        elif lift_authority is None:
            lift_authority = "challenge_pass"
        if lift_authority not in LIFT_AUTHORITIES:
            raise ValueError(f"unknown lift authority {lift_authority!r}")
        with self._lock:
            current = self._active.get(accessor_id)
            if current is not None:
                if LEVELS[current.level] >= LEVELS[level]:
                    return current
                self._lift(current, "manual", "superseded by stronger containment")
            c = Containment(self._next_id("ct"), accessor_id, level, reason, self.clock.now(),
                            lift_authority)
            self._containments[c.id] = c
            active = dict(self._active)
            active[accessor_id] = c
            self._active = MappingProxyType(active)
            return c

    def _lift(self, c: Containment, authority: str, reason: str) -> Containment:
        c = dataclasses.replace(c, lifted=True, lifted_ts=self.clock.now(),
                                lift_reason=f"{authority}: {reason}" if reason else authority)
        self._containments[c.id] = c
        active = dict(self._active)
        if active.get(c.accessor_id) is not None and active[c.accessor_id].id == c.id:
            del active[c.accessor_id]
        self._active = MappingProxyType(active)
        return c

    def lift_containment(self, containment_id: str, authority: str, reason: str = "") -> Containment:
        if authority not in LIFT_AUTHORITIES:
            raise ValueError(f"unknown lift authority {authority!r}")
        with self._lock:
            c = self._containments.get(containment_id)
            if c is None or c.lifted:
                raise NotActive(f"containment {containment_id} is not active")
            if authority != "manual" and c.lift_authority != authority:
                raise WrongAuthority(
                    f"{c.level} containment {containment_id} can only be lifted by {c.lift_authority}")
            return self._lift(c, authority, reason)

    def containment(self, containment_id: str) -> Containment | None:
        return self._containments.get(containment_id)

    def containments(self, accessor_id: str | None = None) -> list[Containment]:
        return [c for c in self._containments.values()
                if accessor_id is None or c.accessor_id == accessor_id]

    def active_containment(self, accessor_id: str) -> Containment | None:
        """Strongest active containment on the accessor or, for agents, its human."""
        active = self._active
        mine = active.get(accessor_id)
        acc = self.world.snapshot().accessors.get(accessor_id)
        if acc is not None and acc.kind == "agent" and acc.controlling_human:
            theirs = active.get(acc.controlling_human)
            if theirs is not None and (mine is None or LEVELS[theirs.level] > LEVELS[mine.level]):
                return theirs
        return mine

    def active_obligations(self, accessor_id: str) -> frozenset[Effect]:
        c = self.active_containment(accessor_id)
        if c is None:
            return frozenset()
        return frozenset({DENY}) if c.level == "hard" else frozenset({SOFT_OBLIGATION})
