"""Requests and the resolved context the policy is evaluated against."""
from __future__ import annotations

import dataclasses
import json
from typing import Any, Mapping

from ..errors import InvariantViolation
from ..intake import HotCache
from ..policy.evaluation import EvalContext
from ..world import WorldSnapshot, _tags, assignment_covers, jaccard


@dataclasses.dataclass(frozen=True)
class AgentContext:
    declared_intent_tags: frozenset[str] = frozenset()
    plan_summary: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "declared_intent_tags", _tags(self.declared_intent_tags))

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "AgentContext":
        return cls(_tags(d.get("declared_intent_tags")), str(d.get("plan_summary", "")))

    def to_dict(self) -> dict[str, Any]:
        return {"declared_intent_tags": sorted(self.declared_intent_tags),
                "plan_summary": self.plan_summary}


@dataclasses.dataclass(frozen=True)
class Request:
    id: str
    ts: int
    accessor_id: str
    resource_id: str
    operation: str
    agent_context: AgentContext | None = None

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Request":
        ac = d.get("agent_context")
        return cls(id=str(d["id"]), ts=int(d.get("ts") or 0), accessor_id=str(d["accessor_id"]),
                   resource_id=str(d["resource_id"]), operation=str(d["operation"]),
                   agent_context=AgentContext.from_dict(ac) if ac is not None else None)

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"id": self.id, "ts": self.ts, "accessor_id": self.accessor_id,
                             "resource_id": self.resource_id, "operation": self.operation}
        if self.agent_context is not None:
            d["agent_context"] = self.agent_context.to_dict()
        return d


@dataclasses.dataclass(frozen=True)
class RequestContext(EvalContext):
    request: Request | None = None
    snapshot_version: int = 0


def intent_alignment(agent_ctx: AgentContext | None, resource: Any) -> float:
    if agent_ctx is None:
        return 0.0
    return jaccard(agent_ctx.declared_intent_tags, resource.topic_tags)


def merged_risk(hot: HotCache, snapshot: WorldSnapshot, accessor_id: str,
                now: int) -> dict[str, float]:
    """Risk view of an accessor; agents also carry their controlling human's risk."""
    view = hot.risk_view(accessor_id, now)
    acc = snapshot.accessors[accessor_id]
    if acc.kind == "agent" and acc.controlling_human:
        for name, value in hot.risk_view(acc.controlling_human, now).items():
            if value > view.get(name, -1.0):
                view[name] = value
    return view


def build_context(req: Request, snapshot: WorldSnapshot, hot: HotCache, now: int) -> RequestContext:
    acc = snapshot.accessor(req.accessor_id)
    res = snapshot.resource(req.resource_id)
    if req.agent_context is not None and acc.kind != "agent":
        raise InvariantViolation(f"request {req.id}: agent_context on a human accessor")
    values = {
        "accessor.id": acc.id,
        "accessor.kind": acc.kind,
        "accessor.job_function": acc.job_function,
        "accessor.role": acc.role,
        "accessor.seniority": acc.seniority,
        "accessor.team_id": acc.team_id,
        "accessor.controlling_human": acc.controlling_human or "",
        "accessor.static_risk_tier": acc.static_risk_tier,
        "accessor.topic_tags": acc.topic_tags,
        "resource.id": res.id,
        "resource.sensitivity": res.sensitivity,
        "resource.data_type": res.data_type,
        "resource.owning_team": res.owning_team,
        "resource.topic_tags": res.topic_tags,
        "resource.authorized_worker_functions": res.authorized_worker_functions,
        "request.operation": req.operation,
        "request.intent_tags": (req.agent_context.declared_intent_tags
                                if req.agent_context else frozenset()),
    }
    builtins = {
        "assignment_covers": assignment_covers(acc.id, res.id, snapshot, req.ts),
        "crossover": jaccard(acc.topic_tags, res.topic_tags),
        "intent_alignment": intent_alignment(req.agent_context, res),
    }
    return RequestContext(values=values, risk=merged_risk(hot, snapshot, acc.id, now),
                          builtins=builtins, request=req, snapshot_version=snapshot.version)


@dataclasses.dataclass(frozen=True)
class Obligation:
    challenge_id: str
    kind: str

    def to_dict(self) -> dict[str, str]:
        return {"challenge_id": self.challenge_id, "kind": self.kind}


@dataclasses.dataclass(frozen=True)
class DecisionRecord:
    request_id: str
    accessor_id: str
    resource_id: str
    operation: str
    verdict: str
    obligations: tuple[Obligation, ...]
    suppressed_challenges: tuple[str, ...]
    matched_rules: tuple[str, ...]
    attributes_used: Mapping[str, Any]
    snapshot_version: int
    policy_version: int
    ts: int

    @property
    def obligation_kinds(self) -> list[str]:
        return [o.kind for o in self.obligations]

    def to_dict(self) -> dict[str, Any]:
        return {
            "request_id": self.request_id,
            "accessor_id": self.accessor_id,
            "resource_id": self.resource_id,
            "operation": self.operation,
            "verdict": self.verdict,
            "obligations": [o.to_dict() for o in self.obligations],
            "suppressed_challenges": list(self.suppressed_challenges),
            "matched_rules": list(self.matched_rules),
            "attributes_used": dict(sorted(self.attributes_used.items())),
            "snapshot_version": self.snapshot_version,
            "policy_version": self.policy_version,
            "ts": self.ts,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
