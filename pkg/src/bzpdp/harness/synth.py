"""Reproducible synthetic worlds, event logs and policy sets.

Everything is drawn from one ``random.Random(seed)`` in a fixed order, so the
same arguments always serialize to the same bytes.
"""
from __future__ import annotations

import json
import os
import random
from pathlib import Path
from typing import Any

from ..clock import DAY, MINUTE
from ..intake import EVENT_KINDS
from ..policy.ast import CHALLENGE_KINDS
from ..world import SENSITIVITY_LEVELS

TOPICS = ("billing", "payments", "sales", "marketing", "hr", "legal", "platform", "security",
          "analytics", "support", "finance", "research", "pricing", "mobile", "infra", "data")
JOB_FUNCTIONS = ("software_engineer", "account_executive", "analyst", "sysadmin", "recruiter",
                 "support_agent", "lawyer")
OPERATIONS = ("read", "write", "export", "delete", "admin_op")
DATA_TYPES = ("document", "spreadsheet", "database", "report", "memo")
ORG_FANOUT = 3
SIM_EPOCH = 10 * DAY
_EVENT_KINDS = tuple(k for k in EVENT_KINDS if k != "signal")


def _pick_tags(rng: random.Random, lo: int, hi: int) -> list[str]:
    return sorted(rng.sample(TOPICS, rng.randint(lo, hi)))


def gen_world(rng: random.Random, n_accessors: int, n_resources: int) -> dict[str, Any]:
    n_teams = max(1, min(12, n_accessors // 4 + 1))
    org = [{"id": "org", "name": "Org", "topic_tags": [], "parent": None}]
    for i in range(n_teams):
        parent = "org" if i < ORG_FANOUT else f"team-{(i - ORG_FANOUT) // ORG_FANOUT:02d}"
        org.append({"id": f"team-{i:02d}", "name": f"Team {i}",
                    "topic_tags": _pick_tags(rng, 1, 2), "parent": parent})
    teams = [n["id"] for n in org[1:]]

    accessors: list[dict[str, Any]] = []
    humans: list[str] = []
    for i in range(n_accessors):
        aid = f"acc-{i:04d}"
        team = rng.choice(teams)
        if humans and rng.random() < 0.15:
            accessors.append({"id": aid, "kind": "agent", "job_function": "assistant",
                              "role": "agent", "seniority": "n/a", "team_id": team,
                              "controlling_human": rng.choice(humans)})
            continue
        acc = {"id": aid, "kind": "human", "job_function": rng.choice(JOB_FUNCTIONS),
               "role": rng.choice(("employee", "contractor", "admin")),
               "seniority": rng.choice(("junior", "mid", "senior")), "team_id": team,
               "static_risk_tier": rng.choice(("low", "low", "elevated", "high"))}
        if humans and rng.random() < 0.5:
            acc["manager"] = rng.choice(humans)
        accessors.append(acc)
        humans.append(aid)

    resources = []
    for i in range(n_resources):
        sens = rng.choice(SENSITIVITY_LEVELS)
        resources.append({
            "id": f"res-{i:05d}", "sensitivity": sens, "data_type": rng.choice(DATA_TYPES),
            "owning_team": rng.choice(teams), "topic_tags": _pick_tags(rng, 1, 3),
            "authorized_worker_functions": sorted(rng.sample(JOB_FUNCTIONS, rng.randint(0, 2))),
        })

    assignments = []
    for aid in humans:
        if rng.random() < 0.8:
            assignments.append({"accessor_id": aid, "active_from": 0,
                                "active_to": SIM_EPOCH + 365 * DAY,
                                "scope_customers": [], "scope_topics": _pick_tags(rng, 0, 2),
                                "scope_teams": sorted(rng.sample(teams, min(len(teams), 1)))})
    return {"org": org, "accessors": accessors, "resources": resources,
            "assignments": assignments}


def gen_events(rng: random.Random, world: dict[str, Any], n_events: int) -> list[dict[str, Any]]:
    accessors = [a["id"] for a in world["accessors"]]
    resources = [r["id"] for r in world["resources"]]
    if not accessors:
        return []
    ts = SIM_EPOCH
    out = []
    for i in range(n_events):
        ts += rng.randint(0, 2 * MINUTE)
        kind = rng.choice(_EVENT_KINDS)
        ev: dict[str, Any] = {"id": f"ev-{i:07d}", "ts": ts, "accessor_id": rng.choice(accessors),
                              "kind": kind, "resource_id": None, "operation": None, "payload": {}}
        if kind == "query":
            tags = _pick_tags(rng, 1, 2)
            if rng.random() < 0.3:
                tags.append("basic_question")
            ev["payload"] = {"tags": ",".join(tags)}
        elif resources:
            ev["resource_id"] = rng.choice(resources)
            ev["operation"] = rng.choice(OPERATIONS)
        out.append(ev)
    return out


def gen_synthetic(seed: int, n_accessors: int, n_resources: int,
                  n_events: int) -> tuple[dict[str, Any], list[dict[str, Any]]]:
    if min(n_accessors, n_resources, n_events) < 0:
        raise ValueError("counts must be non-negative")
    rng = random.Random(seed)
    world = gen_world(rng, n_accessors, n_resources)
    return world, gen_events(rng, world, n_events)


def gen_requests(seed: int, world: dict[str, Any], n: int, start: int = SIM_EPOCH) -> list[dict[str, Any]]:
    rng = random.Random(seed)
    accessors = [a["id"] for a in world["accessors"]]
    resources = [r["id"] for r in world["resources"]]
    return [{"id": f"rq-{i:07d}", "ts": start, "accessor_id": rng.choice(accessors),
             "resource_id": rng.choice(resources), "operation": rng.choice(OPERATIONS)}
            for i in range(n)]


_RISK_NAMES = ("peer_volume_anomaly", "scope_deviation", "rapid_succession",
               "knowledge_inconsistency", "exfiltration_pattern")


def gen_policy_text(seed: int, n_rules: int) -> str:
    """A lint-clean policy set of ``n_rules`` rules in the shapes real sets use."""
    rng = random.Random(seed)
    rules = []
    for i in range(n_rules):
        sens = rng.choice(SENSITIVITY_LEVELS)
        op = rng.choice(OPERATIONS)
        shape = rng.randrange(5)
        if shape == 0:
            cond = f'resource.sensitivity == "{sens}" && assignment_covers()'
            then = "allow"
        elif shape == 1:
            cond = (f'resource.sensitivity >= "{sens}" && request.operation == "{op}"'
                    f' && risk.{rng.choice(_RISK_NAMES)} >= {rng.choice((0.5, 0.8))}')
            then = f"challenge({rng.choice(CHALLENGE_KINDS)})"
        elif shape == 2:
            cond = (f'request.operation == "{op}" && !assignment_covers()'
                    f' && crossover() < {rng.choice((0.1, 0.2, 0.3))}')
            then = "challenge(approval_owner)"
        elif shape == 3:
            cond = (f'"{rng.choice(TOPICS)}" in resource.topic_tags'
                    f' && accessor.static_risk_tier >= "{rng.choice(("elevated", "high"))}"')
            then = rng.choice(("deny", "challenge(justification)"))
        else:
            cond = (f'resource.sensitivity == "{sens}" && request.operation in ["{op}", "read"]'
                    f' && accessor.kind == "{rng.choice(("human", "agent"))}"')
            then = "allow"
        rules.append(f'policy "r{i:04d}" {{\n  when {cond}\n  then {then}\n}}\n')
    return "\n".join(rules)


def write_synthetic(out_dir: str | os.PathLike[str], seed: int, n_accessors: int,
                    n_resources: int, n_events: int) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    world, events = gen_synthetic(seed, n_accessors, n_resources, n_events)
    paths = {"world": out / "world.json", "events": out / "events.ndjson"}
    paths["world"].write_text(json.dumps(world, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    paths["events"].write_text("".join(json.dumps(e, sort_keys=True, separators=(",", ":")) + "\n"
                                       for e in events), encoding="utf-8")
    return paths
