"""Enterprise world model: who the accessors are, what the resources are,
and what each accessor is currently assigned to work on.

Writers publish whole immutable :class:`WorldSnapshot` objects; readers grab
the current one with :meth:`WorldStore.snapshot` and keep using it without
locks.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import threading
from types import MappingProxyType
from typing import Any, Iterable, Iterator, Mapping

from .errors import (
    InvalidReference,
    InvariantViolation,
    UnknownEntity,
    UnknownTeam,
)

SENSITIVITY_LEVELS = ("public", "internal", "confidential", "highly_confidential")
SENSITIVITY_RANK = {name: i for i, name in enumerate(SENSITIVITY_LEVELS)}
RISK_TIERS = ("low", "elevated", "high")
ACCESSOR_KINDS = ("human", "agent")
CUSTOMER_TAG_PREFIX = "customer:"


def _tags(values: Iterable[str] | None) -> frozenset[str]:
    return frozenset(str(v).strip().lower() for v in (values or ()) if str(v).strip())


def jaccard(a: frozenset[str] | set[str], b: frozenset[str] | set[str]) -> float:
    if not a or not b:
        return 0.0
    return len(a & b) / len(a | b)


@dataclasses.dataclass(frozen=True)
class OrgNode:
    id: str
    name: str = ""
    topic_tags: frozenset[str] = frozenset()
    parent: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "topic_tags", _tags(self.topic_tags))

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "OrgNode":
        return cls(id=d["id"], name=d.get("name", ""), topic_tags=_tags(d.get("topic_tags")),
                   parent=d.get("parent"))

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "name": self.name, "topic_tags": sorted(self.topic_tags),
                "parent": self.parent}


@dataclasses.dataclass(frozen=True)
class AccessorProfile:
    id: str
    kind: str
    job_function: str
    role: str
    seniority: str
    team_id: str
    controlling_human: str | None = None
    static_risk_tier: str = "low"
    manager: str | None = None
    # derived from the org graph on publish; any supplied value is replaced
    topic_tags: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        if self.kind not in ACCESSOR_KINDS:
            raise InvariantViolation(f"accessor {self.id}: bad kind {self.kind!r}")
        if self.static_risk_tier not in RISK_TIERS:
            raise InvariantViolation(
                f"accessor {self.id}: bad static_risk_tier {self.static_risk_tier!r}")
        object.__setattr__(self, "topic_tags", _tags(self.topic_tags))

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "AccessorProfile":
        return cls(
            id=d["id"], kind=d.get("kind", "human"), job_function=d.get("job_function", ""),
            role=d.get("role", ""), seniority=d.get("seniority", ""), team_id=d["team_id"],
            controlling_human=d.get("controlling_human"),
            static_risk_tier=d.get("static_risk_tier", "low"), manager=d.get("manager"),
        )

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["topic_tags"] = sorted(self.topic_tags)
        return d


@dataclasses.dataclass(frozen=True)
class ResourceDescriptor:
    id: str
    sensitivity: str
    data_type: str
    owning_team: str
    topic_tags: frozenset[str] = frozenset()
    authorized_worker_functions: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        if self.sensitivity not in SENSITIVITY_RANK:
            raise InvariantViolation(f"resource {self.id}: bad sensitivity {self.sensitivity!r}")
        object.__setattr__(self, "topic_tags", _tags(self.topic_tags))
        object.__setattr__(self, "authorized_worker_functions",
                           frozenset(self.authorized_worker_functions))
        if SENSITIVITY_RANK[self.sensitivity] >= SENSITIVITY_RANK["confidential"] and not self.topic_tags:
            raise InvariantViolation(f"resource {self.id}: confidential data needs topic_tags")

    @property
    def sensitivity_rank(self) -> int:
        return SENSITIVITY_RANK[self.sensitivity]

    @property
    def customers(self) -> frozenset[str]:
        n = len(CUSTOMER_TAG_PREFIX)
        return frozenset(t[n:] for t in self.topic_tags if t.startswith(CUSTOMER_TAG_PREFIX))

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ResourceDescriptor":
        return cls(id=d["id"], sensitivity=d["sensitivity"], data_type=d.get("data_type", ""),
                   owning_team=d["owning_team"], topic_tags=_tags(d.get("topic_tags")),
                   authorized_worker_functions=frozenset(d.get("authorized_worker_functions", ())))

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "sensitivity": self.sensitivity, "data_type": self.data_type,
                "owning_team": self.owning_team, "topic_tags": sorted(self.topic_tags),
                "authorized_worker_functions": sorted(self.authorized_worker_functions)}


@dataclasses.dataclass(frozen=True)
class WorkAssignment:
    accessor_id: str
    active_from: int
    active_to: int
    scope_customers: frozenset[str] = frozenset()
    scope_topics: frozenset[str] = frozenset()
    scope_teams: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        if not self.active_from < self.active_to:
            raise InvariantViolation(
                f"assignment for {self.accessor_id}: active_from must precede active_to")
        object.__setattr__(self, "scope_customers", _tags(self.scope_customers))
        object.__setattr__(self, "scope_topics", _tags(self.scope_topics))
        object.__setattr__(self, "scope_teams", frozenset(self.scope_teams))

    @property
    def key(self) -> tuple[str, int]:
        return (self.accessor_id, self.active_from)

    def active_at(self, ts: int) -> bool:
        return self.active_from <= ts < self.active_to

    def overlaps(self, other: "WorkAssignment") -> bool:
        return self.active_from < other.active_to and other.active_from < self.active_to

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "WorkAssignment":
        return cls(accessor_id=d["accessor_id"], active_from=int(d["active_from"]),
                   active_to=int(d["active_to"]),
                   scope_customers=_tags(d.get("scope_customers")),
                   scope_topics=_tags(d.get("scope_topics")),
                   scope_teams=frozenset(d.get("scope_teams", ())))

    def to_dict(self) -> dict[str, Any]:
        return {"accessor_id": self.accessor_id, "active_from": self.active_from,
                "active_to": self.active_to, "scope_customers": sorted(self.scope_customers),
                "scope_topics": sorted(self.scope_topics), "scope_teams": sorted(self.scope_teams)}


Entity = AccessorProfile | ResourceDescriptor | WorkAssignment | OrgNode


def derive_team_attributes(graph: Mapping[str, OrgNode], team_id: str) -> frozenset[str]:
    """Union of the team's topic tags with those of every ancestor."""
    if team_id not in graph:
        raise UnknownTeam(f"unknown team {team_id!r}")
    tags: set[str] = set()
    seen: set[str] = set()
    node_id: str | None = team_id
    while node_id is not None and node_id in graph and node_id not in seen:
        seen.add(node_id)
        node = graph[node_id]
        tags |= node.topic_tags
        node_id = node.parent
    return frozenset(tags)


@dataclasses.dataclass(frozen=True)
class WorldSnapshot:
    version: int
    org: Mapping[str, OrgNode]
    accessors: Mapping[str, AccessorProfile]
    resources: Mapping[str, ResourceDescriptor]
    # per accessor, sorted by active_from
    assignments: Mapping[str, tuple[WorkAssignment, ...]]

    def accessor(self, accessor_id: str) -> AccessorProfile:
        try:
            return self.accessors[accessor_id]
        except KeyError:
            raise UnknownEntity(f"unknown accessor {accessor_id!r}") from None

    def resource(self, resource_id: str) -> ResourceDescriptor:
        try:
            return self.resources[resource_id]
        except KeyError:
            raise UnknownEntity(f"unknown resource {resource_id!r}") from None

    def principal(self, accessor_id: str) -> AccessorProfile:
        """The human an accessor acts for: itself, or an agent's controlling human."""
        acc = self.accessor(accessor_id)
        if acc.kind == "agent":
            return self.accessor(acc.controlling_human)  # type: ignore[arg-type]
        return acc

    def active_assignment(self, accessor_id: str, at: int) -> WorkAssignment | None:
        for a in self.assignments.get(accessor_id, ()):
            if a.active_at(at):
                return a
        return None

    def team_members(self, team_id: str) -> frozenset[str]:
        return frozenset(a.id for a in self.accessors.values() if a.team_id == team_id)

    def iter_entities(self) -> Iterator[Entity]:
        yield from self.org.values()
        yield from self.accessors.values()
        yield from self.resources.values()
        for group in self.assignments.values():
            yield from group

    def to_document(self) -> dict[str, Any]:
        return {
            "org": [self.org[k].to_dict() for k in sorted(self.org)],
            "accessors": [self.accessors[k].to_dict() for k in sorted(self.accessors)],
            "resources": [self.resources[k].to_dict() for k in sorted(self.resources)],
            "assignments": [a.to_dict() for k in sorted(self.assignments)
                            for a in self.assignments[k]],
        }

    def checksum(self) -> str:
        blob = json.dumps({"version": self.version, **self.to_document()}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()


def assignment_covers(accessor_id: str, resource_id: str, snapshot: WorldSnapshot,
                      at: int) -> bool:
    """Whether the accessor's active assignment at ``at`` covers the resource.

    Agents are judged by their controlling human's assignment.
    """
    resource = snapshot.resource(resource_id)
    principal = snapshot.principal(accessor_id)
    a = snapshot.active_assignment(principal.id, at)
    if a is None:
        return False
    return (resource.owning_team in a.scope_teams
            or bool(resource.topic_tags & a.scope_topics)
            or bool(resource.customers & a.scope_customers))


def subject_crossover(accessor_id: str, resource_id: str, snapshot: WorldSnapshot) -> float:
    return jaccard(snapshot.accessor(accessor_id).topic_tags,
                   snapshot.resource(resource_id).topic_tags)


def world_violations(snapshot: WorldSnapshot) -> list[str]:
    """Every invariant breach in a snapshot (empty list for a valid world)."""
    out: list[str] = []
    org = snapshot.org
    for node in org.values():
        if node.parent is not None and node.parent not in org:
            out.append(f"org node {node.id}: unknown parent {node.parent}")
        seen: set[str] = set()
        cur: str | None = node.id
        while cur is not None and cur in org:
            if cur in seen:
                out.append(f"org node {node.id}: cycle")
                break
            seen.add(cur)
            cur = org[cur].parent
    for acc in snapshot.accessors.values():
        if acc.team_id not in org:
            out.append(f"accessor {acc.id}: unknown team {acc.team_id}")
            continue
        if acc.kind == "agent":
            human = snapshot.accessors.get(acc.controlling_human or "")
            if human is None or human.kind != "human":
                out.append(f"agent {acc.id}: controlling_human must name a human accessor")
        elif acc.controlling_human is not None:
            out.append(f"human {acc.id}: controlling_human must be absent")
        if acc.manager is not None and acc.manager not in snapshot.accessors:
            out.append(f"accessor {acc.id}: unknown manager {acc.manager}")
        if derive_team_attributes(org, acc.team_id) != acc.topic_tags:
            out.append(f"accessor {acc.id}: topic_tags out of date")
    for res in snapshot.resources.values():
        if res.owning_team not in org:
            out.append(f"resource {res.id}: unknown owning team {res.owning_team}")
    for accessor_id, group in snapshot.assignments.items():
        if accessor_id not in snapshot.accessors:
            out.append(f"assignment: unknown accessor {accessor_id}")
        for i, a in enumerate(group):
            for b in group[i + 1:]:
                if a.overlaps(b):
                    out.append(f"accessor {accessor_id}: overlapping assignments")
    return out


def _freeze(org: dict, accessors: dict, resources: dict, assignments: dict,
            version: int) -> WorldSnapshot:
    return WorldSnapshot(
        version=version,
        org=MappingProxyType(org),
        accessors=MappingProxyType(accessors),
        resources=MappingProxyType(resources),
        assignments=MappingProxyType(
            {k: tuple(sorted(v, key=lambda a: a.active_from)) for k, v in assignments.items()}),
    )


def _rederive(accessors: dict[str, AccessorProfile], org: Mapping[str, OrgNode]) -> None:
    for key, acc in accessors.items():
        tags = derive_team_attributes(org, acc.team_id) if acc.team_id in org else frozenset()
        if tags != acc.topic_tags:
            accessors[key] = dataclasses.replace(acc, topic_tags=tags)


class WorldStore:
    """Single-writer store publishing immutable snapshots."""

    def __init__(self) -> None:
        self._write_lock = threading.Lock()
        self._snap = _freeze({}, {}, {}, {}, 0)

    def snapshot(self) -> WorldSnapshot:
        return self._snap

    @classmethod
    def from_document(cls, doc: Mapping[str, Any]) -> "WorldStore":
        store = cls()
        store.load_document(doc)
        return store

    def load_document(self, doc: Mapping[str, Any]) -> int:
        """Replace the world wholesale with one new version."""
        org = {n.id: n for n in map(OrgNode.from_dict, doc.get("org", ()))}
        accessors = {a.id: a for a in map(AccessorProfile.from_dict, doc.get("accessors", ()))}
        resources = {r.id: r for r in map(ResourceDescriptor.from_dict, doc.get("resources", ()))}
        assignments: dict[str, list[WorkAssignment]] = {}
        for a in map(WorkAssignment.from_dict, doc.get("assignments", ())):
            assignments.setdefault(a.accessor_id, []).append(a)
        _rederive(accessors, org)
        with self._write_lock:
            candidate = _freeze(org, accessors, resources, assignments, self._snap.version + 1)
            problems = world_violations(candidate)
            if problems:
                raise _classify(problems)
            self._snap = candidate
            return candidate.version

    def upsert(self, entity: Entity) -> int:
        """Insert or replace one entity; returns the new snapshot version."""
        with self._write_lock:
            cur = self._snap
            org = dict(cur.org)
            accessors = dict(cur.accessors)
            resources = dict(cur.resources)
            assignments = {k: list(v) for k, v in cur.assignments.items()}

            if isinstance(entity, OrgNode):
                self._check_org_node(entity, org)
                org[entity.id] = entity
                _rederive(accessors, org)
            elif isinstance(entity, AccessorProfile):
                self._check_accessor(entity, cur)
                accessors[entity.id] = dataclasses.replace(
                    entity, topic_tags=derive_team_attributes(org, entity.team_id))
            elif isinstance(entity, ResourceDescriptor):
                if entity.owning_team not in org:
                    raise InvalidReference(f"resource {entity.id}: unknown team {entity.owning_team!r}")
                resources[entity.id] = entity
            elif isinstance(entity, WorkAssignment):
                if entity.accessor_id not in accessors:
                    raise InvalidReference(f"assignment: unknown accessor {entity.accessor_id!r}")
                group = [a for a in assignments.get(entity.accessor_id, []) if a.key != entity.key]
                for other in group:
                    if other.overlaps(entity):
                        raise InvariantViolation(
                            f"accessor {entity.accessor_id} already has an assignment active "
                            f"in [{other.active_from}, {other.active_to})")
                assignments[entity.accessor_id] = group + [entity]
            else:
                raise TypeError(f"cannot upsert {type(entity).__name__}")

            self._snap = _freeze(org, accessors, resources, assignments, cur.version + 1)
            return self._snap.version

    @staticmethod
    def _check_org_node(node: OrgNode, org: Mapping[str, OrgNode]) -> None:
        if node.parent is None:
            return
        if node.parent not in org:
            raise InvalidReference(f"org node {node.id}: unknown parent {node.parent!r}")
        cur: str | None = node.parent
        while cur is not None:
            if cur == node.id:
                raise InvariantViolation(f"org node {node.id}: parent link creates a cycle")
            cur = org[cur].parent

    @staticmethod
    def _check_accessor(acc: AccessorProfile, cur: WorldSnapshot) -> None:
        if acc.team_id not in cur.org:
            raise InvalidReference(f"accessor {acc.id}: unknown team {acc.team_id!r}")
        if acc.kind == "agent":
            human = cur.accessors.get(acc.controlling_human or "")
            if human is None or human.kind != "human":
                raise InvalidReference(
                    f"agent {acc.id}: controlling_human {acc.controlling_human!r} "
                    "is not a known human accessor")
        else:
            if acc.controlling_human is not None:
                raise InvariantViolation(f"human {acc.id}: controlling_human must be absent")
        if acc.manager is not None and acc.manager not in cur.accessors and acc.manager != acc.id:
            raise InvalidReference(f"accessor {acc.id}: unknown manager {acc.manager!r}")
        old = cur.accessors.get(acc.id)
        if old is not None and old.kind == "human" and acc.kind == "agent":
            if any(a.controlling_human == acc.id for a in cur.accessors.values()):
                raise InvariantViolation(f"{acc.id} controls agents and must stay human")


def _classify(problems: list[str]) -> Exception:
    msg = "; ".join(problems)
    if any("unknown" in p or "controlling_human must name" in p for p in problems):
        return InvalidReference(msg)
    return InvariantViolation(msg)
