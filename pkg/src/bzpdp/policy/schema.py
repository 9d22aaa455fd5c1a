"""Attribute schema: the typed vocabulary conditions may reference."""
from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

from ..world import ACCESSOR_KINDS, RISK_TIERS, SENSITIVITY_LEVELS


@dataclass(frozen=True)
class AttrType:
    kind: str  # string | number | bool | enum | set
    values: tuple[str, ...] = ()  # enum members, in order
    ordered: bool = False
    elem: str | None = None  # element kind for sets

    def __str__(self) -> str:
        if self.kind == "enum":
            return "enum{" + ",".join(self.values) + "}"
        if self.kind == "set":
            return f"set<{self.elem}>"
        return self.kind

    def rank(self, value: str) -> int:
        return self.values.index(value)


STRING = AttrType("string")
NUMBER = AttrType("number")
BOOL = AttrType("bool")
STRING_SET = AttrType("set", elem="string")


def enum(*values: str, ordered: bool = False) -> AttrType:
    return AttrType("enum", tuple(values), ordered)


@dataclass(frozen=True)
class AttributeSchema:
    paths: Mapping[str, AttrType]
    # namespaces whose every two-part path ``ns.name`` exists with this type
    open_namespaces: Mapping[str, AttrType] = field(default_factory=dict)
    builtins: Mapping[str, AttrType] = field(default_factory=dict)

    def lookup(self, dotted: str) -> AttrType | None:
        t = self.paths.get(dotted)
        if t is not None:
            return t
        ns, _, rest = dotted.partition(".")
        if rest and "." not in rest:
            return self.open_namespaces.get(ns)
        return None

    def enum_paths(self) -> dict[str, AttrType]:
        return {p: t for p, t in self.paths.items() if t.kind == "enum"}


DEFAULT_SCHEMA = AttributeSchema(
    paths=MappingProxyType({
        "accessor.id": STRING,
        "accessor.kind": enum(*ACCESSOR_KINDS),
        "accessor.job_function": STRING,
        "accessor.role": STRING,
        "accessor.seniority": STRING,
        "accessor.team_id": STRING,
        "accessor.controlling_human": STRING,
        "accessor.static_risk_tier": enum(*RISK_TIERS, ordered=True),
        "accessor.topic_tags": STRING_SET,
        "resource.id": STRING,
        "resource.sensitivity": enum(*SENSITIVITY_LEVELS, ordered=True),
        "resource.data_type": STRING,
        "resource.owning_team": STRING,
        "resource.topic_tags": STRING_SET,
        "resource.authorized_worker_functions": STRING_SET,
        "request.operation": STRING,
        "request.intent_tags": STRING_SET,
    }),
    open_namespaces=MappingProxyType({"risk": NUMBER}),
    builtins=MappingProxyType({
        "assignment_covers": BOOL,
        "crossover": NUMBER,
        "intent_alignment": NUMBER,
    }),
)
