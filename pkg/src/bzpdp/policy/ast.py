"""Policy syntax tree.

Nodes compare structurally; source positions ride along in ``span`` but
are excluded from equality so a reformatted policy still equals the
original.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Union

CHALLENGE_KINDS = ("justification", "approval_manager", "approval_owner", "verification",
                   "biometric")
CONTAIN_LEVELS = ("soft", "hard")
EFFECT_KINDS = ("allow", "deny", "challenge", "contain")
BUILTINS = ("assignment_covers", "crossover", "intent_alignment")
COMPARISON_OPS = ("==", "!=", "<", "<=", ">", ">=", "in")


@dataclass(frozen=True)
class Span:
    line: int
    col: int


def _span() -> Span | None:
    return field(default=None, compare=False, repr=False)  # type: ignore[return-value]


@dataclass(frozen=True)
class Path:
    parts: tuple[str, ...]
    span: Span | None = _span()

    @property
    def dotted(self) -> str:
        return ".".join(self.parts)

    @property
    def namespace(self) -> str:
        return self.parts[0]


@dataclass(frozen=True)
class Literal:
    value: str | int | float | bool
    # bool is a subclass of int, so equality alone would conflate true and 1
    kind: str = field(init=False, default="")
    span: Span | None = _span()

    def __post_init__(self) -> None:
        v = self.value
        if isinstance(v, bool):
            k = "bool"
        elif isinstance(v, (int, float)):
            k = "number"
        elif isinstance(v, str):
            k = "string"
        else:
            raise TypeError(f"unsupported literal {v!r}")
        object.__setattr__(self, "kind", k)


@dataclass(frozen=True)
class SetLiteral:
    items: tuple[Literal, ...]
    span: Span | None = _span()

    @property
    def values(self) -> frozenset:
        return frozenset(i.value for i in self.items)


@dataclass(frozen=True)
class Builtin:
    name: str
    span: Span | None = _span()


@dataclass(frozen=True)
class Not:
    operand: "Expr"
    span: Span | None = _span()


@dataclass(frozen=True)
class BoolOp:
    op: str  # "&&" or "||"
    left: "Expr"
    right: "Expr"
    span: Span | None = _span()


@dataclass(frozen=True)
class Compare:
    op: str
    left: "Expr"
    right: "Expr"
    span: Span | None = _span()


Expr = Union[Path, Literal, SetLiteral, Builtin, Not, BoolOp, Compare]


@dataclass(frozen=True)
class Effect:
    kind: str
    arg: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in EFFECT_KINDS:
            raise ValueError(f"unknown effect {self.kind!r}")
        if self.kind == "challenge" and self.arg not in CHALLENGE_KINDS:
            raise ValueError(f"unknown challenge kind {self.arg!r}")
        if self.kind == "contain" and self.arg not in CONTAIN_LEVELS:
            raise ValueError(f"unknown containment level {self.arg!r}")
        if self.kind in ("allow", "deny") and self.arg is not None:
            raise ValueError(f"{self.kind} takes no argument")

    def __str__(self) -> str:
        return self.kind if self.arg is None else f"{self.kind}({self.arg})"


ALLOW = Effect("allow")
DENY = Effect("deny")


@dataclass(frozen=True)
class Rule:
    name: str
    condition: Expr
    effects: tuple[Effect, ...]
    investigate_on_fail: bool = False
    span: Span | None = _span()

    def __post_init__(self) -> None:
        if not self.effects:
            raise ValueError(f"rule {self.name!r} has no effects")


@dataclass(frozen=True)
class PolicySet:
    rules: tuple[Rule, ...] = ()
    schema_version: int = 1

    def __post_init__(self) -> None:
        names = [r.name for r in self.rules]
        if len(set(names)) != len(names):
            from ..errors import DuplicateRuleName
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise DuplicateRuleName(f"duplicate rule names: {', '.join(dupes)}")

    def rule(self, name: str) -> Rule:
        for r in self.rules:
            if r.name == name:
                return r
        raise KeyError(name)

    def with_rule(self, rule: Rule) -> "PolicySet":
        return dataclasses.replace(self, rules=self.rules + (rule,))


def walk(expr: Expr):
    """Pre-order traversal of an expression tree."""
    yield expr
    if isinstance(expr, Not):
        yield from walk(expr.operand)
    elif isinstance(expr, (BoolOp, Compare)):
        yield from walk(expr.left)
        yield from walk(expr.right)
    elif isinstance(expr, SetLiteral):
        yield from expr.items
