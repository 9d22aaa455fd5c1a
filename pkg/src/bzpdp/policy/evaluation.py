"""Reference (tree-walking) interpreter.

This is the semantic ground truth; the compiled evaluator in
:mod:`bzpdp.policy.compiler` must agree with it on every context.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

from ..errors import UnknownAttribute
from .ast import BoolOp, Builtin, Compare, Effect, Expr, Literal, Not, Path, PolicySet, SetLiteral
from .schema import DEFAULT_SCHEMA, AttributeSchema, AttrType

RISK_NAMESPACE = "risk"
RISK_DEFAULT = 0.0


@dataclass(frozen=True)
class EvalContext:
    """Resolved attribute values for one request.

    ``values`` holds accessor.*, resource.* and request.* paths keyed by
    their dotted name. Risk attributes live separately in ``risk`` and read
    as 0.0 when absent.
    """

    values: Mapping[str, Any]
    risk: Mapping[str, float] = field(default_factory=dict)
    builtins: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class RuleOutcome:
    rule_name: str
    effects: tuple[Effect, ...]
    investigate_on_fail: bool = False


def _ordered_type(e: Expr, schema: AttributeSchema) -> AttrType | None:
    if isinstance(e, Path):
        t = schema.lookup(e.dotted)
        if t is not None and t.kind == "enum" and t.ordered:
            return t
    return None


def eval_expr(e: Expr, ctx: EvalContext, schema: AttributeSchema = DEFAULT_SCHEMA) -> Any:
    if isinstance(e, Literal):
        return e.value
    if isinstance(e, Path):
        if e.namespace == RISK_NAMESPACE and len(e.parts) == 2:
            return float(ctx.risk.get(e.parts[1], RISK_DEFAULT))
        try:
            return ctx.values[e.dotted]
        except KeyError:
            raise UnknownAttribute(f"context has no attribute {e.dotted!r}") from None
    if isinstance(e, SetLiteral):
        return e.values
    if isinstance(e, Builtin):
        try:
            return ctx.builtins[e.name]
        except KeyError:
            raise UnknownAttribute(f"context has no builtin {e.name}()") from None
    if isinstance(e, Not):
        return not eval_expr(e.operand, ctx, schema)
    if isinstance(e, BoolOp):
        left = bool(eval_expr(e.left, ctx, schema))
        if e.op == "&&":
            return left and bool(eval_expr(e.right, ctx, schema))
        return left or bool(eval_expr(e.right, ctx, schema))
    if isinstance(e, Compare):
        lv = eval_expr(e.left, ctx, schema)
        rv = eval_expr(e.right, ctx, schema)
        op = e.op
        if op == "in":
            return lv in rv
        if op == "==":
            return lv == rv
        if op == "!=":
            return lv != rv
        enum_t = _ordered_type(e.left, schema) or _ordered_type(e.right, schema)
        if enum_t is not None:
            lv, rv = enum_t.rank(lv), enum_t.rank(rv)
        if op == "<":
            return lv < rv
        if op == "<=":
            return lv <= rv
        if op == ">":
            return lv > rv
        if op == ">=":
            return lv >= rv
    raise TypeError(f"cannot evaluate {e!r}")


def reference_interpret(ps: PolicySet, ctx: EvalContext,
                        schema: AttributeSchema = DEFAULT_SCHEMA) -> tuple[RuleOutcome, ...]:
    """Outcomes of every rule whose condition holds, in declaration order."""
    return tuple(
        RuleOutcome(r.name, r.effects, r.investigate_on_fail)
        for r in ps.rules
        if eval_expr(r.condition, ctx, schema)
    )
