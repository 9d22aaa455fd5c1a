"""Compile a policy set into closures indexed for fast candidate selection.

Each rule condition becomes a Python closure. Rules are bucketed by the
resource sensitivities and request operations their top-level conjuncts
admit, so a request only runs the conditions of rules that could match it.
"""
from __future__ import annotations

import operator
from dataclasses import dataclass
from typing import Any, Callable, Mapping

from ..errors import CompileRejected, UnknownAttribute
from .ast import BoolOp, Builtin, Compare, Expr, Literal, Not, Path, PolicySet, SetLiteral, Span
from .evaluation import RISK_DEFAULT, RISK_NAMESPACE, EvalContext, RuleOutcome
from .lint import Diagnostic, errors, lint
from .schema import DEFAULT_SCHEMA, AttributeSchema, AttrType

SENSITIVITY_PATH = "resource.sensitivity"
OPERATION_PATH = "request.operation"

Predicate = Callable[[EvalContext], Any]

_ORDER_OPS = {"<": operator.lt, "<=": operator.le, ">": operator.gt, ">=": operator.ge}
_FLIP = {"<": ">", "<=": ">=", ">": "<", ">=": "<=", "==": "==", "!=": "!="}


@dataclass(frozen=True)
class CompiledRule:
    index: int
    name: str
    span: Span | None
    outcome: RuleOutcome
    predicate: Predicate
    sensitivities: frozenset[str]  # admitted resource sensitivities
    operations: frozenset[str] | None  # None admits every operation


class CompiledPolicySet:
    def __init__(self, rules: tuple[CompiledRule, ...], sensitivities: tuple[str, ...],
                 diagnostics: tuple[Diagnostic, ...] = ()):
        self.rules = rules
        self.diagnostics = diagnostics
        self._all = tuple(r.index for r in rules)
        known_ops = sorted({op for r in rules if r.operations for op in r.operations})
        # (sensitivity, operation or None) -> candidate rule indices, declaration order
        self._table: dict[tuple[str, str | None], tuple[int, ...]] = {}
        for s in sensitivities:
            for op in [*known_ops, None]:
                self._table[(s, op)] = tuple(
                    r.index for r in rules
                    if s in r.sensitivities
                    and (r.operations is None or (op is not None and op in r.operations)))
        self._known_ops = frozenset(known_ops)

    def __len__(self) -> int:
        return len(self.rules)

    def candidates(self, ctx: EvalContext) -> tuple[int, ...]:
        values = ctx.values
        op = values.get(OPERATION_PATH)
        if op not in self._known_ops:
            op = None
        return self._table.get((values.get(SENSITIVITY_PATH), op), self._all)

    def evaluate(self, ctx: EvalContext) -> tuple[RuleOutcome, ...]:
        rules = self.rules
        try:
            return tuple(rules[i].outcome for i in self.candidates(ctx) if rules[i].predicate(ctx))
        except KeyError as exc:
            raise UnknownAttribute(f"context is missing {exc.args[0]!r}") from None


def evaluate(cps: CompiledPolicySet, ctx: EvalContext) -> tuple[RuleOutcome, ...]:
    return cps.evaluate(ctx)


# -- closure generation -----------------------------------------------------

def _ordered_type(e: Expr, schema: AttributeSchema) -> AttrType | None:
    if isinstance(e, Path):
        t = schema.lookup(e.dotted)
        if t is not None and t.kind == "enum" and t.ordered:
            return t
    return None


def _compile_expr(e: Expr, schema: AttributeSchema) -> Predicate:
    if isinstance(e, Literal):
        v = e.value
        return lambda c: v
    if isinstance(e, Path):
        if e.namespace == RISK_NAMESPACE and len(e.parts) == 2:
            name = e.parts[1]
            return lambda c: float(c.risk.get(name, RISK_DEFAULT))
        key = e.dotted
        return lambda c: c.values[key]
    if isinstance(e, SetLiteral):
        vs = e.values
        return lambda c: vs
    if isinstance(e, Builtin):
        name = e.name
        return lambda c: c.builtins[name]
    if isinstance(e, Not):
        f = _compile_expr(e.operand, schema)
        return lambda c: not f(c)
    if isinstance(e, BoolOp):
        f = _compile_expr(e.left, schema)
        g = _compile_expr(e.right, schema)
        if e.op == "&&":
            return lambda c: bool(f(c)) and bool(g(c))
        return lambda c: bool(f(c)) or bool(g(c))
    if isinstance(e, Compare):
        return _compile_compare(e, schema)
    raise TypeError(e)


def _compile_compare(e: Compare, schema: AttributeSchema) -> Predicate:
    op = e.op
    # path against constant: the common shape, resolved without a second closure call
    if isinstance(e.left, Path) and isinstance(e.right, (Literal, SetLiteral)) \
            and e.left.namespace != RISK_NAMESPACE:
        key = e.left.dotted
        const = e.right.values if isinstance(e.right, SetLiteral) else e.right.value
        if op == "in":
            return lambda c: c.values[key] in const
        if op == "==":
            return lambda c: c.values[key] == const
        if op == "!=":
            return lambda c: c.values[key] != const
        enum_t = _ordered_type(e.left, schema)
        cmp = _ORDER_OPS[op]
        if enum_t is not None:
            rank = {v: i for i, v in enumerate(enum_t.values)}
            target = rank[const]
            return lambda c: cmp(rank[c.values[key]], target)
        return lambda c: cmp(c.values[key], const)

    f = _compile_expr(e.left, schema)
    g = _compile_expr(e.right, schema)
    if op == "in":
        return lambda c: f(c) in g(c)
    if op == "==":
        return lambda c: f(c) == g(c)
    if op == "!=":
        return lambda c: f(c) != g(c)
    cmp = _ORDER_OPS[op]
    enum_t = _ordered_type(e.left, schema) or _ordered_type(e.right, schema)
    if enum_t is not None:
        rank = {v: i for i, v in enumerate(enum_t.values)}
        return lambda c: cmp(rank[f(c)], rank[g(c)])
    return lambda c: cmp(f(c), g(c))


# -- bucketing -------------------------------------------------------------

def _conjuncts(e: Expr) -> list[Expr]:
    if isinstance(e, BoolOp) and e.op == "&&":
        return _conjuncts(e.left) + _conjuncts(e.right)
    return [e]


def _path_vs_const(e: Expr, path: str) -> tuple[str, Any] | None:
    """Normalise ``path OP const`` (either orientation) to ``(op, const)``."""
    if not isinstance(e, Compare):
        return None
    left, right, op = e.left, e.right, e.op
    if isinstance(right, Path) and right.dotted == path and isinstance(left, Literal) and op != "in":
        left, right, op = right, left, _FLIP[op]
    if not (isinstance(left, Path) and left.dotted == path):
        return None
    if op == "in" and isinstance(right, SetLiteral):
        return op, right.values
    if isinstance(right, Literal):
        return op, right.value
    return None


def _admitted_sensitivities(cond: Expr, levels: tuple[str, ...]) -> frozenset[str]:
    admitted = set(levels)
    rank = {v: i for i, v in enumerate(levels)}
    for c in _conjuncts(cond):
        hit = _path_vs_const(c, SENSITIVITY_PATH)
        if hit is None:
            continue
        op, const = hit
        if op == "in":
            allowed = {v for v in levels if v in const}
        elif op == "==":
            allowed = {const} & set(levels)
        elif op == "!=":
            allowed = set(levels) - {const}
        else:
            cmp = _ORDER_OPS[op]
            allowed = {v for v in levels if cmp(rank[v], rank[const])}
        admitted &= allowed
    return frozenset(admitted)


def _admitted_operations(cond: Expr) -> frozenset[str] | None:
    admitted: set[str] | None = None
    for c in _conjuncts(cond):
        hit = _path_vs_const(c, OPERATION_PATH)
        if hit is None or hit[0] not in ("==", "in"):
            continue
        op, const = hit
        allowed = set(const) if op == "in" else {const}
        admitted = allowed if admitted is None else admitted & allowed
    return None if admitted is None else frozenset(admitted)


def compile_policy(ps: PolicySet, schema: AttributeSchema = DEFAULT_SCHEMA) -> CompiledPolicySet:
    """Lint, then compile. Raises :class:`CompileRejected` on lint errors."""
    diags = lint(ps, schema)
    bad = errors(diags)
    if bad:
        raise CompileRejected(bad)
    sens_t = schema.lookup(SENSITIVITY_PATH)
    levels = sens_t.values if sens_t is not None else ()
    rules = tuple(
        CompiledRule(
            index=i, name=r.name, span=r.span,
            outcome=RuleOutcome(r.name, r.effects, r.investigate_on_fail),
            predicate=_compile_expr(r.condition, schema),
            sensitivities=_admitted_sensitivities(r.condition, levels),
            operations=_admitted_operations(r.condition),
        )
        for i, r in enumerate(ps.rules)
    )
    return CompiledPolicySet(rules, levels, tuple(diags))


# public alias; ``compile`` shadows the builtin only inside this namespace
compile = compile_policy
