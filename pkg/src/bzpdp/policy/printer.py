"""Canonical formatter: ``parse(canonical_print(ps)) == ps`` for every valid set."""
from __future__ import annotations

import json

from .ast import BoolOp, Builtin, Compare, Expr, Literal, Not, Path, PolicySet, Rule, SetLiteral

_PREC = {"||": 1, "&&": 2}
_CMP_PREC = 3
_UNARY_PREC = 4
_ATOM_PREC = 5


def _prec(e: Expr) -> int:
    if isinstance(e, BoolOp):
        return _PREC[e.op]
    if isinstance(e, Compare):
        return _CMP_PREC
    if isinstance(e, Not):
        return _UNARY_PREC
    return _ATOM_PREC


def _wrap(e: Expr, min_prec: int) -> str:
    s = format_expr(e)
    return f"({s})" if _prec(e) < min_prec else s


def format_literal(lit: Literal) -> str:
    v = lit.value
    if lit.kind == "bool":
        return "true" if v else "false"
    if lit.kind == "string":
        return json.dumps(v, ensure_ascii=False)
    return repr(v)


def format_expr(e: Expr) -> str:
    if isinstance(e, Path):
        return e.dotted
    if isinstance(e, Literal):
        return format_literal(e)
    if isinstance(e, SetLiteral):
        return "[" + ", ".join(format_literal(i) for i in e.items) + "]"
    if isinstance(e, Builtin):
        return f"{e.name}()"
    if isinstance(e, Not):
        return "!" + _wrap(e.operand, _UNARY_PREC)
    if isinstance(e, BoolOp):
        p = _PREC[e.op]
        # left-associative: same-precedence right operands need parentheses
        return f"{_wrap(e.left, p)} {e.op} {_wrap(e.right, p + 1)}"
    if isinstance(e, Compare):
        return f"{_wrap(e.left, _UNARY_PREC)} {e.op} {_wrap(e.right, _UNARY_PREC)}"
    raise TypeError(f"not an expression: {e!r}")


def format_rule(rule: Rule) -> str:
    lines = [
        f"policy {json.dumps(rule.name, ensure_ascii=False)} {{",
        f"  when {format_expr(rule.condition)}",
        "  then " + ", ".join(str(eff) for eff in rule.effects),
    ]
    if rule.investigate_on_fail:
        lines.append("  investigate_on_fail")
    lines.append("}")
    return "\n".join(lines)


def canonical_print(ps: PolicySet) -> str:
    if not ps.rules:
        return ""
    return "\n\n".join(format_rule(r) for r in ps.rules) + "\n"
