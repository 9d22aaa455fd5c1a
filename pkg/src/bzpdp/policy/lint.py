"""Static checks over a parsed policy set.

Errors (unknown attributes or builtins, type mismatches) block compilation.
Warnings (constant-false conditions, shadowed rules) are advisory.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Any, Iterator

from .ast import BoolOp, Builtin, Compare, Expr, Literal, Not, Path, PolicySet, Rule, SetLiteral, walk
from .schema import BOOL, DEFAULT_SCHEMA, NUMBER, STRING, AttributeSchema, AttrType

ERROR_CODES = frozenset({"unknown-attribute", "unknown-builtin", "type-mismatch"})
# enumeration budget for constant-false detection
MAX_ASSIGNMENTS = 1 << 16


@dataclass(frozen=True)
class Diagnostic:
    code: str
    rule: str
    message: str
    line: int = 0
    col: int = 0

    @property
    def severity(self) -> str:
        return "error" if self.code in ERROR_CODES else "warning"

    def __str__(self) -> str:
        return f"{self.rule}:{self.line}:{self.col}: {self.severity} {self.code}: {self.message}"

    def to_dict(self) -> dict[str, Any]:
        return {"code": self.code, "severity": self.severity, "rule": self.rule,
                "message": self.message, "line": self.line, "col": self.col}


_LITERAL_TYPES = {"string": STRING, "number": NUMBER, "bool": BOOL}


class _TypeChecker:
    def __init__(self, rule: Rule, schema: AttributeSchema):
        self.rule = rule
        self.schema = schema
        self.diags: list[Diagnostic] = []

    def report(self, code: str, node: Any, message: str) -> None:
        span = getattr(node, "span", None) or self.rule.span
        line, col = (span.line, span.col) if span else (0, 0)
        self.diags.append(Diagnostic(code, self.rule.name, message, line, col))

    def check(self, e: Expr) -> AttrType | None:
        """Type of ``e``; ``None`` when unknown (an error was already reported)."""
        if isinstance(e, Literal):
            return _LITERAL_TYPES[e.kind]
        if isinstance(e, Path):
            t = self.schema.lookup(e.dotted)
            if t is None:
                self.report("unknown-attribute", e, f"unknown attribute {e.dotted!r}")
            return t
        if isinstance(e, SetLiteral):
            kinds = {i.kind for i in e.items}
            if len(kinds) > 1:
                self.report("type-mismatch", e, "set literal mixes element types")
                return None
            return AttrType("set", elem=kinds.pop() if kinds else None)
        if isinstance(e, Builtin):
            t = self.schema.builtins.get(e.name)
            if t is None:
                self.report("unknown-builtin", e, f"unknown builtin {e.name}()")
            return t
        if isinstance(e, Not):
            self._want_bool(e.operand, "operand of '!'")
            return BOOL
        if isinstance(e, BoolOp):
            self._want_bool(e.left, f"left operand of '{e.op}'")
            self._want_bool(e.right, f"right operand of '{e.op}'")
            return BOOL
        if isinstance(e, Compare):
            self._compare(e)
            return BOOL
        raise TypeError(e)

    def _want_bool(self, e: Expr, what: str) -> None:
        t = self.check(e)
        if t is not None and t.kind != "bool":
            self.report("type-mismatch", e, f"{what} must be bool, found {t}")

    def _compare(self, e: Compare) -> None:
        lt = self.check(e.left)
        rt = self.check(e.right)
        if lt is None or rt is None:
            return
        op = e.op
        if op == "in":
            if rt.kind != "set":
                self.report("type-mismatch", e, f"right operand of 'in' must be a set, found {rt}")
                return
            if rt.elem is None:  # empty literal
                return
            if lt.kind == "set" or lt.kind == "bool":
                self.report("type-mismatch", e, f"cannot test {lt} membership in {rt}")
            elif lt.kind == "enum":
                if rt.elem != "string":
                    self.report("type-mismatch", e, f"cannot test {lt} membership in {rt}")
                elif isinstance(e.right, SetLiteral):
                    for item in e.right.items:
                        self._member(lt, item, e)
            elif lt.kind != rt.elem:
                self.report("type-mismatch", e, f"cannot test {lt} membership in {rt}")
            return
        if lt.kind == "enum" or rt.kind == "enum":
            self._enum_compare(e, lt, rt)
            return
        if lt.kind == "set" or rt.kind == "set":
            self.report("type-mismatch", e, f"sets only support 'in', not '{op}'")
            return
        if lt.kind != rt.kind:
            self.report("type-mismatch", e, f"cannot compare {lt} with {rt}")
            return
        if op not in ("==", "!=") and lt.kind != "number":
            self.report("type-mismatch", e, f"'{op}' needs numbers or an ordered enum, found {lt}")

    def _member(self, t: AttrType, lit: Literal, e: Expr) -> None:
        if lit.kind != "string" or lit.value not in t.values:
            self.report("type-mismatch", e, f"{lit.value!r} is not a member of {t}")

    def _enum_compare(self, e: Compare, lt: AttrType, rt: AttrType) -> None:
        enum_t = lt if lt.kind == "enum" else rt
        other_t, other = (rt, e.right) if lt.kind == "enum" else (lt, e.left)
        if other_t.kind == "enum":
            if other_t.values != enum_t.values:
                self.report("type-mismatch", e, f"cannot compare {lt} with {rt}")
                return
        elif isinstance(other, Literal):
            self._member(enum_t, other, e)
        else:
            self.report("type-mismatch", e, f"cannot compare {lt} with {rt}")
            return
        if e.op not in ("==", "!=") and not enum_t.ordered:
            self.report("type-mismatch", e, f"'{e.op}' needs an ordered enum, {enum_t} is unordered")


# -- constant-false detection ---------------------------------------------

def _enum_path(e: Expr, schema: AttributeSchema) -> AttrType | None:
    if isinstance(e, Path):
        t = schema.lookup(e.dotted)
        if t is not None and t.kind == "enum":
            return t
    return None


def _decidable(e: Compare, schema: AttributeSchema) -> bool:
    """A comparison whose value depends only on enum paths and constants."""
    sides = (e.left, e.right)
    if not any(_enum_path(s, schema) for s in sides):
        return False
    return all(_enum_path(s, schema) or isinstance(s, (Literal, SetLiteral)) for s in sides)


def _atoms(e: Expr, schema: AttributeSchema) -> Iterator[Expr]:
    """Boolean leaves that are not decidable from enum values alone."""
    if isinstance(e, Not):
        yield from _atoms(e.operand, schema)
    elif isinstance(e, BoolOp):
        yield from _atoms(e.left, schema)
        yield from _atoms(e.right, schema)
    elif isinstance(e, Compare):
        if not _decidable(e, schema):
            yield e
    elif isinstance(e, Literal):
        return
    else:
        yield e


def _abstract_eval(e: Expr, schema: AttributeSchema, env: dict[str, str],
                   free: dict[Expr, bool]) -> Any:
    if isinstance(e, Not):
        return not _abstract_eval(e.operand, schema, env, free)
    if isinstance(e, BoolOp):
        left = _abstract_eval(e.left, schema, env, free)
        right = _abstract_eval(e.right, schema, env, free)
        return (left and right) if e.op == "&&" else (left or right)
    if isinstance(e, Literal):
        return e.value
    if e in free:
        return free[e]
    assert isinstance(e, Compare)

    def val(x: Expr) -> Any:
        if isinstance(x, Path):
            return env[x.dotted]
        if isinstance(x, SetLiteral):
            return x.values
        return x.value  # type: ignore[union-attr]

    lv, rv = val(e.left), val(e.right)
    if e.op == "in":
        return lv in rv
    if e.op == "==":
        return lv == rv
    if e.op == "!=":
        return lv != rv
    t = _enum_path(e.left, schema) or _enum_path(e.right, schema)
    lr, rr = t.rank(lv), t.rank(rv)  # type: ignore[union-attr]
    return {"<": lr < rr, "<=": lr <= rr, ">": lr > rr, ">=": lr >= rr}[e.op]


def is_constant_false(cond: Expr, schema: AttributeSchema = DEFAULT_SCHEMA) -> bool | None:
    """True if no enum assignment makes ``cond`` hold; ``None`` if undecided.

    Non-enum leaves are treated as free booleans, so a ``True`` answer is
    sound but conditions that are unsatisfiable only for numeric reasons
    are not caught.
    """
    enum_paths = sorted({n.dotted for n in walk(cond) if _enum_path(n, schema)})
    domains = [schema.lookup(p).values for p in enum_paths]  # type: ignore[union-attr]
    atoms = list(dict.fromkeys(_atoms(cond, schema)))
    size = 2 ** len(atoms)
    for d in domains:
        size *= len(d)
    if size > MAX_ASSIGNMENTS:
        return None
    for combo in itertools.product(*domains):
        env = dict(zip(enum_paths, combo))
        for bits in itertools.product((False, True), repeat=len(atoms)):
            if _abstract_eval(cond, schema, env, dict(zip(atoms, bits))):
                return False
    return True


def lint(ps: PolicySet, schema: AttributeSchema = DEFAULT_SCHEMA) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    for idx, rule in enumerate(ps.rules):
        checker = _TypeChecker(rule, schema)
        root_t = checker.check(rule.condition)
        if root_t is not None and root_t.kind != "bool":
            checker.report("type-mismatch", rule.condition, f"condition must be bool, found {root_t}")
        diags.extend(checker.diags)
        if checker.diags:
            continue
        if is_constant_false(rule.condition, schema):
            line, col = (rule.span.line, rule.span.col) if rule.span else (0, 0)
            diags.append(Diagnostic("constant-false", rule.name,
                                    "condition can never hold", line, col))
        for earlier in ps.rules[:idx]:
            if earlier.condition == rule.condition:
                line, col = (rule.span.line, rule.span.col) if rule.span else (0, 0)
                diags.append(Diagnostic("shadowed", rule.name,
                                        f"condition identical to earlier rule {earlier.name!r}",
                                        line, col))
                break
    return diags


def errors(diags: list[Diagnostic]) -> list[Diagnostic]:
    return [d for d in diags if d.severity == "error"]
