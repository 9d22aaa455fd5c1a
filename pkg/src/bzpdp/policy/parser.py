"""Tokenizer and recursive-descent parser for ``.bzp`` policy files.

Grammar::

    policyset := policy*
    policy    := "policy" STRING "{" "when" expr "then" effects ["investigate_on_fail"] "}"
    effects   := effect ("," effect)*
    effect    := "allow" | "deny" | "challenge" "(" IDENT ")" | "contain" "(" IDENT ")"
    expr      := or
    or        := and ("||" and)*
    and       := cmp ("&&" cmp)*
    cmp       := unary [("==" | "!=" | "<" | "<=" | ">" | ">=" | "in") unary]
    unary     := "!" unary | atom
    atom      := path | STRING | NUMBER | "true" | "false"
               | "[" [literal ("," literal)*] "]" | IDENT "(" ")" | "(" expr ")"

``#`` starts a comment that runs to end of line.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass

from ..errors import DuplicateRuleName, PolicySyntaxError
from .ast import (
    CHALLENGE_KINDS,
    COMPARISON_OPS,
    CONTAIN_LEVELS,
    BoolOp,
    Builtin,
    Compare,
    Effect,
    Expr,
    Literal,
    Not,
    Path,
    PolicySet,
    Rule,
    SetLiteral,
    Span,
)

KEYWORDS = frozenset({"policy", "when", "then", "investigate_on_fail", "allow", "deny",
                      "challenge", "contain", "true", "false", "in"})

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>\#[^\n]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<number>-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>==|!=|<=|>=|&&|\|\||[<>!(){}\[\],.])
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    type: str  # string | number | ident | op | eof
    value: str
    line: int
    col: int

    def describe(self) -> str:
        return "end of input" if self.type == "eof" else repr(self.value)


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    pos, line, line_start = 0, 1, 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise PolicySyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        value = m.group()
        if kind not in ("ws", "comment"):
            tokens.append(Token(kind, value, line, pos - line_start + 1))  # type: ignore[arg-type]
        newlines = value.count("\n")
        if newlines:
            line += newlines
            line_start = pos + value.rfind("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def _fail(self, *expected: str) -> PolicySyntaxError:
        t = self.tok
        return PolicySyntaxError(f"unexpected {t.describe()}", t.line, t.col, expected)

    def _at(self, value: str, type_: str | None = None) -> bool:
        t = self.tok
        if type_ is None:
            type_ = "ident" if value[0].isalpha() or value[0] == "_" else "op"
        return t.type == type_ and t.value == value

    def _expect(self, value: str) -> Token:
        if not self._at(value):
            raise self._fail(repr(value))
        t = self.tok
        self.i += 1
        return t

    def _expect_type(self, type_: str, what: str) -> Token:
        t = self.tok
        if t.type != type_:
            raise self._fail(what)
        self.i += 1
        return t

    # -- top level ----------------------------------------------------------

    def policyset(self) -> PolicySet:
        rules: list[Rule] = []
        seen: set[str] = set()
        while self.tok.type != "eof":
            start = self.tok
            rule = self.policy()
            if rule.name in seen:
                raise DuplicateRuleName(
                    f"duplicate rule name {rule.name!r} at {start.line}:{start.col}")
            seen.add(rule.name)
            rules.append(rule)
        return PolicySet(tuple(rules))

    def policy(self) -> Rule:
        start = self._expect("policy")
        name = json.loads(self._expect_type("string", "rule name string").value)
        self._expect("{")
        self._expect("when")
        cond = self.expr()
        self._expect("then")
        effects = [self.effect()]
        while self._at(","):
            self.i += 1
            effects.append(self.effect())
        investigate = False
        if self._at("investigate_on_fail"):
            self.i += 1
            investigate = True
        if not self._at("}"):
            raise self._fail("','", "'investigate_on_fail'", "'}'")
        self.i += 1
        return Rule(name, cond, tuple(effects), investigate, Span(start.line, start.col))

    def effect(self) -> Effect:
        t = self.tok
        if t.type == "ident" and t.value in ("allow", "deny"):
            self.i += 1
            return Effect(t.value)
        if t.type == "ident" and t.value in ("challenge", "contain"):
            self.i += 1
            self._expect("(")
            allowed = CHALLENGE_KINDS if t.value == "challenge" else CONTAIN_LEVELS
            arg = self.tok
            if arg.type != "ident" or arg.value not in allowed:
                raise self._fail(*allowed)
            self.i += 1
            self._expect(")")
            return Effect(t.value, arg.value)
        raise self._fail("'allow'", "'deny'", "'challenge'", "'contain'")

    # -- expressions --------------------------------------------------------

    def expr(self) -> Expr:
        return self._or()

    def _or(self) -> Expr:
        left = self._and()
        while self._at("||"):
            t = self.tok
            self.i += 1
            left = BoolOp("||", left, self._and(), Span(t.line, t.col))
        return left

    def _and(self) -> Expr:
        left = self._cmp()
        while self._at("&&"):
            t = self.tok
            self.i += 1
            left = BoolOp("&&", left, self._cmp(), Span(t.line, t.col))
        return left

    def _cmp(self) -> Expr:
        left = self._unary()
        t = self.tok
        if (t.type == "op" and t.value in COMPARISON_OPS) or (t.type == "ident" and t.value == "in"):
            self.i += 1
            return Compare(t.value, left, self._unary(), Span(t.line, t.col))
        return left

    def _unary(self) -> Expr:
        if self._at("!"):
            t = self.tok
            self.i += 1
            return Not(self._unary(), Span(t.line, t.col))
        return self._atom()

    def _literal(self) -> Literal | None:
        t = self.tok
        span = Span(t.line, t.col)
        if t.type == "string":
            self.i += 1
            return Literal(json.loads(t.value), span=span)
        if t.type == "number":
            self.i += 1
            v = float(t.value) if any(c in t.value for c in ".eE") else int(t.value)
            return Literal(v, span=span)
        if t.type == "ident" and t.value in ("true", "false"):
            self.i += 1
            return Literal(t.value == "true", span=span)
        return None

    def _atom(self) -> Expr:
        t = self.tok
        span = Span(t.line, t.col)
        lit = self._literal()
        if lit is not None:
            return lit
        if self._at("["):
            self.i += 1
            items: list[Literal] = []
            if not self._at("]"):
                while True:
                    item = self._literal()
                    if item is None:
                        raise self._fail("literal")
                    items.append(item)
                    if not self._at(","):
                        break
                    self.i += 1
            self._expect("]")
            return SetLiteral(tuple(items), span)
        if self._at("("):
            self.i += 1
            inner = self.expr()
            self._expect(")")
            return inner
        if t.type == "ident" and t.value not in KEYWORDS:
            self.i += 1
            if self._at("("):
                self.i += 1
                self._expect(")")
                return Builtin(t.value, span)
            parts = [t.value]
            while self._at("."):
                self.i += 1
                part = self.tok
                if part.type != "ident":
                    raise self._fail("attribute name")
                self.i += 1
                parts.append(part.value)
            return Path(tuple(parts), span)
        raise self._fail("expression")


def parse(text: str) -> PolicySet:
    """Parse policy source into a :class:`PolicySet`."""
    return _Parser(text).policyset()


def parse_expr(text: str) -> Expr:
    p = _Parser(text)
    e = p.expr()
    if p.tok.type != "eof":
        raise p._fail("end of input")
    return e
