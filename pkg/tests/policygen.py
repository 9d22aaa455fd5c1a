"""Random well-typed policy sets and evaluation contexts for oracle tests."""
from __future__ import annotations

import random

from bzpdp.policy.ast import (
    CHALLENGE_KINDS,
    CONTAIN_LEVELS,
    BoolOp,
    Builtin,
    Compare,
    Effect,
    Literal,
    Not,
    Path,
    PolicySet,
    Rule,
    SetLiteral,
)
from bzpdp.policy.evaluation import EvalContext
from bzpdp.policy.schema import DEFAULT_SCHEMA

SCHEMA = DEFAULT_SCHEMA
ENUM_PATHS = sorted(SCHEMA.enum_paths())
STRING_PATHS = sorted(p for p, t in SCHEMA.paths.items() if t.kind == "string")
SET_PATHS = sorted(p for p, t in SCHEMA.paths.items() if t.kind == "set")
RISK_NAMES = ("peer_volume_anomaly", "scope_deviation", "rapid_succession",
              "knowledge_inconsistency", "exfiltration_pattern")
NUMBERS = (0, 1, 0.0, 0.2, 0.5, 0.8, 1.0, 0.25)
WORDS = ("read", "write", "export", "alpha", "beta", "sales", "billing", "x")
OPS_ORD = ("<", "<=", ">", ">=", "==", "!=")


def _path(dotted: str) -> Path:
    return Path(tuple(dotted.split(".")))


def _maybe_flip(rng: random.Random, op: str, a, b) -> Compare:
    flip = {"<": ">", "<=": ">=", ">": "<", ">=": "<=", "==": "==", "!=": "!="}
    if rng.random() < 0.3:
        return Compare(flip[op], b, a)
    return Compare(op, a, b)


def gen_atom(rng: random.Random):
    k = rng.randrange(9)
    if k == 0:
        p = rng.choice(ENUM_PATHS)
        t = SCHEMA.lookup(p)
        op = rng.choice(OPS_ORD if t.ordered else ("==", "!="))
        return _maybe_flip(rng, op, _path(p), Literal(rng.choice(t.values)))
    if k == 1:
        p = rng.choice(ENUM_PATHS)
        t = SCHEMA.lookup(p)
        items = rng.sample(t.values, rng.randint(1, len(t.values)))
        return Compare("in", _path(p), SetLiteral(tuple(Literal(v) for v in items)))
    if k == 2:
        left = rng.choice([_path(f"risk.{n}") for n in RISK_NAMES]
                          + [Builtin("crossover"), Builtin("intent_alignment")])
        return _maybe_flip(rng, rng.choice(OPS_ORD), left, Literal(rng.choice(NUMBERS)))
    if k == 3:
        return _maybe_flip(rng, rng.choice(("==", "!=")), _path(rng.choice(STRING_PATHS)),
                           Literal(rng.choice(WORDS)))
    if k == 4:
        return Compare("in", Literal(rng.choice(WORDS)), _path(rng.choice(SET_PATHS)))
    if k == 5:
        items = tuple(Literal(w) for w in rng.sample(WORDS, rng.randint(1, 3)))
        return Compare("in", _path(rng.choice(STRING_PATHS)), SetLiteral(items))
    if k == 6:
        return Builtin("assignment_covers")
    if k == 7:
        return Compare(rng.choice(("==", "!=")), Builtin("assignment_covers"),
                       Literal(rng.random() < 0.5))
    a = _path(f"risk.{rng.choice(RISK_NAMES)}")
    b = rng.choice([_path(f"risk.{rng.choice(RISK_NAMES)}"), Builtin("crossover")])
    return Compare(rng.choice(OPS_ORD), a, b)


def gen_expr(rng: random.Random, depth: int = 3):
    if depth <= 0 or rng.random() < 0.35:
        return gen_atom(rng)
    k = rng.randrange(5)
    if k == 0:
        return Not(gen_expr(rng, depth - 1))
    return BoolOp(rng.choice(("&&", "||")), gen_expr(rng, depth - 1), gen_expr(rng, depth - 1))


def gen_effect(rng: random.Random) -> Effect:
    k = rng.randrange(4)
    if k == 0:
        return Effect("allow")
    if k == 1:
        return Effect("deny")
    if k == 2:
        return Effect("challenge", rng.choice(CHALLENGE_KINDS))
    return Effect("contain", rng.choice(CONTAIN_LEVELS))


def gen_rule(rng: random.Random, name: str, depth: int = 3) -> Rule:
    cond = gen_expr(rng, depth)
    # bias towards shapes the compiler indexes on
    if rng.random() < 0.4:
        s = rng.choice(SCHEMA.lookup("resource.sensitivity").values)
        cond = BoolOp("&&", Compare(rng.choice(("==", ">=", "<=")), _path("resource.sensitivity"),
                                    Literal(s)), cond)
    if rng.random() < 0.3:
        cond = BoolOp("&&", Compare("==", _path("request.operation"),
                                    Literal(rng.choice(WORDS[:3]))), cond)
    effects = tuple(dict.fromkeys(gen_effect(rng) for _ in range(rng.randint(1, 2))))
    return Rule(name, cond, effects, investigate_on_fail=rng.random() < 0.2)


def gen_policy(rng: random.Random, n_rules: int | None = None, depth: int = 3) -> PolicySet:
    n = rng.randint(1, 8) if n_rules is None else n_rules
    return PolicySet(tuple(gen_rule(rng, f"r{i}", depth) for i in range(n)))


def gen_context(rng: random.Random) -> EvalContext:
    values = {}
    for p, t in SCHEMA.paths.items():
        if t.kind == "enum":
            values[p] = rng.choice(t.values)
        elif t.kind == "set":
            values[p] = frozenset(rng.sample(WORDS, rng.randint(0, 3)))
        else:
            values[p] = rng.choice(WORDS[:4])
    risk = {n: rng.choice((0.0, 0.2, 0.5, 0.8, 1.0, 0.33))
            for n in RISK_NAMES if rng.random() < 0.5}
    builtins = {"assignment_covers": rng.random() < 0.5,
                "crossover": rng.choice((0.0, 0.1, 0.2, 0.25, 0.5, 1.0)),
                "intent_alignment": rng.choice((0.0, 0.5, 0.8, 1.0))}
    return EvalContext(values, risk, builtins)
