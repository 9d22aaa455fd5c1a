"""The static policy language: parse, format, lint, compile, evaluate."""
from .ast import (
    ALLOW,
    BUILTINS,
    CHALLENGE_KINDS,
    CONTAIN_LEVELS,
    DENY,
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
from .compiler import CompiledPolicySet, compile_policy, evaluate
from .evaluation import EvalContext, RuleOutcome, eval_expr, reference_interpret
from .lint import Diagnostic, is_constant_false, lint
from .parser import parse, parse_expr
from .printer import canonical_print, format_expr
from .schema import DEFAULT_SCHEMA, AttributeSchema, AttrType

__all__ = [
    "ALLOW", "BUILTINS", "CHALLENGE_KINDS", "CONTAIN_LEVELS", "DENY", "DEFAULT_SCHEMA",
    "AttributeSchema", "AttrType", "BoolOp", "Builtin", "Compare", "CompiledPolicySet",
    "Diagnostic", "Effect", "EvalContext", "Literal", "Not", "Path", "PolicySet", "Rule",
    "RuleOutcome", "SetLiteral", "canonical_print", "compile_policy", "eval_expr", "evaluate",
    "format_expr", "is_constant_false", "lint", "parse", "parse_expr", "reference_interpret",
]
