"""Exception hierarchy.

Every error carries a stable ``code`` string; the HTTP layer and the CLI
report it verbatim so callers can branch on it without parsing messages.
"""
from __future__ import annotations

from typing import Any, Sequence


class BZError(Exception):
    code = "error"

    def to_dict(self) -> dict[str, Any]:
        return {"error": self.code, "message": str(self)}


# -- world model ------------------------------------------------------------

class InvalidReference(BZError):
    code = "invalid-reference"


class InvariantViolation(BZError):
    code = "invariant-violation"


class UnknownTeam(BZError):
    code = "unknown-team"


class UnknownEntity(BZError):
    code = "unknown-entity"


class UnknownAccessor(UnknownEntity):
    code = "unknown-accessor"


# -- policy language ----------------------------------------------------------

class PolicySyntaxError(BZError):
    code = "syntax-error"

    def __init__(self, message: str, line: int, col: int, expected: Sequence[str] = ()):
        self.line = line
        self.col = col
        self.expected = tuple(expected)
        detail = f"{message} at {line}:{col}"
        if self.expected:
            detail += f" (expected {', '.join(self.expected)})"
        super().__init__(detail)

    def to_dict(self) -> dict[str, Any]:
        return {"error": self.code, "message": str(self), "line": self.line,
                "col": self.col, "expected": list(self.expected)}


class DuplicateRuleName(BZError):
    code = "duplicate-rule-name"


class UnknownAttribute(BZError):
    code = "unknown-attribute"


class CompileRejected(BZError):
    code = "compile-rejected"

    def __init__(self, diagnostics: Sequence[Any]):
        self.diagnostics = list(diagnostics)
        lines = "; ".join(str(d) for d in self.diagnostics)
        super().__init__(f"policy rejected: {lines}")

    def to_dict(self) -> dict[str, Any]:
        return {"error": self.code, "message": str(self),
                "diagnostics": [d.to_dict() for d in self.diagnostics]}


# -- intake -----------------------------------------------------------------

class DuplicateEventId(BZError):
    code = "duplicate-id"


class OutOfOrderEvent(BZError):
    code = "out-of-order"


class MalformedLine(BZError):
    code = "malformed-line"

    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {reason}")


# -- challenges / containments ----------------------------------------------

class UnknownChallenge(BZError):
    code = "unknown-challenge"


class ChallengeExpired(BZError):
    code = "expired"


class AlreadyTerminal(BZError):
    code = "already-terminal"


class WrongAuthority(BZError):
    code = "wrong-authority"


class NotActive(BZError):
    code = "not-active"


# -- harness ----------------------------------------------------------------

class MalformedScenario(BZError):
    code = "malformed-scenario"


class ExpectationFailure(BZError):
    code = "expectation-failure"

    def __init__(self, step: int | str, expected: Any, actual: Any):
        self.step = step
        self.expected = expected
        self.actual = actual
        super().__init__(f"step {step}: expected {expected!r}, got {actual!r}")
