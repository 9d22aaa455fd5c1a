"""Verdict lattice: allow < challenge < deny < contain.

Matched effects are folded with :meth:`Judgement.join`, a plain
(max severity, union of challenges) join. The default-deny rule is applied
afterwards, when closing a judgement into a verdict, so the join itself
stays a lattice operation with an explicit bottom for "nothing matched".
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple

from ..policy.ast import CHALLENGE_KINDS, Effect
from ..policy.evaluation import RuleOutcome

VERDICTS = ("allow", "challenge", "deny", "contain")
SEVERITY = {v: i for i, v in enumerate(VERDICTS)}
KIND_RANK = {k: i for i, k in enumerate(CHALLENGE_KINDS)}
NOTHING = -1
CONTAINMENT_SOURCE = "containment"


@dataclass(frozen=True)
class Judgement:
    severity: int = NOTHING
    # (challenge kind, originating rule or injection source)
    challenges: frozenset[tuple[str, str]] = frozenset()

    def join(self, other: "Judgement") -> "Judgement":
        return Judgement(max(self.severity, other.severity), self.challenges | other.challenges)

    __or__ = join

    @classmethod
    def of(cls, effect: Effect, source: str) -> "Judgement":
        if effect.kind == "challenge":
            return cls(SEVERITY["challenge"], frozenset({(effect.arg, source)}))  # type: ignore[arg-type]
        return cls(SEVERITY[effect.kind])


BOTTOM = Judgement()


class Combined(NamedTuple):
    verdict: str
    obligations: tuple[str, ...]
    recorded_challenges: tuple[str, ...] = ()


def _ordered_kinds(challenges: Iterable[tuple[str, str]]) -> tuple[str, ...]:
    out: list[str] = []
    for kind, _src in sorted(challenges, key=lambda c: (KIND_RANK[c[0]], c[1])):
        if kind not in out:
            out.append(kind)
    return tuple(out)


def judge(outcomes: Iterable[RuleOutcome], active_obligations: Iterable[Effect] = ()) -> Judgement:
    j = BOTTOM
    for o in outcomes:
        for eff in o.effects:
            j = j | Judgement.of(eff, o.rule_name)
    for eff in active_obligations:
        j = j | Judgement.of(eff, CONTAINMENT_SOURCE)
    return j


def close(j: Judgement, any_outcome: bool) -> Combined:
    """Turn a joined judgement into a verdict, applying default deny."""
    severity = j.severity
    if not any_outcome:
        severity = max(severity, SEVERITY["deny"])
    verdict = VERDICTS[severity]
    kinds = _ordered_kinds(j.challenges)
    if verdict == "challenge":
        return Combined(verdict, kinds, ())
    # challenges are audited but not issued once the verdict is deny or worse
    return Combined(verdict, (), kinds if severity > SEVERITY["challenge"] else ())


def combine(outcomes: Iterable[RuleOutcome],
            active_obligations: Iterable[Effect] = ()) -> Combined:
    outcomes = tuple(outcomes)
    return close(judge(outcomes, active_obligations), bool(outcomes))
