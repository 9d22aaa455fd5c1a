import itertools
import random

import pytest

from bzpdp.challenge import (
    STATES,
    TERMINAL,
    ChallengeService,
    justification_tokens,
    verify_justification,
)
from bzpdp.clock import DAY, HOUR, SimClock
from bzpdp.errors import (
    AlreadyTerminal,
    ChallengeExpired,
    NotActive,
    UnknownAccessor,
    UnknownChallenge,
    WrongAuthority,
)
from bzpdp.policy.ast import CHALLENGE_KINDS, DENY, Effect
from bzpdp.world import WorldStore


@pytest.fixture
def svc(world_doc):
    return ChallengeService(WorldStore.from_document(world_doc), SimClock(1000), DAY, HOUR)


PASSING = {
    "verification": {"asserted": "true"},
    "biometric": {"asserted": "true"},
    "justification": {"text": "Need the board numbers for strategy review"},
    "approval_owner": {"approver": "sofia", "approved": "true"},
    "approval_manager": {"approver": "mara", "approved": "true"},
}


def issue(svc, kind, subject="uma", decision="d1", resource="board-deck"):
    return svc.issue(kind, subject, decision, resource_id=resource, operation="read")


# -- state machine -------------------------------------------------------------

@pytest.mark.parametrize("kind", CHALLENGE_KINDS)
def test_transitions_exhaustive(svc, kind):
    """pending -> passed | failed | expired; terminal states never move."""
    seen = set()
    for outcome in ("pass", "fail", "expire"):
        ch = issue(svc, kind, decision=f"d-{outcome}")
        assert ch.state == "pending"
        if outcome == "pass":
            assert svc.respond(ch.id, PASSING[kind]) == "passed"
        elif outcome == "fail":
            assert svc.respond(ch.id, {}) == "failed"
        else:
            svc.clock.advance(DAY + 1)
            with pytest.raises(ChallengeExpired):
                svc.respond(ch.id, PASSING[kind])
        final = svc.get(ch.id).state
        seen.add(final)
        assert final in TERMINAL
        for payload in (PASSING[kind], {}):
            with pytest.raises(AlreadyTerminal):
                svc.respond(ch.id, payload)
            assert svc.get(ch.id).state == final
    assert seen == TERMINAL
    assert set(STATES) == TERMINAL | {"pending"}


def test_expiry_boundary_inclusive(svc):
    ch = issue(svc, "verification")
    svc.clock.advance(DAY)
    assert svc.respond(ch.id, {"asserted": "true"}) == "passed"


def test_expire_due(svc):
    a = issue(svc, "verification", decision="a")
    svc.clock.advance(HOUR)
    b = issue(svc, "verification", decision="b")
    svc.clock.advance(DAY - HOUR + 1)
    assert svc.expire_due() == [a.id]
    assert svc.get(b.id).state == "pending"


def test_issue_is_idempotent_per_decision(svc):
    a = issue(svc, "verification")
    assert issue(svc, "verification") == a
    assert issue(svc, "verification", decision="d2").id != a.id
    svc.respond(a.id, {"asserted": "false"})
    assert issue(svc, "verification").id != a.id


def test_issue_validation(svc):
    with pytest.raises(ValueError):
        issue(svc, "retina")
    with pytest.raises(UnknownAccessor):
        issue(svc, "verification", subject="ghost")
    with pytest.raises(UnknownChallenge):
        svc.respond("ch-999999", {})


# -- adjudication -------------------------------------------------------------------

@pytest.mark.parametrize("kind,payload,resource,expected", [
    ("verification", {"asserted": "true"}, "board-deck", "passed"),
    ("verification", {"asserted": " TRUE "}, "board-deck", "passed"),
    ("verification", {"asserted": "yes"}, "board-deck", "failed"),
    ("biometric", {}, "board-deck", "failed"),
    ("approval_owner", {"approver": "sofia"}, "board-deck", "passed"),
    ("approval_owner", {"approver": "sofia", "approved": "false"}, "board-deck", "failed"),
    ("approval_owner", {"approver": "fin"}, "board-deck", "failed"),
    ("approval_owner", {"approver": "fin"}, "merger-memo", "passed"),
    ("approval_owner", {"approver": "uma"}, "acme-account-plan", "failed"),  # self approval
    ("approval_owner", {"approver": "ghost"}, "board-deck", "failed"),
    ("approval_manager", {"approver": "mara"}, "board-deck", "passed"),
    ("approval_manager", {"approver": "ada"}, "board-deck", "failed"),
    ("justification", {"text": "quarterly STRATEGY sync"}, "board-deck", "passed"),
    ("justification", {"text": "strategic stuff"}, "board-deck", "failed"),
    ("justification", {"text": "board"}, "no-such-resource", "failed"),
])
def test_adjudication(svc, kind, payload, resource, expected):
    ch = issue(svc, kind, resource=resource)
    assert svc.respond(ch.id, payload) == expected


def test_justification_token_oracle(world_doc):
    snap = WorldStore.from_document(world_doc).snapshot()
    rng = random.Random(0)
    vocab = sorted({t for r in snap.resources.values() for t in r.topic_tags}) + [
        "please", "need", "q3", "the"]
    for _ in range(500):
        words = rng.sample(vocab, rng.randint(0, 5))
        seps = [rng.choice((" ", ", ", ". ", "\n", "; ")) for _ in words]
        text = "".join(rng.choice((w, w.upper(), w.title())) + s for w, s in zip(words, seps))
        res = snap.resource(rng.choice(list(snap.resources)))
        assert verify_justification(text, res) == len({w for w in words} & res.topic_tags)
    assert justification_tokens("customer:acme-bank, Q3!") == {"customer:acme-bank", "q3"}


# -- grants -------------------------------------------------------------------------

def test_grant_discharges_for_an_hour(svc):
    ch = issue(svc, "verification")
    svc.respond(ch.id, {"asserted": "true"})
    now = svc.clock.now()
    assert svc.granted_kinds("uma", "board-deck", "read", now) == {"verification"}
    assert svc.granted_kinds("uma", "board-deck", "write", now) == frozenset()
    assert svc.granted_kinds("uma", "merger-memo", "read", now) == frozenset()
    assert svc.granted_kinds("uma", "board-deck", "read", now + HOUR) == {"verification"}
    assert svc.granted_kinds("uma", "board-deck", "read", now + HOUR + 1) == frozenset()


def test_failed_challenge_grants_nothing(svc):
    ch = issue(svc, "verification")
    svc.respond(ch.id, {"asserted": "false"})
    assert svc.granted_kinds("uma", "board-deck", "read", svc.clock.now()) == frozenset()


def test_investigate_on_fail_callback(world_doc):
    calls = []
    s = ChallengeService(WorldStore.from_document(world_doc), SimClock(0), DAY, HOUR,
                         on_fail=calls.append)
    a = s.issue("verification", "uma", "d1", investigate_on_fail=True)
    b = s.issue("verification", "uma", "d2")
    c = s.issue("verification", "uma", "d3", investigate_on_fail=True)
    s.respond(a.id, {})
    s.respond(b.id, {})
    s.respond(c.id, {"asserted": "true"})
    assert [ch.id for ch in calls] == [a.id]


# -- containments ----------------------------------------------------------------------

def test_containment_levels_and_obligations(svc):
    assert svc.active_obligations("eve") == frozenset()
    soft = svc.apply_containment("eve", "soft", "test")
    assert soft.lift_authority == "challenge_pass"
    assert svc.active_obligations("eve") == {Effect("challenge", "verification")}
    # applying the same or weaker level is a no-op
    assert svc.apply_containment("eve", "soft", "again") == soft
    hard = svc.apply_containment("eve", "hard", "worse", lift_authority="challenge_pass")
    assert hard.lift_authority == "manual"
    assert svc.containment(soft.id).lifted
    assert svc.active_obligations("eve") == {DENY}
    assert svc.apply_containment("eve", "soft", "weaker") == hard
    with pytest.raises(ValueError):
        svc.apply_containment("eve", "medium", "x")
    with pytest.raises(UnknownAccessor):
        svc.apply_containment("ghost", "soft", "x")


def test_lift_authority_matrix(svc):
    for level, authority in itertools.product(("soft", "hard"), ("challenge_pass", "manual")):
        c = svc.apply_containment("eve", level, "t")
        allowed = authority == "manual" or level == "soft"
        if allowed:
            lifted = svc.lift_containment(c.id, authority, "done")
            assert lifted.lifted and svc.active_containment("eve") is None
        else:
            with pytest.raises(WrongAuthority):
                svc.lift_containment(c.id, authority)
            assert svc.active_containment("eve") == c
            svc.lift_containment(c.id, "manual")
        with pytest.raises(NotActive):
            svc.lift_containment(c.id, "manual")
    with pytest.raises(NotActive):
        svc.lift_containment("ct-999999", "manual")
    with pytest.raises(ValueError):
        svc.lift_containment("ct-999999", "sudo")


def test_presence_challenge_lifts_soft(svc):
    c = svc.apply_containment("uma", "soft", "t")
    ch = issue(svc, "approval_owner")
    svc.respond(ch.id, {"approver": "sofia"})
    assert svc.active_containment("uma") == c  # approvals do not prove presence
    ch = issue(svc, "biometric", decision="d2")
    svc.respond(ch.id, {"asserted": "true"})
    assert svc.active_containment("uma") is None
    assert svc.containment(c.id).lift_reason.startswith("challenge_pass")


def test_presence_challenge_does_not_lift_hard(svc):
    c = svc.apply_containment("uma", "hard", "t")
    ch = issue(svc, "verification")
    svc.respond(ch.id, {"asserted": "true"})
    assert svc.active_containment("uma") == c


def test_agent_inherits_human_containment(svc):
    assert svc.active_containment("salesgenie") is None
    soft = svc.apply_containment("salesgenie", "soft", "agent")
    assert svc.active_containment("salesgenie") == soft
    hard = svc.apply_containment("uma", "hard", "human")
    assert svc.active_containment("salesgenie") == hard
    assert svc.active_obligations("salesgenie") == {DENY}
    # the human is not affected by the agent's own containment
    svc.lift_containment(hard.id, "manual")
    assert svc.active_containment("uma") is None
    assert svc.active_containment("salesgenie") == soft


def test_containment_records(svc):
    c = svc.apply_containment("eve", "soft", "why")
    d = c.to_dict()
    assert d["accessor_id"] == "eve" and d["reason"] == "why" and d["created_ts"] == 1000
    assert [x.id for x in svc.containments("eve")] == [c.id]
    assert svc.containments("uma") == []
