import random
import threading

import pytest
from policygen import gen_policy

from bzpdp.clock import DAY, HOUR, SimClock
from bzpdp.config import EngineConfig
from bzpdp.errors import CompileRejected, PolicySyntaxError, WrongAuthority
from bzpdp.intake import Event, RiskAttribute
from bzpdp.policy import canonical_print
from bzpdp.reasoning import Engine, Request
from bzpdp.reasoning.context import AgentContext
from bzpdp.reasoning.engine import decide_action
from bzpdp.reasoning.lattice import SEVERITY
from bzpdp.world import WorldStore

OPS = ("read", "write", "export", "delete", "admin_op")
T0 = 400_000_000


@pytest.fixture
def engine(world_doc, baseline_text):
    return Engine(WorldStore.from_document(world_doc), baseline_text, clock=SimClock(T0))


def req(engine, acc, res, op="read", intent=None, rid=None):
    engine._rq = getattr(engine, "_rq", 0) + 1
    ac = AgentContext(frozenset(intent)) if intent is not None else None
    return engine.authorize(Request(rid or f"r{engine._rq}", engine.clock.now(), acc, res, op, ac))


def test_basic_verdicts(engine):
    assert req(engine, "uma", "acme-account-plan").verdict == "allow"
    assert req(engine, "uma", "company-handbook").verdict == "allow"
    assert req(engine, "uma", "company-handbook", "write").verdict == "deny"  # default deny
    r = req(engine, "uma", "board-deck")
    assert (r.verdict, r.obligation_kinds) == ("challenge", ["approval_owner"])
    assert r.matched_rules == ("hc_assignment",)
    assert r.policy_version == 1 and r.snapshot_version == 1
    assert r.attributes_used["assignment_covers"] is False


def test_agent_intent_challenge(engine):
    r = req(engine, "salesgenie", "acme-account-plan", intent=["financial-services", "northeast"])
    assert r.verdict == "allow"
    r = req(engine, "salesgenie", "acme-account-plan", intent=["hr"])
    assert (r.verdict, r.obligation_kinds) == ("challenge", ["verification"])


def test_authorize_logs_access_and_stays_off_the_log(engine):
    before = len(engine.intake.log)
    reads = engine.intake.log.fast_path_reads
    req(engine, "uma", "board-deck")
    assert len(engine.intake.log) == before + 1
    assert engine.intake.log.fast_path_reads == reads == 0


def test_pass_grants_retry(engine):
    r = req(engine, "uma", "board-deck", rid="a")
    assert engine.challenges.respond(r.obligations[0].challenge_id,
                                     {"approver": "sofia"}) == "passed"
    assert req(engine, "uma", "board-deck").verdict == "allow"
    assert req(engine, "uma", "board-deck", "write").verdict == "challenge"
    engine.clock.advance(HOUR + 1)
    assert req(engine, "uma", "board-deck").verdict == "challenge"


def test_same_request_reuses_challenge(engine):
    a = req(engine, "uma", "board-deck", rid="same")
    b = req(engine, "uma", "board-deck", rid="same")
    assert a.obligations == b.obligations


def test_suppressed_challenges_recorded(engine):
    engine.intake.hot.publish("uma", RiskAttribute("exfiltration_pattern", 1.0, T0, DAY))
    r = req(engine, "uma", "hr-salaries", "export")
    assert r.verdict == "deny"
    assert r.obligations == () and r.suppressed_challenges == ("approval_owner",)


# -- containment durability -----------------------------------------------------

@pytest.mark.parametrize("level", ["soft", "hard"])
def test_containment_durability(world_doc, baseline_text, level):
    rng = random.Random(7)
    eng = Engine(WorldStore.from_document(world_doc), baseline_text, clock=SimClock(T0))
    snap = eng.world.snapshot()
    eng.challenges.apply_containment("uma", level, "test")
    eng.challenges.apply_containment("carl", level, "test")
    verdicts = []
    for i in range(1000):
        acc = rng.choice(("uma", "salesgenie", "carl"))
        res = rng.choice(list(snap.resources))
        r = eng.authorize(Request(f"q{i}", eng.clock.now(), acc, res, rng.choice(OPS)))
        verdicts.append(r.verdict)
        if rng.random() < 0.2:
            eng.clock.advance(rng.randrange(DAY))
    if level == "hard":
        assert set(verdicts) == {"deny"}
    else:
        assert all(SEVERITY[v] >= SEVERITY["challenge"] for v in verdicts)
        assert "challenge" in verdicts


def test_hard_lifts_only_manually(engine):
    c = engine.challenges.apply_containment("uma", "hard", "t")
    with pytest.raises(WrongAuthority):
        engine.challenges.lift_containment(c.id, "challenge_pass")
    r = req(engine, "uma", "board-deck")
    assert r.verdict == "deny"
    engine.challenges.lift_containment(c.id, "manual", "cleared")
    assert req(engine, "uma", "acme-account-plan").verdict == "allow"


def test_soft_containment_cleared_by_verification(engine):
    engine.challenges.apply_containment("uma", "soft", "t")
    r = req(engine, "uma", "acme-account-plan")
    assert (r.verdict, r.obligation_kinds) == ("challenge", ["verification"])
    engine.challenges.respond(r.obligations[0].challenge_id, {"asserted": "true"})
    assert engine.challenges.active_containment("uma") is None
    assert req(engine, "uma", "acme-account-plan").verdict == "allow"


def test_contain_effect_applies_containment(world_doc):
    eng = Engine(WorldStore.from_document(world_doc),
                 'policy "c" { when request.operation == "delete" then contain(soft) }\n'
                 'policy "a" { when resource.sensitivity == "public" then allow }',
                 clock=SimClock(0))
    assert req(eng, "salesgenie", "company-handbook", "delete").verdict == "contain"
    # the containment lands on the controlling human
    assert eng.challenges.active_containment("uma").level == "soft"
    assert req(eng, "uma", "company-handbook").verdict == "challenge"


# -- investigations ----------------------------------------------------------------

@pytest.mark.parametrize("names,values,expected", [
    ((), (), "none"),
    (("exfiltration_pattern",), (1.0,), "contain_soft"),
    (("scope_deviation",), (0.6,), "none"),
    (("scope_deviation",), (0.9,), "contain_soft"),
    (("scope_deviation", "exfiltration_pattern"), (0.6, 1.0), "contain_hard"),
    (("scope_deviation", "exfiltration_pattern"), (0.6, 0.5), "none"),
    (("rapid_succession", "knowledge_inconsistency"), (1.0, 0.8), "none"),
])
def test_decide_action(names, values, expected):
    found = [RiskAttribute(n, v, 0, 1) for n, v in zip(names, values)]
    assert decide_action(found) == expected


def test_failed_challenge_opens_investigation(engine):
    for i, res in enumerate(("vendor-contracts", "hr-salaries", "board-deck")):
        engine.ingest(Event(f"x{i}", T0 + i, "uma", "email_external", res))
    engine.run_slow_path()
    r = req(engine, "uma", "strategic-plan-2027", rid="sp")
    engine.run_slow_path()
    assert engine.investigations and engine.investigations[-1].trigger_kind == "risk_threshold"
    assert engine.investigations[-1].action == "contain_soft"
    ch = r.obligations[0].challenge_id
    engine.challenges.respond(ch, {"approver": "sofia", "approved": "false"})
    reports = engine.run_slow_path()
    assert [(x.trigger_kind, x.trigger_detail) for x in reports] == [("challenge_failed", ch)]


def test_open_investigation_validation(engine):
    with pytest.raises(ValueError):
        engine.open_investigation("vibes", "uma")
    rep = engine.open_investigation("risk_threshold", "salesgenie")
    assert rep.principal_id == "uma" and rep.action == "none"
    assert rep.to_dict()["window"] == [T0 - 7 * DAY, T0]


def test_detector_wrappers(engine):
    for i in range(3):
        engine.ingest(Event(f"q{i}", T0 + i, "sam", "query", payload={"tags": "basic_question,billing"}))
    assert engine.detect_knowledge_inconsistency("sam").value == 0.8
    assert engine.detect_exfiltration_pattern("sam") is None
    assert engine.detect_rapid_succession("sam") is None
    assert engine.detect_scope_deviation("sam") is None
    assert engine.detect_peer_volume_anomaly("sam") is None


# -- policy install ------------------------------------------------------------------

def test_empty_policy_rejected(engine):
    with pytest.raises(CompileRejected) as info:
        engine.install_policy("# nothing here\n")
    assert info.value.to_dict()["diagnostics"][0]["code"] == "empty-policy"
    assert engine.policy_version == 1


def test_bad_policy_keeps_old(engine):
    with pytest.raises(CompileRejected):
        engine.install_policy('policy "x" { when resource.colour == "red" then deny }')
    with pytest.raises(PolicySyntaxError):
        engine.install_policy('policy "x" { when then }')
    assert engine.policy_version == 1
    assert req(engine, "uma", "acme-account-plan").verdict == "allow"


def test_concurrent_reload_stress(world_doc):
    rng = random.Random(11)
    texts = [canonical_print(gen_policy(rng, 6)).replace('"r', f'"v{i}_r')
             for i in range(1, 41)]
    eng = Engine(WorldStore.from_document(world_doc), texts[0], clock=SimClock(T0))
    installed = {1: 1}
    snap = eng.world.snapshot()
    records, errors = [], []
    stop = threading.Event()

    def hammer(seed):
        r = random.Random(seed)
        i = 0
        while not stop.is_set():
            i += 1
            try:
                records.append(eng.authorize(Request(
                    f"s{seed}-{i}", T0, r.choice(list(snap.accessors)),
                    r.choice(list(snap.resources)), r.choice(OPS))))
            except Exception as exc:  # noqa: BLE001
                errors.append(exc)

    threads = [threading.Thread(target=hammer, args=(s,)) for s in range(4)]
    for t in threads:
        t.start()
    for i, text in enumerate(texts[1:], 2):
        installed[eng.install_policy(text)] = i
    stop.set()
    for t in threads:
        t.join()
    assert errors == []
    assert records
    for rec in records:
        # every record names one installed version and only that version's rules
        assert rec.policy_version in installed
        prefix = f"v{installed[rec.policy_version]}_"
        assert all(name.startswith(prefix) for name in rec.matched_rules)


def test_config_overrides(world_doc, baseline_text):
    cfg = EngineConfig(grant_ttl_ms=10)
    eng = Engine(WorldStore.from_document(world_doc), baseline_text, cfg, clock=SimClock(T0))
    r = req(eng, "uma", "board-deck")
    eng.challenges.respond(r.obligations[0].challenge_id, {"approver": "sofia"})
    eng.clock.advance(11)
    assert req(eng, "uma", "board-deck").verdict == "challenge"
    with pytest.raises(ValueError):
        EngineConfig.from_dict({"nope": 1})
