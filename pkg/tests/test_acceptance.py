"""Acceptance gate. Run with ``pytest -s tests/test_acceptance.py`` to see one
PASS/FAIL line per criterion."""
import random
import subprocess
import sys
import time

import pytest
from conftest import SCENARIOS
from policygen import gen_context, gen_policy, gen_rule
from test_detectors import ORACLES, peer_world, random_log

from bzpdp.challenge import ChallengeService
from bzpdp.clock import DAY, HOUR, SimClock
from bzpdp.config import EngineConfig
from bzpdp.errors import ChallengeExpired, WrongAuthority
from bzpdp.harness import bench, gen_synthetic, run_scenario, write_synthetic
from bzpdp.harness.synth import gen_policy_text
from bzpdp.intake import HotCache, RiskAttribute
from bzpdp.policy import Effect, RuleOutcome, compile_policy, reference_interpret
from bzpdp.reasoning import Engine, Request
from bzpdp.reasoning.detectors import DETECTORS, detect_peer_volume_anomaly
from bzpdp.reasoning.lattice import BOTTOM, SEVERITY, Judgement, close, combine, judge
from bzpdp.world import WorldStore


def report(n, ok, detail):
    print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
    assert ok, detail


def test_criterion_1_scenario_goldens():
    parts, ok = [], True
    for name in ("curious_contractor", "foolish_admin", "rogue_agent"):
        res = run_scenario(SCENARIOS / f"{name}.scn", SCENARIOS / f"{name}.trace")
        again = run_scenario(SCENARIOS / f"{name}.scn")
        good = res.passed and res.trace == again.trace and res.elapsed_s < 5
        ok &= good
        parts.append(f"{name} {'ok' if good else 'MISMATCH'} {res.elapsed_s * 1000:.1f}ms")
    report(1, ok, "golden traces: " + ", ".join(parts))


def test_criterion_2_compiler_oracle():
    rng = random.Random(20240601)
    pairs = mismatches = 0
    started = time.perf_counter()
    while pairs < 10_000:
        ps = gen_policy(rng)
        cps = compile_policy(ps)
        for _ in range(4):
            ctx = gen_context(rng)
            pairs += 1
            mismatches += cps.evaluate(ctx) != reference_interpret(ps, ctx)
    elapsed = time.perf_counter() - started
    report(2, mismatches == 0 and elapsed < 60,
           f"{pairs} pairs, {mismatches} mismatches, {elapsed:.1f}s")


def test_criterion_3_lattice_monotonicity():
    rng = random.Random(3)
    law_failures = 0
    effects = [Effect("allow"), Effect("deny"), Effect("challenge", "verification"),
               Effect("challenge", "approval_owner"), Effect("contain", "soft"),
               Effect("contain", "hard")]
    for _ in range(3000):
        a, b, c = (BOTTOM | Judgement.of(rng.choice(effects), rng.choice("xyz"))
                   if rng.random() < 0.9 else BOTTOM for _ in range(3))
        law_failures += not (a | b == b | a and (a | b) | c == a | (b | c) and a | a == a)
    contexts = lowered = default_deny_flips = 0
    for _ in range(1500):
        ps = gen_policy(rng, rng.randint(0, 6))
        bigger = ps.with_rule(gen_rule(rng, "added"))
        ctx = gen_context(rng)
        small = compile_policy(ps).evaluate(ctx) if ps.rules else ()
        big = compile_policy(bigger).evaluate(ctx)
        contexts += 1
        if judge(big).severity < judge(small).severity:
            lowered += 1
        v_small, v_big = combine(small).verdict, combine(big).verdict
        if SEVERITY[v_big] < SEVERITY[v_small]:
            if small:
                lowered += 1
            else:
                # nothing matched before, so the closed verdict was the default deny
                default_deny_flips += 1
    ok = law_failures == 0 and lowered == 0 and contexts >= 1000
    report(3, ok, f"join laws over 3000 triples ({law_failures} failures); {contexts} contexts, "
                  f"{lowered} severity drops; {default_deny_flips} default-deny flips "
                  f"(no rule matched before the addition)")


def test_criterion_4_detector_oracles():
    rng = random.Random(4)
    logs = 0
    mismatches = {name: 0 for name in DETECTORS}
    tight = EngineConfig(peer_volume_ratio=2.0, scope_min_support=2, rapid_ops=3,
                         rapid_span_ms=2000, knowledge_min_queries=2, exfil_min_events=2)
    worlds = [gen_synthetic(900 + i, 24, 30, 0)[0] for i in range(8)]
    snaps = [WorldStore.from_document(w).snapshot() for w in worlds]
    while logs < 1000:
        i = logs % len(worlds)
        cfg = tight if logs % 2 else EngineConfig()
        now = 30 * DAY + rng.randrange(DAY)
        raw, log, hot = random_log(rng, worlds[i], now)
        logs += 1
        for acc in hot:
            for name, fn in DETECTORS.items():
                got = fn(log, snaps[i], acc, now, cfg)
                want = ORACLES[name](worlds[i], raw, acc, now, cfg)
                if (got.value if got else None) != pytest.approx(want):
                    mismatches[name] += 1
    snap, plog, now = peer_world(60, 10)
    fires_60 = detect_peer_volume_anomaly(plog, snap, "p0", now, EngineConfig()) is not None
    snap, plog, now = peer_world(50, 10)
    fires_50 = detect_peer_volume_anomaly(plog, snap, "p0", now, EngineConfig()) is not None
    ok = not any(mismatches.values()) and fires_60 and not fires_50
    report(4, ok, f"{logs} random logs, mismatches {mismatches}; "
                  f"60 vs median 10 fires={fires_60}, 50 vs 10 fires={fires_50}")


def test_criterion_5_containment_durability(world_doc, baseline_text):
    rng = random.Random(5)
    results = {}
    lift_blocked = False
    for level in ("hard", "soft"):
        eng = Engine(WorldStore.from_document(world_doc), baseline_text, clock=SimClock(DAY))
        snap = eng.world.snapshot()
        contained = eng.challenges.apply_containment("uma", level, "acceptance")
        ops = ("read", "write", "export", "delete", "admin_op")
        good = total = 0
        for i in range(2000):
            r = eng.authorize(Request(f"q{i}", eng.clock.now(), rng.choice(("uma", "salesgenie")),
                                      rng.choice(list(snap.resources)), rng.choice(ops)))
            total += 1
            if level == "hard":
                good += r.verdict == "deny"
            else:
                good += SEVERITY[r.verdict] >= SEVERITY["challenge"]
            if rng.random() < 0.1:
                eng.clock.advance(rng.randrange(6 * HOUR))
        results[level] = (good, total)
        if level == "hard":
            try:
                eng.challenges.lift_containment(contained.id, "challenge_pass")
            except WrongAuthority:
                lift_blocked = eng.challenges.active_containment("uma") == contained
    ok = all(g == t for g, t in results.values()) and lift_blocked
    report(5, ok, f"hard deny {results['hard'][0]}/{results['hard'][1]}, "
                  f"soft >= challenge {results['soft'][0]}/{results['soft'][1]}, "
                  f"challenge_pass lift of hard blocked={lift_blocked}")


def test_criterion_6_ttl_and_expiry(world_doc):
    rng = random.Random(6)
    clock = SimClock(0)
    hot = HotCache()
    attrs = [RiskAttribute(f"a{i}", rng.random(), rng.randrange(0, 5000), rng.randrange(1, 5000))
             for i in range(200)]
    for a in attrs:
        hot.publish("uma", a)
    wrong = steps = 0
    while clock.now() < 10_000:
        before = set(hot.attributes("uma", clock.now()))
        clock.advance(rng.randrange(1, 50))
        now = clock.now()
        after = set(hot.attributes("uma", now))
        expected = {a.name for a in attrs if now <= a.issued_ts + a.ttl}
        expiring = {a.name for a in attrs if a.name in before and now > a.issued_ts + a.ttl}
        wrong += after != expected or bool(after & expiring)
        steps += 1
    svc = ChallengeService(WorldStore.from_document(world_doc), SimClock(0), DAY, HOUR)
    ch = svc.issue("verification", "uma", "d")
    svc.clock.advance(DAY + 1)
    try:
        svc.respond(ch.id, {"asserted": "true"})
        expiry_errors = False
    except ChallengeExpired:
        expiry_errors = svc.get(ch.id).state == "expired"
    report(6, wrong == 0 and expiry_errors,
           f"{steps} clock steps over {len(attrs)} attributes, {wrong} wrong views; "
           f"late challenge response errors={expiry_errors}")


def test_criterion_7_replay_determinism(tmp_path):
    paths = write_synthetic(tmp_path / "syn", 7, 30, 60, 400)
    policy = tmp_path / "syn" / "policy.bzp"
    policy.write_text(gen_policy_text(7, 20))
    fixtures = [
        ("rogue_replay", SCENARIOS / "rogue_replay.ndjson", SCENARIOS / "world.json",
         SCENARIOS / "baseline.bzp"),
        ("synthetic", paths["events"], paths["world"], policy),
    ]
    parts, ok = [], True
    for name, log, world, pol in fixtures:
        outs = []
        for run in range(2):
            out = tmp_path / f"{name}-{run}.ndjson"
            proc = subprocess.run([sys.executable, "-m", "bzpdp.cli", "replay", "--log", str(log),
                                   "--world", str(world), "--policy", str(pol), "--out", str(out)],
                                  capture_output=True, text=True)
            outs.append(out.read_bytes() if proc.returncode == 0 else None)
        same = outs[0] is not None and outs[0] == outs[1]
        ok &= same
        parts.append(f"{name} {'identical' if same else 'DIFFERENT'}")
    report(7, ok, "two process runs each: " + ", ".join(parts))


def test_criterion_8_performance():
    r = bench(100, 3.0)
    ok = r.decisions_per_sec >= 10_000 and r.fast_path_reads == 0 and r.p99_ms < 10
    report(8, ok, f"100 rules, {r.decisions} decisions in {r.duration_s}s = "
                  f"{r.decisions_per_sec:,.0f}/s, p50 {r.p50_ms:.3f}ms, p99 {r.p99_ms:.3f}ms, "
                  f"fast-path long-store reads {r.fast_path_reads}")
