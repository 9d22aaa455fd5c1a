"""``bz``: policy tooling, scenario runner, generators, bench and admin commands."""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path
from typing import Sequence

from .errors import BZError

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


def _env_default(name: str) -> str | None:
    return os.environ.get(name) or None


def cmd_policy_lint(args: argparse.Namespace) -> int:
    from .policy import parse
    from .policy.lint import errors, lint

    status = EXIT_OK
    for path in args.files:
        try:
            ps = parse(Path(path).read_text(encoding="utf-8"))
        except BZError as exc:
            print(f"{path}: {exc}")
            status = EXIT_FAIL
            continue
        diags = lint(ps)
        for d in diags:
            print(f"{path}:{d}")
        if errors(diags):
            status = EXIT_FAIL
    return status


def cmd_policy_fmt(args: argparse.Namespace) -> int:
    from .policy import canonical_print, parse

    status = EXIT_OK
    for path in args.files:
        text = Path(path).read_text(encoding="utf-8")
        try:
            out = canonical_print(parse(text))
        except BZError as exc:
            print(f"{path}: {exc}", file=sys.stderr)
            status = EXIT_FAIL
            continue
        if args.check:
            if out != text:
                print(f"{path}: not canonically formatted")
                status = EXIT_FAIL
        elif args.write:
            Path(path).write_text(out, encoding="utf-8")
        else:
            sys.stdout.write(out)
    return status


def cmd_run(args: argparse.Namespace) -> int:
    from .harness.scenario import run_scenario

    golden = None if args.update_golden else args.golden
    result = run_scenario(args.scenario, golden, args.trace_out)
    if args.update_golden and args.golden:
        Path(args.golden).write_text(result.trace, encoding="utf-8")
    for f in result.failures:
        print(f"FAIL {result.name}: {f}")
    if result.diff:
        print(f"FAIL {result.name}: trace differs from golden")
        sys.stdout.write(result.diff)
    if result.passed:
        print(f"ok {result.name} ({result.elapsed_s:.3f}s)")
    return EXIT_OK if result.passed else EXIT_FAIL


def cmd_gen(args: argparse.Namespace) -> int:
    from .harness.synth import gen_policy_text, write_synthetic

    paths = write_synthetic(args.out, args.seed, args.accessors, args.resources, args.events)
    if args.policies:
        paths["policy"] = Path(args.out) / "policy.bzp"
        paths["policy"].write_text(gen_policy_text(args.seed, args.policies), encoding="utf-8")
    for kind, p in paths.items():
        print(f"{kind}: {p}")
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    from .harness.bench import bench, report_json

    report = bench(args.policies, args.duration, wire=args.wire, concurrency=args.concurrency,
                   seed=args.seed, latency_dump=args.latency_dump)
    print(report_json(report))
    if report.fast_path_reads != 0:
        print(f"long-term store read {report.fast_path_reads} times on the fast path", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_replay(args: argparse.Namespace) -> int:
    from .config import EngineConfig
    from .intake import replay, trace_text
    from .reasoning.engine import Engine
    from .world import WorldStore

    if not args.world or not args.policy:
        print("replay needs --world and --policy (or BZ_WORLD_PATH / BZ_POLICY_PATH)", file=sys.stderr)
        return EXIT_ERROR
    cfg = dataclasses.replace(EngineConfig.load(args.config), clock="sim")
    world = WorldStore.from_document(json.loads(Path(args.world).read_text(encoding="utf-8")))
    engine = Engine(world, Path(args.policy).read_text(encoding="utf-8"), cfg)
    text = trace_text(replay(args.log, engine))
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_containment_lift(args: argparse.Namespace) -> int:
    import httpx

    resp = httpx.post(f"{args.url.rstrip('/')}/v1/containments/{args.id}/lift",
                      json={"authority": args.authority, "reason": args.reason}, timeout=10.0)
    print(json.dumps(resp.json(), indent=2, sort_keys=True))
    return EXIT_OK if resp.status_code == 200 else EXIT_FAIL


def cmd_serve(args: argparse.Namespace) -> int:
    from .service import ServiceConfig, serve

    env = dict(os.environ)
    for flag, key in (("listen", "BZ_LISTEN_ADDR"), ("world", "BZ_WORLD_PATH"),
                      ("policy", "BZ_POLICY_PATH"), ("config", "BZ_CONFIG"), ("clock", "BZ_CLOCK"),
                      ("log", "BZ_LOG_PATH")):
        value = getattr(args, flag)
        if value:
            env[key] = value
    serve(ServiceConfig.from_env(env))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bz", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    pol = sub.add_parser("policy", help="lint or format policy files")
    pol_sub = pol.add_subparsers(dest="policy_command", required=True)
    lint = pol_sub.add_parser("lint")
    lint.add_argument("files", nargs="+")
    lint.set_defaults(func=cmd_policy_lint)
    fmt = pol_sub.add_parser("fmt")
    fmt.add_argument("files", nargs="+")
    mode = fmt.add_mutually_exclusive_group()
    mode.add_argument("--check", action="store_true", help="exit 1 if any file would change")
    mode.add_argument("--write", action="store_true", help="rewrite files in place")
    fmt.set_defaults(func=cmd_policy_fmt)

    run = sub.add_parser("run", help="run a scenario")
    run.add_argument("--scenario", required=True)
    run.add_argument("--golden")
    run.add_argument("--trace-out")
    run.add_argument("--update-golden", action="store_true")
    run.set_defaults(func=cmd_run)

    gen = sub.add_parser("gen", help="write synthetic fixtures")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--accessors", type=int, default=50)
    gen.add_argument("--resources", type=int, default=200)
    gen.add_argument("--events", type=int, default=1000)
    gen.add_argument("--policies", type=int, default=0)
    gen.add_argument("--out", default="synthetic")
    gen.set_defaults(func=cmd_gen)

    b = sub.add_parser("bench", help="sustained authorize load")
    b.add_argument("--policies", type=int, default=100)
    b.add_argument("--duration", type=float, default=10.0)
    b.add_argument("--wire", action="store_true", help="go through the HTTP service")
    b.add_argument("--concurrency", type=int, default=1)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--latency-dump")
    b.set_defaults(func=cmd_bench)

    rp = sub.add_parser("replay", help="replay an NDJSON log deterministically")
    rp.add_argument("--log", required=True)
    rp.add_argument("--world", default=_env_default("BZ_WORLD_PATH"))
    rp.add_argument("--policy", default=_env_default("BZ_POLICY_PATH"))
    rp.add_argument("--config", default=_env_default("BZ_CONFIG"))
    rp.add_argument("--out")
    rp.set_defaults(func=cmd_replay)

    ct = sub.add_parser("containment", help="containment admin")
    ct_sub = ct.add_subparsers(dest="containment_command", required=True)
    lift = ct_sub.add_parser("lift")
    lift.add_argument("id")
    lift.add_argument("--reason", required=True)
    lift.add_argument("--authority", default="manual")
    lift.add_argument("--url", default=os.environ.get("BZ_URL", "http://127.0.0.1:8181"))
    lift.set_defaults(func=cmd_containment_lift)

    sv = sub.add_parser("serve", help="run the decision service")
    sv.add_argument("--listen")
    sv.add_argument("--world")
    sv.add_argument("--policy")
    sv.add_argument("--config")
    sv.add_argument("--clock", choices=("real", "sim"))
    sv.add_argument("--log")
    sv.set_defaults(func=cmd_serve)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BZError as exc:
        print(json.dumps(exc.to_dict(), sort_keys=True), file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError) as exc:
        print(f"bz: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
