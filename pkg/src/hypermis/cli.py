"""Command line: ``python -m hypermis <command>``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import DEFAULT, Constants
from .errors import HyperMISError
from .harness import (ALGOS, KINDS, SuiteConfig, content_hash, cross_check, generate, run_one, run_suite,
                      solve, write_jsonl)
from .hypergraph import Hypergraph, verify_mis


def _constants(args) -> Constants:
    cfg = Constants.load(args.constants) if getattr(args, "constants", None) else DEFAULT
    over = {}
    if getattr(args, "threads", None):
        over["threads"] = args.threads
    if getattr(args, "exact_arith", False):
        over["exact_arith"] = True
    return cfg.with_overrides(**over)


def _read_set(path) -> list:
    data = json.loads(Path(path).read_text())
    return list(data["mis"] if isinstance(data, dict) else data)


def cmd_gen(args) -> int:
    G = generate(args.kind, args.n, args.m, args.r, args.seed)
    G.save(args.out)
    print(json.dumps({"out": args.out, "n": G.n, "m": G.m, "r": G.r, "sha256": content_hash(G)}))
    return 0


def cmd_solve(args) -> int:
    from .spaces import SampleSpace
    G = Hypergraph.load(args.graph)
    cfg = _constants(args)
    omega = SampleSpace.load(args.omega) if args.omega else None
    r = args.r if args.r == "auto" else int(args.r)
    mis, rounds, stages, metrics, trace = solve(G, args.algo, args.seed, cfg, args.mode, omega, r)
    ok = verify_mis(G, mis)
    out = {"mis": list(mis), "size": len(mis), "rounds": rounds, "stages": stages, "verified": ok}
    if args.out:
        Path(args.out).write_text(json.dumps(out) + "\n")
    else:
        print(json.dumps(out))
    if args.trace:
        write_jsonl(args.trace, trace)
    return 0 if ok else 1


def cmd_verify(args) -> int:
    G = Hypergraph.load(args.graph)
    ok = verify_mis(G, _read_set(args.mis))
    print(json.dumps({"verified": ok}))
    return 0 if ok else 1


def cmd_space(args) -> int:
    from .spaces import SampleSpace, build_q1_space, q2_constraints, q2_space_for, verify_q1, verify_q2
    if args.action == "build":
        if args.graph:
            G = Hypergraph.load(args.graph)
            S = q2_space_for(G, pairs=args.pairs, max_bits=args.max_bits)
        else:
            if args.n is None:
                print("space build needs --graph or --n", file=sys.stderr)
                return 2
            eps = args.eps if args.eps is not None else 2.0 ** (-args.L - 1)
            S = build_q1_space(args.n, args.L, eps, construction=args.construction)
        S.save(args.out)
        print(json.dumps({"out": args.out, "n": S.n, "support": S.support_size, "construction": S.meta.get("construction")}))
        return 0
    S = SampleSpace.load(args.space)
    report = verify_q1(S, args.L)
    res = {"q1": report.passed, "max_deviation": str(report.max_deviation)}
    ok = report.passed
    if args.graph:
        q2 = verify_q2(S, q2_constraints(Hypergraph.load(args.graph), args.pairs))
        res["q2"] = q2
        ok = ok and q2
    print(json.dumps(res))
    return 0 if ok else 1


def cmd_suite(args) -> int:
    conf = SuiteConfig.load(args.config)
    if args.threads or args.exact_arith:
        if args.threads:
            conf.constants["threads"] = args.threads
        if args.exact_arith:
            conf.constants["exact_arith"] = True
    out = args.out or conf.out
    lines = []
    bad = 0
    for rec in run_suite(conf):
        lines.append(rec.to_json(timing=args.timing))
        bad += not rec.verified
    text = "".join(line + "\n" for line in lines)
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)
    return 1 if bad else 0


def cmd_crosscheck(args) -> int:
    G = Hypergraph.load(args.graph)
    rep = cross_check(G, args.seeds, _constants(args))
    print(json.dumps({"mis_count": rep.n_mis, "sizes": list(rep.sizes), "all_members": rep.all_members,
                      "outputs": {k: [list(x) for x in v] for k, v in rep.outputs.items()}}))
    return 0 if rep.all_members else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hypermis", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate an instance")
    g.add_argument("--kind", choices=KINDS, default="uniform-random")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--m", type=int, required=True)
    g.add_argument("--r", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    def common(p):
        p.add_argument("--constants", help="JSON file of constant overrides")
        p.add_argument("--threads", type=int)
        p.add_argument("--exact-arith", action="store_true")

    s = sub.add_parser("solve", help="compute an MIS")
    s.add_argument("graph")
    s.add_argument("--algo", choices=ALGOS, default="rand")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--mode", choices=("adaptive", "theoretical"), default="adaptive")
    s.add_argument("--omega", help="sample space file for the deterministic pipeline")
    s.add_argument("--r", default="auto", help="rank for sbl/dsbl, or 'auto'")
    s.add_argument("--out")
    s.add_argument("--trace", help="write the run trace as JSON lines")
    common(s)
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("verify", help="check a vertex set is an MIS")
    v.add_argument("graph")
    v.add_argument("mis")
    v.set_defaults(func=cmd_verify)

    sp = sub.add_parser("space", help="build or check sample spaces")
    sp.add_argument("action", choices=("build", "check"))
    sp.add_argument("space", nargs="?", help="space file (check)")
    sp.add_argument("--graph")
    sp.add_argument("--n", type=int)
    sp.add_argument("--L", type=int, default=3)
    sp.add_argument("--eps", type=float, help="additive pattern slack; default 2**-(L+1)")
    sp.add_argument("--construction", default="auto", choices=("auto", "cube", "bch", "powering"))
    sp.add_argument("--pairs", default="intersecting", choices=("intersecting", "all"))
    sp.add_argument("--max-bits", type=int, default=20)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_space)

    su = sub.add_parser("suite", help="run an experiment suite")
    su.add_argument("config")
    su.add_argument("--out")
    su.add_argument("--timing", action="store_true", help="include wall time in metrics")
    su.add_argument("--threads", type=int)
    su.add_argument("--exact-arith", action="store_true")
    su.set_defaults(func=cmd_suite)

    c = sub.add_parser("crosscheck", help="compare outputs with brute force (n <= 10)")
    c.add_argument("graph")
    c.add_argument("--seeds", type=int, nargs="*", default=[0, 1, 2])
    common(c)
    c.set_defaults(func=cmd_crosscheck)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    if args.command == "space" and args.action == "build" and not args.out:
        print("space build needs --out", file=sys.stderr)
        return 2
    if args.command == "space" and args.action == "check" and not args.space:
        print("space check needs a space file", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (HyperMISError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
