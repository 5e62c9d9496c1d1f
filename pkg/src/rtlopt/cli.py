"""Command line driver.

Exit codes: 0 success, 1 usage/parse/validation/typing error, 2 verifier
rejection, 3 differential-test violation.
"""

from __future__ import annotations

import argparse
import json
import random
import sys

from . import cse3, dup, hset
from .difftest import difftest
from .interp import run
from .ir import (
    ParseError, parse_program, print_program, validate, value_from_text,
    value_to_text,
)
from .pipeline import (
    CheckerRejection, InputError, PassOptions, analysis_stats, run_pipeline,
)
from .progen import GenConfig
from .typecheck import IllTyped, infer

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_REJECTED = 2
EXIT_VIOLATION = 3


def _load(path: str):
    if path == "-":
        text = sys.stdin.read()
    else:
        with open(path) as f:
            text = f.read()
    program = parse_program(text)
    diags = validate(program)
    if diags:
        raise InputError("program does not validate", diags)
    return program


def _pass_options(args) -> PassOptions:
    return PassOptions(
        unroll_threshold=args.unroll_threshold,
        across_calls=args.cse3_across_calls,
        glb_moves=not args.no_cse3_glb_moves,
    )


def _add_opt_flags(p):
    p.add_argument("--passes", default="unroll,cse3,selfmove,dce",
                   help="comma list from: unroll rotate cse3 selfmove dce")
    p.add_argument("--unroll-threshold", type=int, default=30)
    p.add_argument("--cse3-across-calls", default=cse3.FORGET_ALL,
                   choices=(cse3.FORGET_ALL, cse3.FORGET_MEM))
    p.add_argument("--no-cse3-glb-moves", action="store_true")


def _cmd_opt(args) -> int:
    program = _load(args.file)
    passes = [p for p in args.passes.split(",") if p]
    dumps = []
    hook = None
    if args.dump_invariants:
        def hook(fn, catalog, inv):
            dumps.append((fn.name, cse3.invariants_text(fn, catalog, inv)))
    optimized, _ = run_pipeline(program, passes, _pass_options(args),
                                on_invariants=hook)
    text = print_program(optimized)
    if args.output and args.output != "-":
        with open(args.output, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    for name, dump in dumps:
        print(f"# invariants {name}")
        for line in dump.splitlines():
            print(f"# {line}")
    return EXIT_OK


def _cmd_run(args) -> int:
    program = _load(args.file)
    try:
        vals = tuple(value_from_text(s) for s in args.values)
    except ValueError as e:
        raise InputError(str(e)) from e
    out = run(program, vals, fuel=args.fuel, seed=args.seed)
    if args.trace:
        for ev in out.trace:
            argtext = ", ".join(value_to_text(a) for a in ev[2])
            print(f"call {ev[1]}({argtext}) -> {value_to_text(ev[3])}")
    tag = out.status[0]
    if tag == "returned":
        print(f"returned {value_to_text(out.status[1])}")
    elif tag == "trapped":
        print(f"trapped: {out.status[1]}")
    else:
        print("out of fuel")
    return EXIT_OK


def _cmd_typecheck(args) -> int:
    program = _load(args.file)
    for name in sorted(program.functions):
        env = infer(program.functions[name])
        parts = " ".join(f"r{r}:{env[r]}" for r in sorted(env))
        print(f"{name}: {parts}" if parts else f"{name}:")
    return EXIT_OK


def _cmd_check_dup(args) -> int:
    orig = _load(args.original)
    transf = _load(args.transformed)
    try:
        with open(args.revmap) as f:
            raw = json.load(f)
        maps = {fn: {int(k): int(v) for k, v in m.items()}
                for fn, m in raw.items()}
    except (OSError, ValueError, AttributeError) as e:
        raise InputError(f"bad reverse map: {e}") from e
    for name in sorted(transf.functions):
        if name not in orig.functions:
            print(f"{name}: not in original program", file=sys.stderr)
            return EXIT_REJECTED
    for name in sorted(transf.functions):
        tfn = transf.functions[name]
        revmap = maps.get(name) or {n: n for n in tfn.code}
        bad = dup.verify_dup(orig.functions[name], tfn, revmap)
        if bad is not None:
            print(f"{name}: rejected at node {bad[0]}: {bad[1]}",
                  file=sys.stderr)
            return EXIT_REJECTED
    print("ok")
    return EXIT_OK


def _cmd_difftest(args) -> int:
    cfg = GenConfig(seed=args.seed, programs=args.programs)
    passes = [p for p in args.passes.split(",") if p]
    rep = difftest(cfg, passes, _pass_options(args),
                   runs_per_program=args.runs, fuel=args.fuel)
    print(rep.to_text())
    return EXIT_OK if rep.ok() else EXIT_VIOLATION


def _cmd_stats(args) -> int:
    program = _load(args.file)
    res = analysis_stats(program, _pass_options(args))
    for name in sorted(res):
        s = res[name]
        print(f"{name}: nodes={s['nodes']} catalog={s['catalog']} "
              f"steps={s['analysis_steps']} unreached={s['unreached']} "
              f"inv-mean={s['invariant_mean']} inv-max={s['invariant_max']} "
              f"descents={s['intern_descents']}")
    if args.dump_invariants:
        opts = _pass_options(args).cse_options()
        for name in sorted(program.functions):
            fn = program.functions[name]
            catalog, _, inv = cse3.analyze(fn, infer(fn), opts)
            print(f"invariants {name}")
            print(cse3.invariants_text(fn, catalog, inv))
    return EXIT_OK


def _cmd_hset_audit(args) -> int:
    rng = random.Random(args.seed)
    t = hset.InternTable()
    pairs = [(hset.empty(), frozenset())]
    for step in range(args.ops):
        roll = rng.random()
        s, model = pairs[rng.randrange(len(pairs))]
        if roll < 0.45:
            k = rng.randrange(1, 512)
            s2, m2 = hset.add(t, s, k), model | {k}
        elif roll < 0.6:
            k = rng.randrange(1, 512)
            s2, m2 = hset.remove(t, s, k), model - {k}
        else:
            o, om = pairs[rng.randrange(len(pairs))]
            if roll < 0.75:
                s2, m2 = hset.union(t, s, o), model | om
            elif roll < 0.9:
                s2, m2 = hset.inter(t, s, o), model & om
            else:
                s2, m2 = hset.diff(t, s, o), model - om
        if hset.contents(s2) != sorted(m2):
            print(f"mismatch after {step} operations", file=sys.stderr)
            return EXIT_USAGE
        hset.audit(s2, t)
        pairs.append((s2, frozenset(m2)))
        if len(pairs) > 64:
            pairs[rng.randrange(len(pairs))] = pairs.pop()
    print(f"ok: {args.ops} operations, {t.descents} descents")
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import app
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rtlopt")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("opt", help="optimize a program")
    p.add_argument("file")
    p.add_argument("-o", "--output")
    p.add_argument("--dump-invariants", action="store_true")
    _add_opt_flags(p)
    p.set_defaults(fn=_cmd_opt)

    p = sub.add_parser("run", help="interpret a program")
    p.add_argument("file")
    p.add_argument("values", nargs="*",
                   help="arguments like i32:3 i64:-1 f64:0x3ff0000000000000 "
                        "ptr:g0+8")
    p.add_argument("--fuel", type=int, default=10**6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-t", "--trace", action="store_true")
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("typecheck", help="infer register types")
    p.add_argument("file")
    p.set_defaults(fn=_cmd_typecheck)

    p = sub.add_parser("check-dup", help="verify a duplication reverse map")
    p.add_argument("original")
    p.add_argument("transformed")
    p.add_argument("revmap", help="json {function: {new-node: old-node}}")
    p.set_defaults(fn=_cmd_check_dup)

    p = sub.add_parser("difftest", help="differential-test the passes")
    p.add_argument("--programs", type=int, default=100)
    p.add_argument("--runs", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fuel", type=int, default=4096)
    _add_opt_flags(p)
    p.set_defaults(fn=_cmd_difftest)

    p = sub.add_parser("stats", help="equation analysis statistics")
    p.add_argument("file")
    p.add_argument("--dump-invariants", action="store_true")
    _add_opt_flags(p)
    p.set_defaults(fn=_cmd_stats)

    p = sub.add_parser("hset-audit", help="self-check the set structure")
    p.add_argument("--ops", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_hset_audit)

    p = sub.add_parser("serve", help="start the http service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(fn=_cmd_serve)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except ParseError as e:
        print(f"parse error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        for d in e.diagnostics:
            print(f"  {d}", file=sys.stderr)
        return EXIT_USAGE
    except IllTyped as e:
        print(f"type error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except CheckerRejection as e:
        print(f"rejected: {e}", file=sys.stderr)
        return EXIT_REJECTED
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
