"""Verified pass pipeline over whole programs.

Every transform that has an independent checker runs under it: loop
duplications are re-validated structurally through their reverse maps, and
the equation analysis is re-checked for inductiveness before any rewrite
uses it.  A checker rejection aborts the pipeline; nothing unverified is
ever returned.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass

from . import cleanup, cse3, dup, hset
from .ir import Function, Inop, Program, validate
from .typecheck import IllTyped, infer

PASS_NAMES = ("unroll", "rotate", "cse3", "selfmove", "dce")


class InputError(Exception):
    """Bad input program: parse, validation, or typing trouble."""

    def __init__(self, message, diagnostics=()):
        super().__init__(message)
        self.diagnostics = list(diagnostics)


class CheckerRejection(Exception):
    """A verifier refused a transform result."""

    def __init__(self, message, detail=None):
        super().__init__(message)
        self.detail = detail


@dataclass
class PassOptions:
    unroll_threshold: int = 30   # max body size eligible for peeling
    across_calls: str = cse3.FORGET_ALL
    glb_moves: bool = True
    trivial_consts: bool = True

    def cse_options(self) -> cse3.CseOptions:
        return cse3.CseOptions(self.across_calls, self.glb_moves,
                               self.trivial_consts)


def _apply_dup(fn, which, threshold, key, fstat):
    """Run one duplication transform over each loop once, checking every
    accepted result against its reverse map."""
    done = set()
    while True:
        cand = None
        for loop in dup.find_loops(fn):
            if loop.header not in done:
                cand = loop
                break
        if cand is None:
            return fn
        done.add(cand.header)
        if which == "unroll":
            res = dup.unroll_first(fn, cand, threshold)
        else:
            res = dup.rotate(fn, cand)
        if res is None:
            continue
        fn2, revmap = res
        bad = dup.verify_dup(fn, fn2, revmap)
        if bad is not None:
            raise CheckerRejection(
                f"{fn.name}: {which} at node {cand.header} rejected "
                f"({bad[1]} at node {bad[0]})", detail=bad)
        fn = fn2
        fstat[key] += 1


def _apply_cse(fn, popts, fstat, on_invariants=None):
    env = infer(fn)
    opts = popts.cse_options()
    try:
        catalog, tables, inv = cse3.analyze(fn, env, opts)
    except cse3.AnalysisError as e:
        raise CheckerRejection(f"{fn.name}: {e}") from e
    bad = cse3.check_inductive(fn, env, opts, catalog, inv,
                               intern=tables.intern)
    if bad is not None:
        (p, p2), reason = bad
        raise CheckerRejection(
            f"{fn.name}: invariants not inductive on edge "
            f"{p} -> {p2} ({reason})", detail=bad)
    fstat["catalog"] += len(catalog)
    fstat["analysis_steps"] += tables.steps
    if on_invariants is not None:
        on_invariants(fn, catalog, inv)
    return cse3.rewrite(fn, env, catalog, tables, inv, opts)


def _count_nopped(before: Function, after: Function) -> int:
    return sum(1 for p, ins in before.code.items()
               if not isinstance(ins, Inop)
               and isinstance(after.code[p], Inop))


def run_pipeline(program: Program, passes, opts: PassOptions | None = None,
                 on_invariants=None):
    """Apply passes in order to every function.  Returns (program, stats).

    Raises InputError for malformed or ill-typed input and CheckerRejection
    when a verifier refuses a transform.  on_invariants, when given, is
    called as on_invariants(fn, catalog, inv) for each checked analysis.
    """
    opts = opts or PassOptions()
    for p in passes:
        if p not in PASS_NAMES:
            raise InputError(f"unknown pass: {p}")
    diags = validate(program)
    if diags:
        raise InputError("program does not validate", diags)
    for name, fn in program.functions.items():
        try:
            infer(fn)
        except IllTyped as e:
            raise InputError(f"{name}: {e}") from e

    stats = {"passes": list(passes), "functions": {}}
    out = {}
    for name in sorted(program.functions):
        fn = program.functions[name]
        fstat = {"nodes_in": len(fn.code), "unrolled": 0, "rotated": 0,
                 "catalog": 0, "analysis_steps": 0, "selfmoves": 0,
                 "dce_removed": 0}
        for p in passes:
            if p == "unroll":
                fn = _apply_dup(fn, "unroll", opts.unroll_threshold,
                                "unrolled", fstat)
            elif p == "rotate":
                fn = _apply_dup(fn, "rotate", None, "rotated", fstat)
            elif p == "cse3":
                fn = _apply_cse(fn, opts, fstat, on_invariants)
            elif p == "selfmove":
                fn2 = cleanup.elim_self_moves(fn)
                fstat["selfmoves"] += _count_nopped(fn, fn2)
                fn = fn2
            else:
                fn2 = cleanup.dce(fn)
                fstat["dce_removed"] += _count_nopped(fn, fn2)
                fn = fn2
        fstat["nodes_out"] = len(fn.code)
        stats["functions"][name] = fstat
        out[name] = fn
    return Program(out, dict(program.globals), program.main), stats


def analysis_stats(program: Program, opts: PassOptions | None = None) -> dict:
    """Equation analysis statistics per function, without rewriting."""
    opts = opts or PassOptions()
    diags = validate(program)
    if diags:
        raise InputError("program does not validate", diags)
    res = {}
    for name in sorted(program.functions):
        fn = program.functions[name]
        try:
            env = infer(fn)
        except IllTyped as e:
            raise InputError(f"{name}: {e}") from e
        try:
            catalog, tables, inv = cse3.analyze(fn, env, opts.cse_options())
        except cse3.AnalysisError as e:
            raise CheckerRejection(f"{name}: {e}") from e
        sizes = [hset.size(s) for s in inv.values() if s is not None]
        res[name] = {
            "nodes": len(fn.code),
            "catalog": len(catalog),
            "analysis_steps": tables.steps,
            "unreached": sum(1 for s in inv.values() if s is None),
            "invariant_mean": round(statistics.mean(sizes), 2) if sizes else 0,
            "invariant_max": max(sizes, default=0),
            "intern_descents": tables.intern.descents,
        }
    return res
