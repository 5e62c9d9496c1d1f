import random

from rtlopt.ir import (
    Cond, Function, Icall, Icond, Inop, Iop, Ireturn, Operation,
    parse_program,
)
from rtlopt import progen
from rtlopt.dup import (
    dominators, find_loops, postorder, reachable, revmap_from_json,
    revmap_to_json, rotate, unroll_first, verify_dup,
)
from rtlopt.interp import outcome_refines, run


def op(name, imm=None):
    return Operation(name, imm)


def counted_loop(bound=4, extra_back=False):
    """while (r1 < bound) { r2 += r1; r1 += 1 }"""
    code = {
        1: Iop(op("const32", 0), (), 1, 2),
        2: Iop(op("const32", bound), (), 9, 3),
        3: Icond(Cond("lt", "w32"), (1, 9), 4, 6),
        4: Iop(op("add32"), (2, 1), 2, 5),
        5: Iop(op("addimm32", 1), (1,), 1, 3),
        6: Ireturn(2),
    }
    if extra_back:
        # a second path back to the header, guarded by its own test
        code[4] = Iop(op("add32"), (2, 1), 2, 8)
        code[8] = Icond(Cond("lt", "w32"), (2, 9), 5, 7)
        code[7] = Inop(3)
    return Function("main", (2,), 1, code)


def test_reachable_and_postorder():
    fn = counted_loop()
    fn.code[42] = Inop(42)  # unreachable island
    seen = reachable(fn)
    assert 42 not in seen
    po = postorder(fn, seen)
    assert set(po) == seen
    assert po.index(3) > po.index(4)  # children first


def test_dominators_on_diamond():
    code = {
        1: Icond(Cond("eq", "w32"), (1, 1), 2, 3),
        2: Inop(4),
        3: Inop(4),
        4: Ireturn(None),
    }
    dom = dominators(Function("f", (1,), 1, code))
    assert dom[4] == {1, 4}
    assert dom[2] == {1, 2}


def test_find_loops_single():
    loops = find_loops(counted_loop())
    assert len(loops) == 1
    lp = loops[0]
    assert lp.header == 3
    assert lp.body == frozenset({3, 4, 5})
    assert lp.back_sources == frozenset({5})
    assert lp.innermost


def test_find_loops_merges_back_edges_per_header():
    loops = find_loops(counted_loop(extra_back=True))
    assert len(loops) == 1
    assert loops[0].back_sources == frozenset({5, 7})


def test_find_loops_nested_fixture():
    from pathlib import Path
    p = parse_program((Path(__file__).resolve().parent.parent
                       / "programs" / "syrk.rtl").read_text())
    loops = find_loops(p.functions["kernel_syrk"])
    assert [l.header for l in loops] == [2, 4, 6]
    sizes = {l.header: len(l.body) for l in loops}
    assert sizes == {2: 27, 4: 24, 6: 21}
    assert [l.innermost for l in loops] == [False, False, True]


def test_unroll_first_shape():
    fn = counted_loop()
    lp = find_loops(fn)[0]
    out = unroll_first(fn, lp, max_body=10)
    assert out is not None
    fn2, revmap = out
    assert verify_dup(fn, fn2, revmap) is None
    # the peeled copy fronts the loop: new entry portion reaches the old
    # header, and the old loop is intact
    assert fn2.entry == fn.entry
    assert set(fn.code) <= set(fn2.code)
    copies = set(fn2.code) - set(fn.code)
    assert len(copies) == 3
    assert {revmap[n] for n in copies} == {3, 4, 5}


def test_unroll_first_rejects_oversized_and_multi_back():
    fn = counted_loop()
    lp = find_loops(fn)[0]
    assert unroll_first(fn, lp, max_body=2) is None
    fn2 = counted_loop(extra_back=True)
    lp2 = find_loops(fn2)[0]
    assert unroll_first(fn2, lp2, max_body=10) is None


def test_unroll_preserves_behavior():
    fn = counted_loop()
    lp = find_loops(fn)[0]
    fn2, _ = unroll_first(fn, lp, max_body=10)
    from rtlopt.ir import Program, i32
    for start in (0, 5, -3):
        a = run(Program({"main": fn}), [i32(start)])
        b = run(Program({"main": fn2}), [i32(start)])
        assert a.status == b.status


def test_rotate_shape():
    fn = counted_loop()
    lp = find_loops(fn)[0]
    out = rotate(fn, lp)
    assert out is not None
    fn2, revmap = out
    assert verify_dup(fn, fn2, revmap) is None
    loops2 = find_loops(fn2)
    # after rotation the back edge comes from the duplicated test
    assert len(loops2) == 1
    src = next(iter(loops2[0].back_sources))
    assert type(fn2.code[src]).__name__ == "Icond"


def test_rotate_allows_calls_in_prefix():
    """Duplication is justified by path simulation, so an observable call
    ahead of the test is fine; the copy still runs it once per traversal."""
    code = {
        1: Iop(op("const32", 3), (), 1, 2),
        2: Icall("ext", (), 2, 3),
        3: Icond(Cond("lt", "w32"), (9, 1), 2, 4),
        4: Ireturn(None),
    }
    fn = Function("main", (9,), 1, code)
    lp = find_loops(fn)[0]
    out = rotate(fn, lp)
    assert out is not None
    assert verify_dup(fn, out[0], out[1]) is None


def test_rotate_refuses_loops_without_exit_test():
    spin = Function("main", (1,), 1,
                    {1: Iop(op("addimm32", 1), (1,), 1, 1)})
    lp = find_loops(spin)[0]
    assert rotate(spin, lp) is None

    code = {
        1: Iop(op("const32", 0), (), 1, 2),
        2: Icond(Cond("lt", "w32"), (1, 9), 3, 4),  # both arms stay inside
        3: Inop(5),
        4: Inop(5),
        5: Iop(op("addimm32", 1), (1,), 1, 2),
    }
    fn = Function("main", (9,), 1, code)
    lp = find_loops(fn)[0]
    assert lp.header == 2
    assert rotate(fn, lp) is None


def test_verify_dup_rejects_field_change():
    fn = counted_loop()
    lp = find_loops(fn)[0]
    fn2, revmap = unroll_first(fn, lp, max_body=10)
    bad = dict(fn2.code)
    victim = next(n for n, i in bad.items() if isinstance(i, Iop)
                  and i.op.name == "addimm32")
    bad[victim] = Iop(op("addimm32", 2), bad[victim].args,
                      bad[victim].dest, bad[victim].succ)
    r = verify_dup(fn, Function(fn2.name, fn2.params, fn2.entry, bad), revmap)
    assert r is not None and r[0] == victim


def test_verify_dup_rejects_map_tampering():
    fn = counted_loop()
    lp = find_loops(fn)[0]
    fn2, revmap = unroll_first(fn, lp, max_body=10)

    missing = dict(revmap)
    some = max(missing)
    del missing[some]
    assert verify_dup(fn, fn2, missing) is not None

    wrong_entry = dict(revmap)
    wrong_entry[fn2.entry] = 4
    assert verify_dup(fn, fn2, wrong_entry) is not None

    cross = dict(revmap)
    cross[max(revmap)] = 1  # successor pairs stop matching
    assert verify_dup(fn, fn2, cross) is not None


def test_verify_dup_rejects_signature_change():
    fn = counted_loop()
    lp = find_loops(fn)[0]
    fn2, revmap = unroll_first(fn, lp, max_body=10)
    fn3 = Function(fn2.name, (2, 3), fn2.entry, fn2.code)
    assert verify_dup(fn, fn3, revmap) == (fn3.entry, "signature mismatch")


def test_identity_map_verifies_original():
    fn = counted_loop()
    ident = {n: n for n in fn.code}
    assert verify_dup(fn, fn, ident) is None


def test_revmap_json_roundtrip():
    revmap = {7: 3, 8: 4, 1: 1}
    assert revmap_from_json(revmap_to_json(revmap)) == revmap


def test_transforms_refine_on_generated_loops():
    cfg = progen.GenConfig(seed=31, programs=15, force_loop=True)
    rng = random.Random(8)
    checked = 0
    for i in range(15):
        p, spec = progen.generate(cfg, i)
        for name, fn in p.functions.items():
            for lp in find_loops(fn):
                for transform in (lambda f, l: unroll_first(f, l, 40), rotate):
                    out = transform(fn, lp)
                    if out is None:
                        continue
                    fn2, revmap = out
                    assert verify_dup(fn, fn2, revmap) is None
                    q = type(p)(dict(p.functions), p.globals, p.main)
                    q.functions[name] = fn2
                    for _ in range(3):
                        args = progen.gen_args(spec, rng)
                        a = run(p, args, fuel=3000)
                        b = run(q, args, fuel=3000)
                        assert outcome_refines(a, b)
                        checked += 1
    assert checked >= 30
