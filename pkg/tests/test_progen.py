import random

from rtlopt import progen
from rtlopt.dup import find_loops
from rtlopt.interp import run
from rtlopt.ir import print_program, validate
from rtlopt.typecheck import infer


def test_generation_is_deterministic():
    cfg = progen.GenConfig(seed=7, programs=5)
    for i in range(5):
        a, sa = progen.generate(cfg, i)
        b, sb = progen.generate(cfg, i)
        assert print_program(a) == print_program(b)
        assert sa == sb


def test_different_indices_differ():
    cfg = progen.GenConfig(seed=7, programs=2)
    a, _ = progen.generate(cfg, 0)
    b, _ = progen.generate(cfg, 1)
    assert print_program(a) != print_program(b)


def test_programs_are_valid_and_typed():
    cfg = progen.GenConfig(seed=8, programs=30)
    for i in range(30):
        p, _ = progen.generate(cfg, i)
        assert validate(p) == []
        for fn in p.functions.values():
            infer(fn)


def test_argspecs_match_main_params():
    cfg = progen.GenConfig(seed=9, programs=10)
    for i in range(10):
        p, spec = progen.generate(cfg, i)
        assert len(spec) == len(p.functions[p.main].params)


def test_gen_args_match_spec_kinds():
    cfg = progen.GenConfig(seed=10, programs=5)
    rng = random.Random(1)
    for i in range(5):
        p, spec = progen.generate(cfg, i)
        args = progen.gen_args(spec, rng)
        for s, v in zip(spec, args):
            assert v[0] == s[0]
            if s[0] == "ptr":
                assert v[1] in p.globals


def test_force_loop_produces_loops():
    cfg = progen.GenConfig(seed=11, programs=10, force_loop=True)
    for i in range(10):
        p, _ = progen.generate(cfg, i)
        assert any(find_loops(fn) for fn in p.functions.values())


def test_programs_execute_to_an_outcome():
    cfg = progen.GenConfig(seed=12, programs=20)
    rng = random.Random(3)
    kinds = {"returned": 0, "trapped": 0, "outoffuel": 0}
    for i in range(20):
        p, spec = progen.generate(cfg, i)
        o = run(p, progen.gen_args(spec, rng), fuel=4096)
        kinds[o.status[0]] += 1
    assert kinds["returned"] >= 10  # most runs complete