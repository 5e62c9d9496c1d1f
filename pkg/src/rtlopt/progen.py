"""Seeded random program generator for the differential harness.

Programs are built structurally (blocks, diamonds, counted loops) so they
validate, type-check, and mostly terminate: loop counters are fresh
registers never reassigned in the body, compared against small constant
bounds.  A small weight of "wild" loops conditioned on arbitrary registers
keeps the nonterminating case in the mix; fuel handles those.  Register
pools are segregated by kind, which is what keeps draws well-typed, and a
share of statements replays an earlier right-hand side verbatim to feed
the subexpression eliminator.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .ir import (
    Cond, Function, Icall, Icond, Iload, Iop, Ireturn, Istore, Operation,
    Program, based, f64_from_float, global_addr, i32, i64, indexed, ptr,
)


@dataclass
class GenConfig:
    seed: int = 0
    programs: int = 100
    block_items: int = 7          # statements per block (about)
    max_depth: int = 2            # nesting of loops/ifs
    loop_bound_max: int = 5
    n_globals: int = 2
    global_size: int = 256
    helpers: int = 1
    replay_prob: float = 0.35     # recompute an earlier rhs into a new reg
    wild_loop_weight: float = 0.03
    extcall_weight: float = 0.4
    oob_prob: float = 0.02        # deliberately out-of-range offsets
    force_loop: bool = False      # guarantee at least one counted loop


class _Builder:
    def __init__(self, rng, cfg, globals_):
        self.rng = rng
        self.cfg = cfg
        self.globals = globals_
        self.code = {}
        self.next_node = 0
        self.next_reg = 0
        self.pools = {"i32": [], "i64": [], "f64": [], "ptr": []}
        self.reserved = set()
        self.recent = []
        self.counter_stack = []
        self.made_loop = False

    def node(self):
        self.next_node += 1
        return self.next_node

    def fresh(self, kind):
        self.next_reg += 1
        self.pools[kind].append(self.next_reg)
        return self.next_reg

    def pick(self, kind):
        return self.rng.choice(self.pools[kind])

    def dest(self, kind):
        """A destination register: mostly fresh, sometimes a reused one."""
        pool = [r for r in self.pools[kind] if r not in self.reserved]
        if pool and self.rng.random() < 0.3:
            return self.rng.choice(pool)
        return self.fresh(kind)


def _emit_op(b, entry, exit_, op, args, kind):
    d = b.dest(kind)
    b.code[entry] = Iop(op, args, d, exit_)
    b.recent.append(("op", op, args, kind))


def _gen_simple(b, entry, exit_):
    rng = b.rng
    if b.recent and rng.random() < b.cfg.replay_prob:
        tag = rng.choice(b.recent)
        if tag[0] == "op":
            _, op, args, kind = tag
            b.code[entry] = Iop(op, args, b.dest(kind), exit_)
        else:
            _, chunk, mode, args, kind = tag
            b.code[entry] = Iload(chunk, mode, args, b.dest(kind), exit_)
        return
    roll = rng.random()
    if roll < 0.30:  # 32-bit arithmetic
        shape = rng.randrange(5)
        if shape == 0:
            _emit_op(b, entry, exit_, Operation("const32", rng.randrange(-8, 9)),
                     (), "i32")
        elif shape == 1:
            name = rng.choice(("add32", "sub32", "mul32"))
            _emit_op(b, entry, exit_, Operation(name),
                     (b.pick("i32"), b.pick("i32")), "i32")
        elif shape == 2:
            name = rng.choice(("addimm32", "mulimm32"))
            _emit_op(b, entry, exit_, Operation(name, rng.randrange(-4, 5)),
                     (b.pick("i32"),), "i32")
        elif shape == 3:
            _emit_op(b, entry, exit_, Operation("shl32", rng.randrange(0, 5)),
                     (b.pick("i32"),), "i32")
        else:
            _emit_op(b, entry, exit_, Operation("move"), (b.pick("i32"),), "i32")
    elif roll < 0.55:  # 64-bit arithmetic
        shape = rng.randrange(6)
        if shape == 0:
            _emit_op(b, entry, exit_, Operation("const64", rng.randrange(-16, 17)),
                     (), "i64")
        elif shape == 1:
            name = rng.choice(("add64", "sub64", "mul64"))
            _emit_op(b, entry, exit_, Operation(name),
                     (b.pick("i64"), b.pick("i64")), "i64")
        elif shape == 2:
            _emit_op(b, entry, exit_, Operation("sext32to64"),
                     (b.pick("i32"),), "i64")
        elif shape == 3:
            name = rng.choice(("addimm64", "mulimm64"))
            _emit_op(b, entry, exit_, Operation(name, rng.randrange(-4, 5)),
                     (b.pick("i64"),), "i64")
        elif shape == 4:
            _emit_op(b, entry, exit_, Operation("shl64", rng.randrange(0, 5)),
                     (b.pick("i64"),), "i64")
        else:
            _emit_op(b, entry, exit_, Operation("move"), (b.pick("i64"),), "i64")
    elif roll < 0.70:  # float arithmetic
        name = rng.choice(("fadd64", "fmul64"))
        _emit_op(b, entry, exit_, Operation(name),
                 (b.pick("f64"), b.pick("f64")), "f64")
    elif roll < 0.85:
        _gen_load(b, entry, exit_)
    else:
        _gen_store(b, entry, exit_)


_CHUNK_SIZE = {"int8": 1, "int16": 2, "int32": 4, "int64": 8, "float64": 8}


def _addr(b, chunk_size):
    """(mode, args) staying inside the global the base points to."""
    rng = b.rng
    limit = b.cfg.global_size - chunk_size
    if rng.random() < b.cfg.oob_prob:
        limit = b.cfg.global_size * 2
    off = rng.randrange(0, max(limit, 1) // chunk_size + 1) * chunk_size
    kind = rng.randrange(3)
    if kind == 0:
        return global_addr(rng.choice(sorted(b.globals)), off), ()
    base = b.pick("ptr")
    if kind == 1 or not b.counter_stack:
        return based(off), (base,)
    scale = chunk_size if chunk_size in (1, 2, 4, 8) else 8
    span = b.cfg.loop_bound_max * scale
    off = rng.randrange(0, max(b.cfg.global_size - chunk_size - span, 1))
    return indexed(scale, off), (base, rng.choice(b.counter_stack))


def _gen_load(b, entry, exit_):
    chunk, kind = b.rng.choice(
        (("int32", "i32"), ("int64", "i64"), ("float64", "f64"),
         ("int8", "i32"), ("int16", "i32")))
    mode, args = _addr(b, _CHUNK_SIZE[chunk])
    d = b.dest(kind)
    b.code[entry] = Iload(chunk, mode, args, d, exit_)
    b.recent.append(("load", chunk, mode, args, kind))


def _gen_store(b, entry, exit_):
    chunk, kind = b.rng.choice(
        (("int32", "i32"), ("int64", "i64"), ("float64", "f64"),
         ("int8", "i32")))
    mode, args = _addr(b, _CHUNK_SIZE[chunk])
    b.code[entry] = Istore(chunk, mode, args, b.pick(kind), exit_)


def _gen_if(b, entry, exit_, depth, helpers):
    rng = b.rng
    width = rng.choice(("w32", "w64"))
    kind = "i32" if width == "w32" else "i64"
    cond = Cond(rng.choice(("eq", "ne", "lt", "le", "gt", "ge")), width)
    then_n = b.node()
    else_n = b.node()
    b.code[entry] = Icond(cond, (b.pick(kind), b.pick(kind)), then_n, else_n)
    _gen_block(b, then_n, exit_, depth, max(1, b.cfg.block_items // 2), helpers)
    _gen_block(b, else_n, exit_, depth, max(1, b.cfg.block_items // 2), helpers)


def _gen_loop(b, entry, exit_, depth, helpers):
    rng = b.rng
    b.made_loop = True
    bound_r = b.fresh("i32")
    counter = b.fresh("i32")
    b.reserved.add(bound_r)
    b.reserved.add(counter)
    init_c = b.node()
    header = b.node()
    body = b.node()
    inc = b.node()
    b.code[entry] = Iop(Operation("const32",
                                  rng.randrange(2, b.cfg.loop_bound_max + 1)),
                        (), bound_r, init_c)
    b.code[init_c] = Iop(Operation("const32", 0), (), counter, header)
    b.code[header] = Icond(Cond("lt", "w32"), (counter, bound_r), body, exit_)
    b.counter_stack.append(counter)
    _gen_block(b, body, inc, depth, max(1, b.cfg.block_items // 2), helpers)
    b.counter_stack.pop()
    b.code[inc] = Iop(Operation("addimm32", 1), (counter,), counter, header)


def _gen_wild_loop(b, entry, exit_, depth, helpers):
    rng = b.rng
    body = b.node()
    b.code[entry] = Icond(Cond(rng.choice(("ne", "lt")), "w32"),
                          (b.pick("i32"), b.pick("i32")), body, exit_)
    _gen_block(b, body, entry, depth, 2, helpers)


def _gen_call(b, entry, exit_, helpers):
    rng = b.rng
    if helpers and rng.random() >= b.cfg.extcall_weight:
        name, kinds = rng.choice(helpers)
        args = tuple(b.pick(k) for k in kinds)
    else:
        name = f"ext_{rng.randrange(3)}"
        args = tuple(b.pick(rng.choice(("i32", "i64")))
                     for _ in range(rng.randrange(0, 3)))
    b.code[entry] = Icall(name, args, b.dest("i64"), exit_)


def _gen_block(b, entry, exit_, depth, items, helpers):
    rng = b.rng
    n = max(1, items + rng.randrange(-2, 3))
    cur = entry
    for k in range(n):
        nxt = exit_ if k == n - 1 else b.node()
        roll = rng.random()
        if depth > 0 and roll < 0.16:
            if rng.random() < b.cfg.wild_loop_weight:
                _gen_wild_loop(b, cur, nxt, depth - 1, helpers)
            else:
                _gen_loop(b, cur, nxt, depth - 1, helpers)
        elif depth > 0 and roll < 0.28:
            _gen_if(b, cur, nxt, depth - 1, helpers)
        elif roll < 0.36:
            _gen_call(b, cur, nxt, helpers)
        else:
            _gen_simple(b, cur, nxt)
        cur = nxt


def _gen_helper(rng, cfg, name, globals_):
    """Small straight-line arithmetic function; never calls, always returns."""
    b = _Builder(rng, cfg, globals_)
    kinds = [rng.choice(("i32", "i32", "i64", "ptr"))
             for _ in range(rng.randrange(1, 4))]
    params = tuple(b.fresh(k) for k in kinds)
    entry = b.node()
    cur = entry
    # seed both integer pools with defined registers before drawing args
    for kind, op in (("i32", Operation("const32", rng.randrange(0, 5))),
                     ("i64", Operation("const64", rng.randrange(0, 9)))):
        nxt = b.node()
        b.code[cur] = Iop(op, (), b.fresh(kind), nxt)
        cur = nxt
    n = rng.randrange(2, 5)
    chain = [cur] + [b.node() for _ in range(n)]
    for i in range(n):
        if rng.random() < 0.5:
            opname = rng.choice(("add32", "sub32", "mul32"))
            _emit_op(b, chain[i], chain[i + 1], Operation(opname),
                     (b.pick("i32"), b.pick("i32")), "i32")
        else:
            opname = rng.choice(("add64", "sub64", "mul64"))
            _emit_op(b, chain[i], chain[i + 1], Operation(opname),
                     (b.pick("i64"), b.pick("i64")), "i64")
    b.code[chain[n]] = Ireturn(b.pick("i64"))
    return Function(name, params, entry, b.code, 0), kinds


def generate(cfg: GenConfig, index: int):
    """Deterministic (program, argspecs) for this seed and index.

    argspecs describes main's parameters for input-vector generation:
    ('i32',) ('i64',) ('f64',) or ('ptr', symbol).
    """
    rng = random.Random(f"{cfg.seed}/{index}")
    globals_ = {f"g{i}": cfg.global_size for i in range(cfg.n_globals)}
    helpers = []
    fns = {}
    for i in range(cfg.helpers):
        fn, kinds = _gen_helper(rng, cfg, f"f{i}", globals_)
        fns[fn.name] = fn
        helpers.append((fn.name, kinds))

    b = _Builder(rng, cfg, globals_)
    argspecs = []
    syms = sorted(globals_)
    for s in syms[:max(1, len(syms) - 1)]:
        b.fresh("ptr")
        argspecs.append(("ptr", s))
    for _ in range(2):
        b.fresh("i32")
        argspecs.append(("i32",))
    b.fresh("i64")
    argspecs.append(("i64",))
    b.fresh("f64")
    argspecs.append(("f64",))
    params = tuple(range(1, b.next_reg + 1))

    entry = b.node()
    cur = entry
    # fill a few cells so loads see data, and give f64 a defined source
    for k in range(3):
        st = b.node()
        nxt = b.node()
        bits = 0x3FF0000000000000 + (rng.randrange(0, 64) << 44)
        b.code[cur] = Iop(Operation("const64", bits), (), b.fresh("i64"), st)
        b.code[st] = Istore("int64", global_addr(syms[0], 8 * k), (),
                            b.pools["i64"][-1], nxt)
        cur = nxt
    nxt = b.node()
    b.code[cur] = Iload("float64", global_addr(syms[0], 0), (),
                        b.fresh("f64"), nxt)
    cur = nxt

    ret = b.node()
    if cfg.force_loop:
        mid = b.node()
        _gen_loop(b, cur, mid, max(cfg.max_depth - 1, 0), helpers)
        _gen_block(b, mid, ret, cfg.max_depth, cfg.block_items, helpers)
    else:
        _gen_block(b, cur, ret, cfg.max_depth, cfg.block_items, helpers)
    retkind = rng.choice(("i32", "i64", "f64", "none"))
    b.code[ret] = Ireturn(None if retkind == "none" else b.pick(retkind))
    fns["main"] = Function("main", params, entry, b.code, 0)
    return Program(fns, globals_, "main"), argspecs


def gen_args(argspecs, rng) -> tuple:
    """A plausible input vector for a generated program's main."""
    vals = []
    for spec in argspecs:
        kind = spec[0]
        if kind == "i32":
            vals.append(i32(rng.randrange(-6, 9)))
        elif kind == "i64":
            vals.append(i64(rng.randrange(-12, 17)))
        elif kind == "f64":
            vals.append(f64_from_float(1.0 + rng.randrange(0, 32) / 16.0))
        else:
            vals.append(ptr(spec[1], 0))
    return tuple(vals)
