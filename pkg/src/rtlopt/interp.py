"""Small-step reference interpreter and the trace-refinement comparators.

Execution is deterministic given (program, args, fuel, seed).  Undefined
values propagate through operations; traps (bad memory access, branch on a
non-integer) are outcomes, never Python errors.  External calls append an
event to the trace and return a stub value derived by hashing
(seed, symbol, argument values).

Memory is byte-level: a block is a list whose entries are ints 0..255,
None for an undefined byte, or ('pf', block, offset, index) pointer
fragments.  Storing a value whose kind does not fit the chunk writes
undefined bytes, so a mistyped program degrades to Undef rather than to a
wrong equality.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

from .ir import (
    CHUNKS, UNDEF, Icall, Icond, Iload, Inop, Iop, Ireturn, Istore,
    _wrap32, _wrap64, f32, f64, i32, i64, ptr,
)

# ------------------------------------------------------------------- eval_op

def eval_op(op, vals):
    """Value of `op` applied to operand values; UNDEF when unspecified."""
    name = op.name
    if name == "move":
        return vals[0]
    if name == "const32":
        return i32(op.imm)
    if name == "const64":
        return i64(op.imm)
    if name == "add32":
        a, b = vals
        if a[0] == "i32" and b[0] == "i32":
            return i32(a[1] + b[1])
        return UNDEF
    if name == "add64":
        a, b = vals
        if a[0] == "i64" and b[0] == "i64":
            return i64(a[1] + b[1])
        # pointer arithmetic, either operand order
        if a[0] == "ptr" and b[0] == "i64":
            return ptr(a[1], a[2] + b[1])
        if a[0] == "i64" and b[0] == "ptr":
            return ptr(b[1], b[2] + a[1])
        return UNDEF
    if name == "sub32":
        a, b = vals
        if a[0] == "i32" and b[0] == "i32":
            return i32(a[1] - b[1])
        return UNDEF
    if name == "sub64":
        a, b = vals
        if a[0] == "i64" and b[0] == "i64":
            return i64(a[1] - b[1])
        return UNDEF
    if name == "mul32":
        a, b = vals
        if a[0] == "i32" and b[0] == "i32":
            return i32(a[1] * b[1])
        return UNDEF
    if name == "mul64":
        a, b = vals
        if a[0] == "i64" and b[0] == "i64":
            return i64(a[1] * b[1])
        return UNDEF
    if name == "shl32":
        (a,) = vals
        if a[0] == "i32":
            return i32(a[1] << op.imm)
        return UNDEF
    if name == "shl64":
        (a,) = vals
        if a[0] == "i64":
            return i64(a[1] << op.imm)
        return UNDEF
    if name == "sext32to64":
        (a,) = vals
        if a[0] == "i32":
            return i64(a[1])
        return UNDEF
    if name == "addimm32":
        (a,) = vals
        if a[0] == "i32":
            return i32(a[1] + op.imm)
        return UNDEF
    if name == "addimm64":
        (a,) = vals
        if a[0] == "i64":
            return i64(a[1] + op.imm)
        if a[0] == "ptr":
            return ptr(a[1], a[2] + op.imm)
        return UNDEF
    if name == "mulimm32":
        (a,) = vals
        if a[0] == "i32":
            return i32(a[1] * op.imm)
        return UNDEF
    if name == "mulimm64":
        (a,) = vals
        if a[0] == "i64":
            return i64(a[1] * op.imm)
        return UNDEF
    if name == "fadd64" or name == "fmul64":
        a, b = vals
        if a[0] == "f64" and b[0] == "f64":
            x = struct.unpack("<d", struct.pack("<Q", a[1]))[0]
            y = struct.unpack("<d", struct.pack("<Q", b[1]))[0]
            z = x + y if name == "fadd64" else x * y
            return f64(struct.unpack("<Q", struct.pack("<d", z))[0])
        return UNDEF
    raise ValueError(f"unknown op {name}")


def eval_addr(mode, vals):
    """Address value of an addressing mode; UNDEF unless it is a pointer.

    An indexed mode accepts a 32-bit index and sign-extends it, so loop
    counters can index arrays without a widening op in the loop body.
    """
    if mode.kind == "based":
        (b,) = vals
        if b[0] == "ptr":
            return ptr(b[1], b[2] + mode.offset)
        return UNDEF
    if mode.kind == "indexed":
        b, ix = vals
        if b[0] != "ptr":
            return UNDEF
        if ix[0] == "i64" or ix[0] == "i32":
            return ptr(b[1], b[2] + ix[1] * mode.scale + mode.offset)
        return UNDEF
    return ptr(mode.symbol, mode.offset)


# -------------------------------------------------------------------- memory

def encode_val(chunk, v):
    """Byte cells for storing v with this chunk; undef bytes on kind mismatch."""
    size = CHUNKS[chunk]
    tag = v[0]
    if chunk in ("int8", "int16", "int32"):
        if tag != "i32":
            return [None] * size
        u = v[1] & 0xFFFFFFFF
        return [(u >> (8 * k)) & 0xFF for k in range(size)]
    if chunk == "int64":
        if tag == "i64":
            u = v[1] & 0xFFFFFFFFFFFFFFFF
            return [(u >> (8 * k)) & 0xFF for k in range(8)]
        if tag == "ptr":
            return [("pf", v[1], v[2], k) for k in range(8)]
        return [None] * 8
    if chunk == "float32":
        if tag != "f32":
            return [None] * 4
        return [(v[1] >> (8 * k)) & 0xFF for k in range(4)]
    if tag != "f64":
        return [None] * 8
    return [(v[1] >> (8 * k)) & 0xFF for k in range(8)]


def decode_val(chunk, cells):
    size = CHUNKS[chunk]
    if all(isinstance(c, int) for c in cells):
        u = 0
        for k in range(size):
            u |= cells[k] << (8 * k)
        if chunk == "int8":
            return i32(u - 0x100 if u >= 0x80 else u)
        if chunk == "int16":
            return i32(u - 0x10000 if u >= 0x8000 else u)
        if chunk == "int32":
            return i32(_wrap32(u))
        if chunk == "int64":
            return i64(_wrap64(u))
        if chunk == "float32":
            return f32(u)
        return f64(u)
    if chunk == "int64":
        first = cells[0]
        if (isinstance(first, tuple)
                and all(isinstance(c, tuple) and c[1] == first[1]
                        and c[2] == first[2] and c[3] == k
                        for k, c in enumerate(cells))):
            return ptr(first[1], first[2])
    return UNDEF


def load_chunk(mem, block, off, chunk):
    """Loaded value, or None when the address is invalid."""
    blk = mem.get(block)
    if blk is None:
        return None
    size = CHUNKS[chunk]
    if off < 0 or off + size > len(blk):
        return None
    return decode_val(chunk, blk[off:off + size])


def store_chunk(mem, block, off, chunk, v):
    """True on success, False when the address is invalid."""
    blk = mem.get(block)
    if blk is None:
        return False
    size = CHUNKS[chunk]
    if off < 0 or off + size > len(blk):
        return False
    blk[off:off + size] = encode_val(chunk, v)
    return True


# ----------------------------------------------------------------- execution

@dataclass
class Frame:
    fn: object
    ret_pc: int
    dest: int
    regs: dict
    block: int


class State:
    """Mutable machine state; copy() checkpoints it."""

    __slots__ = ("program", "fn", "pc", "regs", "mem", "stack", "seed",
                 "next_block")

    def __init__(self, program, fn, pc, regs, mem, stack, seed, next_block):
        self.program = program
        self.fn = fn
        self.pc = pc
        self.regs = regs
        self.mem = mem
        self.stack = stack
        self.seed = seed
        self.next_block = next_block

    def copy(self) -> "State":
        mem = {b: list(cells) for b, cells in self.mem.items()}
        stack = [Frame(f.fn, f.ret_pc, f.dest, dict(f.regs), f.block)
                 for f in self.stack]
        return State(self.program, self.fn, self.pc, dict(self.regs), mem,
                     stack, self.seed, self.next_block)


def init_state(program, args, seed=0) -> State:
    fn = program.functions[program.main]
    regs = {}
    for r, v in zip(fn.params, args):
        regs[r] = v
    mem = {sym: [0] * size for sym, size in program.globals.items()}
    mem[1] = [None] * fn.stacksize
    return State(program, fn, fn.entry, regs, mem, [], seed, 2)


def stub_return(seed, symbol, vals):
    h = hashlib.blake2b(repr((seed, symbol, vals)).encode(), digest_size=8)
    return i64(int.from_bytes(h.digest(), "little", signed=True))


_CMP = {
    "eq": lambda a, b: a == b,
    "ne": lambda a, b: a != b,
    "lt": lambda a, b: a < b,
    "le": lambda a, b: a <= b,
    "gt": lambda a, b: a > b,
    "ge": lambda a, b: a >= b,
}


def step(state: State):
    """Execute one instruction in place.

    Returns ('ok', event-or-None), ('trap', reason), or ('done', value).
    """
    ins = state.fn.code[state.pc]
    regs = state.regs
    cls = type(ins)
    if cls is Iop:
        vals = [regs.get(r, UNDEF) for r in ins.args]
        regs[ins.dest] = eval_op(ins.op, vals)
        state.pc = ins.succ
        return ("ok", None)
    if cls is Iload:
        vals = [regs.get(r, UNDEF) for r in ins.args]
        addr = eval_addr(ins.mode, vals)
        if addr[0] != "ptr":
            return ("trap", "load from non-pointer")
        v = load_chunk(state.mem, addr[1], addr[2], ins.chunk)
        if v is None:
            return ("trap", "load out of bounds")
        regs[ins.dest] = v
        state.pc = ins.succ
        return ("ok", None)
    if cls is Istore:
        vals = [regs.get(r, UNDEF) for r in ins.args]
        addr = eval_addr(ins.mode, vals)
        if addr[0] != "ptr":
            return ("trap", "store to non-pointer")
        if not store_chunk(state.mem, addr[1], addr[2], ins.chunk,
                           regs.get(ins.src, UNDEF)):
            return ("trap", "store out of bounds")
        state.pc = ins.succ
        return ("ok", None)
    if cls is Icond:
        a = regs.get(ins.args[0], UNDEF)
        b = regs.get(ins.args[1], UNDEF)
        want = "i32" if ins.cond.width == "w32" else "i64"
        if a[0] != want or b[0] != want:
            return ("trap", "branch on non-integer")
        state.pc = ins.succ_true if _CMP[ins.cond.op](a[1], b[1]) else ins.succ_false
        return ("ok", None)
    if cls is Inop:
        state.pc = ins.succ
        return ("ok", None)
    if cls is Icall:
        vals = tuple(regs.get(r, UNDEF) for r in ins.args)
        callee = state.program.functions.get(ins.callee)
        if callee is None:
            ret = stub_return(state.seed, ins.callee, vals)
            regs[ins.dest] = ret
            state.pc = ins.succ
            return ("ok", ("call", ins.callee, vals, ret))
        if len(vals) != len(callee.params):
            return ("trap", "call arity mismatch")
        block = state.next_block
        state.next_block += 1
        state.mem[block] = [None] * callee.stacksize
        state.stack.append(Frame(state.fn, ins.succ, ins.dest, regs, block))
        state.fn = callee
        state.pc = callee.entry
        state.regs = dict(zip(callee.params, vals))
        return ("ok", None)
    if cls is Ireturn:
        v = regs.get(ins.reg, UNDEF) if ins.reg is not None else UNDEF
        if not state.stack:
            return ("done", v)
        frame = state.stack.pop()
        state.mem.pop(frame.block, None)
        state.fn = frame.fn
        state.pc = frame.ret_pc
        state.regs = frame.regs
        state.regs[frame.dest] = v
        return ("ok", None)
    raise TypeError(f"not an instruction: {ins!r}")


@dataclass(frozen=True)
class Outcome:
    """trace: tuple of ('call', symbol, args, ret) events.
    status: ('returned', value) | ('trapped', reason) | ('outoffuel',)."""
    trace: tuple
    status: tuple


def run(program, args=(), fuel=10**6, seed=0) -> Outcome:
    state = init_state(program, tuple(args), seed)
    trace = []
    for _ in range(fuel):
        tag, payload = step(state)
        if tag == "ok":
            if payload is not None:
                trace.append(payload)
        elif tag == "trap":
            return Outcome(tuple(trace), ("trapped", payload))
        else:
            return Outcome(tuple(trace), ("returned", payload))
    return Outcome(tuple(trace), ("outoffuel",))


# ---------------------------------------------------------------- refinement

def value_refines(orig, new) -> bool:
    """orig may be replaced by new: Undef refines to anything, else equality."""
    return orig == UNDEF or orig == new


def event_refines(orig, new) -> bool:
    if orig[1] != new[1] or len(orig[2]) != len(new[2]):
        return False
    if not all(value_refines(a, b) for a, b in zip(orig[2], new[2])):
        return False
    return value_refines(orig[3], new[3])


def _prefix_refines(short, long):
    return all(event_refines(a, b) for a, b in zip(short, long))


def outcome_refines(orig: Outcome, new: Outcome) -> bool:
    """May `new` stand for `orig`?  Returned runs must match trace-for-trace
    and in the returned value (up to Undef); a trapped original constrains
    only the trace prefix it produced; an out-of-fuel original is checked
    weakly (common prefix)."""
    tag = orig.status[0]
    if tag == "returned":
        return (new.status[0] == "returned"
                and value_refines(orig.status[1], new.status[1])
                and len(orig.trace) == len(new.trace)
                and _prefix_refines(orig.trace, new.trace))
    if tag == "trapped":
        return (len(new.trace) >= len(orig.trace)
                and _prefix_refines(orig.trace, new.trace))
    n = min(len(orig.trace), len(new.trace))
    return _prefix_refines(orig.trace[:n], new.trace[:n])
