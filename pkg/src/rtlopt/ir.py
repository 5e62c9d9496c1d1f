"""Register-transfer IR: a program is a set of functions, each a numbered
graph of instructions over virtual registers, plus byte-sized globals.

Values, the operation table, and the text format live here; execution is in
interp, static passes elsewhere.  The text format round-trips: parse_program
and print_program are inverses on valid programs.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass, field

# ---------------------------------------------------------------- operations

# name -> (register arity, takes an immediate)
OPS = {
    "move": (1, False),
    "const32": (0, True),
    "const64": (0, True),
    "add32": (2, False),
    "add64": (2, False),
    "sub32": (2, False),
    "sub64": (2, False),
    "mul32": (2, False),
    "mul64": (2, False),
    "shl32": (1, True),
    "shl64": (1, True),
    "sext32to64": (1, False),
    "addimm32": (1, True),
    "addimm64": (1, True),
    "mulimm32": (1, True),
    "mulimm64": (1, True),
    "fadd64": (2, False),
    "fmul64": (2, False),
}

CHUNKS = {
    "int8": 1,
    "int16": 2,
    "int32": 4,
    "int64": 8,
    "float32": 4,
    "float64": 8,
}

COND_OPS = ("eq", "ne", "lt", "le", "gt", "ge")
SCALES = (1, 2, 4, 8)


@dataclass(frozen=True, slots=True)
class Operation:
    name: str
    imm: int | None = None


@dataclass(frozen=True, slots=True)
class AddrMode:
    """based(offset): [rB + off]; indexed(scale, offset): [rB + rI*scale + off];
    global(symbol, offset): [global "sym" + off]."""
    kind: str
    offset: int = 0
    scale: int | None = None
    symbol: str | None = None

    def nregs(self) -> int:
        return {"based": 1, "indexed": 2, "global": 0}[self.kind]


def based(offset: int = 0) -> AddrMode:
    return AddrMode("based", offset)


def indexed(scale: int, offset: int = 0) -> AddrMode:
    return AddrMode("indexed", offset, scale)


def global_addr(symbol: str, offset: int = 0) -> AddrMode:
    return AddrMode("global", offset, None, symbol)


@dataclass(frozen=True, slots=True)
class Cond:
    op: str    # eq ne lt le gt ge
    width: str  # w32 | w64


# -------------------------------------------------------------- instructions

@dataclass(frozen=True, slots=True)
class Iop:
    op: Operation
    args: tuple
    dest: int
    succ: int


@dataclass(frozen=True, slots=True)
class Iload:
    chunk: str
    mode: AddrMode
    args: tuple
    dest: int
    succ: int


@dataclass(frozen=True, slots=True)
class Istore:
    chunk: str
    mode: AddrMode
    args: tuple
    src: int
    succ: int


@dataclass(frozen=True, slots=True)
class Icond:
    cond: Cond
    args: tuple
    succ_true: int
    succ_false: int


@dataclass(frozen=True, slots=True)
class Icall:
    callee: str
    args: tuple
    dest: int
    succ: int


@dataclass(frozen=True, slots=True)
class Inop:
    succ: int


@dataclass(frozen=True, slots=True)
class Ireturn:
    reg: int | None = None


def successors(ins) -> tuple:
    if isinstance(ins, Icond):
        return (ins.succ_true, ins.succ_false)
    if isinstance(ins, Ireturn):
        return ()
    return (ins.succ,)


def with_successors(ins, succs):
    """Same instruction, successor fields replaced positionally."""
    if isinstance(ins, Icond):
        return Icond(ins.cond, ins.args, succs[0], succs[1])
    if isinstance(ins, Ireturn):
        return ins
    if isinstance(ins, Iop):
        return Iop(ins.op, ins.args, ins.dest, succs[0])
    if isinstance(ins, Iload):
        return Iload(ins.chunk, ins.mode, ins.args, ins.dest, succs[0])
    if isinstance(ins, Istore):
        return Istore(ins.chunk, ins.mode, ins.args, ins.src, succs[0])
    if isinstance(ins, Icall):
        return Icall(ins.callee, ins.args, ins.dest, succs[0])
    return Inop(succs[0])


def instr_uses(ins) -> tuple:
    if isinstance(ins, (Iop, Iload, Icond, Icall)):
        return ins.args
    if isinstance(ins, Istore):
        return ins.args + (ins.src,)
    if isinstance(ins, Ireturn):
        return () if ins.reg is None else (ins.reg,)
    return ()


def instr_def(ins):
    if isinstance(ins, (Iop, Iload, Icall)):
        return ins.dest
    return None


@dataclass
class Function:
    name: str
    params: tuple
    entry: int
    code: dict
    stacksize: int = 0

    def max_node(self) -> int:
        return max(self.code) if self.code else 0


@dataclass
class Program:
    functions: dict
    globals: dict = field(default_factory=dict)
    main: str = "main"


# -------------------------------------------------------------------- values
#
# Values are tagged tuples so they hash, compare, and copy cheaply:
#   ('i32', n) ('i64', n)   signed, wrapped to width
#   ('f32', bits) ('f64', bits)   IEEE-754 bit patterns, unsigned ints
#   ('ptr', block, off)    block is a global symbol or a stack block id
#   ('undef',)

UNDEF = ("undef",)


def _wrap32(n):
    return ((n + 0x80000000) & 0xFFFFFFFF) - 0x80000000


def _wrap64(n):
    return ((n + 0x8000000000000000) & 0xFFFFFFFFFFFFFFFF) - 0x8000000000000000


def i32(n) -> tuple:
    return ("i32", _wrap32(n))


def i64(n) -> tuple:
    return ("i64", _wrap64(n))


def f32(bits) -> tuple:
    return ("f32", bits & 0xFFFFFFFF)


def f64(bits) -> tuple:
    return ("f64", bits & 0xFFFFFFFFFFFFFFFF)


def ptr(block, off) -> tuple:
    return ("ptr", block, _wrap64(off))


def f64_from_float(x: float) -> tuple:
    return ("f64", struct.unpack("<Q", struct.pack("<d", x))[0])


def f64_to_float(v) -> float:
    return struct.unpack("<d", struct.pack("<Q", v[1]))[0]


def f32_from_float(x: float) -> tuple:
    return ("f32", struct.unpack("<I", struct.pack("<f", x))[0])


def f32_to_float(v) -> float:
    return struct.unpack("<f", struct.pack("<I", v[1]))[0]


def value_to_text(v) -> str:
    tag = v[0]
    if tag == "i32" or tag == "i64":
        return f"{tag}:{v[1]}"
    if tag == "f32":
        return f"f32:0x{v[1]:08x}"
    if tag == "f64":
        return f"f64:0x{v[1]:016x}"
    if tag == "ptr":
        return f"ptr:{v[1]}+{v[2]}"
    return "undef"


def value_from_text(s: str) -> tuple:
    s = s.strip()
    if s == "undef":
        return UNDEF
    kind, _, rest = s.partition(":")
    if kind == "i32":
        return i32(int(rest, 0))
    if kind == "i64":
        return i64(int(rest, 0))
    if kind == "f32":
        return f32(int(rest, 0))
    if kind == "f64":
        return f64(int(rest, 0))
    if kind == "ptr":
        block, plus, off = rest.partition("+")
        return ptr(block, int(off, 0) if plus else 0)
    raise ValueError(f"bad value: {s!r}")


# --------------------------------------------------------------------- print

def _addr_text(mode: AddrMode, args) -> str:
    if mode.kind == "based":
        return f"[r{args[0]} + {mode.offset}]"
    if mode.kind == "indexed":
        return f"[r{args[0]} + r{args[1]} * {mode.scale} + {mode.offset}]"
    return f'[global "{mode.symbol}" + {mode.offset}]'


def _op_args_text(op: Operation, args) -> str:
    parts = [f"r{a}" for a in args]
    if op.imm is not None:
        parts.append(str(op.imm))
    return ", ".join(parts)


def cond_name(c: Cond) -> str:
    return c.op + ("32" if c.width == "w32" else "64")


def _instr_text(ins) -> str:
    if isinstance(ins, Iop):
        rhs = ins.op.name
        argtext = _op_args_text(ins.op, ins.args)
        if argtext:
            rhs += " " + argtext
        return f"r{ins.dest} = {rhs} -> {ins.succ}"
    if isinstance(ins, Iload):
        return (f"r{ins.dest} = load {ins.chunk} "
                f"{_addr_text(ins.mode, ins.args)} -> {ins.succ}")
    if isinstance(ins, Istore):
        return (f"store {ins.chunk} {_addr_text(ins.mode, ins.args)} "
                f"r{ins.src} -> {ins.succ}")
    if isinstance(ins, Icond):
        return (f"if {cond_name(ins.cond)} r{ins.args[0]}, r{ins.args[1]} "
                f"then {ins.succ_true} else {ins.succ_false}")
    if isinstance(ins, Icall):
        args = ", ".join(f"r{a}" for a in ins.args)
        return f'r{ins.dest} = call "{ins.callee}" ({args}) -> {ins.succ}'
    if isinstance(ins, Inop):
        return f"nop -> {ins.succ}"
    if isinstance(ins, Ireturn):
        return "return" if ins.reg is None else f"return r{ins.reg}"
    raise TypeError(f"not an instruction: {ins!r}")


def print_function(fn: Function) -> str:
    params = ", ".join(f"r{r}" for r in fn.params)
    lines = [f'function "{fn.name}"({params}) stack {fn.stacksize} {{',
             f"  entry {fn.entry}"]
    for node in sorted(fn.code):
        lines.append(f"  {node}: {_instr_text(fn.code[node])}")
    lines.append("}")
    return "\n".join(lines)


def print_program(p: Program) -> str:
    out = [f'main "{p.main}"']
    for sym in sorted(p.globals):
        out.append(f'global "{sym}" size {p.globals[sym]}')
    for name in sorted(p.functions):
        out.append("")
        out.append(print_function(p.functions[name]))
    return "\n".join(out) + "\n"


# --------------------------------------------------------------------- parse

class ParseError(Exception):
    def __init__(self, msg, line=None):
        self.line = line
        super().__init__(msg if line is None else f"line {line}: {msg}")


_SYM = r'[A-Za-z_][A-Za-z0-9_.$]*'
_INT = r'-?(?:0[xX][0-9a-fA-F]+|\d+)'
_RE_MAIN = re.compile(rf'^main "({_SYM})"$')
_RE_GLOBAL = re.compile(rf'^global "({_SYM})" size (\d+)$')
_RE_FUNC = re.compile(rf'^function "({_SYM})"\(([^)]*)\) stack (\d+) \{{$')
_RE_ENTRY = re.compile(r'^entry (\d+)$')
_RE_NODE = re.compile(r'^(\d+):\s*(.+)$')
_RE_LOAD = re.compile(rf'^r(\d+) = load (\w+) \[(.+)\] -> (\d+)$')
_RE_STORE = re.compile(rf'^store (\w+) \[(.+)\] r(\d+) -> (\d+)$')
_RE_IF = re.compile(r'^if (\w+) r(\d+), r(\d+) then (\d+) else (\d+)$')
_RE_CALL = re.compile(rf'^r(\d+) = call "({_SYM})" \(([^)]*)\) -> (\d+)$')
_RE_NOP = re.compile(r'^nop -> (\d+)$')
_RE_RET = re.compile(r'^return(?: r(\d+))?$')
_RE_OP = re.compile(rf'^r(\d+) = (\w+)((?: .*)?) -> (\d+)$')
_RE_ADDR_IDX = re.compile(rf'^r(\d+) \+ r(\d+) \* (\d+) \+ ({_INT})$')
_RE_ADDR_BASED = re.compile(rf'^r(\d+) \+ ({_INT})$')
_RE_ADDR_GLOB = re.compile(rf'^global "({_SYM})" \+ ({_INT})$')


def _parse_int(s):
    return int(s, 0)


def _parse_addr(text, line):
    m = _RE_ADDR_IDX.match(text)
    if m:
        scale = int(m.group(3))
        if scale not in SCALES:
            raise ParseError(f"bad scale {scale}", line)
        return indexed(scale, _parse_int(m.group(4))), (int(m.group(1)), int(m.group(2)))
    m = _RE_ADDR_BASED.match(text)
    if m:
        return based(_parse_int(m.group(2))), (int(m.group(1)),)
    m = _RE_ADDR_GLOB.match(text)
    if m:
        return global_addr(m.group(1), _parse_int(m.group(2))), ()
    raise ParseError(f"bad address: [{text}]", line)


def _parse_cond(name, line):
    for op in COND_OPS:
        if name == op + "32":
            return Cond(op, "w32")
        if name == op + "64":
            return Cond(op, "w64")
    raise ParseError(f"unknown condition {name!r}", line)


def _parse_instr(text, line):
    m = _RE_LOAD.match(text)
    if m:
        if m.group(2) not in CHUNKS:
            raise ParseError(f"unknown chunk {m.group(2)!r}", line)
        mode, args = _parse_addr(m.group(3), line)
        return Iload(m.group(2), mode, args, int(m.group(1)), int(m.group(4)))
    m = _RE_STORE.match(text)
    if m:
        if m.group(1) not in CHUNKS:
            raise ParseError(f"unknown chunk {m.group(1)!r}", line)
        mode, args = _parse_addr(m.group(2), line)
        return Istore(m.group(1), mode, args, int(m.group(3)), int(m.group(4)))
    m = _RE_IF.match(text)
    if m:
        cond = _parse_cond(m.group(1), line)
        return Icond(cond, (int(m.group(2)), int(m.group(3))),
                     int(m.group(4)), int(m.group(5)))
    m = _RE_CALL.match(text)
    if m:
        args = tuple(int(a.strip()[1:]) for a in m.group(3).split(",") if a.strip())
        return Icall(m.group(2), args, int(m.group(1)), int(m.group(4)))
    m = _RE_NOP.match(text)
    if m:
        return Inop(int(m.group(1)))
    m = _RE_RET.match(text)
    if m:
        return Ireturn(int(m.group(1)) if m.group(1) else None)
    m = _RE_OP.match(text)
    if m:
        dest, name, argtext, succ = m.group(1), m.group(2), m.group(3).strip(), m.group(4)
        if name not in OPS:
            raise ParseError(f"unknown op {name!r}", line)
        arity, has_imm = OPS[name]
        parts = [a.strip() for a in argtext.split(",")] if argtext else []
        regs, imm = [], None
        for part in parts:
            if part.startswith("r") and part[1:].isdigit():
                regs.append(int(part[1:]))
            else:
                if imm is not None:
                    raise ParseError("two immediates", line)
                try:
                    imm = _parse_int(part)
                except ValueError:
                    raise ParseError(f"bad operand {part!r}", line) from None
        if len(regs) != arity or (imm is not None) != has_imm:
            raise ParseError(f"wrong operands for {name}", line)
        return Iop(Operation(name, imm), tuple(regs), int(dest), int(succ))
    raise ParseError(f"cannot parse instruction: {text!r}", line)


def parse_program(text: str) -> Program:
    functions: dict = {}
    globals_: dict = {}
    main = None
    cur: Function | None = None
    saw_entry = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if cur is None:
            m = _RE_MAIN.match(line)
            if m:
                main = m.group(1)
                continue
            m = _RE_GLOBAL.match(line)
            if m:
                sym = m.group(1)
                if sym in globals_:
                    raise ParseError(f"duplicate global {sym!r}", lineno)
                globals_[sym] = int(m.group(2))
                continue
            m = _RE_FUNC.match(line)
            if m:
                name = m.group(1)
                if name in functions:
                    raise ParseError(f"duplicate function {name!r}", lineno)
                params = tuple(int(p.strip()[1:])
                               for p in m.group(2).split(",") if p.strip())
                cur = Function(name, params, 0, {}, int(m.group(3)))
                saw_entry = False
                continue
            raise ParseError(f"unexpected line: {line!r}", lineno)
        if line == "}":
            if not saw_entry:
                raise ParseError(f"function {cur.name!r} has no entry", lineno)
            functions[cur.name] = cur
            cur = None
            continue
        m = _RE_ENTRY.match(line)
        if m:
            cur.entry = int(m.group(1))
            saw_entry = True
            continue
        m = _RE_NODE.match(line)
        if m:
            node = int(m.group(1))
            if node in cur.code:
                raise ParseError(f"duplicate node {node}", lineno)
            cur.code[node] = _parse_instr(m.group(2).strip(), lineno)
            continue
        raise ParseError(f"unexpected line: {line!r}", lineno)
    if cur is not None:
        raise ParseError(f"unterminated function {cur.name!r}")
    if main is None:
        main = "main"
    return Program(functions, globals_, main)


# ------------------------------------------------------------------ validate

def validate(p: Program) -> list:
    """Structural well-formedness diagnostics; empty list means valid."""
    errs = []
    for sym, sz in p.globals.items():
        if sz < 0:
            errs.append(f"global {sym}: negative size")
        if sym in p.functions:
            errs.append(f"symbol {sym} is both global and function")
    if p.main not in p.functions:
        errs.append(f"main {p.main!r} is not a function")
    for fn in p.functions.values():
        where = f"function {fn.name}"
        if fn.stacksize < 0:
            errs.append(f"{where}: negative stacksize")
        if len(set(fn.params)) != len(fn.params):
            errs.append(f"{where}: duplicate params")
        for r in fn.params:
            if r < 1:
                errs.append(f"{where}: bad register r{r}")
        if fn.entry not in fn.code:
            errs.append(f"{where}: entry {fn.entry} not in code")
        for node, ins in fn.code.items():
            ctx = f"{where} node {node}"
            if node < 1:
                errs.append(f"{ctx}: node ids must be positive")
            for s in successors(ins):
                if s not in fn.code:
                    errs.append(f"{ctx}: successor {s} does not exist")
            for r in instr_uses(ins):
                if r < 1:
                    errs.append(f"{ctx}: bad register r{r}")
            d = instr_def(ins)
            if d is not None and d < 1:
                errs.append(f"{ctx}: bad register r{d}")
            if isinstance(ins, Iop):
                name = ins.op.name
                if name not in OPS:
                    errs.append(f"{ctx}: unknown op {name}")
                    continue
                arity, has_imm = OPS[name]
                if len(ins.args) != arity:
                    errs.append(f"{ctx}: {name} expects {arity} args")
                if (ins.op.imm is not None) != has_imm:
                    errs.append(f"{ctx}: {name} immediate mismatch")
                if name in ("shl32", "shl64") and ins.op.imm is not None:
                    width = 32 if name == "shl32" else 64
                    if not 0 <= ins.op.imm < width:
                        errs.append(f"{ctx}: shift amount out of range")
            elif isinstance(ins, (Iload, Istore)):
                if ins.chunk not in CHUNKS:
                    errs.append(f"{ctx}: unknown chunk {ins.chunk}")
                if len(ins.args) != ins.mode.nregs():
                    errs.append(f"{ctx}: addressing wants {ins.mode.nregs()} regs")
                if ins.mode.kind == "indexed" and ins.mode.scale not in SCALES:
                    errs.append(f"{ctx}: bad scale {ins.mode.scale}")
                if ins.mode.kind == "global" and ins.mode.symbol not in p.globals:
                    errs.append(f"{ctx}: unknown global {ins.mode.symbol!r}")
            elif isinstance(ins, Icond):
                if ins.cond.op not in COND_OPS or ins.cond.width not in ("w32", "w64"):
                    errs.append(f"{ctx}: bad condition")
                if len(ins.args) != 2:
                    errs.append(f"{ctx}: condition wants 2 args")
    return errs
