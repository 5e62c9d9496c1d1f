"""Register type inference.

Every operation imposes a fixed kind on each register position; `move` is the
one polymorphic instruction and merges its two registers' classes.  T64 and
TPtr share a single 64-bit class -- an int64 chunk stores and reloads either
an I64 or a Ptr losslessly, so the distinction carries no memory-soundness
weight.  TPtr is reported for 64-bit classes that are used as an addressing
base; everything still unconstrained after inference defaults to T64.
"""

from __future__ import annotations

from .ir import (
    Icall, Icond, Iload, Inop, Iop, Ireturn, Istore, instr_uses, instr_def,
)

T32 = "T32"
T64 = "T64"
TF32 = "TF32"
TF64 = "TF64"
TPTR = "TPtr"

# internal unification kinds
_K32, _K64, _KF32, _KF64 = "k32", "k64", "kf32", "kf64"

_CHUNK_KIND = {
    "int8": _K32, "int16": _K32, "int32": _K32, "int64": _K64,
    "float32": _KF32, "float64": _KF64,
}

# op name -> (arg kinds, dest kind); move is handled separately
_OP_SIG = {
    "const32": ((), _K32),
    "const64": ((), _K64),
    "add32": ((_K32, _K32), _K32),
    "sub32": ((_K32, _K32), _K32),
    "mul32": ((_K32, _K32), _K32),
    "add64": ((_K64, _K64), _K64),
    "sub64": ((_K64, _K64), _K64),
    "mul64": ((_K64, _K64), _K64),
    "shl32": ((_K32,), _K32),
    "shl64": ((_K64,), _K64),
    "sext32to64": ((_K32,), _K64),
    "addimm32": ((_K32,), _K32),
    "addimm64": ((_K64,), _K64),
    "mulimm32": ((_K32,), _K32),
    "mulimm64": ((_K64,), _K64),
    "fadd64": ((_KF64, _KF64), _KF64),
    "fmul64": ((_KF64, _KF64), _KF64),
}

_DISPLAY = {_K32: T32, _K64: T64, _KF32: TF32, _KF64: TF64}


class IllTyped(Exception):
    def __init__(self, reg, detail):
        self.reg = reg
        self.detail = detail
        super().__init__(f"r{reg}: {detail}")


class _Unifier:
    def __init__(self):
        self.parent = {}
        self.kind = {}

    def find(self, r):
        p = self.parent.setdefault(r, r)
        while p != self.parent[p]:
            self.parent[p] = self.parent[self.parent[p]]
            p = self.parent[p]
        self.parent[r] = p
        return p

    def assign(self, r, kind):
        root = self.find(r)
        have = self.kind.get(root)
        if have is None:
            self.kind[root] = kind
        elif have != kind:
            raise IllTyped(r, f"used as both {_DISPLAY[have]} and {_DISPLAY[kind]}")

    def merge(self, a, b, at):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        ka, kb = self.kind.get(ra), self.kind.get(rb)
        if ka is not None and kb is not None and ka != kb:
            raise IllTyped(at, f"move joins {_DISPLAY[ka]} and {_DISPLAY[kb]}")
        self.parent[rb] = ra
        if ka is None and kb is not None:
            self.kind[ra] = kb


def infer(fn) -> dict:
    """TypeEnv for every register occurring in fn; raises IllTyped."""
    u = _Unifier()
    regs = set(fn.params)
    ptr_bases = []
    for node in sorted(fn.code):
        ins = fn.code[node]
        regs.update(instr_uses(ins))
        d = instr_def(ins)
        if d is not None:
            regs.add(d)
        if isinstance(ins, Iop):
            if ins.op.name == "move":
                u.merge(ins.dest, ins.args[0], ins.dest)
                continue
            arg_kinds, dest_kind = _OP_SIG[ins.op.name]
            for r, k in zip(ins.args, arg_kinds):
                u.assign(r, k)
            u.assign(ins.dest, dest_kind)
        elif isinstance(ins, (Iload, Istore)):
            if ins.mode.kind in ("based", "indexed"):
                u.assign(ins.args[0], _K64)
                ptr_bases.append(ins.args[0])
            # an indexed index register stays unconstrained: the mode takes
            # a 32- or 64-bit index at runtime
            moved = ins.dest if isinstance(ins, Iload) else ins.src
            u.assign(moved, _CHUNK_KIND[ins.chunk])
        elif isinstance(ins, Icond):
            k = _K32 if ins.cond.width == "w32" else _K64
            u.assign(ins.args[0], k)
            u.assign(ins.args[1], k)
        elif isinstance(ins, Icall):
            u.assign(ins.dest, _K64)
        elif isinstance(ins, (Inop, Ireturn)):
            pass
    ptr_roots = {u.find(r) for r in ptr_bases}
    env = {}
    for r in regs:
        root = u.find(r)
        kind = u.kind.get(root, _K64)
        if kind == _K64 and root in ptr_roots:
            env[r] = TPTR
        else:
            env[r] = _DISPLAY[kind]
    return env


def chunk_matches(chunk: str, ty: str) -> bool:
    """May a store of a `ty` register through `chunk` be read back equal?
    Only full-width chunks qualify; int64 accepts both 64-bit kinds."""
    if chunk == "int32":
        return ty == T32
    if chunk == "int64":
        return ty in (T64, TPTR)
    if chunk == "float32":
        return ty == TF32
    if chunk == "float64":
        return ty == TF64
    return False


def has_type(v, ty) -> bool:
    """Value-level check used by the soundness tests: Undef satisfies
    every type; T64 and TPtr both mean '64-bit integer or pointer'."""
    tag = v[0]
    if tag == "undef":
        return True
    if ty == T32:
        return tag == "i32"
    if ty in (T64, TPTR):
        return tag in ("i64", "ptr")
    if ty == TF32:
        return tag == "f32"
    if ty == TF64:
        return tag == "f64"
    return False
