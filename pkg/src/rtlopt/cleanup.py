"""Cleanup passes: self-move elimination and liveness-based dead code
elimination.  Both preserve the node graph, turning dead instructions into
nops, so reverse maps through them are identities.
"""

from __future__ import annotations

from .ir import (
    Function, Iload, Inop, Iop, instr_def, instr_uses, successors,
)


def elim_self_moves(fn: Function) -> Function:
    """r := r does nothing; make it a nop."""
    code = {}
    for p, ins in fn.code.items():
        if (isinstance(ins, Iop) and ins.op.name == "move"
                and ins.args[0] == ins.dest):
            code[p] = Inop(ins.succ)
        else:
            code[p] = ins
    return Function(fn.name, fn.params, fn.entry, code, fn.stacksize)


def _live_in_out(fn):
    live_in = {n: frozenset() for n in fn.code}
    live_out = {n: frozenset() for n in fn.code}
    preds = {n: [] for n in fn.code}
    for n, ins in fn.code.items():
        for s in successors(ins):
            preds[s].append(n)
    work = list(fn.code)
    while work:
        n = work.pop()
        ins = fn.code[n]
        out = frozenset().union(*(live_in[s] for s in successors(ins))) \
            if successors(ins) else frozenset()
        d = instr_def(ins)
        new_in = frozenset(instr_uses(ins)) | (out - {d} if d is not None else out)
        if out != live_out[n] or new_in != live_in[n]:
            live_out[n] = out
            live_in[n] = new_in
            work.extend(preds[n])
    return live_in, live_out


def liveness(fn: Function) -> dict:
    """Registers live before each node's instruction."""
    return _live_in_out(fn)[0]


def dce(fn: Function) -> Function:
    """Remove ops and loads whose destination is dead.  Stores, calls,
    branches and returns always stay.  Iterates until stable, so chains of
    dead definitions disappear and the pass is idempotent."""
    cur = fn
    while True:
        live_out = _live_in_out(cur)[1]
        code = {}
        changed = False
        for p, ins in cur.code.items():
            if (type(ins) in (Iop, Iload) and ins.dest not in live_out[p]):
                code[p] = Inop(ins.succ)
                changed = True
            else:
                code[p] = ins
        if not changed:
            return cur
        cur = Function(cur.name, cur.params, cur.entry, code, cur.stacksize)
