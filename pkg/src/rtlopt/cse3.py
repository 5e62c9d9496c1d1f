"""Global common-subexpression elimination over equation sets.

The analysis tracks, at every node, a set of valid equations `r = op(args)`
or `r = chunk[addressing]`.  Equations are interned into a catalog and the
abstract state is a hash-consed set of their ids: Bot (unreached, written
None) below every Known(ids), intersection at joins, the empty set as the
"know nothing" entry state.

The result is consumed twice: `rewrite` replaces recomputations by moves,
and `check_inductive` re-verifies the claimed invariants from the catalog
alone, trusting neither the fixpoint engine nor the index tables.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass

from . import hset
from .dup import postorder, reachable
from .ir import (
    CHUNKS, UNDEF, AddrMode, Function, Icall, Iload, Iop, Istore,
    Operation, successors,
)
from .interp import eval_addr, eval_op, load_chunk, value_refines
from .typecheck import T64, chunk_matches

FORGET_ALL = "forget-all"    # calls invalidate every equation
FORGET_MEM = "forget-mem"    # calls invalidate memory equations + the dest

MOVE = Operation("move")


@dataclass
class CseOptions:
    across_calls: str = FORGET_ALL
    glb_moves: bool = True       # add r_d = r'_d when the rhs is already computed
    trivial_consts: bool = True  # consts are not worth replacing by moves


@dataclass(frozen=True, slots=True)
class ROp:
    op: Operation
    args: tuple


@dataclass(frozen=True, slots=True)
class RLoad:
    chunk: str
    mode: AddrMode
    args: tuple


@dataclass(frozen=True, slots=True)
class Equation:
    lhs: int
    rhs: object


class AnalysisError(Exception):
    pass


class Tables:
    """Catalog plus index sets.  All sets live in one intern table so state
    joins and subset checks shortcut on handle equality."""

    __slots__ = ("intern", "catalog", "eq_to_id", "rhs_to_ids", "reg_to_ids",
                 "reg_to_moves", "mem_ids", "next_id", "frozen", "steps")

    def __init__(self, intern=None, frozen=False):
        self.intern = intern if intern is not None else hset.InternTable()
        self.catalog = {}
        self.eq_to_id = {}
        self.rhs_to_ids = {}
        self.reg_to_ids = {}
        self.reg_to_moves = {}
        self.mem_ids = hset.empty()
        self.next_id = 1
        self.frozen = frozen
        self.steps = 0

    def _index(self, eq, eid):
        t = self.intern
        self.rhs_to_ids[eq.rhs] = hset.add(
            t, self.rhs_to_ids.get(eq.rhs, hset.EMPTY), eid)
        self.reg_to_ids[eq.lhs] = hset.add(
            t, self.reg_to_ids.get(eq.lhs, hset.EMPTY), eid)
        for a in eq.rhs.args:
            self.reg_to_ids[a] = hset.add(
                t, self.reg_to_ids.get(a, hset.EMPTY), eid)
        if isinstance(eq.rhs, ROp):
            if eq.rhs.op.name == "move":
                self.reg_to_moves[eq.lhs] = hset.add(
                    t, self.reg_to_moves.get(eq.lhs, hset.EMPTY), eid)
        else:
            self.mem_ids = hset.add(t, self.mem_ids, eid)

    def intern_equation(self, eq: Equation):
        """Dense id of eq, interning it on first sight.  A frozen table
        never learns: unknown equations yield None."""
        eid = self.eq_to_id.get(eq)
        if eid is not None:
            return eid
        if self.frozen:
            return None
        if eq.lhs in eq.rhs.args:
            raise AnalysisError(f"lhs r{eq.lhs} occurs in rhs")
        eid = self.next_id
        self.next_id += 1
        self.eq_to_id[eq] = eid
        self.catalog[eid] = eq
        self._index(eq, eid)
        return eid


def rebuild_tables(catalog: dict, intern=None) -> Tables:
    """Index tables recomputed from the catalog alone (frozen).  Passing an
    intern table keeps new sets canonical with existing handles."""
    t = Tables(intern=intern, frozen=True)
    for eid in sorted(catalog):
        eq = catalog[eid]
        if eq in t.eq_to_id:
            raise ValueError(f"catalog not injective at id {eid}")
        if eq.lhs in eq.rhs.args:
            raise ValueError(f"catalog id {eid}: lhs occurs in rhs")
        t.eq_to_id[eq] = eid
        t.catalog[eid] = eq
        t._index(eq, eid)
    t.next_id = max(catalog, default=0) + 1
    return t


# --------------------------------------------------------- state operations
#
# Abstract states: None is Bot; an HSet of equation ids is Known.

def forward_move(t: Tables, s, r: int) -> int:
    """Register r forwarded through a valid move equation, smallest id wins."""
    m = t.reg_to_moves.get(r)
    if m is None:
        return r
    ids = hset.inter(t.intern, s, m)
    eid = hset.min_elt(ids)
    if eid is None:
        return r
    return t.catalog[eid].rhs.args[0]


def kill_reg(t: Tables, s, r: int):
    """Drop every equation mentioning r (as lhs or argument)."""
    ids = t.reg_to_ids.get(r)
    if ids is None:
        return s
    return hset.diff(t.intern, s, ids)


def find_computed(t: Tables, s, rhs):
    """lhs of a valid equation with exactly this rhs, smallest id wins."""
    m = t.rhs_to_ids.get(rhs)
    if m is None:
        return None
    ids = hset.inter(t.intern, s, m)
    eid = hset.min_elt(ids)
    if eid is None:
        return None
    return t.catalog[eid].lhs


def may_overlap(a, b) -> bool:
    """Conservative aliasing of (mode, args, chunk) accesses: different
    globals never collide, nor do disjoint ranges off one global or one
    shared base register; everything else may."""
    mode_a, args_a, chunk_a = a
    mode_b, args_b, chunk_b = b
    size_a, size_b = CHUNKS[chunk_a], CHUNKS[chunk_b]
    if mode_a.kind == "global" and mode_b.kind == "global":
        if mode_a.symbol != mode_b.symbol:
            return False
        return not (mode_a.offset + size_a <= mode_b.offset
                    or mode_b.offset + size_b <= mode_a.offset)
    if (mode_a.kind == "based" and mode_b.kind == "based"
            and args_a[0] == args_b[0]):
        return not (mode_a.offset + size_a <= mode_b.offset
                    or mode_b.offset + size_b <= mode_a.offset)
    return True


def _add_eq(t, s, eq):
    eid = t.intern_equation(eq)
    if eid is None:
        return s
    return hset.add(t.intern, s, eid)


def transfer(t: Tables, s, ins, env: dict, opts: CseOptions):
    """Abstract post-state of executing ins from s."""
    if s is None:
        return None
    cls = type(ins)
    if cls is Iop:
        d = ins.dest
        if ins.op.name == "move":
            if ins.args[0] == d:
                return s
            fargs = (forward_move(t, s, ins.args[0]),)
            if fargs[0] == d:
                # the source holds d's value already; nothing changes
                return s
            eq = Equation(d, ROp(MOVE, fargs))
            eid = t.eq_to_id.get(eq)
            if eid is not None and hset.contains(s, eid):
                return s
            return _add_eq(t, kill_reg(t, s, d), eq)
        if d in ins.args:
            return kill_reg(t, s, d)
        fargs = tuple(forward_move(t, s, a) for a in ins.args)
        rhs = ROp(ins.op, fargs)
        eid = t.eq_to_id.get(Equation(d, rhs))
        if eid is not None and hset.contains(s, eid):
            # recomputation of a value d already holds: a no-op, so every
            # equation survives -- this is what lets invariants flow around
            # loop back edges past the re-established definitions
            return s
        prev = find_computed(t, s, rhs) if opts.glb_moves else None
        out = kill_reg(t, s, d)
        if d not in fargs:
            out = _add_eq(t, out, Equation(d, rhs))
        if prev is not None and prev != d:
            out = _add_eq(t, out, Equation(d, ROp(MOVE, (prev,))))
        return out
    if cls is Iload:
        d = ins.dest
        if d in ins.args:
            return kill_reg(t, s, d)
        fargs = tuple(forward_move(t, s, a) for a in ins.args)
        rhs = RLoad(ins.chunk, ins.mode, fargs)
        eid = t.eq_to_id.get(Equation(d, rhs))
        if eid is not None and hset.contains(s, eid):
            return s
        prev = find_computed(t, s, rhs) if opts.glb_moves else None
        out = kill_reg(t, s, d)
        if d not in fargs:
            out = _add_eq(t, out, Equation(d, rhs))
        if prev is not None and prev != d:
            out = _add_eq(t, out, Equation(d, ROp(MOVE, (prev,))))
        return out
    if cls is Istore:
        fargs = tuple(forward_move(t, s, a) for a in ins.args)
        out = s
        live_mem = hset.inter(t.intern, s, t.mem_ids)
        for eid in hset.contents(live_mem):
            eq = t.catalog[eid]
            if may_overlap((ins.mode, fargs, ins.chunk),
                           (eq.rhs.mode, eq.rhs.args, eq.rhs.chunk)):
                out = hset.remove(t.intern, out, eid)
        # a store forwards to later loads of the same slot, but only when
        # the full register width travels through memory unchanged
        if chunk_matches(ins.chunk, env.get(ins.src, T64)) and ins.src not in fargs:
            out = _add_eq(t, out, Equation(ins.src, RLoad(ins.chunk, ins.mode, fargs)))
        return out
    if cls is Icall:
        if opts.across_calls == FORGET_ALL:
            return hset.empty()
        out = hset.diff(t.intern, s, t.mem_ids)
        return kill_reg(t, out, ins.dest)
    return s


# ------------------------------------------------------------------ analysis

def analyze(fn: Function, env: dict, opts: CseOptions):
    """Kildall forward fixpoint.  Returns (catalog, tables, invariants);
    invariants maps every node to an id set or None for unreached."""
    t = Tables()
    inv = {n: None for n in fn.code}
    inv[fn.entry] = hset.empty()
    seen = reachable(fn)
    order = {n: i for i, n in enumerate(reversed(postorder(fn, seen)))}
    heap = [(0, fn.entry)]
    pending = {fn.entry}
    steps = 0
    while heap:
        _, node = heapq.heappop(heap)
        if node not in pending:
            continue
        pending.discard(node)
        steps += 1
        if steps > len(fn.code) * (1 + len(t.catalog)) + 1:
            raise AnalysisError("fixpoint failed to stabilize")
        out = transfer(t, inv[node], fn.code[node], env, opts)
        for succ in successors(fn.code[node]):
            cur = inv[succ]
            new = out if cur is None else hset.inter(t.intern, cur, out)
            if cur is None or not hset.equal(new, cur):
                inv[succ] = new
                if succ not in pending:
                    pending.add(succ)
                    heapq.heappush(heap, (order[succ], succ))
    t.steps = steps
    return t.catalog, t, inv


def check_inductive(fn: Function, env: dict, opts: CseOptions,
                    catalog: dict, inv: dict, intern=None):
    """Re-verify claimed invariants from the catalog alone.

    Rebuilds index tables (frozen), requires the entry invariant to be the
    empty set, and checks transfer(inv[p]) under-approximates inv[p'] along
    every edge.  With no intern table given, inv's sets are re-interned
    first, so nothing from the producing analysis is trusted.  Returns None
    on acceptance or ((p, p'), reason) for the first failing edge.
    """
    try:
        t = rebuild_tables(catalog, intern)
    except ValueError as e:
        return ((fn.entry, fn.entry), str(e))
    if intern is None:
        cache = {}
        fixed = {}
        for n, s in inv.items():
            if s is None:
                fixed[n] = None
            else:
                got = cache.get(s.root.uid)
                if got is None:
                    got = hset.from_iter(t.intern, hset.contents(s))
                    cache[s.root.uid] = got
                fixed[n] = got
        inv = fixed
    s0 = inv.get(fn.entry)
    if s0 is None or not hset.is_empty(s0):
        return ((fn.entry, fn.entry), "entry invariant is not the empty set")
    for p in sorted(fn.code):
        s = inv.get(p)
        if s is None:
            continue
        out = transfer(t, s, fn.code[p], env, opts)
        for succ in successors(fn.code[p]):
            cur = inv.get(succ)
            if cur is None:
                return ((p, succ), "known state flows into bottom")
            if not hset.subset(cur, out):
                return ((p, succ), "successor invariant not implied by transfer")
    return None


# ------------------------------------------------------------------- rewrite

def rewrite(fn: Function, env: dict, catalog: dict, t: Tables, inv: dict,
            opts: CseOptions) -> Function:
    """Replace recomputations by moves and forward move-chained arguments.
    Nodes keep their ids and successors; only Iop/Iload/Istore change."""
    code = {}
    for p, ins in fn.code.items():
        s = inv.get(p)
        cls = type(ins)
        if s is None or cls not in (Iop, Iload, Istore):
            code[p] = ins
            continue
        if cls is Iop:
            if ins.dest in ins.args:
                code[p] = ins
                continue
            fargs = tuple(forward_move(t, s, a) for a in ins.args)
            name = ins.op.name
            trivial = (name == "move"
                       or (opts.trivial_consts and name in ("const32", "const64")))
            if not trivial:
                prev = find_computed(t, s, ROp(ins.op, fargs))
                if prev is not None:
                    code[p] = Iop(MOVE, (prev,), ins.dest, ins.succ)
                    continue
            code[p] = Iop(ins.op, fargs, ins.dest, ins.succ)
        elif cls is Iload:
            if ins.dest in ins.args:
                code[p] = ins
                continue
            fargs = tuple(forward_move(t, s, a) for a in ins.args)
            prev = find_computed(t, s, RLoad(ins.chunk, ins.mode, fargs))
            if prev is not None:
                code[p] = Iop(MOVE, (prev,), ins.dest, ins.succ)
            else:
                code[p] = Iload(ins.chunk, ins.mode, fargs, ins.dest, ins.succ)
        else:
            fargs = tuple(forward_move(t, s, a) for a in ins.args)
            code[p] = Istore(ins.chunk, ins.mode, fargs, ins.src, ins.succ)
    return Function(fn.name, fn.params, fn.entry, code, fn.stacksize)


# ------------------------------------------------------------ concretization

def eq_holds(regs: dict, mem: dict, eq: Equation) -> bool:
    """Does the equation hold in this machine state?  The rhs is evaluated
    with load-from-invalid-address yielding Undef, and Undef refines any
    lhs value."""
    rhs = eq.rhs
    if isinstance(rhs, ROp):
        v = eval_op(rhs.op, [regs.get(r, UNDEF) for r in rhs.args])
    else:
        addr = eval_addr(rhs.mode, [regs.get(r, UNDEF) for r in rhs.args])
        if addr[0] != "ptr":
            v = UNDEF
        else:
            v = load_chunk(mem, addr[1], addr[2], rhs.chunk)
            if v is None:
                v = UNDEF
    return value_refines(v, regs.get(eq.lhs, UNDEF))


def state_holds(regs, mem, catalog, s) -> bool:
    """All equations of a Known set hold (Bot never concretizes)."""
    if s is None:
        return False
    return all(eq_holds(regs, mem, catalog[eid]) for eid in hset.contents(s))


# ----------------------------------------------------------------- rendering

def _rhs_text(rhs) -> str:
    if isinstance(rhs, ROp):
        parts = [f"r{a}" for a in rhs.args]
        if rhs.op.imm is not None:
            parts.append(str(rhs.op.imm))
        return f"{rhs.op.name}({','.join(parts)})"
    m = rhs.mode
    if m.kind == "based":
        inner = f"r{rhs.args[0]}+{m.offset}"
    elif m.kind == "indexed":
        inner = f"r{rhs.args[0]}+r{rhs.args[1]}*{m.scale}+{m.offset}"
    else:
        inner = f'"{m.symbol}"+{m.offset}'
    return f"{rhs.chunk}[{inner}]"


def equation_text(eq: Equation) -> str:
    return f"r{eq.lhs} = {_rhs_text(eq.rhs)}"


def invariants_text(fn: Function, catalog: dict, inv: dict) -> str:
    """One line per node: `p: {r3 = add32(r1,r2), ...}` in id order."""
    lines = []
    for p in sorted(fn.code):
        s = inv.get(p)
        if s is None:
            lines.append(f"{p}: bot")
        else:
            eqs = ", ".join(equation_text(catalog[i]) for i in hset.contents(s))
            lines.append(f"{p}: {{{eqs}}}")
    return "\n".join(lines)


# -------------------------------------------------------------- serializers

def _mode_to_json(m: AddrMode):
    return {"kind": m.kind, "offset": m.offset, "scale": m.scale,
            "symbol": m.symbol}


def _mode_from_json(d):
    return AddrMode(d["kind"], d["offset"], d.get("scale"), d.get("symbol"))


def catalog_to_json(catalog: dict) -> str:
    out = {}
    for eid, eq in sorted(catalog.items()):
        if isinstance(eq.rhs, ROp):
            rhs = {"kind": "op", "op": eq.rhs.op.name, "imm": eq.rhs.op.imm,
                   "args": list(eq.rhs.args)}
        else:
            rhs = {"kind": "load", "chunk": eq.rhs.chunk,
                   "mode": _mode_to_json(eq.rhs.mode), "args": list(eq.rhs.args)}
        out[str(eid)] = {"lhs": eq.lhs, "rhs": rhs}
    return json.dumps(out)


def catalog_from_json(text: str) -> dict:
    raw = json.loads(text)
    catalog = {}
    for eid, d in raw.items():
        r = d["rhs"]
        if r["kind"] == "op":
            rhs = ROp(Operation(r["op"], r.get("imm")), tuple(r["args"]))
        else:
            rhs = RLoad(r["chunk"], _mode_from_json(r["mode"]), tuple(r["args"]))
        catalog[int(eid)] = Equation(d["lhs"], rhs)
    return catalog


def invariants_to_json(inv: dict) -> str:
    return json.dumps({str(n): (None if s is None else hset.contents(s))
                       for n, s in sorted(inv.items())})


def invariants_from_json(text: str, intern) -> dict:
    raw = json.loads(text)
    return {int(n): (None if ids is None else hset.from_iter(intern, ids))
            for n, ids in raw.items()}
