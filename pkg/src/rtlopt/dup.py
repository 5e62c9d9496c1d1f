"""Code duplication: loop detection, first-iteration unrolling, loop
rotation, and the a-posteriori verifier that accepts or rejects a
(transformed function, reverse node map) pair.

The transformations are untrusted; verify_dup re-derives nothing from them
beyond the map itself.  A reverse map f sends each transformed node to the
original node it simulates; originals map to themselves, copies to their
sources.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .ir import Function, Icond, Ireturn, successors, with_successors


def reachable(fn) -> set:
    seen = {fn.entry}
    work = [fn.entry]
    while work:
        n = work.pop()
        for s in successors(fn.code[n]):
            if s not in seen:
                seen.add(s)
                work.append(s)
    return seen


def postorder(fn, seen):
    order = []
    visited = set()
    stack = [(fn.entry, iter(successors(fn.code[fn.entry])))]
    visited.add(fn.entry)
    while stack:
        node, it = stack[-1]
        advanced = False
        for s in it:
            if s in seen and s not in visited:
                visited.add(s)
                stack.append((s, iter(successors(fn.code[s]))))
                advanced = True
                break
        if not advanced:
            order.append(node)
            stack.pop()
    return order


def dominators(fn) -> dict:
    """Dominator sets over reachable nodes (iterative, reverse postorder)."""
    seen = reachable(fn)
    rpo = list(reversed(postorder(fn, seen)))
    preds = {n: [] for n in seen}
    for n in seen:
        for s in successors(fn.code[n]):
            preds[s].append(n)
    dom = {n: set(seen) for n in seen}
    dom[fn.entry] = {fn.entry}
    changed = True
    while changed:
        changed = False
        for n in rpo:
            if n == fn.entry:
                continue
            ps = [dom[p] for p in preds[n]]
            new = set.intersection(*ps) if ps else set()
            new.add(n)
            if new != dom[n]:
                dom[n] = new
                changed = True
    return dom


@dataclass(frozen=True)
class NaturalLoop:
    header: int
    body: frozenset
    back_sources: frozenset
    innermost: bool


def find_loops(fn) -> list:
    """Natural loops of the reachable CFG, back edges merged per header,
    sorted by header node."""
    seen = reachable(fn)
    dom = dominators(fn)
    preds = {n: [] for n in seen}
    for n in seen:
        for s in successors(fn.code[n]):
            preds[s].append(n)
    back = {}
    for n in seen:
        for s in successors(fn.code[n]):
            if s in dom[n]:
                back.setdefault(s, set()).add(n)
    loops = []
    for header, sources in back.items():
        body = {header}
        work = [u for u in sources if u != header]
        body.update(work)
        while work:
            n = work.pop()
            for p in preds[n]:
                if p not in body:
                    body.add(p)
                    work.append(p)
        loops.append((header, frozenset(body), frozenset(sources)))
    out = []
    for header, body, sources in loops:
        inner = not any(h2 != header and b2 <= body for h2, b2, _ in loops)
        out.append(NaturalLoop(header, body, sources, inner))
    out.sort(key=lambda l: l.header)
    return out


def _preds_of(fn, target) -> list:
    return [n for n, ins in fn.code.items() if target in successors(ins)]


def unroll_first(fn: Function, loop: NaturalLoop, max_body: int):
    """Peel one iteration: while(c){b} becomes if(c){b; while(c){b}}.

    The loop body (condition included) is copied under fresh node ids in
    front of the loop; outside edges into the header are retargeted to the
    copied header, the copy's back edge falls through to the original
    header, and its exit edges go to the original exits.  Returns
    (function, revmap) or None when the loop is not eligible.
    """
    if not loop.innermost or len(loop.back_sources) != 1:
        return None
    if len(loop.body) > max_body:
        return None
    h = loop.header
    u = next(iter(loop.back_sources))
    fresh = fn.max_node() + 1
    copy_of = {}
    for n in sorted(loop.body):
        copy_of[n] = fresh
        fresh += 1
    code = dict(fn.code)
    for n in sorted(loop.body):
        ins = fn.code[n]
        succs = []
        for s in successors(ins):
            if s == h and n == u:
                succs.append(h)
            elif s in loop.body:
                succs.append(copy_of[s])
            else:
                succs.append(s)
        code[copy_of[n]] = with_successors(ins, tuple(succs))
    for q in _preds_of(fn, h):
        if q not in loop.body:
            succs = tuple(copy_of[h] if s == h else s
                          for s in successors(code[q]))
            code[q] = with_successors(code[q], succs)
    entry = copy_of[h] if fn.entry == h else fn.entry
    revmap = {n: n for n in fn.code}
    for n, c in copy_of.items():
        revmap[c] = n
    return Function(fn.name, fn.params, entry, code, fn.stacksize), revmap


def _cond_prefix(fn, loop):
    """Straight-line nodes from the header up to and including its Icond,
    or None when the walk branches, cycles, or leaves the loop first."""
    prefix = []
    n = loop.header
    seen = set()
    while True:
        if n in seen or n not in loop.body:
            return None
        seen.add(n)
        prefix.append(n)
        ins = fn.code[n]
        if isinstance(ins, Icond):
            inside = [s in loop.body for s in successors(ins)]
            if inside.count(True) != 1:
                return None
            return prefix
        succs = successors(ins)
        if len(succs) != 1:
            return None
        n = succs[0]


def rotate(fn: Function, loop: NaturalLoop):
    """Turn while(c){b} into if(c){ do {b} while(c) } by duplicating the
    header's condition prefix in front of the loop.  Returns
    (function, revmap) or None when not applicable."""
    if not loop.innermost or len(loop.back_sources) != 1:
        return None
    prefix = _cond_prefix(fn, loop)
    if prefix is None:
        return None
    h = loop.header
    fresh = fn.max_node() + 1
    copy_of = {}
    for n in prefix:
        copy_of[n] = fresh
        fresh += 1
    code = dict(fn.code)
    for idx, n in enumerate(prefix):
        ins = fn.code[n]
        # chain the copied prefix; the copied condition (last in the chain)
        # branches straight to the original body start and exit
        nxt = prefix[idx + 1] if idx + 1 < len(prefix) else None
        succs = tuple(copy_of[s] if s == nxt else s for s in successors(ins))
        code[copy_of[n]] = with_successors(ins, succs)
    for q in _preds_of(fn, h):
        if q not in loop.body:
            succs = tuple(copy_of[h] if s == h else s
                          for s in successors(code[q]))
            code[q] = with_successors(code[q], succs)
    entry = copy_of[h] if fn.entry == h else fn.entry
    revmap = {n: n for n in fn.code}
    for n, c in copy_of.items():
        revmap[c] = n
    return Function(fn.name, fn.params, entry, code, fn.stacksize), revmap


_MATCH_FIELDS = {
    "Iop": ("op", "args", "dest"),
    "Iload": ("chunk", "mode", "args", "dest"),
    "Istore": ("chunk", "mode", "args", "src"),
    "Icond": ("cond", "args"),
    "Icall": ("callee", "args", "dest"),
    "Inop": (),
    "Ireturn": ("reg",),
}


def verify_dup(orig: Function, transf: Function, revmap: dict):
    """Check that transf simulates orig under the reverse node map.

    Accepts iff the map is total on transf, sends its entry to orig's
    entry, and every transformed instruction equals its image in all
    fields except successors, whose pairs (s', s) satisfy revmap[s'] = s
    (Icond successors positionally).  Returns None on acceptance or
    (node, reason) for the first failure.
    """
    if transf.params != orig.params or transf.stacksize != orig.stacksize:
        return (transf.entry, "signature mismatch")
    if revmap.get(transf.entry) != orig.entry:
        return (transf.entry, "entry not mapped to original entry")
    for n in sorted(transf.code):
        p = revmap.get(n)
        if p is None:
            return (n, "node not in reverse map")
        other = orig.code.get(p)
        ins = transf.code[n]
        if other is None:
            return (n, f"maps to missing node {p}")
        if type(ins) is not type(other):
            return (n, "instruction kind differs")
        for f in _MATCH_FIELDS[type(ins).__name__]:
            if getattr(ins, f) != getattr(other, f):
                return (n, f"field {f} differs")
        ss, so = successors(ins), successors(other)
        for s_new, s_old in zip(ss, so):
            if revmap.get(s_new) != s_old:
                return (n, f"successor {s_new} does not map to {s_old}")
    return None


def revmap_to_json(revmap: dict) -> str:
    return json.dumps({str(k): v for k, v in sorted(revmap.items())})


def revmap_from_json(text: str) -> dict:
    raw = json.loads(text)
    return {int(k): int(v) for k, v in raw.items()}
