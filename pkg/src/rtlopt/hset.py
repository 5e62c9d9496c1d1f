"""Hash-consed sets of positive integers, stored as reduced binary tries.

A key is located by its binary digits, least significant first: key 1 sits at
the root, an even key 2k in the "0" subtree at position k, an odd key 2k+1 in
the "1" subtree at position k.  Each node's flag records membership of the key
addressed by the node's path.

Two structural invariants make equality O(1):

* trees are *reduced* -- no interior node has a false flag and two leaf
  children, so the empty set has exactly one representation;
* trees are *interned* -- all nodes are built through an InternTable, so
  structurally equal subtrees are the same object and carry the same uid.

The intern table is an explicit value threaded through the constructors, not
module state; callers that need canonical handles must share one table.
"""

from __future__ import annotations

MAX_KEY = 2**63 - 1


class _Leaf:
    __slots__ = ()
    uid = 0

    def __repr__(self):
        return "Leaf"


LEAF = _Leaf()


class _Node:
    __slots__ = ("flag", "child0", "child1", "uid")

    def __init__(self, flag, child0, child1, uid):
        self.flag = flag
        self.child0 = child0
        self.child1 = child1
        self.uid = uid

    def __repr__(self):
        return f"Node(uid={self.uid})"


class HSet:
    """Immutable handle on an interned trie. Compare with equal()/subset()."""

    __slots__ = ("root",)

    def __init__(self, root):
        self.root = root

    def __repr__(self):
        return dump(self)


EMPTY = HSet(LEAF)


class InternTable:
    """Owns the node store and the uid counter.

    `descents` counts recursive child traversals performed by the binary
    operations; the identity shortcuts must keep it at zero for x-op-x.
    """

    def __init__(self):
        self._nodes = {}
        self._next_uid = 1
        self.descents = 0

    def __len__(self):
        return len(self._nodes)

    def node(self, flag, child0, child1):
        # Reduction: never build the all-absent node.
        if not flag and child0 is LEAF and child1 is LEAF:
            return LEAF
        key = (flag, child0.uid, child1.uid)
        n = self._nodes.get(key)
        if n is None:
            n = _Node(flag, child0, child1, self._next_uid)
            self._next_uid += 1
            self._nodes[key] = n
        return n

    def canonical(self, node):
        """True if `node` is interned in this table (or is the leaf)."""
        if node is LEAF:
            return True
        return self._nodes.get((node.flag, node.child0.uid, node.child1.uid)) is node


def _check_key(k):
    if not isinstance(k, int) or k < 1 or k > MAX_KEY:
        raise ValueError(f"key out of range: {k!r}")


def empty() -> HSet:
    return EMPTY


def is_empty(s: HSet) -> bool:
    return s.root is LEAF


def contains(s: HSet, k: int) -> bool:
    _check_key(k)
    n = s.root
    while n is not LEAF:
        if k == 1:
            return n.flag
        if k & 1:
            n = n.child1
            k = (k - 1) >> 1
        else:
            n = n.child0
            k >>= 1
    return False


def _add(t, n, k):
    if n is LEAF:
        flag, c0, c1 = False, LEAF, LEAF
    else:
        flag, c0, c1 = n.flag, n.child0, n.child1
    if k == 1:
        if flag and n is not LEAF:
            return n
        return t.node(True, c0, c1)
    if k & 1:
        return t.node(flag, c0, _add(t, c1, (k - 1) >> 1))
    return t.node(flag, _add(t, c0, k >> 1), c1)


def add(t: InternTable, s: HSet, k: int) -> HSet:
    _check_key(k)
    root = _add(t, s.root, k)
    return s if root is s.root else HSet(root)


def _remove(t, n, k):
    if n is LEAF:
        return LEAF
    if k == 1:
        return t.node(False, n.child0, n.child1)
    if k & 1:
        return t.node(n.flag, n.child0, _remove(t, n.child1, (k - 1) >> 1))
    return t.node(n.flag, _remove(t, n.child0, k >> 1), n.child1)


def remove(t: InternTable, s: HSet, k: int) -> HSet:
    _check_key(k)
    root = _remove(t, s.root, k)
    return s if root is s.root else HSet(root)


def _union(t, a, b):
    if a is b:
        return a
    if a is LEAF:
        return b
    if b is LEAF:
        return a
    t.descents += 1
    return t.node(a.flag or b.flag,
                  _union(t, a.child0, b.child0),
                  _union(t, a.child1, b.child1))


def union(t: InternTable, a: HSet, b: HSet) -> HSet:
    if a.root is b.root:
        return a
    root = _union(t, a.root, b.root)
    if root is a.root:
        return a
    if root is b.root:
        return b
    return HSet(root)


def _inter(t, a, b):
    if a is b:
        return a
    if a is LEAF or b is LEAF:
        return LEAF
    t.descents += 1
    return t.node(a.flag and b.flag,
                  _inter(t, a.child0, b.child0),
                  _inter(t, a.child1, b.child1))


def inter(t: InternTable, a: HSet, b: HSet) -> HSet:
    if a.root is b.root:
        return a
    root = _inter(t, a.root, b.root)
    if root is a.root:
        return a
    if root is b.root:
        return b
    return HSet(root)


def _diff(t, a, b):
    if a is b:
        return LEAF
    if a is LEAF:
        return LEAF
    if b is LEAF:
        return a
    t.descents += 1
    return t.node(a.flag and not b.flag,
                  _diff(t, a.child0, b.child0),
                  _diff(t, a.child1, b.child1))


def diff(t: InternTable, a: HSet, b: HSet) -> HSet:
    if a.root is b.root:
        return EMPTY
    root = _diff(t, a.root, b.root)
    if root is a.root:
        return a
    return HSet(root)


def equal(a: HSet, b: HSet) -> bool:
    # Canonical within one table: structural equality is handle equality.
    return a.root is b.root


def _subset(a, b):
    if a is b:
        return True
    if a is LEAF:
        return True
    if b is LEAF:
        return False
    if a.flag and not b.flag:
        return False
    return _subset(a.child0, b.child0) and _subset(a.child1, b.child1)


def subset(a: HSet, b: HSet) -> bool:
    return _subset(a.root, b.root)


def _walk(n, base, bit):
    if n is LEAF:
        return
    if n.flag:
        yield base + bit
    yield from _walk(n.child0, base, bit << 1)
    yield from _walk(n.child1, base + bit, bit << 1)


def contents(s: HSet) -> list:
    """Member keys in ascending numeric order."""
    return sorted(_walk(s.root, 0, 1))


def fold(s: HSet, f, init):
    """Left fold over the members in ascending key order."""
    acc = init
    for k in contents(s):
        acc = f(acc, k)
    return acc


def size(s: HSet) -> int:
    return sum(1 for _ in _walk(s.root, 0, 1))


def min_elt(s: HSet):
    """Smallest member, or None on the empty set."""
    best = None
    for k in _walk(s.root, 0, 1):
        if best is None or k < best:
            best = k
    return best


def dump(s: HSet) -> str:
    return "{" + ",".join(str(k) for k in contents(s)) + "}"


def audit(s: HSet, t: InternTable | None = None) -> None:
    """Walk the whole tree; raise ValueError if any node is unreduced,
    or (given the table) not the interned representative."""
    stack = [s.root]
    while stack:
        n = stack.pop()
        if n is LEAF:
            continue
        if not n.flag and n.child0 is LEAF and n.child1 is LEAF:
            raise ValueError(f"unreduced node uid={n.uid}")
        if t is not None and not t.canonical(n):
            raise ValueError(f"non-canonical node uid={n.uid}")
        stack.append(n.child0)
        stack.append(n.child1)


def from_iter(t: InternTable, keys) -> HSet:
    s = EMPTY
    for k in keys:
        s = add(t, s, k)
    return s
