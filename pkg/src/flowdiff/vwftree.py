"""Persistent ordered-tree representation of a vwf.

Nodes are immutable; every update path-copies, so a handle taken at any time
is a durable snapshot. Each node carries one lazy tag slot in the normal form
``add-after-lift``: pending lift constant ``tc`` applied first, then pending
coefficient adds ``(tdr, tda, tdb)``. Two lifts compose harmonically and two
adds compose additively; a lift arriving over a node whose slot already holds
an add forces that node's tag one level down before composing. Descents apply
the frames met along the path numerically, so interleaved tags anywhere below
stay correct without being disturbed.
"""

from __future__ import annotations

import numpy as np

from .errors import UsageError
from .vwf import Vwf, apply_lift_op, compose_lift

_PRIO_STATE = [0x9E3779B97F4A7C15]


def _next_prio():
    # splitmix64 step; deterministic across runs given identical op sequences
    s = (_PRIO_STATE[0] + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    _PRIO_STATE[0] = s
    z = s
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


class _Node:
    __slots__ = ("key", "r", "a", "b", "prio", "left", "right",
                 "tc", "tdr", "tda", "tdb", "size")

    def __init__(self, key, r, a, b, prio, left, right, tc, tdr, tda, tdb):
        self.key = key
        self.r = r
        self.a = a
        self.b = b
        self.prio = prio
        self.left = left
        self.right = right
        self.tc = tc
        self.tdr = tdr
        self.tda = tda
        self.tdb = tdb
        self.size = 1 + (left.size if left else 0) + (right.size if right else 0)


def _mk(key, r, a, b, prio, left=None, right=None,
        tc=None, tdr=0.0, tda=0.0, tdb=0.0):
    return _Node(key, r, a, b, prio, left, right, tc, tdr, tda, tdb)


def _apply_frame(frame, key, r, a, b):
    """Apply one (tc, dr, da, db) tag to a piece tuple."""
    tc, dr, da, db = frame
    if tc is not None:
        key, r, a, b = apply_lift_op(tc, key, r, a, b)
        key, r, a, b = float(key), float(r), float(a), float(b)
    return key, r + dr, a + da, b + db


def _node_frame(n):
    return (n.tc, n.tdr, n.tda, n.tdb)


def _has_tag(n):
    return n.tc is not None or n.tdr != 0.0 or n.tda != 0.0 or n.tdb != 0.0


def _compose(outer, inner):
    """outer . inner as a single frame, or None when they do not compose."""
    oc, odr, oda, odb = outer
    ic, idr, ida, idb = inner
    if oc is None:
        return (ic, odr + idr, oda + ida, odb + idb)
    if idr == 0.0 and ida == 0.0 and idb == 0.0:
        c = oc if ic is None else compose_lift(oc, ic)
        return (c, odr, oda, odb)
    return None


def _absorb(node, frame):
    """New subtree equal to frame applied over node's subtree."""
    if node is None:
        return None
    if frame[0] is None and frame[1] == 0.0 and frame[2] == 0.0 and frame[3] == 0.0:
        return node
    combined = _compose(frame, _node_frame(node))
    if combined is not None:
        return _mk(node.key, node.r, node.a, node.b, node.prio,
                   node.left, node.right, *combined)
    # lift over a pending add: push the node's own tag one level down first
    node = _pushdown(node)
    return _mk(node.key, node.r, node.a, node.b, node.prio,
               node.left, node.right, *frame)


def _pushdown(node):
    """Copy of node with its tag materialized into the tuple and children."""
    if not _has_tag(node):
        return node
    frame = _node_frame(node)
    key, r, a, b = _apply_frame(frame, node.key, node.r, node.a, node.b)
    return _mk(key, r, a, b, node.prio,
               _absorb(node.left, frame), _absorb(node.right, frame))


def _split(node, key):
    """(keys < key, keys >= key); pushes tags down along the split path."""
    if node is None:
        return None, None
    node = _pushdown(node)
    if node.key < key:
        l, r = _split(node.right, key)
        return _mk(node.key, node.r, node.a, node.b, node.prio,
                   node.left, l), r
    l, r = _split(node.left, key)
    return l, _mk(node.key, node.r, node.a, node.b, node.prio, r, node.right)


def _merge(a, b):
    if a is None:
        return b
    if b is None:
        return a
    if a.prio >= b.prio:
        a = _pushdown(a)
        return _mk(a.key, a.r, a.a, a.b, a.prio, a.left, _merge(a.right, b))
    b = _pushdown(b)
    return _mk(b.key, b.r, b.a, b.b, b.prio, _merge(a, b.left), b.right)


def _build(pieces, lo, hi):
    """Balanced build from sorted pieces; priorities still random for later ops."""
    if lo >= hi:
        return None
    mid = (lo + hi) // 2
    s, r, a, b = pieces[mid]
    return _mk(s, r, a, b, _next_prio(),
               _build(pieces, lo, mid), _build(pieces, mid + 1, hi))


def _fix_heap(node):
    # rebuild heap order after balanced build: rotate max-prio child up
    if node is None:
        return None
    left, right = _fix_heap(node.left), _fix_heap(node.right)
    node = _mk(node.key, node.r, node.a, node.b, node.prio, left, right,
               *_node_frame(node))
    best = node
    if left is not None and left.prio > best.prio:
        best = left
    if right is not None and right.prio > best.prio:
        best = right
    if best is node:
        return node
    if best is left:
        return _mk(left.key, left.r, left.a, left.b, left.prio, left.left,
                   _fix_heap(_mk(node.key, node.r, node.a, node.b, node.prio,
                                 left.right, right)), *_node_frame(left))
    return _mk(right.key, right.r, right.a, right.b, right.prio,
               _fix_heap(_mk(node.key, node.r, node.a, node.b, node.prio,
                             left, right.left)), right.right, *_node_frame(right))


def _inorder(node, frames, out):
    if node is None:
        return
    own = _node_frame(node)
    live = _has_tag(node)
    if live:
        frames = frames + [own]
    _inorder(node.left, frames, out)
    key, r, a, b = node.key, node.r, node.a, node.b
    for f in reversed(frames):
        key, r, a, b = _apply_frame(f, key, r, a, b)
    out.append((key, r, a, b))
    _inorder(node.right, frames, out)


class VwfTree:
    """Persistent handle to a vwf stored as an ordered piece tree.

    All operations return new handles; old ones remain valid snapshots.
    ``optimal_x`` is only defined while the latest operation was ``lift``.
    """

    __slots__ = ("root", "lift_c")

    def __init__(self, root, lift_c=None):
        self.root = root
        self.lift_c = lift_c

    # -- constructors -------------------------------------------------------

    @staticmethod
    def from_vwf(f: Vwf) -> "VwfTree":
        pieces = f.as_tuples()
        return VwfTree(_fix_heap(_build(pieces, 0, len(pieces))))

    # -- queries ------------------------------------------------------------

    @property
    def size(self):
        return self.root.size if self.root else 0

    def snapshot(self) -> "VwfTree":
        """Alias for the handle itself; persistence makes this O(1)."""
        return VwfTree(self.root, self.lift_c)

    def pieces(self):
        out = []
        _inorder(self.root, [], out)
        return out

    def to_vwf(self) -> Vwf:
        pieces = self.pieces()
        s, r, a, b = zip(*pieces)
        return Vwf(s, r, a, b)

    def domain_start(self):
        return self._min_key()

    def _piece_at(self, x):
        best = _locate_iter(self.root, x)
        if best is None:
            raise UsageError(f"x={x} below the domain of this vwf tree")
        return best

    def eval(self, x):
        key, r, a, b = self._piece_at(x)
        return 0.5 * r * x * x + a * x + b

    def derivative(self, x):
        key, r, a, b = self._piece_at(x)
        return r * x + a

    # -- updates ------------------------------------------------------------

    def lift(self, c: float) -> "VwfTree":
        """min_{y in dom} c (x-y)^2 / 2 + f(y); domain widens to all of R."""
        if c <= 0:
            raise UsageError("lift conductance must be positive")
        s0 = self._min_key()
        root = _absorb(self.root, (float(c), 0.0, 0.0, 0.0))
        if np.isfinite(s0):
            fs0 = self.eval(s0)
            piece = (-np.inf, float(c), -float(c) * s0, 0.5 * float(c) * s0 * s0 + fs0)
            root = _insert_piece(root, piece)
        return VwfTree(root, lift_c=float(c))

    def add(self, other: "VwfTree") -> "VwfTree":
        """Pointwise sum; iterates the smaller operand into the larger."""
        big, small = (self, other) if self.size >= other.size else (other, self)
        root = big.root
        small_pieces = small.pieces()
        lo_dom = max(self._min_key(), other._min_key())
        # clip the target below the common domain
        _, root = _split(root, lo_dom)
        if root is None or _min_key_of(root) > lo_dom:
            base = _locate_iter(big.root, lo_dom)
            root = _insert_piece(root, (lo_dom, base[1], base[2], base[3]))
        ss = [p[0] for p in small_pieces] + [np.inf]
        for i, (s, r, a, b) in enumerate(small_pieces):
            lo = max(s, lo_dom)
            hi = ss[i + 1]
            if hi <= lo_dom:
                continue
            root = _ensure_key(root, lo)
            if np.isfinite(hi):
                root = _ensure_key(root, hi)
            root = _range_add(root, lo, hi, r, a, b)
        return VwfTree(root)

    def with_linear(self, slope, offset=0.0) -> "VwfTree":
        """Whole-tree add of slope*x + offset; composes as a pure add tag."""
        return VwfTree(_absorb(self.root, (None, 0.0, float(slope), float(offset))))

    def restrict(self, lower) -> "VwfTree":
        """Shrink the domain to [lower, inf)."""
        if self._min_key() >= lower:
            return self
        cover = _locate_iter(self.root, lower)
        _, upper = _split(self.root, lower)
        if upper is None or _min_key_of(upper) > lower:
            upper = _insert_piece(upper, (lower, cover[1], cover[2], cover[3]))
        return VwfTree(upper)

    def optimal_x(self, x):
        """argmin of the last lift at query point x: x - f'(x) / c."""
        if self.lift_c is None:
            raise UsageError("optimal_x requires the latest update to be a lift")
        key, r, a, b = self._piece_at(x)
        return x - (r * x + a) / self.lift_c

    def _min_key(self):
        if self.root is None:
            raise UsageError("empty vwf tree")
        return _min_key_of(self.root)


def _min_key_of(root):
    node = root
    frames = []
    while True:
        if _has_tag(node):
            frames.append(_node_frame(node))
        if node.left is None:
            break
        node = node.left
    key, r, a, b = node.key, node.r, node.a, node.b
    for f in reversed(frames):
        key, r, a, b = _apply_frame(f, key, r, a, b)
    return key


def _locate_iter(root, x):
    node = root
    frames = []
    best = None
    while node is not None:
        path_frames = frames
        if _has_tag(node):
            path_frames = frames + [_node_frame(node)]
        key, r, a, b = node.key, node.r, node.a, node.b
        for f in reversed(path_frames):
            key, r, a, b = _apply_frame(f, key, r, a, b)
        if key <= x:
            best = (key, r, a, b)
            node = node.right
        else:
            node = node.left
        frames = path_frames
    return best


def _insert_piece(root, piece):
    key = piece[0]
    l, r = _split(root, key)
    node = _mk(piece[0], piece[1], piece[2], piece[3], _next_prio())
    return _merge(_merge(l, node), r)


def _ensure_key(root, key):
    """Insert a breakpoint at key splitting the covering piece, if missing."""
    cover = _locate_iter(root, key)
    if cover is not None and cover[0] == key:
        return root
    if cover is None:
        raise UsageError(f"key {key} below tree domain")
    return _insert_piece(root, (key, cover[1], cover[2], cover[3]))


def _range_add(root, lo, hi, dr, da, db):
    l, rest = _split(root, lo)
    mid, r = _split(rest, hi) if np.isfinite(hi) else (rest, None)
    mid = _absorb(mid, (None, float(dr), float(da), float(db)))
    return _merge(_merge(l, mid), r)
