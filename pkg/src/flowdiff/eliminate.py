"""Degree-1 vertex elimination and the recovery map back to full potentials.

Eliminating a degree-1 vertex u with (merged) edge conductance c to its
neighbor v folds u's optimal response into v's weighting function:

    f_v'(x) = f_v(x) + min_{y >= b_u} c (x - y)^2 / 2 + f_u(y)

The inner minimum is a lift of f_u restricted to [b_u, inf); its argmin as a
function of x is what the recovery map replays, newest record first. Energy
is preserved exactly: E_reduced(x) = E_original(recover(x)).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import UsageError
from .graph import Graph
from .instance import DiffusionInstance
from .vwf import Vwf
from .vwftree import VwfTree


class FlatLift:
    """Immutable lifted-vwf snapshot with the same optimal_x contract as a
    lifted VwfTree handle; used by the flat elimination backend."""

    __slots__ = ("pieces", "lift_c")

    def __init__(self, pieces, lift_c):
        self.pieces = pieces      # (s, r, a, b) parallel lists
        self.lift_c = lift_c

    def optimal_x(self, x):
        s, r, a, _ = self.pieces
        i = len(s) - 1
        while i > 0 and s[i] > x:
            i -= 1
        return x - (r[i] * x + a[i]) / self.lift_c

    def to_vwf(self):
        return Vwf(*self.pieces)


# -- list-based vwf kernel for the elimination hot loop -----------------------
# Sizes here are tiny; plain Python lists beat numpy's per-call overhead.

def _list_restrict(p, lower):
    s, r, a, b = p
    if s[0] >= lower:
        return p
    i = len(s) - 1
    while i > 0 and s[i] > lower:
        i -= 1
    return ([lower] + s[i + 1:], r[i:], a[i:], b[i:])


def _list_lift(p, c):
    s, r, a, b = p
    s0 = s[0]
    fs0 = 0.5 * r[0] * s0 * s0 + a[0] * s0 + b[0]
    s2 = [-math.inf]
    r2 = [c]
    a2 = [-c * s0]
    b2 = [0.5 * c * s0 * s0 + fs0]
    last = -math.inf
    for i in range(len(s)):
        den = c + r[i]
        key = (den / c) * s[i] + a[i] / c
        if key <= last + 1e-12 * (1.0 + abs(key)):
            continue
        last = key
        s2.append(key)
        r2.append(c * r[i] / den)
        a2.append(c * a[i] / den)
        b2.append(b[i] - a[i] * a[i] / (2.0 * den))
    return (s2, r2, a2, b2)


def _list_add(p, q):
    """Pointwise sum on the intersected domain (merge by breakpoints)."""
    fs, fr, fa, fb = p
    gs, gr, ga, gb = q
    lo = max(fs[0], gs[0])
    i = len(fs) - 1
    while i > 0 and fs[i] > lo:
        i -= 1
    j = len(gs) - 1
    while j > 0 and gs[j] > lo:
        j -= 1
    s2, r2, a2, b2 = [], [], [], []
    cur = lo
    nf, ng = len(fs), len(gs)
    while True:
        s2.append(cur)
        r2.append(fr[i] + gr[j])
        a2.append(fa[i] + ga[j])
        b2.append(fb[i] + gb[j])
        nxt_f = fs[i + 1] if i + 1 < nf else math.inf
        nxt_g = gs[j + 1] if j + 1 < ng else math.inf
        nxt = nxt_f if nxt_f <= nxt_g else nxt_g
        if nxt == math.inf:
            break
        if nxt_f == nxt:
            i += 1
        if nxt_g == nxt:
            j += 1
        if nxt <= cur + 1e-12 * (1.0 + abs(nxt)):
            s2.pop(); r2.pop(); a2.pop(); b2.pop()
        cur = nxt
    return (s2, r2, a2, b2)


@dataclass(frozen=True)
class EliminationRecord:
    """One elimination step; `lifted` is a persistent snapshot of u's lift."""
    u: int
    v: int
    conductance: float
    lifted: object            # VwfTree or FlatLift; supports optimal_x
    b_u: float


@dataclass
class RecoveryMap:
    """Ordered elimination log plus the surviving vertex labels."""
    records: list = field(default_factory=list)
    survivors: np.ndarray = None
    n_original: int = 0

    def recover(self, x_reduced):
        """Map a reduced-instance potential back to the full vertex set."""
        x_reduced = np.asarray(x_reduced, dtype=np.float64)
        if x_reduced.shape != (len(self.survivors),):
            raise UsageError(
                f"expected {len(self.survivors)} reduced coordinates, "
                f"got {x_reduced.shape}")
        x = np.zeros(self.n_original)
        x[self.survivors] = x_reduced
        for rec in reversed(self.records):
            y = rec.lifted.optimal_x(x[rec.v])
            x[rec.u] = max(y, rec.b_u)
        return x

    def restrict(self, x_full):
        """The reverse direction: drop eliminated coordinates."""
        x_full = np.asarray(x_full, dtype=np.float64)
        return x_full[self.survivors]


def _merged_adjacency(g: Graph):
    adj = [dict() for _ in range(g.n)]
    for u, v, c in zip(g.eu, g.ev, g.ec):
        u, v = int(u), int(v)
        adj[u][v] = adj[u].get(v, 0.0) + c
        adj[v][u] = adj[v].get(u, 0.0) + c
    return adj


FLAT_BACKEND_MAX_N = 4096


def vertex_elimination(inst: DiffusionInstance, keep=(), backend="auto"):
    """Repeatedly fold degree-1 vertices into their neighbors.

    Vertices in `keep` are never eliminated (a j-tree solve protects its
    core so the reduced graph is exactly the core). Degree counts merged
    parallel edges as a single neighbor relation. Eliminations process the
    lowest-id eligible vertex first; newly eligible vertices queue behind,
    so a star folds into its center.

    ``backend`` selects the vwf machinery: "tree" uses the persistent
    ordered-tree handles, "flat" plain piece arrays (faster at small
    sizes), "auto" picks by instance size. Both produce identical maps.

    Returns (reduced instance, recovery map).
    """
    g = inst.graph
    keep = set(int(v) for v in keep)
    if backend == "auto":
        backend = "flat" if g.n <= FLAT_BACKEND_MAX_N else "tree"
    adj = _merged_adjacency(g)
    alive = np.ones(g.n, dtype=bool)
    records = []
    use_tree = backend == "tree"
    if use_tree:
        funcs = [VwfTree.from_vwf(f) for f in inst.vwfs]
    else:
        funcs = [(f.s.tolist(), f.r.tolist(), f.a.tolist(), f.b.tolist())
                 for f in inst.vwfs]

    # seeded in ascending id; later arrivals queue behind (so a star folds
    # into its center rather than the center folding into the last leaf)
    queue = deque(u for u in range(g.n) if len(adj[u]) == 1 and u not in keep)
    b = inst.b
    while queue:
        u = queue.popleft()
        if not alive[u] or len(adj[u]) != 1:
            continue
        v, c = next(iter(adj[u].items()))
        if use_tree:
            lifted = funcs[u].restrict(b[u]).lift(c)
            snap = lifted
        else:
            lifted = _list_lift(_list_restrict(funcs[u], b[u]), c)
            snap = FlatLift(lifted, c)
        records.append(EliminationRecord(u=u, v=int(v), conductance=float(c),
                                         lifted=snap, b_u=float(b[u])))
        funcs[v] = funcs[v].add(lifted) if use_tree else _list_add(funcs[v], lifted)
        alive[u] = False
        del adj[v][u]
        adj[u].clear()
        if len(adj[v]) == 1 and v not in keep:
            queue.append(int(v))

    survivors = np.flatnonzero(alive)
    remap = np.full(g.n, -1, dtype=np.int64)
    remap[survivors] = np.arange(len(survivors))
    edges = []
    for u in survivors:
        for v, c in adj[u].items():
            if u < v:
                edges.append((remap[u], remap[v], c))
    reduced_graph = Graph(len(survivors), edges)
    reduced = DiffusionInstance(
        reduced_graph,
        [(funcs[u].to_vwf() if use_tree else Vwf(*funcs[u])) for u in survivors],
        inst.b[survivors])
    rmap = RecoveryMap(records=records, survivors=survivors, n_original=g.n)
    return reduced, rmap
