"""J-tree preconditioners: low-stretch trees, forests, and core sparsification.

The pipeline is: build a spanning tree with empirically low stretch, split it
into at most j rooted pieces whose routed weight is balanced, turn the pieces
into a forest by deleting one low-congestion edge per two-boundary piece,
then move every cross-piece edge onto the roots (the core) and scale the
envelope so the result spectrally dominates the input. Quality certificates
always use the exactly measured forest stretch, never a worst-case formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, UsageError, VerificationError
from .graph import Graph, laplacian_dense

_LSST_SEED = 0xA5F00D  # fixed; tree construction is a deterministic function


# -- rooted forests ------------------------------------------------------------

@dataclass
class RootedForest:
    """Spanning forest as parent pointers; parent_c holds edge conductances."""
    n: int
    parent: np.ndarray       # -1 at roots
    parent_c: np.ndarray     # conductance of (v, parent[v]); 0 at roots
    parent_eid: np.ndarray   # originating edge id in the source graph; -1 at roots
    roots: np.ndarray
    comp: np.ndarray         # root index per vertex

    def depth_resistance(self):
        order = _top_down_order(self.parent)
        dr = np.zeros(self.n)
        for v in order:
            p = self.parent[v]
            if p >= 0:
                dr[v] = dr[p] + 1.0 / self.parent_c[v]
        return dr

    def num_components(self):
        return len(self.roots)

    def dump_text(self):
        """Diagnostic `v parent root component` lines, one per vertex."""
        lines = []
        for v in range(self.n):
            lines.append(f"{v} {self.parent[v]} {self.roots[self.comp[v]]} "
                         f"{self.comp[v]}")
        return "\n".join(lines) + "\n"


def _top_down_order(parent):
    """Vertices ordered so parents precede children."""
    n = len(parent)
    children = [[] for _ in range(n)]
    roots = []
    for v in range(n):
        p = parent[v]
        if p < 0:
            roots.append(v)
        else:
            children[p].append(v)
    order = []
    stack = list(roots)
    while stack:
        v = stack.pop()
        order.append(v)
        stack.extend(children[v])
    return order


def _depths(parent):
    order = _top_down_order(parent)
    depth = np.zeros(len(parent), dtype=np.int64)
    for v in order:
        p = parent[v]
        if p >= 0:
            depth[v] = depth[p] + 1
    return depth, order


class _LcaTable:
    """Binary-lifting ancestor table; vectorized whole-array LCA queries."""

    def __init__(self, parent):
        n = len(parent)
        self.depth, _ = _depths(parent)
        logn = max(1, int(math.ceil(math.log2(max(2, int(self.depth.max()) + 2)))))
        up = np.empty((logn, n), dtype=np.int64)
        up[0] = np.where(parent < 0, np.arange(n), parent)
        for k in range(1, logn):
            up[k] = up[k - 1][up[k - 1]]
        self.up = up

    def lca(self, u, v):
        u = np.array(u, dtype=np.int64, copy=True)
        v = np.array(v, dtype=np.int64, copy=True)
        du, dv = self.depth[u], self.depth[v]
        swap = du < dv
        u[swap], v[swap] = v[swap], u[swap].copy()
        diff = np.abs(du - dv)
        for k in range(self.up.shape[0]):
            sel = (diff >> k) & 1 > 0
            if sel.any():
                u[sel] = self.up[k][u[sel]]
        neq = u != v
        for k in range(self.up.shape[0] - 1, -1, -1):
            lift = neq & (self.up[k][u] != self.up[k][v])
            if lift.any():
                u[lift] = self.up[k][u[lift]]
                v[lift] = self.up[k][v[lift]]
        u[neq] = self.up[0][u[neq]]
        return u


# -- low-stretch spanning trees --------------------------------------------------

def _dijkstra_tree(g: Graph, source):
    import heapq
    dist = np.full(g.n, np.inf)
    parent = np.full(g.n, -1, dtype=np.int64)
    parent_eid = np.full(g.n, -1, dtype=np.int64)
    dist[source] = 0.0
    heap = [(0.0, source)]
    seen = np.zeros(g.n, dtype=bool)
    while heap:
        d, u = heapq.heappop(heap)
        if seen[u]:
            continue
        seen[u] = True
        nbrs, eids = g.neighbors(u)
        for v, e in zip(nbrs, eids):
            nd = d + 1.0 / g.ec[e]
            if nd < dist[v]:
                dist[v] = nd
                parent[v] = u
                parent_eid[v] = e
                heapq.heappush(heap, (nd, int(v)))
    return parent, parent_eid


def _ball_growing_tree(g: Graph, rng):
    """Hierarchical ball-growing: cluster with exponential head starts, contract,
    repeat at growing radius. Returns parent_eid-style tree edge ids."""
    import heapq
    n = g.n
    label = np.arange(n)               # cluster id per vertex (dense relabeled per level)
    tree_eids = []
    lengths = 1.0 / g.ec
    base = float(np.median(lengths)) if g.m else 1.0
    scale = max(base, 1e-12) * max(1.0, math.log2(n + 1)) / 2.0
    ncl = n
    # inter-cluster edge list as (u_cluster, v_cluster, length, eid)
    cu, cv = label[g.eu], label[g.ev]
    live = cu != cv
    while ncl > 1:
        eu, ev = cu[live], cv[live]
        el, eid = lengths[live], np.flatnonzero(live)
        # adjacency over clusters
        adj = [[] for _ in range(ncl)]
        for a, bb, l, e in zip(eu, ev, el, eid):
            adj[a].append((int(bb), float(l), int(e)))
            adj[bb].append((int(a), float(l), int(e)))
        delta = rng.exponential(scale, ncl)
        dist = delta.max() - delta     # earlier start for larger shift
        labels2 = np.full(ncl, -1, dtype=np.int64)
        via = np.full(ncl, -1, dtype=np.int64)
        heap = [(float(dist[v]), int(v), int(v), -1) for v in range(ncl)]
        heapq.heapify(heap)
        while heap:
            d, v, head, through = heapq.heappop(heap)
            if labels2[v] >= 0:
                continue
            labels2[v] = head
            via[v] = through
            for w, l, e in adj[v]:
                if labels2[w] < 0:
                    heapq.heappush(heap, (d + l, int(w), head, int(e)))
        tree_eids.extend(int(e) for e in via if e >= 0)
        # contract
        heads = np.unique(labels2)
        dense = np.full(ncl, -1, dtype=np.int64)
        dense[heads] = np.arange(len(heads))
        newlab = dense[labels2]
        label = newlab[label]
        ncl_new = len(heads)
        if ncl_new >= ncl:
            scale *= 2.0
            continue
        ncl = ncl_new
        cu, cv = label[g.eu], label[g.ev]
        live = cu != cv
        scale *= 4.0
    # assemble parent pointers from the chosen tree edge set
    chosen = np.zeros(g.m, dtype=bool)
    chosen[np.asarray(tree_eids, dtype=np.int64)] = True
    parent = np.full(n, -1, dtype=np.int64)
    parent_eid = np.full(n, -1, dtype=np.int64)
    adj = [[] for _ in range(n)]
    for e in np.flatnonzero(chosen):
        adj[g.eu[e]].append((int(g.ev[e]), int(e)))
        adj[g.ev[e]].append((int(g.eu[e]), int(e)))
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    stack = [0]
    while stack:
        u = stack.pop()
        for v, e in adj[u]:
            if not seen[v]:
                seen[v] = True
                parent[v] = u
                parent_eid[v] = e
                stack.append(v)
    if not seen.all():
        raise NumericalError("ball-growing produced a non-spanning edge set")
    return parent, parent_eid


def tree_stretch(g: Graph, parent, parent_eid):
    """Exact per-edge stretch r(T(e)) / r(e) for a spanning tree of g."""
    n = g.n
    dr = np.zeros(n)
    for v in _top_down_order(parent):
        p = parent[v]
        if p >= 0:
            dr[v] = dr[p] + 1.0 / g.ec[parent_eid[v]]
    lca = _LcaTable(parent).lca(g.eu, g.ev)
    path_r = dr[g.eu] + dr[g.ev] - 2.0 * dr[lca]
    return path_r * g.ec


def low_stretch_tree(g: Graph):
    """Spanning tree plus measured (per-edge stretch, total stretch).

    A ball-growing construction and a resistance-shortest-path tree are both
    built; the one with smaller exactly measured total stretch wins. The
    asymptotic guarantees of the literature are not promised; callers must
    consume the measured value.
    """
    if not g.is_connected():
        raise UsageError("low_stretch_tree needs a connected graph")
    rng = np.random.default_rng(_LSST_SEED)
    cands = []
    try:
        cands.append(_ball_growing_tree(g, rng))
    except NumericalError:
        pass
    src = int(np.argmax(g.wdeg))
    cands.append(_dijkstra_tree(g, src))
    best = None
    for parent, parent_eid in cands:
        per_edge = tree_stretch(g, parent, parent_eid)
        total = float(per_edge.sum())
        if best is None or total < best[2]:
            best = (parent, parent_eid, total, per_edge)
    parent, parent_eid, total, per_edge = best
    return parent, parent_eid, per_edge, total


# -- tree decomposition -----------------------------------------------------------

@dataclass
class Decomposition:
    """Pieces of a spanning tree plus the edge-to-piece routing map."""
    sets: list                      # list of vertex-id lists
    rho: list                       # per graph edge: tuple of 1 or 2 set indices
    boundary: set = field(default_factory=set)   # vertices in >= 2 sets

    def loads(self, w):
        out = np.zeros(len(self.sets))
        for e, pieces in enumerate(self.rho):
            for p in set(pieces):
                out[p] += w[e]
        return out


def _greedy_pieces(order, children, omega, theta, root):
    """Bottom-up accumulation emitting a piece whenever its weight hits theta."""
    n = len(omega)
    sets = []
    cluster_v = [None] * n
    cluster_w = np.zeros(n)
    for v in reversed(order):
        cur = [v]
        cur_w = omega[v]
        if cur_w >= theta:
            sets.append(list(cur))
            cur_w = 0.0
        for c in children[v]:
            cur.extend(cluster_v[c])
            cur_w += cluster_w[c]
            if cur_w >= theta:
                sets.append(list(cur))
                cur = [v]
                cur_w = 0.0
        cluster_v[v] = cur
        cluster_w[v] = cur_w
    survivor = cluster_v[root]
    if not sets or len(survivor) > 1 or cluster_w[root] > 0:
        sets.append(list(survivor))
    return sets


def _refine_pieces(sets, parent, n):
    """Split pieces until each contains at most two shared vertices."""
    count = np.zeros(n, dtype=np.int64)
    for piece in sets:
        for v in set(piece):
            count[v] += 1
    par_map = {v: int(parent[v]) for v in range(n)}
    refined = []
    for piece in sets:
        terms = {v for v in piece if count[v] >= 2}
        if len(terms) <= 2 or len(piece) <= 1:
            refined.append(sorted(set(piece)))
        else:
            for sub in _piece_subtree_split(set(piece), par_map, terms):
                refined.append(sorted(set(sub)))
    return refined


def _piece_subtree_split(vertices, par_local, terminals):
    """Split one piece with >2 terminals into skeleton-path sub-pieces."""
    vs = list(vertices)
    vset = set(vs)
    children = {v: [] for v in vs}
    root = None
    for v in vs:
        p = par_local.get(v, -1)
        if p in vset:
            children[p].append(v)
        else:
            root = v
    # strip non-terminal leaves to find the minimal subtree spanning terminals
    deg = {v: len(children[v]) + (1 if par_local.get(v, -1) in vset else 0) for v in vs}
    keep = set(vs)
    stack = [v for v in vs if deg[v] <= 1 and v not in terminals]
    while stack:
        v = stack.pop()
        if v not in keep or v in terminals:
            continue
        keep.discard(v)
        p = par_local.get(v, -1)
        nbrs = [w for w in children[v] + ([p] if p in vset else []) if w in keep]
        for w in nbrs:
            deg[w] -= 1
            if deg[w] <= 1 and w not in terminals:
                stack.append(w)
        deg[v] = 0
    skel = keep
    sdeg = {v: 0 for v in skel}
    for v in skel:
        p = par_local.get(v, -1)
        if p in skel:
            sdeg[v] += 1
            sdeg[p] += 1
    junctions = {v for v in skel if v in terminals or sdeg[v] >= 3}
    # superedges: walk from each junction to the next along the skeleton
    sadj = {v: [] for v in skel}
    for v in skel:
        p = par_local.get(v, -1)
        if p in skel:
            sadj[v].append(p)
            sadj[p].append(v)
    visited_edges = set()
    sub = []
    for j in sorted(junctions):
        for w in sorted(sadj[j]):
            if (j, w) in visited_edges:
                continue
            path = [j]
            prev, cur = j, w
            while True:
                visited_edges.add((prev, cur))
                visited_edges.add((cur, prev))
                path.append(cur)
                if cur in junctions:
                    break
                nxt = [z for z in sadj[cur] if z != prev]
                prev, cur = cur, nxt[0]
            sub.append(path)
    # attach non-skeleton vertices to the sub-piece of their skeleton anchor;
    # hanging parts may sit above or below the skeleton, so search outward
    # from the skeleton along piece-internal tree edges in both directions
    owner = {}
    for i, path in enumerate(sub):
        for v in path[1:-1]:
            owner[v] = i
    for i, path in enumerate(sub):
        for v in (path[0], path[-1]):
            owner.setdefault(v, i)
    pieces = [list(path) for path in sub]
    nbrs = {v: [] for v in vs}
    for v in vs:
        p = par_local.get(v, -1)
        if p in vset:
            nbrs[v].append(p)
            nbrs[p].append(v)
    anchor = {v: v for v in skel}
    frontier = list(skel)
    while frontier:
        nxt = []
        for v in frontier:
            for w in nbrs[v]:
                if w not in anchor:
                    anchor[w] = anchor[v]
                    nxt.append(w)
        frontier = nxt
    for v in vs:
        if v not in skel:
            pieces[owner[anchor[v]]].append(v)
    return pieces


def decompose_tree(g: Graph, parent, w, j):
    """Refined decomposition of a spanning tree with balanced routed weight.

    Pieces are subtrees, pairwise overlapping in at most one vertex, each
    containing at most two vertices shared with other pieces; at most j
    pieces; multi-vertex pieces carry at most 20 w(E) / j of routed weight.
    """
    if j < 1:
        raise UsageError("piece budget must be at least 1")
    n = g.n
    w = np.asarray(w, dtype=np.float64)
    total = float(w.sum())
    omega = np.zeros(n)
    np.add.at(omega, g.eu, w)
    np.add.at(omega, g.ev, w)

    children = [[] for _ in range(n)]
    root = -1
    for v in range(n):
        p = parent[v]
        if p >= 0:
            children[p].append(v)
        else:
            root = v
    order = _top_down_order(parent)

    # theta = 6 total / (j-1) provably fits j pieces after refinement; try
    # smaller cuts first since more pieces mean lower stretch per component
    if j < 3 or total == 0:
        thetas = [np.inf]
    else:
        thetas = [2.0 * total / (j - 1), 3.0 * total / (j - 1),
                  4.5 * total / (j - 1), 6.0 * total / (j - 1)]
    sets = None
    for theta in thetas:
        cand = _greedy_pieces(order, children, omega, theta, root)
        cand = _refine_pieces(cand, parent, n)
        if len(cand) <= j:
            sets = cand
            break
    if sets is None:
        raise NumericalError("tree decomposition could not meet the piece budget")

    membership = [[] for _ in range(n)]
    for i, piece in enumerate(sets):
        for v in piece:
            membership[v].append(i)
    home = np.array([mem[0] for mem in membership], dtype=np.int64)
    rho = []
    for u, v in zip(g.eu, g.ev):
        hu, hv = int(home[u]), int(home[v])
        rho.append((hu,) if hu == hv else (hu, hv))
    boundary = {v for v in range(n) if len(membership[v]) >= 2}
    dec = Decomposition(sets=sets, rho=rho, boundary=boundary)

    # contract invariants; construction arithmetic should guarantee them
    if len(sets) > j:
        raise NumericalError(f"decomposition produced {len(sets)} > {j} pieces")
    loads = dec.loads(w)
    for i, piece in enumerate(sets):
        if len(piece) > 1 and total > 0 and loads[i] > 20.0 * total / j + 1e-9 * total:
            raise NumericalError(
                f"piece {i} load {loads[i]:.3e} exceeds bound {20 * total / j:.3e}")
        shared = sum(1 for v in piece if len(membership[v]) >= 2)
        if shared > 2:
            raise NumericalError(f"piece {i} has {shared} shared vertices after refinement")
    return dec


# -- forests with low local stretch ----------------------------------------------

def find_forest(g: Graph, j: int):
    """Rooted spanning forest with at most j roots and measured local stretch.

    Returns (forest, max total local stretch over components).
    """
    if j < 10:
        raise UsageError(f"find_forest requires j >= 10, got {j}")
    if not g.is_connected():
        raise UsageError("find_forest needs a connected graph")
    parent, parent_eid, per_edge_stretch, _total = low_stretch_tree(g)
    if g.merged().m == g.n - 1:
        # already a tree: keep it whole; every edge has stretch exactly 1
        parent_c = np.zeros(g.n)
        nonroot = parent >= 0
        parent_c[nonroot] = g.ec[parent_eid[nonroot]]
        root = int(np.flatnonzero(parent < 0)[0])
        forest = RootedForest(n=g.n, parent=parent, parent_c=parent_c,
                              parent_eid=parent_eid,
                              roots=np.array([root], dtype=np.int64),
                              comp=np.zeros(g.n, dtype=np.int64))
        return forest, forest_local_stretch(g, forest)
    dec = decompose_tree(g, parent, per_edge_stretch, j + 1)
    boundary = set(dec.boundary)
    root_of_tree = int(np.flatnonzero(parent < 0)[0])
    if not boundary:
        boundary = {root_of_tree}

    # weighted congestion per tree edge, one offline pass
    lt = _LcaTable(parent)
    lca = lt.lca(g.eu, g.ev)
    cnt = np.zeros(g.n)
    np.add.at(cnt, g.eu, g.ec)
    np.add.at(cnt, g.ev, g.ec)
    np.add.at(cnt, lca, -2.0 * g.ec)
    order = _top_down_order(parent)
    cong = cnt.copy()
    for v in reversed(order):
        p = parent[v]
        if p >= 0:
            cong[p] += cong[v]
    # cong[v] is now the congestion of the tree edge (v, parent[v])

    removed = np.zeros(g.n, dtype=bool)   # indexed by child endpoint
    depth = lt.depth
    for piece in dec.sets:
        marks = sorted(set(piece) & boundary)
        if len(marks) != 2:
            continue
        u, v = marks
        path = _tree_path_children(parent, depth, u, v)
        if not path:
            continue
        best = min(path, key=lambda x: (cong[x], parent_eid[x]))
        removed[best] = True

    fparent = parent.copy()
    fparent_eid = parent_eid.copy()
    fparent[removed] = -1
    fparent_eid[removed] = -1

    # re-root every component at its unique boundary vertex
    comp_label = _forest_components(fparent)
    roots = []
    for cid in range(comp_label.max() + 1):
        members = np.flatnonzero(comp_label == cid)
        anchors = [v for v in members if v in boundary]
        if len(anchors) != 1:
            raise NumericalError(
                f"component {cid} has {len(anchors)} boundary anchors, expected 1")
        roots.append(anchors[0])
    if len(roots) > j:
        raise NumericalError(f"forest has {len(roots)} roots, budget was {j}")
    fparent, fparent_eid = _reroot(g, fparent, fparent_eid, roots)
    parent_c = np.zeros(g.n)
    nonroot = fparent >= 0
    parent_c[nonroot] = g.ec[fparent_eid[nonroot]]
    comp_of_root = {r: i for i, r in enumerate(roots)}
    comp = np.array([comp_of_root[_root_of(fparent, v)] for v in range(g.n)],
                    dtype=np.int64)
    forest = RootedForest(n=g.n, parent=fparent, parent_c=parent_c,
                          parent_eid=fparent_eid,
                          roots=np.asarray(roots, dtype=np.int64), comp=comp)
    return forest, forest_local_stretch(g, forest)


def _tree_path_children(parent, depth, u, v):
    """Tree path between u and v as child-endpoint vertex ids."""
    path = []
    uu, vv = int(u), int(v)
    while depth[uu] > depth[vv]:
        path.append(uu)
        uu = parent[uu]
    while depth[vv] > depth[uu]:
        path.append(vv)
        vv = parent[vv]
    while uu != vv:
        path.append(uu)
        path.append(vv)
        uu = parent[uu]
        vv = parent[vv]
    return path


def _forest_components(parent):
    n = len(parent)
    label = np.full(n, -1, dtype=np.int64)
    nxt = 0
    for v in range(n):
        if label[v] >= 0:
            continue
        chain = [v]
        u = v
        while parent[u] >= 0 and label[parent[u]] < 0:
            u = parent[u]
            chain.append(u)
        lab = label[parent[u]] if parent[u] >= 0 else nxt
        if parent[u] < 0:
            nxt += 1
        for x in chain:
            label[x] = lab
    return label


def _root_of(parent, v):
    while parent[v] >= 0:
        v = parent[v]
    return int(v)


def _reroot(g: Graph, parent, parent_eid, new_roots):
    """Flip parent pointers so the given vertices become the roots."""
    n = len(parent)
    adj = [[] for _ in range(n)]
    for v in range(n):
        p = parent[v]
        if p >= 0:
            adj[v].append((int(p), int(parent_eid[v])))
            adj[p].append((v, int(parent_eid[v])))
    np_parent = np.full(n, -1, dtype=np.int64)
    np_eid = np.full(n, -1, dtype=np.int64)
    seen = np.zeros(n, dtype=bool)
    for r in new_roots:
        seen[r] = True
        stack = [int(r)]
        while stack:
            u = stack.pop()
            for v, e in adj[u]:
                if not seen[v]:
                    seen[v] = True
                    np_parent[v] = u
                    np_eid[v] = e
                    stack.append(v)
    if not seen.all():
        raise NumericalError("re-rooting left unreachable vertices")
    return np_parent, np_eid


def forest_local_stretch(g: Graph, forest: RootedForest):
    """Exact max over components of the total local stretch."""
    dr = forest.depth_resistance()
    lt = _LcaTable(forest.parent)
    same = forest.comp[g.eu] == forest.comp[g.ev]
    totals = np.zeros(len(forest.roots))
    if same.any():
        u, v = g.eu[same], g.ev[same]
        lca = lt.lca(u, v)
        st = (dr[u] + dr[v] - 2.0 * dr[lca]) * g.ec[same]
        np.add.at(totals, forest.comp[u], st)
    cross = ~same
    if cross.any():
        u, v, c = g.eu[cross], g.ev[cross], g.ec[cross]
        np.add.at(totals, forest.comp[u], dr[u] * c)
        np.add.at(totals, forest.comp[v], dr[v] * c)
    return float(totals.max(initial=0.0))


# -- canonical j-tree ---------------------------------------------------------

@dataclass
class JTree:
    """Envelope forest + core graph; `graph` is their union on all vertices."""
    envelope: RootedForest
    graph: Graph
    core_vertices: np.ndarray
    core_edge_start: int          # edges[core_edge_start:] form the core
    kappa_measured: float
    quality: float                # certified spectral upper bound vs source

    @property
    def core_graph(self):
        sub, _ = self.graph.subgraph(self.core_vertices)
        return sub


def canonical_jtree(g: Graph, forest: RootedForest, kappa: float) -> JTree:
    """Move cross-component edges onto roots, scale envelope by kappa, all by 10."""
    if kappa < 1:
        raise UsageError("kappa must be at least 1")
    edges = []
    nonroot = np.flatnonzero(forest.parent >= 0)
    for v in nonroot:
        edges.append((int(v), int(forest.parent[v]),
                      10.0 * kappa * forest.parent_c[v]))
    core_edge_start = len(edges)
    cross = forest.comp[g.eu] != forest.comp[g.ev]
    merged = {}
    roots = forest.roots
    for u, v, c in zip(g.eu[cross], g.ev[cross], g.ec[cross]):
        ru, rv = int(roots[forest.comp[u]]), int(roots[forest.comp[v]])
        key = (min(ru, rv), max(ru, rv))
        merged[key] = merged.get(key, 0.0) + c
    for (ru, rv), c in sorted(merged.items()):
        edges.append((ru, rv, 10.0 * c))
    scaled_forest = RootedForest(
        n=forest.n, parent=forest.parent,
        parent_c=forest.parent_c * (10.0 * kappa),
        parent_eid=forest.parent_eid, roots=forest.roots, comp=forest.comp)
    graph = Graph(g.n, edges)
    return JTree(envelope=scaled_forest, graph=graph,
                 core_vertices=np.sort(forest.roots.copy()),
                 core_edge_start=core_edge_start,
                 kappa_measured=kappa, quality=100.0 * kappa)


def peel_to_core(jt: JTree):
    """Vertex set left after repeatedly stripping degree-1 vertices."""
    g = jt.graph.merged()
    deg = np.zeros(g.n, dtype=np.int64)
    adj = [set() for _ in range(g.n)]
    for u, v in zip(g.eu, g.ev):
        adj[u].add(int(v))
        adj[v].add(int(u))
    protected = set(int(v) for v in jt.core_vertices)
    stack = [v for v in range(g.n) if len(adj[v]) == 1 and v not in protected]
    alive = np.ones(g.n, dtype=bool)
    while stack:
        v = stack.pop()
        if not alive[v] or len(adj[v]) != 1:
            continue
        alive[v] = False
        (w,) = adj[v]
        adj[v].clear()
        adj[w].discard(v)
        if len(adj[w]) == 1 and w not in protected:
            stack.append(w)
    return np.flatnonzero(alive)


# -- spectral core sparsification ----------------------------------------------

def effective_resistances(g: Graph):
    L = laplacian_dense(g)
    Lp = np.linalg.pinv(L)
    du = Lp[g.eu, g.eu]
    dv = Lp[g.ev, g.ev]
    return du + dv - 2.0 * Lp[g.eu, g.ev]


def spectral_sparsify_core(g: Graph, rng, threshold_factor=4.0):
    """Edge-sampled 2-sparsifier with a verified certificate.

    Below the edge threshold the input passes through (factor 1). Otherwise
    effective-resistance sampling is run, rescaled so the verified pencil
    lower bound is exactly 1; if the verified upper bound exceeds 2 after one
    retry with doubled samples, the input is returned unchanged. Returns
    (graph, certified factor).
    """
    n, m = g.n, g.m
    if m <= threshold_factor * n * math.log2(max(n, 2)) or n > 2000:
        return g, 1.0
    from .oracle import pencil_bounds_graphs
    er = effective_resistances(g)
    p = g.ec * er
    p = np.maximum(p, 0.0)
    p /= p.sum()
    q = int(math.ceil(8.0 * n * math.log(max(n, 2))))
    for attempt in range(2):
        take = rng.choice(m, size=q * (attempt + 1), replace=True, p=p)
        weight = np.zeros(m)
        np.add.at(weight, take, 1.0)
        keep = np.flatnonzero(weight > 0)
        c_new = g.ec[keep] * weight[keep] / (q * (attempt + 1) * p[keep])
        h = Graph(n, zip(g.eu[keep], g.ev[keep], c_new)).merged()
        try:
            lo, hi = pencil_bounds_graphs(h, g)
        except NumericalError:
            continue
        if lo <= 0:
            continue
        h = Graph(n, zip(h.eu, h.ev, h.ec / lo))
        ratio = hi / lo
        if ratio <= 2.0:
            return h, 2.0
    return g, 1.0


PENCIL_CERT_CAP = 600


def jtree_sparsify(g: Graph, j: int, rng, certify="auto", verify=False) -> JTree:
    """FindForest + canonical j-tree + core sparsification.

    ``certify`` picks the quality certificate carried on the result:
    "stretch" records the 100 * measured-stretch * core-factor bound from the
    scaling argument; "pencil" measures the generalized eigenvalue range
    exactly (dense, small n only), rescales the result so the lower end sits
    at 1, and records the measured ratio; "auto" uses the pencil when the
    graph is small enough. With ``verify`` a stretch certificate is
    double-checked against the pencil, resampling the core once on failure.
    """
    jt = _build_jtree(g, j, rng)
    use_pencil = certify == "pencil" or (certify == "auto" and g.n <= PENCIL_CERT_CAP)
    from .oracle import pencil_bounds_graphs
    if use_pencil:
        lo, hi = pencil_bounds_graphs(jt.graph, g)
        if lo <= 0:
            raise VerificationError(f"jtree pencil lower bound {lo:.3e} not positive")
        scale = (1.0 + 1e-9) / lo
        graph = Graph(g.n, zip(jt.graph.eu, jt.graph.ev, jt.graph.ec * scale))
        envelope = RootedForest(
            n=jt.envelope.n, parent=jt.envelope.parent,
            parent_c=jt.envelope.parent_c * scale,
            parent_eid=jt.envelope.parent_eid,
            roots=jt.envelope.roots, comp=jt.envelope.comp)
        quality = (hi / lo) * (1.0 + 1e-9) * (1.0 + 1e-7)
        return JTree(envelope=envelope, graph=graph,
                     core_vertices=jt.core_vertices,
                     core_edge_start=jt.core_edge_start,
                     kappa_measured=jt.kappa_measured,
                     quality=max(1.0, quality))
    if verify:
        for attempt in range(2):
            lo, hi = pencil_bounds_graphs(jt.graph, g)
            if lo >= 1 - 1e-6 and hi <= jt.quality + 1e-6:
                break
            if attempt == 1:
                raise VerificationError(
                    f"jtree certificate failed: pencil [{lo:.6g}, {hi:.6g}] "
                    f"outside [1, {jt.quality:.6g}]")
            jt = _build_jtree(g, j, rng)
    return jt


def _build_jtree(g: Graph, j: int, rng) -> JTree:
    forest, str_f = find_forest(g, j)
    kappa = max(1.0, str_f)
    jt = canonical_jtree(g, forest, kappa)
    core = jt.core_graph
    sparser, factor = spectral_sparsify_core(core, rng)
    if sparser is not core:
        jt = _replace_core(jt, sparser, factor)
    return jt


def _replace_core(jt: JTree, new_core: Graph, factor: float) -> JTree:
    edges = []
    for i in range(jt.core_edge_start):
        edges.append((int(jt.graph.eu[i]), int(jt.graph.ev[i]),
                      float(jt.graph.ec[i])))
    core_vs = jt.core_vertices
    for u, v, c in zip(new_core.eu, new_core.ev, new_core.ec):
        edges.append((int(core_vs[u]), int(core_vs[v]), float(c)))
    return JTree(envelope=jt.envelope, graph=Graph(jt.graph.n, edges),
                 core_vertices=jt.core_vertices,
                 core_edge_start=jt.core_edge_start,
                 kappa_measured=jt.kappa_measured,
                 quality=jt.quality * factor)
