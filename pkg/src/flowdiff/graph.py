"""Weighted undirected multigraphs, Laplacian products, conductance, sweep cuts.

Vertices are 0-based integers. Edges carry a positive conductance c(e); the
resistance is r(e) = 1/c(e). Edge orientation is the stored (u, v) order and
only matters for the sign convention of flows.
"""

from __future__ import annotations

import io
import warnings

import numpy as np

from .errors import GraphParseError, UsageError

# Conductance ratios beyond this trip a warning (numbers are expected to live
# in a polynomially bounded range; we report violations, never clamp them).
_RATIO_WARN = 1e15


class Graph:
    """Immutable weighted undirected multigraph in edge-list form.

    Parameters
    ----------
    n : int
        Number of vertices.
    edges : sequence of (u, v, c)
        Endpoints and conductance per edge. Parallel edges are kept distinct;
        self-loops are rejected.
    """

    __slots__ = ("n", "m", "eu", "ev", "ec", "wdeg", "_adj_indptr",
                 "_adj_nbr", "_adj_eid", "_merged")

    def __init__(self, n, edges):
        n = int(n)
        if n <= 0:
            raise UsageError("graph needs at least one vertex")
        eu, ev, ec = [], [], []
        for idx, (u, v, c) in enumerate(edges):
            u = int(u)
            v = int(v)
            c = float(c)
            if not (0 <= u < n and 0 <= v < n):
                raise UsageError(f"edge {idx}: endpoint out of range")
            if u == v:
                raise UsageError(f"edge {idx}: self-loop at vertex {u}")
            if not (c > 0.0 and np.isfinite(c)):
                raise UsageError(f"edge {idx}: conductance must be positive and finite, got {c}")
            eu.append(u)
            ev.append(v)
            ec.append(c)
        self.n = n
        self.m = len(eu)
        self.eu = np.asarray(eu, dtype=np.int64)
        self.ev = np.asarray(ev, dtype=np.int64)
        self.ec = np.asarray(ec, dtype=np.float64)
        wdeg = np.zeros(n)
        np.add.at(wdeg, self.eu, self.ec)
        np.add.at(wdeg, self.ev, self.ec)
        self.wdeg = wdeg
        if self.m:
            ratio = self.ec.max() / self.ec.min()
            if ratio > _RATIO_WARN:
                warnings.warn(
                    f"conductance ratio {ratio:.3e} exceeds {_RATIO_WARN:.0e}; "
                    "results may lose precision", stacklevel=2)
        self._adj_indptr = None
        self._adj_nbr = None
        self._adj_eid = None
        self._merged = None

    # -- adjacency ---------------------------------------------------------

    def _build_adj(self):
        deg = np.zeros(self.n, dtype=np.int64)
        np.add.at(deg, self.eu, 1)
        np.add.at(deg, self.ev, 1)
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(deg, out=indptr[1:])
        nbr = np.empty(2 * self.m, dtype=np.int64)
        eid = np.empty(2 * self.m, dtype=np.int64)
        fill = indptr[:-1].copy()
        for i in range(self.m):
            u, v = self.eu[i], self.ev[i]
            nbr[fill[u]] = v
            eid[fill[u]] = i
            fill[u] += 1
            nbr[fill[v]] = u
            eid[fill[v]] = i
            fill[v] += 1
        self._adj_indptr, self._adj_nbr, self._adj_eid = indptr, nbr, eid

    def neighbors(self, u):
        """(neighbor ids, incident edge ids) of u, multiplicity preserved."""
        if self._adj_indptr is None:
            self._build_adj()
        lo, hi = self._adj_indptr[u], self._adj_indptr[u + 1]
        return self._adj_nbr[lo:hi], self._adj_eid[lo:hi]

    # -- views -------------------------------------------------------------

    def merged(self):
        """Simple-graph view: parallel edges merged by summing conductance."""
        if self._merged is None:
            if self.m == 0:
                self._merged = self
            else:
                lo = np.minimum(self.eu, self.ev)
                hi = np.maximum(self.eu, self.ev)
                key = lo * self.n + hi
                order = np.argsort(key, kind="stable")
                key_s = key[order]
                uniq, start = np.unique(key_s, return_index=True)
                csum = np.add.reduceat(self.ec[order], start)
                mu = uniq // self.n
                mv = uniq % self.n
                if len(uniq) == self.m:
                    self._merged = self
                else:
                    self._merged = Graph(self.n, zip(mu, mv, csum))
        return self._merged

    def components(self):
        """Component label per vertex (labels are 0..k-1 in first-seen order)."""
        label = np.full(self.n, -1, dtype=np.int64)
        nxt = 0
        for s in range(self.n):
            if label[s] >= 0:
                continue
            label[s] = nxt
            stack = [s]
            while stack:
                u = stack.pop()
                nbrs, _ = self.neighbors(u)
                for v in nbrs:
                    if label[v] < 0:
                        label[v] = nxt
                        stack.append(int(v))
            nxt += 1
        return label

    def is_connected(self):
        return self.n == 1 or self.components().max() == 0

    def subgraph(self, vertices):
        """Induced subgraph. Returns (graph, old->new index map array)."""
        vertices = np.asarray(sorted(set(int(v) for v in vertices)), dtype=np.int64)
        remap = np.full(self.n, -1, dtype=np.int64)
        remap[vertices] = np.arange(len(vertices))
        keep = (remap[self.eu] >= 0) & (remap[self.ev] >= 0)
        g = Graph(len(vertices),
                  zip(remap[self.eu[keep]], remap[self.ev[keep]], self.ec[keep]))
        return g, remap

    def volume(self, vertices):
        """Sum of weighted degrees over the given vertex set."""
        idx = np.asarray(list(vertices), dtype=np.int64)
        return float(self.wdeg[idx].sum()) if len(idx) else 0.0

    def __repr__(self):
        return f"Graph(n={self.n}, m={self.m})"


# -- Laplacian arithmetic ----------------------------------------------------

def laplacian_apply(g: Graph, x) -> np.ndarray:
    """L(G) @ x in one edge pass; never forms a matrix."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (g.n,):
        raise UsageError(f"potential has shape {x.shape}, expected ({g.n},)")
    y = np.zeros(g.n)
    d = g.ec * (x[g.eu] - x[g.ev])
    np.add.at(y, g.eu, d)
    np.add.at(y, g.ev, -d)
    return y


def quadratic_energy(g: Graph, x) -> float:
    """0.5 * x^T L(G) x computed edge by edge."""
    x = np.asarray(x, dtype=np.float64)
    diff = x[g.eu] - x[g.ev]
    return 0.5 * float(np.dot(g.ec * diff, diff))


def potential_flow(g: Graph, x) -> np.ndarray:
    """Flow induced by a potential: f_e = -c(e) (x_u - x_v)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (g.n,):
        raise UsageError(f"potential has shape {x.shape}, expected ({g.n},)")
    return -g.ec * (x[g.eu] - x[g.ev])


def residue(g: Graph, f) -> np.ndarray:
    """B(G)^T f, the net mass entering each vertex."""
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (g.m,):
        raise UsageError(f"flow has shape {f.shape}, expected ({g.m},)")
    r = np.zeros(g.n)
    np.add.at(r, g.eu, f)
    np.add.at(r, g.ev, -f)
    return r


def laplacian_dense(g: Graph) -> np.ndarray:
    """Dense Laplacian, for oracles and small-scale checks only."""
    L = np.zeros((g.n, g.n))
    for u, v, c in zip(g.eu, g.ev, g.ec):
        L[u, u] += c
        L[v, v] += c
        L[u, v] -= c
        L[v, u] -= c
    return L


# -- cuts --------------------------------------------------------------------

def conductance(g: Graph, s, global_form=False) -> float:
    """Conductance of a vertex set.

    By default the local-clustering form boundary / vol(S). With
    ``global_form`` the denominator is min(vol(S), vol(V \\ S)).
    """
    s = set(int(v) for v in s)
    if not s or len(s) >= g.n:
        raise UsageError("conductance needs a nonempty proper vertex subset")
    mask = np.zeros(g.n, dtype=bool)
    mask[list(s)] = True
    cross = mask[g.eu] != mask[g.ev]
    boundary = float(g.ec[cross].sum())
    vol = float(g.wdeg[mask].sum())
    if global_form:
        vol = min(vol, float(g.wdeg.sum()) - vol)
    return boundary / vol


def sweep_cut(g: Graph, x, global_form=False):
    """Best-conductance prefix of support(x) ordered by x descending.

    Ties in x break by ascending vertex id. Returns (vertex set, conductance).
    The full-vertex prefix is skipped since its conductance is undefined.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (g.n,):
        raise UsageError(f"potential has shape {x.shape}, expected ({g.n},)")
    if np.any(x < -1e-12):
        raise UsageError("sweep_cut expects a nonnegative potential")
    support = np.flatnonzero(x > 0)
    if len(support) == 0:
        raise UsageError("empty diffusion support")
    order = support[np.lexsort((support, -x[support]))]

    total_vol = float(g.wdeg.sum())
    in_set = np.zeros(g.n, dtype=bool)
    boundary = 0.0
    vol = 0.0
    best_phi = np.inf
    best_k = 0
    for k, v in enumerate(order, start=1):
        if k >= g.n + 1:
            break
        nbrs, eids = g.neighbors(int(v))
        for w, e in zip(nbrs, eids):
            c = g.ec[e]
            boundary += -c if in_set[w] else c
        in_set[v] = True
        vol += g.wdeg[v]
        if k == g.n:
            break  # S = V has no conductance
        denom = min(vol, total_vol - vol) if global_form else vol
        phi = boundary / denom
        if phi < best_phi - 1e-15:
            best_phi = phi
            best_k = k
    if best_k == 0:
        raise UsageError("no valid sweep prefix (support covers all vertices "
                         "of a single-vertex graph?)")
    return set(int(v) for v in order[:best_k]), float(best_phi)


# -- edge-list text format ---------------------------------------------------

def parse_edge_list(text_or_stream) -> Graph:
    """Parse the `u v [c]` one-edge-per-line format.

    `#` starts a comment, blank lines are skipped, missing conductance
    defaults to 1. Vertex count is 1 + max id.
    """
    if isinstance(text_or_stream, str):
        stream = io.StringIO(text_or_stream)
    else:
        stream = text_or_stream
    edges = []
    max_id = -1
    for ln, raw in enumerate(stream, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise GraphParseError(f"expected 'u v [c]', got {line!r}", line=ln)
        try:
            u = int(parts[0])
            v = int(parts[1])
        except ValueError:
            raise GraphParseError(f"vertex ids must be integers in {line!r}", line=ln) from None
        c = 1.0
        if len(parts) == 3:
            try:
                c = float(parts[2])
            except ValueError:
                raise GraphParseError(f"bad conductance in {line!r}", line=ln) from None
        if u < 0 or v < 0:
            raise GraphParseError("vertex ids must be nonnegative", line=ln)
        if u == v:
            raise GraphParseError(f"self-loop at vertex {u}", line=ln)
        if not (c > 0 and np.isfinite(c)):
            raise GraphParseError(f"conductance must be positive and finite, got {c}", line=ln)
        edges.append((u, v, c))
        max_id = max(max_id, u, v)
    if max_id < 0:
        raise GraphParseError("no edges found")
    return Graph(max_id + 1, edges)


def emit_edge_list(g: Graph) -> str:
    lines = [f"{u} {v} {c:.17g}" for u, v, c in zip(g.eu, g.ev, g.ec)]
    return "\n".join(lines) + "\n"
