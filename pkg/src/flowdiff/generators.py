"""Test-family graph generators: grids, rings, expanders, barbells."""

from __future__ import annotations

import numpy as np

from .errors import UsageError
from .graph import Graph


def grid_graph(rows, cols, conductance=1.0):
    edges = []
    for i in range(rows):
        for j in range(cols):
            v = i * cols + j
            if i + 1 < rows:
                edges.append((v, v + cols, conductance))
            if j + 1 < cols:
                edges.append((v, v + 1, conductance))
    return Graph(rows * cols, edges)


def ring_graph(n, conductance=1.0):
    if n < 3:
        raise UsageError("ring needs at least 3 vertices")
    return Graph(n, [(i, (i + 1) % n, conductance) for i in range(n)])


def path_graph(n, conductance=1.0):
    return Graph(n, [(i, i + 1, conductance) for i in range(n - 1)])


def complete_graph(n, conductance=1.0):
    return Graph(n, [(u, v, conductance) for u in range(n) for v in range(u + 1, n)])


def expander_graph(n, degree=4, seed=0):
    """Union of `degree`/2 random perfect matchings over a ring backbone."""
    rng = np.random.default_rng(seed)
    edges = [(i, (i + 1) % n, 1.0) for i in range(n)]
    seen = {(min(u, v), max(u, v)) for u, v, _ in edges}
    for _ in range(max(0, degree - 2) // 2 + 1):
        perm = rng.permutation(n)
        for i in range(0, n - 1, 2):
            u, v = int(perm[i]), int(perm[i + 1])
            key = (min(u, v), max(u, v))
            if u != v and key not in seen:
                seen.add(key)
                edges.append((u, v, 1.0))
    return Graph(n, edges)


def barbell_graph(k=3, bridge_c=1.0):
    """Two unit cliques of size k joined by a single bridge edge."""
    edges = []
    for u in range(k):
        for v in range(u + 1, k):
            edges.append((u, v, 1.0))
            edges.append((k + u, k + v, 1.0))
    edges.append((k - 1, k, bridge_c))
    return Graph(2 * k, edges)


def planted_two_cluster(n_per_side, p_in=0.5, k_bridge=1, seed=0):
    """Two dense random clusters connected by k_bridge unit edges."""
    rng = np.random.default_rng(seed)
    n = 2 * n_per_side
    edges = []
    for side in (0, 1):
        off = side * n_per_side
        for u in range(n_per_side):
            for v in range(u + 1, n_per_side):
                if rng.random() < p_in:
                    edges.append((off + u, off + v, 1.0))
        # guarantee connectivity inside the side
        for u in range(1, n_per_side):
            edges.append((off + u - 1, off + u, 1.0))
    for i in range(k_bridge):
        edges.append((int(rng.integers(n_per_side)),
                      int(n_per_side + rng.integers(n_per_side)), 1.0))
    return Graph(n, edges)


def erdos_renyi(n, p, seed=0, conductance_range=(1.0, 1.0)):
    rng = np.random.default_rng(seed)
    lo, hi = conductance_range
    edges = []
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < p:
                c = lo if lo == hi else float(rng.uniform(lo, hi))
                edges.append((u, v, c))
    if not edges:
        edges = [(0, min(1, n - 1), 1.0)] if n > 1 else []
    return Graph(n, edges)
