"""Shared generators and helpers for the test suite."""

import numpy as np
import pytest

from flowdiff.graph import Graph
from flowdiff.instance import DiffusionInstance, make_l2_instance
from flowdiff.vwf import Vwf
from flowdiff.generators import (barbell_graph, erdos_renyi, grid_graph,
                                 path_graph, ring_graph)


def random_vwf(rng, max_pieces=6, allow_negative_breaks=True, ensure_f0_neg=True):
    """A structurally valid random vwf built from continuity conditions."""
    k = int(rng.integers(1, max_pieces + 1))
    s0 = -float(rng.uniform(0.2, 2.5)) if allow_negative_breaks else 0.0
    lo = s0 + 0.05
    breaks = np.sort(rng.uniform(lo, 3.0, k - 1)) if k > 1 else np.array([])
    s = np.concatenate(([s0], breaks))
    r = np.zeros(k)
    if k > 1:
        r[:-1] = np.sort(rng.uniform(0.05, 4.0, k - 1))[::-1]
    a = np.zeros(k)
    b = np.zeros(k)
    a[0] = float(rng.uniform(-3, 3))
    b[0] = 0.0
    for i in range(1, k):
        sp = s[i]
        a[i] = r[i - 1] * sp + a[i - 1] - r[i] * sp
        left = 0.5 * r[i - 1] * sp * sp + a[i - 1] * sp + b[i - 1]
        b[i] = left - (0.5 * r[i] * sp * sp + a[i] * sp)
    f = Vwf(s, r, a, b)
    if ensure_f0_neg:
        f0 = f.eval(0.0)
        shift = f0 + float(rng.uniform(0.0, 0.5))
        f = Vwf(f.s, f.r, f.a, f.b - shift)
    return f


def random_instance(rng, n=12, extra_edge_p=0.25, multi_piece=True,
                    ensure_bounded=True):
    """Connected random instance with valid per-vertex vwfs and bounds."""
    edges = [(i, int(rng.integers(0, i)), float(rng.uniform(0.3, 2.5)))
             for i in range(1, n)]
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < extra_edge_p / n:
                edges.append((u, v, float(rng.uniform(0.3, 2.5))))
    g = Graph(n, edges)
    b = -rng.uniform(0.0, 1.5, n)
    vwfs = []
    for u in range(n):
        if multi_piece:
            f = random_vwf(rng)
            if f.domain_start > b[u]:
                f = Vwf(np.concatenate(([b[u] - 0.1], f.s[1:])), f.r, f.a, f.b)
        else:
            f = Vwf.linear(float(rng.normal()), lower=min(b[u] - 0.1, 0.0))
        vwfs.append(f)
    if ensure_bounded:
        slack = sum(f.final_slope() for f in vwfs)
        if slack < 0.05:
            vwfs[0] = vwfs[0].with_linear(0.05 - slack)
    return DiffusionInstance(g, vwfs, b)


def feasible_point(rng, inst, spread=1.5):
    return inst.b + rng.uniform(0.0, spread, inst.n)


def component_feasible_demand(g, d):
    """Shift demands so every connected component sums nonnegative."""
    d = np.asarray(d, dtype=float).copy()
    label = g.components()
    for cid in range(label.max() + 1):
        mask = label == cid
        s = d[mask].sum()
        if s < 0.0:
            d[mask] -= (s - 0.01) / mask.sum()
    return d


def random_l2_instance(rng, n=20, kind="er"):
    if kind == "er":
        g = erdos_renyi(n, 3.0 / n, seed=int(rng.integers(1 << 31)))
    elif kind == "grid":
        k = max(2, int(np.sqrt(n)))
        g = grid_graph(k, k)
    else:
        g = ring_graph(max(3, n))
    d = component_feasible_demand(g, rng.normal(size=g.n))
    return g, d, make_l2_instance(g, d)


@pytest.fixture
def rng():
    return np.random.default_rng(0xF10D)


def grids():
    return grid_graph, ring_graph, path_graph, barbell_graph
