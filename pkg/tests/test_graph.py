import io

import numpy as np
import pytest

from flowdiff.errors import GraphParseError, UsageError
from flowdiff.graph import (Graph, conductance, emit_edge_list,
                            laplacian_apply, laplacian_dense, parse_edge_list,
                            potential_flow, residue, sweep_cut)
from flowdiff.generators import barbell_graph, path_graph
from flowdiff.instance import make_l2_instance
from flowdiff.oracle import qp_solve_exact


def triangle():
    return Graph(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)])


class TestGraphConstruction:
    def test_rejects_self_loop(self):
        with pytest.raises(UsageError):
            Graph(2, [(0, 0, 1.0)])

    def test_rejects_nonpositive_conductance(self):
        with pytest.raises(UsageError):
            Graph(2, [(0, 1, 0.0)])
        with pytest.raises(UsageError):
            Graph(2, [(0, 1, -2.0)])
        with pytest.raises(UsageError):
            Graph(2, [(0, 1, np.inf)])

    def test_extreme_ratio_warns_not_clamps(self):
        with pytest.warns(UserWarning):
            g = Graph(3, [(0, 1, 1e-10), (1, 2, 1e10)])
        assert g.ec.min() == 1e-10 and g.ec.max() == 1e10

    def test_multigraph_merge(self):
        g = Graph(2, [(0, 1, 1.0), (1, 0, 2.5)])
        m = g.merged()
        assert m.m == 1
        assert m.ec[0] == pytest.approx(3.5)

    def test_components(self):
        g = Graph(4, [(0, 1, 1.0), (2, 3, 1.0)])
        lab = g.components()
        assert lab[0] == lab[1] and lab[2] == lab[3] and lab[0] != lab[2]


class TestLaplacian:
    def test_single_edge(self):
        g = Graph(2, [(0, 1, 1.0)])
        assert laplacian_apply(g, [1.0, 0.0]) == pytest.approx([1.0, -1.0])

    def test_constant_in_null_space(self):
        g = triangle()
        assert np.allclose(laplacian_apply(g, [3.7, 3.7, 3.7]), 0.0)

    def test_triangle(self):
        assert laplacian_apply(triangle(), [1, 0, 0]) == pytest.approx([2, -1, -1])

    def test_matches_dense_oracle(self, rng):
        for _ in range(25):
            n = int(rng.integers(2, 31))
            edges = [(i, int(rng.integers(0, i)), float(rng.uniform(0.1, 3)))
                     for i in range(1, n)]
            g = Graph(n, edges)
            x = rng.normal(size=n)
            dense = laplacian_dense(g) @ x
            assert np.abs(laplacian_apply(g, x) - dense).max() <= 1e-10

    def test_ones_annihilated(self, rng):
        for _ in range(10):
            n = int(rng.integers(2, 20))
            edges = [(i, int(rng.integers(0, i)), float(rng.uniform(0.1, 3)))
                     for i in range(1, n)]
            g = Graph(n, edges)
            x = rng.normal(size=n)
            lx = laplacian_apply(g, x)
            assert abs(lx.sum()) <= 1e-9 * max(1.0, np.abs(lx).max())

    def test_dimension_mismatch(self):
        with pytest.raises(UsageError):
            laplacian_apply(triangle(), [1.0, 0.0])


class TestPotentialFlow:
    def test_single_edge_oriented(self):
        g = Graph(2, [(0, 1, 2.0)])
        assert potential_flow(g, [1.0, 0.0]) == pytest.approx([-2.0])

    def test_constant_gives_zero_flow(self):
        g = triangle()
        assert np.allclose(potential_flow(g, [5.0, 5.0, 5.0]), 0.0)

    def test_residue_is_minus_laplacian(self, rng):
        # bit-exact: both sides accumulate the same addends in the same order
        g = triangle()
        x = rng.normal(size=3)
        f = potential_flow(g, x)
        assert np.array_equal(residue(g, f), -laplacian_apply(g, x))

    def test_kkt_residue_at_optimum(self, rng):
        # at the optimal dual, B^T f = -Lx* = d - mu with mu >= 0
        g = barbell_graph(3)
        d = rng.normal(size=6)
        d -= d.mean()
        d += 0.1
        inst = make_l2_instance(g, d)
        x, _ = qp_solve_exact(inst)
        f = potential_flow(g, x)
        assert np.all(residue(g, f) <= d + 1e-8)


class TestConductance:
    def test_barbell_triangle(self):
        g = barbell_graph(3)
        assert conductance(g, {0, 1, 2}) == pytest.approx(1.0 / 7.0)

    def test_leaf_of_star(self):
        g = Graph(4, [(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)])
        assert conductance(g, {1}) == pytest.approx(1.0)

    def test_full_set_rejected(self):
        with pytest.raises(UsageError):
            conductance(triangle(), {0, 1, 2})
        with pytest.raises(UsageError):
            conductance(triangle(), set())

    def test_global_form(self):
        g = barbell_graph(3)
        loc = conductance(g, {0, 1, 2})
        glo = conductance(g, {0, 1, 2}, global_form=True)
        assert glo == pytest.approx(loc)  # balanced cut: same denominator
        assert conductance(g, {0}, global_form=True) >= conductance(g, {0})


def brute_force_sweep(g, x):
    support = np.flatnonzero(np.asarray(x) > 0)
    order = support[np.lexsort((support, -np.asarray(x)[support]))]
    best = (np.inf, None)
    for k in range(1, len(order) + 1):
        if k == g.n:
            break
        s = set(int(v) for v in order[:k])
        phi = conductance(g, s)
        if phi < best[0] - 1e-15:
            best = (phi, s)
    return best


class TestSweepCut:
    def test_single_support_vertex(self):
        g = barbell_graph(3)
        x = np.zeros(6)
        x[4] = 1.0
        s, phi = sweep_cut(g, x)
        assert s == {4}
        assert phi == pytest.approx(conductance(g, {4}))

    def test_barbell_recovers_triangle(self):
        g = barbell_graph(3)
        s, phi = sweep_cut(g, [3.0, 2.0, 2.0, 0.0, 0.0, 0.0])
        assert s == {0, 1, 2}
        assert phi == pytest.approx(1.0 / 7.0)

    def test_path_prefixes_match_enumeration(self):
        g = path_graph(4)
        x = [4.0, 3.0, 2.0, 0.0]
        s, phi = sweep_cut(g, x)
        bphi, bs = brute_force_sweep(g, x)
        assert phi == pytest.approx(bphi)
        assert s == bs

    def test_matches_enumeration_random(self, rng):
        for _ in range(20):
            n = int(rng.integers(4, 12))
            edges = [(i, int(rng.integers(0, i)), float(rng.uniform(0.2, 2)))
                     for i in range(1, n)]
            g = Graph(n, edges)
            x = np.maximum(rng.normal(size=n), 0.0)
            if not np.any(x > 0):
                x[0] = 1.0
            s, phi = sweep_cut(g, x)
            bphi, _ = brute_force_sweep(g, x)
            assert phi == pytest.approx(bphi)

    def test_zero_support_rejected(self):
        with pytest.raises(UsageError):
            sweep_cut(barbell_graph(3), np.zeros(6))


class TestEdgeListFormat:
    def test_round_trip(self):
        g = barbell_graph(3, bridge_c=0.25)
        h = parse_edge_list(emit_edge_list(g))
        assert h.n == g.n and h.m == g.m
        assert np.array_equal(h.eu, g.eu)
        assert np.array_equal(h.ev, g.ev)
        assert np.array_equal(h.ec, g.ec)

    def test_comments_blank_default_weight(self):
        text = "# a comment\n\n0 1\n1 2 0.5  # trailing\n"
        g = parse_edge_list(io.StringIO(text))
        assert g.n == 3 and g.m == 2
        assert g.ec[0] == 1.0 and g.ec[1] == 0.5

    def test_parse_error_carries_line(self):
        with pytest.raises(GraphParseError) as ei:
            parse_edge_list("a b\n")
        assert ei.value.line == 1

    def test_self_loop_rejected(self):
        with pytest.raises(GraphParseError):
            parse_edge_list("1 1 2.0\n")

    def test_duplicate_edges_stay_parallel(self):
        g = parse_edge_list("0 1 1\n0 1 2\n")
        assert g.m == 2
        assert g.merged().m == 1
        assert g.merged().ec[0] == pytest.approx(3.0)
