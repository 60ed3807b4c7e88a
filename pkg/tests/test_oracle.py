import numpy as np
import pytest
import scipy.optimize

from flowdiff.errors import NumericalError, UsageError
from flowdiff.graph import Graph, laplacian_dense
from flowdiff.instance import make_l2_instance
from flowdiff.oracle import (kkt_residual, pencil_bounds, pencil_bounds_graphs,
                             qp_solve_exact, qp_solve_pgd, vwf_min_scan)
from flowdiff.vwf import Vwf
from flowdiff.generators import complete_graph, erdos_renyi
from conftest import random_instance


class TestQpSolve:
    def test_nonnegative_demand_gives_zero(self, rng):
        g = erdos_renyi(8, 0.5, seed=1)
        inst = make_l2_instance(g, np.abs(rng.normal(size=8)))
        x, e = qp_solve_exact(inst)
        assert np.allclose(x, 0.0)
        assert e == 0.0

    def test_two_node_closed_form(self):
        inst = make_l2_instance(Graph(2, [(0, 1, 1.0)]), [-1.0, 1.0])
        x, e = qp_solve_exact(inst)
        assert e == pytest.approx(-0.5, abs=1e-12)

    def test_kkt_conditions_hold(self, rng):
        for _ in range(20):
            inst = random_instance(rng, n=12)
            x, _ = qp_solve_exact(inst)
            assert kkt_residual(inst, x) <= 1e-9

    def test_cross_validated_against_pgd_and_lbfgsb(self, rng):
        for trial in range(5):
            inst = random_instance(rng, n=10)
            x, e = qp_solve_exact(inst)
            _, e_pgd = qp_solve_pgd(inst, steps=4000)
            assert e == pytest.approx(e_pgd, abs=1e-8 * (1 + abs(e)))
            L = laplacian_dense(inst.graph)

            def fun(z):
                val = 0.5 * z @ L @ z + sum(
                    f.eval(max(zu, f.domain_start))
                    for f, zu in zip(inst.vwfs, z))
                grad = L @ z + inst.separable_derivative(z)
                return val, grad

            res = scipy.optimize.minimize(
                fun, np.maximum(np.zeros(inst.n), inst.b), jac=True,
                method="L-BFGS-B",
                bounds=[(bb, None) for bb in inst.b],
                options={"ftol": 1e-16, "gtol": 1e-12, "maxiter": 2000})
            assert e == pytest.approx(res.fun, abs=1e-8 * (1 + abs(e)))
            assert e <= res.fun + 1e-10  # ours is at least as good

    def test_deterministic(self, rng):
        inst = random_instance(rng, n=15)
        x1, e1 = qp_solve_exact(inst)
        x2, e2 = qp_solve_exact(inst)
        assert np.array_equal(x1, x2) and e1 == e2

    def test_cap_enforced(self):
        g = erdos_renyi(501, 0.005, seed=2)
        inst = make_l2_instance(g, np.zeros(501))
        with pytest.raises(UsageError):
            qp_solve_exact(inst)


class TestVwfMinScan:
    def test_linear(self):
        assert vwf_min_scan(Vwf.linear(1.0)) == (0.0, 0.0)

    def test_quadratic_interior(self):
        f = Vwf([0.0], [1.0], [-1.0], [0.0])
        x, v = vwf_min_scan(f)
        assert (x, v) == (pytest.approx(1.0), pytest.approx(-0.5))

    def test_breakpoint_minimum_vs_grid(self, rng):
        f = Vwf([0.0, 1.0], [2.0, 0.0], [-2.0, 0.0], [0.0, -1.0])
        assert f.violations() == []
        x, v = vwf_min_scan(f)
        xs = np.linspace(0, 6, 200001)
        g = f(xs)
        assert v <= g.min() + 1e-12
        assert x == pytest.approx(xs[g.argmin()], abs=1e-4)


class TestPencil:
    def test_identity(self):
        g = complete_graph(6)
        lo, hi = pencil_bounds_graphs(g, g)
        assert lo == pytest.approx(1.0, abs=1e-9)
        assert hi == pytest.approx(1.0, abs=1e-9)

    def test_scaling(self, rng):
        g = erdos_renyi(12, 0.5, seed=3)
        for alpha in (0.5, 2.0, 7.25):
            h = Graph(g.n, zip(g.eu, g.ev, alpha * g.ec))
            lo, hi = pencil_bounds_graphs(h, g)
            assert lo == pytest.approx(alpha, rel=1e-9)
            assert hi == pytest.approx(alpha, rel=1e-9)

    def test_disconnected_reported(self):
        g = Graph(4, [(0, 1, 1.0), (2, 3, 1.0)])
        h = complete_graph(4)
        with pytest.raises(NumericalError):
            pencil_bounds_graphs(h, g)

    def test_shape_validation(self):
        with pytest.raises(UsageError):
            pencil_bounds(np.eye(3), np.eye(4))
