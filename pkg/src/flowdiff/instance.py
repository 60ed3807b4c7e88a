"""Diffusion instances: a graph, one vwf per vertex, and lower bounds b <= 0.

The induced problem is ``min_{x >= b} x^T L(G) x / 2 + sum_u f_u(x_u)``.
Energy of the zero potential is always nonpositive, so optima are too.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import vwf as vwflib
from .errors import FeasibilityError, UsageError
from .graph import Graph, laplacian_apply, quadratic_energy
from .vwf import Vwf

FEAS_TOL = 1e-12


@dataclass(frozen=True)
class EnergyReport:
    quadratic: float
    separable: float

    @property
    def total(self):
        return self.quadratic + self.separable


class DiffusionInstance:
    """Immutable (graph, vwfs, lower bounds) triple."""

    __slots__ = ("graph", "vwfs", "b", "_packed")

    def __init__(self, graph: Graph, vwfs, b, _skip_checks=False):
        b = np.asarray(b, dtype=np.float64)
        vwfs = list(vwfs)
        if not _skip_checks:
            if len(vwfs) != graph.n or b.shape != (graph.n,):
                raise UsageError("need one vwf and one bound per vertex")
            if np.any(b > FEAS_TOL):
                raise UsageError("lower bounds must be nonpositive")
            for u, f in enumerate(vwfs):
                if f.domain_start > b[u] + FEAS_TOL:
                    raise UsageError(
                        f"vertex {u}: vwf domain [{f.domain_start}, inf) does not "
                        f"cover bound {b[u]}")
        self.graph = graph
        self.vwfs = vwfs
        self.b = b
        self._packed = None

    def packed(self):
        """Per-vertex piece arrays padded to equal width, for batch evals."""
        if self._packed is None:
            k = max(f.size for f in self.vwfs)
            n = len(self.vwfs)
            S = np.full((n, k), np.inf)
            R = np.zeros((n, k))
            A = np.zeros((n, k))
            B = np.zeros((n, k))
            for u, f in enumerate(self.vwfs):
                S[u, :f.size] = f.s
                R[u, :f.size] = f.r
                A[u, :f.size] = f.a
                B[u, :f.size] = f.b
            S[:, 0] = -np.inf  # evaluation clamps into the first piece
            self._packed = (S, R, A, B)
        return self._packed

    @property
    def n(self):
        return self.graph.n

    @property
    def m(self):
        return self.graph.m

    @property
    def size(self):
        """Total instance size: sum of vwf sizes plus edge count."""
        return sum(f.size for f in self.vwfs) + self.graph.m

    def __repr__(self):
        return f"DiffusionInstance(n={self.n}, m={self.m}, size={self.size})"

    # -- feasibility ------------------------------------------------------

    def clamp_feasible(self, x):
        """Clamp within-tolerance bound violations; raise on real ones."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n,):
            raise UsageError(f"potential has shape {x.shape}, expected ({self.n},)")
        viol = self.b - x
        worst = int(np.argmax(viol))
        if viol[worst] > FEAS_TOL:
            raise FeasibilityError(
                f"potential infeasible at vertex {worst}: "
                f"x={x[worst]} < b={self.b[worst]} by {viol[worst]:.3e}",
                vertex=worst, violation=float(viol[worst]))
        if viol[worst] > 0:
            x = np.maximum(x, self.b)
        return x

    def is_feasible(self, x):
        x = np.asarray(x, dtype=np.float64)
        return bool(np.all(x >= self.b - FEAS_TOL))

    # -- energy -----------------------------------------------------------

    def separable_energy(self, x):
        x = np.asarray(x, dtype=np.float64)
        S, R, A, B = self.packed()
        idx = (x[:, None] >= S).sum(axis=1) - 1
        rows = np.arange(len(x))
        r = R[rows, idx]
        a = A[rows, idx]
        b = B[rows, idx]
        return float(np.sum(0.5 * r * x * x + a * x + b))

    def separable_derivative(self, x):
        """Vector of f_u'(x_u), one batched piece lookup."""
        x = np.asarray(x, dtype=np.float64)
        S, R, A, _ = self.packed()
        idx = (x[:, None] >= S).sum(axis=1) - 1
        rows = np.arange(len(x))
        return R[rows, idx] * x + A[rows, idx]

    def separable_curvature(self, x):
        """Vector of f_u''(x_u) (curvature of the piece containing x_u)."""
        x = np.asarray(x, dtype=np.float64)
        S, R, _, _ = self.packed()
        idx = (x[:, None] >= S).sum(axis=1) - 1
        return R[np.arange(len(x)), idx]

    def energy_report(self, x) -> EnergyReport:
        x = self.clamp_feasible(x)
        return EnergyReport(quadratic=quadratic_energy(self.graph, x),
                            separable=self.separable_energy(x))

    def energy(self, x) -> float:
        return self.energy_report(x).total

    # -- residual ----------------------------------------------------------

    def residual(self, x) -> "DiffusionInstance":
        """Instance whose energy at delta equals E(x + delta) - E(x)."""
        x = self.clamp_feasible(x)
        lx = laplacian_apply(self.graph, x)
        new_vwfs = [f.shift(xu, extra_slope=g)
                    for f, xu, g in zip(self.vwfs, x, lx)]
        return DiffusionInstance(self.graph, new_vwfs, self.b - x)

    # -- restriction / mapping helpers --------------------------------------

    def zero_potential(self):
        return np.zeros(self.n)


def make_l2_instance(g: Graph, d) -> DiffusionInstance:
    """The plain diffusion dual: f_u(x) = d_u x, b = 0.

    Requires sum(d) >= 0, otherwise the objective is unbounded below on a
    connected graph.
    """
    d = np.asarray(d, dtype=np.float64)
    if d.shape != (g.n,):
        raise UsageError(f"demand has shape {d.shape}, expected ({g.n},)")
    if float(d.sum()) < -1e-9 * (1 + np.abs(d).sum()):
        raise UsageError(f"demand sums to {d.sum():.6g} < 0: problem unbounded below")
    return DiffusionInstance(g, [Vwf.linear(du) for du in d], np.zeros(g.n))


def compress_instance(inst: DiffusionInstance, base=1.1) -> DiffusionInstance:
    """Compress every vwf; embeds two-ways with identity (factor 2 one way)."""
    return DiffusionInstance(inst.graph,
                             [vwflib.compress(f, base) for f in inst.vwfs],
                             inst.b)


def restrict_instance(inst: DiffusionInstance, vertices):
    """Induced sub-instance on a vertex subset (edges within it survive)."""
    sub, remap = inst.graph.subgraph(vertices)
    keep = np.flatnonzero(remap >= 0)
    return DiffusionInstance(sub, [inst.vwfs[v] for v in keep], inst.b[keep]), remap
