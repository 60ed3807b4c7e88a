"""The recursive solver stack: refinement, inexact accelerated steps, j-trees.

Layering, outermost first:

* ``iter_refine``: repeatedly solve the residual problem with an
  alpha-approximate oracle; the optimality gap contracts by (1 - 1/alpha)
  per step.
* ``recursive_approx_diffusion``: the 2-approximate oracle. Small instances
  go to the exact active-set solver; otherwise precondition with a j-tree
  and run accelerated proximal steps whose prox subproblems live on the
  j-tree.
* ``jtree_solve``: eliminate the envelope, refine on the compressed core
  with the recursion as oracle, map back through the recovery log.

Early exits are certificate-driven: a step only stops short of its
worst-case count when the produced point provably meets the layer's
approximation contract.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .eliminate import vertex_elimination
from .errors import NumericalError, UsageError
from .graph import Graph, laplacian_apply, potential_flow, quadratic_energy
from .instance import DiffusionInstance, compress_instance, make_l2_instance
from .oracle import QP_VERTEX_CAP, qp_solve_exact
from .sparsify import JTree, jtree_sparsify


@dataclass
class SolverConfig:
    eps: float = 1e-6
    kappa: float | None = None        # fixed preconditioner budget; None = auto
    j: int | None = None              # fixed root budget; None = derived
    base_case_edges: int = 64
    inner_delta: float = 1e-10
    agd_steps_factor: float = 10.0
    rng_seed: int = 0
    max_recursion_depth: int = 64
    j_constant: float = 1.0
    early_exit: bool = True
    certify: str = "auto"             # jtree certificate mode (see sparsify)
    elimination_backend: str = "auto"  # vwf machinery: auto | flat | tree
    time_budget: float | None = None  # seconds; None = unlimited

    def validate(self):
        if self.eps <= 0:
            raise UsageError("eps must be positive")
        if self.kappa is not None and self.kappa < 1:
            raise UsageError("kappa must be at least 1")
        if self.certify not in ("auto", "pencil", "stretch"):
            raise UsageError(f"unknown certify mode {self.certify!r}")
        if self.elimination_backend not in ("auto", "flat", "tree"):
            raise UsageError(
                f"unknown elimination backend {self.elimination_backend!r}")


@dataclass
class SolveStats:
    oracle_calls: dict = field(default_factory=dict)
    agd_steps: dict = field(default_factory=dict)
    refine_steps: dict = field(default_factory=dict)
    eliminations: dict = field(default_factory=dict)
    base_case_solves: int = 0
    jtrees_built: int = 0
    energies: list = field(default_factory=list)
    wall_seconds: float = 0.0
    levels: int = 0

    def bump(self, table, depth, amount=1):
        table[depth] = table.get(depth, 0) + amount
        self.levels = max(self.levels, depth + 1)

    def to_dict(self, timing=True):
        def squash(t):
            return {str(k): v for k, v in sorted(t.items())}
        out = {
            "oracle_calls": squash(self.oracle_calls),
            "agd_steps": squash(self.agd_steps),
            "refine_steps": squash(self.refine_steps),
            "eliminations": squash(self.eliminations),
            "base_case_solves": self.base_case_solves,
            "jtrees_built": self.jtrees_built,
            "energies": list(self.energies),
            "levels": self.levels,
            "total_oracle_calls": sum(self.oracle_calls.values()),
        }
        if timing:
            out["wall_seconds"] = self.wall_seconds
        return out


def auto_kappa(n, m):
    """Default preconditioner budget: log2(n)^4 clamped into [16, m]."""
    return float(min(max(16.0, math.log2(max(n, 2)) ** 4), max(m, 16)))


def derive_j(m, n, kappa, constant=1.0):
    lln = max(1.0, math.log(max(math.log(max(n, 3)), math.e)))
    j = int(math.ceil(constant * m * math.log(max(n, 2)) * lln / kappa))
    return max(10, j)


class Solver:
    """One solve session: holds config, RNG, stats, and a j-tree cache."""

    def __init__(self, config: SolverConfig | None = None):
        self.config = config or SolverConfig()
        self.config.validate()
        self.rng = np.random.default_rng(self.config.rng_seed)
        self.stats = SolveStats()
        self._jtree_cache = {}
        self._deadline = None

    # -- time budget -------------------------------------------------------

    def _start_clock(self):
        if self.config.time_budget is not None:
            self._deadline = time.monotonic() + self.config.time_budget

    def _check_clock(self):
        if self._deadline is not None and time.monotonic() > self._deadline:
            raise NumericalError(
                f"time budget of {self.config.time_budget}s exceeded")

    # -- preconditioner ----------------------------------------------------

    def _jtree_for(self, g: Graph) -> JTree:
        key = id(g)
        hit = self._jtree_cache.get(key)
        if hit is not None and hit[0] is g:
            return hit[1]
        cfg = self.config
        kappa = cfg.kappa if cfg.kappa is not None else auto_kappa(g.n, g.m)
        kappa = min(kappa, max(g.m, 1))
        j = cfg.j if cfg.j is not None else derive_j(g.m, g.n, kappa, cfg.j_constant)
        jt = jtree_sparsify(g, j, self.rng, certify=cfg.certify)
        self.stats.jtrees_built += 1
        self._jtree_cache[key] = (g, jt)
        return jt

    # -- iterative refinement ------------------------------------------------

    def iter_refine(self, inst: DiffusionInstance, eps, oracle, alpha,
                    depth=0):
        """(1+eps)-approximate solve given an alpha-approximate oracle.

        Runs at most ceil(alpha log(1/eps)) residual-solve steps; stops as
        soon as the final gap is certified below eps/(1+eps) of the
        attained energy. Energies are non-increasing by construction.
        """
        if alpha < 1:
            raise UsageError("alpha must be at least 1")
        T = max(1, math.ceil(alpha * math.log(1.0 / eps)))
        x = inst.zero_potential()
        energy = inst.energy(x)
        energies = [energy]
        for i in range(T):
            self._check_clock()
            res = inst.residual(x)
            delta = oracle(res)
            self.stats.bump(self.stats.oracle_calls, depth)
            gain = res.energy(delta)
            if gain > 1e-9 * (1 + abs(energy)):
                raise NumericalError(
                    f"refinement step {i} increased energy by {gain:.3e}")
            x = inst.clamp_feasible(x + delta)
            energy = inst.energy(x)
            energies.append(energy)
            self.stats.bump(self.stats.refine_steps, depth)
            if self.config.early_exit and \
                    (alpha - 1.0) * abs(gain) <= (eps / (1 + eps)) * abs(energy):
                break
        if depth == 0:
            self.stats.energies = energies
        return x

    # -- accelerated proximal steps ------------------------------------------

    def prox_agd(self, inst: DiffusionInstance, jt: JTree, inner, depth=0):
        """2-approximate optimal potential via inexact accelerated steps.

        ``jt.quality`` certifies L(G) <= L(H) <= quality * L(G); the step
        count is ceil(agd_steps_factor * sqrt(quality)). Each prox
        subproblem is itself a diffusion instance on H, handed to ``inner``
        (relative accuracy inner_delta). A per-step certificate built from
        the prox displacement bounds the remaining gap; the loop exits once
        halving of the initial gap is certified.
        """
        cfg = self.config
        g = inst.graph
        h = jt.graph
        kappa_t = max(1.0, jt.quality)
        T = max(1, math.ceil(cfg.agd_steps_factor * math.sqrt(kappa_t)))
        n = inst.n
        y = np.zeros(n)
        z = np.zeros(n)
        e0 = inst.energy(y)
        best_y, best_e = y, e0
        f0s = np.array([f.eval(0.0) for f in inst.vwfs])
        S0, R0, A0, B0 = inst.packed()
        for k in range(T):
            self._check_clock()
            tau = 2.0 / (k + 2)
            alpha_next = (k + 2) / 2.0
            xk = (1 - tau) * y + tau * z
            ell = laplacian_apply(g, xk) - laplacian_apply(h, xk)
            sub_vwfs = [f.with_linear(l, -f0)
                        for f, l, f0 in zip(inst.vwfs, ell, f0s)]
            sub = DiffusionInstance(h, sub_vwfs, inst.b, _skip_checks=True)
            # the prox subproblem only shifts each vwf by a linear term, so
            # its packed arrays derive from the base instance's in O(n k)
            sub._packed = (S0, R0, A0 + ell[:, None], B0 - f0s[:, None])
            q = inner(sub)
            sub_energy = sub.energy(q)          # <= 0 by inner contract
            eps_q = cfg.inner_delta * max(0.0, -sub_energy)
            ynew = sub.clamp_feasible(q)
            z = z + alpha_next * (ynew - xk)
            y = ynew
            self.stats.bump(self.stats.agd_steps, depth)
            ey = inst.energy(y)
            if ey < best_e:
                best_y, best_e = y, ey
            if cfg.early_exit:
                d2 = 2.0 * quadratic_energy(h, xk - y)
                gap_bound = (kappa_t - 1.0) * d2 + (4.0 * kappa_t + 3.0) * eps_q
                if gap_bound <= 0.5 * (e0 - best_e):
                    break
        return best_y

    # -- j-tree instances -----------------------------------------------------

    def jtree_solve(self, inst: DiffusionInstance, jt: JTree, eps,
                    core_oracle, depth=0):
        """(1+eps)-approximate solve of an instance living on a j-tree.

        Envelope vertices are eliminated exactly; the core instance is
        refined with oracle = core_oracle after vwf compression (the
        compression costs a factor 2, the oracle another 2, so refinement
        runs at alpha = 4). Tiny cores skip the refinement loop and go to
        the exact solver directly.
        """
        core_inst, rmap = vertex_elimination(inst, keep=jt.core_vertices,
                                             backend=self.config.elimination_backend)
        self.stats.bump(self.stats.eliminations, depth,
                        inst.n - core_inst.n)
        if core_inst.graph.merged().m <= self.config.base_case_edges \
                and core_inst.n <= QP_VERTEX_CAP:
            x_core, _ = qp_solve_exact(core_inst)
            self.stats.base_case_solves += 1
        else:
            def oracle(res):
                approx = core_oracle(compress_instance(res))
                return 0.5 * np.asarray(approx)

            x_core = self.iter_refine(core_inst, eps, oracle, alpha=4.0,
                                      depth=depth)
        return rmap.recover(x_core)

    # -- the recursive oracle ---------------------------------------------------

    def recursive_approx_diffusion(self, inst: DiffusionInstance, depth=0):
        """2-approximate optimal potential for an arbitrary instance."""
        if depth > self.config.max_recursion_depth:
            raise NumericalError(
                "recursion depth exceeded; preconditioner budget is not "
                "contracting the instance size")
        g = inst.graph
        merged = g.merged()
        if merged.n > 1 and not merged.is_connected():
            return self._solve_components(inst, depth,
                                          lambda sub: self.recursive_approx_diffusion(sub, depth))
        if merged.m <= self.config.base_case_edges and merged.n <= QP_VERTEX_CAP:
            self.stats.base_case_solves += 1
            x, _ = qp_solve_exact(inst)
            return x
        jt = self._jtree_for(merged)

        def inner(sub):
            return self.jtree_solve(sub, jt, self.config.inner_delta,
                                    lambda core: self.recursive_approx_diffusion(core, depth + 1),
                                    depth=depth)

        work = inst if g is merged else DiffusionInstance(merged, inst.vwfs, inst.b)
        return self.prox_agd(work, jt, inner, depth=depth)

    def _solve_components(self, inst, depth, solve_fn):
        label = inst.graph.merged().components()
        x = np.zeros(inst.n)
        for cid in range(label.max() + 1):
            verts = np.flatnonzero(label == cid)
            sub, remap = _component_instance(inst, verts)
            x[verts] = solve_fn(sub)
        return x

    # -- public entry points -------------------------------------------------

    def solve_instance(self, inst: DiffusionInstance, eps=None):
        """(1+eps)-approximate potential for a generalized instance."""
        eps = self.config.eps if eps is None else eps
        self._start_clock()
        t0 = time.perf_counter()
        label = inst.graph.merged().components() if inst.n > 1 else np.zeros(1, dtype=int)
        x = np.zeros(inst.n)
        for cid in range(int(label.max()) + 1):
            verts = np.flatnonzero(label == cid)
            sub, _ = _component_instance(inst, verts)
            _check_bounded(sub)
            x[verts] = self.iter_refine(
                sub, eps, lambda r: self.recursive_approx_diffusion(r, 0),
                alpha=2.0)
        self.stats.wall_seconds += time.perf_counter() - t0
        return x

    def l2_diffusion(self, g: Graph, d, eps=None):
        """Solve the plain diffusion dual; returns (x, flow, stats)."""
        inst = make_l2_instance(g, d)
        x = self.solve_instance(inst, eps)
        return x, potential_flow(g, x), self.stats


def _component_instance(inst, verts):
    sub_g, remap = inst.graph.subgraph(verts)
    sub = DiffusionInstance(sub_g, [inst.vwfs[v] for v in verts], inst.b[verts])
    return sub, remap


def _check_bounded(inst):
    total_slope = sum(f.final_slope() for f in inst.vwfs)
    if total_slope < -1e-9:
        raise UsageError(
            f"instance is unbounded below on a component "
            f"(net final slope {total_slope:.6g} < 0)")


# -- module-level convenience wrappers ---------------------------------------

def l2_diffusion(g: Graph, d, eps=1e-6, config: SolverConfig | None = None):
    cfg = config or SolverConfig()
    cfg.eps = eps
    solver = Solver(cfg)
    return solver.l2_diffusion(g, d, eps)


def solve_diffusion(inst: DiffusionInstance, eps=1e-6,
                    config: SolverConfig | None = None):
    cfg = config or SolverConfig()
    cfg.eps = eps
    solver = Solver(cfg)
    return solver.solve_instance(inst, eps), solver.stats
