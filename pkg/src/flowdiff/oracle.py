"""Brute-force and dense verification solvers.

These are deliberately O(n^3)-tolerant: they exist to certify the fast path
on desk-sized inputs and to solve recursion base cases exactly.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import NumericalError, UsageError
from .graph import Graph, laplacian_dense
from .instance import DiffusionInstance
from .vwf import Vwf

QP_VERTEX_CAP = 500
PENCIL_VERTEX_CAP = 2000
_KKT_TOL = 1e-12


def vwf_min_scan(f: Vwf):
    """Exact minimizer of a single vwf over its domain: (x*, f(x*))."""
    return f.minimize()


def _grad(L, inst, x):
    return L @ x + inst.separable_derivative(x)


def _objective(L, inst, x):
    return 0.5 * float(x @ (L @ x)) + inst.separable_energy(x)


def _line_search(L, inst, x, p):
    """Exact minimization of the piecewise-quadratic t -> E(x + t p), t >= 0.

    Returns the largest feasible minimizer; raises if unbounded below.
    """
    b = inst.b
    # feasibility cap
    t_max = np.inf
    neg = p < 0
    if neg.any():
        t_max = float(np.min((b[neg] - x[neg]) / p[neg]))
    if t_max <= 0:
        return 0.0
    # candidate knots: vwf breakpoint crossings
    knots = [0.0]
    for u in np.flatnonzero(p != 0):
        f = inst.vwfs[u]
        ts = (f.s[np.isfinite(f.s)] - x[u]) / p[u]
        knots.extend(t for t in ts if 0 < t < t_max)
    if np.isfinite(t_max):
        knots.append(t_max)
    knots = sorted(set(knots))
    pLp = float(p @ (L @ p))
    xLp = float(x @ (L @ p))

    def dphi(t):
        return pLp * t + xLp + float(inst.separable_derivative(x + t * p) @ p)

    # scan segments left to right; derivative is linear within each
    for i, t0 in enumerate(knots):
        t1 = knots[i + 1] if i + 1 < len(knots) else t_max
        d0 = dphi(t0)
        if d0 >= 0:
            return t0
        if not np.isfinite(t1):
            # last segment: curvature from the current pieces
            curv = pLp + float(inst.separable_curvature(x + (t0 + 1.0) * p) @ (p * p))
            if curv <= 1e-300:
                raise NumericalError("objective unbounded along search direction")
            return t0 - d0 / curv
        d1 = dphi(t1 - 1e-15 * max(1.0, abs(t1)))
        if d1 < 0:
            continue
        span = t1 - t0
        if d1 == d0:
            return t0
        return t0 + span * (-d0) / (d1 - d0)
    return t_max


def qp_solve_exact(inst: DiffusionInstance, max_iter=200, kkt_tol=_KKT_TOL):
    """Projected-Newton active-set solve of a diffusion instance.

    Returns (x, energy). Deterministic; raises NumericalError when the
    iteration cap is hit before reaching the KKT tolerance.
    """
    n = inst.n
    if n > QP_VERTEX_CAP:
        raise UsageError(f"oracle capped at {QP_VERTEX_CAP} vertices, got {n}")
    L = laplacian_dense(inst.graph)
    x = np.maximum(np.zeros(n), inst.b)
    scale = 1.0 + float(np.abs(_grad(L, inst, x)).max(initial=0.0))
    for _ in range(max_iter):
        g = _grad(L, inst, x)
        at_bound = x <= inst.b + 1e-13 * (1 + np.abs(inst.b))
        kkt = np.where(at_bound, np.minimum(g, 0.0), g)
        res = float(np.abs(kkt).max(initial=0.0))
        if res <= kkt_tol * scale:
            return x, _objective(L, inst, x)
        free = ~at_bound | (g < 0)
        idx = np.flatnonzero(free)
        H = L[np.ix_(idx, idx)].copy()
        H[np.diag_indices_from(H)] += inst.separable_curvature(x)[idx]
        # microscopic ridge: on flat (linear-piece) subspaces the Newton
        # system is singular and the regularized step points far along the
        # flat valley, which the exact line search then exploits in one go
        mu = 1e-12 * max(1.0, float(np.trace(H)) / max(len(idx), 1))
        H[np.diag_indices_from(H)] += mu
        rhs = -g[idx]
        try:
            step = np.linalg.solve(H, rhs)
            if not np.all(np.isfinite(step)):
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(H, rhs, rcond=1e-12)
        p = np.zeros(n)
        p[idx] = step
        p[at_bound & (p < 0)] = 0.0   # never push a bound coordinate outward
        if float(g @ p) > -1e-18 * scale:
            p = -g                    # fall back to projected steepest descent
            p[at_bound & (p < 0)] = 0.0
            if float(g @ p) >= 0:
                return x, _objective(L, inst, x)
        t = _line_search(L, inst, x, p)
        if t <= 0:
            return x, _objective(L, inst, x)
        x = np.maximum(x + t * p, inst.b)
    g = _grad(L, inst, x)
    at_bound = x <= inst.b + 1e-13 * (1 + np.abs(inst.b))
    kkt = np.where(at_bound, np.minimum(g, 0.0), g)
    res = float(np.abs(kkt).max(initial=0.0))
    if res <= 1e-8 * scale:
        # accept a slightly loose stationary point rather than fail hard
        return x, _objective(L, inst, x)
    raise NumericalError(f"active-set solve stalled, KKT residual {res:.3e}")


def kkt_residual(inst: DiffusionInstance, x):
    """Max KKT violation of x: gradient on free coords, negative part at bounds."""
    L = laplacian_dense(inst.graph)
    g = _grad(L, inst, np.asarray(x, dtype=np.float64))
    at_bound = x <= inst.b + 1e-12 * (1 + np.abs(inst.b))
    kkt = np.where(at_bound, np.minimum(g, 0.0), g)
    return float(np.abs(kkt).max(initial=0.0))


def qp_solve_pgd(inst: DiffusionInstance, steps=2000, tol=0.0):
    """Projected gradient with exact line search; an independent slow check."""
    L = laplacian_dense(inst.graph)
    x = np.maximum(np.zeros(inst.n), inst.b)
    prev = _objective(L, inst, x)
    for _ in range(steps):
        g = _grad(L, inst, x)
        p = -g
        at_bound = x <= inst.b + 1e-13
        p[at_bound & (p < 0)] = 0.0
        if not np.any(p):
            break
        t = _line_search(L, inst, x, p)
        if t <= 0:
            break
        x = np.maximum(x + t * p, inst.b)
        cur = _objective(L, inst, x)
        if tol and prev - cur <= tol * (1 + abs(cur)):
            break
        prev = cur
    return x, _objective(L, inst, x)


# -- spectral certification ---------------------------------------------------

def _ones_complement_basis(n):
    """Helmert-style orthonormal basis of the complement of the ones vector."""
    Q = np.zeros((n, n - 1))
    for k in range(1, n):
        Q[:k, k - 1] = 1.0
        Q[k, k - 1] = -k
        Q[:, k - 1] /= np.sqrt(k * (k + 1))
    return Q


def pencil_bounds(lh, lg):
    """Extreme generalized eigenvalues of (L_H, L_G) on the complement of ones.

    Both graphs must be connected on the same vertex set. This is the
    certificate for sparsifier quality claims L(G) <= L(H) <= kappa L(G).
    """
    lh = np.asarray(lh, dtype=np.float64)
    lg = np.asarray(lg, dtype=np.float64)
    n = lh.shape[0]
    if lh.shape != (n, n) or lg.shape != (n, n):
        raise UsageError("pencil_bounds expects two square matrices of equal size")
    if n > PENCIL_VERTEX_CAP:
        raise UsageError(f"pencil capped at {PENCIL_VERTEX_CAP} vertices, got {n}")
    if n == 1:
        return 1.0, 1.0
    Q = _ones_complement_basis(n)
    A = Q.T @ lh @ Q
    B = Q.T @ lg @ Q
    try:
        w = scipy.linalg.eigh(A, B, eigvals_only=True)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise NumericalError(f"singular pencil outside span(1): {exc}") from exc
    if not np.all(np.isfinite(w)):
        raise NumericalError("pencil produced non-finite eigenvalues (disconnected input?)")
    return float(w[0]), float(w[-1])


def pencil_bounds_graphs(h: Graph, g: Graph):
    return pencil_bounds(laplacian_dense(h), laplacian_dense(g))
