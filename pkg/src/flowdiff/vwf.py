"""Vertex weighting functions: convex piecewise quadratics with concave derivative.

A ``Vwf`` stores pieces ``(s_i, r_i, a_i, b_i)`` meaning
``f(x) = r_i x^2 / 2 + a_i x + b_i`` on ``[s_i, s_{i+1})``, with an implicit
``s_k = +inf``. The domain is ``[s_0, inf)``; ``s_0`` may be ``-inf`` for
functions produced by lifting. Structural requirements:

* breakpoints strictly increasing, ``s_0 <= 0``;
* curvature ``r_i >= 0`` non-increasing, last piece linear (``r_{k-1} = 0``);
* value and derivative continuous at interior breakpoints;
* ``f(0) <= 0``.

Everything here is immutable and operates on numpy arrays.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import UsageError

# Pieces narrower than this are merged into their neighbor; protects the
# continuity checks from cancellation noise.
GAP_EPS = 1e-12
_CONT_TOL = 1e-9


class Vwf:
    """One vertex weighting function as parallel piece arrays."""

    __slots__ = ("s", "r", "a", "b")

    def __init__(self, s, r, a, b, prune=True):
        s = np.atleast_1d(np.asarray(s, dtype=np.float64))
        r = np.atleast_1d(np.asarray(r, dtype=np.float64))
        a = np.atleast_1d(np.asarray(a, dtype=np.float64))
        b = np.atleast_1d(np.asarray(b, dtype=np.float64))
        if not (len(s) == len(r) == len(a) == len(b)) or len(s) == 0:
            raise UsageError("piece arrays must be nonempty and equal-length")
        if prune and len(s) > 1:
            s, r, a, b = _prune_pieces(s, r, a, b)
        self.s = s
        self.r = r
        self.a = a
        self.b = b

    # -- constructors --------------------------------------------------------

    @staticmethod
    def linear(slope, lower=0.0):
        """f(x) = slope * x on [lower, inf)."""
        return Vwf([lower], [0.0], [slope], [0.0])

    @staticmethod
    def zero(lower=0.0):
        return Vwf([lower], [0.0], [0.0], [0.0])

    @classmethod
    def _raw(cls, s, r, a, b):
        """Internal: adopt float64 arrays without validation or pruning."""
        out = object.__new__(cls)
        out.s = s
        out.r = r
        out.a = a
        out.b = b
        return out

    # -- basic queries ---------------------------------------------------------

    @property
    def size(self):
        return len(self.s)

    @property
    def domain_start(self):
        return float(self.s[0])

    def piece_index(self, x):
        """Index of the piece containing x (x clamped into the domain)."""
        return int(np.clip(np.searchsorted(self.s, x, side="right") - 1, 0, self.size - 1))

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        i = np.clip(np.searchsorted(self.s, x, side="right") - 1, 0, self.size - 1)
        return 0.5 * self.r[i] * x * x + self.a[i] * x + self.b[i]

    def eval(self, x):
        """Evaluate at a scalar x; raises below the domain."""
        s = self.s
        if x < s[0] - 1e-12:
            raise UsageError(f"x={x} below domain start {s[0]}")
        if x < s[0]:
            x = s[0]
        k = self.size
        if k <= 16:
            i = k - 1
            while i > 0 and s[i] > x:
                i -= 1
        else:
            i = self.piece_index(x)
        return float(0.5 * self.r[i] * x * x + self.a[i] * x + self.b[i])

    def derivative(self, x):
        x = np.asarray(x, dtype=np.float64)
        i = np.clip(np.searchsorted(self.s, x, side="right") - 1, 0, self.size - 1)
        return self.r[i] * x + self.a[i]

    def value_at_zero(self):
        return self.eval(0.0)

    def slope_at_zero(self):
        return float(self.derivative(0.0))

    def final_slope(self):
        return float(self.a[-1])

    # -- validity --------------------------------------------------------------

    def violations(self, tol=_CONT_TOL):
        """List of human-readable invariant violations (empty when valid)."""
        out = []
        s, r, a, b = self.s, self.r, self.a, self.b
        if s[0] > 0:
            out.append(f"domain start {s[0]} is positive")
        if np.any(np.diff(s) <= 0):
            out.append("breakpoints not strictly increasing")
        if np.any(r < -tol):
            out.append("negative curvature piece")
        if np.any(np.diff(r) > tol * (1 + np.abs(r[:-1]))):
            out.append("curvature not non-increasing")
        if abs(r[-1]) > tol:
            out.append(f"last piece not linear (r={r[-1]})")
        for i in range(self.size - 1):
            sp = s[i + 1]
            if not np.isfinite(sp):
                continue
            scale = 1 + abs(sp) + abs(a[i]) + abs(r[i] * sp)
            dl = r[i] * sp + a[i]
            dr = r[i + 1] * sp + a[i + 1]
            if abs(dl - dr) > tol * scale:
                out.append(f"derivative jump {dl - dr:.3e} at s={sp}")
            vl = 0.5 * r[i] * sp * sp + a[i] * sp + b[i]
            vr = 0.5 * r[i + 1] * sp * sp + a[i + 1] * sp + b[i + 1]
            if abs(vl - vr) > tol * (1 + abs(vl)):
                out.append(f"value jump {vl - vr:.3e} at s={sp}")
        f0 = self.eval(0.0) if s[0] <= 0 else None
        if f0 is not None and f0 > tol:
            out.append(f"f(0) = {f0} > 0")
        return out

    def is_valid(self, tol=_CONT_TOL):
        return not self.violations(tol)

    # -- algebra ---------------------------------------------------------------

    def with_linear(self, slope, offset=0.0):
        """f(x) + slope*x + offset, same pieces (breakpoints shared)."""
        return Vwf._raw(self.s, self.r, self.a + slope, self.b + offset)

    def restrict(self, lower):
        """Restrict the domain to [lower, inf); lower must be >= s_0."""
        if lower < self.s[0] - 1e-12:
            raise UsageError("restrict can only shrink the domain")
        if lower <= self.s[0]:
            return self
        i = self.piece_index(lower)
        s = self.s[i:].copy()
        s[0] = lower
        return Vwf(s, self.r[i:], self.a[i:], self.b[i:])

    def shift(self, x0, extra_slope=0.0, drop_value=True):
        """Re-origin: g(y) = f(x0 + y) - f(x0) + extra_slope * y.

        The result has the same size; its domain is [s_0 - x0, inf).
        """
        if x0 < self.s[0] - 1e-12:
            raise UsageError("shift origin below domain")
        fx0 = self.eval(x0) if drop_value else 0.0
        s = self.s - x0
        r = self.r.copy()
        a = self.r * x0 + self.a + extra_slope
        b = 0.5 * self.r * x0 * x0 + self.a * x0 + self.b - fx0
        return Vwf(s, r, a, b)

    def add(self, other: "Vwf") -> "Vwf":
        """Pointwise sum on the intersected domain [max(s0, s0'), inf)."""
        lo = max(self.s[0], other.s[0])
        if not np.isfinite(lo):
            lo = -np.inf
        f = self if self.s[0] >= lo else self.restrict(lo)
        g = other if other.s[0] >= lo else other.restrict(lo)
        s = np.union1d(f.s, g.s)
        if not np.isfinite(lo):
            # union1d keeps a single -inf first
            s = s[np.isfinite(s) | (s == -np.inf)]
        i = np.clip(np.searchsorted(f.s, s, side="right") - 1, 0, f.size - 1)
        j = np.clip(np.searchsorted(g.s, s, side="right") - 1, 0, g.size - 1)
        return Vwf(s, f.r[i] + g.r[j], f.a[i] + g.a[j], f.b[i] + g.b[j])

    def scale(self, t):
        """t * f(x) for t > 0 (still a Vwf)."""
        if t <= 0:
            raise UsageError("scale factor must be positive")
        return Vwf(self.s, t * self.r, t * self.a, t * self.b, prune=False)

    def lift(self, c: float) -> "Vwf":
        """Inf-convolution min_{y >= s_0} c (x-y)^2 / 2 + f(y), domain all of R.

        Each piece maps under the conductance-c operator; one quadratic piece
        covering (-inf, s_0-image) is prepended when the domain was bounded.
        """
        if c <= 0:
            raise UsageError("lift conductance must be positive")
        s, r, a, b = apply_lift_op(c, self.s, self.r, self.a, self.b)
        if np.isfinite(self.s[0]):
            s0 = self.s[0]
            fs0 = self.eval(s0)
            s = np.concatenate(([-np.inf], s))
            r = np.concatenate(([c], r))
            a = np.concatenate(([-c * s0], a))
            b = np.concatenate(([0.5 * c * s0 * s0 + fs0], b))
        return Vwf(s, r, a, b)

    def optimal_lift_x(self, c: float, x) -> float:
        """argmin_{y >= s_0} c (x-y)^2 / 2 + f(y) for the given lift constant.

        Equals x - fbar'(x)/c where fbar is the lifted function; computed
        directly from the pre-lift pieces. Non-decreasing in x.
        """
        if c <= 0:
            raise UsageError("lift conductance must be positive")
        sbar = self.s + (self.r * self.s + self.a) / c
        i = int(np.clip(np.searchsorted(sbar, x, side="right") - 1, 0, self.size - 1))
        if np.isfinite(self.s[0]) and x < sbar[0]:
            return float(self.s[0])
        y = (c * x - self.a[i]) / (c + self.r[i])
        if np.isfinite(self.s[0]):
            y = max(y, float(self.s[0]))
        return float(y)

    def minimize(self):
        """(argmin, min) over the domain; raises if unbounded below."""
        if self.r[-1] == 0.0 and self.a[-1] < 0:
            raise UsageError("vwf is unbounded below (negative final slope)")
        best_x, best_v = None, np.inf
        ss = np.concatenate((self.s, [np.inf]))
        for i in range(self.size):
            lo, hi = ss[i], ss[i + 1]
            cands = []
            if np.isfinite(lo):
                cands.append(lo)
            if self.r[i] > 0:
                xv = -self.a[i] / self.r[i]
                if lo <= xv < hi:
                    cands.append(xv)
            elif self.a[i] == 0.0 and not np.isfinite(lo):
                cands.append(min(hi, 0.0))
            for x in cands:
                v = float(0.5 * self.r[i] * x * x + self.a[i] * x + self.b[i])
                if v < best_v - 1e-15 or (v < best_v + 1e-15 and (best_x is None or x < best_x)):
                    best_x, best_v = float(x), v
        if best_x is None:
            # single linear piece with nonnegative slope on unbounded domain
            raise UsageError("vwf has no attained minimum")
        return best_x, best_v

    def as_tuples(self):
        return list(zip(self.s.tolist(), self.r.tolist(), self.a.tolist(), self.b.tolist()))

    def __repr__(self):
        return f"Vwf(size={self.size}, dom=[{self.s[0]:g}, inf))"

    # -- debug serialization -----------------------------------------------

    def dumps(self):
        """Line format: piece count, then one 's r a b' line per piece."""
        lines = [str(self.size)]
        for s, r, a, b in self.as_tuples():
            lines.append(f"{s:.17g} {r:.17g} {a:.17g} {b:.17g}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def loads(text):
        lines = [ln for ln in text.strip().splitlines() if ln.strip()]
        k = int(lines[0])
        rows = [tuple(float(t) for t in ln.split()) for ln in lines[1:1 + k]]
        s, r, a, b = zip(*rows)
        return Vwf(s, r, a, b)


def _prune_pieces(s, r, a, b):
    """Drop pieces narrower than GAP_EPS and merge identical neighbors."""
    ss = np.concatenate((s, [np.inf]))
    wide = np.diff(ss) > GAP_EPS
    wide[0] = True  # always keep the domain start
    if not wide.all():
        keep = np.flatnonzero(wide)
        # a dropped piece donates its left breakpoint to the next survivor
        s2 = [s[0]]
        for k in keep[1:]:
            s2.append(s[k])
        s, r, a, b = np.asarray(s2), r[keep], a[keep], b[keep]
    if len(s) > 1:
        same = (np.diff(r) == 0) & (np.diff(a) == 0) & (np.diff(b) == 0)
        if same.any():
            keep = np.concatenate(([True], ~same))
            s, r, a, b = s[keep], r[keep], a[keep], b[keep]
    return s, r, a, b


def apply_lift_op(c, s, r, a, b):
    """The piece-wise lift operator for conductance c.

    Maps (s, r, a, b) to
    ``((c+r)/c s + a/c, cr/(c+r), ca/(c+r), b - a^2/(2(c+r)))``.
    The constant term carries a minus sign; the derivation pins it and the
    grid-minimization tests enforce it.
    """
    s = np.asarray(s, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = c + r
    sbar = np.where(np.isfinite(s), (denom / c) * s + a / c, s)
    return sbar, c * r / denom, c * a / denom, b - a * a / (2.0 * denom)


def compose_lift(c1, c2):
    """Lift constants compose harmonically: c = c1 c2 / (c1 + c2)."""
    return c1 * c2 / (c1 + c2)


# -- Bregman decomposition and compression ------------------------------------

def hinge_quadratic(l, u, x):
    """B_{l,u}(x) = int_0^x int_0^t 1{l < v < u} dv dt, a size-2 vwf in x."""
    x = np.asarray(x, dtype=np.float64)
    if u >= 0:
        return np.where(x < u, 0.5 * x * x, u * x - 0.5 * u * u)
    return np.where(x < u, 0.5 * (x - u) ** 2, 0.0)


def hinge_vwf(l, u, weight=1.0):
    """weight * B_{l,u} as a Vwf on [l, inf)."""
    if u <= l:
        # quadratic region below the domain: identically a linear tail
        if u >= 0:
            return Vwf([l], [0.0], [weight * u], [-0.5 * weight * u * u])
        return Vwf([l], [0.0], [0.0], [0.0])
    if u >= 0:
        return Vwf([l, u], [weight, 0.0], [0.0, weight * u],
                   [0.0, -0.5 * weight * u * u])
    return Vwf([l, u], [weight, 0.0], [-weight * u, 0.0],
               [0.5 * weight * u * u, 0.0])


def decompose_bregman(f: Vwf, tol=_CONT_TOL):
    """Write f as f(0) + f'(0) x + sum_i d_i B_{s_0, u_i}.

    Returns ``(f0, fp0, [(d_i, u_i), ...])`` with d_i = r_i - r_{i+1} summed
    from the first piece (with r_k = 0), zero weights dropped. Every kept
    u_i is finite because the last piece is linear.
    """
    bad = f.violations(tol)
    if bad:
        raise UsageError("invalid vwf: " + "; ".join(bad))
    f0 = f.eval(0.0)
    fp0 = f.slope_at_zero()
    terms = []
    r_ext = np.concatenate((f.r, [0.0]))
    s_ext = np.concatenate((f.s[1:], [np.inf]))
    for i in range(f.size):
        d = r_ext[i] - r_ext[i + 1]
        u = s_ext[i]
        # keep every strictly positive weight, however small: the identity
        # must reconstruct f exactly, not just to invariant tolerance
        if d > 0 and np.isfinite(u):
            terms.append((float(d), float(u)))
    return f0, fp0, terms


def reconstruct_bregman(f0, fp0, terms, s0, x):
    x = np.asarray(x, dtype=np.float64)
    out = f0 + fp0 * x
    for d, u in terms:
        out = out + d * hinge_quadratic(s0, u, x)
    return out


def round_pow(x, base=1.1):
    """Smallest integral power of base with magnitude >= |x|, sign preserved.

    ``round_pow(0) == 0``; negative inputs mirror to ``-round_pow(-x)``.
    """
    if base <= 1:
        raise UsageError("base must exceed 1")
    if x == 0:
        return 0.0
    sgn = 1.0 if x > 0 else -1.0
    ax = abs(x)
    k = math.ceil(math.log(ax) / math.log(base) - 1e-12)
    while base ** k < ax:
        k += 1
    while base ** (k - 1) >= ax:
        k -= 1
    return sgn * base ** k


def compress(f: Vwf, base=1.1) -> Vwf:
    """O(log range)-size approximation with 2 f(x/2) <= compress(f)(x) <= f(x).

    Bregman terms get their upper breakpoint rounded to a power of ``base``
    and their weight rescaled by u/[u]; terms rounding to the same breakpoint
    merge. Linear functions pass through unchanged.
    """
    f0, fp0, terms = decompose_bregman(f)
    s0 = f.domain_start
    if not terms:
        # already linear up to the dropped curvature: keep the linearization
        return f if f.size == 1 else Vwf([s0], [0.0], [fp0], [f0])
    merged = {}
    for d, u in terms:
        ubar = round_pow(u, base)
        dbar = d if ubar == 0 else d * u / ubar
        merged[ubar] = merged.get(ubar, 0.0) + dbar
    # assemble pieces: breakpoints are s0, then rounded u's above s0
    bps = sorted(u for u in merged if u > s0)
    knots = np.asarray([s0] + bps)
    vals = reconstruct_bregman(f0, fp0, [(d, u) for u, d in merged.items()],
                               s0, knots)
    derivs = np.full(len(knots), fp0)
    for u, d in merged.items():
        # derivative of d*B_{s0,u} at t: d*min(t,u) for u>=0; d*(t-u) on t<u else 0
        if u >= 0:
            derivs += d * np.minimum(knots, u)
        else:
            derivs += d * np.where(knots < u, knots - u, 0.0)
    rs = np.zeros(len(knots))
    for i, t in enumerate(knots):
        rs[i] = sum(d for u, d in merged.items() if u > t)
    a = derivs - rs * knots
    b = vals - 0.5 * rs * knots * knots - a * knots
    return Vwf(knots, rs, a, b)
