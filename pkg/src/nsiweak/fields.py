"""Smooth fields on the half-plane as expression objects with analytic partials.

Derivatives are carried as *jets*:

* a 1D jet is an array of shape ``(n + 1, ...)`` holding ``g, g', g'', g'''``
  (``n <= 3``);
* a 2D jet is an array of shape ``(6, ...)`` holding
  ``f, f_1, f_2, f_11, f_12, f_22`` where index 1 is the axial coordinate
  ``x1`` and index 2 the distance ``x2`` to the axis.

Products and compositions propagate jets with the Leibniz and Faa di Bruno
rules, so no field in this package is ever differentiated numerically.
Finite differences appear only in tests, as an oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, DomainError, EmptySetError
from .quadrature import gauss_legendre

__all__ = [
    "Rect", "ScalarField1D", "Constant1D", "Polynomial1D", "Affine1D", "Product1D",
    "Sum1D", "Scaled1D", "Power1D", "Clamped1D", "PiecewiseLinear1D", "Indicator1D",
    "Mollified1D", "ScalarField2D", "Zero2D", "Separable2D", "Sum2D", "Scaled2D",
    "Product2D", "Compose2D", "Radial2D", "Callable2D", "Indicator2D",
    "PlanarVectorField", "eval_with_partials", "eta_subset", "divided_difference",
    "mollify", "bump_kernel", "jet1_mul", "jet1_compose", "jet2_mul", "jet2_compose",
    "JET2_KEYS",
]

JET2_KEYS = ("value", "d1", "d2", "d11", "d12", "d22")


# ---------------------------------------------------------------------------
# rectangles


@dataclass(frozen=True)
class Rect:
    """Open rectangle ``(a1, b1) x (a2, b2)`` in the upper half-plane."""

    a1: float
    b1: float
    a2: float
    b2: float

    def __post_init__(self):
        if not (self.b1 > self.a1):
            raise DomainError(f"need b1 > a1, got {self.a1}, {self.b1}")
        if not (self.b2 > self.a2 > 0):
            raise DomainError(f"need b2 > a2 > 0, got {self.a2}, {self.b2}")

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        return (self.a1, self.b1, self.a2, self.b2)

    @property
    def width(self) -> float:
        return self.b1 - self.a1

    @property
    def height(self) -> float:
        return self.b2 - self.a2

    @property
    def min_side(self) -> float:
        return min(self.width, self.height)

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.a1 + self.b1), 0.5 * (self.a2 + self.b2))

    def contains(self, x1, x2, closed: bool = False):
        x1 = np.asarray(x1)
        x2 = np.asarray(x2)
        if closed:
            return (x1 >= self.a1) & (x1 <= self.b1) & (x2 >= self.a2) & (x2 <= self.b2)
        return (x1 > self.a1) & (x1 < self.b1) & (x2 > self.a2) & (x2 < self.b2)

    def rho_moment(self) -> float:
        """``int int x2 dx2 dx1`` over the rectangle."""
        return self.width * 0.5 * (self.b2 ** 2 - self.a2 ** 2)

    def shrink(self, margin: float) -> "Rect":
        return eta_subset(self, margin)

    def disjoint(self, other: "Rect") -> bool:
        return (self.b1 <= other.a1 or other.b1 <= self.a1
                or self.b2 <= other.a2 or other.b2 <= self.a2)

    def as_list(self) -> list[float]:
        return [self.a1, self.b1, self.a2, self.b2]


def eta_subset(rect: Rect, margin: float) -> Rect:
    """The set of points of ``rect`` at distance more than ``margin`` from its boundary."""
    if margin < 0:
        raise DomainError("margin must be non-negative")
    if margin >= 0.5 * rect.min_side:
        raise EmptySetError(f"margin {margin} leaves an empty rectangle")
    return Rect(rect.a1 + margin, rect.b1 - margin, rect.a2 + margin, rect.b2 - margin)


# ---------------------------------------------------------------------------
# jet algebra


def jet1_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Leibniz rule for 1D jets of equal order."""
    n = min(len(a), len(b))
    out = np.zeros((n,) + np.broadcast_shapes(a.shape[1:], b.shape[1:]))
    for k in range(n):
        for i in range(k + 1):
            out[k] = out[k] + math.comb(k, i) * a[i] * b[k - i]
    return out


def jet1_compose(F: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Faa di Bruno to order 3.

    ``F[k]`` is the k-th derivative of the outer function evaluated at ``g[0]``.
    """
    n = min(len(F), len(g))
    out = np.zeros((n,) + np.broadcast_shapes(F.shape[1:], g.shape[1:]))
    out[0] = F[0]
    if n > 1:
        out[1] = F[1] * g[1]
    if n > 2:
        out[2] = F[2] * g[1] ** 2 + F[1] * g[2]
    if n > 3:
        out[3] = F[3] * g[1] ** 3 + 3 * F[2] * g[1] * g[2] + F[1] * g[3]
    return out


def jet2_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    f, f1, f2, f11, f12, f22 = a
    g, g1, g2, g11, g12, g22 = b
    return np.stack([
        f * g,
        f1 * g + f * g1,
        f2 * g + f * g2,
        f11 * g + 2 * f1 * g1 + f * g11,
        f12 * g + f1 * g2 + f2 * g1 + f * g12,
        f22 * g + 2 * f2 * g2 + f * g22,
    ])


def jet2_compose(F: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Chain rule: ``F[k]`` are derivatives of the outer 1D function at ``g[0]``."""
    _, g1, g2, g11, g12, g22 = g
    return np.stack([
        F[0],
        F[1] * g1,
        F[1] * g2,
        F[2] * g1 * g1 + F[1] * g11,
        F[2] * g1 * g2 + F[1] * g12,
        F[2] * g2 * g2 + F[1] * g22,
    ])


# ---------------------------------------------------------------------------
# one-dimensional fields


class ScalarField1D:
    """Base class for smooth (or piecewise smooth) functions of one variable.

    Subclasses implement :meth:`derivs`.  ``breakpoints`` lists the points
    where the definition changes; quadrature never straddles them.
    """

    breakpoints: tuple = ()
    max_order: int = 3

    def derivs(self, x, order: int = 2) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x):
        return self.derivs(x, 0)[0]

    def derivative(self, x, k: int = 1):
        return self.derivs(x, k)[k]

    def log_derivs(self, x):
        """``(log g, g'/g, g''/g)``; subclasses override where ``g`` underflows."""
        d = self.derivs(x, 2)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(d[0]), d[1] / d[0], d[2] / d[0]

    def __add__(self, other):
        return Sum1D(self, other)

    def __mul__(self, other):
        if isinstance(other, ScalarField1D):
            return Product1D(self, other)
        return Scaled1D(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return Scaled1D(self, -1.0)

    def __sub__(self, other):
        return Sum1D(self, -other)


class Constant1D(ScalarField1D):
    def __init__(self, value: float):
        self.value = float(value)

    def derivs(self, x, order=2):
        x = np.asarray(x, dtype=float)
        out = np.zeros((order + 1,) + x.shape)
        out[0] = self.value
        return out


class Polynomial1D(ScalarField1D):
    """Polynomial with coefficients in increasing degree."""

    def __init__(self, coeffs):
        self.poly = np.polynomial.Polynomial(coeffs)

    def derivs(self, x, order=2):
        x = np.asarray(x, dtype=float)
        out = np.empty((order + 1,) + x.shape)
        p = self.poly
        for k in range(order + 1):
            out[k] = p(x)
            p = p.deriv()
        return out


class Affine1D(ScalarField1D):
    """``x -> g(scale * x + shift)``."""

    def __init__(self, g: ScalarField1D, scale: float, shift: float = 0.0):
        if scale == 0:
            raise DegenerateInputError("affine scale must be nonzero")
        self.g, self.scale, self.shift = g, float(scale), float(shift)
        self.breakpoints = tuple(sorted((b - self.shift) / self.scale for b in g.breakpoints))

    def derivs(self, x, order=2):
        y = self.scale * np.asarray(x, dtype=float) + self.shift
        d = self.g.derivs(y, order)
        return d * (self.scale ** np.arange(order + 1)).reshape((-1,) + (1,) * y.ndim)

    def log_derivs(self, x):
        y = self.scale * np.asarray(x, dtype=float) + self.shift
        lg, r1, r2 = self.g.log_derivs(y)
        return lg, self.scale * r1, self.scale ** 2 * r2


class Product1D(ScalarField1D):
    def __init__(self, *factors: ScalarField1D):
        self.factors = factors
        self.breakpoints = tuple(sorted({b for f in factors for b in f.breakpoints}))

    def derivs(self, x, order=2):
        out = self.factors[0].derivs(x, order)
        for f in self.factors[1:]:
            out = jet1_mul(out, f.derivs(x, order))
        return out

    def log_derivs(self, x):
        lg = 0.0
        r1 = 0.0
        r2 = 0.0
        for f in self.factors:
            l, s1, s2 = f.log_derivs(x)
            r2 = r2 + s2 + 2 * r1 * s1
            r1 = r1 + s1
            lg = lg + l
        return lg, r1, r2


class Sum1D(ScalarField1D):
    def __init__(self, *terms: ScalarField1D):
        self.terms = terms
        self.breakpoints = tuple(sorted({b for f in terms for b in f.breakpoints}))

    def derivs(self, x, order=2):
        return sum(t.derivs(x, order) for t in self.terms)


class Scaled1D(ScalarField1D):
    def __init__(self, g: ScalarField1D, factor: float):
        self.g, self.factor = g, float(factor)
        self.breakpoints = g.breakpoints

    def derivs(self, x, order=2):
        return self.factor * self.g.derivs(x, order)

    def log_derivs(self, x):
        lg, r1, r2 = self.g.log_derivs(x)
        return lg + np.log(abs(self.factor)), r1, r2


class Power1D(ScalarField1D):
    """``g(x) ** p`` for a non-negative ``g``; derivatives where ``g > 0``."""

    def __init__(self, g: ScalarField1D, p: float):
        self.g, self.p = g, float(p)
        self.breakpoints = g.breakpoints

    def derivs(self, x, order=2):
        d = self.g.derivs(x, order)
        y = np.maximum(d[0], 0.0)
        pos = y > 0
        ys = np.where(pos, y, 1.0)
        F = np.zeros((order + 1,) + y.shape)
        coef = 1.0
        for k in range(order + 1):
            F[k] = np.where(pos, coef * ys ** (self.p - k), 0.0)
            coef *= self.p - k
        return jet1_compose(F, d)


class Clamped1D(ScalarField1D):
    """``g`` restricted to ``[lo, hi]`` and extended by its boundary values.

    ``left`` and ``right`` override the extension values, which lets a
    one-sided limit stand in at a jump.
    """

    def __init__(self, g: ScalarField1D, lo: float, hi: float, left=None, right=None):
        self.g, self.lo, self.hi = g, float(lo), float(hi)
        self.left = float(g(np.array(lo))) if left is None else float(left)
        self.right = float(g(np.array(hi))) if right is None else float(right)
        self.breakpoints = tuple(sorted({self.lo, self.hi} | {b for b in g.breakpoints if lo < b < hi}))

    def derivs(self, x, order=2):
        x = np.asarray(x, dtype=float)
        inside = (x > self.lo) & (x < self.hi)
        d = self.g.derivs(np.clip(x, self.lo, self.hi), order)
        out = np.where(inside, d, 0.0)
        out[0] = np.where(x <= self.lo, self.left, np.where(x >= self.hi, self.right, d[0]))
        return out


class PiecewiseLinear1D(ScalarField1D):
    """Linear interpolation through ``(t_i, y_i)``; constant beyond the ends."""

    max_order = 1

    def __init__(self, t, y):
        t = np.asarray(t, dtype=float)
        y = np.asarray(y, dtype=float)
        if t.ndim != 1 or t.shape != y.shape or len(t) < 2:
            raise DegenerateInputError("need matching 1D arrays with at least two nodes")
        if np.any(np.diff(t) <= 0):
            raise DegenerateInputError("nodes must be strictly increasing")
        self.t, self.y = t, y
        self.slopes = np.diff(y) / np.diff(t)
        self.breakpoints = tuple(t)

    def derivs(self, x, order=2):
        x = np.asarray(x, dtype=float)
        out = np.zeros((order + 1,) + x.shape)
        out[0] = np.interp(x, self.t, self.y)
        if order >= 1:
            idx = np.clip(np.searchsorted(self.t, x, side="right") - 1, 0, len(self.slopes) - 1)
            inside = (x >= self.t[0]) & (x < self.t[-1])
            out[1] = np.where(inside, self.slopes[idx], 0.0)
        return out


class Indicator1D(ScalarField1D):
    """Indicator of ``[lo, hi]``; values only (usable inside integrals)."""

    max_order = 0

    def __init__(self, lo: float, hi: float):
        self.lo, self.hi = float(lo), float(hi)
        self.breakpoints = (self.lo, self.hi)

    def derivs(self, x, order=0):
        x = np.asarray(x, dtype=float)
        out = np.zeros((order + 1,) + x.shape)
        out[0] = ((x >= self.lo) & (x <= self.hi)).astype(float)
        return out


# ---------------------------------------------------------------------------
# mollification


def _kernel_raw(s, order):
    """Derivatives of ``exp(-1/(1-s^2))`` on (-1, 1), zero outside."""
    s = np.asarray(s, dtype=float)
    m = np.abs(s) < 1
    sm = np.where(m, s, 0.0)
    w = 1.0 - sm * sm
    e = np.where(m, np.exp(-1.0 / w), 0.0)
    q1 = -2.0 * sm / w ** 2
    q2 = -2.0 / w ** 2 - 8.0 * sm ** 2 / w ** 3
    q3 = -24.0 * sm / w ** 3 - 48.0 * sm ** 3 / w ** 4
    vals = [e, q1 * e, (q2 + q1 ** 2) * e, (q3 + 3 * q1 * q2 + q1 ** 3) * e]
    return np.stack(vals[:order + 1])


def _kernel_mass() -> float:
    # 0.443993816168079... ; computed once with a dense Gauss rule
    x, w = gauss_legendre(400)
    return float((_kernel_raw(x, 0)[0] * w).sum())


_MASS = _kernel_mass()


def bump_kernel(x, radius: float, order: int = 0) -> np.ndarray:
    """Normalized mollifier ``rho_r(x) = rho(x/r)/r`` and its derivatives."""
    x = np.asarray(x, dtype=float)
    d = _kernel_raw(x / radius, order) / _MASS
    scale = radius ** -(np.arange(order + 1) + 1.0)
    return d * scale.reshape((-1,) + (1,) * x.ndim)


class Mollified1D(ScalarField1D):
    """Convolution of ``g`` with the normalized bump of the given radius.

    The convolution integral is evaluated with a fixed Gauss rule on each
    piece of the kernel window between breakpoints of ``g``.  Derivatives
    are convolutions with kernel derivatives, so ``g`` itself only needs
    values.
    """

    def __init__(self, g: ScalarField1D, radius: float, n: int = 64):
        if radius <= 0:
            raise DomainError("mollification radius must be positive")
        self.g, self.radius, self.n = g, float(radius), int(n)
        self._gb = np.asarray(sorted(set(g.breakpoints)), dtype=float)
        self.breakpoints = tuple(sorted({b + s * self.radius for b in self._gb for s in (-1.0, 1.0)}))

    def derivs(self, x, order=2):
        x = np.asarray(x, dtype=float)
        flat = x.ravel()
        out = np.zeros((order + 1, flat.size))
        gx, gw = gauss_legendre(self.n)
        r = self.radius
        edges = np.concatenate([[-np.inf], self._gb, [np.inf]])
        # one vectorized Gauss rule per smooth piece of g inside the window
        for e0, e1 in zip(edges[:-1], edges[1:]):
            lo = np.maximum(flat - r, e0)
            hi = np.minimum(flat + r, e1)
            ok = hi > lo
            if not np.any(ok):
                continue
            lo, hi, xo = lo[ok], hi[ok], flat[ok]
            half = 0.5 * (hi - lo)
            ys = (0.5 * (hi + lo))[:, None] + half[:, None] * gx[None, :]
            ws = half[:, None] * gw[None, :]
            gy = self.g(ys)
            ker = bump_kernel(xo[:, None] - ys, r, order)
            out[:, ok] += (ker * (gy * ws)[None]).sum(axis=2)
        return out.reshape((order + 1,) + x.shape)


# ---------------------------------------------------------------------------
# two-dimensional fields


class ScalarField2D:
    """Base class for smooth scalar fields on the half-plane.

    ``support`` is a :class:`Rect` whose closure contains the support, or
    ``None`` for the entire half-plane.  ``jet`` returns the 2D jet.
    """

    support: Rect | None = None

    def jet(self, x1, x2) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x1, x2):
        return self.jet(x1, x2)[0]

    def breaks(self) -> tuple[tuple, tuple]:
        """Coordinates where the field changes definition (for quadrature)."""
        if self.support is None:
            return (), ()
        s = self.support
        return (s.a1, s.b1), (s.a2, s.b2)

    def supports(self) -> list[Rect]:
        """Disjoint rectangles covering the support (one for most fields)."""
        return [] if self.support is None else [self.support]

    def L_ratio(self, x1, x2):
        """``Lf / f`` where ``f > 0``; overridden where ``f`` underflows."""
        j = self.jet(x1, x2)
        x2 = np.asarray(x2, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return (j[3] + j[5] + j[2] / x2) / j[0] - 1.0 / x2 ** 2

    def grad_ratio_sq(self, x1, x2):
        """``|grad f|^2 / f^2``."""
        j = self.jet(x1, x2)
        with np.errstate(divide="ignore", invalid="ignore"):
            return (j[1] ** 2 + j[2] ** 2) / j[0] ** 2

    def __add__(self, other):
        return Sum2D(self, other)

    def __mul__(self, other):
        if isinstance(other, ScalarField2D):
            return Product2D(self, other)
        return Scaled2D(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return Scaled2D(self, -1.0)

    def __sub__(self, other):
        return Sum2D(self, -other)


class Zero2D(ScalarField2D):
    def __init__(self, support: Rect | None = None):
        self.support = support

    def jet(self, x1, x2):
        x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        return np.zeros((6,) + x1.shape)

    def supports(self):
        return []


class Separable2D(ScalarField2D):
    """``scale * g1(x1) * g2(x2)``."""

    def __init__(self, g1: ScalarField1D, g2: ScalarField1D, support: Rect | None = None,
                 scale: float = 1.0):
        self.g1, self.g2, self.support, self.scale = g1, g2, support, float(scale)

    def jet(self, x1, x2):
        x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        a = self.g1.derivs(x1, 2)
        b = self.g2.derivs(x2, 2)
        return self.scale * np.stack([a[0] * b[0], a[1] * b[0], a[0] * b[1],
                                      a[2] * b[0], a[1] * b[1], a[0] * b[2]])

    def __call__(self, x1, x2):
        x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        return self.scale * self.g1.derivs(x1, 0)[0] * self.g2.derivs(x2, 0)[0]

    def breaks(self):
        b1 = set(self.g1.breakpoints)
        b2 = set(self.g2.breakpoints)
        if self.support is not None:
            b1 |= {self.support.a1, self.support.b1}
            b2 |= {self.support.a2, self.support.b2}
        return tuple(sorted(b1)), tuple(sorted(b2))

    def log_ratios(self, x1, x2):
        """``log f`` and ``f_1/f, f_2/f, f_11/f, f_12/f, f_22/f`` without underflow."""
        x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        l1, r1, r11 = self.g1.log_derivs(x1)
        l2, r2, r22 = self.g2.log_derivs(x2)
        return l1 + l2 + np.log(abs(self.scale)), r1, r2, r11, r1 * r2, r22

    def L_ratio(self, x1, x2):
        _, r1, r2, r11, _, r22 = self.log_ratios(x1, x2)
        x2 = np.asarray(x2, dtype=float)
        return r11 + r22 + r2 / x2 - 1.0 / x2 ** 2

    def grad_ratio_sq(self, x1, x2):
        _, r1, r2, *_ = self.log_ratios(x1, x2)
        return r1 ** 2 + r2 ** 2

    def with_scale(self, scale: float) -> "Separable2D":
        return Separable2D(self.g1, self.g2, self.support, self.scale * scale)


class Sum2D(ScalarField2D):
    def __init__(self, *terms: ScalarField2D):
        flat = []
        for t in terms:
            flat.extend(t.terms if isinstance(t, Sum2D) else [t])
        self.terms = tuple(flat)
        sups = [t.support for t in self.terms]
        if any(s is None for s in sups):
            self.support = None
        else:
            self.support = Rect(min(s.a1 for s in sups), max(s.b1 for s in sups),
                                min(s.a2 for s in sups), max(s.b2 for s in sups))

    def jet(self, x1, x2):
        return sum(t.jet(x1, x2) for t in self.terms)

    def breaks(self):
        b1, b2 = set(), set()
        for t in self.terms:
            c1, c2 = t.breaks()
            b1 |= set(c1)
            b2 |= set(c2)
        return tuple(sorted(b1)), tuple(sorted(b2))

    def supports(self):
        return [s for t in self.terms for s in t.supports()]

    def L_ratio(self, x1, x2):
        # on disjoint supports only one term is active; use its own ratio
        x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        owner = np.full(x1.shape, -1)
        for i, t in enumerate(self.terms):
            if t.support is not None:
                owner = np.where((owner < 0) & t.support.contains(x1, x2), i, owner)
        out = ScalarField2D.L_ratio(self, x1, x2)
        for i, t in enumerate(self.terms):
            m = owner == i
            if np.any(m):
                out = np.where(m, t.L_ratio(x1, x2), out)
        return out


class Scaled2D(ScalarField2D):
    def __init__(self, f: ScalarField2D, factor: float):
        self.f, self.factor = f, float(factor)
        self.support = f.support

    def jet(self, x1, x2):
        return self.factor * self.f.jet(x1, x2)

    def breaks(self):
        return self.f.breaks()

    def supports(self):
        return self.f.supports()

    def L_ratio(self, x1, x2):
        return self.f.L_ratio(x1, x2)

    def grad_ratio_sq(self, x1, x2):
        return self.f.grad_ratio_sq(x1, x2)


class Product2D(ScalarField2D):
    def __init__(self, *factors: ScalarField2D):
        self.factors = factors
        sups = [f.support for f in factors if f.support is not None]
        if sups:
            a1 = max(s.a1 for s in sups)
            b1 = min(s.b1 for s in sups)
            a2 = max(s.a2 for s in sups)
            b2 = min(s.b2 for s in sups)
            self.support = Rect(a1, b1, a2, b2) if (b1 > a1 and b2 > a2) else None
        else:
            self.support = None

    def jet(self, x1, x2):
        out = self.factors[0].jet(x1, x2)
        for f in self.factors[1:]:
            out = jet2_mul(out, f.jet(x1, x2))
        return out

    def breaks(self):
        b1, b2 = set(), set()
        for t in self.factors:
            c1, c2 = t.breaks()
            b1 |= set(c1)
            b2 |= set(c2)
        return tuple(sorted(b1)), tuple(sorted(b2))


class Compose2D(ScalarField2D):
    """``G(f(x1, x2))`` for a 1D function ``G`` with ``G(0) = 0`` support-wise."""

    def __init__(self, G: ScalarField1D, f: ScalarField2D, support: Rect | None = None):
        self.G, self.f = G, f
        self.support = f.support if support is None else support

    def jet(self, x1, x2):
        g = self.f.jet(x1, x2)
        return jet2_compose(self.G.derivs(g[0], 2), g)

    def breaks(self):
        return self.f.breaks()


class Radial2D(ScalarField2D):
    """``profile(|x - center| / scale)``; the profile must vanish near 0."""

    def __init__(self, profile: ScalarField1D, center, scale: float, r_min: float,
                 support: Rect | None = None):
        self.profile, self.center, self.scale = profile, tuple(center), float(scale)
        self.r_min = float(r_min)
        self.support = support

    def jet(self, x1, x2):
        x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        dx = x1 - self.center[0]
        dy = x2 - self.center[1]
        r = np.hypot(dx, dy)
        safe = np.where(r > 0, r, 1.0)
        rj = np.stack([r, dx / safe, dy / safe, dy * dy / safe ** 3,
                       -dx * dy / safe ** 3, dx * dx / safe ** 3]) / self.scale
        rj[0] = r / self.scale
        out = np.zeros((6,) + x1.shape)
        m = rj[0] > self.r_min
        if np.any(m):
            out[:, m] = jet2_compose(self.profile.derivs(rj[0][m], 2), rj[:, m])
        return out


class Callable2D(ScalarField2D):
    """Field from a user-supplied jet function ``fn(x1, x2) -> (6, ...)`` array.

    ``value``, if given, evaluates the field alone (skipping the partials).
    """

    def __init__(self, fn, support: Rect | None = None, breaks=((), ()), value=None):
        self.fn, self.support, self._breaks, self.value = fn, support, breaks, value

    def __call__(self, x1, x2):
        if self.value is None:
            return self.jet(x1, x2)[0]
        x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        return np.asarray(self.value(x1, x2), dtype=float) * np.ones(x1.shape)

    def jet(self, x1, x2):
        x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        return np.asarray(self.fn(x1, x2), dtype=float) * np.ones((6,) + x1.shape)

    def breaks(self):
        b1, b2 = self._breaks
        if self.support is not None:
            b1 = tuple(b1) + (self.support.a1, self.support.b1)
            b2 = tuple(b2) + (self.support.a2, self.support.b2)
        return tuple(sorted(set(b1))), tuple(sorted(set(b2)))


class Indicator2D:
    """Indicator of ``rect`` minus the closure of ``hole``.

    Admitted only inside norm computations: it has values but no jet.
    """

    def __init__(self, rect: Rect, hole: Rect | None = None):
        self.support, self.hole = rect, hole

    def __call__(self, x1, x2):
        v = self.support.contains(x1, x2).astype(float)
        if self.hole is not None:
            v = v * (1.0 - self.hole.contains(x1, x2, closed=True))
        return v

    def rho_moment(self) -> float:
        m = self.support.rho_moment()
        return m - (self.hole.rho_moment() if self.hole is not None else 0.0)


@dataclass(frozen=True)
class PlanarVectorField:
    """Pair of scalar fields ``(v1, v2)`` with a common support."""

    v1: ScalarField2D
    v2: ScalarField2D

    @property
    def support(self):
        return self.v1.support

    def jets(self, x1, x2):
        return self.v1.jet(x1, x2), self.v2.jet(x1, x2)

    def __call__(self, x1, x2):
        return np.stack([self.v1(x1, x2), self.v2(x1, x2)])

    def __add__(self, other: "PlanarVectorField"):
        return PlanarVectorField(Sum2D(self.v1, other.v1), Sum2D(self.v2, other.v2))

    def scaled(self, a: float) -> "PlanarVectorField":
        return PlanarVectorField(Scaled2D(self.v1, a), Scaled2D(self.v2, a))

    def div_x2v(self, x1, x2):
        """``div(x2 v) = x2 (d1 v1 + d2 v2) + v2``."""
        a, b = self.jets(x1, x2)
        return np.asarray(x2) * (a[1] + b[2]) + b[0]


# ---------------------------------------------------------------------------
# operations


def eval_with_partials(field: ScalarField2D, point, order: int = 2) -> dict:
    """Value and analytic partials of ``field`` at ``point`` up to ``order``.

    Raises
    ------
    DomainError
        If ``x2 <= 0``.
    """
    x1, x2 = (np.asarray(c, dtype=float) for c in point)
    if np.any(x2 <= 0):
        raise DomainError("point must lie in the open half-plane x2 > 0")
    if order not in (0, 1, 2):
        raise DomainError("order must be 0, 1 or 2")
    j = field.jet(x1, x2)
    n = {0: 1, 1: 3, 2: 6}[order]
    return {k: j[i] if j[i].ndim else float(j[i]) for i, k in enumerate(JET2_KEYS[:n])}


def divided_difference(g, points) -> float:
    """First or second divided difference of ``g``.

    ``g[a, b] = (g(a) - g(b)) / (a - b)`` and
    ``g[a, b, c] = (g[a, b] - g[c, b]) / (a - c)``.
    """
    pts = [float(p) for p in points]
    if len(pts) not in (2, 3):
        raise DegenerateInputError("need two or three points")
    if len(set(pts)) != len(pts):
        raise DegenerateInputError("divided differences need distinct points")
    val = lambda t: float(np.asarray(g(np.asarray(t))))
    if len(pts) == 2:
        a, b = pts
        return (val(a) - val(b)) / (a - b)
    a, b, c = pts
    gb = val(b)
    return ((val(a) - gb) / (a - b) - (val(c) - gb) / (c - b)) / (a - c)


class _Mollified2D(ScalarField2D):
    """Tensor-product mollification of a 2D field (values only needed from the input)."""

    def __init__(self, f: ScalarField2D, radius: float, n: int = 64):
        self.f, self.radius, self.n = f, float(radius), int(n)
        s = f.support
        self.support = None if s is None else Rect(s.a1 - radius, s.b1 + radius,
                                                   max(s.a2 - radius, 1e-300), s.b2 + radius)

    def jet(self, x1, x2):
        x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        gx, gw = gauss_legendre(self.n)
        r = self.radius
        s = r * gx
        w = r * gw
        out = np.empty((6,) + x1.shape)
        for idx in np.ndindex(x1.shape):
            y1 = x1[idx] - s[:, None]
            y2 = x2[idx] - s[None, :]
            vals = self.f(*np.broadcast_arrays(y1, y2)) * (w[:, None] * w[None, :])
            k1 = bump_kernel(s, r, 2)
            k2 = k1
            out[(0,) + idx] = np.einsum("i,j,ij->", k1[0], k2[0], vals)
            out[(1,) + idx] = np.einsum("i,j,ij->", k1[1], k2[0], vals)
            out[(2,) + idx] = np.einsum("i,j,ij->", k1[0], k2[1], vals)
            out[(3,) + idx] = np.einsum("i,j,ij->", k1[2], k2[0], vals)
            out[(4,) + idx] = np.einsum("i,j,ij->", k1[1], k2[1], vals)
            out[(5,) + idx] = np.einsum("i,j,ij->", k1[0], k2[2], vals)
        return out


def mollify(field, radius: float, n: int = 64):
    """Convolve a 1D or 2D field with the normalized bump of the given radius.

    Fields are extended by their own values outside any declared interval;
    wrap with :class:`Clamped1D` to extend by boundary values instead.
    """
    if radius <= 0:
        raise DomainError("mollification radius must be positive")
    if isinstance(field, ScalarField1D):
        return Mollified1D(field, radius, n)
    if isinstance(field, ScalarField2D):
        return _Mollified2D(field, radius, n)
    raise TypeError(f"cannot mollify {type(field).__name__}")
