"""Bump profile, certified rectangle cutoffs and structures.

The cutoff on ``U = (a1, b1) x (a2, b2)`` is the product
``f(x1, x2) = f1(x1) f2(x2)`` with ``f_i(x) = h_eta(x - a_i) h_eta(b_i - x)``,
where ``h_eta(x) = h(x / eta)`` and ``h`` is the bump profile: zero on the
left half-line, ``exp(-1/x^2)`` on ``(0, 1/2]``, a smooth blend into 1 on
``[1/2, 1)`` and identically 1 afterwards.

Near the edges ``f`` is far below the smallest double, so every positivity
check runs on logarithmic derivatives (``f'/f``, ``f''/f``) which stay
representable.  ``Lf > 0`` is equivalent to ``Lf / f > 0`` wherever
``f > 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import MAX_EMAX, MIN_EMIN, Context, Decimal

import numpy as np

from .errors import CertificationError, PreconditionError
from .fields import (
    Affine1D, Indicator1D, PlanarVectorField, Polynomial1D, Product1D, Radial2D, Rect,
    ScalarField1D, ScalarField2D, Scaled2D, Separable2D, Sum2D, eta_subset, mollify,
    Callable2D, Product2D, jet1_mul,
)
from .report import Check, Report

__all__ = [
    "BumpProfile", "build_bump", "CutoffFactor1D", "CertifiedCutoff", "build_cutoff",
    "closed_form_constants", "axis_nodes", "frame_grid", "plateau_field", "Structure",
    "build_structure_recipe", "verify_structure",
]


# ---------------------------------------------------------------------------
# bump profile


def _g_jet(x, order):
    """``exp(-1/x^2)`` and derivatives for ``x > 0`` (zero elsewhere)."""
    x = np.asarray(x, dtype=float)
    m = x > 0.03  # below this every term is an exact zero in double precision
    xs = np.where(m, x, 1.0)
    e = np.where(m, np.exp(-1.0 / xs ** 2), 0.0)
    vals = [e, 2 * xs ** -3 * e, (4 * xs ** -6 - 6 * xs ** -4) * e,
            (8 * xs ** -9 - 36 * xs ** -7 + 24 * xs ** -5) * e]
    return np.stack(vals[:order + 1])


def _psi_jet(y, order):
    """``exp(-1/y)`` and derivatives for ``y > 0`` (zero elsewhere)."""
    y = np.asarray(y, dtype=float)
    m = y > 1e-3
    ys = np.where(m, y, 1.0)
    e = np.where(m, np.exp(-1.0 / ys), 0.0)
    vals = [e, ys ** -2 * e, (ys ** -4 - 2 * ys ** -3) * e,
            (ys ** -6 - 6 * ys ** -5 + 6 * ys ** -4) * e]
    return np.stack(vals[:order + 1])


def smooth_step_jet(y, order, alpha=1.0, beta=1.0):
    """Smooth step ``S(y) = A / (A + B)`` with ``A = psi(alpha y)``, ``B = psi(beta (1-y))``.

    ``S = 0`` for ``y <= 0`` and ``S = 1`` for ``y >= 1``.
    """
    y = np.asarray(y, dtype=float)
    A = _psi_jet(alpha * y, order) * (alpha ** np.arange(order + 1)).reshape((-1,) + (1,) * y.ndim)
    B = _psi_jet(beta * (1 - y), order) * ((-beta) ** np.arange(order + 1)).reshape((-1,) + (1,) * y.ndim)
    D = A + B
    # quotient rule through the jet of 1/D
    inv = np.zeros_like(D)
    d0 = D[0]
    inv[0] = 1 / d0
    if order >= 1:
        inv[1] = -D[1] / d0 ** 2
    if order >= 2:
        inv[2] = 2 * D[1] ** 2 / d0 ** 3 - D[2] / d0 ** 2
    if order >= 3:
        inv[3] = -6 * D[1] ** 3 / d0 ** 4 + 6 * D[1] * D[2] / d0 ** 3 - D[3] / d0 ** 2
    return jet1_mul(A, inv)


class BumpProfile(ScalarField1D):
    """The profile ``h`` with a fixed blend on ``[1/2, 1)``.

    On ``[x0, x0 + w]`` the profile is ``h = g + sigma (1 - g)`` with
    ``g = exp(-1/x^2)`` and ``sigma(x) = S((x - x0)/w)`` a smooth step.  Both
    terms of ``h' = g'(1 - sigma) + sigma'(1 - g)`` are non-negative, so
    ``h`` is nondecreasing by construction.

    Parameters
    ----------
    x0, w : float
        Start and width of the blend; ``x0 >= 1/2`` and ``x0 + w <= 1``.
    alpha, beta : float
        Shape parameters of the smooth step.
    """

    def __init__(self, x0: float = 0.5, w: float = 0.45, alpha: float = 0.75, beta: float = 1.0):
        if x0 < 0.5 or x0 + w > 1.0:
            raise PreconditionError("blend must sit inside [1/2, 1]")
        self.x0, self.w, self.alpha, self.beta = float(x0), float(w), float(alpha), float(beta)
        self.breakpoints = (0.0, self.x0, self.x0 + self.w)
        self.C_h = float("nan")

    def derivs(self, x, order=2):
        x = np.asarray(x, dtype=float)
        g = _g_jet(x, order)
        y = (x - self.x0) / self.w
        sig = smooth_step_jet(np.clip(y, -1.0, 2.0), order, self.alpha, self.beta)
        sig = sig * (self.w ** -np.arange(order + 1.0)).reshape((-1,) + (1,) * x.ndim)
        one_minus_g = -g
        one_minus_g[0] = 1 - g[0]
        one_minus_s = -sig
        one_minus_s[0] = 1 - sig[0]
        blend = -jet1_mul(one_minus_s, one_minus_g)
        blend[0] += 1.0
        out = np.where(x <= self.x0, g, blend)
        out = np.where(x >= self.x0 + self.w, 0.0, out)
        out[0] = np.where(x >= self.x0 + self.w, 1.0, out[0])
        out = np.where(x <= 0, 0.0, out)
        return out

    def log_derivs(self, x):
        """``(log h, h'/h, h''/h)``; analytic on ``(0, x0]`` where ``h`` may underflow."""
        x = np.asarray(x, dtype=float)
        d = self.derivs(x, 2)
        with np.errstate(divide="ignore", invalid="ignore"):
            lg = np.log(d[0])
            r1 = d[1] / d[0]
            r2 = d[2] / d[0]
            xs = np.where(x > 0, x, 1.0)
            left = (x > 0) & (x <= self.x0)
            lg = np.where(left, -1.0 / xs ** 2, lg)
            r1 = np.where(left, 2.0 / xs ** 3, r1)
            r2 = np.where(left, 4.0 / xs ** 6 - 6.0 / xs ** 4, r2)
        return lg, r1, r2

    def describe(self) -> dict:
        return {"x0": self.x0, "w": self.w, "alpha": self.alpha, "beta": self.beta, "C_h": self.C_h}


def build_bump(grid: int = 100_000, **blend) -> BumpProfile:
    """Construct ``h`` and compute ``C_h = 1.05 max(|h|, |h'|, |h''|)`` on a grid."""
    h = BumpProfile(**blend)
    x = np.linspace(0.0, 1.0, grid)
    d = h.derivs(x, 2)
    h.C_h = 1.05 * float(np.abs(d).max())
    return h


_DEFAULT_BUMP: BumpProfile | None = None


def default_bump() -> BumpProfile:
    global _DEFAULT_BUMP
    if _DEFAULT_BUMP is None:
        _DEFAULT_BUMP = build_bump()
    return _DEFAULT_BUMP


class CutoffFactor1D(ScalarField1D):
    """``h((x - a)/eta) * h((b - x)/eta)``, equal to 1 on ``[a + eta, b - eta]``."""

    def __init__(self, a: float, b: float, eta: float, bump: BumpProfile | None = None):
        self.a, self.b, self.eta = float(a), float(b), float(eta)
        self.h = bump or default_bump()
        self.left = Affine1D(self.h, 1 / self.eta, -self.a / self.eta)
        self.right = Affine1D(self.h, -1 / self.eta, self.b / self.eta)
        self.breakpoints = tuple(sorted({self.a, self.b} | set(self.left.breakpoints)
                                        | set(self.right.breakpoints)))

    def derivs(self, x, order=2):
        x = np.asarray(x, dtype=float)
        return jet1_mul(self.left.derivs(x, order), self.right.derivs(x, order))

    def log_derivs(self, x):
        l1, p1, q1 = self.left.log_derivs(x)
        l2, p2, q2 = self.right.log_derivs(x)
        return l1 + l2, p1 + p2, q1 + q2 + 2 * p1 * p2


# ---------------------------------------------------------------------------
# grids


def axis_nodes(lo: float, hi: float, n: int, band: float) -> np.ndarray:
    """Open-interval nodes clustered in the two edge bands of width ``band``.

    A quarter of the nodes go into each band (quadratically graded toward
    the edge) and the rest are spread uniformly in between.
    """
    band = min(band, 0.5 * (hi - lo))
    ne = max(n // 4, 2)
    nm = max(n - 2 * ne, 2)
    s = ((np.arange(ne) + 0.5) / ne) ** 2
    left = lo + band * s
    right = hi - band * s[::-1]
    mid = np.linspace(lo + band, hi - band, nm + 2)[1:-1]
    return np.unique(np.concatenate([left, mid, right]))


def frame_grid(rect: Rect, n: int, band: float, inner_margin: float | None = None):
    """Tensor grid of ``rect`` refined near the edges.

    If ``inner_margin`` is given, only points outside ``U_{inner_margin}``
    are returned (the frame).
    """
    g1 = axis_nodes(rect.a1, rect.b1, n, band)
    g2 = axis_nodes(rect.a2, rect.b2, n, band)
    X1, X2 = np.meshgrid(g1, g2, indexing="ij")
    if inner_margin is not None:
        d = np.minimum.reduce([X1 - rect.a1, rect.b1 - X1, X2 - rect.a2, rect.b2 - X2])
        m = d <= inner_margin
        return X1[m], X2[m]
    return X1.ravel(), X2.ravel()


# ---------------------------------------------------------------------------
# certified cutoff


def closed_form_constants(C_h: float, a: float, eta: float) -> dict:
    """Constants ``c'``, ``c`` and the internal ``m``, ``M``, ``eta''``.

    ``c`` underflows in double precision for any admissible ``C_h``; its
    natural logarithm and a decimal rendering are reported alongside.
    """
    amin = min(1.0, a)
    a2 = min(1.0, a * a)
    c_prime = (amin / 3.0) * min(1.0, math.exp(-9.0 / (2.0 * a2)) / (2.0 * math.sqrt(C_h)))
    log_c = -8.0 / c_prime ** 2
    c_dec = Decimal(log_c).exp(Context(prec=30, Emin=MIN_EMIN, Emax=MAX_EMAX))
    return {
        "c_prime": c_prime,
        "log_c": log_c,
        "c": math.exp(log_c),
        "c_decimal": f"{c_dec:.6e}",
        "m": math.exp(-9.0 / a2),
        "M": 3.0 * C_h / (eta ** 2 * a2),
        "eta_double_prime": (eta / 3.0) * amin,
    }


@dataclass
class CertifiedCutoff:
    """Cutoff ``f`` on ``rect`` with its certified constants.

    ``c_prime`` and ``c`` follow the closed-form constants; ``c_prime_cert``
    and ``c_cert`` are the sharper constants observed on the certification
    grid (``Lf > 0`` off ``U_{c'_cert eta}``, ``f > c_cert`` on
    ``U_{c'_cert eta / 2}``).
    """

    f: Separable2D
    rect: Rect
    eta: float
    a: float
    c_prime: float
    c: float
    log_c: float
    eta_prime: float
    eta_double_prime: float
    c_prime_cert: float
    c_cert: float
    bump: BumpProfile
    diagnostics: dict = field(default_factory=dict)
    report: Report = field(default_factory=Report)

    def summary(self) -> dict:
        return {
            "rect": self.rect.as_list(), "eta": self.eta, "a": self.a,
            "c_prime": self.c_prime, "c": self.c, "log_c": self.log_c,
            "c_decimal": self.diagnostics.get("c_decimal"),
            "eta_prime": self.eta_prime, "eta_double_prime": self.eta_double_prime,
            "c_prime_cert": self.c_prime_cert, "c_cert": self.c_cert,
            "C_h": self.bump.C_h, "m": self.diagnostics.get("m"), "M": self.diagnostics.get("M"),
        }


def cutoff_field(rect: Rect, eta: float, bump: BumpProfile | None = None, scale: float = 1.0) -> Separable2D:
    bump = bump or default_bump()
    return Separable2D(CutoffFactor1D(rect.a1, rect.b1, eta, bump),
                       CutoffFactor1D(rect.a2, rect.b2, eta, bump), support=rect, scale=scale)


def _argmin_point(vals, X1, X2):
    i = int(np.argmin(vals))
    return (float(np.ravel(X1)[i]), float(np.ravel(X2)[i]))


def build_cutoff(rect: Rect, eta: float, a: float | None = None, grid: int = 200,
                 bump: BumpProfile | None = None, raise_on_fail: bool = True) -> CertifiedCutoff:
    """Cutoff for ``rect`` with margin ``eta``, certified on grids.

    Parameters
    ----------
    rect : Rect
    eta : float
        Margin: ``f = 1`` on ``U_eta``; needs ``eta < min side / 2``.
    a : float, optional
        Lower bound on the distance to the axis (defaults to ``rect.a2``).
    grid : int
        Points per axis of every certification grid (at least 200).
    """
    if a is None:
        a = rect.a2
    if not (0 < eta < 1) or eta >= 0.5 * rect.min_side:
        raise PreconditionError(f"eta={eta} must lie in (0, 1) and below half the shortest side")
    if not (0 < a <= rect.a2):
        raise PreconditionError("a must be positive and at most the distance to the axis")
    bump = bump or default_bump()
    consts = closed_form_constants(bump.C_h, a, eta)
    cp = consts["c_prime"]
    f = cutoff_field(rect, eta, bump)
    rep = Report()

    # f = 1 on U_eta
    inner = eta_subset(rect, eta)
    X1, X2 = frame_grid(inner, grid, 0.05 * inner.min_side)
    dev = np.abs(f(X1, X2) - 1.0)
    rep.add(Check("f_equals_one_on_U_eta", "Lemma 4.2: f = 1 on U_eta", bool(dev.max() == 0.0),
                  -float(dev.max()), _argmin_point(-dev, X1, X2)))

    # range [0, 1], including points outside the rectangle
    X1, X2 = frame_grid(rect, grid, eta)
    pad = 0.25 * rect.min_side
    outside = np.linspace(rect.a1 - pad, rect.b1 + pad, grid)
    O1, O2 = np.meshgrid(outside, [max(rect.a2 - pad, 0.5 * rect.a2), rect.b2 + pad])
    Y1 = np.concatenate([X1, O1.ravel(), np.full(grid, rect.a1 - pad * 0.5)])
    Y2 = np.concatenate([X2, O2.ravel(), np.linspace(rect.a2, rect.b2, grid)])
    vals = f(Y1, Y2)
    margin = float(min(vals.min(), 1.0 - vals.max()))
    rep.add(Check("f_in_unit_interval", "Lemma 4.2: f takes values in [0, 1]", margin >= 0.0, margin,
                  _argmin_point(np.minimum(vals, 1 - vals), Y1, Y2)))

    # f > c on U_{c' eta / 2}, in log space
    half = eta_subset(rect, 0.5 * cp * eta)
    X1, X2 = frame_grid(half, grid, eta)
    logf = f.log_ratios(X1, X2)[0]
    lm = logf - consts["log_c"]
    rep.add(Check("f_above_c", "Lemma 4.2: f > c on U_{c'eta/2} (log f - log c)", bool(lm.min() > 0),
                  float(lm.min()), _argmin_point(lm, X1, X2)))

    # Lf > 0 on the frame U \ U_{c' eta}
    X1, X2 = frame_grid(rect, grid, cp * eta, inner_margin=cp * eta)
    lr = f.L_ratio(X1, X2)
    rep.add(Check("Lf_positive_frame", "Lemma 4.2: Lf > 0 on U minus U_{c'eta} (min Lf/f)",
                  bool(lr.min() > 0), float(lr.min()), _argmin_point(lr, X1, X2)))

    # appendix claim g2 > f2''/4 > 0 on the eta''-strips of the x2 factor
    e2 = consts["eta_double_prime"]
    s = np.linspace(0, e2, 2 * grid + 2)[1:-1]
    x2 = np.concatenate([rect.a2 + s, rect.b2 - s])
    _, r1, r2 = f.g2.log_derivs(x2)
    g_ratio = r2 + r1 / x2 - 1 / x2 ** 2
    claim = np.minimum(g_ratio - r2 / 4, r2 / 4)
    rep.add(Check("appendix_g2_claim", "Appendix: g2 > f2''/4 > 0 near the x2 edges (ratios to f2)",
                  bool(claim.min() > 0), float(claim.min()), (float("nan"), float(x2[np.argmin(claim)]))))

    # corner positivity on the eta''-corners
    c1 = np.linspace(0, e2, grid + 2)[1:-1]
    cx, cy = [], []
    for sx in (rect.a1 + c1, rect.b1 - c1):
        for sy in (rect.a2 + c1, rect.b2 - c1):
            A, B = np.meshgrid(sx, sy, indexing="ij")
            cx.append(A.ravel())
            cy.append(B.ravel())
    cx = np.concatenate(cx)
    cy = np.concatenate(cy)
    lr = f.L_ratio(cx, cy)
    rep.add(Check("Lf_positive_corners", "Appendix: Lf > 0 on the eta''-corners", bool(lr.min() > 0),
                  float(lr.min()), _argmin_point(lr, cx, cy)))

    # sharper constants seen on a fine grid: where can Lf be non-positive?
    X1, X2 = frame_grid(rect, 2 * grid, eta)
    lr = f.L_ratio(X1, X2)
    dist = np.minimum.reduce([X1 - rect.a1, rect.b1 - X1, X2 - rect.a2, rect.b2 - X2])
    bad = lr <= 0
    cp_cert = float(0.95 * dist[bad].min() / eta) if np.any(bad) else 1.0
    cp_cert = min(cp_cert, 1.0)
    half_c = eta_subset(rect, 0.5 * cp_cert * eta)
    H1, H2 = frame_grid(half_c, grid, eta)
    c_cert = float(np.exp(f.log_ratios(H1, H2)[0].min()) * 0.999)
    # Lf > 0 off U_{c'_cert eta}, on its own grid
    F1, F2 = frame_grid(rect, grid, cp_cert * eta, inner_margin=cp_cert * eta)
    lr2 = f.L_ratio(F1, F2)
    rep.add(Check("Lf_positive_frame_certified", "Lemma 4.2 with grid constant c'_cert",
                  bool(lr2.min() > 0), float(lr2.min()), _argmin_point(lr2, F1, F2)))

    cut = CertifiedCutoff(
        f=f, rect=rect, eta=eta, a=a, c_prime=cp, c=consts["c"], log_c=consts["log_c"],
        eta_prime=cp * eta, eta_double_prime=e2, c_prime_cert=cp_cert, c_cert=c_cert, bump=bump,
        diagnostics=consts, report=rep,
    )
    if raise_on_fail and not rep.passed:
        bad = rep.first_failure()
        raise CertificationError(bad.name, bad.witness, bad.margin)
    return cut


# ---------------------------------------------------------------------------
# structures


def plateau_factor(a: float, b: float, inner: float, outer: float, bump: BumpProfile | None = None):
    """1D ramp: 0 within ``outer`` of the ends, 1 beyond ``inner`` from them."""
    bump = bump or default_bump()
    width = inner - outer
    left = Affine1D(bump, 1 / width, -(a + outer) / width)
    right = Affine1D(bump, -1 / width, (b - outer) / width)
    return Product1D(left, right)


def plateau_field(rect: Rect, inner: float, outer: float, bump: BumpProfile | None = None) -> Separable2D:
    """``phi = 1`` on ``U_inner`` and ``supp phi`` inside the closure of ``U_outer``."""
    return Separable2D(plateau_factor(rect.a1, rect.b1, inner, outer, bump),
                       plateau_factor(rect.a2, rect.b2, inner, outer, bump),
                       support=eta_subset(rect, outer))


@dataclass
class Structure:
    """Triple ``(v, f, phi)`` on one rectangle or a disjoint union of rectangles."""

    rects: tuple
    v: PlanarVectorField
    f: ScalarField2D
    phi: ScalarField2D
    band: float
    report: Report | None = None
    cutoffs: tuple = ()

    @property
    def rect(self) -> Rect:
        return self.rects[0]

    def scaled_v(self, a: float) -> "Structure":
        return Structure(self.rects, self.v.scaled(a), self.f, self.phi, self.band, None, self.cutoffs)

    def with_f(self, f: ScalarField2D) -> "Structure":
        return Structure(self.rects, self.v, f, self.phi, self.band, None, self.cutoffs)

    def __add__(self, other: "Structure") -> "Structure":
        for r in self.rects:
            for q in other.rects:
                if not r.disjoint(q):
                    raise PreconditionError("structures must live on disjoint rectangles")
        return Structure(self.rects + other.rects, self.v + other.v, Sum2D(self.f, other.f),
                         Sum2D(self.phi, other.phi), min(self.band, other.band), None,
                         self.cutoffs + other.cutoffs)


def _inv_x2():
    def fn(x1, x2):
        return np.stack([1 / x2, 0 * x2, -1 / x2 ** 2, 0 * x2, 0 * x2, 2 / x2 ** 3])
    return Callable2D(fn)


def _affine2(c0, c1, c2):
    def fn(x1, x2):
        z = 0 * x1
        return np.stack([c0 + c1 * x1 + c2 * x2, z + c1, z + c2, z, z, z])
    return Callable2D(fn)


def build_structure_recipe(rect: Rect, eta: float, a: float | None = None, mollify_width: float = 0.25,
                           grid: int = 200, bump: BumpProfile | None = None) -> Structure:
    """Structure from a mollified rotating annulus inside ``U_eta``.

    The annulus ``1 < |y| < 2`` is rescaled by ``s`` and centred in ``rect``.
    Its mollified indicator ``B(r)`` (radius ``mollify_width``) multiplies the
    tangential field ``(-(x2 - c2), x1 - c1)``, and dividing by ``s x2``
    gives ``v`` with ``div(x2 v) = 0`` identically.
    """
    if a is None:
        a = rect.a2
    room = 0.5 * rect.min_side - eta
    outer = 2.0 + mollify_width
    s = 0.9 * room / outer
    if room <= 0 or s <= 1e-6 * rect.min_side:
        raise PreconditionError("rectangle too small for the annulus inside U_eta")
    cut = build_cutoff(rect, eta, a, grid=grid, bump=bump)
    bump = cut.bump
    c1, c2 = rect.center
    B = mollify(Indicator1D(1.0, 2.0), mollify_width)
    R = Radial2D(B, (c1, c2), s, r_min=1.0 - mollify_width,
                 support=Rect(c1 - outer * s, c1 + outer * s, c2 - outer * s, c2 + outer * s))
    inv = _inv_x2()
    v1 = Product2D(R, _affine2(c2 / s, 0.0, -1.0 / s), inv)
    v2 = Product2D(R, _affine2(-c1 / s, 1.0 / s, 0.0), inv)
    v = PlanarVectorField(v1, v2)
    # scale f above |v| with a 25% margin
    g1 = np.linspace(R.support.a1, R.support.b1, grid)
    g2 = np.linspace(R.support.a2, R.support.b2, grid)
    G1, G2 = np.meshgrid(g1, g2, indexing="ij")
    vmax = float(np.hypot(v1(G1, G2), v2(G1, G2)).max())
    K = max(1.0, 1.25 * vmax)
    f = cut.f.with_scale(K)
    inner = cut.c_prime_cert * eta
    phi = plateau_field(rect, inner, 0.55 * inner, bump)
    st = Structure((rect,), v, f, phi, band=eta, cutoffs=(cut,))
    st.report = verify_structure(st, grid)
    if not st.report.passed:
        bad = st.report.first_failure()
        raise CertificationError(bad.name, bad.witness, bad.margin)
    return st


def verify_structure(s: Structure, grid: int = 200) -> Report:
    """Grid certification of every structure clause; failures become report entries."""
    rep = Report()
    X1s, X2s = [], []
    for r in s.rects:
        a, b = frame_grid(r, grid, s.band)
        X1s.append(a)
        X2s.append(b)
    X1 = np.concatenate(X1s)
    X2 = np.concatenate(X2s)
    fj = s.f.jet(X1, X2)
    fv = fj[0]
    lr = s.f.L_ratio(X1, X2)
    vv = s.v(X1, X2)
    vn = np.hypot(vv[0], vv[1])
    phi = s.phi(X1, X2)

    # support: f > 0 inside (log-space aware), f = 0 on and beyond the boundary
    pos = np.isfinite(lr) | (fv > 0)
    outside_pts = []
    for r in s.rects:
        t = np.linspace(r.a1, r.b1, grid)
        u = np.linspace(r.a2, r.b2, grid)
        outside_pts.append(np.stack([np.concatenate([t, t, np.full(grid, r.a1), np.full(grid, r.b1)]),
                                     np.concatenate([np.full(grid, r.a2), np.full(grid, r.b2), u, u])]))
    B = np.concatenate(outside_pts, axis=1)
    fb = np.abs(s.f(B[0], B[1]))
    ok = bool(pos.all() and fb.max() == 0.0)
    rep.add(Check("support", "structure: supp f equals the closed rectangle", ok,
                  float(-fb.max()) if pos.all() else -1.0, None))

    # f > |v| on supp v, f > 0 elsewhere
    on_v = vn > 0
    if np.any(on_v):
        gap = fv[on_v] - vn[on_v]
        i = int(np.argmin(gap))
        rep.add(Check("f_exceeds_v", "structure: f > |v|", bool(gap.min() > 0), float(gap.min()),
                      (float(X1[on_v][i]), float(X2[on_v][i]))))
    else:
        rep.add(Check("f_exceeds_v", "structure: f > |v|", bool(pos.all()), 0.0, None))

    # div(x2 v) = 0
    # exact zero up to cancellation among terms of size |x2 grad v| + |v|
    a, b = s.v.jets(X1, X2)
    size = np.abs(X2 * a[1]) + np.abs(X2 * b[2]) + np.abs(b[0])
    dv = np.abs(X2 * (a[1] + b[2]) + b[0])
    tol = 1e-10 * max(1.0, float(size.max()))
    rep.add(Check("divergence_free", "structure: div(x2 v) = 0", bool(dv.max() <= tol),
                  float(tol - dv.max()), _argmin_point(-dv, X1, X2), {"tolerance": tol}))

    # Lf > 0 off the plateau
    off = phi < 1.0
    if np.any(off):
        m = lr[off]
        i = int(np.argmin(m))
        rep.add(Check("Lf_positive_off_plateau", "structure: Lf > 0 in U minus {phi = 1} (min Lf/f)",
                      bool(m.min() > 0), float(m.min()), (float(X1[off][i]), float(X2[off][i]))))

    # supp v inside {phi = 1}
    if np.any(on_v):
        gap = phi[on_v] - 1.0
        i = int(np.argmin(gap))
        rep.add(Check("v_inside_plateau", "structure: supp v inside {phi = 1}", bool(gap.min() >= 0),
                      float(gap.min()), (float(X1[on_v][i]), float(X2[on_v][i]))))
    rep.meta.update({"grid": grid, "points": int(X1.size)})
    return rep
