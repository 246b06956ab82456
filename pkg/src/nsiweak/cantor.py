"""Cantor-set geometry, switching schedules and rescaled towers.

The similarity maps are

    Gamma_n(x) = tau x + z + (n - 1) (X, 0, 0),        n = 1..M,

and for a multi-index ``m = (m_1, ..., m_j)``

    pi_m(x)    = tau^j x + z1 (1 - tau^j) / (1 - tau) + X sum_k tau^(k-1) (m_k - 1),
    Gamma_m(x) = (pi_m(x1), gamma^j(x2), tau^j x3),    gamma(x) = tau x + z2.

All geometry is done in rational arithmetic (:class:`fractions.Fraction`)
so that nesting and disjointness of the level boxes are exact set
statements. Floating point enters only through norms and dimension fits.

A tower rescales one time-dependent base field onto the level boxes,

    u^(j)(x, t) = tau^-j sum_m u_base(Gamma_m^-1(x), tau^-2j (t - t_j)),

with ``t_j = T sum_{k<j} tau^2k``. The growth of the base needed for the
switches ``|u^(j)(t_j)| <= |u^(j-1)(t_j)|`` is an assumption. It is checked
on a grid and reported as a diagnostic, never enforced.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import stats

from .axisym import lp_power
from .cutoff import Structure, build_cutoff, default_bump, frame_grid, plateau_field, verify_structure
from .errors import CertificationError, PreconditionError
from .fields import Affine1D, Constant1D, PlanarVectorField, Rect, ScalarField2D, Separable2D, Zero2D
from .report import Check, Report
from .verify import SumField, TimeDependentField, nsi_residual

__all__ = [
    "rational", "Box3", "CantorParams", "MultiIndex", "validate_params", "apply_map", "map_box",
    "LevelSet", "level_boxes", "switching_schedule", "SwitchTower", "Rescaled2D", "RescaledField",
    "Tower", "rescale_tower", "placeholder_params", "placeholder_base", "DimensionFit",
    "box_dimension", "cantor_points", "CompositionPlan", "compose_with_profile",
]

# switch identity tolerance, relative to the field size
SWITCH_IDENTITY_TOL = 1e-10
# norm identity tolerance for the rescaled levels
NORM_IDENTITY_TOL = 1e-6


def rational(x) -> Fraction:
    """Exact rational from an int, Fraction, ``"p/q"`` or decimal string, or float.

    Floats go through their shortest decimal representation, so ``0.6``
    becomes ``3/5`` rather than its binary expansion.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, (float, np.floating)):
        if not math.isfinite(x):
            raise PreconditionError(f"non-finite parameter {x!r}")
        return Fraction(repr(float(x)))
    if isinstance(x, str):
        return Fraction(x.strip())
    raise TypeError(f"cannot read {x!r} as a rational")


# ---------------------------------------------------------------------------
# boxes


@dataclass(frozen=True)
class Box3:
    """Closed box ``[lo_0, hi_0] x [lo_1, hi_1] x [lo_2, hi_2]`` with rational corners."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(rational(a) for a in self.lo)
        hi = tuple(rational(b) for b in self.hi)
        if len(lo) != 3 or len(hi) != 3:
            raise PreconditionError("a box needs three intervals")
        if any(b < a for a, b in zip(lo, hi)):
            raise PreconditionError("box with hi < lo")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def from_intervals(cls, *intervals) -> "Box3":
        return cls(tuple(i[0] for i in intervals), tuple(i[1] for i in intervals))

    @classmethod
    def of_rect(cls, r: Rect) -> "Box3":
        """Bounding box of the solid of revolution of a planar rectangle."""
        return cls((r.a1, -r.b2, -r.b2), (r.b1, r.b2, r.b2))

    @property
    def sides(self) -> tuple:
        return tuple(b - a for a, b in zip(self.lo, self.hi))

    @property
    def center(self) -> tuple:
        return tuple((a + b) / 2 for a, b in zip(self.lo, self.hi))

    def contains(self, other: "Box3") -> bool:
        return all(a <= c and d <= b for a, b, c, d in zip(self.lo, self.hi, other.lo, other.hi))

    def contains_point(self, x) -> bool:
        return all(a <= rational(c) <= b for a, b, c in zip(self.lo, self.hi, x))

    def gap_sq(self, other: "Box3") -> Fraction:
        """Squared Euclidean distance between the two closed boxes."""
        out = Fraction(0)
        for a, b, c, d in zip(self.lo, self.hi, other.lo, other.hi):
            g = max(c - b, a - d, Fraction(0))
            out += g * g
        return out

    def disjoint(self, other: "Box3") -> bool:
        return self.gap_sq(other) > 0

    def hull(self, other: "Box3") -> "Box3":
        return Box3(tuple(map(min, self.lo, other.lo)), tuple(map(max, self.hi, other.hi)))

    def diam(self) -> float:
        return math.sqrt(sum(float(s) ** 2 for s in self.sides))

    def as_floats(self) -> list:
        return [[float(a), float(b)] for a, b in zip(self.lo, self.hi)]

    def to_dict(self) -> dict:
        return {"lo": [str(a) for a in self.lo], "hi": [str(b) for b in self.hi],
                "float": self.as_floats()}


# ---------------------------------------------------------------------------
# parameters and maps


@dataclass(frozen=True)
class CantorParams:
    """Parameters ``tau, M, xi, z, X, G`` of the Cantor construction.

    ``zeta_sep`` is the required gap between consecutive first-level images;
    ``None`` means the gap actually realized by ``G`` is used.
    """

    tau: Fraction
    M: int
    xi: Fraction
    z: tuple
    X: Fraction
    G: Box3
    zeta_sep: Fraction | None = None

    def __post_init__(self):
        object.__setattr__(self, "tau", rational(self.tau))
        object.__setattr__(self, "xi", rational(self.xi))
        object.__setattr__(self, "X", rational(self.X))
        z = tuple(rational(c) for c in self.z)
        if len(z) == 2:
            z = z + (Fraction(0),)
        if len(z) != 3 or z[2] != 0:
            raise PreconditionError("z must be (z1, z2, 0)")
        object.__setattr__(self, "z", z)
        if self.zeta_sep is not None:
            object.__setattr__(self, "zeta_sep", rational(self.zeta_sep))
        if int(self.M) != self.M or self.M < 1:
            raise PreconditionError("M must be a positive integer")
        object.__setattr__(self, "M", int(self.M))

    @property
    def ifs_dimension(self) -> float:
        """``-log M / log tau``, the dimension of the 1D Cantor set."""
        return math.log(self.M) / -math.log(float(self.tau))

    def to_dict(self) -> dict:
        return {"tau": str(self.tau), "M": self.M, "xi": str(self.xi), "z": [str(c) for c in self.z],
                "X": str(self.X), "G": self.G.to_dict(),
                "zeta_sep": None if self.zeta_sep is None else str(self.zeta_sep)}


def placeholder_params(xi="3/5") -> CantorParams:
    """Documented placeholder: middle-thirds geometry on ``G = [0,1] x [-1,1]^2``."""
    return CantorParams(Fraction(1, 3), 2, rational(xi), (0, 0, 0), Fraction(2, 3),
                        Box3((0, -1, -1), (1, 1, 1)), Fraction(1, 3))


@dataclass(frozen=True)
class MultiIndex:
    """``m = (m_1, ..., m_j)``; the empty index is ``m_0`` with ``pi_{m_0} = id``."""

    entries: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(int(e) for e in self.entries))

    @property
    def j(self) -> int:
        return len(self.entries)

    @property
    def parent(self) -> "MultiIndex":
        if not self.entries:
            raise PreconditionError("m_0 has no parent")
        return MultiIndex(self.entries[:-1])

    def check(self, M: int) -> None:
        if any(not 1 <= e <= M for e in self.entries):
            raise PreconditionError(f"multi-index {self.entries} has entries outside 1..{M}")

    @staticmethod
    def all(M: int, j: int):
        """The ``M^j`` indices of ``M(j)`` in lexicographic order."""
        return [MultiIndex(e) for e in itertools.product(range(1, M + 1), repeat=j)]


def _offset(p: CantorParams, m: MultiIndex) -> Fraction:
    """Constant term of ``pi_m``."""
    tau, j = p.tau, m.j
    geo = sum((tau ** k for k in range(j)), Fraction(0))  # (1 - tau^j) / (1 - tau)
    return p.z[0] * geo + p.X * sum((tau ** k * (e - 1) for k, e in enumerate(m.entries)), Fraction(0))


def _gamma_offset(p: CantorParams, j: int) -> Fraction:
    return p.z[1] * sum((p.tau ** k for k in range(j)), Fraction(0))


def apply_map(p: CantorParams, m: MultiIndex, x):
    """``pi_m(x)`` for a scalar ``x`` or ``Gamma_m(x)`` for a 3-vector.

    Rational inputs give exact rational outputs.
    """
    m.check(p.M)
    s = p.tau ** m.j
    if np.ndim(x) == 0:
        x = x if isinstance(x, float) else rational(x)
        return s * x + (float(_offset(p, m)) if isinstance(x, float) else _offset(p, m))
    x1, x2, x3 = x
    if any(isinstance(c, float) for c in x):
        sf = float(s)
        return (sf * x1 + float(_offset(p, m)), sf * x2 + float(_gamma_offset(p, m.j)), sf * x3)
    x1, x2, x3 = (rational(c) for c in x)
    return (s * x1 + _offset(p, m), s * x2 + _gamma_offset(p, m.j), s * x3)


def compose_betas(p: CantorParams, m: MultiIndex, x):
    """``beta_{m_1} o ... o beta_{m_j}`` evaluated map by map (the composition oracle)."""
    y = rational(x)
    for e in reversed(m.entries):
        y = p.tau * y + p.z[0] + (e - 1) * p.X
    return y


def map_box(p: CantorParams, m: MultiIndex, box: Box3) -> Box3:
    """``Gamma_m(box)``; ``Gamma_m`` is increasing in each coordinate."""
    return Box3(apply_map(p, m, box.lo), apply_map(p, m, box.hi))


def validate_params(p: CantorParams) -> Report:
    """Check the scalar and geometric constraints exactly.

    Failures are report entries. ``meta`` carries the dimension lower bound
    ``xi``, the IFS dimension and the bounds ``xi <= d_H(S') <= 1``.
    """
    rep = Report()
    tau, M, xi = p.tau, p.M, p.xi
    ok_tau = 0 < tau < 1
    rep.add(Check("tau_in_unit_interval", "Section 5: tau in (0, 1)", ok_tau, float(min(tau, 1 - tau)), None))
    ok_xi = 0 < xi < 1
    rep.add(Check("xi_in_unit_interval", "Section 5: xi in (0, 1)", ok_xi, float(min(xi, 1 - xi)), None))
    if ok_tau and xi > 0:
        # tau^xi M >= 1  <=>  a^r M^s >= b^r  for tau = a/b, xi = r/s
        a, b = tau.numerator, tau.denominator
        r, s = xi.numerator, xi.denominator
        holds = a ** r * M ** s >= b ** r
        rep.add(Check("tau_xi_M", "Section 5: tau^xi M >= 1", holds,
                      float(tau) ** float(xi) * M - 1.0, None, {"tau^xi*M": float(tau) ** float(xi) * M}))
    else:
        rep.add(Check("tau_xi_M", "Section 5: tau^xi M >= 1", False, math.nan, None))
    rep.add(Check("tau_M", "Section 5: tau M < 1", tau * M < 1, float(1 - tau * M), None))
    rep.add(Check("z_in_G", "Section 5: z in G", p.G.contains_point(p.z), 0.0, tuple(float(c) for c in p.z)))
    if ok_tau:
        imgs = [map_box(p, MultiIndex((n,)), p.G) for n in range(1, M + 1)]
        gaps = [imgs[i].gap_sq(imgs[k]) for i in range(M) for k in range(i + 1, M)]
        min_gap = min(gaps) if gaps else None
        rep.add(Check("images_disjoint", "Section 5: Gamma_n(G) pairwise disjoint",
                      min_gap is None or min_gap > 0, math.inf if min_gap is None else math.sqrt(min_gap), None))
        hull = imgs[0]
        for b in imgs[1:]:
            hull = hull.hull(b)
        rep.add(Check("hull_inside_G", "Section 5: conv{Gamma_n(G)} inside G", p.G.contains(hull), 0.0, None))
        if p.zeta_sep is not None and min_gap is not None:
            rep.add(Check("separation", "Section 5: gap between consecutive images >= zeta",
                          min_gap >= p.zeta_sep ** 2, math.sqrt(min_gap) - float(p.zeta_sep), None))
        rep.meta["zeta_realized"] = None if min_gap is None else math.sqrt(min_gap)
    rep.meta.update({"xi_lower_bound": float(xi), "ifs_dimension": p.ifs_dimension if ok_tau and M > 1 else 0.0,
                     "hausdorff_bounds": [float(xi), 1.0]})
    return rep


# ---------------------------------------------------------------------------
# level sets


@dataclass
class LevelSet:
    j: int
    indices: list
    boxes: list
    report: Report

    def to_dict(self) -> dict:
        return {"j": self.j, "count": len(self.boxes), "passed": self.report.passed,
                "boxes": [{"m": list(m.entries), **b.to_dict()} for m, b in zip(self.indices, self.boxes)]}


def _min_gap_sq(boxes) -> tuple:
    """Smallest squared gap between distinct boxes, by a sweep along ``x1``."""
    order = sorted(range(len(boxes)), key=lambda i: boxes[i].lo[0])
    best, pair = None, None
    for a, i in enumerate(order):
        for k in order[a + 1:]:
            dx = boxes[k].lo[0] - boxes[i].hi[0]
            if best is not None and dx > 0 and dx * dx >= best:
                break
            g = boxes[i].gap_sq(boxes[k])
            if best is None or g < best:
                best, pair = g, (i, k)
    return best, pair


def level_boxes(p: CantorParams, j: int, check_params: bool = True) -> LevelSet:
    """The ``M^j`` boxes ``Gamma_m(G)`` with exact certificates.

    Certifies pairwise disjointness, nesting into the level ``j - 1`` box of
    the parent index and the separation ``tau^(j-1) zeta``.
    """
    if j < 0:
        raise PreconditionError("level must be non-negative")
    if check_params:
        pre = validate_params(p)
        if not pre.passed:
            raise PreconditionError(f"parameters invalid: {pre.first_failure().name}")
    idx = MultiIndex.all(p.M, j)
    boxes = [map_box(p, m, p.G) for m in idx]
    rep = Report()
    rep.add(Check("count", "Section 5: M(j) has M^j elements", len(boxes) == p.M ** j, 0.0, None))
    if j >= 1:
        nested = all(map_box(p, m.parent, p.G).contains(b) for m, b in zip(idx, boxes))
        rep.add(Check("nested", "Section 5: Gamma_m(G) inside Gamma_parent(G)", nested, 0.0, None))
        g2, pair = _min_gap_sq(boxes)
        if g2 is not None:
            gap = math.sqrt(g2)
            w = None if pair is None else tuple(float(c) for c in boxes[pair[0]].center)
            rep.add(Check("disjoint", "Section 5: Gamma_m(G), Gamma_m'(G) disjoint for m != m'",
                          g2 > 0, gap, w))
            zeta = p.zeta_sep if p.zeta_sep is not None else Fraction(0)
            need = p.tau ** (j - 1) * zeta
            rep.add(Check("separation", "Section 5: separation >= tau^(j-1) zeta", g2 >= need * need,
                          gap - float(need), w, {"required": float(need)}))
    return LevelSet(j, idx, boxes, rep)


# ---------------------------------------------------------------------------
# switching schedule


def switching_schedule(T, tau, j_max: int):
    """``t_j = T sum_{k<j} tau^(2k)`` for ``j = 0..j_max`` and ``T_0 = T / (1 - tau^2)``.

    Exact (Fractions) when ``T`` and ``tau`` are rational, floats otherwise.
    """
    exact = not isinstance(T, float) and not isinstance(tau, float)
    if exact:
        T, tau = rational(T), rational(tau)
    if not 0 <= tau < 1:
        raise PreconditionError("tau must lie in [0, 1)")
    if not T > 0:
        raise PreconditionError("T must be positive")
    times = [T * 0]
    step = T
    for _ in range(j_max):
        times.append(times[-1] + step)
        step = step * tau * tau
    return times, T / (1 - tau * tau)


@dataclass
class SwitchTower:
    """Schedule of a tower: ``t_j``, ``T_0`` and the level amplitudes ``tau^-j``."""

    T: Fraction
    tau: Fraction
    times: list
    T0: Fraction
    scales: list
    growth_factor: float

    def to_dict(self) -> dict:
        return {"T": str(self.T), "tau": str(self.tau), "times": [str(t) for t in self.times],
                "times_float": [float(t) for t in self.times], "T0": str(self.T0),
                "T0_float": float(self.T0), "scales": [float(s) for s in self.scales],
                "growth_factor": self.growth_factor}


# ---------------------------------------------------------------------------
# rescaled fields


class Rescaled2D(ScalarField2D):
    """``amp * f(scale * x1 + shift, scale * x2)`` for ``scale > 0``.

    The map keeps the axis fixed, so ``L`` is covariant:
    ``L g = amp scale^2 (L f)(y)``.
    """

    def __init__(self, f: ScalarField2D, amp: float, scale: float, shift: float):
        if scale <= 0:
            raise PreconditionError("scale must be positive")
        self.f, self.amp, self.scale, self.shift = f, float(amp), float(scale), float(shift)
        self.support = None if f.support is None else self._pull(f.support)

    def _pull(self, r: Rect) -> Rect:
        s, c = self.scale, self.shift
        return Rect((r.a1 - c) / s, (r.b1 - c) / s, r.a2 / s, r.b2 / s)

    def jet(self, x1, x2):
        s = self.scale
        y1 = s * np.asarray(x1, dtype=float) + self.shift
        y2 = s * np.asarray(x2, dtype=float)
        j = self.f.jet(y1, y2)
        w = np.array([1.0, s, s, s * s, s * s, s * s]).reshape((6,) + (1,) * (j.ndim - 1))
        return self.amp * w * j

    def __call__(self, x1, x2):
        s = self.scale
        return self.amp * self.f(s * np.asarray(x1, dtype=float) + self.shift, s * np.asarray(x2, dtype=float))

    def breaks(self):
        b1, b2 = self.f.breaks()
        s, c = self.scale, self.shift
        return tuple((b - c) / s for b in b1), tuple(b / s for b in b2)

    def supports(self):
        return [self._pull(r) for r in self.f.supports()]

    def L_ratio(self, x1, x2):
        s = self.scale
        return s * s * self.f.L_ratio(s * np.asarray(x1, float) + self.shift, s * np.asarray(x2, float))


class RescaledField(TimeDependentField):
    """``amp * base(scale x1 + shift, scale x2, time_scale (t - t_offset))``.

    With ``time_scale = scale^2`` the NSI is invariant for every ``nu``,
    so ``nu0`` is inherited from the base.
    """

    def __init__(self, base: TimeDependentField, amp: float, scale: float, shift: float,
                 t_offset: float = 0.0, time_scale: float | None = None):
        self.base, self.amp, self.scale, self.shift = base, float(amp), float(scale), float(shift)
        self.time_scale = float(scale) ** 2 if time_scale is None else float(time_scale)
        self.t_offset = float(t_offset)
        self.t_start = self.t_offset + base.t_start / self.time_scale
        self.t_end = self.t_offset + base.t_end / self.time_scale
        self.nu0 = base.nu0
        self.rects = tuple(Rescaled2D(Zero2D(r), 1.0, scale, shift).support for r in base.rects)

    def base_time(self, t: float) -> float:
        s = self.time_scale * (float(t) - self.t_offset)
        return min(max(s, self.base.t_start), self.base.t_end)

    def _y(self, x1, x2):
        return (self.scale * np.asarray(x1, dtype=float) + self.shift, self.scale * np.asarray(x2, dtype=float))

    def profile(self, t):
        return Rescaled2D(self.base.profile(self.base_time(t)), self.amp, self.scale, self.shift)

    def f_jet(self, x1, x2, t):
        s = self.scale
        j = self.base.f_jet(*self._y(x1, x2), self.base_time(t))
        w = np.array([1.0, s, s, s * s, s * s, s * s]).reshape((6,) + (1,) * (j.ndim - 1))
        return self.amp * w * j

    def dt_norm_sq(self, x1, x2, t):
        return self.amp ** 2 * self.time_scale * self.base.dt_norm_sq(*self._y(x1, x2), self.base_time(t))

    def norm_power(self, t, p):
        """Direct quadrature of the rescaled profile."""
        return lp_power(self.profile(t), p)

    def norm_power_scaled(self, t, p) -> float:
        """Change-of-variables value ``amp^p scale^-3 ||base(s)||_p^p``."""
        return abs(self.amp) ** p * self.scale ** -3 * self.base.norm_power(self.base_time(t), p)


# ---------------------------------------------------------------------------
# placeholder base


def placeholder_base(U: Rect | None = None, T: float = 1.0, eps: float = 0.05, eta: float = 0.1):
    """Base family for the tower: the almost-constant solution of a cutoff structure.

    The structure is ``(0, f, phi)`` with ``f`` the certified cutoff of ``U``
    and ``phi`` a plateau covering the region where ``Lf`` may be
    non-positive. It is not a Scheffer arrangement, so the growth assumption
    of the tower fails for it (and is reported as such).
    """
    from .energy import almost_constant
    U = U or Rect(0.0, 1.0, 0.5, 1.0)
    cut = build_cutoff(U, eta)
    inner = cut.c_prime_cert * eta
    phi = plateau_field(U, inner, 0.55 * inner, cut.bump)
    st = Structure((U,), PlanarVectorField(Zero2D(U), Zero2D(U)), cut.f, phi, band=eta, cutoffs=(cut,))
    st.report = verify_structure(st)
    if not st.report.passed:
        bad = st.report.first_failure()
        raise CertificationError(bad.name, bad.witness, bad.margin)
    base = almost_constant(st, eps, T, mode="initial")
    base.structure = st
    return base


# ---------------------------------------------------------------------------
# towers


@dataclass
class Tower:
    """Levels ``u^(j)`` of a rescaled base with their certificates.

    ``report`` holds the certified identities; ``assumptions`` holds the
    growth and switch-magnitude diagnostics, which depend on the base.
    """

    params: CantorParams
    base: TimeDependentField
    schedule: SwitchTower
    levels: list
    report: Report
    assumptions: Report
    norms: dict = field(default_factory=dict)

    @property
    def T0(self) -> float:
        return float(self.schedule.T0)

    def level(self, j: int) -> SumField:
        while len(self.levels) <= j:
            self.levels.append(_build_level(self.params, self.base, self.schedule, len(self.levels)))
        return self.levels[j]

    def level_at(self, t: float) -> int:
        """Index ``j`` with ``t_j <= t < t_{j+1}`` (from the closed form of ``t_j``)."""
        tau2 = float(self.params.tau) ** 2
        T = float(self.schedule.T)
        if t >= self.T0:
            return -1
        j = 0
        t_next = T
        while t >= t_next and j < 10_000:
            j += 1
            t_next += T * tau2 ** j
        return j

    def norm(self, t: float, p: float = 2.0) -> float:
        """``||u(t)||_p`` from the scaling law; zero from ``T_0`` on."""
        j = self.level_at(t)
        if j < 0:
            return 0.0
        tau, M = float(self.params.tau), self.params.M if self.params.M > 1 else 1
        T, tau2 = float(self.schedule.T), tau * tau
        tj = T * (1 - tau2 ** j) / (1 - tau2)
        s = min(max(tau2 ** -j * (t - tj), 0.0), float(self.base.t_end))
        base = self.base.norm_power(s, p) ** (1.0 / p)
        return tau ** (-j * (1 - 3.0 / p)) * M ** (j / p) * base

    def support_boxes(self, j: int) -> list:
        return [map_box(self.params, m, Box3.of_rect(r)) for m in MultiIndex.all(self.params.M, j)
                for r in self.base.rects]


def _build_level(p: CantorParams, base: TimeDependentField, sched: SwitchTower, j: int) -> SumField:
    tau = p.tau
    s = tau ** -j
    terms = []
    for m in MultiIndex.all(p.M, j):
        # Gamma_m^-1 in x1 is (x1 - c_m) / tau^j
        terms.append(RescaledField(base, float(s), float(s), float(-_offset(p, m) * s),
                                   float(sched.times[j]), float(s * s)))
    lvl = SumField(*terms)
    lvl.j = j
    return lvl


def _planar_gamma(p: CantorParams, n: int, y1, y2):
    return float(p.tau) * y1 + float(p.z[0] + (n - 1) * p.X), float(p.tau) * y2


def rescale_tower(base: TimeDependentField, p: CantorParams, T=None, growth_factor: float | None = None,
                  j_max: int = 2, ps=(1.0, 2.0), grid: int = 60) -> Tower:
    """Rescale ``base`` onto the level boxes for ``j = 0..j_max`` and certify.

    Certified (``tower.report``):

    - geometric constraints on ``p`` (the dimension inequality is not needed)
    - support identity ``supp u^(j) = union Gamma_m(supp base)`` inside the level boxes
    - ``||u^(j)(t)||_p = tau^(-j(1 - 3/p)) M^(j/p) ||base(s)||_p`` by direct quadrature
    - ``||u^(j)(t)||^2 <= C (M tau)^j`` with ``C`` the measured level-0 constant
    - the switch identity ``|u^(j-1)| - |u^(j)| = tau^(1-j) * growth margin`` at ``t_j``

    Diagnostics (``tower.assumptions``): the growth margin
    ``|base(Gamma_n y, T)| - growth_factor |base(y, 0)|`` and the switch
    magnitude margins.
    """
    if p.z[1] != 0:
        raise PreconditionError("the tower needs z2 = 0 so the maps commute with rotations about the axis")
    pre = validate_params(p)
    geo = [c for c in pre.checks if c.name in ("tau_in_unit_interval", "tau_M", "images_disjoint",
                                                "hull_inside_G", "z_in_G")]
    if not all(c.passed for c in geo):
        raise PreconditionError("tower parameters violate the geometric constraints")
    T = rational(T if T is not None else base.t_end - base.t_start)
    if abs(float(T) - (base.t_end - base.t_start)) > 1e-12 * max(1.0, float(T)):
        raise PreconditionError("T must equal the length of the base interval")
    gf = float(1 / p.tau) if growth_factor is None else float(growth_factor)
    times, T0 = switching_schedule(T, p.tau, j_max + 1)
    sched = SwitchTower(T, p.tau, times, T0, [p.tau ** -j for j in range(j_max + 1)], gf)
    for r in base.rects:
        if not p.G.contains(Box3.of_rect(r)):
            raise PreconditionError("the base support must lie in G")
    tower = Tower(p, base, sched, [], Report(), Report())
    rep, diag = tower.report, tower.assumptions
    rep.extend(Report([c for c in geo]), "params.")

    # schedule identities
    ok = all(times[k + 1] - times[k] == T * p.tau ** (2 * k) for k in range(j_max + 1)) \
        and all(T0 - times[k] == T * p.tau ** (2 * k) / (1 - p.tau ** 2) for k in range(j_max + 2))
    rep.add(Check("schedule", "Section 3: t_j = T sum tau^2k, T_0 - t_j = T tau^2j / (1 - tau^2)", ok, 0.0, None))

    tau, M = float(p.tau), p.M
    base_norms = {q: [] for q in ps}
    worst_rel, worst_w = 0.0, None
    energy_ratio = []
    for j in range(j_max + 1):
        lvl = tower.level(j)
        # supports
        want = tower.support_boxes(j)
        got = [Box3.of_rect(r) for r in lvl.rects]
        lvl_boxes = [map_box(p, m, p.G) for m in MultiIndex.all(M, j)]
        close = all(np.allclose(np.array(a.as_floats()), np.array(b.as_floats()), rtol=1e-12, atol=1e-15)
                    for a, b in zip(want, got))
        inside = all(any(L.contains(b) for L in lvl_boxes) for b in want)
        rep.add(Check(f"support_level_{j}", "Section 5: supp u^(j)(t) = union of Gamma_m(G)",
                      close and inside and len(got) == M ** j, 0.0, None))
        # norms at the start, middle and end of the level
        for s in (0.0, 0.5 * float(T), float(T)):
            t = float(times[j]) + tau ** (2 * j) * s
            for q in ps:
                direct = sum(term.norm_power(t, q) for term in lvl.terms)
                b = base.norm_power(s, q)
                scaled = tau ** (-j * (q - 3.0)) * M ** j * b
                rel = abs(direct - scaled) / max(abs(scaled), 1e-300)
                if rel >= worst_rel:
                    worst_rel, worst_w = rel, (j, t, q)
                if j == 0:
                    base_norms[q].append(b)
                if q == 2.0:
                    energy_ratio.append((j, direct / (M * tau) ** j))
    rep.add(Check("lp_scaling", "Section 3: ||u^(j)||_p = tau^(-j(1-3/p)) M^(j/p) ||u(s)||_p",
                  worst_rel <= NORM_IDENTITY_TOL, NORM_IDENTITY_TOL - worst_rel, worst_w,
                  {"max_rel_error": worst_rel}))
    if 2.0 in ps:
        C = max(r for j, r in energy_ratio if j == 0)
        worst = max(r for _, r in energy_ratio)
        rep.add(Check("energy_decay", "Section 5: ||u^(j)(t)||^2 <= C (M tau)^j", worst <= C * (1 + 1e-9),
                      C * (1 + 1e-9) - worst, None, {"C": C, "M_tau": M * tau}))
        tower.norms["C"] = C

    # the NSI is scale invariant: residual_j(Gamma_m y, t) = tau^-4j residual_base(y, s)
    rng = np.random.default_rng(0)
    r0 = base.rects[0]
    Y = np.column_stack([rng.uniform(r0.a1, r0.b1, 64), rng.uniform(r0.a2, r0.b2, 64)])
    nu = base.nu0 if math.isfinite(base.nu0) else 0.0
    worst_rel, worst_res = 0.0, -math.inf
    for j in range(j_max + 1):
        lvl = tower.level(j)
        m = MultiIndex.all(M, j)[-1]
        X = np.column_stack([tau ** j * Y[:, 0] + float(_offset(p, m)), tau ** j * Y[:, 1]])
        for s in (0.0, 0.5 * float(T)):
            t = float(times[j]) + tau ** (2 * j) * s
            rj = nsi_residual(lvl, nu, X, t)
            rb = nsi_residual(base, nu, Y, s)
            scale = max(float(np.abs(rb).max()), 1e-300) * tau ** (-4 * j)
            worst_rel = max(worst_rel, float(np.abs(rj - tau ** (-4 * j) * rb).max()) / scale)
            worst_res = max(worst_res, float(rj.max()) / tau ** (-4 * j))
    rep.add(Check("nsi_scaling", "Section 3: u^(j) satisfies the NSI whenever the base does",
                  worst_rel <= 1e-10 and worst_res <= 1e-8, 1e-10 - worst_rel, None,
                  {"rel_error": worst_rel, "max_scaled_residual": worst_res, "nu": nu}))

    # switches: growth margin and the identity that ties it to the switch margin
    r0 = base.rects[0]
    g1 = np.linspace(r0.a1, r0.b1, grid)
    g2 = np.linspace(r0.a2, r0.b2, grid)
    Y1, Y2 = (a.ravel() for a in np.meshgrid(g1, g2, indexing="ij"))
    f0 = np.abs(base.profile(base.t_start)(Y1, Y2))
    growth = math.inf
    growth_w = None
    id_err = 0.0
    sw_margin = math.inf
    fT = base.profile(base.t_end)
    for n in range(1, M + 1):
        G1, G2 = _planar_gamma(p, n, Y1, Y2)
        gm = np.abs(fT(G1, G2)) - gf * f0
        i = int(np.argmin(gm))
        if gm[i] < growth:
            growth, growth_w = float(gm[i]), (float(Y1[i]), float(Y2[i]), n)
        for j in range(1, j_max + 1):
            tj = float(times[j])
            prev, cur = tower.level(j - 1), tower.level(j)
            for m in MultiIndex.all(M, j):
                if m.entries[-1] != n:
                    continue
                X1 = tau ** j * Y1 + float(_offset(p, m))
                X2 = tau ** j * Y2
                a = np.abs(prev.profile(tj)(X1, X2))
                b = np.abs(cur.profile(tj)(X1, X2))
                diff = a - b
                want = tau ** (1 - j) * gm
                scale = max(float(np.abs(want).max()), float(np.abs(b).max()), 1e-300)
                id_err = max(id_err, float(np.abs(diff - want).max()) / scale)
                sw_margin = min(sw_margin, float(diff.min()))
    rep.add(Check("switch_identity", "Section 5: |u^(j-1)(t_j)| - |u^(j)(t_j)| = tau^(1-j) x growth margin",
                  id_err <= SWITCH_IDENTITY_TOL, SWITCH_IDENTITY_TOL - id_err, None, {"rel_error": id_err}))
    diag.add(Check("growth_assumption", "Section 5 (assumption): |u(Gamma_n y, T)| >= tau^-1 |u(y, 0)|",
                   growth >= 0, growth, growth_w, {"growth_factor": gf, "diagnostic": True}))
    if j_max >= 1:
        diag.add(Check("switch_magnitude", "Section 5: |u^(j)(x, t_j)| <= |u^(j-1)(x, t_j)|",
                       sw_margin >= 0, sw_margin, None, {"diagnostic": True}))
    tower.norms["base"] = {str(q): v for q, v in base_norms.items()}
    rep.meta.update({"j_max": j_max, "T0": float(T0), "ifs_dimension": p.ifs_dimension if M > 1 else 0.0,
                     "growth_assumption_holds": diag.passed})
    return tower


# ---------------------------------------------------------------------------
# box-counting dimension


@dataclass
class DimensionFit:
    dimension: float
    intercept: float
    r2: float
    log_inv_scale: np.ndarray
    log_count: np.ndarray

    def rows(self):
        return list(zip(self.log_inv_scale.tolist(), self.log_count.tolist()))


def _cell_ranges(box: Box3, d: Fraction):
    out = []
    for a, b in zip(box.lo, box.hi):
        lo = math.floor(a / d)
        hi = max(lo, math.ceil(b / d) - 1)
        out.append((lo, hi))
    return out


def _count_boxes(boxes, d: Fraction, cap: int = 50_000_000) -> int:
    ranges = sorted((_cell_ranges(b, d) for b in boxes), key=lambda r: r[0][0])
    overlap = False
    for i, r in enumerate(ranges):
        for q in ranges[i + 1:]:
            if q[0][0] > r[0][1]:
                break
            if all(q[k][0] <= r[k][1] and r[k][0] <= q[k][1] for k in range(3)):
                overlap = True
                break
        if overlap:
            break
    if not overlap:
        return sum(math.prod(h - l + 1 for l, h in r) for r in ranges)
    total = sum(math.prod(h - l + 1 for l, h in r) for r in ranges)
    if total > cap:
        raise PreconditionError("too many cells to enumerate at this scale")
    cells = np.concatenate([
        np.stack(np.meshgrid(*(np.arange(l, h + 1) for l, h in r), indexing="ij"), -1).reshape(-1, 3)
        for r in ranges])
    return int(np.unique(cells, axis=0).shape[0])


def box_dimension(data, scales) -> DimensionFit:
    """Least-squares slope of ``log N(delta)`` against ``log(1/delta)``.

    ``data`` is a list of :class:`Box3` or an ``(n, 3)`` point array.
    ``N(delta)`` counts the cells of the ``delta`` grid whose interior meets
    a box (the cell holding a point, for point clouds).
    """
    scales = [rational(s) if not isinstance(s, Fraction) else s for s in scales]
    if len(scales) < 4:
        raise PreconditionError("box counting needs at least 4 scales")
    if any(s <= 0 for s in scales):
        raise PreconditionError("scales must be positive")
    if max(scales) / min(scales) < 100:
        raise PreconditionError("scales must span at least two decades")
    counts = []
    if isinstance(data, np.ndarray):
        P = np.asarray(data, dtype=float)
        for s in scales:
            counts.append(np.unique(np.floor(P / float(s)).astype(np.int64), axis=0).shape[0])
    else:
        boxes = list(data)
        counts = [_count_boxes(boxes, s) for s in scales]
    x = np.log([1 / float(s) for s in scales])
    y = np.log(np.asarray(counts, dtype=float))
    fit = stats.linregress(x, y)
    return DimensionFit(float(fit.slope), float(fit.intercept), float(fit.rvalue ** 2), x, y)


def cantor_points(p: CantorParams, j: int) -> np.ndarray:
    """Centres of the level ``j`` boxes (a point cloud for box counting)."""
    return np.array([[float(c) for c in map_box(p, m, p.G).center] for m in MultiIndex.all(p.M, j)])


# ---------------------------------------------------------------------------
# composition with an energy profile


@dataclass
class CompositionPlan:
    """Schedule ``u_1 + u_2`` on ``[0, T'']`` followed by the rescaled tower on ``[T'', T]``."""

    T: float
    T_prime: float
    T_dprime: float
    lam: float
    shift: float
    R: float
    center: tuple
    U1: Rect
    U2: Rect | None
    report: Report
    u1: object = None
    u2: object = None
    u0: object = None
    energy: dict = field(default_factory=dict)

    def norm(self, t: float) -> float:
        """``||u(t)||`` of the spliced solution."""
        if t >= self.T_dprime:
            return self.u0_norm(t - self.T_dprime)
        sq = max(self.u1.norm_power(t, 2.0), 0.0)
        if self.u2 is not None and t <= self.T_prime:
            sq += max(self.u2.solution.stage_at(t).norm_power(t, 2.0), 0.0)
        return math.sqrt(sq)

    def u0_norm(self, s: float) -> float:
        """``||u_0(s)|| = lam^-1/2 ||tower(lam^2 s)||``."""
        return self.lam ** -0.5 * self.u0.norm(self.lam ** 2 * s, 2.0)

    def to_dict(self) -> dict:
        segs = [{"interval": [0.0, self.T_dprime], "fields": ["u1"] + (["u2"] if self.U2 else []),
                 "U1": self.U1.as_list()}]
        if self.U2 is not None:
            segs[0]["U2"] = self.U2.as_list()
            segs[0]["u2_interval"] = [0.0, self.T_prime]
        segs.append({"interval": [self.T_dprime, self.T], "fields": ["u0 = lam * tower(lam x - a, lam^2 t)"]})
        return {"T": self.T, "T_prime": self.T_prime, "T_double_prime": self.T_dprime, "lambda": self.lam,
                "a": [self.shift, 0.0, 0.0], "R": self.R, "center": list(self.center), "schedule": segs}


def _first_time_below(e, eps: float, T: float, grid: int = 4001) -> float:
    """First ``T'`` with ``e(t) <= eps`` on ``[T', T]`` (``e`` nonincreasing)."""
    ts = np.linspace(0.0, T, grid)
    below = np.asarray(e(ts)) <= eps
    if not below[-1]:
        raise PreconditionError("the profile never drops to eps before T")
    if below[0]:
        return 0.0
    k = int(np.argmax(below))
    lo, hi = ts[k - 1], ts[k]
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if float(e(mid)) <= eps:
            hi = mid
        else:
            lo = mid
    return float(hi)


def _scaled_structure(st: Structure, lam: float, shift: float) -> Structure:
    """Structure of ``lam * u[v, f](lam x - a)``."""
    def sep(g: Separable2D, amp: float) -> Separable2D:
        r = g.support
        return Separable2D(Affine1D(g.g1, lam, shift), Affine1D(g.g2, lam, 0.0),
                           Rect((r.a1 - shift) / lam, (r.b1 - shift) / lam, r.a2 / lam, r.b2 / lam),
                           g.scale * amp)
    if not isinstance(st.f, Separable2D) or not isinstance(st.phi, Separable2D):
        raise PreconditionError("composition needs a separable base structure")
    f1, phi1 = sep(st.f, lam), sep(st.phi, 1.0)
    r = f1.support
    return Structure((r,), PlanarVectorField(Zero2D(r), Zero2D(r)), f1, phi1, st.band / lam)


def compose_with_profile(e, tower: Tower, W: Box3, eps: float, T: float, profile_solution=None,
                         n_times: int = 200, grid: int = 120, lam_max: float = 2.0 ** 40) -> CompositionPlan:
    """Splice a profile solution and a rescaled tower.

    ``T'`` is the first time ``e <= eps``. ``lam`` is doubled until
    ``T_0 / lam^2 < T - T'``, ``diam G / lam < R`` and
    ``lam^-1/2 sup ||tower|| <= eps / 3``, where ``B(xbar, R)`` is the
    largest ball about the axis point ``xbar`` (centre of ``W``) inside
    ``W``. Then ``T'' = T - T_0 / lam^2``,
    ``u_0(x, t) = lam tower(lam x - a, lam^2 t)`` with ``a`` centring ``G``
    at ``xbar``, ``u_1`` is the final-mode almost-constant solution of the
    rescaled base structure on ``[0, T'']``, and for ``T' > 0`` ``u_2``
    solves the profile ``e - eps/3`` on a rectangle ``U_2`` disjoint from
    ``U_1`` with budget ``eps/3``.
    """
    from .energy import EnergyProfile, almost_constant, synthesize
    base = tower.base
    st = getattr(base, "structure", None)
    if st is None:
        raise PreconditionError("the tower base must carry its generating structure")
    if not (eps > 0 and T > 0):
        raise PreconditionError("eps and T must be positive")
    Tp = _first_time_below(e, eps, T)
    if Tp >= T:
        raise PreconditionError("the profile never drops to eps before T")
    # ball about the axis inside W
    lo = [float(a) for a in W.lo]
    hi = [float(b) for b in W.hi]
    if not (lo[1] < 0 < hi[1] and lo[2] < 0 < hi[2]):
        raise PreconditionError("W must meet the x1 axis in its interior")
    c1 = 0.5 * (lo[0] + hi[0])
    R = min(0.5 * (hi[0] - lo[0]), -lo[1], hi[1], -lo[2], hi[2])
    Gd = tower.params.G.diam()
    g1c = float(tower.params.G.center[0])
    S = max(base.norm_power(t, 2.0) ** 0.5 for t in np.linspace(base.t_start, base.t_end, 5))
    T0 = tower.T0
    lam = 1.0
    while not (T0 / lam ** 2 < T - Tp and Gd / lam < R and lam ** -0.5 * S <= eps / 3):
        lam *= 2.0
        if lam > lam_max:
            raise PreconditionError("no admissible lambda below lam_max")
    Tpp = T - T0 / lam ** 2
    shift = -(lam * c1 - g1c)  # a1 = lam * xbar_1 - centre of G; u_0 uses lam x - a
    rep = Report()
    rep.add(Check("time_order", "Section 5: T' < T'' < T", Tp < Tpp < T, min(Tpp - Tp, T - Tpp), (Tp, Tpp)))
    rep.add(Check("diameter", "Section 5: diam(supp u_0(t)) < R", Gd / lam < R, R - Gd / lam, None))
    rep.add(Check("small_norm", "Section 5: ||u_0(t)|| <= eps / 3", lam ** -0.5 * S <= eps / 3,
                  eps / 3 - lam ** -0.5 * S, None))

    # lambda-scaling identity on the first two levels
    lvl0 = tower.level(0)
    worst = 0.0
    for s in (0.0, 0.5, 1.0):
        t_tower = s * float(tower.schedule.T)
        u0 = RescaledField(lvl0.terms[0], lam, lam, shift)
        direct = u0.norm_power(t_tower / lam ** 2, 2.0) ** 0.5
        ref = lam ** -0.5 * lvl0.norm_power(t_tower, 2.0) ** 0.5
        worst = max(worst, abs(direct - ref) / ref)
    rep.add(Check("lambda_scaling", "Section 5: ||lam u(lam x, lam^2 t)|| = lam^-1/2 ||u(lam^2 t)||",
                  worst <= 1e-10, 1e-10 - worst, None, {"rel_error": worst}))

    # u_1: final-mode almost-constant solution of the rescaled structure
    st1 = _scaled_structure(st, lam, shift)
    U1 = st1.rect
    u1 = almost_constant(st1, eps / 3, Tpp, mode="final")
    rep.extend(u1.report, "u1.")
    # splice at T'': |u_0(0)| <= |u_1(T'')|
    u0_start = Rescaled2D(base.profile(base.t_start), lam, lam, shift)
    X1, X2 = frame_grid(U1, grid, st1.band)
    gap = np.abs(u1.profile(Tpp)(X1, X2)) - np.abs(u0_start(X1, X2))
    i = int(np.argmin(gap))
    rep.add(Check("splice_combination", "Section 5: |u_0(x, 0)| <= |u_1(x, T'')|", gap[i] >= 0, float(gap[i]),
                  (float(X1[i]), float(X2[i]), Tpp)))
    rep.add(Check("u1_in_W", "Section 5: supp u_1 inside W", W.contains(Box3.of_rect(U1)), 0.0, None))

    # u_2 on U_2 when the profile starts above eps
    U2, u2 = None, None
    if Tp > 0:
        rho_w = min(-lo[1], hi[1], -lo[2], hi[2])
        L = hi[0] - lo[0]
        a2 = U1.b2 + 0.1 * rho_w
        b2 = 0.9 * rho_w
        if b2 - a2 < 0.05 * rho_w:
            raise PreconditionError("no room for U_2 inside W")
        U2 = Rect(lo[0] + 0.1 * L, hi[0] - 0.1 * L, a2, b2)
        rep.add(Check("disjoint_supports", "Section 5: U_2 disjoint from U_1", U2.disjoint(U1), U2.a2 - U1.b2, None))
        rep.add(Check("u2_in_W", "Section 5: supp u_2 inside W", W.contains(Box3.of_rect(U2)), 0.0, None))
        if profile_solution is None:
            e2 = EnergyProfile(e.e - Constant1D(eps / 3), Tp, "e - eps/3")
            profile_solution = synthesize(U2, eps / 3, Tp, e2)
        u2 = profile_solution
        rep.extend(u2.report, "u2.")

    plan = CompositionPlan(T, Tp, Tpp, lam, shift, R, (c1, 0.0, 0.0), U1, U2, rep, u1, u2, tower)
    # deviation of the spliced solution
    ts = np.unique(np.concatenate([np.linspace(0.0, T, n_times), [Tp, Tpp]]))
    norms = np.array([plan.norm(t) for t in ts])
    target = np.asarray(e(ts), dtype=float)
    dev = np.abs(norms - target)
    j = int(np.argmax(dev))
    rep.add(Check("deviation", "Section 5: | ||u(t)|| - e(t) | <= eps on [0, T]", dev.max() <= eps,
                  float(eps - dev.max()), (float(ts[j]),), {"max_deviation": float(dev.max())}))
    plan.energy = {"t": ts, "norm": norms, "target": target, "deviation": dev}
    rep.meta.update(plan.to_dict())
    return plan
