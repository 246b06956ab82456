"""Certification of the Navier-Stokes inequality for axisymmetric solutions.

Every time-dependent field built in this package is a lift ``u(t) = u[f_t]``
with zero planar part and a closed-form ``d_t |u|^2``.  For such fields the
transport term ``u . grad(|u|^2 + 2p)`` vanishes on the plane ``x3 = 0``
(``u`` points along ``e_theta`` there while ``|u|^2`` and ``p`` do not depend
on the angle), so the pointwise residual reduces to

    d_t |u|^2 - 2 nu f Lf.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .axisym import AxisymField, lift_jacobian, sup_f_Lf
from .cutoff import frame_grid
from .errors import CombinationError, DomainError, PreconditionError
from .fields import Rect, ScalarField1D, ScalarField2D, Constant1D, Zero2D
from .quadrature import adaptive_quad_2d, gauss_legendre
from .report import Check, Report

__all__ = [
    "TimeDependentField", "ZeroField", "SumField", "PiecewiseSolution", "TestFunction", "LEIResult",
    "nsi_residual", "lei_check", "combination_check", "compute_nu0", "concatenate",
    "RESIDUAL_TOL", "COMBINATION_TOL",
]

RESIDUAL_TOL = 1e-8
COMBINATION_TOL = 1e-12


class TimeDependentField:
    """``t -> u[f_t]`` on ``[t_start, t_end]`` with closed-form ``d_t |u|^2``.

    Subclasses implement :meth:`profile` and :meth:`dt_norm_sq`; the other
    methods have generic fallbacks.
    """

    t_start: float = 0.0
    t_end: float = 0.0
    rects: tuple = ()
    nu0: float = math.inf

    def profile(self, t: float) -> ScalarField2D:
        raise NotImplementedError

    def field(self, t: float) -> AxisymField:
        return AxisymField(self.profile(t))

    def dt_norm_sq(self, x1, x2, t):
        """``d_t |u(x1, x2, 0, t)|^2``."""
        raise NotImplementedError

    def f_jet(self, x1, x2, t):
        return self.profile(t).jet(x1, x2)

    def norm_power(self, t: float, p: float) -> float:
        """``||u(t)||_p^p``."""
        from .axisym import lp_power
        return lp_power(self.profile(t), p)

    def sample_times(self, n: int) -> np.ndarray:
        return np.linspace(self.t_start, self.t_end, n)


class ZeroField(TimeDependentField):
    """``u = 0`` on an interval."""

    def __init__(self, t_start: float, t_end: float, rects=()):
        self.t_start, self.t_end, self.rects = float(t_start), float(t_end), tuple(rects)

    def profile(self, t):
        return Zero2D()

    def dt_norm_sq(self, x1, x2, t):
        return np.zeros(np.broadcast(np.asarray(x1), np.asarray(x2)).shape)

    def f_jet(self, x1, x2, t):
        return Zero2D().jet(x1, x2)

    def norm_power(self, t, p):
        return 0.0


class SumField(TimeDependentField):
    """Sum of time-dependent fields with pairwise disjoint support rectangles.

    On disjoint supports ``|u1 + u2|^2 = |u1|^2 + |u2|^2`` and each point
    sees at most one summand, so profiles, jets and ``d_t |u|^2`` add.
    """

    def __init__(self, *terms: TimeDependentField):
        self.terms = terms
        rects = [r for t in terms for r in t.rects]
        for i, r in enumerate(rects):
            for q in rects[i + 1:]:
                if not r.disjoint(q):
                    raise PreconditionError("summands must have disjoint support rectangles")
        self.rects = tuple(rects)
        self.t_start = max(t.t_start for t in terms)
        self.t_end = min(t.t_end for t in terms)
        self.nu0 = min(t.nu0 for t in terms)

    def profile(self, t):
        from .fields import Sum2D
        return Sum2D(*(u.profile(t) for u in self.terms))

    def f_jet(self, x1, x2, t):
        return sum(u.f_jet(x1, x2, t) for u in self.terms)

    def dt_norm_sq(self, x1, x2, t):
        return sum(u.dt_norm_sq(x1, x2, t) for u in self.terms)

    def norm_power(self, t, p):
        return sum(u.norm_power(t, p) for u in self.terms)


def _planar(point):
    P = np.asarray(point, dtype=float)
    if P.shape[-1] == 3:
        if np.any(P[..., 2] != 0.0):
            raise DomainError("the NSI is checked at planar points (x1, x2, 0)")
        P = P[..., :2]
    if P.shape[-1] != 2:
        raise DomainError("points must be (x1, x2) or (x1, x2, 0)")
    if np.any(P[..., 1] <= 0):
        raise DomainError("points must satisfy x2 > 0")
    return P[..., 0], P[..., 1]


def nsi_residual(u: TimeDependentField, nu: float, point, t, pressure=None):
    """``d_t |u|^2 - 2 nu u . Delta u + u . grad(|u|^2 + 2p)`` at planar points.

    Parameters
    ----------
    u : TimeDependentField
    nu : float
        Viscosity, ``>= 0``.
    point : array_like
        ``(..., 2)`` or ``(..., 3)`` with zero third coordinate.
    t : float or array_like
        Times, broadcast against the points.
    pressure : None
        Only the vanishing-transport mode is available: every field here has
        zero planar part, so the transport term is identically zero.
    """
    if pressure not in (None, "vanishing-transport"):
        raise PreconditionError("transport term is only implemented for v = 0 fields")
    x1, x2 = _planar(point)
    t = np.broadcast_to(np.asarray(t, dtype=float), x1.shape)
    out = np.empty(x1.shape)
    for tv in np.unique(t):
        m = t == tv
        j = u.f_jet(x1[m], x2[m], float(tv))
        fLf = j[0] * (j[3] + j[5] + j[2] / x2[m] - j[0] / x2[m] ** 2)
        out[m] = u.dt_norm_sq(x1[m], x2[m], float(tv)) - 2.0 * nu * fLf
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# piecewise solutions


@dataclass
class PiecewiseSolution:
    """Stages ``u_k`` on ``[t_k, t_{k+1}]`` switched one after another."""

    stages: list
    nu0: float
    report: Report = field(default_factory=Report)
    meta: dict = field(default_factory=dict)

    @property
    def switch_times(self) -> list[float]:
        return [s.t_start for s in self.stages[1:]]

    @property
    def t_start(self) -> float:
        return self.stages[0].t_start

    @property
    def t_end(self) -> float:
        return self.stages[-1].t_end

    def stage_index(self, t) -> np.ndarray:
        """Index of the stage active at ``t`` (right-continuous at switches)."""
        starts = np.array([s.t_start for s in self.stages])
        return np.clip(np.searchsorted(starts, t, side="right") - 1, 0, len(self.stages) - 1)

    def stage_at(self, t: float) -> TimeDependentField:
        return self.stages[int(self.stage_index(t))]

    def profile(self, t: float) -> ScalarField2D:
        return self.stage_at(t).profile(t)

    def norm(self, t: float, p: float = 2.0) -> float:
        return self.stage_at(t).norm_power(t, p) ** (1.0 / p)

    def dt_norm_sq(self, x1, x2, t):
        return self.stage_at(t).dt_norm_sq(x1, x2, t)

    def f_jet(self, x1, x2, t):
        return self.stage_at(t).f_jet(x1, x2, t)


def combination_check(u1, u2, points=None, rects=None, grid: int = 200, tol: float = COMBINATION_TOL,
                      name: str = "combination", t: float | None = None) -> Check:
    """Certify ``|u2| <= |u1|`` on a grid (``|u[v, f]| = f`` reduces it to profiles).

    ``u1, u2`` are planar profiles (:class:`ScalarField2D`) or lifts.  Points
    default to edge-refined grids of the given rectangles or of the supports.
    """
    f1 = u1.f if isinstance(u1, AxisymField) else u1
    f2 = u2.f if isinstance(u2, AxisymField) else u2
    if points is None:
        rects = list(rects or (f1.supports() + f2.supports()))
        if not rects:
            return Check(name, "switching: |u2| <= |u1| at the switch time", True, 0.0, None)
        pts = [frame_grid(r, grid, 0.1 * r.min_side) for r in rects]
        X1 = np.concatenate([p[0] for p in pts])
        X2 = np.concatenate([p[1] for p in pts])
    else:
        X1, X2 = (np.asarray(c, dtype=float) for c in points)
    gap = np.abs(f1(X1, X2)) - np.abs(f2(X1, X2))
    # points may be broadcastable axes of a tensor grid
    X1, X2, gap = (a.ravel() for a in np.broadcast_arrays(X1, X2, gap))
    i = int(np.argmin(gap))
    margin = float(gap[i])
    witness = (float(X1[i]), float(X2[i])) if t is None else (float(X1[i]), float(X2[i]), float(t))
    return Check(name, "switching: |u2| <= |u1| at the switch time", margin >= -tol, margin, witness)


def concatenate(stages, grid: int = 200, rel_tol: float = 1e-12, check_points=None) -> PiecewiseSolution:
    """Chain stages after verifying abutting intervals and the switching condition.

    Parameters
    ----------
    stages : list of TimeDependentField or of (field, (t0, t1)) pairs
    check_points : callable, optional
        ``check_points(k) -> (x1, x2)`` grid used at the ``k``-th switch.

    Raises
    ------
    CombinationError
        If ``|u_{k+1}(t)| > |u_k(t)|`` somewhere at a switch time ``t``.
    """
    flat = []
    for s in stages:
        if isinstance(s, tuple):
            fld, (a, b) = s
            if abs(fld.t_start - a) > 1e-14 or abs(fld.t_end - b) > 1e-14:
                raise PreconditionError("stage interval does not match its field")
            s = fld
        flat.append(s)
    if not flat:
        raise PreconditionError("need at least one stage")
    rep = Report()
    scale = max(1.0, abs(flat[-1].t_end))
    for k in range(len(flat) - 1):
        a, b = flat[k], flat[k + 1]
        if abs(a.t_end - b.t_start) > rel_tol * scale:
            raise PreconditionError(f"stages {k} and {k + 1} do not abut: {a.t_end} vs {b.t_start}")
        t = b.t_start
        pts = check_points(k) if check_points is not None else None
        chk = combination_check(a.profile(t), b.profile(t), points=pts,
                                rects=a.rects + b.rects or None, grid=grid,
                                name=f"combination_t{k + 1}", t=t)
        rep.add(chk)
        if not chk.passed:
            raise CombinationError(chk.name, chk.witness, chk.margin)
    nu0 = min(s.nu0 for s in flat)
    return PiecewiseSolution(flat, nu0, rep)


# ---------------------------------------------------------------------------
# viscosity bound


def compute_nu0(family, zeta: float, norm_uU: float, p: float = 2.0, grid: int = 400,
                times: int = 3, cap: float = 1.0, max_fields: int | None = None) -> float:
    """``nu0 = 0.9 zeta / (2 p ||u[chi_U]||^p S)`` with ``S = sup |f^{p-1} Lf|``.

    For ``p = 2`` this is ``0.9 zeta / (4 ||u[chi_U]||^2 S)``.  ``S`` is the
    maximum of :func:`sup_f_Lf` over the family at ``times`` sampled times per
    field; ``max_fields`` thins long families evenly (always keeping the
    first, which carries the largest amplitude in the staged construction).

    Returns ``cap`` if ``S = 0``.
    """
    family = list(family)
    if not family:
        raise PreconditionError("family must be nonempty")
    if max_fields is not None and len(family) > max_fields:
        idx = np.unique(np.linspace(0, len(family) - 1, max_fields).round().astype(int))
        family = [family[i] for i in idx]
    S = 0.0
    for fld in family:
        if hasattr(fld, "sup_f_Lf"):
            # fields with their own frame-resolving grid
            S = max(S, fld.sup_f_Lf(p=p, times=times))
            continue
        if isinstance(fld, ScalarField2D):
            S = max(S, sup_f_Lf(fld, grid, p))
            continue
        for t in fld.sample_times(times):
            S = max(S, sup_f_Lf(fld.profile(float(t)), grid, p))
    if S == 0.0:
        return cap
    return 0.9 * zeta / (2.0 * p * norm_uU ** p * S)


# ---------------------------------------------------------------------------
# local energy inequality


@dataclass(frozen=True)
class TestFunction:
    """Axisymmetric test function ``phi(x, t) = psi(x1, rho) chi(t)``."""

    psi: ScalarField2D
    chi: ScalarField1D = field(default_factory=lambda: Constant1D(1.0))

    __test__ = False  # keep pytest from collecting this class


@dataclass
class LEIResult:
    """Both sides of the local energy inequality on ``[S, S']``.

    ``slack = rhs - lhs`` is computed after the exact cancellation of the
    ``d_t phi`` terms; ``lhs`` and ``rhs`` are the directly integrated sides.
    """

    slack: float
    lhs: float
    rhs: float
    error: float
    passed: bool

    def to_dict(self) -> dict:
        return {"slack": self.slack, "lhs": self.lhs, "rhs": self.rhs, "error": self.error,
                "passed": self.passed}


def _space_integral(fn, rect: Rect, breaks, tol, atol=1e-300):
    # capped cell count: a non-converged integral reports its error instead of exhausting memory
    return adaptive_quad_2d(lambda a, b: 2 * math.pi * b * fn(a, b), rect.bounds, *breaks,
                            tol=tol, atol=atol, n=8, max_cells=20_000, strict=False)


def _grad_sq(u_t: AxisymField, x1, x2):
    D = lift_jacobian(u_t, x1, x2)
    return np.einsum("...ij,...ij->...", D, D)


def lei_check(u, phi: TestFunction, S: float, S_prime: float, nu: float = 0.0,
              n_time: int = 8, tol: float = 1e-9, slack_tol: float = 1e-12) -> LEIResult:
    """Local energy inequality on ``[S, S']`` for a (piecewise) solution.

    With ``u`` smooth on each stage, ``int |u(S')|^2 phi - int |u(S)|^2 phi``
    equals the space-time integral of ``d_t(|u|^2 phi)`` plus the jumps of
    ``|u|^2`` at switch times; substituting this turns the inequality into

        slack = -\\iint d_t|u|^2 phi - 2 nu \\iint |grad u|^2 phi
                + nu \\iint |u|^2 Delta phi - sum_k \\int [|u|^2]_{t_k} phi(t_k) >= 0,

    which is what is tested (the transport term vanishes for ``v = 0``).
    """
    if not S_prime > S:
        raise PreconditionError("need S < S'")
    stages = u.stages if isinstance(u, PiecewiseSolution) else [u]
    psi, chi = phi.psi, phi.chi
    rect = psi.support
    if rect is None:
        raise PreconditionError("test function needs a compact support")
    breaks = psi.breaks()
    gx, gw = gauss_legendre(n_time)
    chi_j = lambda t: chi.derivs(np.asarray(t, dtype=float), 1)

    def lap_psi(a, b):
        j = psi.jet(a, b)
        return j[3] + j[5] + j[2] / b

    def energy_at(t, side):
        st = stages[0]
        for s in stages:
            if (s.t_start <= t < s.t_end) or (side == "-" and s.t_start < t <= s.t_end):
                st = s
                break
        else:
            st = stages[-1]
        prof = st.profile(t)
        v, e = _space_integral(lambda a, b: prof(a, b) ** 2 * psi(a, b), rect, breaks, tol)
        return v * float(chi(np.asarray(t))), e

    eS, e1 = energy_at(S, "+")
    # absolute floor relative to the local energy, so terms of size nu * (...) need not be resolved relatively
    atol = max(tol * abs(eS), 1e-300)
    slack = lhs_dt = rhs = err = 0.0
    for st in stages:
        lo, hi = max(st.t_start, S), min(st.t_end, S_prime)
        if hi <= lo:
            continue
        for xg, wg in zip(gx, gw):
            t = 0.5 * (lo + hi) + 0.5 * (hi - lo) * xg
            w = 0.5 * (hi - lo) * wg
            c = chi_j(t)
            ut = st.field(t)

            def integrand(a, b, st=st, t=t, ut=ut, c=c):
                fj = st.f_jet(a, b, t)
                dt = st.dt_norm_sq(a, b, t)
                ps = psi(a, b)
                val = -dt * ps * c[0]
                if nu:
                    val = val - 2 * nu * _grad_sq(ut, a, b) * ps * c[0] + nu * fj[0] ** 2 * lap_psi(a, b) * c[0]
                return val

            v, e = _space_integral(integrand, rect, breaks, tol, atol)
            slack += w * v
            err += w * e

            def rhs_integrand(a, b, st=st, t=t, c=c):
                fj = st.f_jet(a, b, t)
                return fj[0] ** 2 * (psi(a, b) * c[1] + nu * lap_psi(a, b) * c[0])

            v, e = _space_integral(rhs_integrand, rect, breaks, tol, atol)
            rhs += w * v
            err += w * e
            if nu:
                v, e = _space_integral(lambda a, b, ut=ut, c=c: 2 * nu * _grad_sq(ut, a, b) * psi(a, b) * c[0],
                                       rect, breaks, tol, atol)
                lhs_dt += w * v
                err += w * e
    # jumps of |u|^2 at interior switch times
    for k in range(1, len(stages)):
        t = stages[k].t_start
        if not S < t < S_prime:
            continue
        a, b = stages[k - 1].profile(t), stages[k].profile(t)
        v, e = _space_integral(lambda x, y: (b(x, y) ** 2 - a(x, y) ** 2) * psi(x, y), rect, breaks, tol, atol)
        slack -= v * float(chi(np.asarray(t)))
        err += e

    eSp, e2 = energy_at(S_prime, "-")
    lhs = eSp - eS + lhs_dt
    err += e1 + e2
    return LEIResult(float(slack), float(lhs), float(rhs), float(err),
                     bool(slack >= -max(slack_tol, err)))
