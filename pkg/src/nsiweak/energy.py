"""Solutions of the Navier-Stokes inequality with a prescribed energy profile.

The staged construction runs in five steps:

1. ``smooth_profile`` lifts ``e^p`` by a decaying affine term after
   mollification, giving ``e_s`` with ``(e_s^p)' <= -zeta``.
2. ``plan_stages`` picks switch times where ``e_s^p`` has dropped by the
   factor ``1 - c^p``, and inserts the jump times of ``e``.
3. ``calibrate`` fixes the frame width ``eta`` so that cutting ``U`` down
   by ``K`` frames costs little ``L^p`` mass.
4. ``build_stage`` builds the stage field. Each stage lives on
   ``U^k = U_{k eta}``. On ``[t_k, t_{k+1}]`` it is

       f_{k,t}^p = A_k f_k^p - s_k(t) Psi(f_k),

   where ``f_k`` is the cutoff of ``U^k``. ``Psi`` is a smooth step in the
   level of ``f_k``, and its plateau ``phi_k = Psi(f_k)`` covers every
   point where ``Lf_k`` can be non-positive.
5. ``synthesize`` chains the stages, appends the zero field and
   certifies the result.

For ``p = 2`` this is the usual energy; general ``p`` replaces every
squared norm by a ``p``-th power. ``almost_constant`` builds the slowly
decaying fields ``f_t^2 = F^2 - delta t phi`` of a structure.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .axisym import lp_norm, lp_power, sup_f_Lf
from .cutoff import BumpProfile, Structure, cutoff_field, default_bump, smooth_step_jet
from .errors import ConstructionError, PreconditionError, SizingError
from .fields import (
    Callable2D, Clamped1D, Mollified1D, Polynomial1D, Rect, ScalarField1D, ScalarField2D,
    Separable2D, jet1_compose, jet2_compose, jet2_mul,
)
from .quadrature import adaptive_quad_1d, adaptive_quad_2d
from .report import Check, Report
from .verify import (
    PiecewiseSolution, TimeDependentField, ZeroField, combination_check, compute_nu0,
    nsi_residual, RESIDUAL_TOL,
)

__all__ = [
    "SampledProfile1D", "EnergyProfile", "Jump", "detect_jumps", "SmoothedProfile", "smooth_profile",
    "LevelPlateau", "StagePlan", "plan_stages", "Calibration", "calibrate", "StageField",
    "build_stage", "SynthesisResult", "synthesize", "AlmostConstantField", "almost_constant",
    "stage_norm_constants",
]

PLATEAU_LOW = 0.24
PLATEAU_HIGH = 0.30
ROOT_XTOL = 1e-12


# ---------------------------------------------------------------------------
# energy profiles


class SampledProfile1D(ScalarField1D):
    """Piecewise-linear interpolant that may jump.

    A repeated node ``t_i = t_{i+1}`` marks a jump from ``y_i`` to
    ``y_{i+1}``. The function is right-continuous and constant beyond the
    ends.
    """

    max_order = 1

    def __init__(self, t, y):
        t = np.asarray(t, dtype=float)
        y = np.asarray(y, dtype=float)
        if t.ndim != 1 or t.shape != y.shape or len(t) < 2:
            raise PreconditionError("need matching 1D arrays with at least two nodes")
        dt = np.diff(t)
        if np.any(dt < 0):
            raise PreconditionError("profile times must be nondecreasing")
        if np.any((dt[:-1] == 0) & (dt[1:] == 0)):
            raise PreconditionError("a time may repeat at most once")
        cuts = np.flatnonzero(dt == 0) + 1
        self.segments = [(ts, ys) for ts, ys in zip(np.split(t, cuts), np.split(y, cuts))]
        self.starts = np.array([s[0][0] for s in self.segments])
        self.jump_times = tuple(float(t[i]) for i in cuts)
        self.t, self.y = t, y
        self.breakpoints = tuple(np.unique(t))

    def _eval(self, x, side):
        x = np.asarray(x, dtype=float)
        idx = np.clip(np.searchsorted(self.starts, x, side=side) - 1, 0, len(self.segments) - 1)
        val = np.empty(x.shape)
        slope = np.zeros(x.shape)
        for i, (ts, ys) in enumerate(self.segments):
            m = idx == i
            if not np.any(m):
                continue
            val[m] = np.interp(x[m], ts, ys)
            if len(ts) > 1:
                k = np.clip(np.searchsorted(ts, x[m], side="right") - 1, 0, len(ts) - 2)
                inside = (x[m] >= ts[0]) & (x[m] < ts[-1])
                slope[m] = np.where(inside, np.diff(ys)[k] / np.diff(ts)[k], 0.0)
        return val, slope

    def derivs(self, x, order=2):
        val, slope = self._eval(x, "right")
        out = np.zeros((order + 1,) + val.shape)
        out[0] = val
        if order >= 1:
            out[1] = slope
        return out

    def left_limit(self, x):
        return self._eval(x, "left")[0]


@dataclass(frozen=True)
class EnergyProfile:
    """Target profile ``e`` on ``[0, T]``: non-negative and nonincreasing."""

    e: ScalarField1D
    T: float
    label: str = "custom"

    def __post_init__(self):
        if not self.T > 0:
            raise PreconditionError("T must be positive")

    @classmethod
    def linear(cls, e0: float, eT: float, T: float = 1.0) -> "EnergyProfile":
        return cls(Polynomial1D([e0, (eT - e0) / T]), float(T), f"linear:{e0:g},{eT:g}")

    @classmethod
    def constant(cls, e0: float, T: float = 1.0) -> "EnergyProfile":
        return cls(Polynomial1D([e0]), float(T), f"const:{e0:g}")

    @classmethod
    def from_samples(cls, t, y, T: float | None = None, label: str = "samples") -> "EnergyProfile":
        g = SampledProfile1D(t, y)
        return cls(g, float(T if T is not None else g.t[-1]), label)

    @classmethod
    def from_csv(cls, path, T: float | None = None) -> "EnergyProfile":
        """Read columns ``t, e`` (a header row is skipped if present)."""
        rows = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    rows.append((float(row[0]), float(row[1])))
                except ValueError:
                    if rows:
                        raise PreconditionError(f"bad CSV row {row!r}") from None
        if len(rows) < 2:
            raise PreconditionError("profile CSV needs at least two rows")
        t, y = np.array(rows).T
        return cls.from_samples(t, y, T, label=f"csv:{path}")

    @classmethod
    def parse(cls, spec: str, T: float = 1.0) -> "EnergyProfile":
        """``linear:e0,eT``, ``const:e0`` or ``csv:path``."""
        kind, _, arg = spec.partition(":")
        try:
            if kind == "linear":
                e0, eT = (float(a) for a in arg.split(","))
                return cls.linear(e0, eT, T)
            if kind == "const":
                return cls.constant(float(arg), T)
        except ValueError:
            raise PreconditionError(f"cannot parse profile {spec!r}") from None
        if kind == "csv":
            return cls.from_csv(arg, T)
        raise PreconditionError(f"unknown profile form {spec!r}")

    def __call__(self, t):
        return self.e(t)

    @property
    def jump_times(self) -> tuple:
        return getattr(self.e, "jump_times", ())

    def left_limit(self, t):
        if hasattr(self.e, "left_limit"):
            return self.e.left_limit(t)
        return self.e(t)

    def validate(self, grid: int = 2001) -> None:
        """Raise :class:`PreconditionError` unless ``e`` is non-negative and nonincreasing."""
        ts = np.linspace(0.0, self.T, grid)
        vals = self.e(ts)
        if np.any(vals < 0):
            raise PreconditionError(f"profile is negative at t={ts[np.argmin(vals)]:.6g}")
        rise = np.diff(vals)
        if np.any(rise > 1e-12 * max(1.0, float(np.abs(vals).max()))):
            i = int(np.argmax(rise))
            raise PreconditionError(f"profile increases near t={ts[i]:.6g}; only nonincreasing profiles are admissible")


@dataclass(frozen=True)
class Jump:
    t: float
    left: float
    right: float


def detect_jumps(profile: EnergyProfile, eps: float, grid: int = 20001) -> list[Jump]:
    """Jumps of ``e`` in ``(0, T]`` of size at least ``eps/3``.

    Declared jumps of sampled profiles are used as they are. Otherwise every
    grid drop of at least ``eps/3`` is narrowed down by bisection to width
    ``1e-13 T``.
    """
    T = profile.T
    declared = [t for t in profile.jump_times if 0 < t <= T]
    if declared:
        out = []
        for t in declared:
            left, right = float(profile.left_limit(np.array(t))), float(profile(np.array(t)))
            if left - right >= eps / 3:
                out.append(Jump(t, left, right))
        return out
    ts = np.linspace(0.0, T, grid)
    ys = profile(ts)
    out = []
    for i in np.flatnonzero(ys[:-1] - ys[1:] >= eps / 3):
        lo, hi = ts[i], ts[i + 1]
        elo, ehi = float(ys[i]), float(ys[i + 1])
        while hi - lo > 1e-13 * T:
            mid = 0.5 * (lo + hi)
            em = float(profile(np.array(mid)))
            if elo - em >= em - ehi:
                hi, ehi = mid, em
            else:
                lo, elo = mid, em
        if elo - ehi >= eps / 3:
            out.append(Jump(float(hi), elo, ehi))
    return out


# ---------------------------------------------------------------------------
# smoothing


class _Extended1D(ScalarField1D):
    """Values of ``e`` on ``[0, T]``, linear decay to 0 on ``[T, horizon]``, 0 beyond."""

    max_order = 0

    def __init__(self, profile: EnergyProfile, horizon: float):
        self.profile, self.T, self.horizon = profile, profile.T, float(horizon)
        self.eT = float(profile(np.array(self.T)))
        bps = [b for b in profile.e.breakpoints if 0 <= b <= self.T]
        self.breakpoints = tuple(sorted(set(bps) | {0.0, self.T, self.horizon}))

    def derivs(self, x, order=0):
        x = np.asarray(x, dtype=float)
        out = np.zeros((order + 1,) + x.shape)
        base = self.profile(np.clip(x, 0.0, self.T))
        if self.horizon > self.T:
            tail = self.eT * np.clip((self.horizon - x) / (self.horizon - self.T), 0.0, 1.0)
            out[0] = np.where(x <= self.T, base, tail)
        else:
            out[0] = base
        return out


class _PowerValues(ScalarField1D):
    max_order = 0

    def __init__(self, g: ScalarField1D, p: float):
        self.g, self.p = g, float(p)
        self.breakpoints = g.breakpoints

    def derivs(self, x, order=0):
        out = np.zeros((order + 1,) + np.shape(x))
        out[0] = np.maximum(self.g(x), 0.0) ** self.p
        return out


@dataclass
class SmoothedProfile:
    """``e_s^p(t) = J(e^p)(t) + lift - zeta t`` on each piece between jumps.

    ``power(t, side)`` returns ``e_s^p`` (``side`` picks the one-sided value
    at a jump time), ``__call__`` returns ``e_s``.
    """

    p: float
    eps: float
    T: float
    horizon: float
    zeta: float
    lift: float
    scheme: str
    pieces: list
    jumps: tuple
    radii: tuple
    report: Report = field(default_factory=Report)

    def _piece_index(self, t, side):
        J = np.asarray(self.jumps, dtype=float)
        return np.searchsorted(J, t, side="right" if side == "+" else "left")

    def _eval(self, t, side, order):
        t = np.asarray(t, dtype=float)
        idx = self._piece_index(t, side)
        out = np.zeros((order + 1,) + t.shape)
        for i, g in enumerate(self.pieces):
            m = idx == i
            if np.any(m):
                out[:, m] = g.derivs(t[m], order)
        out[0] += self.lift - self.zeta * t
        if order >= 1:
            out[1] -= self.zeta
        return out

    def power(self, t, side: str = "+"):
        v = self._eval(t, side, 0)[0]
        return float(v) if v.ndim == 0 else v

    def dpower(self, t, side: str = "+"):
        v = self._eval(t, side, 1)[1]
        return float(v) if v.ndim == 0 else v

    def __call__(self, t, side: str = "+"):
        return np.maximum(self.power(t, side), 0.0) ** (1.0 / self.p)


def smooth_profile(e: EnergyProfile, eps: float, T: float | None = None, p: float = 2.0,
                   scheme: str = "power", horizon: float | None = None, grid: int = 1000,
                   jumps: list[Jump] | None = None) -> tuple[SmoothedProfile, float]:
    """Mollify ``e^p`` and add a decaying lift.

    Schemes
    -------
    ``"power"`` (default)
        ``e_s^p = J(e^p) + eps^p/2 - eps^p t/(4T)`` with ``zeta = eps^p/(4T)``.
        The radius is halved until ``|J(e^p) - e^p| <= eps^p/8``, which gives
        ``e <= e_s <= e + eps``.
    ``"square"``
        ``e_s^p = J(e^p) + eps/2 - eps t/(4T)`` with ``zeta = eps/(4T)``. The
        radius is halved until ``|J(e^p) - e^p| <= eps/4``. The upper
        sandwich bound can fail (e.g. ``e = 1 - t``, ``eps = 0.2``). The
        check is reported, not enforced.

    ``e`` is mollified piece by piece between its jumps. Each piece is
    extended by its one-sided limits. If ``horizon > T``, ``e`` is continued
    linearly down to 0 at ``horizon``.

    Returns
    -------
    SmoothedProfile, zeta
    """
    T = e.T if T is None else float(T)
    if not eps > 0:
        raise PreconditionError("eps must be positive")
    e.validate()
    horizon = T if horizon is None else float(horizon)
    if scheme == "power":
        lift, zeta, tol = eps ** p / 2, eps ** p / (4 * T), eps ** p / 8
    elif scheme == "square":
        lift, zeta, tol = eps / 2, eps / (4 * T), eps / 4
    else:
        raise PreconditionError(f"unknown smoothing scheme {scheme!r}")
    if jumps is None:
        jumps = detect_jumps(e, eps)
    ext = _Extended1D(e, horizon)
    epow = _PowerValues(ext, p)
    times = [0.0] + [j.t for j in jumps] + [horizon]
    lefts = [float(ext(np.array(0.0)))] + [j.right for j in jumps]
    rights = [j.left for j in jumps] + [float(ext(np.array(horizon)))]
    pieces, radii = [], []
    for lo, hi, vl, vr in zip(times[:-1], times[1:], lefts, rights):
        g = Clamped1D(epow, lo, hi, left=vl ** p, right=vr ** p)
        ts = np.linspace(lo, hi, 401)
        ref = g(ts)
        r = 0.05 * max(hi - lo, 1e-3 * T)
        for _ in range(60):
            J = Mollified1D(g, r)
            if np.abs(J(ts) - ref).max() <= tol:
                break
            r *= 0.5
        else:
            raise ConstructionError("mollification_radius", (lo, hi), float(np.abs(J(ts) - ref).max() - tol),
                                    "mollification radius search failed")
        pieces.append(J)
        radii.append(r)
    sp = SmoothedProfile(p, eps, T, horizon, zeta, lift, scheme, pieces,
                         tuple(j.t for j in jumps), tuple(radii))
    sp.report = _check_smoothed(sp, e, grid)
    return sp, zeta


def _check_smoothed(sp: SmoothedProfile, e: EnergyProfile, grid: int) -> Report:
    rep = Report()
    ts = np.linspace(0.0, sp.T, grid)
    es = sp(ts)
    ev = e(ts)
    lower = es - ev
    upper = ev + sp.eps - es
    i, j = int(np.argmin(lower)), int(np.argmin(upper))
    rep.add(Check("smoothed_above_e", "Lemma 4.1: e <= e_s", bool(lower.min() >= 0), float(lower.min()),
                  (float(ts[i]),)))
    rep.add(Check("smoothed_below_e_plus_eps", "Lemma 4.1: e_s <= e + eps", bool(upper.min() >= 0),
                  float(upper.min()), (float(ts[j]),)))
    tt = np.linspace(0.0, sp.horizon, max(grid, 2 * len(sp.pieces) + 2))
    slack = -sp.zeta - sp.dpower(tt)
    k = int(np.argmin(slack))
    rep.add(Check("smoothed_decay", "Lemma 4.1: (e_s^p)' <= -zeta", bool(slack.min() >= -1e-12),
                  float(slack.min()), (float(tt[k]),)))
    rep.meta.update({"zeta": sp.zeta, "radii": list(sp.radii), "scheme": sp.scheme, "grid": grid})
    return rep


# ---------------------------------------------------------------------------
# level plateau


@dataclass(frozen=True)
class LevelPlateau:
    """``Psi(y)``: smooth step from 0 at ``y0`` to 1 at ``y1``.

    ``phi_k = Psi(f_k)`` equals 1 wherever ``f_k >= y1``. ``cp`` is the
    largest admissible ``c^p``, namely ``0.98 min y^p / Psi(y)``. It keeps
    ``y^p - s Psi(y)`` positive for every ``s <= cp``.
    """

    y0: float = PLATEAU_LOW
    y1: float = PLATEAU_HIGH
    p: float = 2.0

    def derivs(self, y, order: int = 2) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        w = self.y1 - self.y0
        d = smooth_step_jet((y - self.y0) / w, order)
        return d * (w ** -np.arange(order + 1.0)).reshape((-1,) + (1,) * y.ndim)

    def __call__(self, y):
        return self.derivs(y, 0)[0]

    @property
    def cp(self) -> float:
        y = np.linspace(self.y0, self.y1, 20001)[1:]
        ps = self(y)
        with np.errstate(over="ignore", divide="ignore"):
            r = np.where(ps > 0, y ** self.p / np.where(ps > 0, ps, 1.0), np.inf)
        return 0.98 * float(min(r.min(), self.y1 ** self.p))


def stage_norm_constants(bump: BumpProfile, plateau: LevelPlateau, p: float) -> dict:
    """``int_0^1 h^p``, ``int_0^1 Psi(h)`` and ``int int Psi(h(u1) h(u2))``.

    Together with the rectangle these give the closed-form norms of every
    stage (see :func:`_frame_integral`).
    """
    b = tuple(x for x in bump.breakpoints if 0 < x < 1)
    Ip, _ = adaptive_quad_1d(lambda u: bump(u) ** p, 0.0, 1.0, b, tol=1e-13)
    Jpsi, _ = adaptive_quad_1d(lambda u: plateau(bump(u)), 0.0, 1.0, b, tol=1e-13)
    Cpsi, _ = adaptive_quad_2d(lambda u, v: plateau(bump(u) * bump(v)), (0.0, 1.0, 0.0, 1.0), b, b,
                               tol=1e-11, atol=1e-14)
    return {"I_p": Ip, "I_p2": Ip * Ip, "J_psi": Jpsi, "C_psi": Cpsi}


def _frame_integral(rect: Rect, eta: float, J: float, C: float) -> float:
    """``2 pi int F(f) x2`` over ``rect`` for a cutoff ``f`` of width ``eta``.

    ``J`` and ``C`` are the edge and corner integrals of ``F(h)``. The
    ``x2``-weights of opposite edges add up to ``a2 + b2``, so the result is
    exact.
    """
    L1 = rect.b1 - rect.a1
    s2 = rect.a2 + rect.b2
    X2 = 0.5 * (rect.b2 - rect.a2 - 2 * eta) * s2
    return 2 * math.pi * ((L1 - 2 * eta) * X2 + (L1 - 2 * eta) * eta * s2 * J
                          + 2 * eta * X2 * J + 2 * eta ** 2 * s2 * C)


def _frame_moment(rect: Rect, m: float) -> float:
    """``||u[chi_{U minus U_m}]||_p^p``, free of cancellation."""
    L1, L2 = rect.b1 - rect.a1, rect.b2 - rect.a2
    return math.pi * (rect.a2 + rect.b2) * (2 * m * (L1 + L2) - 4 * m * m)


# ---------------------------------------------------------------------------
# stage planning


@dataclass
class StagePlan:
    """Switch times and amplitudes.

    ``P_start[k]`` and ``P_end[k]`` are the values of ``e_s^p`` at ``t_k^+``
    and ``t_{k+1}^-``. They are exact products ``(1-c^p)^k P_0``, except
    right after a jump. ``is_jump[k]`` tells whether stage ``k`` ends at a
    jump of ``e``.
    """

    K: int
    times: np.ndarray
    P_start: np.ndarray
    P_end: np.ndarray
    is_jump: np.ndarray
    c: float
    p: float
    eps: float

    @property
    def d(self) -> float:
        return float(np.diff(self.times).min()) if self.K else math.inf

    @property
    def cp(self) -> float:
        return self.c ** self.p


def plan_stages(ehat, eps: float, c: float, p: float = 2.0, t_max: float | None = None) -> StagePlan:
    """Switch times ``t_k`` with ``e_s(t_k)^p = (1 - c^p)^k e_s(0)^p``.

    ``ehat`` is a :class:`SmoothedProfile` or a plain decreasing function
    ``t -> e_s(t)`` (then ``t_max`` bounds the search). Stages stop at the
    first ``k`` with ``(1 - c^p)^k e_s(0)^p < eps^p``. This ``K`` is
    minimal. Jump times end a stage early.

    Raises
    ------
    PreconditionError
        If ``e_s`` does not decay below ``eps`` before the horizon.
    """
    if not 0 < c < 1:
        raise PreconditionError("c must lie in (0, 1)")
    if isinstance(ehat, SmoothedProfile):
        P = ehat.power
        jumps = np.asarray(ehat.jumps, dtype=float)
        horizon = ehat.horizon
    else:
        if t_max is None:
            raise PreconditionError("t_max is required for a plain function")
        P = lambda t, side="+": float(ehat(np.asarray(t, dtype=float))) ** p
        jumps = np.zeros(0)
        horizon = float(t_max)
    cp = c ** p
    q = 1.0 - cp
    thr = eps ** p
    t = 0.0
    Pk = float(P(0.0, "+"))
    times, Ps, Pe, isj = [0.0], [], [], []
    while Pk >= thr:
        target = q * Pk
        later = jumps[jumps > t]
        hi = float(later[0]) if later.size else horizon
        Phi = float(P(hi, "-"))
        if Phi > target:
            if not later.size:
                raise PreconditionError(
                    f"profile does not decay below eps within [0, {horizon:g}]; extend e beyond T")
            Ps.append(Pk)
            Pe.append(Phi)
            isj.append(True)
            t = hi
            Pk = float(P(hi, "+"))
        else:
            t_next = optimize.brentq(lambda s: float(P(s, "-")) - target, t, hi, xtol=ROOT_XTOL,
                                     rtol=4 * np.finfo(float).eps)
            Ps.append(Pk)
            Pe.append(target)
            isj.append(False)
            t = t_next
            Pk = target
        times.append(t)
    return StagePlan(len(Ps), np.array(times), np.array(Ps), np.array(Pe), np.array(isj, dtype=bool),
                     float(c), float(p), float(eps))


# ---------------------------------------------------------------------------
# calibration


@dataclass
class Calibration:
    """Frame width and norms for a stage plan on ``U``.

    ``A[k] = P_start[k] / ||chi_U||^p`` is the stage amplitude and
    ``B[k] = P_end[k] / ||chi_U||^p`` its end value. With ``p = 2``,
    ``A[0]`` is ``mu^2``.
    """

    U: Rect
    eta: float
    mu: float
    chi_p: float
    A: np.ndarray
    B: np.ndarray
    D: float
    frame_p: float
    frame_bound: float
    rects: list
    N_phi: np.ndarray
    N_f: np.ndarray
    constants: dict
    halvings: int


def calibrate(U: Rect, plan: StagePlan, eps_c: float, zeta: float, bump: BumpProfile | None = None,
              plateau: LevelPlateau | None = None, a: float | None = None) -> Calibration:
    """Find ``eta`` by halving until the frame of ``U^K`` is small enough.

    The condition is
    ``||u[chi_{U minus U_{K eta}}]||_p^p <= min(eps_c^p, D zeta) / (4 mu^p)``.
    Here ``D = min_k (t_{k+1} - t_k) mu^p / (A_k - B_k)``. It reduces to
    ``d / c^p`` for profiles without jumps.
    Every stage rectangle is then ``U^k = U_{k eta}``.

    Raises
    ------
    SizingError
        If 60 halvings do not meet the condition.
    """
    a = U.a2 if a is None else a
    if not 0 < a <= U.a2:
        raise PreconditionError("U must lie at distance at least a > 0 from the axis")
    bump = bump or default_bump()
    plateau = plateau or LevelPlateau(p=plan.p)
    p = plan.p
    chi_p = 2 * math.pi * U.rho_moment()
    K = plan.K
    A = plan.P_start / chi_p
    B = np.where(plan.is_jump, plan.P_end / chi_p, (1.0 - plan.cp) * A)
    # continuous switches: A_{k+1} = (1 - c^p) A_k exactly
    if K > 1:
        A[1:] = np.where(plan.is_jump[:-1], A[1:], B[:-1])
    mu_p = A[0] if K else 0.0
    gaps = np.diff(plan.times)
    D = float((gaps * mu_p / (A - B)).min()) if K else math.inf
    bound = min(eps_c ** p, D * zeta) / (4 * mu_p) if K else math.inf
    eta = 0.25 * U.min_side / (K + 1)
    halvings = 0
    while K and _frame_moment(U, K * eta) > bound:
        eta *= 0.5
        halvings += 1
        if halvings > 60:
            raise SizingError(f"no eta meets the frame condition for K={K} on {U.as_list()}")
    consts = stage_norm_constants(bump, plateau, p)
    rects = [U.shrink(k * eta) for k in range(K)]
    N_phi = np.array([_frame_integral(r, eta, consts["J_psi"], consts["C_psi"]) for r in rects])
    N_f = np.array([_frame_integral(r, eta, consts["I_p"], consts["I_p2"]) for r in rects])
    return Calibration(U, eta, mu_p ** (1.0 / p) if K else 0.0, chi_p, A, B, D,
                       _frame_moment(U, K * eta) if K else 0.0, bound, rects, N_phi, N_f, consts, halvings)


# ---------------------------------------------------------------------------
# stage fields


class _StageG(ScalarField1D):
    """``G(y) = (A y^p - s Psi(y))^{1/p}``, linear below the plateau ramp."""

    def __init__(self, A: float, s: float, plateau: LevelPlateau):
        self.A, self.s, self.pl = float(A), float(s), plateau
        self.p = plateau.p

    def derivs(self, y, order=2):
        y = np.asarray(y, dtype=float)
        p, A, s = self.p, self.A, self.s
        out = np.zeros((order + 1,) + y.shape)
        lin = y < self.pl.y0
        a = A ** (1.0 / p)
        out[0] = np.where(lin, a * y, 0.0)
        if order >= 1:
            out[1] = np.where(lin, a, 0.0)
        m = ~lin
        if np.any(m):
            ym = y[m]
            ps = self.pl.derivs(ym, order)
            Q = [A * ym ** p - s * ps[0], A * p * ym ** (p - 1) - s * ps[1] if order >= 1 else None,
                 A * p * (p - 1) * ym ** (p - 2) - s * ps[2] if order >= 2 else None]
            if np.any(Q[0] <= 0):
                raise ConstructionError("stage_positivity", None, float(Q[0].min()),
                                        "f_{k,t}^p lost positivity on the plateau ramp")
            F = np.empty((order + 1, ym.size))
            coef = 1.0
            for k in range(order + 1):
                F[k] = coef * Q[0] ** (1.0 / p - k)
                coef *= 1.0 / p - k
            out[:, m] = jet1_compose(F, np.stack(Q[:order + 1]))
        return out


class _StageProfile(ScalarField2D):
    def __init__(self, G: _StageG, fk: Separable2D):
        self.G, self.fk, self.support = G, fk, fk.support

    def jet(self, x1, x2):
        g = self.fk.jet(x1, x2)
        return jet2_compose(self.G.derivs(g[0], 2), g)

    def __call__(self, x1, x2):
        # factors first, so tensor grids given as (n, 1) and (1, m) stay cheap
        v = self.fk.scale * self.fk.g1(np.asarray(x1, float)) * self.fk.g2(np.asarray(x2, float))
        return self.G(v)

    def breaks(self):
        return self.fk.breaks()

    def L_ratio(self, x1, x2):
        return ScalarField2D.L_ratio(self, x1, x2)


def _edge_nodes(a: float, b: float, eta: float, n: int, interior: int = 5) -> np.ndarray:
    d = eta * 1.05 * (np.arange(n) + 0.5) / n
    mid = np.linspace(a + 1.1 * eta, b - 1.1 * eta, interior) if b - a > 2.2 * eta else np.zeros(0)
    return np.unique(np.concatenate([a + d, b - d, mid]))


class StageField(TimeDependentField):
    """Stage ``k`` on ``[t_k, t_{k+1}]``: ``f_{k,t}^p = A f_k^p - s(t) Psi(f_k)``.

    ``s(t) = A - E^p(t) / N_phi``. ``E^p`` is ``e_s^p`` plus the affine
    correction that pins ``E^p(t_k) = A N_phi`` and
    ``E^p(t_{k+1}) = B N_phi``.
    """

    def __init__(self, k: int, t_start: float, t_end: float, A: float, B: float, rect: Rect,
                 eta: float, N_phi: float, N_f: float, smoothed: SmoothedProfile,
                 plateau: LevelPlateau, bump: BumpProfile, nu0: float = math.inf):
        self.k, self.t_start, self.t_end = int(k), float(t_start), float(t_end)
        self.A, self.B, self.rect, self.eta = float(A), float(B), rect, float(eta)
        self.rects = (rect,)
        self.N_phi, self.N_f = float(N_phi), float(N_f)
        self.sp, self.plateau, self.bump = smoothed, plateau, bump
        self.p = plateau.p
        self.fk = cutoff_field(rect, eta, bump)
        self.P_start = float(smoothed.power(self.t_start, "+"))
        self.P_end = float(smoothed.power(self.t_end, "-"))
        self.nu0 = nu0

    # time dependence ----------------------------------------------------

    def _tau(self, t):
        return (t - self.t_start) / (self.t_end - self.t_start)

    def E_power(self, t: float) -> float:
        """``E_k(t)^p``."""
        t = float(t)
        side = "+" if t <= self.t_start else "-"
        tau = self._tau(t)
        return (float(self.sp.power(t, side)) + (1 - tau) * (self.A * self.N_phi - self.P_start)
                + tau * (self.B * self.N_phi - self.P_end))

    def dE_power(self, t: float) -> float:
        t = float(t)
        side = "+" if t <= self.t_start else "-"
        corr = ((self.B * self.N_phi - self.P_end) - (self.A * self.N_phi - self.P_start))
        return float(self.sp.dpower(t, side)) + corr / (self.t_end - self.t_start)

    def s(self, t: float) -> float:
        """Subtracted amplitude, in ``[0, A - B]``; exact at both ends."""
        t = float(t)
        if t <= self.t_start:
            return 0.0
        top = self.A - self.B
        if t >= self.t_end:
            return top
        return min(max(self.A - self.E_power(t) / self.N_phi, 0.0), top)

    def G(self, t: float) -> _StageG:
        return _StageG(self.A, self.s(t), self.plateau)

    def profile(self, t: float) -> ScalarField2D:
        return _StageProfile(self.G(t), self.fk)

    def f_jet(self, x1, x2, t):
        return self.profile(t).jet(x1, x2)

    def phi(self, x1, x2):
        return self.plateau(self.fk(x1, x2))

    def dt_norm_sq(self, x1, x2, t):
        """``(2/p) f^{2-p} d_t f^p`` with ``d_t f^p = (dE^p/dt) Psi(f_k) / N_phi``."""
        x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        fk = self.fk(x1, x2)
        ps = self.plateau(fk)
        dfp = self.dE_power(t) * ps / self.N_phi
        if self.p == 2:
            return dfp
        out = np.zeros(fk.shape)
        m = ps > 0
        f = self.G(t)(fk[m])
        out[m] = (2.0 / self.p) * f ** (2 - self.p) * dfp[m]
        return out

    def norm_power(self, t: float, p: float | None = None) -> float:
        """``||u_k(t)||_p^p = A ||f_k||_p^p - s(t) N_phi`` (closed form for the stage's ``p``)."""
        if p is None or p == self.p:
            return self.A * self.N_f - self.s(t) * self.N_phi
        return lp_power(self.profile(t), p)

    def sample_times(self, n: int) -> np.ndarray:
        return np.linspace(self.t_start, self.t_end, n)

    # certification helpers ----------------------------------------------

    def edge_grid(self, n: int = 150, interior: int = 5):
        """1D node sets resolving the ``eta``-transitions of ``f_k``."""
        r = self.rect
        return (_edge_nodes(r.a1, r.b1, self.eta, n, interior), _edge_nodes(r.a2, r.b2, self.eta, n, interior))

    def level_set_margin(self, n: int = 150) -> tuple[float, tuple]:
        """``min (log f_k - log y1)`` over grid points with ``Lf_k <= 0``.

        The margin is positive when ``{f_k < y1}`` lies inside
        ``{Lf_k > 0}``. The separable form lets the 2D grid be evaluated
        from 1D data.
        """
        g1, g2 = self.edge_grid(n)
        l1, r1, r11 = self.fk.g1.log_derivs(g1)
        l2, r2, r22 = self.fk.g2.log_derivs(g2)
        R = r11[:, None] + (r22 + r2 / g2 - 1 / g2 ** 2)[None, :]
        logf = l1[:, None] + l2[None, :]
        bad = R <= 0
        if not np.any(bad):
            return math.inf, None
        m = np.where(bad, logf - math.log(self.plateau.y1), np.inf)
        i, j = np.unravel_index(int(np.argmin(m)), m.shape)
        return float(m[i, j]), (float(g1[i]), float(g2[j]))

    def sup_f_Lf(self, p: float | None = None, times: int = 3, n: int = 120) -> float:
        """``1.05 sup |f^{p-1} Lf|`` over the edge grid at sampled times."""
        p = self.p if p is None else p
        g1, g2 = self.edge_grid(n)
        X1, X2 = np.meshgrid(g1, g2, indexing="ij")
        best = 0.0
        for t in self.sample_times(times):
            j = self.f_jet(X1, X2, float(t))
            Lf = j[3] + j[5] + j[2] / X2 - j[0] / X2 ** 2
            best = max(best, float((np.abs(j[0]) ** (p - 1) * np.abs(Lf)).max()))
        return 1.05 * best

    def ramp_viscosity(self, zeta: float, sigmas: int = 9, n: int = 120) -> float:
        """Largest ``nu`` keeping the residual negative on the plateau ramp.

        On ``y0 <= f_k <= y1`` the rate satisfies
        ``|d_t f^p| >= (zeta/2) Psi(f_k) / N_phi``. ``L(G o f_k)`` can be
        negative there, and ``nu`` must stay below
        ``|d_t f^p| / (p |f^{p-1} Lf|)`` wherever it is. The bound is
        sampled over ``s / A`` in ``[0, 1 - B/A]``.
        """
        g1, g2 = self.edge_grid(n)
        X1, X2 = np.meshgrid(g1, g2, indexing="ij")
        fj = self.fk.jet(X1, X2)
        ramp = (fj[0] >= self.plateau.y0) & (fj[0] <= self.plateau.y1)
        if not np.any(ramp):
            return math.inf
        fj = fj[:, ramp]
        x2 = X2[ramp]
        rate = 0.5 * zeta * self.plateau(fj[0]) / self.N_phi
        best = math.inf
        for sig in np.linspace(0.0, 1.0 - self.B / self.A, sigmas):
            G = _StageG(self.A, sig * self.A, self.plateau)
            j = jet2_compose(G.derivs(fj[0], 2), fj)
            Lf = j[3] + j[5] + j[2] / x2 - j[0] / x2 ** 2
            neg = Lf < 0
            if np.any(neg):
                ratio = rate[neg] / (self.p * j[0][neg] ** (self.p - 1) * -Lf[neg])
                best = min(best, float(ratio.min()))
        return best


def build_stage(k: int, plan: StagePlan, cal: Calibration, smoothed: SmoothedProfile,
                plateau: LevelPlateau | None = None, bump: BumpProfile | None = None) -> StageField:
    """Stage field ``u_k`` on ``[t_k, t_{k+1}]``."""
    if not 0 <= k < plan.K:
        raise PreconditionError(f"stage index {k} outside 0..{plan.K - 1}")
    plateau = plateau or LevelPlateau(p=plan.p)
    return StageField(k, plan.times[k], plan.times[k + 1], cal.A[k], cal.B[k], cal.rects[k], cal.eta,
                      cal.N_phi[k], cal.N_f[k], smoothed, plateau, bump or default_bump())


# ---------------------------------------------------------------------------
# synthesis


@dataclass
class SynthesisResult:
    solution: PiecewiseSolution
    report: Report
    smoothed: SmoothedProfile
    plan: StagePlan
    calibration: Calibration | None
    energy: dict
    constants: dict

    @property
    def passed(self) -> bool:
        return self.report.passed


def _switch_points(a: StageField, n: int):
    g1, g2 = a.edge_grid(n, interior=3)
    # also resolve the next stage's transitions, one frame further in
    r = a.rect.shrink(a.eta)
    h1 = _edge_nodes(r.a1, r.b1, a.eta, n, 3)
    h2 = _edge_nodes(r.a2, r.b2, a.eta, n, 3)
    return np.union1d(g1, h1)[:, None], np.union1d(g2, h2)[None, :]


def synthesize(U: Rect, eps: float, T: float, e: EnergyProfile, p: float = 2.0, scheme: str = "power",
               n_times: int = 100, nsi_samples: int = 500, seed: int = 0, switch_grid: int = 40,
               bump: BumpProfile | None = None, a: float | None = None) -> SynthesisResult:
    """Staged solution with ``| ||u(t)||_p - e(t) | <= eps`` on ``[0, T]``.

    The budget is split evenly. ``eps/2`` goes to smoothing. The other
    ``eps/2`` is the stage threshold and bounds the stage energy error.

    Certified on output:

    - the deviation bound at ``n_times`` times
    - the stage energy bound
    - endpoint identities of every ``E_k``
    - level-set inclusion and positivity of every stage
    - the combination condition at every switch
    - the NSI at ``nsi_samples`` sampled ``(point, t)`` pairs for each of
      ``nu in {0, nu0/2, nu0}``
    """
    if U.a2 <= 0:
        raise PreconditionError("U must lie strictly above the axis")
    bump = bump or default_bump()
    eps_s = eps_c = 0.5 * eps
    rep = Report()
    smoothed, zeta = smooth_profile(e, eps_s, T, p=p, scheme=scheme, horizon=2 * T,
                                    jumps=detect_jumps(e, eps))
    rep.extend(smoothed.report, "smoothing.")
    plateau = LevelPlateau(p=p)
    cp = plateau.cp
    plan = plan_stages(smoothed, eps_c, cp ** (1.0 / p), p=p)
    K = plan.K
    cal = calibrate(U, plan, eps_c, zeta, bump, plateau, a) if K else None
    stages = [build_stage(k, plan, cal, smoothed, plateau, bump) for k in range(K)]
    t_K = float(plan.times[-1])

    # per-stage certificates
    if K:
        rep.add(_positivity_check(plateau, max(1.0 - s.B / s.A for s in stages)))
        margins = [s.level_set_margin() for s in stages]
        i = int(np.argmin([m for m, _ in margins]))
        rep.add(Check("plateau_covers_negative_Lf", "Section 4: Lf_k > 0 off the plateau {phi_k = 1}",
                      margins[i][0] > 0, margins[i][0], margins[i][1], {"stage": i}))
        rep.add(_endpoint_check(stages, plan))
        rep.add(_decay_check(stages, zeta))

    # viscosity
    if K:
        chi = math.sqrt(cal.chi_p) if p == 2 else cal.chi_p ** (1.0 / p)
        nu_formula = compute_nu0(stages, zeta, chi, p=p, times=3, max_fields=5)
        picks = sorted({0, K // 2, K - 1})
        nu_ramp = min(stages[k].ramp_viscosity(zeta) for k in picks)
        nu0 = min(nu_formula, 0.9 * nu_ramp)
    else:
        nu_formula = nu_ramp = nu0 = 1.0
    for s in stages:
        s.nu0 = nu0

    # chain with the zero tail
    tail = ZeroField(t_K, max(T, t_K), (U,))
    chain = stages + ([tail] if max(T, t_K) > t_K or not stages else [])
    sol = _chain(chain, nu0, switch_grid, rep)

    # energy table
    ts = np.linspace(0.0, T, n_times)
    norms = np.array([max(sol.stage_at(t).norm_power(t, p), 0.0) ** (1.0 / p) for t in ts])
    target = e(ts)
    dev = np.abs(norms - target)
    j = int(np.argmax(dev))
    rep.add(Check("deviation", "Theorem 1.4: | ||u(t)|| - e(t) | <= eps", bool(dev.max() <= eps),
                  float(eps - dev.max()), (float(ts[j]),), {"max_deviation": float(dev.max())}))
    if K:
        rep.add(_stage_energy_check(stages, e, eps, p))

    # NSI sampling
    if K:
        rep.extend(_nsi_sampling(sol, stages, U, T, nu0, nsi_samples, seed))
    inside = all(U.contains(*s.rect.center) and s.rect.a1 >= U.a1 and s.rect.b1 <= U.b1
                 and s.rect.a2 >= U.a2 and s.rect.b2 <= U.b2 for s in stages)
    rep.add(Check("support_in_U", "Theorem 1.4: supp u(t) inside the closure of R(U)", inside, 0.0, None))

    consts = {
        "K": K, "c": plan.c, "c_p": plan.cp, "zeta": zeta, "nu0": nu0, "nu0_formula": nu_formula,
        "nu0_ramp": nu_ramp, "eps": eps, "eps_smoothing": eps_s, "eps_stages": eps_c, "p": p,
        "T": T, "t_K": t_K, "switch_times": [float(t) for t in plan.times],
        "plateau": [plateau.y0, plateau.y1], "scheme": scheme,
        "jumps": list(smoothed.jumps), "mollifier_radii": list(smoothed.radii),
    }
    if cal is not None:
        consts.update({"eta": cal.eta, "mu": cal.mu, "D": cal.D, "d": plan.d, "frame_p": cal.frame_p,
                       "frame_bound": cal.frame_bound, "norm_chi_U_p": cal.chi_p,
                       "eta_halvings": cal.halvings})
    rep.meta.update(consts)
    sol.meta.update(consts)
    sol.report = rep
    energy = {"t": ts, "norm": norms, "target": target, "deviation": dev}
    return SynthesisResult(sol, rep, smoothed, plan, cal, energy, consts)


def _chain(chain, nu0, n, rep: Report) -> PiecewiseSolution:
    """Concatenate with switch checks on grids that resolve the frames."""
    worst = (math.inf, None, -1)
    for k in range(len(chain) - 1):
        a, b = chain[k], chain[k + 1]
        if abs(a.t_end - b.t_start) > 1e-12 * max(1.0, abs(b.t_start)):
            raise PreconditionError(f"stages {k} and {k + 1} do not abut")
        t = b.t_start
        pts = _switch_points(a, n) if isinstance(a, StageField) else None
        chk = combination_check(a.profile(t), b.profile(t), points=pts, rects=a.rects, grid=n,
                                name=f"combination_t{k + 1}", t=t)
        if chk.margin < worst[0]:
            worst = (chk.margin, chk.witness, k + 1)
        if not chk.passed:
            rep.add(chk)
    if len(chain) > 1:
        rep.add(Check("combination_all_switches", "Section 3.1: |u_{k+1}(t_k)| <= |u_k(t_k)| at every switch",
                      worst[0] >= -1e-12, float(worst[0]), worst[1], {"switch": worst[2], "count": len(chain) - 1}))
    return PiecewiseSolution(list(chain), nu0, Report())


def _positivity_check(plateau: LevelPlateau, sigma_max: float) -> Check:
    y = np.concatenate([np.linspace(plateau.y0, plateau.y1, 20001), [1.0]])
    m = 1.0 - sigma_max * plateau(y) / y ** plateau.p
    i = int(np.argmin(m))
    return Check("stage_positivity", "Section 4: f_{k,t}^p > 0 on U^k (min of 1 - s Psi(y)/(A y^p))",
                 bool(m.min() > 0), float(m.min()), (float(y[i]),), {"sigma_max": sigma_max})


def _endpoint_check(stages, plan: StagePlan) -> Check:
    worst, where = 0.0, None
    for s in stages:
        e0 = s.E_power(s.t_start) / (s.A * s.N_phi) - 1.0
        e1 = s.E_power(s.t_end) / (s.B * s.N_phi) - 1.0
        r = s.B / s.A - (1.0 - plan.cp) if not plan.is_jump[s.k] else 0.0
        for v in (e0, e1, r):
            if abs(v) > abs(worst):
                worst, where = v, (s.k,)
    return Check("E_endpoints", "Section 4: E_k(t_k)^p = A_k ||u[phi_k]||^p and E_k(t_{k+1})^p = (1-c^p) E_k(t_k)^p",
                 abs(worst) <= 1e-12, float(1e-12 - abs(worst)), where, {"max_rel_error": abs(worst)})


def _decay_check(stages, zeta) -> Check:
    worst, where = math.inf, None
    for s in stages:
        for t in s.sample_times(5):
            m = -0.5 * zeta - s.dE_power(t)
            if m < worst:
                worst, where = m, (float(t),)
    return Check("E_decay", "Section 4: (E_k^p)' < -zeta/2", worst > 0, float(worst), where)


def _stage_energy_check(stages, e: EnergyProfile, eps: float, p: float) -> Check:
    worst, where = math.inf, None
    for s in stages:
        for t in s.sample_times(5):
            if t > e.T:
                continue  # stages in the tail past T

            # the stage meets e from the left at its end time
            et = float(e.left_limit(np.array(t)) if t == s.t_end else e(np.array(t)))
            m = 0.5 * eps ** p - abs(s.norm_power(t) - et ** p)
            if m < worst:
                worst, where = m, (float(t),)
    return Check("stage_energy", "Section 4: | ||u_k(t)||^p - e(t)^p | <= eps^p / 2", worst >= 0, float(worst), where)


def _nsi_sampling(sol: PiecewiseSolution, stages, U: Rect, T: float, nu0: float, n: int, seed: int) -> Report:
    rep = Report()
    rng = np.random.default_rng(seed)
    t_hi = stages[-1].t_end
    ts = rng.uniform(0.0, min(T, t_hi), n)
    pts = np.empty((n, 2))
    half = n // 2
    pts[:half, 0] = rng.uniform(U.a1, U.b1, half)
    pts[:half, 1] = rng.uniform(U.a2, U.b2, half)
    # the rest in the 2-frame band of the active stage, where everything happens
    for i in range(half, n):
        st = sol.stage_at(ts[i])
        r, eta = st.rect, st.eta
        side = rng.integers(4)
        d = rng.uniform(0.0, 2.0 * eta)
        along = rng.uniform(0.0, 1.0)
        if side == 0:
            pts[i] = (r.a1 + d, r.a2 + along * (r.b2 - r.a2))
        elif side == 1:
            pts[i] = (r.b1 - d, r.a2 + along * (r.b2 - r.a2))
        elif side == 2:
            pts[i] = (r.a1 + along * (r.b1 - r.a1), r.a2 + d)
        else:
            pts[i] = (r.a1 + along * (r.b1 - r.a1), r.b2 - d)
    for label, nu in (("0", 0.0), ("nu0/2", 0.5 * nu0), ("nu0", nu0)):
        res = np.array([nsi_residual(sol, nu, pts[i], ts[i]) for i in range(n)])
        i = int(np.argmax(res))
        rep.add(Check(f"nsi_nu={label}", "NSI: d_t|u|^2 - 2 nu u.Lap u + u.grad(|u|^2 + 2p) <= 0 at (x, 0, t)",
                      bool(res.max() <= RESIDUAL_TOL), float(RESIDUAL_TOL - res.max()),
                      (float(pts[i, 0]), float(pts[i, 1]), float(ts[i])),
                      {"nu": nu, "samples": n, "max_residual": float(res.max())}))
    return rep


# ---------------------------------------------------------------------------
# almost-constant solutions


class AlmostConstantField(TimeDependentField):
    """``u(t) = u[f_t]`` with ``f_t^2 = F^2 - delta t phi`` on ``[0, T]``.

    ``F = f`` in the initial mode and ``F = (1 + eps') f`` in the final
    mode. The planar part ``v`` of the structure is dropped (``v = 0``).
    """

    def __init__(self, F: ScalarField2D, f: ScalarField2D, phi: ScalarField2D, delta: float, T: float,
                 mode: str, eps_prime: float, nu0: float = math.inf):
        self.F, self.f, self.phi = F, f, phi
        self.delta, self.t_start, self.t_end = float(delta), 0.0, float(T)
        self.mode, self.eps_prime, self.nu0 = mode, float(eps_prime), nu0
        self.rects = tuple(F.supports())
        b1 = set(F.breaks()[0]) | set(phi.breaks()[0])
        b2 = set(F.breaks()[1]) | set(phi.breaks()[1])
        self._breaks = (tuple(sorted(b1)), tuple(sorted(b2)))

    def f_jet(self, x1, x2, t):
        Fj = self.F.jet(x1, x2)
        if t == 0:
            return Fj
        pj = self.phi.jet(x1, x2)
        on = pj[0] > 0
        if not np.any(on):
            return Fj
        g = jet2_mul(Fj, Fj) - self.delta * t * pj
        out = Fj.copy()
        gs = g[:, on]
        r = np.sqrt(gs[0])
        G = np.stack([r, 0.5 / r, -0.25 / (r * gs[0])])
        out[:, on] = jet2_compose(G, gs)
        # stable value: F - delta t phi / (f_t + F)
        out[0, on] = Fj[0, on] - self.delta * t * pj[0, on] / (r + Fj[0, on])
        return out

    def profile(self, t: float) -> ScalarField2D:
        return Callable2D(lambda a, b: self.f_jet(a, b, t), support=self.F.support, breaks=self._breaks,
                          value=lambda a, b: self.value(a, b, t))

    def value(self, x1, x2, t):
        """``f_t`` alone, in the cancellation-free form."""
        Fv = self.F(x1, x2)
        if t == 0:
            return Fv
        pv = self.phi(x1, x2)
        ft = np.sqrt(np.maximum(Fv * Fv - self.delta * t * pv, 0.0))
        return Fv - self.delta * t * pv / np.where(ft + Fv > 0, ft + Fv, 1.0)

    def dt_norm_sq(self, x1, x2, t):
        return -self.delta * self.phi(x1, x2)

    def norm_power(self, t: float, p: float) -> float:
        """``||u(t)||_p^p``; for ``p = 2`` the closed form ``||F||^2 - delta t ||phi||_1``."""
        if p != 2:
            return lp_power(self.profile(t), p)
        if not hasattr(self, "_sq"):
            self._sq = (lp_power(self.F, 2.0), lp_power(self.phi, 1.0))
        return self._sq[0] - self.delta * t * self._sq[1]

    def difference(self, t: float) -> ScalarField2D:
        """``f_t - f``, with the cancellation worked out in closed form."""
        def fn(a, b):
            Fv, fv, pv = self.F(a, b), self.f(a, b), self.phi(a, b)
            ft = np.sqrt(np.maximum(Fv * Fv - self.delta * t * pv, 0.0))
            val = (Fv - fv) - self.delta * t * pv / np.where(ft + Fv > 0, ft + Fv, 1.0)
            return np.stack([val] + [np.zeros_like(val)] * 5)
        return Callable2D(fn, support=self.F.support, breaks=self._breaks)

    def deviation_table(self, times, ps=(1.0, 2.0, math.inf), n: int = 12, sub: int = 4,
                        grid: int = 400) -> np.ndarray:
        """``||u(t) - u[f]||_p`` for many times at once, shape ``(len(times), len(ps))``.

        ``F``, ``f`` and ``phi`` are evaluated once. Finite ``p`` uses a
        composite tensor Gauss rule on the cells between breakpoints, and
        ``p = inf`` a graded grid together with the Gauss nodes.
        """
        from .cutoff import frame_grid
        from .quadrature import gauss_legendre
        r = self.F.support
        gx, gw = gauss_legendre(n)

        def rule(bks, lo, hi):
            e = np.unique(np.clip(np.asarray(bks + (lo, hi)), lo, hi))
            e = np.unique(np.concatenate([np.linspace(a, b, sub + 1) for a, b in zip(e[:-1], e[1:])]))
            h = 0.5 * np.diff(e)[:, None]
            return ((0.5 * (e[1:] + e[:-1]))[:, None] + h * gx).ravel(), (h * gw).ravel()

        x1, w1 = rule(self._breaks[0], r.a1, r.b1)
        x2, w2 = rule(self._breaks[1], r.a2, r.b2)
        X1, X2 = np.meshgrid(x1, x2, indexing="ij")
        W = 2 * math.pi * np.outer(w1, w2 * x2)
        S1, S2 = frame_grid(r, grid, 0.25 * r.min_side)
        P1 = np.concatenate([X1.ravel(), S1])
        P2 = np.concatenate([X2.ravel(), S2])
        Fv, fv, pv = self.F(P1, P2), self.f(P1, P2), self.phi(P1, P2)
        nq = X1.size
        out = np.zeros((len(times), len(ps)))
        for i, t in enumerate(times):
            ft = np.sqrt(np.maximum(Fv * Fv - self.delta * t * pv, 0.0))
            d = np.abs((Fv - fv) - self.delta * t * pv / np.where(ft + Fv > 0, ft + Fv, 1.0))
            for j, q in enumerate(ps):
                if math.isinf(q):
                    out[i, j] = d.max()
                else:
                    out[i, j] = float((d[:nq] ** q * W.ravel()).sum()) ** (1.0 / q)
        return out

    def deviation(self, t: float, p: float, grid: int = 400) -> float:
        """``||u(t) - u[f]||_p``. The ``p = inf`` case is a grid supremum."""
        if t == 0 and self.mode == "initial":
            return 0.0
        return lp_norm(self.difference(t), p, grid=grid, tol=1e-9)


def _min_ratio_log(num: ScalarField2D, phi: ScalarField2D, grid: int, band: float) -> float:
    """``min num^2 / phi`` over ``phi > 0``, from log ratios on an edge-refined grid."""
    from .cutoff import frame_grid
    r = phi.support
    X1, X2 = frame_grid(r, grid, band)
    if isinstance(num, Separable2D) and isinstance(phi, Separable2D):
        lf = num.log_ratios(X1, X2)[0]
        lp = phi.log_ratios(X1, X2)[0]
        with np.errstate(invalid="ignore"):
            lr = np.where(np.isfinite(lp), 2 * lf - lp, np.inf)
        return float(np.exp(lr.min()))
    pv = phi(X1, X2)
    on = pv > 0
    return float((num(X1, X2)[on] ** 2 / pv[on]).min())


def almost_constant(structure: Structure, eps: float, T: float, mode: str = "initial",
                    grid: int = 200) -> AlmostConstantField:
    """Slowly decaying solution generated by a structure.

    ``delta`` starts at half the positivity bound ``min F^2 / (T phi)``. In
    the final mode it is also capped by
    ``delta T phi <= ((1 + eps')^2 - 1) f^2``. It is then halved until
    ``||u(t) - u[f]||_p <= eps`` for ``p = 1, 2, inf`` at ``t = T`` (and at
    ``t = 0`` in the final mode). The deviation is monotone in ``t``.

    ``nu0`` is the smaller of ``0.9 delta / (2 sup |f_t Lf_t|)`` and the
    pointwise bound ``delta phi / (2 |f_t Lf_t|)`` where ``f_t Lf_t < 0``.
    """
    if mode not in ("initial", "final"):
        raise PreconditionError("mode must be 'initial' or 'final'")
    if not (eps > 0 and T > 0):
        raise PreconditionError("eps and T must be positive")
    f, phi = structure.f, structure.phi
    band = structure.band
    norms = [lp_norm(f, q) for q in (1.0, 2.0, math.inf)]
    eps_prime = 0.0 if mode == "initial" else 0.5 * eps / max(norms)
    F = f if mode == "initial" else (f.with_scale(1 + eps_prime) if isinstance(f, Separable2D) else (1 + eps_prime) * f)
    ratio = _min_ratio_log(F, phi, grid, band)
    delta = 0.5 * ratio / T
    if mode == "final":
        delta = min(delta, ((1 + eps_prime) ** 2 - 1) * _min_ratio_log(f, phi, grid, band) / T)
    rep = Report()
    for halvings in range(61):
        u = AlmostConstantField(F, f, phi, delta, T, mode, eps_prime)
        devs = {q: u.deviation(T, q) for q in (1.0, 2.0, math.inf)}
        if mode == "final":
            devs = {q: max(v, u.deviation(0.0, q)) for q, v in devs.items()}
        if max(devs.values()) <= eps:
            break
        delta *= 0.5
    else:
        raise SizingError("delta search did not meet the eps bounds")
    # viscosity
    S, pointwise = 0.0, math.inf
    r = F.support
    from .cutoff import frame_grid
    X1, X2 = frame_grid(r, grid, band)
    pv = phi(X1, X2)
    for t in (0.0, 0.5 * T, T):
        j = u.f_jet(X1, X2, t)
        fLf = j[0] * (j[3] + j[5] + j[2] / X2 - j[0] / X2 ** 2)
        S = max(S, 1.05 * float(np.abs(fLf).max()))
        neg = (fLf < 0) & (pv < 1)
        if np.any(neg):
            pointwise = min(pointwise, float((delta * pv[neg] / (2 * -fLf[neg])).min()))
    nu0 = min(0.9 * delta / (2 * S) if S > 0 else 1.0, 0.9 * pointwise)
    u.nu0 = nu0
    rep.add(Check("positivity", "Lemma 3.2: f^2 - delta t phi > 0 on [0, T]", bool(delta * T < ratio),
                  float(ratio - delta * T), None))
    for q, v in devs.items():
        rep.add(Check(f"deviation_L{q:g}", "Lemma 3.2: ||u(t) - u[f]||_p <= eps", bool(v <= eps),
                      float(eps - v), (T,)))
    u.report = rep
    u.meta = {"delta": delta, "halvings": halvings, "eps_prime": eps_prime, "nu0": nu0, "mode": mode,
              "sup_f_Lf": S}
    return u
