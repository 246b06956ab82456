"""Axisymmetric lifts ``u[v, f]`` and the cylindrical calculus around them.

The lift of planar data ``(v, f)`` is

    u(x1, rho, theta) = v1 e_1 + v2 e_rho + sqrt(f^2 - |v|^2) e_theta,

so ``|u| = f`` pointwise.  All 3D quantities here are reduced to the
meridional half-plane ``(x1, x2 = rho)``; finite differences appear only in
:func:`axisym_identities`, which exists to cross-check the reductions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cutoff import axis_nodes
from .errors import DomainError, NSIError
from .fields import (
    Indicator2D, PlanarVectorField, Rect, ScalarField2D, Scaled2D, Separable2D, Sum2D, Zero2D,
)
from .quadrature import adaptive_quad_1d, adaptive_quad_2d

__all__ = [
    "AxisymField", "InvariantViolation", "lift_eval", "lift_jacobian", "Lf_eval", "lp_norm",
    "lp_power", "axisym_identities", "sup_f_Lf", "cylindrical",
]

RADICAND_TOL = 1e-12


class InvariantViolation(NSIError, ValueError):
    """``f^2 - |v|^2`` is clearly negative at an in-support point."""


@dataclass(frozen=True)
class AxisymField:
    """The lift ``u[v, f]``; ``v = None`` stands for the zero planar field."""

    f: ScalarField2D
    v: PlanarVectorField | None = None

    @property
    def support(self) -> Rect | None:
        return self.f.support

    def azimuthal_jet(self, x1, x2) -> tuple[np.ndarray, np.ndarray | None, np.ndarray | None]:
        """Jets of ``f`` and ``(v1, v2)`` plus value/first partials of ``w``.

        Returns ``(w, a, b)`` where ``w`` has rows ``w, w_1, w_2`` and
        ``a, b`` are the jets of ``v1, v2`` (``None`` if ``v`` is zero).
        """
        fj = self.f.jet(x1, x2)
        if self.v is None:
            return fj[:3], None, None
        a, b = self.v.jets(x1, x2)
        vsq = a[0] ** 2 + b[0] ** 2
        rad = fj[0] ** 2 - vsq
        if np.any(rad < -RADICAND_TOL * np.maximum(1.0, fj[0] ** 2)):
            i = int(np.argmin(rad))
            raise InvariantViolation(f"f^2 - |v|^2 = {np.ravel(rad)[i]:.3e} < 0 inside the support")
        rad = np.maximum(rad, 0.0)
        on_v = vsq > 0
        # off supp v take |f| directly: f^2 underflows where the cutoff is tiny
        w = np.where(on_v, np.sqrt(rad), np.abs(fj[0]))
        safe = np.where(w > 0, w, 1.0)
        w1 = np.where(on_v, (fj[0] * fj[1] - a[0] * a[1] - b[0] * b[1]) / safe, fj[1])
        w2 = np.where(on_v, (fj[0] * fj[2] - a[0] * a[2] - b[0] * b[2]) / safe, fj[2])
        return np.stack([w, w1, w2]), a, b


def cylindrical(points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(x1, rho, theta)`` of Cartesian points with shape ``(..., 3)``."""
    P = np.asarray(points, dtype=float)
    return P[..., 0], np.hypot(P[..., 1], P[..., 2]), np.arctan2(P[..., 2], P[..., 1])


def lift_eval(u: AxisymField, points) -> np.ndarray:
    """Evaluate ``u[v, f]`` at Cartesian points ``(..., 3)``; zero off the support."""
    x1, rho, th = cylindrical(points)
    out = np.zeros(np.shape(points), dtype=float)
    inside = rho > 0
    if u.support is not None:
        inside &= u.support.contains(x1, rho, closed=True)
    if not np.any(inside):
        return out
    w, a, b = u.azimuthal_jet(x1[inside], rho[inside])
    v1 = 0.0 if a is None else a[0]
    v2 = 0.0 if b is None else b[0]
    c, s = np.cos(th[inside]), np.sin(th[inside])
    out[inside, 0] = v1
    out[inside, 1] = v2 * c - w[0] * s
    out[inside, 2] = v2 * s + w[0] * c
    return out


def lift_jacobian(u: AxisymField, x1, rho) -> np.ndarray:
    """Jacobian ``D[..., i, j] = d_i u_j`` at the planar points ``(x1, rho, 0)``.

    At ``theta = 0`` the Cartesian ``x2``-derivative is the radial one and
    ``d_3 = rho^{-1} d_theta``, which rotates ``e_rho`` into ``e_theta``.
    """
    x1, rho = np.broadcast_arrays(np.asarray(x1, float), np.asarray(rho, float))
    if np.any(rho <= 0):
        raise DomainError("the Jacobian is taken at points with rho > 0")
    w, a, b = u.azimuthal_jet(x1, rho)
    z = np.zeros_like(rho)
    v1 = (z, z, z) if a is None else (a[0], a[1], a[2])
    v2 = (z, z, z) if b is None else (b[0], b[1], b[2])
    D = np.empty(rho.shape + (3, 3))
    D[..., 0, :] = np.stack([v1[1], v2[1], w[1]], axis=-1)
    D[..., 1, :] = np.stack([v1[2], v2[2], w[2]], axis=-1)
    D[..., 2, :] = np.stack([z, -w[0] / rho, v2[0] / rho], axis=-1)
    return D


def Lf_eval(f: ScalarField2D, x1, x2):
    """``Lf = f_11 + f_22 + f_2 / x2 - f / x2^2`` from analytic partials."""
    x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
    if np.any(x2 <= 0):
        raise DomainError("Lf is defined on the open half-plane x2 > 0")
    j = f.jet(x1, x2)
    out = j[3] + j[5] + j[2] / x2 - j[0] / x2 ** 2
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# norms


def _profile_of(u):
    return u.f if isinstance(u, AxisymField) else u


def _disjoint(rects) -> bool:
    return all(r.disjoint(q) for i, r in enumerate(rects) for q in rects[i + 1:])


def lp_power(u, p: float, tol: float = 1e-10) -> float:
    """``||u||_p^p = 2 pi \\iint f^p rho`` for a lift, planar profile or indicator."""
    if p < 1:
        raise DomainError("p must be at least 1")
    f = _profile_of(u)
    if isinstance(f, Indicator2D):
        return 2 * math.pi * f.rho_moment()
    if isinstance(f, Scaled2D):
        return abs(f.factor) ** p * lp_power(f.f, p, tol)
    if isinstance(f, Sum2D) and all(t.support is not None for t in f.terms) \
            and _disjoint([t.support for t in f.terms]):
        return sum(lp_power(t, p, tol) for t in f.terms)
    if f.support is None:
        if isinstance(f, Zero2D):
            return 0.0
        raise DomainError("norms need a compactly supported field")
    s = f.support
    if isinstance(f, Separable2D):
        b1, b2 = f.breaks()
        i1, _ = adaptive_quad_1d(lambda x: np.abs(f.g1(x)) ** p, s.a1, s.b1, b1, tol=tol)
        i2, _ = adaptive_quad_1d(lambda x: np.abs(f.g2(x)) ** p * x, s.a2, s.b2, b2, tol=tol)
        return 2 * math.pi * abs(f.scale) ** p * i1 * i2
    b1, b2 = f.breaks()
    val, _ = adaptive_quad_2d(lambda y1, y2: np.abs(f(y1, y2)) ** p * y2, s.bounds, b1, b2,
                              tol=max(tol, 1e-8))
    return 2 * math.pi * val


def lp_norm(u, p: float = 2.0, grid: int = 400, tol: float = 1e-10) -> float:
    """``L^p(R^3)`` norm of a lift via ``|u[v, f]| = f``.

    Finite ``p`` integrates in the meridional plane; ``p = inf`` is the grid
    supremum of ``|f|`` over the support.
    """
    f = _profile_of(u)
    if math.isinf(p):
        if isinstance(f, Indicator2D):
            return 1.0
        rects = f.supports()
        if not rects:
            return 0.0
        vals = [np.abs(f(*_support_grid(r, grid, 0.1 * r.min_side))).max() for r in rects]
        return float(max(vals))
    return lp_power(f, p, tol) ** (1.0 / p)


def _support_grid(r: Rect, n: int, band: float):
    g1 = axis_nodes(r.a1, r.b1, n, band)
    g2 = axis_nodes(r.a2, r.b2, n, band)
    X1, X2 = np.meshgrid(g1, g2, indexing="ij")
    return X1.ravel(), X2.ravel()


def sup_f_Lf(f: ScalarField2D, grid: int = 400, p: float = 2.0, safety: float = 1.05) -> float:
    """``safety * sup |f^{p-1} Lf|`` over a ``grid x grid`` mesh of each support rectangle.

    The mesh is graded toward the edges where the derivatives of the cutoffs
    concentrate; ``p = 2`` gives the quantity ``sup |u . Delta u|``.
    """
    best = 0.0
    for r in f.supports():
        X1, X2 = _support_grid(r, grid, 0.25 * r.min_side)
        j = f.jet(X1, X2)
        Lf = j[3] + j[5] + j[2] / X2 - j[0] / X2 ** 2
        val = np.abs(j[0]) ** (p - 1) * np.abs(Lf)
        best = max(best, float(np.nanmax(val)) if val.size else 0.0)
    return safety * best


# ---------------------------------------------------------------------------
# finite-difference cross-checks


def _fd_partial(fun, P, axis, h):
    e = np.zeros(3)
    e[axis] = h
    return (fun(P + e) - fun(P - e)) / (2 * h)


def _fd_second(fun, P, axis, h):
    e = np.zeros(3)
    e[axis] = h
    # fourth-order five-point stencil
    return (-fun(P + 2 * e) + 16 * fun(P + e) - 30 * fun(P) + 16 * fun(P - e)
            - fun(P - 2 * e)) / (12 * h * h)


def axisym_identities(u: AxisymField, point, h: float = 1e-5, h_lap: float = 1e-4) -> dict:
    """Finite-difference residuals of the lift identities at a 3D point.

    Returns
    -------
    dict
        ``divergence``: ``|div u|``; ``laplacian``: ``|Delta u - Lf e_theta|``
        for ``v = 0`` at planar points (``nan`` otherwise); ``d3_norm``:
        ``|d_3 |u||`` at the planar projection ``(x1, rho, 0)``.
    """
    P = np.asarray(point, dtype=float)
    fun = lambda Q: lift_eval(u, Q)
    div = sum(_fd_partial(fun, P, i, h)[i] for i in range(3))
    x1, rho, _ = cylindrical(P)
    planar = np.array([x1, rho, 0.0])
    norm = lambda Q: np.linalg.norm(lift_eval(u, Q))
    d3 = (norm(planar + [0, 0, h]) - norm(planar - [0, 0, h])) / (2 * h)
    lap = float("nan")
    if u.v is None and abs(P[2]) == 0.0 and P[1] > 0:
        L = sum(_fd_second(fun, P, i, h_lap) for i in range(3))
        lap = float(np.linalg.norm(L - np.array([0.0, 0.0, Lf_eval(u.f, P[0], P[1])])))
    return {"divergence": float(abs(div)), "laplacian": lap, "d3_norm": float(abs(d3))}
