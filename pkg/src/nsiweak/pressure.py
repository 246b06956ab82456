"""Pressure of an axisymmetric lift, reduced to the meridional half-plane.

For a divergence-free ``u`` the pressure is the Newtonian potential

    p(x) = \\int Theta(y) / (4 pi |x - y|) dy,   Theta = sum_ij d_i u_j d_j u_i.

``Theta`` is rotation invariant, so integrating out the source angle leaves
a 2D integral over the planar support against the angular kernel

    k(dx1, rho, s) = \\int_0^{2pi} dtheta / (4 pi sqrt(dx1^2 + rho^2 + s^2 - 2 rho s cos theta)),

which has a logarithmic singularity at ``(dx1, s) = (0, rho)``.  The planar
integral is split into a fan of triangles with apex at the target point;
on each triangle the Duffy-type map ``y = P + t^2 (E(sigma) - P)`` turns the
singular integrand into a smooth one on the unit square.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special
from scipy.stats import qmc

from .axisym import AxisymField, cylindrical, lift_jacobian
from .errors import AccuracyError, SingularityError
from .quadrature import adaptive_quad_2d

__all__ = [
    "angular_kernel", "stress_trace", "planar_stress_trace", "PressureEvaluator", "pressure_eval",
    "pressure_monte_carlo",
]


def angular_kernel(dx1, rho, s, method: str = "ellipk"):
    """Angular integral of the Newtonian kernel over the source circle.

    Parameters
    ----------
    dx1, rho, s : array_like
        Axial offset, target distance to the axis, source distance to the axis.
    method : {"ellipk", "quad"}
        Complete elliptic integral (default) or adaptive quadrature in the
        angle (a slow oracle).

    Raises
    ------
    SingularityError
        On the singular circle ``dx1 = 0, rho = s``.
    """
    dx1, rho, s = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (dx1, rho, s)))
    A = dx1 ** 2 + rho ** 2 + s ** 2
    B = 2.0 * rho * s
    gap = dx1 ** 2 + (rho - s) ** 2  # = A - B without cancellation
    if np.any(gap == 0.0):
        raise SingularityError("angular kernel evaluated on the singular circle")
    if method == "ellipk":
        # int_0^{2pi} (A - B cos)^{-1/2} = 4 K(m) / sqrt(A + B), m = 2B / (A + B)
        out = special.ellipkm1(gap / (A + B)) / (math.pi * np.sqrt(A + B))
    elif method == "quad":
        flat = [integrate.quad(lambda th, a=a, b=b: 1.0 / math.sqrt(a - b * math.cos(th)),
                               0.0, math.pi, epsabs=0.0, epsrel=1e-13, limit=200)[0]
                for a, b in zip(A.ravel(), B.ravel())]
        out = np.reshape(flat, A.shape) / (2.0 * math.pi)
    else:
        raise ValueError(f"unknown method {method!r}")
    return float(out) if out.ndim == 0 else out


def planar_stress_trace(u: AxisymField, x1, x2) -> np.ndarray:
    """``Theta`` at planar points ``(x1, x2, 0)``; zero off the support."""
    x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
    out = np.zeros(x1.shape)
    inside = x2 > 0
    if u.support is not None:
        inside &= u.support.contains(x1, x2, closed=True)
    if np.any(inside):
        D = lift_jacobian(u, x1[inside], x2[inside])
        out[inside] = np.einsum("...ij,...ji->...", D, D)
    return out


def stress_trace(u: AxisymField, points) -> np.ndarray:
    """``sum_ij d_i u_j d_j u_i`` at Cartesian points ``(..., 3)``.

    The contraction is invariant under rotations about the axis, so it is
    evaluated at the rotated planar point.
    """
    x1, rho, _ = cylindrical(points)
    out = planar_stress_trace(u, x1, rho)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PressureEvaluator:
    """Pressure ``p[v, f](x1, rho)`` of a lift.

    Parameters
    ----------
    u : AxisymField
    atol : float
        Absolute accuracy target per evaluation.
    rtol : float
        Relative accuracy target per evaluation.
    n : int
        Gauss points per axis per cell of the adaptive rule.
    max_cells : int
        Cell budget per triangle.
    """

    u: AxisymField
    atol: float = 1e-6
    rtol: float = 1e-8
    n: int = 12
    max_cells: int = 100_000

    def theta(self, x1, x2):
        return planar_stress_trace(self.u, x1, x2)

    def _triangle(self, P, V0, V1):
        cross = (V0[0] - P[0]) * (V1[1] - P[1]) - (V0[1] - P[1]) * (V1[0] - P[0])
        if cross == 0.0:
            return 0.0, 0.0
        E = np.asarray(V1) - np.asarray(V0)

        def fn(sig, t):
            r = t * t
            y1 = P[0] + r * (V0[0] + sig * E[0] - P[0])
            y2 = P[1] + r * (V0[1] + sig * E[1] - P[1])
            val = np.zeros_like(sig)
            ok = t > 0
            if np.any(ok):
                k = angular_kernel(P[0] - y1[ok], P[1], y2[ok])
                # Jacobian of (sig, t) -> y is 2 t^3 * cross
                val[ok] = self.theta(y1[ok], y2[ok]) * y2[ok] * k * 2.0 * t[ok] ** 3 * cross
            return val

        return adaptive_quad_2d(fn, (0.0, 1.0, 0.0, 1.0), tol=self.rtol, atol=0.25 * self.atol,
                                n=self.n, max_cells=self.max_cells, strict=False)

    def evaluate(self, x1: float, rho: float) -> tuple[float, float]:
        """``(p, error_estimate)`` at the planar point ``(x1, rho)``."""
        P = (float(x1), float(rho))
        total, err = 0.0, 0.0
        for r in self.u.f.supports():
            verts = [(r.a1, r.a2), (r.b1, r.a2), (r.b1, r.b2), (r.a1, r.b2)]
            for i in range(4):
                v, e = self._triangle(P, verts[i], verts[(i + 1) % 4])
                total += v
                err += e
        return total, err

    def __call__(self, x1: float, rho: float) -> float:
        return pressure_eval(self, x1, rho)


def pressure_eval(pe: PressureEvaluator, x1: float, rho: float) -> float:
    """Pressure at ``(x1, rho)``; raises :class:`AccuracyError` if the target is missed."""
    val, err = pe.evaluate(x1, rho)
    if not err <= max(pe.atol, pe.rtol * abs(val)):
        raise AccuracyError("pressure quadrature missed its target", val, err)
    return val


def pressure_monte_carlo(u: AxisymField, point, samples: int = 10_000_000, seed: int = 0,
                         sampler: str = "sobol", batches: int = 10) -> tuple[float, float]:
    """Direct 3D Monte-Carlo estimate of the pressure at a Cartesian point.

    Sources are drawn from the bounding box of the solid of revolution of
    each support rectangle and the Newtonian kernel is applied in Cartesian
    coordinates; neither the angular kernel nor the planar quadrature is
    reused (``Theta`` itself comes from :func:`stress_trace`).  With
    ``sampler="sobol"`` each of ``batches`` independent scrambles of a Sobol
    sequence contributes ``samples / batches`` points (rounded up to a power
    of two) and the spread of the batch means gives the standard error;
    ``sampler="random"`` uses i.i.d. uniform points.

    Returns
    -------
    estimate, std_error : float
    """
    x = np.asarray(point, dtype=float)
    m = max(int(math.ceil(math.log2(max(samples // batches, 2)))), 1)
    ests = np.zeros(batches)
    for r in u.f.supports():
        lo = np.array([r.a1, -r.b2, -r.b2])
        hi = np.array([r.b1, r.b2, r.b2])
        vol = float(np.prod(hi - lo))
        for b in range(batches):
            if sampler == "sobol":
                Z = qmc.Sobol(3, scramble=True, seed=seed + b).random_base2(m)
            elif sampler == "random":
                Z = np.random.default_rng(seed + b).random((2 ** m, 3))
            else:
                raise ValueError(f"unknown sampler {sampler!r}")
            acc = 0.0
            for Zc in np.array_split(Z, max(1, Z.shape[0] // 500_000)):
                Y = lo + (hi - lo) * Zc
                acc += (stress_trace(u, Y) / (4 * math.pi * np.linalg.norm(Y - x, axis=1))).sum()
            ests[b] += vol * acc / Z.shape[0]
    return float(ests.mean()), float(ests.std(ddof=1) / math.sqrt(batches))
