"""Adaptive Gauss-Legendre quadrature on intervals and rectangles.

Both integrators compare an ``n``-point rule with a ``2n``-point rule on each
cell and bisect the cells carrying the largest error estimates until the
summed estimate meets the requested tolerance.  Evaluations are batched so
the integrand is called once per refinement round with flat arrays.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import AccuracyError

__all__ = ["gauss_legendre", "adaptive_quad_1d", "adaptive_quad_2d", "split_points"]


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the ``n``-point rule on [-1, 1] (read-only arrays)."""
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def split_points(a: float, b: float, breaks) -> np.ndarray:
    """Sorted unique points ``a < ... < b`` including the interior breaks."""
    pts = [a, b] + [float(t) for t in breaks if a < t < b]
    pts = np.unique(np.asarray(pts, dtype=float))
    return pts


def _rule_1d(lo, hi, n):
    x, w = gauss_legendre(n)
    half = 0.5 * (hi - lo)[:, None]
    mid = 0.5 * (hi + lo)[:, None]
    return mid + half * x[None, :], half * w[None, :]


def adaptive_quad_1d(fn, a: float, b: float, breaks=(), tol: float = 1e-10,
                     atol: float = 1e-300, n: int = 16, max_rounds: int = 60,
                     strict: bool = True):
    """Integrate a vectorized ``fn`` over ``[a, b]``.

    Parameters
    ----------
    fn : callable
        Maps an array of abscissae to an array of the same shape.
    breaks : iterable of float
        Points where ``fn`` is not smooth; cells never straddle them.
    tol, atol : float
        Target ``err <= max(tol * |I|, atol)``.

    Returns
    -------
    value, error : float
    """
    if b <= a:
        return 0.0, 0.0
    pts = split_points(a, b, breaks)
    lo, hi = pts[:-1], pts[1:]
    done_val = 0.0
    done_err = 0.0
    for _ in range(max_rounds):
        xs1, ws1 = _rule_1d(lo, hi, n)
        xs2, ws2 = _rule_1d(lo, hi, 2 * n)
        f1 = np.asarray(fn(xs1.ravel()), dtype=float).reshape(xs1.shape)
        f2 = np.asarray(fn(xs2.ravel()), dtype=float).reshape(xs2.shape)
        i1 = (f1 * ws1).sum(axis=1)
        i2 = (f2 * ws2).sum(axis=1)
        err = np.abs(i2 - i1)
        total = done_val + i2.sum()
        target = max(tol * abs(total), atol)
        if done_err + err.sum() <= target:
            return float(total), float(done_err + err.sum())
        # keep the cells that are already negligible, bisect the rest
        share = target / (2.0 * max(len(lo), 1))
        keep = err <= share
        done_val += i2[keep].sum()
        done_err += err[keep].sum()
        lo_r, hi_r = lo[~keep], hi[~keep]
        mid = 0.5 * (lo_r + hi_r)
        lo = np.concatenate([lo_r, mid])
        hi = np.concatenate([mid, hi_r])
        if len(lo) == 0:
            return float(done_val), float(done_err)
    value = float(done_val + i2.sum())
    error = float(done_err + err.sum())
    if strict:
        raise AccuracyError("1D quadrature did not converge", value, error)
    return value, error


def _rule_2d(cells, n):
    x, w = gauss_legendre(n)
    a1, b1, a2, b2 = cells.T
    h1 = 0.5 * (b1 - a1)
    h2 = 0.5 * (b2 - a2)
    X1 = (0.5 * (a1 + b1))[:, None, None] + h1[:, None, None] * x[None, :, None]
    X2 = (0.5 * (a2 + b2))[:, None, None] + h2[:, None, None] * x[None, None, :]
    X1, X2 = np.broadcast_arrays(X1, X2)
    W = (h1 * h2)[:, None, None] * (w[:, None] * w[None, :])[None]
    return X1, X2, W


def adaptive_quad_2d(fn, rect, breaks1=(), breaks2=(), tol: float = 1e-8,
                     atol: float = 1e-300, n: int = 12, max_rounds: int = 40,
                     max_cells: int = 200_000, strict: bool = True):
    """Integrate ``fn(x1, x2)`` over the rectangle ``rect = (a1, b1, a2, b2)``.

    Cells start as the tensor partition induced by ``breaks1`` and
    ``breaks2`` and are quadrisected adaptively.
    """
    a1, b1, a2, b2 = (float(t) for t in rect)
    if b1 <= a1 or b2 <= a2:
        return 0.0, 0.0
    p1 = split_points(a1, b1, breaks1)
    p2 = split_points(a2, b2, breaks2)
    A1, A2 = np.meshgrid(p1[:-1], p2[:-1], indexing="ij")
    B1, B2 = np.meshgrid(p1[1:], p2[1:], indexing="ij")
    cells = np.stack([A1.ravel(), B1.ravel(), A2.ravel(), B2.ravel()], axis=1)
    done_val = 0.0
    done_err = 0.0
    for _ in range(max_rounds):
        X1, X2, W = _rule_2d(cells, n)
        Y1, Y2, V = _rule_2d(cells, 2 * n)
        f1 = np.asarray(fn(X1.ravel(), X2.ravel()), dtype=float).reshape(X1.shape)
        f2 = np.asarray(fn(Y1.ravel(), Y2.ravel()), dtype=float).reshape(Y1.shape)
        i1 = (f1 * W).sum(axis=(1, 2))
        i2 = (f2 * V).sum(axis=(1, 2))
        err = np.abs(i2 - i1)
        total = done_val + i2.sum()
        target = max(tol * abs(total), atol)
        if done_err + err.sum() <= target:
            return float(total), float(done_err + err.sum())
        share = target / (2.0 * max(len(cells), 1))
        keep = err <= share
        done_val += i2[keep].sum()
        done_err += err[keep].sum()
        c = cells[~keep]
        if len(c) == 0:
            return float(done_val), float(done_err)
        if 4 * len(c) > max_cells:
            break
        m1 = 0.5 * (c[:, 0] + c[:, 1])
        m2 = 0.5 * (c[:, 2] + c[:, 3])
        cells = np.concatenate([
            np.stack([c[:, 0], m1, c[:, 2], m2], axis=1),
            np.stack([m1, c[:, 1], c[:, 2], m2], axis=1),
            np.stack([c[:, 0], m1, m2, c[:, 3]], axis=1),
            np.stack([m1, c[:, 1], m2, c[:, 3]], axis=1),
        ])
    value = float(done_val + i2.sum())
    error = float(done_err + err.sum())
    if strict:
        raise AccuracyError("2D quadrature did not converge", value, error)
    return value, error
