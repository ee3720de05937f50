"""Deterministic quadrature rules used for cell means and reference integrals.

All rules return (points, weights) with weights summing to the measure of the
integration domain, so ``weights @ f(points)`` approximates the integral and
``weights @ f(points) / measure`` the mean.
"""
from __future__ import annotations

import math

import numpy as np

# Degree-5 rule on the reference triangle (7 points: centroid plus two
# three-point orbits).  Barycentric coordinates and weights as fractions of
# the triangle area.
_SQRT15 = math.sqrt(15.0)
_TRI_A = (6.0 - _SQRT15) / 21.0
_TRI_B = (6.0 + _SQRT15) / 21.0
_TRI_WA = (155.0 - _SQRT15) / 1200.0
_TRI_WB = (155.0 + _SQRT15) / 1200.0
_TRI_BARY = np.array(
    [
        [1 / 3, 1 / 3, 1 / 3],
        [_TRI_A, _TRI_A, 1 - 2 * _TRI_A],
        [_TRI_A, 1 - 2 * _TRI_A, _TRI_A],
        [1 - 2 * _TRI_A, _TRI_A, _TRI_A],
        [_TRI_B, _TRI_B, 1 - 2 * _TRI_B],
        [_TRI_B, 1 - 2 * _TRI_B, _TRI_B],
        [1 - 2 * _TRI_B, _TRI_B, _TRI_B],
    ]
)
_TRI_WEIGHTS = np.array([9 / 40, _TRI_WA, _TRI_WA, _TRI_WA, _TRI_WB, _TRI_WB, _TRI_WB])


def gauss_legendre(npts: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [-1, 1]."""
    return np.polynomial.legendre.leggauss(npts)


def interval_rule(a: float, b: float, npts: int = 4) -> tuple[np.ndarray, np.ndarray]:
    x, w = gauss_legendre(npts)
    half = 0.5 * (b - a)
    pts = a + half * (x + 1.0)
    return pts.reshape(-1, 1), w * half


def rectangle_rule(lo, hi, npts: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss rule on an axis-aligned rectangle given by corner arrays."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    x, w = gauss_legendre(npts)
    axes_pts = []
    axes_w = []
    for d in range(lo.size):
        half = 0.5 * (hi[d] - lo[d])
        axes_pts.append(lo[d] + half * (x + 1.0))
        axes_w.append(w * half)
    grids = np.meshgrid(*axes_pts, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    wgrid = axes_w[0]
    for d in range(1, lo.size):
        wgrid = np.multiply.outer(wgrid, axes_w[d])
    return pts, wgrid.ravel()


def triangle_rule(verts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Degree-5 rule on the triangle with vertex rows ``verts`` (3, 2)."""
    pts = _TRI_BARY @ verts
    v0, v1, v2 = verts
    area = 0.5 * abs(
        (v1[0] - v0[0]) * (v2[1] - v0[1]) - (v2[0] - v0[0]) * (v1[1] - v0[1])
    )
    return pts, _TRI_WEIGHTS * area


def subdivision_rule(verts: np.ndarray, n: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Midpoint rule on n^2 congruent pieces; for rough (indicator) integrands.

    Works on intervals (2 vertex rows, 1d), axis-aligned rectangles (4 rows),
    and triangles (3 rows).  64 subsamples per cell at the default n = 8.
    """
    verts = np.asarray(verts, dtype=float)
    if verts.shape[1] == 1:
        a, b = float(verts.min()), float(verts.max())
        edges = np.linspace(a, b, n * n + 1)
        mids = 0.5 * (edges[:-1] + edges[1:])
        w = np.full(n * n, (b - a) / (n * n))
        return mids.reshape(-1, 1), w
    if verts.shape[0] == 4:
        lo = verts.min(axis=0)
        hi = verts.max(axis=0)
        xs = np.linspace(lo[0], hi[0], n + 1)
        ys = np.linspace(lo[1], hi[1], n + 1)
        mx = 0.5 * (xs[:-1] + xs[1:])
        my = 0.5 * (ys[:-1] + ys[1:])
        gx, gy = np.meshgrid(mx, my, indexing="ij")
        pts = np.stack([gx.ravel(), gy.ravel()], axis=-1)
        w = np.full(n * n, (hi[0] - lo[0]) * (hi[1] - lo[1]) / (n * n))
        return pts, w
    # Triangle: uniform refinement into n^2 congruent subtriangles, centroid rule.
    v0, v1, v2 = verts
    e1 = (v1 - v0) / n
    e2 = (v2 - v0) / n
    area = 0.5 * abs(
        (v1[0] - v0[0]) * (v2[1] - v0[1]) - (v2[0] - v0[0]) * (v1[1] - v0[1])
    )
    cents = []
    for i in range(n):
        for j in range(n - i):
            base = v0 + i * e1 + j * e2
            # upward subtriangle (base, base+e1, base+e2)
            cents.append(base + (e1 + e2) / 3.0)
            if j < n - i - 1:
                # downward subtriangle (base+e1, base+e1+e2, base+e2)
                cents.append(base + (2.0 * e1 + 2.0 * e2) / 3.0)
    pts = np.array(cents)
    w = np.full(len(cents), area / (n * n))
    return pts, w


def cell_rule(verts: np.ndarray, order: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature over one mesh cell given its vertex array.

    Intervals and axis-aligned rectangles get tensor Gauss rules exact at
    least to degree 2*order - 1; triangles get the degree-5 rule.
    """
    verts = np.asarray(verts, dtype=float)
    if verts.shape[1] == 1:
        return interval_rule(float(verts.min()), float(verts.max()), order)
    if verts.shape[0] == 3:
        return triangle_rule(verts)
    if verts.shape[0] == 4:
        return rectangle_rule(verts.min(axis=0), verts.max(axis=0), order)
    raise ValueError(f"unsupported cell geometry with {verts.shape[0]} vertices")
