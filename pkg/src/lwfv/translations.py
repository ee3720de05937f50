"""Cell fields, L1 projections, and translation seminorms.

The translation seminorm of a cell field weights each interior face jump by
the dual-volume measure: T(u) = sum_sigma |D_sigma| |u_K - u_L|.  It is
controlled both by the L1 norm of the field (via the mesh regularity
parameters) and, for projections of Lipschitz data, by the mesh size, which
is what makes families of discrete solutions translation-compact.  The
space-time variant adds time jumps weighted by cell measures.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import quadrature
from .mesh import Mesh, MeshFamily, compute_quality, refine
from .operators import InvariantViolation, TimeGrid

__all__ = [
    "IntegrableFunction",
    "interval_indicator",
    "halfplane_indicator",
    "smooth_function",
    "CellField",
    "project_l1",
    "translation_seminorm",
    "SpacetimeSeminorm",
    "spacetime_translation_seminorm",
    "translation_decay_study",
    "DecayRow",
    "uniform_decay_study",
    "UniformDecayResult",
]

GAUSS_ORDER = 4  # points per axis for smooth cell means
SUBSAMPLES = 8  # per-axis subdivision for indicator cell means (8^2 = 64)


@dataclass(frozen=True)
class IntegrableFunction:
    """A scalar function of space with projection metadata.

    ``kind`` selects the cell-mean quadrature: "smooth" uses Gauss rules,
    "indicator" uses exact interval intersection in 1d and a 64-point
    subdivision rule in 2d.  ``lipschitz`` and ``l1_norm`` are optional
    declared constants consumed by the seminorm bounds.
    """

    fn: Callable
    kind: str = "smooth"
    lipschitz: float | None = None
    l1_norm: float | None = None
    name: str = ""
    geometry: tuple | None = None

    def __call__(self, x):
        return self.fn(x)


def smooth_function(fn: Callable, lipschitz: float | None = None,
                    l1_norm: float | None = None, name: str = "") -> IntegrableFunction:
    return IntegrableFunction(fn=fn, kind="smooth", lipschitz=lipschitz,
                              l1_norm=l1_norm, name=name)


def interval_indicator(a: float, b: float, name: str = "") -> IntegrableFunction:
    """Indicator of [a, b] on a 1d domain; projected by exact intersection."""
    if not b > a:
        raise ValueError("empty interval")

    def fn(x):
        x = np.asarray(x, dtype=float)[..., 0]
        return ((x >= a) & (x <= b)).astype(float)

    return IntegrableFunction(
        fn=fn, kind="indicator", l1_norm=b - a,
        name=name or f"indicator[{a},{b}]", geometry=("interval", a, b),
    )


def halfplane_indicator(normal: Sequence[float], offset: float,
                        name: str = "") -> IntegrableFunction:
    """Indicator of the half-plane {x : normal . x <= offset} in 2d."""
    nv = np.asarray(normal, dtype=float)

    def fn(x):
        x = np.asarray(x, dtype=float)
        return (x @ nv <= offset).astype(float)

    return IntegrableFunction(
        fn=fn, kind="indicator",
        name=name or "halfplane", geometry=("halfplane", nv, offset),
    )


@dataclass(frozen=True)
class CellField:
    """One value per cell: the piecewise-constant embedding over the mesh."""

    mesh: Mesh
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.mesh.n_cells,):
            raise ValueError(
                f"expected {self.mesh.n_cells} cell values, got shape {v.shape}"
            )
        object.__setattr__(self, "values", v)

    def l1_norm(self) -> float:
        return float(np.dot(self.mesh.cell_volume, np.abs(self.values)))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))


def _cell_mean(verts: np.ndarray, u: IntegrableFunction, volume: float) -> float:
    if u.kind == "indicator":
        if u.geometry is not None and u.geometry[0] == "interval":
            _, a, b = u.geometry
            lo, hi = float(verts.min()), float(verts.max())
            overlap = max(0.0, min(hi, b) - max(lo, a))
            return overlap / volume
        pts, w = quadrature.subdivision_rule(verts, SUBSAMPLES)
    else:
        pts, w = quadrature.cell_rule(verts, GAUSS_ORDER)
    vals = np.asarray(u.fn(pts), dtype=float)
    return float(np.dot(w, vals)) / volume


def project_l1(mesh: Mesh, u: IntegrableFunction, label: str = "") -> CellField:
    """Cell means of u over every cell.

    Smooth data uses Gauss quadrature exact to degree 2 * GAUSS_ORDER - 1 on
    intervals and rectangles (degree 5 on triangles); indicator data uses
    exact interval intersection in 1d and 64 midpoint subsamples per cell
    in 2d.  Requires cell geometry, so meshes loaded from the text format
    (which does not persist vertices) cannot be projected onto.
    """
    if mesh.cell_vertices is None:
        raise ValueError(
            "mesh has no cell geometry (loaded from file?); "
            "projection needs the generating builder"
        )
    vals = np.array(
        [
            _cell_mean(mesh.cell_vertices[c.id], u, c.volume)
            for c in mesh.cells
        ]
    )
    return CellField(mesh=mesh, values=vals, label=label or u.name)


def translation_seminorm(mesh: Mesh, field: CellField) -> float:
    """Sum over interior faces of |D_sigma| |u_K - u_L|."""
    if field.mesh is not mesh:
        raise ValueError("field does not live on this mesh")
    mask = mesh.interior
    jumps = np.abs(
        field.values[mesh.face_K[mask]] - field.values[mesh.face_L[mask]]
    )
    return float(np.dot(mesh.face_dsig[mask], jumps))


@dataclass(frozen=True)
class SpacetimeSeminorm:
    space_part: float
    time_part: float

    @property
    def total(self) -> float:
        return self.space_part + self.time_part


def spacetime_translation_seminorm(mesh: Mesh, grid: TimeGrid,
                                   values: np.ndarray) -> SpacetimeSeminorm:
    """Space and time jump sums of a scheme history ``values`` (N+1, n_cells).

    The sums follow the slab-mean convention for the piecewise-constant
    embedding u(., t) = u^n on (t_n, t_{n+1}]: the mean of u over slab n is
    the scheme value u^n, so with dt_n = t_{n+1} - t_n,

        space part = sum_{n=0}^{N-1} dt_n sum_sigma |D_sigma| |u^n_K - u^n_L|
        time part  = sum_{n=1}^{N-1} dt_n sum_K |K| |u^n_K - u^{n-1}_K|

    Both sums use only slabs inside (0, T); the time sum compares adjacent
    slab means, which in scheme indexing are the states before and after
    step n.
    """
    vals = np.asarray(values, dtype=float)
    if vals.shape != (grid.n_steps + 1, mesh.n_cells):
        raise ValueError(
            f"expected shape {(grid.n_steps + 1, mesh.n_cells)}, got {vals.shape}"
        )
    dts = grid.deltas
    mask = mesh.interior
    K = mesh.face_K[mask]
    L = mesh.face_L[mask]
    dsig = mesh.face_dsig[mask]
    space = 0.0
    for n in range(grid.n_steps):
        space += dts[n] * float(np.dot(dsig, np.abs(vals[n, K] - vals[n, L])))
    time = 0.0
    for n in range(1, grid.n_steps):
        time += dts[n] * float(
            np.dot(mesh.cell_volume, np.abs(vals[n] - vals[n - 1]))
        )
    return SpacetimeSeminorm(space_part=space, time_part=time)


# ---------------------------------------------------------------------------
# studies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecayRow:
    level: int
    h: float
    T_value: float
    bound_lipschitz: float
    bound_l1: float


def translation_decay_study(family: MeshFamily, u: IntegrableFunction,
                            levels: int) -> list[DecayRow]:
    """T(u) under refinement with its two upper bounds per level.

    The Lipschitz bound 2 * M h |Omega| applies when u declares a Lipschitz
    constant (reported as nan otherwise) and is asserted; the L1 bound
    N_E * theta * |u|_L1 always applies and is asserted.
    """
    meshes = refine(family, levels)
    rows: list[DecayRow] = []
    for lvl, mesh in enumerate(meshes):
        qual = compute_quality(mesh)
        field = project_l1(mesh, u)
        t_val = translation_seminorm(mesh, field)
        l1 = u.l1_norm if u.l1_norm is not None else field.l1_norm()
        bound_l1 = qual.n_faces_max * qual.theta * l1
        if t_val > bound_l1 * (1.0 + 1e-9):
            raise InvariantViolation(
                f"T = {t_val:.6e} exceeds L1 bound {bound_l1:.6e} at level {lvl}"
            )
        if u.lipschitz is not None:
            bound_lip = 2.0 * u.lipschitz * mesh.h_max * mesh.domain_measure
            if t_val > bound_lip * (1.0 + 1e-9):
                raise InvariantViolation(
                    f"T = {t_val:.6e} exceeds Lipschitz bound {bound_lip:.6e} "
                    f"at level {lvl}"
                )
        else:
            bound_lip = math.nan
        rows.append(
            DecayRow(level=lvl, h=mesh.h_max, T_value=t_val,
                     bound_lipschitz=bound_lip, bound_l1=bound_l1)
        )
    return rows


@dataclass(frozen=True)
class UniformDecayResult:
    """Seminorm matrix of a converging sequence: rows by level, columns by
    sequence index, plus the limit column and the per-row uniform bound."""

    levels: list[int]
    hs: list[float]
    matrix: np.ndarray  # (levels, len(sequence))
    limit_column: np.ndarray  # (levels,)
    row_sup: np.ndarray  # (levels,)


def uniform_decay_study(
    family: MeshFamily,
    sequence: Sequence[IntegrableFunction],
    limit: IntegrableFunction,
    levels: int,
    deltas_l1: Sequence[float] | None = None,
) -> UniformDecayResult:
    """Translation seminorms of a whole converging sequence under refinement.

    When ``deltas_l1`` supplies the L1 distances |u_p - limit|, the uniform
    bound T(u_p) <= N_E * theta * |u_p - limit|_L1 + T(limit) is asserted
    for every level and index (with 1e-9 relative slack).
    """
    meshes = refine(family, levels)
    mat = np.zeros((levels, len(sequence)))
    lim_col = np.zeros(levels)
    hs = []
    for lvl, mesh in enumerate(meshes):
        qual = compute_quality(mesh)
        lim_field = project_l1(mesh, limit)
        lim_col[lvl] = translation_seminorm(mesh, lim_field)
        for p, u_p in enumerate(sequence):
            f = project_l1(mesh, u_p)
            mat[lvl, p] = translation_seminorm(mesh, f)
            if deltas_l1 is not None:
                bound = (
                    qual.n_faces_max * qual.theta * deltas_l1[p] + lim_col[lvl]
                )
                if mat[lvl, p] > bound * (1.0 + 1e-9):
                    raise InvariantViolation(
                        f"T[{lvl}][{p}] = {mat[lvl, p]:.6e} exceeds uniform "
                        f"bound {bound:.6e}"
                    )
        hs.append(mesh.h_max)
    return UniformDecayResult(
        levels=list(range(levels)),
        hs=hs,
        matrix=mat,
        limit_column=lim_col,
        row_sup=mat.max(axis=1),
    )
