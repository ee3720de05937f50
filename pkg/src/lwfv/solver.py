"""Explicit cell-centered finite-volume marching for scalar conservation laws.

One step of the scheme updates every cell mean by the net numerical flux
through its faces:

    u_K'  =  u_K - (dt / |K|) * sum_{faces of K} |sigma| * F_sigma . n_K

Face fluxes are computed once per face and accumulated with opposite signs
into the two adjacent cells, so the update conserves mass on periodic
domains by construction.  Boundary handling is a policy: ``periodic``
identifies opposite box faces, ``outflow`` closes boundary faces with the
physical flux of the inside state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .flux import NumericalFlux
from .mesh import Mesh, MeshError
from .operators import TimeGrid
from .translations import CellField, IntegrableFunction, project_l1

__all__ = [
    "Problem",
    "SpaceTimeField",
    "Stepper",
    "BlowUpError",
    "project_initial",
    "select_dt",
    "step",
    "solve",
    "write_history",
    "read_history",
]

N_MIN_STEPS = 4  # fallback step count when nothing moves
BLOWUP_FACTOR = 1e6


class BlowUpError(RuntimeError):
    """The iteration left any physically plausible range."""


@dataclass(frozen=True)
class Problem:
    """A conservation-law initial-value problem on a box domain."""

    flux: NumericalFlux
    u0: IntegrableFunction
    t_final: float
    boundary: str = "periodic"

    def __post_init__(self):
        if not self.t_final > 0:
            raise ValueError("t_final must be positive")
        if self.boundary not in ("periodic", "outflow"):
            raise ValueError(f"unknown boundary policy {self.boundary!r}")


@dataclass(frozen=True)
class SpaceTimeField:
    """Full scheme history: values[n] is the cell field at time node t_n."""

    mesh: Mesh
    grid: TimeGrid
    values: np.ndarray  # (n_steps + 1, n_cells)
    boundary: str = "periodic"
    label: str = ""
    flux: NumericalFlux | None = None  # flux the history was produced with

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        expected = (self.grid.n_steps + 1, self.mesh.n_cells)
        if v.shape != expected:
            raise ValueError(f"expected history shape {expected}, got {v.shape}")
        object.__setattr__(self, "values", v)

    def at(self, n: int) -> CellField:
        return CellField(mesh=self.mesh, values=self.values[n])

    def l1_norm(self) -> float:
        """L1 norm of the piecewise-constant embedding over space-time."""
        per_slab = np.abs(self.values[:-1]) @ self.mesh.cell_volume
        return float(np.dot(self.grid.deltas, per_slab))


# ---------------------------------------------------------------------------
# edge construction
# ---------------------------------------------------------------------------


def _pair_periodic_faces(mesh: Mesh) -> list[tuple[int, int]]:
    """Match boundary faces across the box by translated centroids."""
    if mesh.box is None:
        raise MeshError("periodic boundaries need the mesh bounding box")
    lo, hi = mesh.box
    period = hi - lo
    quant = max(float(np.max(period)), 1.0) * 1e-9

    def key(point: np.ndarray) -> tuple:
        return tuple(np.round(point / quant).astype(np.int64).tolist())

    bdry = [f for f in mesh.faces if f.is_boundary]
    lookup: dict[tuple, int] = {}
    for f in bdry:
        lookup[key(f.centroid)] = f.id
    pairs = []
    seen = set()
    for f in bdry:
        if f.id in seen:
            continue
        axis = int(np.argmax(np.abs(f.normal)))
        if f.normal[axis] > 0:
            continue  # pair from the low side only
        target = f.centroid.copy()
        target[axis] += period[axis]
        partner = lookup.get(key(target))
        if partner is None:
            raise MeshError(
                f"no periodic partner for boundary face {f.id} "
                f"at {f.centroid}"
            )
        g = mesh.faces[partner]
        if abs(g.area - f.area) > 1e-12 * max(f.area, g.area):
            raise MeshError(
                f"periodic faces {f.id} and {g.id} have mismatched areas"
            )
        pairs.append((f.id, g.id))
        seen.add(f.id)
        seen.add(g.id)
    unpaired = [f.id for f in bdry if f.id not in seen]
    if unpaired:
        raise MeshError(f"unpaired boundary faces: {unpaired[:5]}")
    return pairs


def _far_neighbors(mesh: Mesh, edge_K, edge_L, periodic: bool):
    """Second upwind states for three-point stencils (1d only).

    For an edge K|L the far cell behind K is K's neighbor away from L along
    the axis; missing neighbors (outflow ends) fall back to the near cell,
    which degrades the reconstruction to first order there.
    """
    if mesh.dim != 1:
        raise MeshError("three-point fluxes are only wired up on 1d meshes")
    order = np.argsort(mesh.cell_center[:, 0])
    pos = np.empty_like(order)
    pos[order] = np.arange(order.size)
    n = order.size
    if periodic:
        left = order[(pos - 1) % n]
        right = order[(pos + 1) % n]
    else:
        left = order[np.maximum(pos - 1, 0)]
        right = order[np.minimum(pos + 1, n - 1)]
    # direction by coordinate misclassifies the periodic wrap edge (the
    # right-end cell's centre is larger than the left-end cell's even though
    # crossing the seam goes right), so classify by sorted position instead
    if periodic:
        went_right = pos[edge_L] == (pos[edge_K] + 1) % n
    else:
        went_right = pos[edge_L] == pos[edge_K] + 1
    KK = np.where(went_right, left[edge_K], right[edge_K])
    LL = np.where(went_right, right[edge_L], left[edge_L])
    return KK, LL


class Stepper:
    """Precomputed flux topology for one mesh / flux / boundary triple."""

    def __init__(self, mesh: Mesh, flux: NumericalFlux, boundary: str = "periodic"):
        if flux.dim != mesh.dim:
            raise ValueError(
                f"flux dimension {flux.dim} does not match mesh dimension {mesh.dim}"
            )
        self.mesh = mesh
        self.flux = flux
        self.boundary = boundary

        int_ids = np.flatnonzero(mesh.interior)
        eK = list(mesh.face_K[int_ids])
        eL = list(mesh.face_L[int_ids])
        areas = list(mesh.face_area[int_ids])
        normals = list(mesh.face_normal[int_ids])
        self.interior_face_ids = int_ids

        self.n_interior = int_ids.size
        if boundary == "periodic":
            for fa, fb in _pair_periodic_faces(mesh):
                a, b = mesh.faces[fa], mesh.faces[fb]
                # flux from a.K through the identified face towards b.K,
                # oriented by a's outward normal
                eK.append(a.K)
                eL.append(b.K)
                areas.append(a.area)
                normals.append(a.normal)
            self.outflow_K = np.array([], dtype=int)
            self.outflow_area = np.array([])
            self.outflow_normal = np.zeros((0, mesh.dim))
        elif boundary == "outflow":
            bmask = ~mesh.interior
            self.outflow_K = mesh.face_K[bmask]
            self.outflow_area = mesh.face_area[bmask]
            self.outflow_normal = mesh.face_normal[bmask]
        else:
            raise ValueError(f"unknown boundary policy {boundary!r}")

        self.edge_K = np.array(eK, dtype=int)
        self.edge_L = np.array(eL, dtype=int)
        self.edge_area = np.array(areas)
        self.edge_normal = np.array(normals).reshape(-1, mesh.dim)

        if flux.stencil == 3:
            self.edge_KK, self.edge_LL = _far_neighbors(
                mesh, self.edge_K, self.edge_L, boundary == "periodic"
            )
        else:
            self.edge_KK = None
            self.edge_LL = None

    def edge_fluxes(self, u: np.ndarray) -> np.ndarray:
        kwargs = {}
        if self.edge_KK is not None:
            kwargs = {"uKK": u[self.edge_KK], "uLL": u[self.edge_LL]}
        return np.asarray(
            self.flux.evaluate(u[self.edge_K], u[self.edge_L],
                               self.edge_normal, **kwargs),
            dtype=float,
        )

    def interior_fluxes(self, u: np.ndarray) -> np.ndarray:
        """Normal fluxes on mesh-interior faces, aligned with
        ``interior_face_ids``."""
        return self.edge_fluxes(u)[: self.n_interior]

    def divergence(self, u: np.ndarray) -> np.ndarray:
        """Per-cell net outward flux sum_{sigma} |sigma| F_sigma . n_K."""
        fv = self.edge_fluxes(u)
        div = np.zeros(self.mesh.n_cells)
        np.add.at(div, self.edge_K, self.edge_area * fv)
        np.add.at(div, self.edge_L, -self.edge_area * fv)
        if self.outflow_K.size:
            phys = self.flux.flux.value(u[self.outflow_K])
            bf = np.einsum("fd,fd->f", phys, self.outflow_normal)
            np.add.at(div, self.outflow_K, self.outflow_area * bf)
        return div

    def step(self, u: np.ndarray, dt: float) -> np.ndarray:
        return u - dt * self.divergence(u) / self.mesh.cell_volume


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


def project_initial(mesh: Mesh, u0: IntegrableFunction) -> CellField:
    """Initial cell means, by the same quadrature policy as the projections."""
    return project_l1(mesh, u0, label=f"u0[{u0.name}]")


def select_dt(mesh: Mesh, field: CellField, flux: NumericalFlux, cfl: float,
              t_final: float | None = None) -> float:
    """CFL time step: cfl * min_K |K| / sum_{faces of K} |sigma| lambda_sigma.

    lambda_sigma is the flux's wave-speed bound between the adjacent states
    (the inside state alone on boundary faces).  If nothing moves anywhere
    the step is capped at t_final / N_MIN_STEPS (raises without t_final).
    """
    if not 0 < cfl <= 1:
        raise ValueError("cfl must lie in (0, 1]")
    u = field.values
    K = mesh.face_K
    L = np.where(mesh.face_L >= 0, mesh.face_L, mesh.face_K)
    lam = np.asarray(flux.wave_speed(u[K], u[L], mesh.face_normal), dtype=float)
    per_cell = np.zeros(mesh.n_cells)
    np.add.at(per_cell, K, mesh.face_area * lam)
    np.add.at(per_cell, mesh.face_L[mesh.interior],
              (mesh.face_area * lam)[mesh.interior])
    moving = per_cell > 0
    if not np.any(moving):
        if t_final is None:
            raise ValueError("zero wave speed everywhere and no horizon given")
        return t_final / N_MIN_STEPS
    dt = cfl * float(np.min(mesh.cell_volume[moving] / per_cell[moving]))
    if t_final is not None:
        dt = min(dt, t_final / N_MIN_STEPS)
    return dt


def step(mesh: Mesh, field: CellField, flux: NumericalFlux, dt: float,
         boundary: str = "periodic") -> CellField:
    """One explicit update of a cell field (conservative by construction)."""
    stp = Stepper(mesh, flux, boundary)
    new_vals = stp.step(field.values, dt)
    if not np.all(np.isfinite(new_vals)):
        bad = int(np.argmax(~np.isfinite(new_vals)))
        raise BlowUpError(f"non-finite value in cell {bad} after one step")
    return CellField(mesh=mesh, values=new_vals, label=field.label)


def solve(mesh: Mesh, problem: Problem, cfl: float = 0.45) -> SpaceTimeField:
    """March the scheme to exactly t = t_final on a uniform time grid.

    The CFL step from the initial data is shrunk to an integer divider of
    the horizon, so every step is identical and the final node lands on
    t_final exactly.  Raises BlowUpError if any cell value exceeds 1e6
    times the initial sup bound.
    """
    u0 = project_initial(mesh, problem.u0)
    dt0 = select_dt(mesh, u0, problem.flux, cfl, problem.t_final)
    n_steps = max(1, int(math.ceil(problem.t_final / dt0 - 1e-12)))
    grid = TimeGrid.uniform(problem.t_final, n_steps)
    dt = problem.t_final / n_steps

    stp = Stepper(mesh, problem.flux, problem.boundary)
    sup0 = float(np.max(np.abs(u0.values)))
    guard = BLOWUP_FACTOR * (sup0 if sup0 > 0 else 1.0)

    history = np.empty((n_steps + 1, mesh.n_cells))
    history[0] = u0.values
    u = u0.values
    for n in range(n_steps):
        u = stp.step(u, dt)
        if not np.all(np.isfinite(u)) or np.max(np.abs(u)) > guard:
            bad = int(np.argmax(np.abs(np.where(np.isfinite(u), u, np.inf))))
            raise BlowUpError(
                f"solution escaped the guard {guard:.3e} at step {n + 1} "
                f"(cell {bad})"
            )
        history[n + 1] = u
    return SpaceTimeField(
        mesh=mesh, grid=grid, values=history, boundary=problem.boundary,
        label=f"{problem.flux.name}|{problem.u0.name}", flux=problem.flux,
    )


# ---------------------------------------------------------------------------
# history text format (versioned like the mesh format)
# ---------------------------------------------------------------------------

_HISTORY_MAGIC = "lwfv-history"
_HISTORY_VERSION = "v1"


def write_history(field: SpaceTimeField, path_or_buf) -> None:
    """Plain-text dump of a full history.

    Line 1: ``lwfv-history v1 dim=<d> n_cells=<n> n_steps=<N>``; comment
    lines carry boundary policy and label; then per node ``t <i> <t_i>``
    followed by ``u <i> <v_0> ... <v_{n-1}>``.  All reals %.17g so the file
    round-trips bit-exactly.
    """
    own = isinstance(path_or_buf, str)
    fh = open(path_or_buf, "w", encoding="utf-8", newline="\n") if own else path_or_buf
    try:
        fh.write(f"{_HISTORY_MAGIC} {_HISTORY_VERSION} dim={field.mesh.dim} "
                 f"n_cells={field.mesh.n_cells} n_steps={field.grid.n_steps}\n")
        fh.write(f"# boundary {field.boundary}\n")
        if field.label:
            fh.write(f"# label {field.label}\n")
        for i, t in enumerate(field.grid.nodes):
            fh.write(f"t {i} {t:.17g}\n")
            row = " ".join(f"{v:.17g}" for v in field.values[i])
            fh.write(f"u {i} {row}\n")
    finally:
        if own:
            fh.close()


def read_history(path_or_buf) -> tuple[TimeGrid, np.ndarray, dict]:
    """Inverse of write_history; the mesh itself is not persisted, so the
    result is (grid, values, metadata) rather than a SpaceTimeField."""
    own = isinstance(path_or_buf, str)
    fh = open(path_or_buf, encoding="utf-8") if own else path_or_buf
    try:
        head = fh.readline().split()
        if head[:2] != [_HISTORY_MAGIC, _HISTORY_VERSION]:
            raise ValueError(f"not a {_HISTORY_MAGIC} {_HISTORY_VERSION} file")
        info = dict(kv.split("=") for kv in head[2:])
        n_cells = int(info["n_cells"])
        n_steps = int(info["n_steps"])
        meta = {"dim": int(info["dim"])}
        nodes = np.empty(n_steps + 1)
        values = np.empty((n_steps + 1, n_cells))
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "#":
                if len(parts) >= 3:
                    meta[parts[1]] = " ".join(parts[2:])
                continue
            if parts[0] == "t":
                nodes[int(parts[1])] = float(parts[2])
            elif parts[0] == "u":
                i = int(parts[1])
                if len(parts) != n_cells + 2:
                    raise ValueError(f"history row {i} has wrong length")
                values[i] = [float(x) for x in parts[2:]]
            else:
                raise ValueError(f"unknown history record {parts[0]!r}")
    finally:
        if own:
            fh.close()
    return TimeGrid(nodes=nodes), values, meta
