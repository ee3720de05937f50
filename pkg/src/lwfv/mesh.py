"""Polyhedral meshes with face-indexed dual volumes.

A mesh is a finite partition of a box domain into cells (intervals,
rectangles, or triangles) together with the face data needed by the discrete
operators: areas, unit normals oriented from the first incident cell to the
second, and the measures of the dual volumes attached to each face.

The dual volume of an interior face sigma shared by cells K and L is the
union of one piece inside K and one inside L; only the measures matter to
the operators.  Two constructions are shipped:

* ``cone`` (default): the piece in K is the cone with apex at the cell
  anchor x_K and base sigma, with measure |sigma| * dist(x_K, plane) / d.
  Cones over all faces of a cell tile the cell exactly, so the dual volumes
  partition the domain.
* ``equal``: the piece in K has measure |K| / (number of faces of K).

Meshes are immutable after construction and safe to share between studies.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "MeshError",
    "GeometryError",
    "RegularityError",
    "Cell",
    "Face",
    "Mesh",
    "MeshQuality",
    "MeshFamily",
    "build_uniform_1d",
    "build_nonuniform_1d",
    "build_cartesian_2d",
    "build_perturbed_triangular_2d",
    "uniform_1d_family",
    "nonuniform_1d_family",
    "cartesian_2d_family",
    "perturbed_triangular_2d_family",
    "compute_quality",
    "refine",
    "validate",
    "write_mesh",
    "read_mesh",
]

REL_TOL = 1e-12
REGULARITY_GUARD = 1.05


class MeshError(Exception):
    """Base class for mesh construction and validation failures."""


class GeometryError(MeshError):
    """Degenerate or inverted geometry."""


class RegularityError(MeshError):
    """A refinement sequence drifted out of its regularity band."""


@dataclass(frozen=True)
class Cell:
    """One control volume.

    ``center`` is the anchor point x_K used by the discrete operators (the
    barycenter for the shipped builders); it must lie inside the cell.
    """

    id: int
    volume: float
    diameter: float
    center: np.ndarray
    face_ids: tuple[int, ...]

    @property
    def n_faces(self) -> int:
        return len(self.face_ids)


@dataclass(frozen=True)
class Face:
    """One face with its dual-volume measures.

    ``normal`` is the unit normal oriented from cell ``K`` to cell ``L``
    (outward for boundary faces, where L is -1).  ``d_sigma`` is the measure
    of the full dual volume, stored as exactly ``dk + dl``.
    """

    id: int
    area: float
    normal: np.ndarray
    K: int
    L: int
    d_sigma: float
    dk: float
    dl: float
    centroid: np.ndarray

    @property
    def is_boundary(self) -> bool:
        return self.L < 0


@dataclass
class Mesh:
    dim: int
    cells: list[Cell]
    faces: list[Face]
    domain_measure: float
    h_max: float
    dual_policy: str = "cone"
    box: tuple[np.ndarray, np.ndarray] | None = None
    cell_vertices: list[np.ndarray] | None = None
    family: str = ""

    # flat views built once for vectorised kernels
    cell_volume: np.ndarray = field(init=False, repr=False)
    cell_center: np.ndarray = field(init=False, repr=False)
    cell_diam: np.ndarray = field(init=False, repr=False)
    face_area: np.ndarray = field(init=False, repr=False)
    face_normal: np.ndarray = field(init=False, repr=False)
    face_K: np.ndarray = field(init=False, repr=False)
    face_L: np.ndarray = field(init=False, repr=False)
    face_dsig: np.ndarray = field(init=False, repr=False)
    face_dk: np.ndarray = field(init=False, repr=False)
    face_dl: np.ndarray = field(init=False, repr=False)
    face_centroid: np.ndarray = field(init=False, repr=False)
    interior: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.cell_volume = np.array([c.volume for c in self.cells])
        self.cell_center = np.array([c.center for c in self.cells])
        self.cell_diam = np.array([c.diameter for c in self.cells])
        self.face_area = np.array([f.area for f in self.faces])
        self.face_normal = np.array([f.normal for f in self.faces])
        self.face_K = np.array([f.K for f in self.faces], dtype=int)
        self.face_L = np.array([f.L for f in self.faces], dtype=int)
        self.face_dsig = np.array([f.d_sigma for f in self.faces])
        self.face_dk = np.array([f.dk for f in self.faces])
        self.face_dl = np.array([f.dl for f in self.faces])
        self.face_centroid = np.array([f.centroid for f in self.faces])
        self.interior = self.face_L >= 0

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def with_faces(self, faces: list[Face]) -> "Mesh":
        """Copy of the mesh with a replaced face list (used by tampering tests)."""
        return replace(self, faces=faces)


@dataclass(frozen=True)
class MeshQuality:
    """Regularity parameters of one mesh.

    theta_grad ties face area and anchor separation to the dual measure,
    theta the dual measure to the cell measure, tau the cell measure to the
    one-sided dual pieces; n_faces_max is the largest face count of a cell.
    """

    theta_grad: float
    theta: float
    tau: float
    n_faces_max: int
    h_max: float


@dataclass(frozen=True)
class MeshFamily:
    """A level-indexed generator of meshes refining the same geometry."""

    name: str
    build: object  # Callable[[int], Mesh]

    def __call__(self, level: int) -> Mesh:
        return self.build(level)


# ---------------------------------------------------------------------------
# internal construction helpers
# ---------------------------------------------------------------------------


def _dual_split(policy: str, area: float, dist: float, dim: int, cell_vol: float,
                n_faces: int) -> float:
    if policy == "cone":
        return area * dist / dim
    if policy == "equal":
        return cell_vol / n_faces
    raise ValueError(f"unknown dual policy {policy!r}")


def _finish_faces(raw, policy, dim, cells_vol, cells_nf):
    """Turn raw face records into Face objects with dual measures.

    ``raw`` rows: (area, normal, K, L, centroid, dist_K, dist_L).
    """
    faces = []
    for fid, (area, normal, K, L, centroid, dist_k, dist_l) in enumerate(raw):
        dk = _dual_split(policy, area, dist_k, dim, cells_vol[K], cells_nf[K])
        if L >= 0:
            dl = _dual_split(policy, area, dist_l, dim, cells_vol[L], cells_nf[L])
        else:
            dl = 0.0
        faces.append(
            Face(
                id=fid,
                area=float(area),
                normal=np.asarray(normal, dtype=float),
                K=int(K),
                L=int(L),
                d_sigma=dk + dl,
                dk=dk,
                dl=dl,
                centroid=np.asarray(centroid, dtype=float),
            )
        )
    return faces


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------


def _build_1d(edges: np.ndarray, dual: str, family: str) -> Mesh:
    edges = np.asarray(edges, dtype=float)
    n = edges.size - 1
    widths = np.diff(edges)
    if np.any(widths <= 0):
        raise GeometryError("cell widths must be positive")
    centers = 0.5 * (edges[:-1] + edges[1:])

    nf_per_cell = np.full(n, 2)
    raw = []
    # one face per edge point; K = left cell, L = right cell (-1 outside)
    for i, x in enumerate(edges):
        if i == 0:
            K, L = 0, -1
            normal = np.array([-1.0])
            dist_k = centers[0] - x
            dist_l = 0.0
        elif i == n:
            K, L = n - 1, -1
            normal = np.array([1.0])
            dist_k = x - centers[n - 1]
            dist_l = 0.0
        else:
            K, L = i - 1, i
            normal = np.array([1.0])
            dist_k = x - centers[K]
            dist_l = centers[L] - x
        raw.append((1.0, normal, K, L, np.array([x]), dist_k, dist_l))

    faces = _finish_faces(raw, dual, 1, widths, nf_per_cell)
    cells = []
    for i in range(n):
        fids = tuple(
            f.id for f in faces if f.K == i or f.L == i
        )
        cells.append(
            Cell(
                id=i,
                volume=float(widths[i]),
                diameter=float(widths[i]),
                center=np.array([centers[i]]),
                face_ids=fids,
            )
        )
    verts = [np.array([[edges[i]], [edges[i + 1]]]) for i in range(n)]
    return Mesh(
        dim=1,
        cells=cells,
        faces=faces,
        domain_measure=float(edges[-1] - edges[0]),
        h_max=float(widths.max()),
        dual_policy=dual,
        box=(edges[:1].copy(), edges[-1:].copy()),
        cell_vertices=verts,
        family=family,
    )


def build_uniform_1d(n: int, interval: tuple[float, float] = (0.0, 1.0),
                     dual: str = "cone") -> Mesh:
    """Uniform partition of an interval into n cells."""
    if n < 1:
        raise GeometryError("need at least one cell")
    a, b = interval
    if not b > a:
        raise GeometryError("empty interval")
    edges = np.linspace(a, b, n + 1)
    return _build_1d(edges, dual, f"uniform_1d(n={n})")


def build_nonuniform_1d(n: int, interval: tuple[float, float] = (0.0, 1.0),
                        ratio: float = 2.0, dual: str = "cone") -> Mesh:
    """Interval partition with cell widths alternating 1 : ratio, normalised
    to fill the interval."""
    if n < 1:
        raise GeometryError("need at least one cell")
    if ratio <= 0:
        raise GeometryError("ratio must be positive")
    a, b = interval
    pattern = np.array([1.0 if i % 2 == 0 else ratio for i in range(n)])
    widths = pattern * (b - a) / pattern.sum()
    edges = np.concatenate([[a], a + np.cumsum(widths)])
    edges[-1] = b  # keep the right endpoint exact
    return _build_1d(edges, dual, f"nonuniform_1d(n={n},ratio={ratio})")


def build_cartesian_2d(nx: int, ny: int, box=((0.0, 0.0), (1.0, 1.0)),
                       dual: str = "cone") -> Mesh:
    """Axis-aligned rectangle grid with nx * ny cells."""
    if nx < 1 or ny < 1:
        raise GeometryError("need at least one cell per axis")
    (x0, y0), (x1, y1) = box
    if not (x1 > x0 and y1 > y0):
        raise GeometryError("empty box")
    hx = (x1 - x0) / nx
    hy = (y1 - y0) / ny
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)

    def cid(i: int, j: int) -> int:
        return j * nx + i

    vol = np.full(nx * ny, hx * hy)
    nf = np.full(nx * ny, 4)
    centers = np.array(
        [[0.5 * (xs[i] + xs[i + 1]), 0.5 * (ys[j] + ys[j + 1])]
         for j in range(ny) for i in range(nx)]
    )

    raw = []
    # vertical faces (normal +x), column-major over i then j
    for j in range(ny):
        for i in range(nx + 1):
            cy = 0.5 * (ys[j] + ys[j + 1])
            if i == 0:
                K, L, normal = cid(0, j), -1, np.array([-1.0, 0.0])
                dist_k, dist_l = centers[K][0] - xs[0], 0.0
            elif i == nx:
                K, L, normal = cid(nx - 1, j), -1, np.array([1.0, 0.0])
                dist_k, dist_l = xs[nx] - centers[K][0], 0.0
            else:
                K, L, normal = cid(i - 1, j), cid(i, j), np.array([1.0, 0.0])
                dist_k = xs[i] - centers[K][0]
                dist_l = centers[L][0] - xs[i]
            raw.append((hy, normal, K, L, np.array([xs[i], cy]), dist_k, dist_l))
    # horizontal faces (normal +y)
    for j in range(ny + 1):
        for i in range(nx):
            cx = 0.5 * (xs[i] + xs[i + 1])
            if j == 0:
                K, L, normal = cid(i, 0), -1, np.array([0.0, -1.0])
                dist_k, dist_l = centers[K][1] - ys[0], 0.0
            elif j == ny:
                K, L, normal = cid(i, ny - 1), -1, np.array([0.0, 1.0])
                dist_k, dist_l = ys[ny] - centers[K][1], 0.0
            else:
                K, L, normal = cid(i, j - 1), cid(i, j), np.array([0.0, 1.0])
                dist_k = ys[j] - centers[K][1]
                dist_l = centers[L][1] - ys[j]
            raw.append((hx, normal, K, L, np.array([cx, ys[j]]), dist_k, dist_l))

    faces = _finish_faces(raw, dual, 2, vol, nf)
    by_cell: dict[int, list[int]] = {c: [] for c in range(nx * ny)}
    for f in faces:
        by_cell[f.K].append(f.id)
        if f.L >= 0:
            by_cell[f.L].append(f.id)
    diam = math.hypot(hx, hy)
    cells = [
        Cell(id=c, volume=float(vol[c]), diameter=diam, center=centers[c],
             face_ids=tuple(sorted(by_cell[c])))
        for c in range(nx * ny)
    ]
    verts = []
    for j in range(ny):
        for i in range(nx):
            verts.append(np.array(
                [[xs[i], ys[j]], [xs[i + 1], ys[j]],
                 [xs[i + 1], ys[j + 1]], [xs[i], ys[j + 1]]]
            ))
    return Mesh(
        dim=2,
        cells=cells,
        faces=faces,
        domain_measure=float((x1 - x0) * (y1 - y0)),
        h_max=diam,
        dual_policy=dual,
        box=(np.array([x0, y0]), np.array([x1, y1])),
        cell_vertices=verts,
        family=f"cartesian_2d(nx={nx},ny={ny})",
    )


def build_perturbed_triangular_2d(n: int, box=((0.0, 0.0), (1.0, 1.0)),
                                  jitter: float = 0.3, seed: int = 0,
                                  dual: str = "cone") -> Mesh:
    """Structured triangulation of a box with jittered interior vertices.

    An (n+1) x (n+1) vertex grid is perturbed (interior vertices only, by
    an offset up to ``jitter`` times the grid spacing per coordinate), then
    every grid square is split into two triangles along a diagonal that
    alternates in a checkerboard pattern.

    The offsets come from a period-4 pattern drawn once from the seed and
    scaled by the local spacing.  Dyadic refinements therefore reuse the
    same finite set of local cell shapes, which keeps the regularity
    metrics of the family level-independent; a fresh random draw per level
    would instead push the worst-case metrics upward as more samples
    appear, and no uniform-regularity guard could hold.
    """
    if n < 1:
        raise GeometryError("need at least one cell per axis")
    if not 0.0 <= jitter < 0.5:
        raise GeometryError(f"jitter must lie in [0, 0.5), got {jitter}")
    (x0, y0), (x1, y1) = box
    hx = (x1 - x0) / n
    hy = (y1 - y0) / n
    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([gx, gy], axis=-1)  # (n+1, n+1, 2)
    if jitter > 0:
        rng = np.random.default_rng(seed)
        table = rng.uniform(-jitter, jitter, size=(4, 4, 2))
        idx = np.arange(n + 1) % 4
        offs = table[idx[:, None], idx[None, :]].copy()  # (n+1, n+1, 2)
        offs[:, :, 0] *= hx
        offs[:, :, 1] *= hy
        offs[0, :, :] = 0.0
        offs[-1, :, :] = 0.0
        offs[:, 0, :] = 0.0
        offs[:, -1, :] = 0.0
        pts = pts + offs

    def vidx(i: int, j: int) -> int:
        return i * (n + 1) + j

    flat = pts.reshape(-1, 2)
    tris: list[tuple[int, int, int]] = []
    for i in range(n):
        for j in range(n):
            v00 = vidx(i, j)
            v10 = vidx(i + 1, j)
            v11 = vidx(i + 1, j + 1)
            v01 = vidx(i, j + 1)
            if (i + j) % 2 == 0:
                tris.append((v00, v10, v11))
                tris.append((v00, v11, v01))
            else:
                tris.append((v00, v10, v01))
                tris.append((v10, v11, v01))

    def signed_area(t):
        a, b, c = flat[t[0]], flat[t[1]], flat[t[2]]
        return 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))

    areas = np.array([signed_area(t) for t in tris])
    if np.any(areas <= 0):
        bad = int(np.argmin(areas))
        raise GeometryError(
            f"jitter {jitter} produced an inverted triangle (cell {bad}, "
            f"signed area {areas[bad]:.3e})"
        )

    centers = np.array([(flat[a] + flat[b] + flat[c]) / 3.0 for a, b, c in tris])
    nf = np.full(len(tris), 3)

    # collect edges in first-encounter order for deterministic face ids
    edge_owner: dict[tuple[int, int], list] = {}
    order: list[tuple[int, int]] = []
    for t_id, t in enumerate(tris):
        for e in range(3):
            p, q = t[e], t[(e + 1) % 3]
            key = (p, q) if p < q else (q, p)
            if key not in edge_owner:
                edge_owner[key] = []
                order.append(key)
            edge_owner[key].append((t_id, p, q))

    raw = []
    for key in order:
        owners = edge_owner[key]
        t_id, p, q = owners[0]
        a, b = flat[p], flat[q]
        edge = b - a
        length = float(np.hypot(edge[0], edge[1]))
        if length <= 0:
            raise GeometryError("zero-length edge")
        # CCW triangle: outward normal of directed edge p->q is (dy, -dx)
        normal = np.array([edge[1], -edge[0]]) / length
        centroid = 0.5 * (a + b)
        K = t_id
        L = owners[1][0] if len(owners) > 1 else -1

        def _dist(point):
            v = point - a
            return abs(edge[0] * v[1] - edge[1] * v[0]) / length

        dist_k = _dist(centers[K])
        dist_l = _dist(centers[L]) if L >= 0 else 0.0
        raw.append((length, normal, K, L, centroid, dist_k, dist_l))

    faces = _finish_faces(raw, dual, 2, areas, nf)
    by_cell: dict[int, list[int]] = {c: [] for c in range(len(tris))}
    for f in faces:
        by_cell[f.K].append(f.id)
        if f.L >= 0:
            by_cell[f.L].append(f.id)
    cells = []
    verts = []
    for c, t in enumerate(tris):
        vv = flat[list(t)]
        verts.append(vv)
        diam = max(
            np.hypot(*(vv[1] - vv[0])),
            np.hypot(*(vv[2] - vv[1])),
            np.hypot(*(vv[0] - vv[2])),
        )
        cells.append(
            Cell(id=c, volume=float(areas[c]), diameter=float(diam),
                 center=centers[c], face_ids=tuple(sorted(by_cell[c])))
        )
    return Mesh(
        dim=2,
        cells=cells,
        faces=faces,
        domain_measure=float((x1 - x0) * (y1 - y0)),
        h_max=float(max(c.diameter for c in cells)),
        dual_policy=dual,
        box=(np.array([x0, y0]), np.array([x1, y1])),
        cell_vertices=verts,
        family=f"perturbed_triangular_2d(n={n},jitter={jitter},seed={seed})",
    )


# ---------------------------------------------------------------------------
# families
# ---------------------------------------------------------------------------


def uniform_1d_family(n0: int = 10, interval=(0.0, 1.0), dual="cone") -> MeshFamily:
    return MeshFamily(
        name=f"uniform_1d(n0={n0})",
        build=lambda m: build_uniform_1d(n0 * 2**m, interval, dual=dual),
    )


def nonuniform_1d_family(n0: int = 10, interval=(0.0, 1.0), ratio: float = 2.0,
                         dual="cone") -> MeshFamily:
    return MeshFamily(
        name=f"nonuniform_1d(n0={n0},ratio={ratio})",
        build=lambda m: build_nonuniform_1d(n0 * 2**m, interval, ratio, dual=dual),
    )


def cartesian_2d_family(n0: int = 4, box=((0.0, 0.0), (1.0, 1.0)),
                        dual="cone") -> MeshFamily:
    return MeshFamily(
        name=f"cartesian_2d(n0={n0})",
        build=lambda m: build_cartesian_2d(n0 * 2**m, n0 * 2**m, box, dual=dual),
    )


def perturbed_triangular_2d_family(n0: int = 4, box=((0.0, 0.0), (1.0, 1.0)),
                                   jitter: float = 0.3, seed: int = 0,
                                   dual="cone") -> MeshFamily:
    return MeshFamily(
        name=f"perturbed_triangular_2d(n0={n0},jitter={jitter},seed={seed})",
        build=lambda m: build_perturbed_triangular_2d(
            n0 * 2**m, box, jitter=jitter, seed=seed, dual=dual
        ),
    )


# ---------------------------------------------------------------------------
# quality, refinement, validation
# ---------------------------------------------------------------------------


def compute_quality(mesh: Mesh) -> MeshQuality:
    """Regularity parameters, computed directly from the stored measures."""
    int_mask = mesh.interior
    theta_grad = 0.0
    if int_mask.any():
        dx = np.linalg.norm(
            mesh.cell_center[mesh.face_L[int_mask]]
            - mesh.cell_center[mesh.face_K[int_mask]],
            axis=1,
        )
        theta_grad = float(
            np.max(mesh.face_area[int_mask] * dx / mesh.face_dsig[int_mask])
        )

    theta = 0.0
    tau = 0.0
    for c in mesh.cells:
        for fid in c.face_ids:
            f = mesh.faces[fid]
            theta = max(theta, f.d_sigma / c.volume)
            dk = f.dk if f.K == c.id else f.dl
            if dk > 0:
                tau = max(tau, c.volume / dk)
    n_faces_max = max(c.n_faces for c in mesh.cells)
    return MeshQuality(
        theta_grad=theta_grad,
        theta=theta,
        tau=tau,
        n_faces_max=n_faces_max,
        h_max=mesh.h_max,
    )


def refine(family: MeshFamily, levels: int) -> list[Mesh]:
    """Build ``levels`` meshes from the family and enforce the regularity band.

    Every regularity parameter of every level must stay within 1.05 times
    the maximum of that parameter over the first two levels (first level
    alone when only one is requested).
    """
    if levels < 1:
        raise ValueError("need at least one level")
    meshes = [family.build(m) for m in range(levels)]
    quals = [compute_quality(m) for m in meshes]
    ref = quals[: min(2, levels)]
    bands = {
        "theta_grad": max(q.theta_grad for q in ref),
        "theta": max(q.theta for q in ref),
        "tau": max(q.tau for q in ref),
        "n_faces_max": max(q.n_faces_max for q in ref),
    }
    for lvl, q in enumerate(quals):
        for name, cap in bands.items():
            val = getattr(q, name)
            if val > REGULARITY_GUARD * cap:
                detail = ""
                if name == "theta_grad":
                    mesh = meshes[lvl]
                    ints = np.flatnonzero(mesh.interior)
                    dx = np.linalg.norm(
                        mesh.cell_center[mesh.face_L[ints]]
                        - mesh.cell_center[mesh.face_K[ints]],
                        axis=1,
                    )
                    ratios = mesh.face_area[ints] * dx / mesh.face_dsig[ints]
                    detail = f", worst face {int(ints[np.argmax(ratios)])}"
                raise RegularityError(
                    f"family {family.name}: {name} = {val:.6g} at level {lvl} "
                    f"exceeds guard {REGULARITY_GUARD} x {cap:.6g}{detail}"
                )
    return meshes


@dataclass
class ValidationReport:
    checks: list[tuple[str, bool, str]]

    @property
    def ok(self) -> bool:
        return all(passed for _, passed, _ in self.checks)

    def failing(self) -> list[str]:
        return [name for name, passed, _ in self.checks if not passed]


def validate(mesh: Mesh, raise_on_failure: bool = False) -> ValidationReport:
    """Structural and measure-theoretic checks on a mesh.

    Covers the partition identities for cells and dual volumes, per-cell
    face closure, unit normals, dual-measure bookkeeping, and (when cell
    geometry is available) anchor containment and the cone identity.
    """
    checks: list[tuple[str, bool, str]] = []
    omega = mesh.domain_measure

    vol_sum = float(mesh.cell_volume.sum())
    checks.append(
        ("cell_partition", abs(vol_sum - omega) <= REL_TOL * omega,
         f"sum |K| = {vol_sum!r} vs |Omega| = {omega!r}")
    )
    dual_sum = float(mesh.face_dsig.sum())
    checks.append(
        ("dual_partition", abs(dual_sum - omega) <= REL_TOL * omega,
         f"sum |D_sigma| = {dual_sum!r} vs |Omega| = {omega!r}")
    )

    split_ok = all(f.d_sigma == f.dk + f.dl for f in mesh.faces)
    checks.append(("dual_split_sum", split_ok, "d_sigma == dk + dl exactly"))

    pos_ok = (
        np.all(mesh.cell_volume > 0)
        and np.all(mesh.face_area > 0)
        and all(f.dk > 0 and (f.dl > 0 or f.is_boundary) for f in mesh.faces)
    )
    checks.append(("positive_measures", bool(pos_ok), "volumes, areas, duals > 0"))

    norm_err = float(np.max(np.abs(np.linalg.norm(mesh.face_normal, axis=1) - 1.0)))
    checks.append(("unit_normals", norm_err <= 1e-12, f"max | |n|-1 | = {norm_err:.2e}"))

    worst = 0.0
    worst_cell = -1
    for c in mesh.cells:
        net = np.zeros(mesh.dim)
        area_sum = 0.0
        for fid in c.face_ids:
            f = mesh.faces[fid]
            sign = 1.0 if f.K == c.id else -1.0
            net += sign * f.area * f.normal
            area_sum += f.area
        r = float(np.linalg.norm(net)) / area_sum
        if r > worst:
            worst, worst_cell = r, c.id
    checks.append(
        ("face_closure", worst <= REL_TOL,
         f"max |sum area*n| / sum area = {worst:.2e} (cell {worst_cell})")
    )

    if mesh.cell_vertices is not None:
        inside = all(
            _point_in_cell(mesh.cell_vertices[c.id], c.center) for c in mesh.cells
        )
        checks.append(("anchor_inside", inside, "x_K inside its cell"))
    if mesh.dual_policy == "cone":
        worst_cone = 0.0
        for f in mesh.faces:
            for cid, part in ((f.K, f.dk), (f.L, f.dl)):
                if cid < 0:
                    continue
                dist = abs(
                    float(np.dot(mesh.cells[cid].center - f.centroid, f.normal))
                )
                expect = f.area * dist / mesh.dim
                scale = max(abs(expect), 1e-300)
                worst_cone = max(worst_cone, abs(part - expect) / scale)
        checks.append(
            ("cone_identity", worst_cone <= 1e-12,
             f"max rel deviation {worst_cone:.2e}")
        )

    report = ValidationReport(checks)
    if raise_on_failure and not report.ok:
        failed = ", ".join(report.failing())
        raise MeshError(f"mesh validation failed: {failed}")
    return report


def _point_in_cell(verts: np.ndarray, p: np.ndarray, tol: float = 1e-12) -> bool:
    if verts.shape[1] == 1:
        lo, hi = float(verts.min()), float(verts.max())
        return lo - tol <= p[0] <= hi + tol
    if verts.shape[0] == 4:
        lo = verts.min(axis=0)
        hi = verts.max(axis=0)
        return bool(np.all(p >= lo - tol) and np.all(p <= hi + tol))
    a, b, c = verts
    # barycentric sign test
    def cross(u, v, w):
        return (v[0] - u[0]) * (w[1] - u[1]) - (w[0] - u[0]) * (v[1] - u[1])

    s1, s2, s3 = cross(a, b, p), cross(b, c, p), cross(c, a, p)
    area2 = abs(cross(a, b, c))
    eps = tol * max(area2, 1.0)
    return s1 >= -eps and s2 >= -eps and s3 >= -eps


# ---------------------------------------------------------------------------
# text file format
# ---------------------------------------------------------------------------

_FMT = "{:.17g}"


def _fmt(x: float) -> str:
    return _FMT.format(float(x))


def write_mesh(mesh: Mesh, path_or_buf) -> None:
    """Write the line-oriented text format.

    header: ``lwfv-mesh v1 dim=<d>``
    cell lines: ``cell <id> <volume> <h> <x...> <n_faces>``
    face lines: ``face <id> <area> <nx...> <K> <L|-1> <Dsigma> <DK> <DL> <cx...>``

    Reals carry 17 significant digits so a written file reloads bit-exactly.
    Comment lines (``#``) record the dual policy and domain box; cell vertex
    geometry is not persisted, so loaded meshes support the measure-based
    operators but not cell quadrature.
    """
    own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
    fh = open(path_or_buf, "w") if own else path_or_buf
    try:
        fh.write(f"lwfv-mesh v1 dim={mesh.dim}\n")
        fh.write(f"# policy {mesh.dual_policy}\n")
        if mesh.box is not None:
            lo, hi = mesh.box
            coords = " ".join(_fmt(v) for v in np.concatenate([lo, hi]))
            fh.write(f"# box {coords}\n")
        for c in mesh.cells:
            xs = " ".join(_fmt(v) for v in c.center)
            fh.write(f"cell {c.id} {_fmt(c.volume)} {_fmt(c.diameter)} {xs} {c.n_faces}\n")
        for f in mesh.faces:
            ns = " ".join(_fmt(v) for v in f.normal)
            cs = " ".join(_fmt(v) for v in f.centroid)
            fh.write(
                f"face {f.id} {_fmt(f.area)} {ns} {f.K} {f.L} "
                f"{_fmt(f.d_sigma)} {_fmt(f.dk)} {_fmt(f.dl)} {cs}\n"
            )
    finally:
        if own:
            fh.close()


def mesh_to_text(mesh: Mesh) -> str:
    buf = io.StringIO()
    write_mesh(mesh, buf)
    return buf.getvalue()


def read_mesh(path_or_buf) -> Mesh:
    """Load a mesh written by :func:`write_mesh`."""
    own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
    fh = open(path_or_buf) if own else path_or_buf
    try:
        header = fh.readline().split()
        if len(header) != 3 or header[0] != "lwfv-mesh" or header[1] != "v1":
            raise MeshError(f"not a lwfv-mesh v1 file: header {' '.join(header)!r}")
        dim = int(header[2].removeprefix("dim="))
        policy = "cone"
        box = None
        cell_rows = {}
        face_rows = {}
        cell_faces: dict[int, list[int]] = {}
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "#":
                if len(parts) >= 3 and parts[1] == "policy":
                    policy = parts[2]
                elif parts[1] == "box":
                    vals = np.array([float(v) for v in parts[2:]])
                    box = (vals[:dim], vals[dim:])
                continue
            if parts[0] == "cell":
                cid = int(parts[1])
                vol = float(parts[2])
                h = float(parts[3])
                x = np.array([float(v) for v in parts[4 : 4 + dim]])
                nf = int(parts[4 + dim])
                cell_rows[cid] = (vol, h, x, nf)
                cell_faces[cid] = []
            elif parts[0] == "face":
                fid = int(parts[1])
                area = float(parts[2])
                normal = np.array([float(v) for v in parts[3 : 3 + dim]])
                K = int(parts[3 + dim])
                L = int(parts[4 + dim])
                dsig = float(parts[5 + dim])
                dk = float(parts[6 + dim])
                dl = float(parts[7 + dim])
                centroid = np.array([float(v) for v in parts[8 + dim : 8 + 2 * dim]])
                face_rows[fid] = (area, normal, K, L, dsig, dk, dl, centroid)
            else:
                raise MeshError(f"unrecognised line kind {parts[0]!r}")
        faces = []
        for fid in sorted(face_rows):
            area, normal, K, L, dsig, dk, dl, centroid = face_rows[fid]
            faces.append(
                Face(id=fid, area=area, normal=normal, K=K, L=L,
                     d_sigma=dsig, dk=dk, dl=dl, centroid=centroid)
            )
            cell_faces[K].append(fid)
            if L >= 0:
                cell_faces[L].append(fid)
        cells = []
        for cid in sorted(cell_rows):
            vol, h, x, nf = cell_rows[cid]
            fids = tuple(sorted(cell_faces[cid]))
            if len(fids) != nf:
                raise MeshError(
                    f"cell {cid}: header says {nf} faces, found {len(fids)}"
                )
            cells.append(Cell(id=cid, volume=vol, diameter=h, center=x, face_ids=fids))
        vol_total = float(sum(c.volume for c in cells))
        return Mesh(
            dim=dim,
            cells=cells,
            faces=faces,
            domain_measure=vol_total,
            h_max=float(max(c.diameter for c in cells)),
            dual_policy=policy,
            box=box,
            cell_vertices=None,
            family="(loaded)",
        )
    finally:
        if own:
            fh.close()
