"""Discrete gradients on dual volumes and their weak convergence diagnostics.

The discrete gradient of a smooth function phi assigns to each interior face
the vector (|sigma| / |D_sigma|) * (phi_L - phi_K) * n, where phi_K samples
phi at the cell anchor, and zero to boundary faces.  Pairing it against a
compactly supported vector field through the dual volumes converges to the
integral of grad(phi) . psi as the mesh is refined, with an a-priori bound
proportional to the mesh size; ``gradient_weakstar_study`` measures exactly
that gap under refinement.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from . import quadrature
from .mesh import Mesh, MeshFamily, MeshQuality, compute_quality, refine

__all__ = [
    "SmoothTestFunction",
    "VectorTestFunction",
    "FaceVectorField",
    "TimeGrid",
    "InvariantViolation",
    "polynomial_bump",
    "bump_corpus_spatial",
    "vector_corpus",
    "bump_corpus_spacetime",
    "discrete_gradient",
    "sup_bound_check",
    "weak_pairing",
    "spacetime_gradient",
    "discrete_time_derivative",
    "gradient_weakstar_study",
    "GradStudyRow",
    "GradStudyResult",
]

SUP_BOUND_TOL = 1e-12


class InvariantViolation(Exception):
    """A guaranteed inequality failed at runtime."""


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing time nodes t_0 = 0 < ... < t_N = T."""

    nodes: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.nodes, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("need at least two time nodes")
        if t[0] != 0.0:
            raise ValueError("time grid must start at 0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("time nodes must be strictly increasing")
        object.__setattr__(self, "nodes", t)

    @classmethod
    def uniform(cls, t_final: float, n_steps: int) -> "TimeGrid":
        return cls(np.linspace(0.0, t_final, n_steps + 1))

    @property
    def n_steps(self) -> int:
        return self.nodes.size - 1

    @property
    def t_final(self) -> float:
        return float(self.nodes[-1])

    @property
    def deltas(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def dt_max(self) -> float:
        return float(self.deltas.max())


@dataclass(frozen=True)
class SmoothTestFunction:
    """A compactly supported smooth scalar function of space and time.

    ``value``, ``grad`` and ``dt`` are vectorised over the leading axes of
    x (shape (..., d)).  ``support`` is the spatial box outside which the
    function vanishes; the function also vanishes for t >= t_cut (t_cut may
    be +inf for time-constant functions).  The declared sups are upper
    bounds verified by sampling in the test suite.
    """

    name: str
    dim: int
    value: Callable
    grad: Callable
    dt: Callable
    support: tuple[np.ndarray, np.ndarray]
    t_cut: float
    grad_sup: float
    dt_sup: float
    separable: tuple | None = None  # (w, grad_w, g, dg) for phi(x,t) = w(x) g(t)

    def __call__(self, x, t=0.0):
        return self.value(x, t)

    @property
    def lipschitz(self) -> float:
        """Space-time Lipschitz bound: covers both |grad| and |d/dt|."""
        return max(self.grad_sup, self.dt_sup)


@dataclass(frozen=True)
class VectorTestFunction:
    """Compactly supported smooth vector field with declared Jacobian sup.

    ``jacobian_sup`` bounds both the Euclidean Lipschitz constant and the
    pointwise divergence, which is what the pairing estimates consume.
    """

    name: str
    dim: int
    components: tuple[SmoothTestFunction, ...]
    jacobian_sup: float

    def value(self, x):
        return np.stack([c.value(x, 0.0) for c in self.components], axis=-1)

    def div(self, x):
        out = 0.0
        for i, c in enumerate(self.components):
            out = out + c.grad(x, 0.0)[..., i]
        return out

    def __call__(self, x):
        return self.value(x)


@dataclass(frozen=True)
class FaceVectorField:
    """One vector per face (or per time slab and face when time indexed)."""

    mesh: Mesh
    values: np.ndarray  # (n_faces, d) or (n_steps, n_faces, d)
    label: str = ""

    @property
    def time_indexed(self) -> bool:
        return self.values.ndim == 3

    def sup_norm(self) -> float:
        return float(np.max(np.linalg.norm(self.values, axis=-1)))


# ---------------------------------------------------------------------------
# polynomial bump corpus
# ---------------------------------------------------------------------------


def _poly_profile(s: np.ndarray, k: int) -> np.ndarray:
    """(1 - s^2)^k clipped to |s| <= 1."""
    inside = np.abs(s) <= 1.0
    return np.where(inside, (1.0 - np.clip(s, -1, 1) ** 2) ** k, 0.0)


def _poly_profile_deriv(s: np.ndarray, k: int) -> np.ndarray:
    inside = np.abs(s) <= 1.0
    sc = np.clip(s, -1, 1)
    return np.where(inside, -2.0 * k * sc * (1.0 - sc**2) ** (k - 1), 0.0)


def _numeric_sup(f: Callable, lo: np.ndarray, hi: np.ndarray, n: int = 61) -> float:
    """Sup of a nonnegative function over a box: dense grid plus local polish."""
    axes = [np.linspace(lo[i], hi[i], n) for i in range(lo.size)]
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    vals = f(pts)
    best = int(np.argmax(vals))
    x0 = pts[best]
    res = optimize.minimize(
        lambda x: -float(f(x.reshape(1, -1))[0]),
        x0,
        method="Nelder-Mead",
        options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 2000},
    )
    return max(float(vals[best]), -float(res.fun))


def polynomial_bump(
    center: Sequence[float],
    halfwidth: Sequence[float],
    k: int = 4,
    amplitude: float = 1.0,
    time_profile: str | None = None,
    t_cut: float = math.inf,
    name: str = "",
) -> SmoothTestFunction:
    """Tensor-product polynomial bump, optionally modulated in time.

    The spatial part is amplitude * prod_i (1 - s_i^2)^k with
    s_i = (x_i - c_i) / w_i, which vanishes with k-th order contact on the
    boundary of the support box.  Time profiles:

    * None: constant in time (t_cut ignored, set to +inf),
    * "decay": g(t) = (1 - (t / t_cut)^2)^k on [0, t_cut), so g(0) = 1,
    * "modulated": the decay profile times (1 - 2 t / t_cut), which changes
      sign inside the support.
    """
    c = np.asarray(center, dtype=float)
    w = np.asarray(halfwidth, dtype=float)
    d = c.size
    if np.any(w <= 0):
        raise ValueError("halfwidths must be positive")

    def wfun(x):
        x = np.asarray(x, dtype=float)
        s = (x - c) / w
        return amplitude * np.prod(_poly_profile(s, k), axis=-1)

    def grad_wfun(x):
        x = np.asarray(x, dtype=float)
        s = (x - c) / w
        prof = _poly_profile(s, k)
        dprof = _poly_profile_deriv(s, k) / w
        out = np.empty(x.shape)
        for i in range(d):
            others = np.prod(np.delete(prof, i, axis=-1), axis=-1)
            out[..., i] = amplitude * dprof[..., i] * others
        return out

    if time_profile is None:
        g = lambda t: np.ones_like(np.asarray(t, dtype=float))
        dg = lambda t: np.zeros_like(np.asarray(t, dtype=float))
        t_cut_eff = math.inf
        g_abs_max = 1.0
        dg_abs_max = 0.0
    else:
        if not (t_cut > 0 and math.isfinite(t_cut)):
            raise ValueError("time profiles need a finite positive t_cut")
        t_cut_eff = t_cut

        if time_profile == "decay":
            def g(t):
                s = np.asarray(t, dtype=float) / t_cut
                return np.where((s >= 0) & (s < 1), (1.0 - np.clip(s, 0, 1) ** 2) ** k, 0.0)

            def dg(t):
                s = np.asarray(t, dtype=float) / t_cut
                sc = np.clip(s, 0, 1)
                val = -2.0 * k * sc * (1.0 - sc**2) ** (k - 1) / t_cut
                return np.where((s >= 0) & (s < 1), val, 0.0)

        elif time_profile == "modulated":
            def g(t):
                s = np.asarray(t, dtype=float) / t_cut
                base = (1.0 - np.clip(s, 0, 1) ** 2) ** k
                return np.where((s >= 0) & (s < 1), base * (1.0 - 2.0 * np.clip(s, 0, 1)), 0.0)

            def dg(t):
                s = np.asarray(t, dtype=float) / t_cut
                sc = np.clip(s, 0, 1)
                base = (1.0 - sc**2) ** k
                dbase = -2.0 * k * sc * (1.0 - sc**2) ** (k - 1)
                val = (dbase * (1.0 - 2.0 * sc) - 2.0 * base) / t_cut
                return np.where((s >= 0) & (s < 1), val, 0.0)

        else:
            raise ValueError(f"unknown time profile {time_profile!r}")

        ts = np.linspace(0.0, t_cut, 20001)
        g_abs_max = float(np.max(np.abs(g(ts))))
        dg_abs_max = float(np.max(np.abs(dg(ts)))) * (1.0 + 1e-9)

    def value(x, t=0.0):
        return wfun(x) * g(t)

    def grad(x, t=0.0):
        gw = grad_wfun(x)
        gt = np.asarray(g(t), dtype=float)
        return gw * gt[..., None] if gt.ndim else gw * gt

    def dt(x, t=0.0):
        return wfun(x) * dg(t)

    lo = c - w
    hi = c + w
    grad_norm = lambda x: np.linalg.norm(grad_wfun(x), axis=-1)
    spatial_grad_sup = _numeric_sup(grad_norm, lo, hi) * (1.0 + 1e-9)
    w_abs_sup = abs(amplitude)  # attained at the center

    return SmoothTestFunction(
        name=name or f"bump(k={k})",
        dim=d,
        value=value,
        grad=grad,
        dt=dt,
        support=(lo, hi),
        t_cut=t_cut_eff,
        grad_sup=spatial_grad_sup * g_abs_max,
        dt_sup=w_abs_sup * dg_abs_max,
        separable=(wfun, grad_wfun, g, dg),
    )


def bump_corpus_spatial(dim: int) -> list[SmoothTestFunction]:
    """Time-constant test functions supported strictly inside the unit box."""
    if dim == 1:
        return [
            polynomial_bump([0.5], [0.32], k=4, name="bump-center"),
            polynomial_bump([0.42], [0.22], k=3, amplitude=1.5, name="bump-left"),
            polynomial_bump([0.6], [0.28], k=5, amplitude=0.8, name="bump-right"),
        ]
    if dim == 2:
        return [
            polynomial_bump([0.5, 0.5], [0.29, 0.29], k=4, name="bump-center"),
            polynomial_bump([0.45, 0.55], [0.22, 0.25], k=3, amplitude=1.5,
                            name="bump-offset"),
            polynomial_bump([0.55, 0.45], [0.3, 0.21], k=5, amplitude=0.8,
                            name="bump-squeezed"),
        ]
    raise ValueError(f"no corpus for dim {dim}")


def vector_corpus(dim: int) -> list[VectorTestFunction]:
    """Compactly supported vector fields paired against discrete gradients."""
    def pack(name, comps):
        def jac_norm(x):
            rows = [c.grad(x, 0.0) for c in comps]  # each (..., d)
            J = np.stack(rows, axis=-2)  # (..., comp, d)
            spec = np.linalg.norm(J, ord=2, axis=(-2, -1))
            div = np.abs(sum(rows[i][..., i] for i in range(dim)))
            return np.maximum(spec, div)

        lo = np.min([c.support[0] for c in comps], axis=0)
        hi = np.max([c.support[1] for c in comps], axis=0)
        sup = _numeric_sup(jac_norm, lo, hi) * (1.0 + 1e-9)
        return VectorTestFunction(name=name, dim=dim, components=tuple(comps),
                                  jacobian_sup=sup)

    if dim == 1:
        return [
            pack("psi-a", [polynomial_bump([0.48], [0.3], k=4)]),
            pack("psi-b", [polynomial_bump([0.56], [0.25], k=3, amplitude=1.2)]),
        ]
    if dim == 2:
        return [
            pack(
                "psi-a",
                [
                    polynomial_bump([0.5, 0.48], [0.28, 0.3], k=4),
                    polynomial_bump([0.48, 0.55], [0.3, 0.24], k=3, amplitude=0.9),
                ],
            ),
            pack(
                "psi-b",
                [
                    polynomial_bump([0.55, 0.5], [0.24, 0.27], k=3, amplitude=1.1),
                    polynomial_bump([0.46, 0.46], [0.26, 0.26], k=5, amplitude=0.7),
                ],
            ),
        ]
    raise ValueError(f"no corpus for dim {dim}")


def bump_corpus_spacetime(dim: int, t_final: float,
                          margin_frac: float = 0.2) -> list[SmoothTestFunction]:
    """Four space-time test functions: three decaying bumps at different
    centers and scales plus one with a sign-changing time modulation.

    All vanish for t >= (1 - margin_frac) * t_final so the final jump terms
    of the residual decomposition drop out on any admissible time grid.
    """
    t_cut = (1.0 - margin_frac) * t_final
    if dim == 1:
        specs = [
            ([0.5], [0.3], 4, 1.0, "decay"),
            ([0.42], [0.24], 3, 1.4, "decay"),
            ([0.62], [0.22], 5, 0.9, "decay"),
            ([0.52], [0.28], 4, 1.0, "modulated"),
        ]
    elif dim == 2:
        specs = [
            ([0.5, 0.5], [0.28, 0.28], 4, 1.0, "decay"),
            ([0.44, 0.54], [0.22, 0.24], 3, 1.4, "decay"),
            ([0.58, 0.44], [0.24, 0.2], 5, 0.9, "decay"),
            ([0.5, 0.52], [0.26, 0.26], 4, 1.0, "modulated"),
        ]
    else:
        raise ValueError(f"no corpus for dim {dim}")
    out = []
    for i, (c, w, k, amp, prof) in enumerate(specs):
        out.append(
            polynomial_bump(c, w, k=k, amplitude=amp, time_profile=prof,
                            t_cut=t_cut, name=f"phi{i}-{prof}")
        )
    return out


# ---------------------------------------------------------------------------
# discrete operators
# ---------------------------------------------------------------------------


def _anchor_values(mesh: Mesh, phi: SmoothTestFunction, t: float) -> np.ndarray:
    return np.asarray(phi.value(mesh.cell_center, t), dtype=float)


def discrete_gradient(mesh: Mesh, phi: SmoothTestFunction, t: float = 0.0,
                      ) -> FaceVectorField:
    """Face-indexed gradient of phi sampled at cell anchors at time t.

    Interior faces carry (|sigma| / |D_sigma|) (phi_L - phi_K) n; boundary
    faces carry the zero vector.
    """
    vals = np.zeros((mesh.n_faces, mesh.dim))
    mask = mesh.interior
    pk = _anchor_values(mesh, phi, t)
    jump = pk[mesh.face_L[mask]] - pk[mesh.face_K[mask]]
    coeff = mesh.face_area[mask] / mesh.face_dsig[mask] * jump
    vals[mask] = coeff[:, None] * mesh.face_normal[mask]
    return FaceVectorField(mesh=mesh, values=vals, label=f"grad[{phi.name}]")


def sup_bound_check(field: FaceVectorField, quality: MeshQuality,
                    phi: SmoothTestFunction) -> float:
    """Worst ratio of |field| to theta_grad * sup|grad phi| over faces.

    Raises InvariantViolation when the ratio exceeds 1 + 1e-12; the bound is
    a theorem for discrete gradients of Lipschitz functions, so a breach
    means either the field is not such a gradient or the declared sup lies.
    """
    bound = quality.theta_grad * phi.grad_sup
    if bound == 0.0:
        sup = field.sup_norm()
        if sup > 0.0:
            raise InvariantViolation("nonzero field against a zero bound")
        return 0.0
    ratio = field.sup_norm() / bound
    if ratio > 1.0 + SUP_BOUND_TOL:
        raise InvariantViolation(
            f"face gradient sup {field.sup_norm():.6e} exceeds "
            f"theta_grad * |grad phi|_inf = {bound:.6e} (ratio {ratio:.12f})"
        )
    return ratio


def _dual_mean_points(mesh: Mesh, order: int):
    """Quadrature points and weights approximating means over dual volumes.

    Order 1 samples the face centroid.  Order 2 combines, for each side,
    the anchor and the face centroid with the cone centroid weights
    (1, dim) / (dim + 1), weighted by the dual split measures; the rule is
    exact for affine integrands on cone dual volumes.
    """
    if order not in (1, 2):
        raise ValueError(f"unsupported quadrature order {order}")
    m = mesh.n_faces
    d = mesh.dim
    if order == 1:
        pts = mesh.face_centroid[:, None, :]
        wts = np.ones((m, 1))
        return pts, wts
    xk = mesh.cell_center[mesh.face_K]
    xl = np.where(
        (mesh.face_L >= 0)[:, None],
        mesh.cell_center[np.maximum(mesh.face_L, 0)],
        mesh.face_centroid,
    )
    pts = np.stack([xk, xl, mesh.face_centroid], axis=1)  # (m, 3, d)
    wk = mesh.face_dk / mesh.face_dsig
    wl = mesh.face_dl / mesh.face_dsig
    apex = 1.0 / (d + 1.0)
    base = d / (d + 1.0)
    wts = np.stack([wk * apex, wl * apex, base * np.ones(m)], axis=1)
    return pts, wts


def weak_pairing(field: FaceVectorField, psi: VectorTestFunction,
                 quadrature_order: int = 2) -> float:
    """Sum over faces of |D_sigma| * field_sigma . (mean of psi over D_sigma).

    The dual-volume mean of psi is approximated by the order-1 or order-2
    point rule of :func:`_dual_mean_points`.
    """
    mesh = field.mesh
    pts, wts = _dual_mean_points(mesh, quadrature_order)
    psi_vals = psi.value(pts.reshape(-1, mesh.dim)).reshape(pts.shape)
    psi_bar = np.einsum("fq,fqd->fd", wts, psi_vals)
    return float(np.einsum("f,fd,fd->", mesh.face_dsig, field.values, psi_bar))


def spacetime_gradient(mesh: Mesh, grid: TimeGrid, phi: SmoothTestFunction,
                       ) -> FaceVectorField:
    """Time-indexed discrete gradient: slab n samples phi at t_n."""
    vals = np.zeros((grid.n_steps, mesh.n_faces, mesh.dim))
    for n in range(grid.n_steps):
        vals[n] = discrete_gradient(mesh, phi, float(grid.nodes[n])).values
    return FaceVectorField(mesh=mesh, values=vals, label=f"grad_t[{phi.name}]")


def discrete_time_derivative(grid: TimeGrid, mesh: Mesh,
                             phi: SmoothTestFunction) -> np.ndarray:
    """Forward differences (phi_K^{n+1} - phi_K^n) / dt_n, shape (N, n_cells)."""
    node_vals = np.stack(
        [_anchor_values(mesh, phi, float(t)) for t in grid.nodes]
    )
    return np.diff(node_vals, axis=0) / grid.deltas[:, None]


# ---------------------------------------------------------------------------
# refinement study
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GradStudyRow:
    level: int
    h: float
    theta_grad: float
    psi_name: str
    pairing: float
    reference: float
    gap: float
    apriori_bound: float
    l1_distance: float


@dataclass(frozen=True)
class GradStudyResult:
    family: str
    phi_name: str
    rows: list[GradStudyRow]

    def gaps(self, psi_name: str) -> tuple[np.ndarray, np.ndarray]:
        hs = np.array([r.h for r in self.rows if r.psi_name == psi_name])
        gs = np.array([r.gap for r in self.rows if r.psi_name == psi_name])
        return hs, gs


def _composite_axis(a: float, b: float, n: int, npts: int):
    """Composite Gauss nodes and weights on [a, b] split into n panels."""
    x, w = quadrature.gauss_legendre(npts)
    edges = np.linspace(a, b, n + 1)
    half = 0.5 * np.diff(edges)
    pts = (edges[:-1, None] + half[:, None] * (x[None, :] + 1.0)).ravel()
    wts = (half[:, None] * w[None, :]).ravel()
    return pts, wts


def _reference_pairing(phi: SmoothTestFunction, psi: VectorTestFunction,
                       box, n_ref: int, dim: int) -> float:
    """High-order quadrature of integral grad(phi) . psi over the domain box."""
    lo, hi = box
    if dim == 1:
        pts, w = _composite_axis(float(lo[0]), float(hi[0]), n_ref, 6)
        gp = phi.grad(pts.reshape(-1, 1), 0.0)
        pv = psi.value(pts.reshape(-1, 1))
        return float(np.einsum("q,qd,qd->", w, gp, pv))
    px, wx = _composite_axis(float(lo[0]), float(hi[0]), n_ref, 4)
    py, wy = _composite_axis(float(lo[1]), float(hi[1]), n_ref, 4)
    gx, gy = np.meshgrid(px, py, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel()], axis=-1)
    w = np.multiply.outer(wx, wy).ravel()
    gp = phi.grad(pts, 0.0)
    pv = psi.value(pts)
    return float(np.einsum("q,qd,qd->", w, gp, pv))


def _l1_gradient_distance(mesh: Mesh, field: FaceVectorField,
                          phi: SmoothTestFunction, order: int) -> float:
    """L1 distance between the face-constant gradient (spread over dual
    volumes) and the true gradient, by the dual point rule (diagnostic)."""
    pts, wts = _dual_mean_points(mesh, order)
    gp = phi.grad(pts.reshape(-1, mesh.dim), 0.0).reshape(pts.shape)
    diff = np.linalg.norm(gp - field.values[:, None, :], axis=-1)
    per_face = np.einsum("fq,fq->f", wts, diff)
    return float(np.dot(mesh.face_dsig, per_face))


def gradient_weakstar_study(
    family: MeshFamily,
    phi: SmoothTestFunction,
    psi_list: Sequence[VectorTestFunction],
    levels: int,
    quadrature_order: int = 2,
    reference_factor: int = 4,
) -> GradStudyResult:
    """Measure the dual pairing of the discrete gradient against reference
    integrals under refinement, asserting the a-priori gap bound per level.

    The reference integral is computed once per psi by composite Gauss
    quadrature on a grid ``reference_factor`` times finer than the finest
    study level.
    """
    meshes = refine(family, levels)
    dim = meshes[0].dim
    box = meshes[0].box
    # panels per axis of the reference grid: reference_factor times the
    # effective per-axis resolution of the finest study mesh
    extent = float(np.max(box[1] - box[0]))
    axis_h = meshes[-1].h_max / math.sqrt(dim)
    n_ref = reference_factor * int(math.ceil(extent / axis_h))
    refs = {
        psi.name: _reference_pairing(phi, psi, box, n_ref, dim) for psi in psi_list
    }

    omega = meshes[0].domain_measure
    rows: list[GradStudyRow] = []
    for lvl, mesh in enumerate(meshes):
        qual = compute_quality(mesh)
        field = discrete_gradient(mesh, phi, 0.0)
        sup_bound_check(field, qual, phi)
        for psi in psi_list:
            pairing = weak_pairing(field, psi, quadrature_order)
            ref = refs[psi.name]
            gap = abs(pairing - ref)
            bound = (
                (1.0 + qual.theta_grad)
                * phi.grad_sup
                * psi.jacobian_sup
                * omega
                * mesh.h_max
            )
            if gap > bound * (1.0 + 1e-9):
                raise InvariantViolation(
                    f"weak pairing gap {gap:.6e} exceeds a-priori bound "
                    f"{bound:.6e} at level {lvl} (psi {psi.name})"
                )
            rows.append(
                GradStudyRow(
                    level=lvl,
                    h=mesh.h_max,
                    theta_grad=qual.theta_grad,
                    psi_name=psi.name,
                    pairing=pairing,
                    reference=ref,
                    gap=gap,
                    apriori_bound=bound,
                    l1_distance=_l1_gradient_distance(mesh, field, phi,
                                                      quadrature_order),
                )
            )
    return GradStudyResult(family=family.name, phi_name=phi.name, rows=rows)
