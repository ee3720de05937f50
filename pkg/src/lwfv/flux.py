"""Physical flux functions and two- or three-point numerical fluxes.

Every numerical flux returns the scalar normal component through a face
given the adjacent states.  The contracts that the consistency analysis
relies on, and that the checkers in this module sample:

* conservativity: evaluate(a, b, n) == -evaluate(b, a, -n) exactly (the
  implementations are arranged so floating point negates bit for bit; the
  only slack is the sign of zero),
* consistency: evaluate(u, u, n) equals F(u) . n,
* a jump bound: both |evaluate(a, b, n) - F(a) . n| and
  |evaluate(a, b, n) - F(b) . n| are at most c_f * |a - b|, where c_f is a
  constant the flux declares.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.stats import qmc

from .mesh import Mesh
from .translations import CellField

__all__ = [
    "FluxFunction",
    "NumericalFlux",
    "linear_advection",
    "burgers",
    "upwind_linear",
    "rusanov",
    "muscl_three_point",
    "FluxCheckReport",
    "check_hypothesis_iii",
    "conservativity_check",
    "consistency_check",
    "multipoint_jump_bound_check",
]


def _vec_label(v) -> str:
    return ",".join("%g" % float(x) for x in np.atleast_1d(v))


def _normal_dot(vec, n):
    """Contraction along the last axis via elementwise multiply + pairwise sum.

    ``vec @ n`` is unusable here: numpy dispatches matmul to different kernels
    depending on operand memory layout (a broadcast view of n and a
    materialised -n take different paths), and the kernels round differently.
    The elementwise form always multiplies into a fresh contiguous array and
    reduces it with one fixed tree, so the result is bit-exactly antisymmetric
    under n -> -n.  Conservativity is checked with ==, hence the fuss.
    """
    return np.multiply(np.asarray(vec, dtype=float),
                       np.asarray(n, dtype=float)).sum(axis=-1)


@dataclass(frozen=True)
class FluxFunction:
    """A scalar conservation-law flux u -> F(u) in R^d.

    ``value`` is vectorised: u of shape (...) maps to (..., d).
    ``deriv_bound(lo, hi)`` returns a sup bound for |F'(u)|_2 on [lo, hi].
    """

    name: str
    dim: int
    value: Callable
    deriv_bound: Callable

    def __call__(self, u):
        return self.value(u)


def linear_advection(b) -> FluxFunction:
    bv = np.atleast_1d(np.asarray(b, dtype=float))
    speed = float(np.linalg.norm(bv))
    return FluxFunction(
        name=f"linear({_vec_label(bv)})",
        dim=bv.size,
        value=lambda u: np.asarray(u, dtype=float)[..., None] * bv,
        deriv_bound=lambda lo, hi: speed,
    )


def burgers(direction=(1.0,)) -> FluxFunction:
    dv = np.atleast_1d(np.asarray(direction, dtype=float))
    dnorm = float(np.linalg.norm(dv))
    return FluxFunction(
        name=f"burgers({_vec_label(dv)})",
        dim=dv.size,
        value=lambda u: 0.5 * np.asarray(u, dtype=float)[..., None] ** 2 * dv,
        deriv_bound=lambda lo, hi: max(abs(lo), abs(hi)) * dnorm,
    )


@dataclass(frozen=True)
class NumericalFlux:
    """A face flux with declared stencil width and jump-bound constant.

    ``evaluate(uK, uL, n, uKK=..., uLL=...)`` is vectorised over faces; the
    extra states are consumed only by three-point stencils (uKK is the cell
    behind K across its other face, uLL the cell behind L).
    ``wave_speed`` bounds the normal signal speed between two states and
    feeds the time-step selection.
    """

    name: str
    flux: FluxFunction
    stencil: int
    c_f: float
    evaluate: Callable
    wave_speed: Callable

    @property
    def dim(self) -> int:
        return self.flux.dim


def upwind_linear(b) -> NumericalFlux:
    """Donor-cell upwind flux for linear advection with velocity b."""
    F = linear_advection(b)
    bv = np.atleast_1d(np.asarray(b, dtype=float))
    speed = float(np.linalg.norm(bv))

    def evaluate(uK, uL, n, uKK=None, uLL=None):
        uK = np.asarray(uK, dtype=float)
        uL = np.asarray(uL, dtype=float)
        bn = _normal_dot(n, bv)
        return np.where(bn >= 0.0, bn * uK, bn * uL) + 0.0

    def wave_speed(a, b_, n):
        return np.abs(_normal_dot(n, bv))

    return NumericalFlux(
        name=f"upwind({_vec_label(bv)})",
        flux=F,
        stencil=2,
        c_f=speed,
        evaluate=evaluate,
        wave_speed=wave_speed,
    )


def _unit_normals(dim: int, count: int = 16) -> np.ndarray:
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    ang = 2.0 * math.pi * np.arange(count) / count
    return np.stack([np.cos(ang), np.sin(ang)], axis=-1)


def rusanov(F: FluxFunction, wave_speed_bound: Callable | None = None,
            u_range: tuple[float, float] = (-2.0, 2.0)) -> NumericalFlux:
    """Central flux with local dissipation lambda = wave_speed_bound(a, b, n).

    The default speed bound is the flux derivative bound on [min(a,b),
    max(a,b)], which is valid for any unit normal.  The declared jump-bound
    constant is the crude max |F'| + lambda_max / 2 over ``u_range``.
    """
    if wave_speed_bound is None:
        def wave_speed_bound(a, b, n):
            a = np.asarray(a, dtype=float)
            b = np.asarray(b, dtype=float)
            return F.deriv_bound(
                float(np.min(np.minimum(a, b))), float(np.max(np.maximum(a, b)))
            ) * np.ones(np.broadcast(a, b).shape)

    def evaluate(uK, uL, n, uKK=None, uLL=None):
        uK = np.asarray(uK, dtype=float)
        uL = np.asarray(uL, dtype=float)
        n = np.asarray(n, dtype=float)
        central = 0.5 * (F.value(uK) + F.value(uL))
        lam = np.asarray(wave_speed_bound(uK, uL, n), dtype=float)
        return _normal_dot(central, n) - 0.5 * lam * (uL - uK) + 0.0

    lo, hi = u_range
    lam_max = 0.0
    for a in (lo, hi, 0.5 * (lo + hi)):
        for b in (lo, hi, 0.5 * (lo + hi)):
            for n in _unit_normals(F.dim):
                lam_max = max(lam_max, float(wave_speed_bound(a, b, n)))
    c_f = F.deriv_bound(lo, hi) + 0.5 * lam_max

    return NumericalFlux(
        name=f"rusanov[{F.name}]",
        flux=F,
        stencil=2,
        c_f=c_f,
        evaluate=evaluate,
        wave_speed=lambda a, b, n: np.asarray(wave_speed_bound(a, b, n), dtype=float),
    )


def _minmod(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    same = a * b > 0.0
    return np.where(same, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def muscl_three_point(b, limiter: str = "minmod") -> NumericalFlux:
    """Second-order upwind flux for linear advection with a limited
    reconstruction at the face.

    The face state is u_up + theta * (u_down - u_up) with theta in [0, 1/2]
    by the minmod limiter, so it stays a convex combination of the adjacent
    states and the two-point jump bound holds with c_f = |b|.
    """
    if limiter != "minmod":
        raise ValueError(f"unknown limiter {limiter!r}")
    F = linear_advection(b)
    bv = np.atleast_1d(np.asarray(b, dtype=float))
    speed = float(np.linalg.norm(bv))

    def evaluate(uK, uL, n, uKK=None, uLL=None):
        uK = np.asarray(uK, dtype=float)
        uL = np.asarray(uL, dtype=float)
        if uKK is None:
            uKK = uK
        if uLL is None:
            uLL = uL
        uKK = np.asarray(uKK, dtype=float)
        uLL = np.asarray(uLL, dtype=float)
        bn = _normal_dot(n, bv)
        face_up_k = uK + 0.5 * _minmod(uK - uKK, uL - uK)
        face_up_l = uL + 0.5 * _minmod(uL - uLL, uK - uL)
        return np.where(bn >= 0.0, bn * face_up_k, bn * face_up_l) + 0.0

    def wave_speed(a, b_, n):
        return np.abs(_normal_dot(n, bv))

    return NumericalFlux(
        name=f"muscl({_vec_label(bv)})",
        flux=F,
        stencil=3,
        c_f=speed,
        evaluate=evaluate,
        wave_speed=wave_speed,
    )


# ---------------------------------------------------------------------------
# checkers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FluxCheckReport:
    name: str
    ok: bool
    max_ratio: float
    tolerance: float
    witness: tuple | None
    n_samples: int

    def __bool__(self) -> bool:
        return self.ok


def _halton_states(u_range, n_samples: int, dims: int) -> np.ndarray:
    lo, hi = u_range
    eng = qmc.Halton(d=dims, scramble=False)
    pts = eng.random(n_samples)
    return lo + (hi - lo) * pts


def check_hypothesis_iii(flux: NumericalFlux, u_range=(-2.0, 2.0),
                         n_samples: int = 20000) -> FluxCheckReport:
    """Sample the two-sided jump bound over a deterministic low-discrepancy
    set of state pairs (and stencil extensions) and unit normals.

    Returns the worst ratio |flux - F(state) . n| / |a - b| against the
    declared constant; a report with ok = False carries the witness tuple
    (a, b, n, ratio).
    """
    dims = 2 if flux.stencil == 2 else 4
    states = _halton_states(u_range, n_samples, dims)
    a = states[:, 0]
    b = states[:, 1]
    extra = (states[:, 2], states[:, 3]) if dims == 4 else (None, None)
    scale = max(abs(u_range[0]), abs(u_range[1]), 1.0)
    keep = np.abs(a - b) > 1e-12 * scale
    a, b = a[keep], b[keep]
    uKK = extra[0][keep] if extra[0] is not None else None
    uLL = extra[1][keep] if extra[1] is not None else None

    tol = flux.c_f * (1.0 + 1e-9)
    worst = -1.0
    witness = None
    for n in _unit_normals(flux.dim):
        nb = np.broadcast_to(n, (a.size, flux.dim))
        fval = flux.evaluate(a, b, nb, uKK=uKK, uLL=uLL)
        fa = flux.flux.value(a) @ n
        fb = flux.flux.value(b) @ n
        jumps = np.abs(a - b)
        r = np.maximum(np.abs(fval - fa), np.abs(fval - fb)) / jumps
        i = int(np.argmax(r))
        if r[i] > worst:
            worst = float(r[i])
            witness = (float(a[i]), float(b[i]), n.copy(), float(r[i]))
    ok = worst <= tol
    return FluxCheckReport(
        name=flux.name, ok=ok, max_ratio=worst, tolerance=tol,
        witness=None if ok else witness, n_samples=int(a.size),
    )


def conservativity_check(flux: NumericalFlux, u_range=(-2.0, 2.0),
                         n_samples: int = 5000) -> FluxCheckReport:
    """Exact equality evaluate(a,b,n) == -evaluate(b,a,-n) on sampled states."""
    dims = 2 if flux.stencil == 2 else 4
    states = _halton_states(u_range, n_samples, dims)
    a, b = states[:, 0], states[:, 1]
    uKK = states[:, 2] if dims == 4 else None
    uLL = states[:, 3] if dims == 4 else None
    witness = None
    ok = True
    for n in _unit_normals(flux.dim):
        nb = np.broadcast_to(n, (a.size, flux.dim))
        fwd = flux.evaluate(a, b, nb, uKK=uKK, uLL=uLL)
        bwd = flux.evaluate(b, a, -nb, uKK=uLL, uLL=uKK)
        bad = ~(fwd == -bwd)
        if np.any(bad):
            i = int(np.argmax(bad))
            ok = False
            witness = (float(a[i]), float(b[i]), n.copy(),
                       float(fwd[i]), float(bwd[i]))
            break
    return FluxCheckReport(
        name=flux.name, ok=ok, max_ratio=0.0 if ok else math.inf,
        tolerance=0.0, witness=witness, n_samples=int(a.size),
    )


def consistency_check(flux: NumericalFlux, u_range=(-2.0, 2.0),
                      n_samples: int = 5000) -> FluxCheckReport:
    """evaluate(u, u, n) must reproduce F(u) . n within 1e-14 relative."""
    states = _halton_states(u_range, n_samples, 1)[:, 0]
    worst = 0.0
    witness = None
    for n in _unit_normals(flux.dim):
        nb = np.broadcast_to(n, (states.size, flux.dim))
        fval = flux.evaluate(states, states, nb, uKK=states, uLL=states)
        exact = flux.flux.value(states) @ n
        scale = np.maximum(np.abs(exact), 1.0)
        r = np.abs(fval - exact) / scale
        i = int(np.argmax(r))
        if r[i] > worst:
            worst = float(r[i])
            witness = (float(states[i]), n.copy(), float(r[i]))
    ok = worst <= 1e-14
    return FluxCheckReport(
        name=flux.name, ok=ok, max_ratio=worst, tolerance=1e-14,
        witness=None if ok else witness, n_samples=int(states.size),
    )


def _sorted_1d_neighbors(mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    """Cell order along the axis and the periodic left/right neighbor maps."""
    if mesh.dim != 1:
        raise ValueError("stencil construction only supported on 1d meshes")
    order = np.argsort(mesh.cell_center[:, 0])
    pos = np.empty_like(order)
    pos[order] = np.arange(order.size)
    left = order[(pos[np.arange(order.size)] - 1) % order.size]
    right = order[(pos[np.arange(order.size)] + 1) % order.size]
    return left, right


def multipoint_jump_bound_check(flux: NumericalFlux, field: CellField,
                                ) -> FluxCheckReport:
    """On actual 1d data, verify the three-point jump bound
    |F_sigma - F(u_K) . n| <= c_f * (|u_K - u_L| + |u_K - u_M|)
    with M the extra stencil cell the flux consulted for that face.
    """
    mesh = field.mesh
    left, right = _sorted_1d_neighbors(mesh)
    u = field.values
    mask = mesh.interior
    K = mesh.face_K[mask]
    L = mesh.face_L[mask]
    n = mesh.face_normal[mask]
    # the far state behind K is K's periodic neighbor away from L, same for L
    went_right = mesh.cell_center[L, 0] > mesh.cell_center[K, 0]
    KK = np.where(went_right, left[K], right[K])
    LL = np.where(went_right, right[L], left[L])
    fval = flux.evaluate(u[K], u[L], n, uKK=u[KK], uLL=u[LL])
    fK = np.einsum("fd,fd->f", flux.flux.value(u[K]), n)
    # strict variant: take the smaller of the two candidate far-cell jumps,
    # so passing here implies the bound for whichever cell the flux used
    denom = np.abs(u[K] - u[L]) + np.minimum(
        np.abs(u[K] - u[KK]), np.abs(u[K] - u[LL])
    )
    num = np.abs(fval - fK)
    keep = denom > 0
    worst = 0.0
    witness = None
    if np.any(keep):
        r = num[keep] / (flux.c_f * denom[keep])
        i = int(np.argmax(r))
        worst = float(r[i])
        if worst > 1.0 + 1e-9:
            idx = np.flatnonzero(mask)[np.flatnonzero(keep)[i]]
            witness = (int(idx), float(u[K[keep][i]]), float(u[L[keep][i]]),
                       worst)
    zero_bad = np.any(~keep & (num > 1e-14))
    ok = worst <= 1.0 + 1e-9 and not zero_bad
    return FluxCheckReport(
        name=flux.name, ok=ok, max_ratio=worst, tolerance=1.0 + 1e-9,
        witness=witness, n_samples=int(K.size),
    )
