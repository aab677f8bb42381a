"""Embedded tori in 3-space: induced geometry, restriction of ambient fields,
normal surface derivative, first-integral weights and Corollary-style periods.

Conventions: the unit normal is ``orientation * (T_x x T_y) / |T_x x T_y|``;
with ``orientation = +1`` the chart orientation dx^dy agrees with the one
induced by n.  Ambient derivatives are central differences with one
Richardson step; the default step is ``1e-4 * diameter``.
"""

from __future__ import annotations

import functools
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import (
    ConfigError,
    CriticalPointError,
    NotTangentError,
    OffSurfaceError,
    RankDeficiencyError,
)
from .fields import (
    Grid,
    Interpolant,
    OneForm,
    ScalarField,
    TwoForm,
    _derivative_array,
)
from .metric import (
    MetricField,
    VectorField,
    WeightField,
    codifferential,
    d_oneform,
    flat,
    hodge_star_1,
)

TANGENCY_TOL = 1e-8
RANK_TOL = 1e-10
SEAM_TOL = 1e-12
LEVEL_TOL = 1e-8
OFF_SURFACE_TOL = 1e-8
STEP_FRACTION = 1e-4
# weight conventions for the first-integral weight P built from u = -ln|grad rho|
WEIGHT_CONVENTIONS = {"theorem": 1.0, "corollary": -1.0}


@dataclass(frozen=True)
class AmbientSpace:
    mode: str = "euclidean"
    periods: Optional[tuple] = None

    def __post_init__(self):
        if self.mode not in ("euclidean", "periodic_box"):
            raise ConfigError(f"unknown ambient mode {self.mode!r}")
        if self.mode == "periodic_box":
            if self.periods is None or len(self.periods) != 2 or min(self.periods) <= 0:
                raise ConfigError("periodic_box needs two positive periods (x, y)")


@dataclass(frozen=True)
class Immersion:
    """Chart map ``[0,1)^2 -> R^3``; ``drift`` holds ``T(x+1,y) - T(x,y)`` and
    ``T(x,y+1) - T(x,y)`` as columns (zero for closed tori in Euclidean space)."""

    map: Callable
    drift: np.ndarray = field(default_factory=lambda: np.zeros((3, 2)))

    def __call__(self, x, y):
        return np.asarray(self.map(x, y), dtype=float)

    def at_points(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return self(pts[:, 0], pts[:, 1])


@dataclass(frozen=True)
class AmbientField:
    """Analytic ambient vector field ``func(q) -> (3, ...)`` for ``q`` of shape (3, ...)."""

    func: Callable
    divergence: Optional[Callable] = None

    def __call__(self, q):
        return np.asarray(self.func(np.asarray(q, dtype=float)), dtype=float)


@dataclass(frozen=True)
class AmbientScalar:
    func: Callable
    gradient: Optional[Callable] = None

    def __call__(self, q):
        return np.asarray(self.func(np.asarray(q, dtype=float)), dtype=float)


class SampledAmbientField(AmbientField):
    """Trilinear interpolation of a box grid ``{origin, spacing, dims, components}``."""

    def __init__(self, origin, spacing, components):
        components = np.asarray(components, dtype=float)
        if components.ndim != 4 or components.shape[0] != 3:
            raise ConfigError("components must have shape (3, nx, ny, nz)")
        axes = [origin[i] + spacing[i] * np.arange(components.shape[i + 1]) for i in range(3)]
        interps = [RegularGridInterpolator(axes, components[c], method="linear") for c in range(3)]

        def func(q):
            flat_q = q.reshape(3, -1).T
            return np.stack([f(flat_q) for f in interps]).reshape(q.shape)

        object.__setattr__(self, "func", func)
        object.__setattr__(self, "divergence", None)
        self.origin = tuple(origin)
        self.spacing = tuple(spacing)
        self.dims = components.shape[1:]

    def __setattr__(self, name, value):
        object.__setattr__(self, name, value)


@dataclass(frozen=True, eq=False)
class SurfaceGeometry:
    grid: Grid
    immersion: Immersion
    ambient: AmbientSpace
    positions: np.ndarray
    tx: np.ndarray
    ty: np.ndarray
    normal: np.ndarray
    metric: MetricField
    area: TwoForm
    orientation: int
    diameter: float

    def tangent_frame_at(self, points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Interpolated tangents and unit normal at lifted chart points, each (3, M)."""
        vals = Interpolant(np.concatenate([self.tx, self.ty]))(points)
        tx, ty = vals[:3], vals[3:]
        n = np.cross(tx, ty, axis=0)
        n = self.orientation * n / np.linalg.norm(n, axis=0)
        return tx, ty, n

    def default_step(self) -> float:
        return STEP_FRACTION * self.diameter


def _periodic_derivative(values: np.ndarray, drift: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Chart derivatives of an immersion sample with linear drift removed."""
    ny, nx = values.shape[-2:]
    x = np.arange(nx) / nx
    y = np.arange(ny) / ny
    X, Y = np.meshgrid(x, y)
    periodic = values - drift[:, 0, None, None] * X - drift[:, 1, None, None] * Y
    tx = np.stack([_derivative_array(c, "x") for c in periodic]) + drift[:, 0, None, None]
    ty = np.stack([_derivative_array(c, "y") for c in periodic]) + drift[:, 1, None, None]
    return tx, ty


def induced_geometry(imm: Immersion, amb: AmbientSpace, grid: Grid, orientation: int = 1) -> SurfaceGeometry:
    """Metric ``g_ij = <d_i T, d_j T>``, unit normal and area form of an immersion."""
    if orientation not in (1, -1):
        raise ConfigError("orientation must be +1 or -1")
    drift = np.asarray(imm.drift, dtype=float)
    if amb.mode == "euclidean" and np.any(drift != 0):
        raise ConfigError("a closed torus in Euclidean space has no lattice drift")
    x, y = grid.nodes()
    pos = imm(x, y)
    # seam: one period along each axis must reproduce the drift
    scale = max(1.0, float(np.abs(pos).max()))
    for axis, (sx, sy) in enumerate(((1.0, 0.0), (0.0, 1.0))):
        shifted = imm(x + sx, y + sy)
        seam = float(np.max(np.abs(shifted - pos - drift[:, axis, None, None])))
        if seam > SEAM_TOL * scale:
            raise ConfigError(f"immersion is not periodic along axis {axis} (seam mismatch {seam:.2e})")
    tx, ty = _periodic_derivative(pos, drift)
    cross = np.cross(tx, ty, axis=0)
    cn = np.linalg.norm(cross, axis=0)
    ref = np.linalg.norm(tx, axis=0) * np.linalg.norm(ty, axis=0)
    bad = cn <= RANK_TOL * ref
    if bad.any():
        j, i = np.argwhere(bad)[0]
        raise RankDeficiencyError(f"immersion has rank < 2 at node (i={i}, j={j})")
    normal = orientation * cross / cn
    g11 = np.einsum("cji,cji->ji", tx, tx)
    g12 = np.einsum("cji,cji->ji", tx, ty)
    g22 = np.einsum("cji,cji->ji", ty, ty)
    metric = MetricField.from_arrays(grid, g11, g12, g22)
    lo = pos.reshape(3, -1).min(axis=1)
    hi = pos.reshape(3, -1).max(axis=1)
    return SurfaceGeometry(
        grid=grid,
        immersion=imm,
        ambient=amb,
        positions=pos,
        tx=tx,
        ty=ty,
        normal=normal,
        metric=metric,
        area=TwoForm(ScalarField(grid, metric.sqrt_det)),
        orientation=orientation,
        diameter=float(np.linalg.norm(hi - lo)),
    )


def restrict_field(B: AmbientField, geom: SurfaceGeometry) -> tuple[VectorField, ScalarField]:
    """Chart components of the tangential part and the normal component of B."""
    Bq = B(geom.positions)
    r1 = np.einsum("cji,cji->ji", Bq, geom.tx)
    r2 = np.einsum("cji,cji->ji", Bq, geom.ty)
    g = geom.metric
    X = VectorField.from_arrays(geom.grid, g.inv11 * r1 + g.inv12 * r2, g.inv12 * r1 + g.inv22 * r2)
    normal = ScalarField(geom.grid, np.einsum("cji,cji->ji", Bq, geom.normal))
    return X, normal


def restricted_form(B: AmbientField, geom: SurfaceGeometry) -> OneForm:
    """Pullback of B^flat: components ``<B, d_i T>``."""
    Bq = B(geom.positions)
    return OneForm.from_arrays(
        geom.grid,
        np.einsum("cji,cji->ji", Bq, geom.tx),
        np.einsum("cji,cji->ji", Bq, geom.ty),
    )


def _richardson(F: Callable, q: np.ndarray, d: np.ndarray, h: float) -> np.ndarray:
    """Directional derivative of F at q along d (central differences, one Richardson step)."""
    d1 = (F(q + h * d) - F(q - h * d)) / (2 * h)
    d2 = (F(q + 0.5 * h * d) - F(q - 0.5 * h * d)) / h
    return (4 * d2 - d1) / 3


def ambient_divergence(B: AmbientField, q: np.ndarray, h: float) -> np.ndarray:
    if B.divergence is not None:
        return np.asarray(B.divergence(q), dtype=float)
    total = np.zeros(q.shape[1:])
    for c in range(3):
        e = np.zeros_like(q)
        e[c] = 1.0
        total += _richardson(lambda p: B(p)[c], q, e, h)
    return total


def _check_tangent(B: AmbientField, geom: SurfaceGeometry) -> np.ndarray:
    Bq = B(geom.positions)
    nb = np.abs(np.einsum("cji,cji->ji", Bq, geom.normal))
    scale = max(float(np.linalg.norm(Bq, axis=0).max()), 1e-300)
    if nb.max() > TANGENCY_TOL * scale:
        raise NotTangentError(f"B is not tangent: max |B.n| = {nb.max():.2e}")
    return Bq


@dataclass(frozen=True)
class SignCalibration:
    sign: int
    residual: float
    rejected_residual: float
    source: str

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@functools.lru_cache(maxsize=1)
def calibrate_sign(resolution: int = 64) -> SignCalibration:
    """Fix s in ``delta_S omega = s (div B - d_n B)`` on the elongated shell.

    The ambient normal derivative does not involve s; the surface identity is
    evaluated with both signs and the one matching it is kept.  An elongated
    cross-section is required: for a circular one d_n B vanishes and both
    signs fit equally well.
    """
    from .oracles import AxisymmetricShell

    shell = AxisymmetricShell(kappa=1.5)
    c = 0.8
    geom = induced_geometry(Immersion(shell.immersion_map(c)), AmbientSpace(), Grid.square(resolution))
    B = AmbientField(shell.field)
    ambient = normal_derivative(B, geom, method="ambient").values
    X, _ = restrict_field(B, geom)
    delta = codifferential(geom.metric, flat(geom.metric, X)).values
    div = ambient_divergence(B, geom.positions, geom.default_step())
    res = {s: float(np.max(np.abs(ambient - (div - s * delta)))) for s in (1, -1)}
    best = min(res, key=res.get)
    return SignCalibration(best, res[best], res[-best], f"axisymmetric shell kappa=1.5, c={c}, N={resolution}")


def normal_derivative(
    B: AmbientField,
    geom: SurfaceGeometry,
    method: str = "ambient",
    h: Optional[float] = None,
    extension: Optional[Callable] = None,
    sign: Optional[int] = None,
) -> ScalarField:
    """Normal surface derivative ``g([V, B], V)`` on the surface.

    method ``ambient``: V is the unit normal carried along straight normal
    lines (or ``extension(q)``, any unit field equal to +-n on the surface);
    ``(V.grad)B`` is differenced along V and ``V.(B.grad)V`` is the shape
    operator term ``n . dn(X)`` (differenced along B for a custom extension).

    method ``surface``: ``div B - s delta_S(omega)`` with ``omega`` the
    restricted 1-form and s the calibrated sign (or ``sign``).

    method ``both``: ambient result; warns if the surface value disagrees
    beyond ``10 (h^2 + 1e-10)`` relative to max |B|.
    """
    Bq = _check_tangent(B, geom)
    h = geom.default_step() if h is None else float(h)
    q, n = geom.positions, geom.normal
    if method in ("ambient", "both"):
        if extension is None:
            V = n
            term1 = np.einsum("cji,cji->ji", V, _richardson(B, q, V, h))
            X, _ = restrict_field(B, geom)
            dn = np.stack([
                X.comp_x.values * _derivative_array(n[c], "x") + X.comp_y.values * _derivative_array(n[c], "y")
                for c in range(3)
            ])
            term2 = np.einsum("cji,cji->ji", V, dn)
        else:
            V = np.asarray(extension(q), dtype=float)
            term1 = np.einsum("cji,cji->ji", V, _richardson(B, q, V, h))
            speed = np.linalg.norm(Bq, axis=0)
            safe = np.where(speed > 0, speed, 1.0)
            direction = Bq / safe
            dV = _richardson(lambda p: np.asarray(extension(p), dtype=float), q, direction, h) * speed
            term2 = np.einsum("cji,cji->ji", V, dV)
        ambient = term1 - term2
        if method == "ambient":
            return ScalarField(geom.grid, ambient)
    if method not in ("surface", "both"):
        raise ConfigError(f"unknown method {method!r}")
    s = calibrate_sign().sign if sign is None else int(sign)
    X, _ = restrict_field(B, geom)
    delta = codifferential(geom.metric, flat(geom.metric, X)).values
    surface = ambient_divergence(B, q, h) - s * delta
    if method == "surface":
        return ScalarField(geom.grid, surface)
    scale = max(1.0, float(np.linalg.norm(Bq, axis=0).max()))
    gap = float(np.max(np.abs(surface - ambient)))
    if gap > 10 * (h * h + 1e-10) * scale:
        warnings.warn(f"normal-derivative methods disagree by {gap:.2e}", RuntimeWarning, stacklevel=2)
    return ScalarField(geom.grid, ambient)


def first_integral_u(rho: AmbientScalar, geom: SurfaceGeometry, h: Optional[float] = None) -> ScalarField:
    """``u = -ln |grad rho|`` on the surface; rho must be constant there."""
    q = geom.positions
    vals = rho(q)
    level = float(np.mean(vals))
    spread = float(np.max(np.abs(vals - level)))
    if spread > LEVEL_TOL * max(1.0, abs(level)):
        raise OffSurfaceError(f"rho varies by {spread:.2e} on the surface; not a level set")
    if rho.gradient is not None:
        grad = np.asarray(rho.gradient(q), dtype=float)
    else:
        step = geom.default_step() if h is None else float(h)
        grad = np.stack([_richardson(rho, q, np.eye(3)[c][:, None, None] * np.ones_like(q), step) for c in range(3)])
    norm = np.linalg.norm(grad, axis=0)
    if norm.min() <= 1e-12 * max(norm.max(), 1e-300):
        j, i = np.unravel_index(np.argmin(norm), norm.shape)
        raise CriticalPointError(f"grad rho vanishes at node (i={i}, j={j})")
    return ScalarField(geom.grid, -np.log(norm))


def weight_from_u(u: ScalarField, convention: str = "theorem") -> WeightField:
    """First-integral weight: ``e^u`` (``theorem``, default) or ``e^-u`` (``corollary``)."""
    if convention not in WEIGHT_CONVENTIONS:
        raise ConfigError(f"unknown weight convention {convention!r}")
    return WeightField.from_exponent(u, WEIGHT_CONVENTIONS[convention])


def curl_normal_component(B: AmbientField, geom: SurfaceGeometry) -> ScalarField:
    """``(curl B) . n`` from the intrinsic identity ``d(i^* B^flat) = (curl B . n) mu_S``."""
    omega = restricted_form(B, geom)
    return ScalarField(geom.grid, d_oneform(omega).coeff.values / geom.metric.sqrt_det)


def ambient_curl_normal(B: AmbientField, geom: SurfaceGeometry, h: Optional[float] = None) -> ScalarField:
    """Finite-difference ``(curl B) . n`` for cross-checking."""
    q = geom.positions
    step = geom.default_step() if h is None else float(h)
    J = np.empty((3, 3) + q.shape[1:])  # J[i, j] = d_j B_i
    for j in range(3):
        e = np.zeros_like(q)
        e[j] = 1.0
        J[:, j] = _richardson(B, q, e, step)
    curl = np.stack([J[2, 1] - J[1, 2], J[0, 2] - J[2, 0], J[1, 0] - J[0, 1]])
    return ScalarField(geom.grid, np.einsum("cji,cji->ji", curl, geom.normal))


def advert_integrals(
    B: AmbientField,
    geom: SurfaceGeometry,
    u: ScalarField,
    curves: tuple,
    exponent_sign: float = -1.0,
) -> tuple[float, ...]:
    """``I(C, u) = int exp(exponent_sign * u(C)) det(C', B(C), n(C)) dt`` per curve.

    Curves are lifted chart curves mapped through the immersion; the mapped
    points are compared with the spectral surface samples and rejected beyond
    1e-8 (a curve the sampled surface does not resolve).
    """
    if geom.ambient.mode != "euclidean":
        raise ConfigError("advert integrals need a Euclidean ambient space")
    out = []
    pos_interp = None
    for C in curves:
        pts, vel, w = C.quadrature()
        q = geom.immersion.at_points(pts)
        if pos_interp is None:
            pos_interp = Interpolant(geom.positions)
        gap = float(np.max(np.abs(pos_interp(pts % 1.0) - geom.immersion.at_points(pts % 1.0))))
        if gap > OFF_SURFACE_TOL * max(1.0, geom.diameter):
            raise OffSurfaceError(f"curve leaves the resolved surface by {gap:.2e}")
        tx, ty, n = geom.tangent_frame_at(pts)
        dC = tx * vel[:, 0] + ty * vel[:, 1]
        Bq = B(q)
        det = np.einsum("cm,cm->m", np.cross(dC, Bq, axis=0), n)
        weight = np.exp(exponent_sign * u(pts))
        out.append(float(np.sum(w * weight * det)))
    return tuple(out)


def hodge_pullback_residual(geom: SurfaceGeometry, w: Callable, k: int = 1, exponent: str = "graded") -> float:
    """max |*_S i^*omega - sign i^*(i_n * omega)| for an ambient form given by a vector field.

    k = 1: ``omega = w . dq``; k = 2: ``omega(a, b) = w . (a x b)``.  ``exponent``
    selects ``sign = (-1)^k`` (``graded``, the Leibniz sign of the interior
    product) or ``(-1)^{k(n-k)}`` with n = 3 (``printed``); they differ for k = 1.
    """
    q = geom.positions
    W = np.asarray(w(q), dtype=float)
    sign = (-1) ** k if exponent == "graded" else (-1) ** (k * (3 - k))
    g = geom.metric
    if k == 1:
        pull = OneForm.from_arrays(geom.grid, np.einsum("cji,cji->ji", W, geom.tx), np.einsum("cji,cji->ji", W, geom.ty))
        lhs = hodge_star_1(g, pull)
        # (*omega)(n, a) = w . (n x a)
        nx = np.cross(geom.normal, geom.tx, axis=0)
        ny = np.cross(geom.normal, geom.ty, axis=0)
        rx = np.einsum("cji,cji->ji", W, nx)
        ry = np.einsum("cji,cji->ji", W, ny)
        return float(max(np.abs(lhs.comp_dx.values - sign * rx).max(), np.abs(lhs.comp_dy.values - sign * ry).max()))
    if k == 2:
        cross = np.cross(geom.tx, geom.ty, axis=0)
        lhs = np.einsum("cji,cji->ji", W, cross) / g.sqrt_det
        rhs = np.einsum("cji,cji->ji", W, geom.normal)
        return float(np.abs(lhs - sign * rhs).max())
    raise ValueError("k must be 1 or 2 on a surface in 3-space")
