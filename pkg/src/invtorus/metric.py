"""Riemannian structure on the computational torus.

Orientation: dx^dy is positive.  On 1-forms the codifferential is
``delta = -*d*``, i.e. ``delta(omega) = -(1/sqrt g) d_i(sqrt g g^{ij} omega_j)``,
the negative divergence of the dual vector field.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import GridError, NotPositiveDefiniteError
from .fields import (
    Grid,
    OneForm,
    ScalarField,
    TwoForm,
    VectorLike,
    _derivative_array,
    _frozen,
    evaluate,
)


@dataclass(frozen=True, eq=False)
class MetricField:
    g11: ScalarField
    g12: ScalarField
    g22: ScalarField

    def __post_init__(self):
        grid = self.g11.grid
        if self.g12.grid != grid or self.g22.grid != grid:
            raise GridError("metric components must share a grid")
        det = self.g11.values * self.g22.values - self.g12.values ** 2
        bad = (self.g11.values <= 0) | (det <= 0)
        if bad.any():
            j, i = np.argwhere(bad)[0]
            raise NotPositiveDefiniteError(f"metric not positive definite at node (i={i}, j={j})")
        object.__setattr__(self, "sqrt_det", _frozen(np.sqrt(det)))
        object.__setattr__(self, "inv11", _frozen(self.g22.values / det))
        object.__setattr__(self, "inv12", _frozen(-self.g12.values / det))
        object.__setattr__(self, "inv22", _frozen(self.g11.values / det))

    @classmethod
    def from_arrays(cls, grid: Grid, g11, g12, g22) -> "MetricField":
        return cls(ScalarField(grid, g11), ScalarField(grid, g12), ScalarField(grid, g22))

    @classmethod
    def euclidean(cls, grid: Grid, scale: float = 1.0) -> "MetricField":
        """Constant metric ``scale**2 * identity``; ``scale=2*pi`` charts a 2*pi-periodic flat torus."""
        s2 = float(scale) ** 2
        return cls.from_arrays(grid, s2, 0.0, s2)

    @property
    def grid(self) -> Grid:
        return self.g11.grid

    def area(self) -> TwoForm:
        return TwoForm(ScalarField(self.grid, self.sqrt_det))

    def total_area(self) -> float:
        return float(self.sqrt_det.mean())


@dataclass(frozen=True, eq=False)
class WeightField:
    """Positive weight P together with its symmetrising exponent p = ln sqrt(P)."""

    P: ScalarField

    def __post_init__(self):
        if np.any(self.P.values <= 0):
            j, i = np.argwhere(self.P.values <= 0)[0]
            raise NotPositiveDefiniteError(f"weight not positive at node (i={i}, j={j})")
        object.__setattr__(self, "p", ScalarField(self.P.grid, 0.5 * np.log(self.P.values)))

    @classmethod
    def unit(cls, grid: Grid) -> "WeightField":
        return cls(ScalarField.constant(grid, 1.0))

    @classmethod
    def from_exponent(cls, u: ScalarField, sign: float = 1.0) -> "WeightField":
        """P = exp(sign * u)."""
        return cls(ScalarField(u.grid, np.exp(sign * u.values)))

    @property
    def grid(self) -> Grid:
        return self.P.grid


@dataclass(frozen=True, eq=False)
class VectorField(VectorLike):
    comp_x: ScalarField
    comp_y: ScalarField

    def __post_init__(self):
        if self.comp_x.grid != self.comp_y.grid:
            raise GridError("vector components must share a grid")

    @classmethod
    def from_arrays(cls, grid: Grid, vx, vy) -> "VectorField":
        return cls(ScalarField(grid, vx), ScalarField(grid, vy))

    @classmethod
    def constant(cls, grid: Grid, a: float, b: float) -> "VectorField":
        return cls(ScalarField.constant(grid, a), ScalarField.constant(grid, b))

    @property
    def grid(self) -> Grid:
        return self.comp_x.grid

    def stack(self) -> np.ndarray:
        return np.stack([self.comp_x.values, self.comp_y.values])

    def __add__(self, other: "VectorField") -> "VectorField":
        return VectorField(self.comp_x + other.comp_x, self.comp_y + other.comp_y)

    def __sub__(self, other: "VectorField") -> "VectorField":
        return VectorField(self.comp_x - other.comp_x, self.comp_y - other.comp_y)

    def __mul__(self, factor) -> "VectorField":
        return VectorField(self.comp_x * factor, self.comp_y * factor)

    __rmul__ = __mul__

    def __truediv__(self, factor) -> "VectorField":
        return VectorField(self.comp_x / factor, self.comp_y / factor)

    def __neg__(self) -> "VectorField":
        return VectorField(-self.comp_x, -self.comp_y)

    def max_abs(self) -> float:
        return max(self.comp_x.max_abs(), self.comp_y.max_abs())

    def __call__(self, points) -> np.ndarray:
        """Interpolated components at lifted points, shape (M, 2)."""
        return evaluate(self.stack(), points).T


def _weight_values(P: Optional[WeightField], grid: Grid):
    if P is None:
        return 1.0
    if P.grid != grid:
        raise GridError("weight and form live on different grids")
    return P.P.values


def _raise(g: MetricField, ax, ay):
    return g.inv11 * ax + g.inv12 * ay, g.inv12 * ax + g.inv22 * ay


def flat(g: MetricField, X: VectorField) -> OneForm:
    vx, vy = X.comp_x.values, X.comp_y.values
    return OneForm.from_arrays(
        g.grid,
        g.g11.values * vx + g.g12.values * vy,
        g.g12.values * vx + g.g22.values * vy,
    )


def sharp(g: MetricField, omega: OneForm) -> VectorField:
    wx, wy = _raise(g, omega.comp_dx.values, omega.comp_dy.values)
    return VectorField.from_arrays(g.grid, wx, wy)


def hodge_star_1(g: MetricField, omega: OneForm) -> OneForm:
    """Hodge star on 1-forms: ``(*w)_x = -sqrt(g) w^y``, ``(*w)_y = sqrt(g) w^x``."""
    wx, wy = _raise(g, omega.comp_dx.values, omega.comp_dy.values)
    return OneForm.from_arrays(g.grid, -g.sqrt_det * wy, g.sqrt_det * wx)


def hodge_star_2(g: MetricField, tau: TwoForm) -> ScalarField:
    return ScalarField(g.grid, tau.coeff.values / g.sqrt_det)


def d_oneform(omega: OneForm) -> TwoForm:
    coeff = _derivative_array(omega.comp_dy.values, "x") - _derivative_array(omega.comp_dx.values, "y")
    return TwoForm(ScalarField(omega.grid, coeff))


def codifferential(g: MetricField, omega: OneForm, P: Optional[WeightField] = None) -> ScalarField:
    """delta(P omega) under ``delta = -*d*``; ``P=None`` means unit weight."""
    weight = _weight_values(P, g.grid)
    # same association order as the weighted Laplacian so residuals agree bitwise
    w = g.sqrt_det * weight
    ax, ay = omega.comp_dx.values, omega.comp_dy.values
    fx = (w * g.inv11) * ax + (w * g.inv12) * ay
    fy = (w * g.inv12) * ax + (w * g.inv22) * ay
    div = _derivative_array(fx, "x") + _derivative_array(fy, "y")
    return ScalarField(g.grid, -div / g.sqrt_det)


def divergence(g: MetricField, X: VectorField) -> ScalarField:
    """Riemannian divergence ``(1/sqrt g) d_i(sqrt g X^i)``."""
    fx = g.sqrt_det * X.comp_x.values
    fy = g.sqrt_det * X.comp_y.values
    return ScalarField(g.grid, (_derivative_array(fx, "x") + _derivative_array(fy, "y")) / g.sqrt_det)


def directional(X: VectorField, f: ScalarField) -> ScalarField:
    """X(f) = X^i d_i f."""
    return ScalarField(
        f.grid,
        X.comp_x.values * _derivative_array(f.values, "x") + X.comp_y.values * _derivative_array(f.values, "y"),
    )


def commutator(X: VectorField, Y: VectorField) -> VectorField:
    """Lie bracket ``[X, Y]^i = X(Y^i) - Y(X^i)``."""
    cx = directional(X, Y.comp_x) - directional(Y, X.comp_x)
    cy = directional(X, Y.comp_y) - directional(Y, X.comp_y)
    return VectorField(cx, cy)


def inner(g: MetricField, alpha: OneForm, beta: OneForm) -> ScalarField:
    """Pointwise ``<alpha, beta>_g`` using the inverse metric."""
    ax, ay = alpha.comp_dx.values, alpha.comp_dy.values
    bx, by = beta.comp_dx.values, beta.comp_dy.values
    return ScalarField(g.grid, g.inv11 * ax * bx + g.inv12 * (ax * by + ay * bx) + g.inv22 * ay * by)


def pointwise_norm2(g: MetricField, X: VectorField) -> ScalarField:
    vx, vy = X.comp_x.values, X.comp_y.values
    return ScalarField(
        g.grid,
        g.g11.values * vx * vx + 2.0 * g.g12.values * vx * vy + g.g22.values * vy * vy,
    )


def form_norm2(g: MetricField, omega: OneForm) -> ScalarField:
    return inner(g, omega, omega)


def integrate(g: MetricField, f: ScalarField) -> float:
    """Integral of a scalar against the Riemannian area element."""
    return float(np.mean(f.values * g.sqrt_det))


def energy(g: MetricField, omega: OneForm, P: Optional[WeightField] = None) -> float:
    """Weighted Dirichlet energy ``int P <omega, omega>_g mu_g``."""
    weight = _weight_values(P, g.grid)
    return float(np.mean(weight * form_norm2(g, omega).values * g.sqrt_det))
