"""Periodic-grid fields on the unit torus R^2/Z^2 and their spectral calculus.

Arrays are stored with shape ``(resolution_y, resolution_x)`` so that the x
index runs fastest (row-major, y-major), matching the on-disk container
format.  Every abstract torus is charted on the unit square; examples posed
on a 2*pi-periodic torus carry the rescaling in their metric, never in the
operators.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import CubicSpline

from .errors import CurveError, GridError, NonFiniteError, NotClosedError

MIN_RESOLUTION = 16
# advisory threshold on the fraction of spectral energy above 2/3 of Nyquist
ALIASING_TOLERANCE = 1e-6
GAUSS_ORDER = 8
CLOSURE_TOLERANCE = 1e-6

_GL_NODES, _GL_WEIGHTS = leggauss(GAUSS_ORDER)


class AliasingWarning(UserWarning):
    pass


def _frozen(array) -> np.ndarray:
    out = np.array(array, dtype=float, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Grid:
    resolution_x: int
    resolution_y: int

    def __post_init__(self):
        for name in ("resolution_x", "resolution_y"):
            n = getattr(self, name)
            if int(n) != n or n < MIN_RESOLUTION or n % 2:
                raise GridError(f"{name}={n}: need an even integer >= {MIN_RESOLUTION}")

    @classmethod
    def square(cls, n: int) -> "Grid":
        return cls(n, n)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.resolution_y, self.resolution_x)

    @property
    def cell(self) -> float:
        """Smallest node spacing."""
        return 1.0 / max(self.resolution_x, self.resolution_y)

    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.arange(self.resolution_x) / self.resolution_x
        y = np.arange(self.resolution_y) / self.resolution_y
        return np.meshgrid(x, y)

    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray]:
        """Signed integer wavenumbers along x and y (numpy FFT ordering)."""
        kx = np.fft.fftfreq(self.resolution_x, 1.0 / self.resolution_x)
        ky = np.fft.fftfreq(self.resolution_y, 1.0 / self.resolution_y)
        return kx, ky

    def refined(self, factor: int) -> "Grid":
        return Grid(self.resolution_x * factor, self.resolution_y * factor)


class _FieldArithmetic:
    """Pointwise arithmetic shared by ScalarField."""

    def _coerce(self, other):
        if isinstance(other, ScalarField):
            if other.grid != self.grid:
                raise GridError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return ScalarField(self.grid, self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - self._coerce(other))

    def __rsub__(self, other):
        return ScalarField(self.grid, self._coerce(other) - self.values)

    def __mul__(self, other):
        if isinstance(other, (OneForm, VectorLike)):
            return NotImplemented
        return ScalarField(self.grid, self.values * self._coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return ScalarField(self.grid, self.values / self._coerce(other))

    def __rtruediv__(self, other):
        return ScalarField(self.grid, self._coerce(other) / self.values)

    def __neg__(self):
        return ScalarField(self.grid, -self.values)


class VectorLike:
    """Marker base for two-component fields (used to keep ScalarField.__mul__ honest)."""


@dataclass(frozen=True, eq=False)
class ScalarField(_FieldArithmetic):
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.broadcast_to(np.asarray(self.values, dtype=float), self.grid.shape)
        if not np.all(np.isfinite(values)):
            j, i = np.argwhere(~np.isfinite(values))[0]
            raise NonFiniteError(f"non-finite value at node (i={i}, j={j})")
        object.__setattr__(self, "values", _frozen(values))

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(value)))

    def mean(self) -> float:
        return float(self.values.mean())

    def max_abs(self) -> float:
        return float(np.abs(self.values).max())

    def __call__(self, points) -> np.ndarray:
        """Trigonometric interpolant evaluated at lifted points of shape (M, 2)."""
        return evaluate(self.values, points)


@dataclass(frozen=True, eq=False)
class OneForm(VectorLike):
    """Coefficients of ``comp_dx dx + comp_dy dy`` in the chart coframe."""

    comp_dx: ScalarField
    comp_dy: ScalarField

    def __post_init__(self):
        if self.comp_dx.grid != self.comp_dy.grid:
            raise GridError("one-form components must share a grid")

    @classmethod
    def from_arrays(cls, grid: Grid, ax, ay) -> "OneForm":
        return cls(ScalarField(grid, ax), ScalarField(grid, ay))

    @classmethod
    def constant(cls, grid: Grid, a: float, b: float) -> "OneForm":
        return cls(ScalarField.constant(grid, a), ScalarField.constant(grid, b))

    @property
    def grid(self) -> Grid:
        return self.comp_dx.grid

    def stack(self) -> np.ndarray:
        return np.stack([self.comp_dx.values, self.comp_dy.values])

    def __add__(self, other: "OneForm") -> "OneForm":
        return OneForm(self.comp_dx + other.comp_dx, self.comp_dy + other.comp_dy)

    def __sub__(self, other: "OneForm") -> "OneForm":
        return OneForm(self.comp_dx - other.comp_dx, self.comp_dy - other.comp_dy)

    def __mul__(self, factor) -> "OneForm":
        return OneForm(self.comp_dx * factor, self.comp_dy * factor)

    __rmul__ = __mul__

    def __truediv__(self, factor) -> "OneForm":
        return OneForm(self.comp_dx / factor, self.comp_dy / factor)

    def __neg__(self) -> "OneForm":
        return OneForm(-self.comp_dx, -self.comp_dy)

    def max_abs(self) -> float:
        return max(self.comp_dx.max_abs(), self.comp_dy.max_abs())


@dataclass(frozen=True, eq=False)
class TwoForm:
    """Coefficient of ``dx ^ dy``."""

    coeff: ScalarField

    @property
    def grid(self) -> Grid:
        return self.coeff.grid

    def max_abs(self) -> float:
        return self.coeff.max_abs()


# --------------------------------------------------------------------------
# spectral kernels on raw arrays


def _derivative_array(values: np.ndarray, axis: str) -> np.ndarray:
    ny, nx = values.shape[-2:]
    if axis == "x":
        k = np.fft.fftfreq(nx, 1.0 / nx)
        k[nx // 2] = 0.0
        spec = np.fft.fft(values, axis=-1) * (2j * np.pi * k)
        return np.fft.ifft(spec, axis=-1).real
    if axis == "y":
        k = np.fft.fftfreq(ny, 1.0 / ny)
        k[ny // 2] = 0.0
        spec = np.fft.fft(values, axis=-2) * (2j * np.pi * k)[:, None]
        return np.fft.ifft(spec, axis=-2).real
    raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")


class Interpolant:
    """Trigonometric interpolant of one or more grid arrays with cached coefficients.

    ``values`` has shape ``(..., ny, nx)``; calling with lifted points of
    shape ``(M, 2)`` returns ``(..., M)``.
    """

    def __init__(self, values):
        values = np.asarray(values, dtype=float)
        ny, nx = values.shape[-2:]
        self.coeffs = np.fft.fft2(values) / (nx * ny)
        self.kx = np.fft.fftfreq(nx, 1.0 / nx)
        self.ky = np.fft.fftfreq(ny, 1.0 / ny)

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        ex = np.exp(2j * np.pi * np.outer(pts[:, 0], self.kx))
        ey = np.exp(2j * np.pi * np.outer(pts[:, 1], self.ky))
        partial = self.coeffs @ ex.T  # (..., ny, M)
        return np.einsum("...lm,ml->...m", partial, ey).real


def evaluate(values: np.ndarray, points) -> np.ndarray:
    """Evaluate the trigonometric interpolant of grid samples at arbitrary points.

    Parameters
    ----------
    values : array (..., ny, nx)
        Grid samples; leading axes are evaluated together.
    points : array (M, 2)
        Lifted chart coordinates; periodicity is handled by the Fourier basis.

    Returns
    -------
    array (..., M)
    """
    return Interpolant(values)(points)


def _pad_axis(spec: np.ndarray, axis: int, n_new: int) -> np.ndarray:
    n = spec.shape[axis]
    spec = np.moveaxis(spec, axis, -1)
    out = np.zeros(spec.shape[:-1] + (n_new,), dtype=complex)
    half = n // 2
    out[..., :half] = spec[..., :half]
    out[..., n_new - half + 1:] = spec[..., half + 1:]
    # split the Nyquist bin so the interpolant stays real
    out[..., half] = 0.5 * spec[..., half]
    out[..., n_new - half] = 0.5 * spec[..., half]
    return np.moveaxis(out, -1, axis)


def refine_array(values: np.ndarray, factor: int) -> np.ndarray:
    """Spectral (zero-padding) upsampling by an integer factor along both axes."""
    if factor == 1:
        return np.array(values, dtype=float)
    ny, nx = values.shape[-2:]
    spec = np.fft.fft2(values)
    spec = _pad_axis(spec, -1, nx * factor)
    spec = _pad_axis(spec, -2, ny * factor)
    return np.fft.ifft2(spec).real * factor * factor


def aliasing_fraction(values: np.ndarray) -> float:
    """Fraction of spectral energy in modes above 2/3 of the Nyquist band."""
    ny, nx = values.shape[-2:]
    power = np.abs(np.fft.fft2(values)) ** 2
    kx = np.abs(np.fft.fftfreq(nx, 1.0 / nx))
    ky = np.abs(np.fft.fftfreq(ny, 1.0 / ny))
    high = (kx[None, :] > nx / 3) | (ky[:, None] > ny / 3)
    total = power.sum()
    return float(power[..., high].sum() / total) if total > 0 else 0.0


# --------------------------------------------------------------------------
# public operations


def sample_scalar(expression: Callable, grid: Grid, period: float = 1.0) -> ScalarField:
    """Sample ``expression(x, y)`` at the grid nodes.

    ``period`` rescales the chart: the callback receives ``period * node``, so
    a 2*pi-periodic expression is sampled with ``period=2*np.pi``.
    """
    x, y = grid.nodes()
    values = np.broadcast_to(np.asarray(expression(period * x, period * y), dtype=float), grid.shape)
    bad = ~np.isfinite(values)
    if bad.any():
        j, i = np.argwhere(bad)[0]
        raise NonFiniteError(
            f"non-finite sample at node (i={i}, j={j}), chart point ({x[j, i]:.6g}, {y[j, i]:.6g})"
        )
    fraction = aliasing_fraction(values)
    if fraction > ALIASING_TOLERANCE:
        warnings.warn(
            f"{fraction:.2e} of the spectral energy lies above 2/3 Nyquist; refine the grid",
            AliasingWarning,
            stacklevel=2,
        )
    return ScalarField(grid, values)


def sample_oneform(expr_dx: Callable, expr_dy: Callable, grid: Grid, period: float = 1.0) -> OneForm:
    """Sample a 1-form given in physical coordinates ``X = period * x``.

    The pullback to the unit chart multiplies each coefficient by ``period``.
    """
    return OneForm(
        sample_scalar(expr_dx, grid, period) * period,
        sample_scalar(expr_dy, grid, period) * period,
    )


def spectral_derivative(f: ScalarField, axis: str) -> ScalarField:
    return ScalarField(f.grid, _derivative_array(f.values, axis))


def gradient(f: ScalarField) -> OneForm:
    """Exterior derivative of a 0-form."""
    return OneForm(spectral_derivative(f, "x"), spectral_derivative(f, "y"))


def surface_integral(tau: TwoForm) -> float:
    # trapezoidal rule over the unit fundamental domain
    return float(tau.coeff.values.mean())


def refine(f: ScalarField, factor: int) -> ScalarField:
    return ScalarField(f.grid.refined(factor), refine_array(f.values, factor))


def potential(omega: OneForm) -> tuple[float, float, ScalarField]:
    """Split a closed form as ``a dx + b dy + dF``; returns ``(a, b, F)`` with mean-zero F."""
    grid = omega.grid
    kx, ky = grid.wavenumbers()
    kx = kx.copy()
    ky = ky.copy()
    kx[grid.resolution_x // 2] = 0.0
    ky[grid.resolution_y // 2] = 0.0
    KX, KY = np.meshgrid(kx, ky)
    ax = np.fft.fft2(omega.comp_dx.values)
    ay = np.fft.fft2(omega.comp_dy.values)
    k2 = KX ** 2 + KY ** 2
    null = k2 == 0  # mean and pure-Nyquist modes carry no gradient
    k2[null] = 1.0
    spec = (KX * ax + KY * ay) / (2j * np.pi * k2)
    spec[null] = 0.0
    F = np.fft.ifft2(spec).real
    return omega.comp_dx.mean(), omega.comp_dy.mean(), ScalarField(grid, F)


# --------------------------------------------------------------------------
# curves


def homology_class(curve) -> tuple[int, int]:
    """Integer endpoint displacement of a lifted closed curve.

    Accepts a :class:`Curve` or an ``(M, 2)`` array of lift samples.  Raises
    :class:`NotClosedError` when the displacement is farther than 0.1 from an
    integer pair.
    """
    samples = curve.samples if isinstance(curve, Curve) else np.asarray(curve, dtype=float)
    disp = samples[-1] - samples[0]
    rounded = np.rint(disp)
    if np.max(np.abs(disp - rounded)) > 0.1:
        raise NotClosedError(f"lift displacement {disp} is not near an integer pair")
    return int(rounded[0]), int(rounded[1])


@dataclass(frozen=True, eq=False)
class Curve:
    """A closed curve on the torus stored as a lift to R^2.

    ``position``/``velocity``, when present, give the exact parametrisation
    used by quadrature; otherwise the samples are interpolated.
    """

    t: np.ndarray
    samples: np.ndarray
    homology_class: tuple[int, int]
    position: Optional[Callable] = None
    velocity: Optional[Callable] = None

    def __post_init__(self):
        t = _frozen(self.t)
        samples = _frozen(self.samples)
        if samples.ndim != 2 or samples.shape[1] != 2 or samples.shape[0] != t.shape[0]:
            raise CurveError("samples must be (M, 2) and match the parameter array")
        if samples.shape[0] < 3:
            raise CurveError("a curve needs at least three samples")
        if abs(t[0]) > 1e-14 or abs(t[-1] - 1.0) > 1e-14 or np.any(np.diff(t) <= 0):
            raise CurveError("parameters must increase from 0 to 1")
        if not np.all(np.isfinite(samples)):
            raise NonFiniteError("curve samples must be finite")
        gap = samples[-1] - samples[0] - np.asarray(self.homology_class, dtype=float)
        if np.max(np.abs(gap)) > CLOSURE_TOLERANCE:
            raise NotClosedError(f"lift does not close up to the lattice (gap {gap})")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "homology_class", tuple(int(k) for k in self.homology_class))

    @classmethod
    def from_samples(cls, t, samples) -> "Curve":
        samples = np.asarray(samples, dtype=float)
        return cls(np.asarray(t, dtype=float), samples, homology_class(samples))

    @classmethod
    def from_function(cls, position: Callable, velocity: Callable, n_segments: int) -> "Curve":
        t = np.linspace(0.0, 1.0, n_segments + 1)
        samples = np.asarray(position(t), dtype=float)
        return cls(t, samples, homology_class(samples), position, velocity)

    def max_spacing(self) -> float:
        return float(np.max(np.linalg.norm(np.diff(self.samples, axis=0), axis=1)))

    def check_spacing(self, grid: Grid) -> None:
        spacing = self.max_spacing()
        if spacing >= 0.5 * grid.cell:
            raise CurveError(
                f"consecutive samples {spacing:.3g} apart; need < half a grid cell ({0.5 * grid.cell:.3g})"
            )

    def quadrature(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Composite Gauss-Legendre nodes: (points, velocities, weights)."""
        a, b = self.t[:-1], self.t[1:]
        half = 0.5 * (b - a)
        tq = (0.5 * (a + b))[:, None] + half[:, None] * _GL_NODES[None, :]
        wq = half[:, None] * _GL_WEIGHTS[None, :]
        tq, wq = tq.ravel(), wq.ravel()
        if self.position is not None and self.velocity is not None:
            return np.asarray(self.position(tq)), np.asarray(self.velocity(tq)), wq
        pts, vel = self._interpolate(tq)
        return pts, vel, wq

    def _interpolate(self, tq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        klass = np.asarray(self.homology_class, dtype=float)
        base = self.samples[0]
        periodic = self.samples - base - np.outer(self.t, klass)
        steps = np.diff(self.t)
        if np.allclose(steps, steps[0], rtol=0, atol=1e-13):
            q, dq = _fourier_curve(periodic[:-1], tq)
        else:
            periodic[-1] = periodic[0]
            spline = CubicSpline(self.t, periodic, bc_type="periodic", axis=0)
            q, dq = spline(tq), spline(tq, 1)
        return base + np.outer(tq, klass) + q, klass + dq


def _fourier_curve(values: np.ndarray, tq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    m = values.shape[0]
    coeffs = np.fft.fft(values, axis=0) / m
    k = np.fft.fftfreq(m, 1.0 / m)
    basis = np.exp(2j * np.pi * np.outer(tq, k))
    pos = (basis @ coeffs).real
    vel = ((basis * (2j * np.pi * k)) @ coeffs).real
    return pos, vel


def straight_curve(klass, start=(0.0, 0.0), n_segments: Optional[int] = None, grid: Optional[Grid] = None) -> Curve:
    """Straight lift from ``start`` to ``start + klass``."""
    klass = np.asarray(klass, dtype=float)
    start = np.asarray(start, dtype=float)
    if n_segments is None:
        n = max(grid.resolution_x, grid.resolution_y) if grid is not None else 256
        n_segments = int(np.ceil(2.0 * n * max(np.linalg.norm(klass), 1.0))) + 2
    return Curve.from_function(
        lambda t: start + np.outer(t, klass),
        lambda t: np.broadcast_to(klass, (np.size(t), 2)),
        n_segments,
    )


def standard_generators(grid: Grid) -> tuple[Curve, Curve]:
    """Straight loops in the classes (1, 0) and (0, 1)."""
    return straight_curve((1, 0), grid=grid), straight_curve((0, 1), grid=grid)


def line_integral(omega: OneForm, curve: Curve) -> float:
    """Integral of ``omega`` along a lifted curve, high-order quadrature per segment."""
    curve.check_spacing(omega.grid)
    pts, vel, w = curve.quadrature()
    vals = evaluate(omega.stack(), pts)
    return float(np.sum(w * (vals[0] * vel[:, 0] + vals[1] * vel[:, 1])))
