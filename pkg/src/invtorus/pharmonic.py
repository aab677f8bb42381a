"""P-harmonic 1-forms: closed forms omega with delta(P omega) = 0.

Each cohomology class is represented by potential correction: given a closed
``omega0`` we find F minimising the weighted energy of ``omega0 + dF``.  The
stationarity condition is the divergence-form equation

    -d_i(K^{ij} d_j F) = d_i(K^{ij} omega0_j),    K = sqrt(g) P g^{-1},

solved by preconditioned conjugate gradients.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import ConvergenceError, DegenerateTargetError, NotClosedError
from .fields import (
    Curve,
    Grid,
    Interpolant,
    OneForm,
    ScalarField,
    _derivative_array,
    line_integral,
    refine_array,
    standard_generators,
)
from .metric import (
    MetricField,
    VectorField,
    WeightField,
    codifferential,
    d_oneform,
    hodge_star_1,
    sharp,
)

DEFAULT_TOL = 1e-10
CLOSED_TOL = 1e-10
ZERO_RELATIVE = 1e-12
# recursive CG residual below this fraction of tol means the algebra is done
ALGEBRAIC_FACTOR = 1e-4


def _kernel_mask(grid: Grid) -> np.ndarray:
    """Fourier modes annihilated by the spectral gradient (mean and Nyquist modes)."""
    nx, ny = grid.resolution_x, grid.resolution_y
    mask = np.zeros(grid.shape, dtype=bool)
    for j in (0, ny // 2):
        for i in (0, nx // 2):
            mask[j, i] = True
    return mask


def _project(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    spec = np.fft.fft2(values)
    spec[mask] = 0.0
    return np.fft.ifft2(spec).real


class _WeightedLaplacian:
    """Discrete operator L F = -d_i(K^{ij} d_j F) with spectral derivatives."""

    def __init__(self, g: MetricField, P: WeightField):
        w = g.sqrt_det * P.P.values
        self.k11 = w * g.inv11
        self.k12 = w * g.inv12
        self.k22 = w * g.inv22
        self.grid = g.grid
        self.mask = _kernel_mask(g.grid)
        kx, ky = g.grid.wavenumbers()
        kx = kx.copy()
        ky = ky.copy()
        kx[g.grid.resolution_x // 2] = 0.0
        ky[g.grid.resolution_y // 2] = 0.0
        KX, KY = np.meshgrid(kx, ky)
        symbol = 4 * np.pi ** 2 * (
            self.k11.mean() * KX ** 2 + 2 * self.k12.mean() * KX * KY + self.k22.mean() * KY ** 2
        )
        inv = np.zeros_like(symbol)
        keep = ~self.mask
        inv[keep] = 1.0 / symbol[keep]
        self.precond_symbol = inv

    def flux(self, ax: np.ndarray, ay: np.ndarray) -> np.ndarray:
        """d_i(K^{ij} a_j)."""
        fx = self.k11 * ax + self.k12 * ay
        fy = self.k12 * ax + self.k22 * ay
        return _derivative_array(fx, "x") + _derivative_array(fy, "y")

    def apply(self, F: np.ndarray) -> np.ndarray:
        return -self.flux(_derivative_array(F, "x"), _derivative_array(F, "y"))

    def precondition(self, r: np.ndarray) -> np.ndarray:
        return np.fft.ifft2(np.fft.fft2(r) * self.precond_symbol).real


def check_closed(omega: OneForm, tol: float = CLOSED_TOL) -> float:
    residual = d_oneform(omega).max_abs()
    scale = max(omega.max_abs(), 1.0)
    if residual > tol * scale:
        raise NotClosedError(f"form is not closed: max |d omega| = {residual:.3e}")
    return residual


class FloorLimitedWarning(RuntimeWarning):
    """The solve converged algebraically but rounding keeps the residual above tol."""


@dataclass(frozen=True)
class SolveInfo:
    iterations: int
    residual: float
    floor_limited: bool


def weighted_poisson_solve(
    g: MetricField,
    P: WeightField,
    omega0: OneForm,
    tol: float = DEFAULT_TOL,
    max_iter: Optional[int] = None,
    return_info: bool = False,
):
    """Potential F with ``omega0 + dF`` P-harmonic.

    Parameters
    ----------
    g, P : metric and positive weight on a common grid.
    omega0 : closed 1-form fixing the cohomology class.
    tol : bound on ``max |delta(P(omega0 + dF))|``.
    max_iter : iteration cap, default ``10 * N``.
    return_info : also return a :class:`SolveInfo`.

    Returns
    -------
    ScalarField
        Mean-zero potential.  Raises ConvergenceError (carrying the residual)
        if the cap is reached.  If CG has converged to ``ALGEBRAIC_FACTOR * tol`` in the
        recursive residual while the evaluated residual sits at the rounding
        floor above ``tol``, the solution is returned with a
        FloorLimitedWarning instead.
    """
    check_closed(omega0)
    op = _WeightedLaplacian(g, P)
    n = max(g.grid.resolution_x, g.grid.resolution_y)
    cap = 10 * n if max_iter is None else int(max_iter)
    b = _project(op.flux(omega0.comp_dx.values, omega0.comp_dy.values), op.mask)

    def scaled(res):
        # delta(P(omega0 + dF)) = -(flux of omega0 + dF) / sqrt(g)
        return float(np.max(np.abs(res / g.sqrt_det)))

    def true_residual(F):
        return scaled(op.flux(
            omega0.comp_dx.values + _derivative_array(F, "x"),
            omega0.comp_dy.values + _derivative_array(F, "y"),
        ))

    def finish(F, it, residual, floor):
        out = ScalarField(g.grid, _project(F, op.mask))
        if floor:
            warnings.warn(
                f"residual {residual:.2e} limited by rounding (target {tol:.1e})",
                FloorLimitedWarning,
                stacklevel=3,
            )
        return (out, SolveInfo(it, residual, floor)) if return_info else out

    F = np.zeros(g.grid.shape)
    r = b.copy()
    if scaled(r) <= tol:
        return finish(F, 0, scaled(r), False)
    z = op.precondition(r)
    d = z.copy()
    rz = float(np.sum(r * z))
    for it in range(1, cap + 1):
        Ad = op.apply(d)
        alpha = rz / float(np.sum(d * Ad))
        F += alpha * d
        r -= alpha * Ad
        recursive = scaled(r)
        if recursive <= tol:
            residual = true_residual(F)
            if residual <= tol:
                return finish(F, it, residual, False)
            if recursive <= ALGEBRAIC_FACTOR * tol:
                return finish(F, it, residual, True)
        z = op.precondition(r)
        rz_new = float(np.sum(r * z))
        if rz_new == 0.0:
            return finish(F, it, true_residual(F), true_residual(F) > tol)
        d = z + (rz_new / rz) * d
        rz = rz_new
    residual = true_residual(F)
    raise ConvergenceError(
        f"weighted Poisson solve did not reach {tol:.1e} in {cap} iterations (residual {residual:.3e})",
        residual=residual,
        iterations=cap,
    )


def exact_form(F: ScalarField) -> OneForm:
    return OneForm.from_arrays(F.grid, _derivative_array(F.values, "x"), _derivative_array(F.values, "y"))


def pharmonic_representative(g: MetricField, P: WeightField, omega0: OneForm, tol: float = DEFAULT_TOL) -> OneForm:
    F = weighted_poisson_solve(g, P, omega0, tol)
    return omega0 + exact_form(F)


@dataclass(frozen=True)
class NonvanishingCertificate:
    min_norm: float
    max_norm: float
    argmin: tuple[float, float]
    ratio: float
    trend: tuple[float, ...]
    identically_zero: bool

    def to_dict(self) -> dict:
        return {
            "min_norm": self.min_norm,
            "max_norm": self.max_norm,
            "argmin": list(self.argmin),
            "ratio": self.ratio,
            "trend": list(self.trend),
            "identically_zero": self.identically_zero,
        }


def _norm_on_refined(g: MetricField, omega: OneForm, factor: int) -> np.ndarray:
    ax = refine_array(omega.comp_dx.values, factor)
    ay = refine_array(omega.comp_dy.values, factor)
    g11 = refine_array(g.g11.values, factor)
    g12 = refine_array(g.g12.values, factor)
    g22 = refine_array(g.g22.values, factor)
    det = g11 * g22 - g12 ** 2
    n2 = (g22 * ax * ax - 2 * g12 * ax * ay + g11 * ay * ay) / det
    return np.sqrt(np.maximum(n2, 0.0))


def _polish(norm_at, start: np.ndarray, sign: float) -> tuple[float, np.ndarray]:
    """Refine a sampled extremum of the interpolated norm by a local search."""
    res = minimize(
        lambda q: sign * norm_at(q[None, :])[0],
        start,
        method="Nelder-Mead",
        options={"xatol": 1e-10, "fatol": 1e-15, "maxiter": 400},
    )
    best = sign * res.fun
    return (best, res.x) if sign * best <= sign * norm_at(start[None, :])[0] else (norm_at(start[None, :])[0], start)


def nonvanishing_certificate(
    g: MetricField,
    omega: OneForm,
    refinement: int = 4,
    scale: float = 1.0,
) -> NonvanishingCertificate:
    """Min/max pointwise g-norm of ``omega`` over a spectrally refined grid.

    The extrema found on the ``refinement``-times finer grid are polished by a
    local search on the interpolant.  ``trend`` holds min/max ratios at the
    native grid, 2x, the requested refinement and after polishing; a
    collapsing minimum shows up as a decreasing sequence.  ``scale`` sets the
    magnitude below which the form counts as identically zero.
    """
    trend = []
    norms = None
    for factor in sorted({1, 2, refinement}):
        norms = _norm_on_refined(g, omega, factor)
        top = norms.max()
        trend.append(float(norms.min() / top) if top > 0 else 0.0)
    ny, nx = norms.shape
    max_norm = float(norms.max())
    if max_norm < ZERO_RELATIVE * scale:
        return NonvanishingCertificate(0.0, max_norm, (0.0, 0.0), 0.0, tuple(trend), True)

    interp = Interpolant(np.stack([omega.comp_dx.values, omega.comp_dy.values, g.g11.values, g.g12.values, g.g22.values]))

    def norm_at(q):
        ax, ay, g11, g12, g22 = interp(q)
        return np.sqrt(np.maximum((g22 * ax * ax - 2 * g12 * ax * ay + g11 * ay * ay) / (g11 * g22 - g12 ** 2), 0.0))

    j, i = np.unravel_index(np.argmin(norms), norms.shape)
    min_norm, where = _polish(norm_at, np.array([i / nx, j / ny]), 1.0)
    j, i = np.unravel_index(np.argmax(norms), norms.shape)
    max_norm, _ = _polish(norm_at, np.array([i / nx, j / ny]), -1.0)
    min_norm = max(float(min_norm), 0.0)
    ratio = min_norm / max_norm
    trend.append(ratio)
    return NonvanishingCertificate(
        min_norm=min_norm,
        max_norm=float(max_norm),
        argmin=(float(where[0] % 1.0), float(where[1] % 1.0)),
        ratio=ratio,
        trend=tuple(trend),
        identically_zero=False,
    )


def _hash(*arrays: np.ndarray) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return h.hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class PHarmonicBasis:
    omega1: OneForm
    omega2: OneForm
    period_matrix: np.ndarray
    raw_period_matrix: np.ndarray
    condition_number: float
    weight: WeightField
    metric: MetricField
    generators: tuple[Curve, Curve]
    residuals: dict
    certificates: tuple[NonvanishingCertificate, NonvanishingCertificate]
    tolerance: float = DEFAULT_TOL

    @property
    def forms(self) -> tuple[OneForm, OneForm]:
        return (self.omega1, self.omega2)

    def metadata(self) -> dict:
        return {
            "period_matrix": self.period_matrix.tolist(),
            "raw_period_matrix": self.raw_period_matrix.tolist(),
            "condition_number": self.condition_number,
            "residuals": self.residuals,
            "tolerance": self.tolerance,
            "certificates": [c.to_dict() for c in self.certificates],
            "weight_hash": _hash(self.weight.P.values),
            "metric_hash": _hash(self.metric.g11.values, self.metric.g12.values, self.metric.g22.values),
        }


def period_matrix(forms: Sequence[OneForm], curves: Sequence[Curve]) -> np.ndarray:
    """``M[i, c]`` = integral of form i over curve c."""
    return np.array([[line_integral(w, c) for c in curves] for w in forms])


def pharmonic_basis(
    g: MetricField,
    P: WeightField,
    generators: Optional[Sequence[Curve]] = None,
    tol: float = DEFAULT_TOL,
    refinement: int = 4,
) -> PHarmonicBasis:
    """Basis of P-harmonic forms dual to the generator curves."""
    grid = g.grid
    if generators is None:
        generators = standard_generators(grid)
    generators = tuple(generators)
    if [c.homology_class for c in generators] != [(1, 0), (0, 1)]:
        # any curves work for normalisation, but the duality claim needs the standard classes
        raise ValueError("generators must have classes (1, 0) and (0, 1)")
    raw = [
        pharmonic_representative(g, P, OneForm.constant(grid, 1.0, 0.0), tol),
        pharmonic_representative(g, P, OneForm.constant(grid, 0.0, 1.0), tol),
    ]
    raw_periods = period_matrix(raw, generators)
    inv = np.linalg.inv(raw_periods)
    omega1 = raw[0] * inv[0, 0] + raw[1] * inv[0, 1]
    omega2 = raw[0] * inv[1, 0] + raw[1] * inv[1, 1]
    forms = (omega1, omega2)
    periods = period_matrix(forms, generators)
    residuals = {
        "closed": [d_oneform(w).max_abs() for w in forms],
        "coclosed": [codifferential(g, w, P).max_abs() for w in forms],
    }
    certs = tuple(nonvanishing_certificate(g, w, refinement) for w in forms)
    return PHarmonicBasis(
        omega1=omega1,
        omega2=omega2,
        period_matrix=periods,
        raw_period_matrix=raw_periods,
        condition_number=float(np.linalg.cond(raw_periods)),
        weight=P,
        metric=g,
        generators=generators,
        residuals=residuals,
        certificates=certs,
        tolerance=tol,
    )


def class_matrix(basis: PHarmonicBasis) -> np.ndarray:
    """Columns are the winding raw vectors ``(-int_g2 P*w, int_g1 P*w)`` of each basis form."""
    g1, g2 = basis.generators
    cols = []
    for w in basis.forms:
        eta = hodge_star_1(basis.metric, w) * basis.weight.P
        cols.append([-line_integral(eta, g2), line_integral(eta, g1)])
    return np.array(cols).T


def pharmonic_field_for_class(basis: PHarmonicBasis, target) -> VectorField:
    """P-harmonic vector field whose winding raw vector equals ``target``."""
    target = np.asarray(target, dtype=float)
    if target.shape != (2,) or not np.all(np.isfinite(target)) or np.linalg.norm(target) < 1e-14:
        raise DegenerateTargetError(f"target class {target} is degenerate")
    coeffs = np.linalg.solve(class_matrix(basis), target)
    omega = basis.omega1 * coeffs[0] + basis.omega2 * coeffs[1]
    return sharp(basis.metric, omega)
