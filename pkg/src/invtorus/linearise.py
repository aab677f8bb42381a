"""Straight field-line charts from pairs of closed 1-forms.

Given closed forms alpha, beta with alpha^beta nowhere zero, the map
``p -> A (int^p alpha, int^p beta)`` on the universal cover descends to a
torus diffeomorphism once the period lattice is sent to Z^2 by
``A = Pi^{-1}`` (``Pi[form, curve]``).  For a P-harmonic X with
``alpha = X^flat`` and ``beta = P * X^flat`` the pushforward of
``X / |X|^2`` is the constant ``A e_1``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .cohom import CohomSolution, solve_linear_cohomological
from .errors import (
    DegenerateCoframeError,
    DependentClassesError,
    InvTorusError,
    NotClosedError,
    StepSizeError,
    ZeroFieldError,
)
from .fields import (
    Curve,
    Grid,
    Interpolant,
    OneForm,
    ScalarField,
    _derivative_array,
    line_integral,
    potential,
    refine_array,
    standard_generators,
)
from .metric import (
    MetricField,
    VectorField,
    WeightField,
    commutator,
    d_oneform,
    flat,
    hodge_star_1,
    pointwise_norm2,
    sharp,
)
from .pharmonic import nonvanishing_certificate
from .winding import gamma_scan

# inputs come from CG solves whose rounding floor is about 1e-10
CLOSED_TOL = 1e-8
DEPENDENT_TOL = 1e-10
FULL_GAMMA_THRESHOLD = 1e-2


@dataclass(frozen=True, eq=False)
class Chart:
    """Chart ``Phi(p) = linear_part @ p + (u1, u2)(p)``.

    ``frequency`` is the constant pushforward ``A e_1``; ``jacobian_min`` is
    the smallest |det dPhi| over the grid and its 4x refinement, and
    ``orientation`` the (uniform) sign of that determinant.
    """

    u1: ScalarField
    u2: ScalarField
    linear_part: np.ndarray
    frequency: np.ndarray
    lattice_map: np.ndarray
    period_matrix: np.ndarray
    jacobian_min: float
    orientation: int
    commutator_residual: float = float("nan")
    linearisation_residual: float = float("nan")
    proportionality: Optional[ScalarField] = None

    @property
    def grid(self) -> Grid:
        return self.u1.grid

    def differential(self) -> np.ndarray:
        """dPhi at the nodes, shape (2, 2, ny, nx)."""
        M = self.linear_part
        d = np.empty((2, 2) + self.grid.shape)
        for r, u in enumerate((self.u1, self.u2)):
            d[r, 0] = M[r, 0] + _derivative_array(u.values, "x")
            d[r, 1] = M[r, 1] + _derivative_array(u.values, "y")
        return d

    def __call__(self, points) -> np.ndarray:
        """Phi at lifted points (M, 2), relative to ``Phi(0) = u(0)``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        periodic = Interpolant(np.stack([self.u1.values, self.u2.values]))(pts).T
        return pts @ self.linear_part.T + periodic

    def node_images(self) -> np.ndarray:
        """Phi at the grid nodes, shape (2, ny, nx)."""
        x, y = self.grid.nodes()
        M = self.linear_part
        return np.stack([
            M[0, 0] * x + M[0, 1] * y + self.u1.values,
            M[1, 0] * x + M[1, 1] * y + self.u2.values,
        ])

    def metadata(self) -> dict:
        return {
            "linear_part": self.linear_part.tolist(),
            "frequency": self.frequency.tolist(),
            "lattice_map": self.lattice_map.tolist(),
            "period_matrix": self.period_matrix.tolist(),
            "jacobian_min": self.jacobian_min,
            "orientation": self.orientation,
            "residuals": {
                "commutator": self.commutator_residual,
                "linearisation": self.linearisation_residual,
            },
        }


def _closed_or_raise(omega: OneForm, name: str) -> None:
    res = d_oneform(omega).max_abs()
    if res > CLOSED_TOL * max(1.0, omega.max_abs()):
        raise NotClosedError(f"{name} is not closed: max |d{name}| = {res:.2e}")


def build_chart(alpha: OneForm, beta: OneForm, gamma1: Optional[Curve] = None, gamma2: Optional[Curve] = None) -> Chart:
    """Chart whose coordinate differentials are ``A (alpha, beta)``.

    Raises DegenerateCoframeError if alpha^beta vanishes or changes sign and
    DependentClassesError if the period matrix is singular.
    """
    grid = alpha.grid
    if gamma1 is None or gamma2 is None:
        gamma1, gamma2 = standard_generators(grid)
    _closed_or_raise(alpha, "alpha")
    _closed_or_raise(beta, "beta")
    wedge = alpha.comp_dx.values * beta.comp_dy.values - alpha.comp_dy.values * beta.comp_dx.values
    fine = (
        refine_array(alpha.comp_dx.values, 4) * refine_array(beta.comp_dy.values, 4)
        - refine_array(alpha.comp_dy.values, 4) * refine_array(beta.comp_dx.values, 4)
    )
    scale = alpha.max_abs() * beta.max_abs()
    lo, hi = min(wedge.min(), fine.min()), max(wedge.max(), fine.max())
    if scale == 0.0 or (lo <= 1e-12 * scale and hi >= -1e-12 * scale):
        raise DegenerateCoframeError("alpha ^ beta vanishes or changes sign")

    Pi = np.array([
        [line_integral(alpha, gamma1), line_integral(alpha, gamma2)],
        [line_integral(beta, gamma1), line_integral(beta, gamma2)],
    ])
    if abs(np.linalg.det(Pi)) < DEPENDENT_TOL * max(1.0, np.abs(Pi).max()) ** 2:
        raise DependentClassesError(f"period matrix is singular: {Pi.tolist()}")
    # A Pi = I sends the displacement along gamma_i to the i-th lattice vector
    A = np.linalg.inv(Pi)
    a1, a2, F = potential(alpha)
    b1, b2, G = potential(beta)
    C = np.array([[a1, a2], [b1, b2]])
    M = A @ C
    u1 = A[0, 0] * F.values + A[0, 1] * G.values
    u2 = A[1, 0] * F.values + A[1, 1] * G.values
    detA = float(np.linalg.det(A))
    jac_nodes = detA * wedge
    jac_fine = detA * fine
    orientation = 1 if jac_nodes.min() > 0 else -1
    jmin = float(min(np.abs(jac_nodes).min(), np.abs(jac_fine).min()))
    return Chart(
        u1=ScalarField(grid, u1),
        u2=ScalarField(grid, u2),
        linear_part=M,
        frequency=A[:, 0].copy(),
        lattice_map=A,
        period_matrix=Pi,
        jacobian_min=jmin,
        orientation=orientation,
    )


def verify_linearisation(chart: Chart, X: VectorField, f: ScalarField) -> float:
    """max over nodes of ``|dPhi(X / f) - frequency|``; no inversion of Phi is needed."""
    if np.any(f.values <= 0):
        raise ValueError("proportionality must be positive")
    D = chart.differential()
    vx = X.comp_x.values / f.values
    vy = X.comp_y.values / f.values
    push = np.stack([D[0, 0] * vx + D[0, 1] * vy, D[1, 0] * vx + D[1, 1] * vy])
    dev = push - chart.frequency[:, None, None]
    return float(np.max(np.hypot(dev[0], dev[1])))


@dataclass(frozen=True)
class ZeroFieldResult:
    """The identically-zero branch of the dichotomy for P-harmonic fields."""

    max_norm: float
    identically_zero: bool = True

    def metadata(self) -> dict:
        return {"identically_zero": True, "max_norm": self.max_norm}


def companion_field(X: VectorField, g: MetricField, P: Optional[WeightField]) -> VectorField:
    """``Y = (*X^flat)^sharp / (P |X|^2)``, which commutes with ``X / |X|^2``."""
    f = pointwise_norm2(g, X)
    weight = P.P.values if P is not None else 1.0
    Y = sharp(g, hodge_star_1(g, flat(g, X)))
    return VectorField.from_arrays(g.grid, Y.comp_x.values / (weight * f.values), Y.comp_y.values / (weight * f.values))


def _refine_field(obj, factor):
    if isinstance(obj, VectorField):
        grid = obj.grid.refined(factor)
        return VectorField.from_arrays(grid, refine_array(obj.comp_x.values, factor), refine_array(obj.comp_y.values, factor))
    if isinstance(obj, MetricField):
        grid = obj.grid.refined(factor)
        return MetricField.from_arrays(grid, *(refine_array(c.values, factor) for c in (obj.g11, obj.g12, obj.g22)))
    if isinstance(obj, WeightField):
        return WeightField(ScalarField(obj.grid.refined(factor), refine_array(obj.P.values, factor)))
    raise TypeError(type(obj))


def pair_commutator_residual(X: VectorField, g: MetricField, P: Optional[WeightField], refinement: int = 2) -> float:
    """max g-norm of ``[X/|X|^2, Y]``.

    The quotients are formed on a spectrally refined grid so that the
    product aliasing of X/|X|^2 does not pollute the bracket.
    """
    if refinement > 1:
        X, g = _refine_field(X, refinement), _refine_field(g, refinement)
        P = _refine_field(P, refinement) if P is not None else None
    f = pointwise_norm2(g, X)
    bracket = commutator(X / f, companion_field(X, g, P))
    return float(np.sqrt(pointwise_norm2(g, bracket).values.max()))


def semi_linearise(
    X: VectorField,
    g: MetricField,
    P: Optional[WeightField] = None,
    gamma1: Optional[Curve] = None,
    gamma2: Optional[Curve] = None,
):
    """Chart in which ``X / |X|_g^2`` is constant, or a ZeroFieldResult.

    Uses ``alpha = X^flat`` and ``beta = P * X^flat``; the commutator of the
    pair ``(X/|X|^2, Y)`` and the pushforward residual are stored on the chart.
    """
    grid = X.grid
    if gamma1 is None or gamma2 is None:
        gamma1, gamma2 = standard_generators(grid)
    alpha = flat(g, X)
    cert = nonvanishing_certificate(g, alpha)
    if cert.identically_zero:
        return ZeroFieldResult(cert.max_norm)
    if cert.min_norm <= 1e-12 * cert.max_norm:
        raise ZeroFieldError(f"field vanishes near {cert.argmin} but is not identically zero")
    beta = hodge_star_1(g, alpha)
    if P is not None:
        beta = beta * P.P
    chart = build_chart(alpha, beta, gamma1, gamma2)
    f = pointwise_norm2(g, X)
    comm = pair_commutator_residual(X, g, P)
    lin = verify_linearisation(chart, X, f)
    return dataclasses.replace(chart, commutator_residual=comm, linearisation_residual=lin, proportionality=f)


# --------------------------------------------------------------------------
# field-line tracing


@dataclass(frozen=True, eq=False)
class TraceResult:
    t: np.ndarray
    samples: np.ndarray
    velocities: np.ndarray
    displacement_ratio: float
    birkhoff_velocity: np.ndarray

    @property
    def displacement(self) -> np.ndarray:
        return self.samples[-1] - self.samples[0]

    @property
    def birkhoff_ratio(self) -> float:
        """Slope of the smoothly weighted time average of the velocity."""
        return float(self.birkhoff_velocity[1] / self.birkhoff_velocity[0])

    def as_curve(self) -> Curve:
        """The trace as a closed Curve (valid only for periodic orbits)."""
        return Curve.from_samples(self.t / self.t[-1], self.samples)

    def to_csv(self, path) -> None:
        data = np.column_stack([self.t, self.samples])
        np.savetxt(path, data, delimiter=",", header="t,x_lift,y_lift", comments="", fmt="%.17g")


def _bump(s: np.ndarray) -> np.ndarray:
    out = np.zeros_like(s)
    inside = (s > 0) & (s < 1)
    out[inside] = np.exp(-1.0 / (s[inside] * (1.0 - s[inside])))
    return out


def max_step(X: VectorField) -> float:
    speed = float(np.max(np.hypot(X.comp_x.values, X.comp_y.values)))
    if speed == 0.0:
        return math.inf
    return 0.25 * X.grid.cell / speed


def trace_field_line(X: VectorField, start, T: float, dt: Optional[float] = None) -> TraceResult:
    """RK4 field line of X from ``start`` over time T on the lift.

    ``dt`` defaults to the largest admissible step, ``0.25 * cell / max|X|``
    (then shrunk so that an integer number of steps reaches T).
    """
    from ._trace_kernel import half_spectrum, rk4

    bound = max_step(X)
    if dt is None:
        dt = bound
    if dt > bound * (1 + 1e-12):
        raise StepSizeError(f"dt = {dt:.3e} exceeds 0.25*cell/max|X| = {bound:.3e}")
    if not math.isfinite(dt):
        dt = T
    nsteps = max(1, int(math.ceil(T / dt - 1e-12)))
    dt = T / nsteps
    coeffs, kx, ky = half_spectrum(X.stack())
    start = np.asarray(start, dtype=float)
    pts, vel = rk4(coeffs, kx, ky, float(start[0]), float(start[1]), dt, nsteps)
    t = np.linspace(0.0, T, nsteps + 1)
    disp = pts[-1] - pts[0]
    ratio = float(disp[1] / disp[0]) if disp[0] != 0 else math.inf
    w = _bump(t / T)
    avg = (w[:, None] * vel).sum(axis=0) / w.sum()
    return TraceResult(t=t, samples=pts, velocities=vel, displacement_ratio=ratio, birkhoff_velocity=avg)


# --------------------------------------------------------------------------
# sweeps over families of invariant tori


@dataclass(frozen=True)
class SweepProfile:
    z_values: list
    a: list
    b: list
    residuals: list
    failures: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "z_values": list(self.z_values),
            "a": list(self.a),
            "b": list(self.b),
            "residuals": list(self.residuals),
            "failures": dict(self.failures),
        }


def sweep_level_tori(family: Sequence, gamma1: Optional[Curve] = None, gamma2: Optional[Curve] = None) -> SweepProfile:
    """Semi-linearise each member ``(z, X, g, P)`` and collect frequencies in z order.

    Per-surface failures are recorded under ``failures`` and the sweep
    continues.
    """
    rows, failures = [], {}
    for z, X, g, P in sorted(family, key=lambda item: item[0]):
        g1, g2 = (gamma1, gamma2) if gamma1 is not None else standard_generators(X.grid)
        try:
            chart = semi_linearise(X, g, P, g1, g2)
        except InvTorusError as exc:
            failures[float(z)] = f"{exc.code}: {exc}"
            continue
        if isinstance(chart, ZeroFieldResult):
            failures[float(z)] = "zero_field: identically zero"
            continue
        rows.append((float(z), float(chart.frequency[0]), float(chart.frequency[1]),
                     max(chart.linearisation_residual, chart.commutator_residual)))
    return SweepProfile(
        z_values=[r[0] for r in rows],
        a=[r[1] for r in rows],
        b=[r[2] for r in rows],
        residuals=[r[3] for r in rows],
        failures=failures,
    )


# --------------------------------------------------------------------------
# second stage: remove the proportionality when the frequency is Diophantine


@dataclass(frozen=True, eq=False)
class FullLinearisation:
    status: str
    gamma: float
    residual: float = float("nan")
    w: Optional[ScalarField] = None
    cohom: Optional[CohomSolution] = None
    message: str = ""

    def metadata(self) -> dict:
        out = {"status": self.status, "gamma": self.gamma, "residual": self.residual, "message": self.message}
        if self.cohom is not None:
            out["cohom"] = self.cohom.metadata()
        return out


def _chart_fourier(values: np.ndarray, theta: np.ndarray, jac: np.ndarray, K: int) -> np.ndarray:
    """Fourier coefficients ``c[ky, kx]``, ``|k|_inf <= K``, on the chart torus.

    ``c_k = mean_p(values * |J| * exp(-2 pi i k . Phi(p)))`` by the change of
    variables theta = Phi(p); the integrand is periodic in p, so the
    trapezoidal rule is spectrally accurate while k . dPhi stays inside the
    sampled band.
    """
    k = np.arange(-K, K + 1)
    tx = theta[0].ravel()
    ty = theta[1].ravel()
    wts = (values * jac).ravel() / tx.size
    ex = np.exp(-2j * np.pi * np.outer(tx, k))
    ey = np.exp(-2j * np.pi * np.outer(ty, k))
    return (ey * wts[:, None]).T @ ex


def _eval_chart_series(coeffs: np.ndarray, theta: np.ndarray) -> np.ndarray:
    K = coeffs.shape[0] // 2
    k = np.arange(-K, K + 1)
    tx = theta[0].ravel()
    ty = theta[1].ravel()
    ex = np.exp(2j * np.pi * np.outer(tx, k))
    ey = np.exp(2j * np.pi * np.outer(ty, k))
    vals = np.einsum("mj,ji,mi->m", ey, coeffs, ex, optimize=True)
    return vals.real.reshape(theta.shape[1:])


def _to_grid(coeffs: np.ndarray, n: int) -> np.ndarray:
    """Values on an n x n chart grid from centred coefficients."""
    K = coeffs.shape[0] // 2
    full = np.zeros((n, n), dtype=complex)
    idx = np.arange(-K, K + 1) % n
    full[np.ix_(idx, idx)] = coeffs
    return np.fft.ifft2(full * n * n).real


def _from_grid(values: np.ndarray, K: int) -> np.ndarray:
    n = values.shape[0]
    spec = np.fft.fft2(values) / (n * n)
    idx = np.arange(-K, K + 1) % n
    return spec[np.ix_(idx, idx)]


def full_linearise(
    chart: Chart,
    X: VectorField,
    f: Optional[ScalarField] = None,
    gamma_threshold: float = FULL_GAMMA_THRESHOLD,
    refinement: int = 2,
) -> FullLinearisation:
    """Find w with ``[X, w X + Y0] = 0`` where ``Y0 = dPhi^{-1}(-b, a)``.

    In the chart, ``X = f~ nu`` with ``nu = (a, b)``; the bracket vanishes iff
    ``nu(w) = Y0(-1/f~)``, a linear cohomological equation.  The commuting
    frame ``(X, wX + Y0)`` then straightens X itself.  Skipped (status
    ``poor_divisors``) when gamma_128 of the normalised frequency is at or
    below ``gamma_threshold``.

    The chart-torus coefficients are computed on a ``refinement``-times finer
    p-grid and truncated at the band K that this grid resolves after
    stretching by dPhi.  The reported residual is
    ``max|[X, Z]| / (max|X| max|Z|)`` in the original chart.
    """
    grid = chart.grid
    if f is None:
        f = chart.proportionality
    nu = chart.frequency
    gamma, _ = gamma_scan(nu / np.linalg.norm(nu), 128, 2.0)
    if gamma <= gamma_threshold:
        return FullLinearisation("poor_divisors", gamma, message="gamma_128 below threshold; stage skipped")
    n = grid.resolution_x
    fine_chart = dataclasses.replace(
        chart,
        u1=ScalarField(grid.refined(refinement), refine_array(chart.u1.values, refinement)),
        u2=ScalarField(grid.refined(refinement), refine_array(chart.u2.values, refinement)),
    )
    D = fine_chart.differential()
    stretch = float(np.max(np.sqrt(D[0, 0] ** 2 + D[0, 1] ** 2 + D[1, 0] ** 2 + D[1, 1] ** 2)))
    K = int(min(n // 2 - 1, 0.5 * (refinement * n / 2) / stretch))
    jac = np.abs(D[0, 0] * D[1, 1] - D[0, 1] * D[1, 0])
    f_fine = refine_array(f.values, refinement)
    h_hat = _chart_fourier(-1.0 / f_fine, fine_chart.node_images(), jac, K)
    k = np.arange(-K, K + 1)
    KX, KY = np.meshgrid(k, k)
    v_hat = 2j * np.pi * (-nu[1] * KX + nu[0] * KY) * h_hat
    m = max(16, 2 * K + 2)
    v = ScalarField(Grid(m, m), _to_grid(v_hat, m))
    try:
        sol = solve_linear_cohomological(nu, v, K)
    except InvTorusError as exc:
        return FullLinearisation("failed", gamma, message=f"{exc.code}: {exc}")
    w_nodes = _eval_chart_series(_from_grid(sol.u.values, K), chart.node_images())
    Dc = chart.differential()
    det = Dc[0, 0] * Dc[1, 1] - Dc[0, 1] * Dc[1, 0]
    ex, ey = -nu[1], nu[0]
    y0x = (Dc[1, 1] * ex - Dc[0, 1] * ey) / det
    y0y = (-Dc[1, 0] * ex + Dc[0, 0] * ey) / det
    Z = VectorField.from_arrays(grid, w_nodes * X.comp_x.values + y0x, w_nodes * X.comp_y.values + y0y)
    bracket = commutator(X, Z)
    residual = bracket.max_abs() / (X.max_abs() * Z.max_abs())
    return FullLinearisation("ok", gamma, residual=float(residual), w=sol.u, cohom=sol)
