"""Cohomological equation X(u) = v - c: Fourier solver for linear flows, obstruction diagnostic."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ResonanceError, ZeroFieldError
from .fields import ScalarField, TwoForm, _derivative_array, refine_array
from .metric import MetricField, VectorField

RESONANCE_TOL = 1e-12
NEGLIGIBLE = 1e-12
ZERO_SET_EPS = 1e-6
MEAN_TOL = 1e-10
INCONCLUSIVE_RATIO = 1e-3


@dataclass(frozen=True, eq=False)
class CohomSolution:
    u: ScalarField
    c: float
    min_divisor: float
    near_min_count: int
    truncation: int
    residual: float
    skipped_modes: tuple
    truncated_energy: float

    def metadata(self) -> dict:
        return {
            "c": self.c,
            "divisor_stats": {"min": self.min_divisor, "within_10x": self.near_min_count},
            "truncation": self.truncation,
            "residual": self.residual,
            "skipped_modes": [list(k) for k in self.skipped_modes],
            "truncated_energy": self.truncated_energy,
        }


def _sign_normalise(k) -> tuple[int, int]:
    k1, k2 = int(k[0]), int(k[1])
    if k1 < 0 or (k1 == 0 and k2 < 0):
        k1, k2 = -k1, -k2
    return k1, k2


def solve_linear_cohomological(frequency, v: ScalarField, K: Optional[int] = None) -> CohomSolution:
    """Solve ``a u_x + b u_y = v - mean(v)`` mode by mode.

    Parameters
    ----------
    frequency : (a, b), nonzero.
    v : right-hand side, band-limited below K.
    K : truncation ``|k|_inf <= K``; default is the largest non-Nyquist band.

    Raises ResonanceError carrying the witness k when a resonant mode carries
    a non-negligible coefficient.  Resonant modes with negligible coefficients
    are skipped and listed in ``skipped_modes``.
    """
    a, b = (float(t) for t in frequency)
    norm = float(np.hypot(a, b))
    if norm == 0.0:
        raise ZeroFieldError("frequency (0, 0) has no cohomological equation")
    grid = v.grid
    nx, ny = grid.resolution_x, grid.resolution_y
    kmax = min(nx, ny) // 2 - 1
    K = kmax if K is None else int(K)
    if K > kmax:
        raise ValueError(f"truncation {K} exceeds the grid band {kmax}")
    kx, ky = grid.wavenumbers()
    KX, KY = np.meshgrid(kx, ky)
    spec = np.fft.fft2(v.values) / (nx * ny)
    keep = (np.abs(KX) <= K) & (np.abs(KY) <= K)
    keep[0, 0] = False
    total = float(np.sum(np.abs(spec) ** 2))
    dropped = ~keep
    dropped[0, 0] = False
    truncated = float(np.sum(np.abs(spec[dropped]) ** 2)) / total if total > 0 else 0.0

    divisor = 2 * np.pi * (a * KX + b * KY)
    inner = np.abs(a * KX + b * KY)
    resonant = keep & (inner < RESONANCE_TOL * norm * np.hypot(KX, KY))
    scale = max(1.0, float(np.max(np.abs(v.values))))
    skipped = []
    for j, i in zip(*np.nonzero(resonant)):
        k = _sign_normalise((KX[j, i], KY[j, i]))
        if abs(spec[j, i]) >= NEGLIGIBLE * scale:
            raise ResonanceError(
                f"resonant mode k={k} with |<(a,b),k>| = {inner[j, i]:.2e} carries coefficient {abs(spec[j, i]):.2e}",
                k,
            )
        if k not in skipped:
            skipped.append(k)
    solve = keep & ~resonant
    u_spec = np.zeros_like(spec)
    u_spec[solve] = spec[solve] / (1j * divisor[solve])
    u = np.fft.ifft2(u_spec * (nx * ny)).real

    retained = inner[keep]
    min_div = float(retained.min())
    near = int(np.sum(retained <= 10 * min_div))
    c = float(spec[0, 0].real)
    Xu = a * _derivative_array(u, "x") + b * _derivative_array(u, "y")
    residual = float(np.max(np.abs(Xu - (v.values - c))))
    return CohomSolution(
        u=ScalarField(grid, u),
        c=c,
        min_divisor=min_div,
        near_min_count=near,
        truncation=K,
        residual=residual,
        skipped_modes=tuple(skipped),
        truncated_energy=truncated,
    )


@dataclass(frozen=True)
class ObstructionReport:
    mean_violation: float
    zero_set_violation: float
    verdict: str
    zero_set_size: int
    zero_set_size_refined: int
    min_max_ratio: float
    eps: float
    tolerance: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _norms(g11, g12, g22, vx, vy):
    return np.sqrt(np.maximum(g11 * vx * vx + 2 * g12 * vx * vy + g22 * vy * vy, 0.0))


def obstruction_diagnostic(
    X: VectorField,
    v: ScalarField,
    g: MetricField,
    invariant_area: TwoForm,
    eps: float = ZERO_SET_EPS,
    tol: float = MEAN_TOL,
    refinement: int = 4,
) -> ObstructionReport:
    """Test the two necessary conditions for ``X(u) = v``.

    * v must vanish where X does (zero-set violation, relative threshold eps);
    * v must integrate to zero against the invariant area (mean violation).

    Verdict: ``obstructed`` if either violation is present, ``inconclusive``
    if X has a zero set or nearly vanishes (min/max norm below 1e-3), else
    ``solvable``.
    """
    if np.any(invariant_area.coeff.values <= 0):
        raise ValueError("invariant area must be positive")
    comps = [g.g11.values, g.g12.values, g.g22.values, X.comp_x.values, X.comp_y.values]
    norms = _norms(*comps)
    fine = _norms(*(refine_array(c, refinement) for c in comps))
    v_fine = refine_array(v.values, refinement)
    top = max(norms.max(), fine.max())
    if top == 0.0:
        zero, zero_fine = np.ones_like(norms, bool), np.ones_like(fine, bool)
    else:
        zero = norms < eps * top
        zero_fine = fine < eps * top
    violation = 0.0
    if zero.any():
        violation = float(np.abs(v.values[zero]).max())
    if zero_fine.any():
        violation = max(violation, float(np.abs(v_fine[zero_fine]).max()))
    mean_violation = abs(float(np.mean(v.values * invariant_area.coeff.values)))
    ratio = float(fine.min() / top) if top > 0 else 0.0
    if violation > 100 * eps or mean_violation > tol:
        verdict = "obstructed"
    elif zero.any() or zero_fine.any() or ratio < INCONCLUSIVE_RATIO:
        verdict = "inconclusive"
    else:
        verdict = "solvable"
    return ObstructionReport(
        mean_violation=mean_violation,
        zero_set_violation=violation,
        verdict=verdict,
        zero_set_size=int(zero.sum()),
        zero_set_size_refined=int(zero_fine.sum()),
        min_max_ratio=ratio,
        eps=eps,
        tolerance=tol,
    )
