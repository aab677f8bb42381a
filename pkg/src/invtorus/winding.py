"""Winding numbers from period integrals, change of generators, Diophantine tables."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import GeneratorError, ZeroFieldError
from .fields import Curve, Interpolant, OneForm, line_integral
from .metric import MetricField, VectorField, WeightField, d_oneform, flat, hodge_star_1

ZERO_TOL = 1e-12
SAME_CLASS_TOL = 1e-8
PARAMETRIC_TOL = 1e-9
RESONANCE_TOL = 1e-12
CF_TOL = 1e-14
CF_MAX = 20
GAMMA_K = (8, 32, 128)
TAU = 2.0

# quarter turn R(x, y) = (-y, x)
QUARTER_TURN = np.array([[0, -1], [1, 0]])


def normalize_class(v) -> np.ndarray:
    """Unit representative with the first non-negligible component positive."""
    v = np.asarray(v, dtype=float)
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise ZeroFieldError("zero vector has no projective class")
    u = v / n
    lead = u[0] if abs(u[0]) > 1e-15 else u[1]
    return u if lead > 0 else -u


def same_class(v, w, tol: float = SAME_CLASS_TOL) -> bool:
    """Projective equality via |sin| of the angle between raw vectors."""
    return class_distance(v, w) < tol


def class_distance(v, w) -> float:
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    return abs(v[0] * w[1] - v[1] * w[0]) / (np.linalg.norm(v) * np.linalg.norm(w))


def generators_id(curves: Sequence[Curve]) -> str:
    return ";".join(f"{m},{n}" for m, n in (c.homology_class for c in curves))


@dataclass(frozen=True)
class WindingNumber:
    raw_vector: tuple[float, float]
    generators_id: str = "1,0;0,1"
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if np.linalg.norm(self.raw_vector) < ZERO_TOL:
            raise ZeroFieldError("zero field or non-winding: periods vanish")
        object.__setattr__(self, "raw_vector", (float(self.raw_vector[0]), float(self.raw_vector[1])))

    @property
    def normalized(self) -> tuple[float, float]:
        u = normalize_class(self.raw_vector)
        return float(u[0]), float(u[1])

    def same_class(self, other, tol: float = SAME_CLASS_TOL) -> bool:
        other_vec = other.raw_vector if isinstance(other, WindingNumber) else other
        return same_class(self.raw_vector, other_vec, tol)

    def ratio(self) -> float:
        """Slope b/a of the raw vector."""
        return self.raw_vector[1] / self.raw_vector[0]

    def to_dict(self) -> dict:
        return {
            "raw_vector": list(self.raw_vector),
            "normalized": list(self.normalized),
            "generators_id": self.generators_id,
            **self.diagnostics,
        }


def winding_from_form(eta: OneForm, gamma1: Curve, gamma2: Curve) -> WindingNumber:
    """Raw vector ``(-int_g2 eta, int_g1 eta)`` of a closed form annihilating the field."""
    a = -line_integral(eta, gamma2)
    b = line_integral(eta, gamma1)
    closure = d_oneform(eta).max_abs()
    return WindingNumber((a, b), generators_id((gamma1, gamma2)), {"closure_residual": closure})


def _parametric_period(X: VectorField, g: MetricField, P: Optional[WeightField], curve: Curve) -> float:
    """``int P(C) mu(X(C), C') dt`` with every factor interpolated separately."""
    pts, vel, w = curve.quadrature()
    xs = X(pts)
    area = Interpolant(g.sqrt_det)(pts)
    weight = Interpolant(P.P.values)(pts) if P is not None else 1.0
    return float(np.sum(w * weight * area * (xs[:, 0] * vel[:, 1] - xs[:, 1] * vel[:, 0])))


def winding_number(
    X: VectorField,
    g: MetricField,
    P: Optional[WeightField],
    gamma1: Curve,
    gamma2: Curve,
) -> WindingNumber:
    """Winding number of X from the periods of ``P * X^flat``.

    The same periods are recomputed from the area-element form
    ``P mu(X, C')``; the mismatch is stored in the diagnostics and a warning
    is issued above 1e-9 (relative).
    """
    eta = hodge_star_1(g, flat(g, X))
    if P is not None:
        eta = eta * P.P
    a = -line_integral(eta, gamma2)
    b = line_integral(eta, gamma1)
    if math.hypot(a, b) < ZERO_TOL:
        raise ZeroFieldError("zero field or non-winding: periods of P*X^flat vanish")
    a_param = -_parametric_period(X, g, P, gamma2)
    b_param = _parametric_period(X, g, P, gamma1)
    mismatch = max(abs(a - a_param), abs(b - b_param)) / max(math.hypot(a, b), 1.0)
    if mismatch > PARAMETRIC_TOL:
        warnings.warn(f"period formulas disagree by {mismatch:.2e}", RuntimeWarning, stacklevel=2)
    diagnostics = {
        "parametric_mismatch": mismatch,
        "closure_residual": d_oneform(eta).max_abs(),
    }
    return WindingNumber((a, b), generators_id((gamma1, gamma2)), diagnostics)


def _check_unimodular(A) -> np.ndarray:
    A = np.asarray(A)
    if A.shape != (2, 2) or not np.all(np.equal(np.round(A), A)):
        raise GeneratorError("generator change must be a 2x2 integer matrix")
    A = np.round(A).astype(int)
    det = int(A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0])
    if abs(det) != 1:
        raise GeneratorError(f"|det A| = {abs(det)}, not unimodular")
    return A


def change_generators(w: WindingNumber, A) -> WindingNumber:
    """Winding number with respect to the generators whose classes are the rows of A.

    Periods ``p = (int_g1, int_g2)`` transform as ``p' = A p`` and the raw
    vector is ``R p`` with R the quarter turn, hence ``w' = R A R^{-1} w``.
    """
    A = _check_unimodular(A)
    M = QUARTER_TURN @ A @ QUARTER_TURN.T  # R^{-1} = R^T
    new = M @ np.asarray(w.raw_vector)
    classes = [tuple(int(v) for v in row) for row in A]
    old = [tuple(int(v) for v in c.split(",")) for c in w.generators_id.split(";")]
    if old != [(1, 0), (0, 1)]:
        # express in the original basis labels
        classes = [tuple(int(v) for v in (np.array(row) @ np.array(old))) for row in A]
    gid = ";".join(f"{m},{n}" for m, n in classes)
    return WindingNumber((float(new[0]), float(new[1])), gid, dict(w.diagnostics))


# --------------------------------------------------------------------------
# Diophantine diagnostics


def _half_plane(K: int) -> np.ndarray:
    """Integer vectors with 0 < |k|_inf <= K, one of each +-k pair."""
    r = np.arange(-K, K + 1)
    k1, k2 = np.meshgrid(r, r, indexing="ij")
    k1, k2 = k1.ravel(), k2.ravel()
    keep = (k1 > 0) | ((k1 == 0) & (k2 > 0))
    return np.stack([k1[keep], k2[keep]], axis=1)


def gamma_scan(u, K: int, tau: float = TAU) -> tuple[float, tuple[int, int]]:
    """``min_{0 < |k|_inf <= K} |<u,k>| |k|_2^tau`` and its minimiser."""
    u = np.asarray(u, dtype=float)
    k = _half_plane(int(K))
    vals = np.abs(k @ u) * np.linalg.norm(k, axis=1) ** tau
    i = int(np.argmin(vals))
    return float(vals[i]), (int(k[i, 0]), int(k[i, 1]))


def resonance_witness(u, K: int, tol: float = RESONANCE_TOL) -> Optional[tuple[int, int]]:
    """Smallest integer k with ``|<u,k>| < tol |u| |k|``, sign-normalised; None if absent."""
    u = np.asarray(u, dtype=float)
    k = _half_plane(int(K))
    norms = np.linalg.norm(k, axis=1)
    hit = np.abs(k @ u) < tol * np.linalg.norm(u) * norms
    if not hit.any():
        return None
    cand = k[hit]
    order = np.lexsort((cand[:, 1], cand[:, 0], np.abs(cand).max(axis=1), np.linalg.norm(cand, axis=1)))
    best = cand[order[0]]
    if best[0] < 0 or (best[0] == 0 and best[1] < 0):
        best = -best
    return int(best[0]), int(best[1])


def continued_fraction(x: float, max_terms: int = CF_MAX, tol: float = CF_TOL) -> list[int]:
    """Partial quotients by the Euclidean algorithm.

    Stops when the remainder is within tol of an integer.  Round-off in the
    remainder grows like the square of the convergent denominator, so the
    tolerance is scaled by it.
    """
    out = []
    den_prev, den = 0, 1
    for _ in range(max_terms):
        q = math.floor(x)
        frac = x - q
        scaled = tol * max(1.0, float(den) ** 2)
        if 1.0 - frac < scaled:
            out.append(int(q) + 1)
            break
        out.append(int(q))
        if frac < scaled:
            break
        den_prev, den = den, q * den + den_prev
        x = 1.0 / frac
    return out


@dataclass(frozen=True)
class DiophantineReport:
    u: tuple[float, float]
    tau: float
    cf_quotients: list
    slope_kind: str
    gamma_table: dict
    gamma_witnesses: dict
    resonant: bool
    witness: Optional[tuple[int, int]]

    def to_dict(self) -> dict:
        return {
            "u": list(self.u),
            "tau": self.tau,
            "cf_quotients": list(self.cf_quotients),
            "slope": self.slope_kind,
            "gamma_table": {str(k): v for k, v in self.gamma_table.items()},
            "gamma_witnesses": {str(k): list(v) for k, v in self.gamma_witnesses.items()},
            "resonant": self.resonant,
            "witness": list(self.witness) if self.witness is not None else None,
        }


def diophantine_report(u, K_values: Sequence[int] = GAMMA_K, tau: float = TAU) -> DiophantineReport:
    """Finite-K evidence table for the Diophantine quality of u.

    This is evidence, not a verdict: no finite scan decides whether a vector
    is Diophantine.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (2,) or np.linalg.norm(u) == 0.0:
        raise ZeroFieldError("Diophantine report needs a nonzero pair")
    K_values = sorted(int(k) for k in K_values)
    table, witnesses = {}, {}
    for K in K_values:
        table[K], witnesses[K] = gamma_scan(u, K, tau)
    if u[0] != 0.0:
        slope, kind = u[1] / u[0], "b/a"
    else:
        slope, kind = u[0] / u[1], "a/b"
    witness = resonance_witness(u, K_values[-1])
    return DiophantineReport(
        u=(float(u[0]), float(u[1])),
        tau=float(tau),
        cf_quotients=continued_fraction(slope),
        slope_kind=kind,
        gamma_table=table,
        gamma_witnesses=witnesses,
        resonant=witness is not None,
        witness=witness,
    )
