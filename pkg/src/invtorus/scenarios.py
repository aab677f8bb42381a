"""Named scenarios: default configs plus builders for the objects each command needs."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fields import Grid, OneForm, ScalarField, sample_oneform
from .metric import MetricField, VectorField, WeightField, hodge_star_1, sharp
from .oracles import AxisymmetricShell
from . import surface3d as s3

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0
TWO_PI = 2.0 * np.pi

# corpus amplitudes: log metric diagonal, shear (through tanh), log weight
METRIC_AMP = 0.3
SHEAR_AMP = 0.4
WEIGHT_AMP = 0.5
CORPUS_BAND = 3
_REFERENCE = 64


class TrigPolynomial:
    """Real trigonometric polynomial on the unit torus with |k|_inf <= K.

    Coefficients decay like 1/|k|; the polynomial is scaled so that its
    maximum modulus on a fixed 64 x 64 reference grid equals ``amp``, which
    makes the function independent of the sampling resolution.
    """

    def __init__(self, rng: np.random.Generator, amp: float, K: int = CORPUS_BAND):
        modes = []
        for kx in range(-K, K + 1):
            for ky in range(0, K + 1):
                if ky == 0 and kx <= 0:
                    continue
                a, b = rng.normal(size=2) / math.sqrt(1 + kx * kx + ky * ky)
                modes.append((kx, ky, a, b))
        self.modes = modes
        self.scale = 1.0
        x, y = Grid.square(_REFERENCE).nodes()
        self.scale = amp / float(np.abs(self(x, y)).max())

    def __call__(self, x, y):
        v = np.zeros(np.broadcast(x, y).shape)
        for kx, ky, a, b in self.modes:
            arg = TWO_PI * (kx * x + ky * y)
            v += a * np.cos(arg) + b * np.sin(arg)
        return self.scale * v


@dataclass(frozen=True)
class CorpusMember:
    seed: int
    log_g11: TrigPolynomial
    log_g22: TrigPolynomial
    shear: TrigPolynomial
    log_weight: TrigPolynomial

    def sample(self, grid: Grid) -> tuple[MetricField, WeightField]:
        x, y = grid.nodes()
        g11 = np.exp(self.log_g11(x, y))
        g22 = np.exp(self.log_g22(x, y))
        b = SHEAR_AMP * np.tanh(self.shear(x, y))
        g = MetricField.from_arrays(grid, g11, b * np.sqrt(g11 * g22), g22)
        return g, WeightField(ScalarField(grid, np.exp(self.log_weight(x, y))))


def corpus_member(seed: int) -> CorpusMember:
    """Seeded random SPD metric and positive weight (smooth, band |k| <= 3)."""
    rng = np.random.default_rng(seed)
    return CorpusMember(
        seed=seed,
        log_g11=TrigPolynomial(rng, METRIC_AMP),
        log_g22=TrigPolynomial(rng, METRIC_AMP),
        shear=TrigPolynomial(rng, METRIC_AMP),
        log_weight=TrigPolynomial(rng, WEIGHT_AMP),
    )


def random_metric_weight(seed: int, grid: Grid) -> tuple[MetricField, WeightField]:
    return corpus_member(seed).sample(grid)


def random_class(rng: np.random.Generator) -> tuple[float, float]:
    """Random target class with an irrational-looking slope."""
    ang = rng.uniform(0.1, np.pi / 2 - 0.1)
    return float(np.cos(ang)), float(np.sin(ang))


def planted_cohomological(seed: int, grid: Grid, frequency=(1.0, GOLDEN), K: int = 6):
    """Forward problem: smooth mean-zero u and ``v = a u_x + b u_y`` sampled exactly."""
    rng = np.random.default_rng(seed)
    a, b = frequency
    x, y = grid.nodes()
    u = np.zeros(grid.shape)
    v = np.zeros(grid.shape)
    for kx in range(-K, K + 1):
        for ky in range(0, K + 1):
            if ky == 0 and kx <= 0:
                continue
            c, s = rng.normal(size=2) * np.exp(-0.5 * (abs(kx) + abs(ky)))
            arg = TWO_PI * (kx * x + ky * y)
            w = TWO_PI * (a * kx + b * ky)
            u += c * np.cos(arg) + s * np.sin(arg)
            v += w * (-c * np.sin(arg) + s * np.cos(arg))
    return ScalarField(grid, u), ScalarField(grid, v)


# --------------------------------------------------------------------------
# worked examples on the 2pi chart


def example1_field(q):
    """Divergence-free field f (dx + dy) + h dz with f = (z+1)cos(x+y), h = (z^2+2z) sin(x+y)."""
    x, y, z = q
    f = (z + 1) * np.cos(x + y)
    h = (z * z + 2 * z) * np.sin(x + y)
    return np.stack([f, f, h])


def example1_divergence(q):
    return np.zeros(np.shape(q)[1:])


def flat_slice_immersion() -> s3.Immersion:
    def T(x, y):
        return np.stack([TWO_PI * x, TWO_PI * y, np.zeros(np.broadcast(x, y).shape)])

    return s3.Immersion(T, drift=np.array([[TWO_PI, 0.0], [0.0, TWO_PI], [0.0, 0.0]]))


def example2_forms(grid: Grid) -> tuple[OneForm, OneForm]:
    """``omega = dy`` and ``eta = cos(x) dx + dy`` on the 2pi chart."""
    omega = sample_oneform(lambda x, y: 0 * x, lambda x, y: 1 + 0 * x, grid, TWO_PI)
    eta = sample_oneform(lambda x, y: np.cos(x), lambda x, y: 1 + 0 * x, grid, TWO_PI)
    return omega, eta


def example2_fields(grid: Grid) -> tuple[MetricField, VectorField, VectorField]:
    """Flat 2pi metric and the perpendicular fields ``W = (*omega)^#``, ``H = (*eta)^#``."""
    g = MetricField.euclidean(grid, TWO_PI)
    omega, eta = example2_forms(grid)
    return g, sharp(g, hodge_star_1(g, omega)), sharp(g, hodge_star_1(g, eta))


def example2_flow(p, t):
    """Closed-form flow of H in physical coordinates."""
    p = np.asarray(p, dtype=float)
    return np.array([p[0] - t, p[1] + np.sin(p[0]) + np.sin(t - p[0])])


def example2_chart_forms(grid: Grid) -> tuple[OneForm, OneForm]:
    """``alpha = -dx`` and ``beta = eta`` for the hand-built straight-line chart."""
    alpha = sample_oneform(lambda x, y: -1 + 0 * x, lambda x, y: 0 * x, grid, TWO_PI)
    return alpha, example2_forms(grid)[1]


# --------------------------------------------------------------------------
# registry


@dataclass(frozen=True)
class Scenario:
    name: str
    description: str
    config: dict


SCENARIOS = {
    s.name: s
    for s in (
        Scenario(
            "flat-unit",
            "Flat unit torus with unit weight; the basis is dx, dy and X = d/dx + golden d/dy.",
            {"scenario": "flat-unit", "resolution": 64, "metric": {"source": "identity"},
             "weight": {"source": "unit"}, "target": [1.0, GOLDEN]},
        ),
        Scenario(
            "example-nonsolvable",
            "Slice z = 0 of a periodic box carrying a divergence-free field whose "
            "restriction has zeros; the cohomological equation is obstructed.",
            {"scenario": "example-nonsolvable", "resolution": 128,
             "ambient": {"mode": "periodic_box", "periods": [TWO_PI, TWO_PI]}, "orientation": 1},
        ),
        Scenario(
            "example-cohomologous-forms",
            "Flat 2pi torus with the cohomologous forms dy and cos(x)dx + dy; "
            "their perpendicular fields share a winding class.",
            {"scenario": "example-cohomologous-forms", "resolution": 128,
             "trace": {"start": [0.3, 0.1], "T": TWO_PI}},
        ),
        Scenario(
            "axisymmetric-shell",
            "Level tori of an elliptic axisymmetric first integral in R^3 with a "
            "divergence-free tangent field; every quantity has a closed form.",
            {"scenario": "axisymmetric-shell", "resolution": 64,
             "shell": {"R0": 3.0, "kappa": 1.5, "F0": 1.0, "F1": 0.5,
                       "levels": [0.4, 0.55, 0.7, 0.85, 1.0]},
             "weight": {"source": "first_integral", "convention": "theorem"}, "orientation": 1},
        ),
        Scenario(
            "random-corpus",
            "Seeded smooth random SPD metric and positive weight; the field is the "
            "weighted-harmonic representative of a target class.",
            {"scenario": "random-corpus", "resolution": 128, "seed": 0,
             "metric": {"source": "random"}, "weight": {"source": "random"},
             "target": [1.0, GOLDEN], "trace": {"start": [0.0, 0.0], "T": 200.0}},
        ),
    )
}


def list_scenarios() -> list[tuple[str, str]]:
    return [(s.name, s.description) for s in SCENARIOS.values()]


def shell_from_config(config: dict) -> AxisymmetricShell:
    sh = config.get("shell", {})
    return AxisymmetricShell(
        R0=sh.get("R0", 3.0), kappa=sh.get("kappa", 1.5), F0=sh.get("F0", 1.0), F1=sh.get("F1", 0.5)
    )


def shell_level(shell: AxisymmetricShell, c: float, grid: Grid, orientation: int = 1, convention: str = "theorem"):
    """Geometry, restricted field, u and weight on the level torus rho = c^2."""
    geom = s3.induced_geometry(s3.Immersion(shell.immersion_map(c)), s3.AmbientSpace(), grid, orientation)
    B = s3.AmbientField(shell.field, shell.divergence)
    X, normal = s3.restrict_field(B, geom)
    u = s3.first_integral_u(s3.AmbientScalar(shell.rho, shell.grad_rho), geom)
    return geom, B, X, normal, u, s3.weight_from_u(u, convention)


def example1_geometry(grid: Grid, orientation: int = 1, periods=(TWO_PI, TWO_PI)):
    amb = s3.AmbientSpace("periodic_box", tuple(periods))
    geom = s3.induced_geometry(flat_slice_immersion(), amb, grid, orientation)
    return geom, s3.AmbientField(example1_field, example1_divergence)
