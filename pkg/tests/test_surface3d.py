import warnings

import numpy as np
import pytest

from invtorus import surface3d as s3
from invtorus.errors import (
    ConfigError,
    CriticalPointError,
    NotTangentError,
    OffSurfaceError,
    RankDeficiencyError,
)
from invtorus.fields import Grid, ScalarField, standard_generators
from invtorus.metric import codifferential, d_oneform, directional
from invtorus.oracles import AxisymmetricShell, PerturbedTorus, random_perturbed_torus
from invtorus.scenarios import TWO_PI, example1_geometry, flat_slice_immersion, shell_level
from invtorus.winding import winding_number

G32 = Grid.square(32)
G64 = Grid.square(64)
EUCLID = s3.AmbientSpace()


def standard_torus(R=2.0, r=1.0):
    def T(x, y):
        th, ph = TWO_PI * x, TWO_PI * y
        return np.stack([(R + r * np.cos(th)) * np.cos(ph), (R + r * np.cos(th)) * np.sin(ph), r * np.sin(th)])

    return s3.Immersion(T)


def torus_normal(R=2.0):
    def n(q):
        x, y, z = q
        rr = np.hypot(x, y)
        d = np.stack([x / rr * (rr - R), y / rr * (rr - R), z])
        return d / np.linalg.norm(d, axis=0)

    return n


@pytest.fixture(scope="module")
def shell64():
    shell = AxisymmetricShell()
    return shell, {c: shell_level(shell, c, G64) for c in (0.55, 0.85)}


def test_standard_torus_metric():
    geom = s3.induced_geometry(standard_torus(), EUCLID, G64)
    x, _ = G64.nodes()
    g = geom.metric
    assert np.max(np.abs(g.g11.values - TWO_PI ** 2)) < 1e-10
    assert np.max(np.abs(g.g22.values - TWO_PI ** 2 * (2 + np.cos(TWO_PI * x)) ** 2)) < 1e-10
    assert np.max(np.abs(g.g12.values)) < 1e-10


def test_flat_slice_geometry():
    geom, _ = example1_geometry(G32)
    assert np.max(np.abs(geom.metric.g11.values - TWO_PI ** 2)) < 1e-12
    assert np.max(np.abs(geom.metric.g12.values)) < 1e-12
    assert np.allclose(geom.normal[2], 1.0) and np.allclose(geom.normal[:2], 0.0)
    flipped, _ = example1_geometry(G32, orientation=-1)
    assert np.allclose(flipped.normal[2], -1.0)


def test_geometry_rejections():
    with pytest.raises(RankDeficiencyError, match="node"):
        s3.induced_geometry(s3.Immersion(lambda x, y: np.stack([np.cos(TWO_PI * x), np.sin(TWO_PI * x), 0 * y])), EUCLID, G32)
    with pytest.raises(ConfigError):
        s3.induced_geometry(s3.Immersion(lambda x, y: np.stack([x, np.cos(TWO_PI * y), np.sin(TWO_PI * y)])), EUCLID, G32)
    with pytest.raises(ConfigError):
        s3.induced_geometry(flat_slice_immersion(), EUCLID, G32)
    with pytest.raises(ConfigError):
        s3.AmbientSpace("periodic_box", (1.0, -1.0))


def test_pure_normal_field_restricts_to_zero():
    geom = s3.induced_geometry(standard_torus(), EUCLID, G64)
    X, normal = s3.restrict_field(s3.AmbientField(torus_normal()), geom)
    assert X.max_abs() < 1e-12
    assert np.allclose(np.abs(normal.values), 1.0, atol=1e-12)


def test_slice_field_restriction():
    geom, B = example1_geometry(Grid.square(128))
    X, normal = s3.restrict_field(B, geom)
    x, y = geom.grid.nodes()
    expected = np.cos(TWO_PI * (x + y)) / TWO_PI
    assert np.max(np.abs(X.comp_x.values - expected)) < 1e-12
    assert np.max(np.abs(X.comp_y.values - expected)) < 1e-12
    assert normal.max_abs() < 1e-14


def test_slice_normal_derivative_both_methods():
    geom, B = example1_geometry(Grid.square(128))
    x, y = geom.grid.nodes()
    expected = 2 * np.sin(TWO_PI * (x + y))
    amb = s3.normal_derivative(B, geom, "ambient").values
    surf = s3.normal_derivative(B, geom, "surface").values
    assert np.max(np.abs(amb - expected)) < 1e-8
    assert np.max(np.abs(surf - expected)) < 1e-8
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        s3.normal_derivative(B, geom, "both")


def test_slice_curl_normal_vanishes():
    geom, B = example1_geometry(G64)
    assert s3.curl_normal_component(B, geom).max_abs() < 1e-12
    assert s3.ambient_curl_normal(B, geom).max_abs() < 1e-8


def test_translation_has_no_normal_shear():
    geom, _ = example1_geometry(G32)
    B = s3.AmbientField(lambda q: np.stack([np.ones(q.shape[1:]), 0.5 * np.ones(q.shape[1:]), np.zeros(q.shape[1:])]))
    assert s3.normal_derivative(B, geom).max_abs() < 1e-10
    assert s3.curl_normal_component(B, geom).max_abs() < 1e-12


def test_non_tangent_field_rejected():
    geom, _ = example1_geometry(G32)
    B = s3.AmbientField(lambda q: np.stack([np.zeros(q.shape[1:]), np.zeros(q.shape[1:]), np.ones(q.shape[1:])]))
    with pytest.raises(NotTangentError):
        s3.normal_derivative(B, geom)


def test_first_integral_on_slice():
    geom, _ = example1_geometry(G32)
    u = s3.first_integral_u(s3.AmbientScalar(lambda q: q[2]), geom)
    assert u.max_abs() < 1e-8
    u2 = s3.first_integral_u(s3.AmbientScalar(lambda q: 2 * q[2], lambda q: np.stack([0 * q[0], 0 * q[0], 2 + 0 * q[0]])), geom)
    assert np.max(np.abs(u2.values + np.log(2))) < 1e-15
    with pytest.raises(CriticalPointError):
        s3.first_integral_u(s3.AmbientScalar(lambda q: q[2] ** 2), geom)
    with pytest.raises(OffSurfaceError):
        s3.first_integral_u(s3.AmbientScalar(lambda q: q[0] / TWO_PI), geom)


def test_weight_conventions():
    u = ScalarField(G32, np.full(G32.shape, 0.3))
    assert np.allclose(s3.weight_from_u(u).P.values, np.exp(0.3))
    assert np.allclose(s3.weight_from_u(u, "corollary").P.values, np.exp(-0.3))
    with pytest.raises(ConfigError):
        s3.weight_from_u(u, "other")


def test_shell_closed_forms(shell64):
    shell, levels = shell64
    _, y = G64.nodes()
    for c, (geom, B, X, normal, u, P) in levels.items():
        g11, _, g22 = shell.metric(c, y)
        assert np.max(np.abs(geom.metric.g11.values - g11)) < 1e-8 * g11.max()
        assert np.max(np.abs(geom.metric.g22.values - g22)) < 1e-8 * g22.max()
        xa, ya = shell.tangential(c, y)
        assert np.max(np.abs(X.comp_x.values - xa)) < 1e-8
        assert np.max(np.abs(X.comp_y.values - ya)) < 1e-8
        assert normal.max_abs() < 1e-12
        assert np.max(np.abs(u.values - shell.u(c, y))) < 1e-10
        dn = s3.normal_derivative(B, geom, "ambient").values
        assert np.max(np.abs(dn - shell.normal_derivative(c, y))) < 1e-8
        surf = s3.normal_derivative(B, geom, "surface").values
        assert np.max(np.abs(surf - dn)) < 1e-8
        # the first integral solves the cohomological equation
        assert np.max(np.abs(directional(X, u).values - dn)) < 1e-6


def test_shell_winding_closed_form(shell64):
    shell, levels = shell64
    for c, (geom, B, X, normal, u, P) in levels.items():
        w = winding_number(X, geom.metric, P, *standard_generators(G64))
        assert np.allclose(w.raw_vector, shell.winding_vector(c), rtol=1e-10, atol=1e-10)


def test_circular_shell_reduces_to_plain_oracle():
    shell = AxisymmetricShell(kappa=1.0, F0=0.0)
    geom, B, X, normal, u, P = shell_level(shell, 0.7, G32)
    assert s3.normal_derivative(B, geom).max_abs() < 1e-8
    assert np.ptp(u.values) < 1e-12 and abs(u.values[0, 0] + np.log(1.4)) < 1e-12
    assert X.comp_x.max_abs() < 1e-15


def test_sign_calibration_is_decisive():
    cal = s3.calibrate_sign()
    assert cal.sign == -1
    assert cal.residual < 1e-8 < 1e-2 < cal.rejected_residual


def test_pipeline_consistency(shell64):
    shell, levels = shell64
    for c, (geom, B, X, normal, u, P) in levels.items():
        omega = s3.restricted_form(B, geom)
        assert d_oneform(omega).max_abs() < 1e-6
        assert codifferential(geom.metric, omega, s3.weight_from_u(u, "theorem")).max_abs() < 1e-6
        # the opposite exponent does not make the restricted form weighted-harmonic here
        assert codifferential(geom.metric, omega, s3.weight_from_u(u, "corollary")).max_abs() > 1e-2


def test_advert_integrals_match_winding(shell64):
    shell, levels = shell64
    gen = standard_generators(G64)
    for c, (geom, B, X, normal, u, P) in levels.items():
        I1, I2 = s3.advert_integrals(B, geom, u, gen)
        raw = winding_number(X, geom.metric, s3.weight_from_u(u, "corollary"), *gen).raw_vector
        assert np.max(np.abs(np.array([I2, -I1]) - raw)) < 1e-8


def test_advert_integral_two_ways(shell64):
    shell, levels = shell64
    geom, B, *_ = levels[0.55]
    zero = ScalarField(G64, np.zeros(G64.shape))
    curve = standard_generators(G64)[1]
    (I,) = s3.advert_integrals(B, geom, zero, (curve,))
    # direct: analytic tangent by central differences of the immersion map, normal from the level function
    t = (np.arange(4000) + 0.5) / 4000
    T = shell.immersion_map(0.55)
    h = 1e-6
    dC = (T(0 * t, t + h) - T(0 * t, t - h)) / (2 * h)
    q = T(0 * t, t)
    n = shell.unit_gradient(q)
    direct = np.mean(np.einsum("cm,cm->m", np.cross(dC, shell.field(q), axis=0), n))
    assert abs(I - direct) < 1e-8


def test_advert_integral_vanishes_for_parallel_field(shell64):
    _, levels = shell64
    geom, *_ = levels[0.85]
    toroidal = s3.AmbientField(lambda q: np.stack([-q[1], q[0], 0 * q[0]]) / (q[0] ** 2 + q[1] ** 2))
    zero = ScalarField(G64, np.zeros(G64.shape))
    (I,) = s3.advert_integrals(toroidal, geom, zero, (standard_generators(G64)[0],))
    assert abs(I) < 1e-12


def test_advert_needs_euclidean_space():
    geom, B = example1_geometry(G32)
    with pytest.raises(ConfigError):
        s3.advert_integrals(B, geom, ScalarField(G32, np.zeros(G32.shape)), standard_generators(G32))


def test_hodge_pullback_signs():
    tor = random_perturbed_torus(np.random.default_rng(0))
    geom = s3.induced_geometry(s3.Immersion(tor.immersion_map()), EUCLID, G64)
    w = lambda q: np.stack([np.sin(q[1]), q[0] * q[2], np.cos(q[0] + q[2])])
    for k in (1, 2):
        assert s3.hodge_pullback_residual(geom, w, k, "graded") < 1e-10
    assert s3.hodge_pullback_residual(geom, w, 2, "printed") < 1e-10
    assert s3.hodge_pullback_residual(geom, w, 1, "printed") > 1e-2


def test_extension_independence():
    tor = PerturbedTorus()
    geom = s3.induced_geometry(s3.Immersion(tor.immersion_map()), EUCLID, G64)
    B = s3.AmbientField(tor.field)
    transport = s3.normal_derivative(B, geom).values
    gradient = s3.normal_derivative(B, geom, extension=tor.unit_gradient).values
    assert np.max(np.abs(transport - gradient)) < 1e-6


def test_perturbed_torus_field_is_tangent_and_level():
    tor = PerturbedTorus()
    geom = s3.induced_geometry(s3.Immersion(tor.immersion_map()), EUCLID, G64)
    _, normal = s3.restrict_field(s3.AmbientField(tor.field), geom)
    assert normal.max_abs() < 1e-12
    assert np.ptp(tor.rho(geom.positions)) < 1e-12


def test_planted_curl_intrinsic_vs_ambient():
    geom = s3.induced_geometry(standard_torus(), EUCLID, G64)
    B = s3.AmbientField(lambda q: np.stack([-q[1], q[0], q[0]]))
    curl = np.array([0.0, -1.0, 2.0])
    exact = np.einsum("c,cji->ji", curl, geom.normal)
    assert np.max(np.abs(s3.curl_normal_component(B, geom).values - exact)) < 1e-10
    assert np.max(np.abs(s3.ambient_curl_normal(B, geom).values - exact)) < 1e-6


def test_sampled_ambient_field():
    shell = AxisymmetricShell()
    n = 90  # even, so the axis r = 0 is not a sample point
    axes = [np.linspace(-4.5, 4.5, n), np.linspace(-4.5, 4.5, n), np.linspace(-1.6, 1.6, 41)]
    Q = np.stack(np.meshgrid(*axes, indexing="ij"))
    comps = shell.field(Q)
    sampled = s3.SampledAmbientField([a[0] for a in axes], [a[1] - a[0] for a in axes], comps)
    geom = shell_level(shell, 0.7, G32)[0]
    Xs, _ = s3.restrict_field(sampled, geom)
    Xa, _ = s3.restrict_field(s3.AmbientField(shell.field), geom)
    # trilinear interpolation: second order in the box spacing (0.1)
    assert (Xs - Xa).max_abs() < 1e-2 * Xa.max_abs()
    with pytest.raises(ConfigError):
        s3.SampledAmbientField((0, 0, 0), (1, 1, 1), np.zeros((2, 3, 3, 3)))
