import numpy as np
import pytest
from hypothesis import given, strategies as st

from invtorus.errors import NotPositiveDefiniteError
from invtorus.fields import Grid, OneForm, ScalarField, gradient, sample_oneform, sample_scalar, surface_integral
from invtorus.metric import (
    MetricField,
    VectorField,
    WeightField,
    codifferential,
    commutator,
    d_oneform,
    directional,
    divergence,
    energy,
    flat,
    form_norm2,
    hodge_star_1,
    inner,
    integrate,
    pointwise_norm2,
    sharp,
)
from invtorus.scenarios import TWO_PI, corpus_member, example2_forms
from invtorus.surface3d import calibrate_sign

from conftest import trig_field

G32 = Grid.square(32)
G64 = Grid.square(64)


def random_inputs(seed, grid=G32):
    rng = np.random.default_rng(seed)
    g, P = corpus_member(seed).sample(grid)
    omega = OneForm.from_arrays(grid, trig_field(rng, grid), trig_field(rng, grid))
    F = ScalarField(grid, trig_field(rng, grid))
    return g, P, omega, F


def test_metric_rejects_indefinite():
    with pytest.raises(NotPositiveDefiniteError, match="node"):
        MetricField.from_arrays(G32, 1.0, 2.0, 1.0)
    with pytest.raises(NotPositiveDefiniteError):
        WeightField(ScalarField.constant(G32, 0.0))


def test_metric_caches_consistent():
    g, P, _, _ = random_inputs(1)
    det = g.g11.values * g.g22.values - g.g12.values ** 2
    assert np.max(np.abs(g.sqrt_det ** 2 - det)) < 1e-14
    assert np.max(np.abs(g.inv11 * g.g11.values + g.inv12 * g.g12.values - 1)) < 1e-14
    assert np.max(np.abs(P.p.values - np.log(np.sqrt(P.P.values)))) < 1e-14


def test_flat_star_rotates():
    g = MetricField.euclidean(G32)
    dx = OneForm.constant(G32, 1.0, 0.0)
    dy = OneForm.constant(G32, 0.0, 1.0)
    s = hodge_star_1(g, dx)
    assert np.allclose(s.comp_dx.values, 0) and np.allclose(s.comp_dy.values, 1)
    s = hodge_star_1(g, dy)
    assert np.allclose(s.comp_dx.values, -1) and np.allclose(s.comp_dy.values, 0)


def test_star_is_conformally_invariant():
    rng = np.random.default_rng(2)
    lam = 0.3 * trig_field(rng, G32)
    e = np.exp(2 * lam)
    omega = OneForm.from_arrays(G32, trig_field(rng, G32), trig_field(rng, G32))
    a = hodge_star_1(MetricField.from_arrays(G32, e, 0.0, e), omega)
    b = hodge_star_1(MetricField.euclidean(G32), omega)
    assert (a - b).max_abs() < 1e-13


@given(st.integers(0, 10_000))
def test_star_squared_is_minus_identity(seed):
    g, _, omega, _ = random_inputs(seed)
    assert (hodge_star_1(g, hodge_star_1(g, omega)) + omega).max_abs() < 1e-12


@given(st.integers(0, 10_000))
def test_form_and_its_star_are_orthogonal(seed):
    g, _, omega, _ = random_inputs(seed)
    assert inner(g, omega, hodge_star_1(g, omega)).max_abs() < 1e-12
    n1 = form_norm2(g, omega).values
    n2 = form_norm2(g, hodge_star_1(g, omega)).values
    assert np.max(np.abs(n1 - n2)) < 1e-12 * max(1.0, n1.max())


def test_musical_examples():
    X = VectorField.constant(G32, 1.0, 0.0)
    w = flat(MetricField.euclidean(G32), X)
    assert np.all(w.comp_dx.values == 1) and np.all(w.comp_dy.values == 0)
    w = flat(MetricField.from_arrays(G32, 2.0, 0.0, 1.0), X)
    assert np.all(w.comp_dx.values == 2)


@given(st.integers(0, 10_000))
def test_sharp_inverts_flat(seed):
    g, _, omega, _ = random_inputs(seed)
    X = VectorField(omega.comp_dx, omega.comp_dy)
    assert (sharp(g, flat(g, X)) - X).max_abs() < 1e-12


def test_d_examples():
    F = sample_scalar(lambda x, y: np.sin(2 * np.pi * (x - y)), Grid.square(16))
    assert d_oneform(gradient(F)).coeff.max_abs() < 1e-12
    _, eta = example2_forms(Grid.square(64))
    assert d_oneform(eta).coeff.max_abs() < 1e-12
    omega = sample_oneform(lambda x, y: np.sin(2 * np.pi * y) + 0 * x, lambda x, y: 0 * x, G32)
    _, y = G32.nodes()
    assert np.max(np.abs(d_oneform(omega).coeff.values + 2 * np.pi * np.cos(2 * np.pi * y))) < 1e-12


def test_d_leibniz():
    _, _, omega, F = random_inputs(3, Grid.square(64))
    lhs = d_oneform(omega * F).coeff.values
    dF = gradient(F)
    wedge = dF.comp_dx.values * omega.comp_dy.values - dF.comp_dy.values * omega.comp_dx.values
    rhs = wedge + F.values * d_oneform(omega).coeff.values
    assert np.max(np.abs(lhs - rhs)) < 1e-10


def test_codifferential_of_constant_form():
    g = MetricField.euclidean(G32)
    assert codifferential(g, OneForm.constant(G32, 1.0, 0.0)).max_abs() < 1e-14


def test_codifferential_of_slice_restriction():
    grid = Grid.square(128)
    g = MetricField.euclidean(grid, TWO_PI)
    c = lambda x, y: np.cos(x + y)
    omega = sample_oneform(c, c, grid, TWO_PI)
    x, y = grid.nodes()
    expected = 2 * np.sin(TWO_PI * (x + y))
    got = codifferential(g, omega).values
    assert np.max(np.abs(got - expected)) < 1e-10
    s = calibrate_sign().sign
    assert np.max(np.abs(got - (-s) * 2 * np.sin(TWO_PI * (x + y)))) < 1e-10


@given(st.integers(0, 10_000))
def test_weighted_leibniz(seed):
    g, P, omega, _ = random_inputs(seed, G64)
    lhs = codifferential(g, omega, P).values
    rhs = P.P.values * codifferential(g, omega).values - inner(g, gradient(P.P), omega).values
    assert np.max(np.abs(lhs - rhs)) < 1e-10


@given(st.integers(0, 10_000))
def test_symmetrised_exponent_identity(seed):
    g, P, omega, _ = random_inputs(seed, G64)
    lhs = codifferential(g, omega, P).values
    rhs = P.P.values * (codifferential(g, omega).values - 2 * inner(g, gradient(P.p), omega).values)
    assert np.max(np.abs(lhs - rhs)) < 1e-10


@given(st.integers(0, 10_000))
def test_codifferential_is_adjoint_of_d(seed):
    g, P, omega, F = random_inputs(seed, G64)
    lhs = integrate(g, inner(g, gradient(F), omega * P.P))
    rhs = integrate(g, F * codifferential(g, omega, P))
    assert abs(lhs - rhs) < 1e-9


def test_codifferential_is_minus_divergence():
    g, _, omega, _ = random_inputs(5)
    assert (codifferential(g, omega) + divergence(g, sharp(g, omega))).max_abs() < 1e-10


def test_divergence_integrates_to_zero():
    g, _, omega, _ = random_inputs(6)
    X = sharp(g, omega)
    assert abs(integrate(g, divergence(g, X))) < 1e-12


def test_commutator_examples():
    ex = VectorField.constant(G32, 1.0, 0.0)
    ey = VectorField.constant(G32, 0.0, 1.0)
    assert commutator(ex, ey).max_abs() < 1e-14
    f = sample_scalar(lambda x, y: np.sin(2 * np.pi * y) + 0 * x, G32)
    c = commutator(VectorField(f, ScalarField.constant(G32, 0.0)), ey)
    _, y = G32.nodes()
    assert np.max(np.abs(c.comp_x.values + 2 * np.pi * np.cos(2 * np.pi * y))) < 1e-12
    assert c.comp_y.max_abs() < 1e-14


@given(st.integers(0, 10_000))
def test_commutator_antisymmetric_and_derivation(seed):
    rng = np.random.default_rng(seed)
    X = VectorField.from_arrays(G32, trig_field(rng, G32), trig_field(rng, G32))
    Y = VectorField.from_arrays(G32, trig_field(rng, G32), trig_field(rng, G32))
    assert (commutator(X, Y) + commutator(Y, X)).max_abs() < 1e-12
    f = ScalarField(Grid.square(64), trig_field(rng, Grid.square(64), K=2))
    # [X, Y] f = X(Y f) - Y(X f), on a grid fine enough to hold the products
    from invtorus.fields import refine
    Xf = VectorField(refine(X.comp_x, 4), refine(X.comp_y, 4))
    Yf = VectorField(refine(Y.comp_x, 4), refine(Y.comp_y, 4))
    f = refine(ScalarField(G32, trig_field(rng, G32, K=2)), 4)
    lhs = directional(commutator(Xf, Yf), f).values
    rhs = (directional(Xf, directional(Yf, f)) - directional(Yf, directional(Xf, f))).values
    assert np.max(np.abs(lhs - rhs)) < 1e-8 * max(1.0, np.abs(lhs).max())


def test_norms():
    g = MetricField.euclidean(G32)
    assert np.all(pointwise_norm2(g, VectorField.constant(G32, 1.0, 0.0)).values == 1)
    assert np.all(pointwise_norm2(g, VectorField.constant(G32, 0.0, 0.0)).values == 0)
    gr, _, omega, _ = random_inputs(8)
    X = VectorField(omega.comp_dx, omega.comp_dy)
    vx, vy = X.comp_x.values, X.comp_y.values
    direct = gr.g11.values * vx ** 2 + 2 * gr.g12.values * vx * vy + gr.g22.values * vy ** 2
    assert np.max(np.abs(pointwise_norm2(gr, X).values - direct)) < 1e-13
    assert pointwise_norm2(gr, X).values.min() >= 0


def test_energy_matches_integral():
    g, P, omega, _ = random_inputs(9)
    e = energy(g, omega, P)
    assert abs(e - integrate(g, form_norm2(g, omega) * P.P)) < 1e-12
    assert energy(g, OneForm.constant(G32, 0.0, 0.0)) == 0


def test_area_of_flat_two_pi_torus():
    g = MetricField.euclidean(G32, TWO_PI)
    assert abs(g.total_area() - TWO_PI ** 2) < 1e-12
    assert abs(surface_integral(g.area()) - TWO_PI ** 2) < 1e-12
