import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from invtorus.errors import GeneratorError, ZeroFieldError
from invtorus.fields import Curve, Grid, standard_generators, straight_curve
from invtorus.metric import MetricField, VectorField, WeightField
from invtorus.pharmonic import pharmonic_basis, pharmonic_field_for_class
from invtorus.scenarios import GOLDEN, corpus_member, example2_fields, example2_forms
from invtorus.winding import (
    WindingNumber,
    change_generators,
    class_distance,
    continued_fraction,
    diophantine_report,
    gamma_scan,
    normalize_class,
    resonance_witness,
    same_class,
    winding_from_form,
    winding_number,
)

G64 = Grid.square(64)
GEN64 = standard_generators(G64)


def unimodular(rng, steps=6):
    A = np.eye(2, dtype=int)
    moves = [np.array([[1, 1], [0, 1]]), np.array([[1, 0], [1, 1]]), np.array([[0, 1], [1, 0]]), np.array([[-1, 0], [0, 1]])]
    for _ in range(steps):
        A = moves[rng.integers(len(moves))] @ A
    return A


@pytest.fixture(scope="module")
def random_field():
    g, P = corpus_member(3).sample(G64)
    b = pharmonic_basis(g, P)
    return g, P, pharmonic_field_for_class(b, (1.0, GOLDEN))


def test_normalisation_convention():
    assert np.allclose(normalize_class((-3.0, 4.0)), (0.6, -0.8))
    assert np.allclose(normalize_class((0.0, -2.0)), (0.0, 1.0))
    with pytest.raises(ZeroFieldError):
        normalize_class((0.0, 0.0))
    assert same_class((1.0, 2.0), (-2.0, -4.0))
    assert not same_class((1.0, 2.0), (1.0, 2.0 + 1e-6))


def test_coordinate_field_class():
    g = MetricField.euclidean(G64)
    w = winding_number(VectorField.constant(G64, 1.0, 0.0), g, WeightField.unit(G64), *GEN64)
    assert np.allclose(w.normalized, (1.0, 0.0))
    assert w.diagnostics["parametric_mismatch"] < 1e-9
    assert set(w.to_dict()) >= {"raw_vector", "normalized", "generators_id"}


def test_zero_field_rejected():
    g = MetricField.euclidean(G64)
    with pytest.raises(ZeroFieldError):
        winding_number(VectorField.constant(G64, 0.0, 0.0), g, None, *GEN64)


def test_cohomologous_forms_give_same_class():
    g, W, H = example2_fields(G64)
    wW = winding_number(W, g, None, *GEN64)
    wH = winding_number(H, g, None, *GEN64)
    assert wW.same_class(wH, 1e-8)
    assert np.allclose(wW.normalized, (1.0, 0.0))


def test_classes_agree_from_annihilating_forms():
    g, W, H = example2_fields(G64)
    omega, eta = example2_forms(G64)
    # both forms annihilate their perpendicular fields and are cohomologous
    assert same_class(winding_from_form(omega, *GEN64).raw_vector, winding_number(W, g, None, *GEN64).raw_vector)
    assert same_class(winding_from_form(eta, *GEN64).raw_vector, winding_from_form(omega, *GEN64).raw_vector)


def test_round_trip_class(random_field):
    g, P, X = random_field
    w = winding_number(X, g, P, *GEN64)
    assert class_distance(w.normalized, (1.0, GOLDEN)) < 1e-8
    assert w.diagnostics["parametric_mismatch"] < 1e-9


def test_homology_invariance(random_field):
    g, P, X = random_field
    t = np.linspace(0, 1, 601)
    wiggle = Curve.from_samples(t, np.column_stack([t, 0.3 + 0.1 * np.sin(2 * np.pi * t) + 0.05 * np.sin(6 * np.pi * t)]))
    shifted = straight_curve((0, 1), start=(0.37, 0.0), grid=G64)
    a = winding_number(X, g, P, *GEN64).raw_vector
    b = winding_number(X, g, P, wiggle, shifted).raw_vector
    assert np.max(np.abs(np.subtract(a, b))) < 1e-8


@given(st.floats(-10, 10).filter(lambda c: abs(c) > 1e-3))
def test_scaling_keeps_class(c):
    g = MetricField.euclidean(G64)
    X = VectorField.constant(G64, 1.0, GOLDEN)
    w1 = winding_number(X, g, None, *GEN64)
    w2 = winding_number(X * c, g, None, *GEN64)
    assert np.allclose(w1.normalized, w2.normalized, atol=1e-15)


def test_change_generators_identity_and_swap(random_field):
    g, P, X = random_field
    w = winding_number(X, g, P, *GEN64)
    assert change_generators(w, np.eye(2, dtype=int)).raw_vector == w.raw_vector
    swap = np.array([[0, 1], [1, 0]])
    direct = winding_number(X, g, P, GEN64[1], GEN64[0])
    moved = change_generators(w, swap)
    assert np.max(np.abs(np.subtract(moved.raw_vector, direct.raw_vector))) < 1e-10
    assert moved.generators_id == "0,1;1,0"
    with pytest.raises(GeneratorError):
        change_generators(w, np.array([[2, 0], [0, 1]]))


@given(st.integers(0, 10_000))
def test_change_generators_matches_recomputation(seed):
    rng = np.random.default_rng(seed)
    A = unimodular(rng)
    g = MetricField.euclidean(G64)
    X = VectorField.constant(G64, 1.0, GOLDEN)
    w = winding_number(X, g, None, *GEN64)
    curves = [straight_curve(tuple(int(v) for v in row), grid=G64) for row in A]
    direct = winding_number(X, g, None, *curves)
    moved = change_generators(w, A)
    assert np.max(np.abs(np.subtract(moved.raw_vector, direct.raw_vector))) < 1e-9


@given(st.integers(0, 10_000))
def test_resonance_flag_invariant_under_unimodular_change(seed):
    rng = np.random.default_rng(seed)
    A = unimodular(rng)
    for u, resonant in (((1.0, 2.0), True), ((1.0, GOLDEN), False)):
        w = change_generators(WindingNumber(u), A)
        assert diophantine_report(w.raw_vector, (8, 32)).resonant is resonant


def test_resonant_example():
    rep = diophantine_report((1.0, 2.0))
    assert rep.resonant and rep.witness == (2, -1)
    assert resonance_witness((1.0, 2.0), 8) == (2, -1)


def test_golden_example():
    rep = diophantine_report((1.0, GOLDEN))
    assert rep.cf_quotients[:15] == [1] * 15
    assert not rep.resonant
    assert min(rep.gamma_table.values()) >= 0.27
    assert min(diophantine_report(normalize_class((1.0, GOLDEN))).gamma_table.values()) >= 0.27


def test_liouville_example_collapses():
    x = sum(2.0 ** -math.factorial(n) for n in range(1, 6))
    table = diophantine_report((1.0, x)).gamma_table
    assert table[128] < table[8] / 10


@given(st.floats(0.05, 20.0), st.floats(0.05, 20.0))
def test_gamma_table_non_increasing(a, b):
    table = diophantine_report((a, b)).gamma_table
    assert table[8] >= table[32] >= table[128]


def test_gamma_scan_minimiser():
    val, k = gamma_scan((1.0, GOLDEN), 16)
    assert k == (1, 0) and abs(val - 1.0) < 1e-15


def test_continued_fraction_of_rational():
    assert continued_fraction(43 / 30) == [1, 2, 3, 4]
