import dataclasses

import numpy as np
import pytest

from invtorus.errors import DegenerateCoframeError, DependentClassesError, StepSizeError
from invtorus.fields import Grid, OneForm, ScalarField, homology_class, standard_generators
from invtorus.linearise import (
    ZeroFieldResult,
    build_chart,
    companion_field,
    full_linearise,
    max_step,
    pair_commutator_residual,
    semi_linearise,
    sweep_level_tori,
    trace_field_line,
    verify_linearisation,
)
from invtorus.metric import MetricField, VectorField, WeightField, flat, hodge_star_1, pointwise_norm2
from invtorus.pharmonic import pharmonic_basis, pharmonic_field_for_class
from invtorus.scenarios import GOLDEN, TWO_PI, corpus_member, example2_chart_forms, example2_fields, example2_flow
from invtorus.winding import class_distance, winding_from_form, winding_number

G32 = Grid.square(32)
G64 = Grid.square(64)


@pytest.fixture(scope="module")
def random_case():
    grid = Grid.square(128)
    g, P = corpus_member(1).sample(grid)
    X = pharmonic_field_for_class(pharmonic_basis(g, P), (1.0, GOLDEN))
    return g, P, X


def test_identity_chart():
    chart = build_chart(OneForm.constant(G32, 1.0, 0.0), OneForm.constant(G32, 0.0, 1.0))
    assert np.allclose(chart.linear_part, np.eye(2), atol=1e-14)
    assert np.allclose(chart.frequency, (1.0, 0.0), atol=1e-14)
    assert chart.u1.max_abs() < 1e-14 and chart.u2.max_abs() < 1e-14
    assert chart.jacobian_min == pytest.approx(1.0) and chart.orientation == 1
    assert verify_linearisation(chart, VectorField.constant(G32, 2.0, 0.0), ScalarField.constant(G32, 2.0)) < 1e-14


def test_degenerate_inputs():
    dx = OneForm.constant(G32, 1.0, 0.0)
    with pytest.raises(DegenerateCoframeError):
        build_chart(dx, dx * 2.0)
    with pytest.raises(DegenerateCoframeError):
        build_chart(dx, OneForm.constant(G32, 0.0, 0.0))


def test_dependent_classes_need_a_vanishing_wedge():
    # the integral of alpha^beta is det(Pi), so dependent periods force a sign change
    from invtorus.fields import gradient, sample_scalar

    F = sample_scalar(lambda x, y: 0.1 * np.sin(2 * np.pi * x) + 0 * y, G32)
    alpha = OneForm.constant(G32, 0.0, 1.0)
    with pytest.raises((DependentClassesError, DegenerateCoframeError)):
        build_chart(alpha, alpha + gradient(F))


def test_slice_example_chart():
    grid = Grid.square(256)
    alpha, beta = example2_chart_forms(grid)
    chart = build_chart(alpha, beta)
    assert np.allclose(chart.lattice_map, np.diag([-1 / TWO_PI, 1 / TWO_PI]), atol=1e-12)
    assert np.allclose(chart.linear_part, np.eye(2), atol=1e-12)
    # periodic parts: none in the first coordinate, sin(x) up to normalisation in the second
    x, _ = grid.nodes()
    assert chart.u1.max_abs() < 1e-12
    assert np.max(np.abs(chart.u2.values - np.sin(TWO_PI * x) / TWO_PI)) < 1e-12
    g, _, H = example2_fields(grid)
    assert verify_linearisation(chart, H, ScalarField.constant(grid, 1.0)) < 1e-8


def test_planted_chart_error_is_detected():
    chart = build_chart(OneForm.constant(G32, 1.0, 0.0), OneForm.constant(G32, 0.0, 1.0))
    bad = dataclasses.replace(chart, linear_part=chart.linear_part + 0.01)
    res = verify_linearisation(bad, VectorField.constant(G32, 1.0, 0.0), ScalarField.constant(G32, 1.0))
    assert res == pytest.approx(0.01 * np.linalg.norm(chart.frequency), rel=0.5)


def test_semi_linearise_linear_field():
    g = MetricField.euclidean(G32)
    chart = semi_linearise(VectorField.constant(G32, 1.0, GOLDEN), g, WeightField.unit(G32))
    assert class_distance(chart.frequency, (1.0, GOLDEN)) < 1e-14
    assert np.allclose(chart.frequency, np.array([1.0, GOLDEN]) / (1 + GOLDEN ** 2), atol=1e-14)
    assert chart.u1.max_abs() < 1e-14 and chart.u2.max_abs() < 1e-14
    assert chart.linearisation_residual < 1e-14


def test_semi_linearise_zero_field():
    g = MetricField.euclidean(G32)
    res = semi_linearise(VectorField.constant(G32, 0.0, 0.0), g)
    assert isinstance(res, ZeroFieldResult) and res.identically_zero


def test_semi_linearise_random(random_case):
    g, P, X = random_case
    chart = semi_linearise(X, g, P)
    assert chart.linearisation_residual < 1e-6
    assert chart.commutator_residual < 1e-6
    assert chart.jacobian_min > 0
    assert np.array_equal(chart.proportionality.values, pointwise_norm2(g, X).values)


def test_frequency_matches_winding_of_beta(random_case):
    g, P, X = random_case
    chart = semi_linearise(X, g, P)
    beta = hodge_star_1(g, flat(g, X)) * P.P
    raw = np.array(winding_from_form(beta, *standard_generators(g.grid)).raw_vector)
    # frequency = first column of the inverse period matrix = -raw / det(Pi)
    expected = -raw / np.linalg.det(chart.period_matrix)
    assert np.max(np.abs(chart.frequency - expected)) < 1e-9 * np.linalg.norm(expected)
    w = winding_number(X, g, P, *standard_generators(g.grid))
    assert class_distance(chart.frequency, w.raw_vector) < 1e-9


def test_commutator_pair_on_corpus_member():
    g, P = corpus_member(2).sample(G64)
    X = pharmonic_field_for_class(pharmonic_basis(g, P), (1.0, 0.3))
    assert pair_commutator_residual(X, g, P) < 1e-5
    Y = companion_field(X, g, P)
    assert Y.max_abs() > 0


def test_trace_linear_field():
    X = VectorField.constant(G32, 1.0, GOLDEN)
    tr = trace_field_line(X, (0.0, 0.0), 50.0)
    assert abs(tr.displacement_ratio - GOLDEN) < 1e-9
    assert abs(tr.birkhoff_ratio - GOLDEN) < 1e-9


def test_trace_matches_closed_form_flow():
    grid = Grid.square(64)
    _, _, H = example2_fields(grid)
    start = np.array([0.3, 0.1])
    tr = trace_field_line(H, start, TWO_PI)
    expected = example2_flow(TWO_PI * start, TWO_PI) / TWO_PI
    assert np.max(np.abs(tr.samples[-1] - expected)) < 1e-6
    assert homology_class(tr.samples) == (-1, 0)


def test_trace_rejects_large_step():
    X = VectorField.constant(G32, 1.0, GOLDEN)
    with pytest.raises(StepSizeError):
        trace_field_line(X, (0.0, 0.0), 1.0, dt=2 * max_step(X))


def test_sweep_flat_family():
    g = MetricField.euclidean(G32)
    zs = [0.5, 0.1, 0.3, GOLDEN]
    fam = [(z, VectorField.constant(G32, 1.0, z), g, None) for z in zs]
    prof = sweep_level_tori(fam)
    assert prof.z_values == sorted(zs)
    for z, a, b in zip(prof.z_values, prof.a, prof.b):
        assert class_distance((a, b), (1.0, z)) < 1e-14
        assert abs(a - 1 / (1 + z * z)) < 1e-14 and abs(b - z / (1 + z * z)) < 1e-14
    assert not prof.failures


def test_sweep_records_failures_and_continues():
    g = MetricField.euclidean(G32)
    fam = [(0.0, VectorField.constant(G32, 0.0, 0.0), g, None), (1.0, VectorField.constant(G32, 1.0, 1.0), g, None)]
    prof = sweep_level_tori(fam)
    assert prof.z_values == [1.0] and 0.0 in prof.failures


def test_single_surface_sweep_matches_chart():
    g, P = corpus_member(4).sample(G64)
    X = pharmonic_field_for_class(pharmonic_basis(g, P), (1.0, GOLDEN))
    prof = sweep_level_tori([(0.7, X, g, P)])
    chart = semi_linearise(X, g, P)
    assert len(prof.z_values) == 1
    assert np.allclose((prof.a[0], prof.b[0]), chart.frequency, atol=1e-14)


def test_full_linearise_linear_field():
    g = MetricField.euclidean(G32)
    X = VectorField.constant(G32, 1.0, GOLDEN)
    chart = semi_linearise(X, g)
    res = full_linearise(chart, X)
    assert res.status == "ok" and res.residual < 1e-12


def test_full_linearise_skips_poor_divisors():
    g = MetricField.euclidean(G32)
    X = VectorField.constant(G32, 1.0, 2.0)
    res = full_linearise(semi_linearise(X, g), X)
    assert res.status == "poor_divisors"


def test_full_linearise_random(random_case):
    g, P, X = random_case
    chart = semi_linearise(X, g, P)
    res = full_linearise(chart, X)
    assert res.status == "ok"
    assert res.residual < 1e-4
