import numpy as np
import pytest
import sympy

import liealg
import scalars
from conftest import fixture_display
from errors import NonQuadraticRemainderError, PreconditionError
from frobgeom import (ContravariantMetric, FrobeniusPotential, christoffel, curvature_residual, euler_residual,
                      flat_pencil_check, frobenius_algebra_checks, intersection_form, levi_civita_consistency,
                      lie_derivative_metric, matrix_check, metric_from_potential, qfpm_check, solve_tau,
                      vector_bracket, wdvv_residual)

ALL_CASES = liealg.available_cases()


def _metrics(case_id):
    tensors = fixture_display(case_id)
    coords = tensors.space.coords
    return tensors, ContravariantMetric(tensors.Omega2, coords), ContravariantMetric(tensors.Omega1, coords)


def _potential(case_id):
    tensors = fixture_display(case_id)
    doc = liealg.load_case(case_id).fixture['frobenius']
    return tensors, FrobeniusPotential.from_fixture(doc, tensors.space.coords)


def _finite_difference_christoffel(metric, point, h=1e-5):
    """Contravariant Christoffels from central differences of the covariant metric"""
    evaluator = metric.evaluator()
    coords = metric.coords
    n = metric.dim
    base = {c: float(point[c]) for c in coords}
    dg = np.zeros((n, n, n), dtype=complex)
    for k, c in enumerate(coords):
        up, down = dict(base), dict(base)
        up[c] += h
        down[c] -= h
        dg[k] = (np.linalg.inv(evaluator.omega(up)) - np.linalg.inv(evaluator.omega(down))) / (2 * h)
    om = evaluator.omega(base)
    gamma = 0.5 * np.einsum('mk,ikj->mij', om, dg) + 0.5 * np.einsum('mk,jki->mij', om, dg) \
        - 0.5 * np.einsum('mk,kij->mij', om, dg)
    return -np.einsum('im,jmk->ijk', om, gamma)


@pytest.fixture
def sl3_metric():
    _, omega2, _ = _metrics('sl3-21')
    return omega2


def test_numeric_christoffels_match_finite_differences(sl3_metric):
    for point in scalars.sample_points(list(sl3_metric.coords), 3, seed=7):
        numeric = sl3_metric.evaluator().christoffel(point)
        assert np.max(np.abs(numeric - _finite_difference_christoffel(sl3_metric, point))) < 1e-6


def test_symbolic_and_numeric_christoffels_agree(sl3_metric):
    symbolic = sympy.lambdify(sl3_metric.coords, christoffel(sl3_metric), modules='numpy')
    point = scalars.sample_points(list(sl3_metric.coords), 1, seed=3)[0]
    args = [float(point[c]) for c in sl3_metric.coords]
    expected = np.broadcast_to(np.array(symbolic(*args), dtype=complex), (2, 2, 2))
    assert np.max(np.abs(sl3_metric.evaluator().christoffel(point) - expected)) < 1e-10


def test_curved_metric_is_detected():
    x, y = sympy.symbols('x y', positive=True)
    metric = ContravariantMetric(sympy.diag(1, x), (x, y))
    assert curvature_residual(metric) > 1e-3


def test_metric_shape_is_checked():
    x = sympy.Symbol('x')
    with pytest.raises(PreconditionError):
        ContravariantMetric(sympy.eye(2), (x,))


@pytest.mark.parametrize('case_id', ALL_CASES)
def test_display_pencil_is_flat(case_id):
    _, omega2, omega1 = _metrics(case_id)
    reports = flat_pencil_check(omega2, omega1)
    assert all(r.passed for r in reports), [(r.name, r.residual) for r in reports if not r.passed]


@pytest.mark.parametrize('case_id', ALL_CASES)
def test_display_pencil_is_quasihomogeneous(case_id):
    tensors, omega2, omega1 = _metrics(case_id)
    doc = liealg.load_case(case_id).fixture['frobenius']
    tau = solve_tau(omega1, [tensors.unity.get(name, 0) for name in tensors.space.names])
    assert not sympy.expand(tau - tensors.space.parse(doc['tau'])).free_symbols
    data = qfpm_check(omega2, omega1, tau, sympy.Rational(doc['charge']))
    assert data.passed, [(c.name, c.residual) for c in data.checks if not c.passed]
    assert data.charge == sympy.Rational(doc['charge'])
    assert data.e == [tensors.unity.get(name, 0) for name in tensors.space.names]


def test_tau_needs_a_closed_form():
    t1, t2 = sympy.symbols('t1 t2')
    omega1 = ContravariantMetric(sympy.Matrix([[0, 1], [1, 0]]), (t1, t2))
    assert solve_tau(omega1, [0, 1]) == t1
    assert solve_tau(omega1, [t1, t2]) == t1 * t2
    with pytest.raises(PreconditionError):
        solve_tau(omega1, [t1, 0])


def test_hydrodynamic_christoffel_consistency():
    u = sympy.Symbol('u', positive=True)
    metric = ContravariantMetric(sympy.Matrix([[2 * u]]), (u,))
    assert levi_civita_consistency(metric, [[[sympy.Integer(1)]]]).passed
    assert not levi_civita_consistency(metric, [[[sympy.Integer(2)]]]).passed


def test_vector_fields():
    x, y = sympy.symbols('x y')
    assert vector_bracket([1, 0], [x, 0], (x, y)) == [1, 0]
    L = lie_derivative_metric([x, y], sympy.eye(2), (x, y))
    assert L == -2 * sympy.eye(2)


def test_hurwitz_potential():
    tensors, Fp = _potential('sl3-21')
    t1, t2 = tensors.space.coords
    Pi, _ = metric_from_potential(Fp)
    assert Pi == sympy.Matrix([[0, 1], [1, 0]])
    assert sympy.expand(euler_residual(Fp).expr - t1 ** 2 / 12) == 0
    assert matrix_check('intersection', intersection_form(Fp).matrix, tensors.Omega2).passed
    assert wdvv_residual(Fp) == 0.0


@pytest.mark.parametrize('case_id', ['sl4-31', 'sl4-22'])
def test_three_dimensional_potentials(case_id):
    tensors, Fp = _potential(case_id)
    assert wdvv_residual(Fp) < 1e-9
    assert matrix_check('Pi^-1', metric_from_potential(Fp)[0].inv(), tensors.Omega1).passed
    assert matrix_check('intersection', intersection_form(Fp).matrix, tensors.Omega2).passed
    expected = tensors.space.parse(liealg.load_case(case_id).fixture['frobenius']['remainder'])
    assert sympy.expand(euler_residual(Fp).expr - expected) == 0


@pytest.mark.parametrize('case_id', ALL_CASES)
def test_frobenius_algebra(case_id):
    _, Fp = _potential(case_id)
    assert all(r.passed for r in frobenius_algebra_checks(Fp))


def test_remainder_above_quadratic():
    t = sympy.Symbol('t1')
    Fp = FrobeniusPotential(t ** 4, (t,), 't1', {'t1': t}, sympy.Integer(0))
    with pytest.raises(NonQuadraticRemainderError):
        euler_residual(Fp)


def test_non_constant_pairing():
    t = sympy.Symbol('t1')
    Fp = FrobeniusPotential(t ** 4, (t,), 't1', {'t1': t}, sympy.Integer(0))
    with pytest.raises(PreconditionError):
        metric_from_potential(Fp)
    t1, t2 = sympy.symbols('t1 t2')
    Fp = FrobeniusPotential(t1 ** 2 * t2 ** 2 / 2, (t1, t2), 't1', {'t1': t1, 't2': t2}, sympy.Integer(0))
    with pytest.raises(PreconditionError):
        metric_from_potential(Fp)
    Fp = FrobeniusPotential(t ** 3, (t,), 't1', {'t1': t}, sympy.Integer(0))
    assert metric_from_potential(Fp)[0] == sympy.Matrix([[6]])


def test_matrix_check_reports_entries():
    x = sympy.Symbol('x')
    report = matrix_check('m', sympy.Matrix([[x, 1]]), sympy.Matrix([[x, 2]]))
    assert not report.passed
    assert report.residual == ['1,2']
