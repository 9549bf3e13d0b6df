import dataclasses
import json

import numpy as np
import pytest
import sympy

import liealg
from centralinv import (LAMBDA, CentralInvariantReport, canonical_roots, central_invariants, char_poly,
                        format_value, rescale_check, scaled)
from conftest import fixture_display
from errors import PreconditionError, RootCollisionError
from models import CheckReport

EXPECTED = {
    'sl3-21': (['-1/24', '-1/24'], True),
    'sl3-21-fkdv': (['-1/54', '-1/54'], True),
    'sl4-31': (['-1/96', '-1/96', '-1/96'], True),
    'sl4-22': (['0', '-1/48', '-1/48'], False),
}


@pytest.mark.parametrize('case_id', sorted(EXPECTED))
def test_central_invariants(case_id):
    values, topological = EXPECTED[case_id]
    expected = [sympy.Rational(v) for v in values]
    report = central_invariants(fixture_display(case_id), case_id, expected=expected)
    assert report.matches(), report.invariants
    assert report.constant
    assert report.topological is topological
    assert all(c.passed for c in report.to_checks())


def test_fixture_values_are_the_expected_ones():
    for case_id, (values, topological) in EXPECTED.items():
        doc = liealg.load_case(case_id).fixture['central_invariants']
        assert doc['values'] == values
        assert doc['topological'] is topological


def test_rescaling_inverts_factor():
    tensors = fixture_display('sl3-21')
    base = central_invariants(tensors, 'sl3-21')
    assert rescale_check(tensors, base, -24).passed
    rescaled = central_invariants(scaled(tensors, sympy.Integer(-24)), 'sl3-21')
    assert all(abs(c - 1 / 576) < 1e-12 for c in rescaled.invariants)


def test_zero_rescaling_is_rejected():
    tensors = fixture_display('sl3-21')
    base = central_invariants(tensors, 'sl3-21')
    with pytest.raises(PreconditionError):
        rescale_check(tensors, base, 0)


def test_dispersionless_terms_must_vanish():
    tensors = fixture_display('sl3-21')
    t1 = tensors.space.jet('t1')
    with pytest.raises(PreconditionError):
        central_invariants(dataclasses.replace(tensors, F2=sympy.Matrix([[0, t1], [-t1, 0]])))


def test_characteristic_polynomial():
    tensors = fixture_display('sl3-21')
    t1, t2 = tensors.space.coords
    psi = char_poly(tensors.Omega2, tensors.Omega1)
    assert sympy.expand(psi - (t1 / 3 - (t2 - LAMBDA) ** 2)) == 0
    with pytest.raises(PreconditionError):
        char_poly(sympy.eye(4), sympy.eye(4))


def test_canonical_roots():
    lam = LAMBDA
    t = sympy.Symbol('t')
    roots = canonical_roots(lam ** 2 - 3 * lam + 2, {})
    assert [round(z.real, 12) for z in roots] == [1.0, 2.0]
    with pytest.raises(RootCollisionError):
        canonical_roots((lam - t) ** 2, {t: sympy.Rational(1, 2)})
    with pytest.raises(RootCollisionError):
        canonical_roots(sympy.expand((1 - lam) ** 2), {})
    with pytest.raises(PreconditionError):
        canonical_roots(sympy.expand(t * lam ** 2 + lam - 1), {t: 0})


def test_format_value():
    assert format_value(complex(-0.5, 0)) == '-0.5'
    assert format_value(complex(1, 2)) == '1+2i'


@pytest.mark.parametrize('case_id', sorted(EXPECTED))
def test_first_structure_tensors_are_unity_derivatives(case_id):
    tensors = fixture_display(case_id)
    along_unity = lambda m: m.applyfunc(
        lambda x: sum(v * sympy.diff(x, t) for t, v in zip(tensors.space.coords,
                                                           [tensors.unity.get(n, 0) for n in tensors.space.names])))
    assert (tensors.Omega1 - along_unity(tensors.Omega2)).applyfunc(sympy.simplify) == sympy.zeros(*tensors.Omega1.shape)
    assert (tensors.S12 - along_unity(tensors.S22)).applyfunc(sympy.simplify) == sympy.zeros(*tensors.S12.shape)


def test_sl4_31_value_at_a_point_off_the_t2_axis():
    tensors = fixture_display('sl4-31')
    t1, t2, t3 = tensors.space.coords
    psi = char_poly(tensors.Omega2, tensors.Omega1)
    point = {t1: sympy.Integer(2), t2: sympy.Integer(1), t3: sympy.Rational(-64, 27)}
    u = point[t1] - 1
    assert sympy.expand(psi.subs(point).subs(LAMBDA, u)) == 0
    grad = sympy.Matrix([sympy.diff(psi, t) for t in (t1, t2, t3)]).subs(point).subs(LAMBDA, u)
    q = (tensors.S22 - LAMBDA * tensors.S12).subs(point).subs(LAMBDA, u)
    d_lam = sympy.diff(psi, LAMBDA).subs(point).subs(LAMBDA, u)
    value = d_lam ** 2 * (grad.T * q * grad)[0] / (3 * (grad.T * tensors.Omega1 * grad)[0] ** 2)
    assert sympy.nsimplify(value) == sympy.Rational(-1, 96)


def test_constancy_ignores_root_order():
    report = CentralInvariantReport('sl4-22', values=[[0j, -1 / 48 + 0j, -1 / 48 + 0j],
                                                      [-1 / 48 + 0j, -1 / 48 + 0j, 0j],
                                                      [-1 / 48 + 0j, 0j, -1 / 48 + 0j]])
    assert report.deviation == 0
    assert report.constant is True
    assert report.topological is False
    moving = CentralInvariantReport('x', values=[[-1 / 48 + 0j, 0j], [-1 / 24 + 0j, 0j]])
    assert moving.constant is False


def test_checks_serialize_to_json():
    report = central_invariants(fixture_display('sl3-21'), 'sl3-21', expected=[sympy.Rational(-1, 24)] * 2)
    assert report.topological is True
    doc = json.dumps([c.to_dict() for c in report.to_checks()])
    assert '"topological": true' in doc
    check = CheckReport('numpy scalars', np.bool_(True), residual=np.float64(0.5),
                        details={'flag': np.bool_(False), 'count': np.int64(3), 'values': [sympy.Rational(1, 2)]})
    assert json.loads(json.dumps(check.to_dict())) == {
        'name': 'numpy scalars', 'passed': True, 'residual': '0.5',
        'details': {'flag': False, 'count': 3, 'values': ['1/2']}}
