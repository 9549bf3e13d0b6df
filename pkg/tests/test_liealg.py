from fractions import Fraction

import dataclasses

import pytest
import sympy

import liealg
from errors import FixtureMismatchError, UnknownCaseError, UnsupportedCaseError
from liealg import bracket, matrix_unit

ALL_CASES = liealg.available_cases()


@pytest.mark.parametrize('case_id', ALL_CASES)
def test_sl2_triple(case_id):
    case = liealg.load_case(case_id)
    assert all(r.passed for r in liealg.verify_sl2(case.triple))


@pytest.mark.parametrize('case_id', ALL_CASES)
def test_slice_is_homogeneous(case_id):
    case = liealg.load_case(case_id)
    reports = liealg.slice_homogeneity(case)
    assert reports
    assert all(r.passed for r in reports), [r.name for r in reports if not r.passed]


@pytest.mark.parametrize('case_id', ALL_CASES)
def test_restricted_invariants_match_char_poly(case_id):
    case = liealg.load_case(case_id)
    invariants = liealg.restricted_invariants(case)
    assert len(invariants) == case.rank
    assert liealg.invariant_jacobian_rank(case) == case.rank


def test_sl3_invariants_as_trace_and_determinant(sl3):
    q = sl3.chart.slice_matrix
    p1, p2 = liealg.restricted_invariants(sl3)
    assert sympy.expand(p1 - (q * q).trace() / 2) == 0
    assert sympy.expand(p2 - q.det() / 2) == 0


def test_sl3_relations_use_char_poly_coefficients(sl3):
    c = liealg.char_poly_coefficients(sl3.chart.slice_matrix)
    p1, p2 = liealg.restricted_invariants(sl3)
    assert c[1] == 0
    assert sympy.expand(p1 + c[2]) == 0
    assert sympy.expand(p2 + c[3] / 2) == 0


def test_wrong_char_poly_relation_is_rejected(sl3):
    first, *rest = sl3.invariants
    bad = dataclasses.replace(first, char_poly=sympy.Symbol('c2'))
    with pytest.raises(FixtureMismatchError):
        liealg.restricted_invariants(dataclasses.replace(sl3, invariants=(bad, *rest)))


@pytest.mark.parametrize('case_id', ALL_CASES)
def test_trace_form_is_invariant(case_id):
    case = liealg.load_case(case_id)
    assert all(r.is_zero() for r in liealg.ad_invariance_residuals(case))


def test_power_sums_and_characteristic_polynomial():
    q = sympy.diag(1, 2, -3)
    assert liealg.power_sums(q) == {2: 14, 3: -18}
    assert liealg.char_poly_coefficients(sympy.diag(1, 2)) == [1, -3, 2]


def test_centralizer_of_regular_nilpotent_in_sl3():
    e = sympy.ImmutableMatrix(matrix_unit(3, 1, 2) + matrix_unit(3, 2, 3))
    basis = liealg.centralizer_basis(e)
    assert len(basis) == 2
    assert all(liealg.is_zero_matrix(bracket(e, b)) for b in basis)


def test_grading_basis_covers_sl_n(sl3):
    graded = liealg.grading_basis(sl3)
    assert sum(len(v) for v in graded.values()) == 8
    h = sl3.triple.h_elt
    for weight, elements in graded.items():
        for x in elements:
            assert liealg.is_zero_matrix(bracket(h, x) - weight * x)


def test_regular_semisimple():
    assert liealg.is_regular_semisimple(sympy.ImmutableMatrix(sympy.diag(1, -1, 0)))
    assert not liealg.is_regular_semisimple(sympy.ImmutableMatrix(sympy.diag(1, 1, -2)))


def test_opposite_cartan_for_sl3(sl3):
    reports = liealg.verify_opposite_cartan(sl3)
    assert all(r.passed for r in reports), [r.name for r in reports if not r.passed]


def test_opposite_cartan_missing_for_sl4():
    with pytest.raises(UnsupportedCaseError):
        liealg.verify_opposite_cartan(liealg.load_case('sl4-31'))


def test_unknown_case():
    with pytest.raises(UnknownCaseError):
        liealg.load_case('sl5-32')


def test_load_is_cached():
    assert liealg.load_case('sl4-22') is liealg.load_case('sl4-22')


def test_normalized_form_pairs_nilpotent_with_f(sl3):
    e, h, f = sl3.triple.e_elt, sl3.triple.h_elt, sl3.triple.f_elt
    assert liealg.normalized_form(e, f, sl3) == 1
    assert liealg.normalized_form(h, h, sl3) == Fraction(1, 2)
    assert liealg.normalized_form(e, e, sl3).is_zero()
    with pytest.raises(ValueError):
        liealg.normalized_form(e, sympy.ImmutableMatrix(sympy.eye(2)), sl3)


def test_grading_decompose_by_ad_h_weight(sl3):
    e, h = sl3.triple.e_elt, sl3.triple.h_elt
    assert list(liealg.grading_decompose(e, sl3)) == [1]
    assert list(liealg.grading_decompose(matrix_unit(3, 3, 1), sl3)) == [-1]
    assert list(liealg.grading_decompose(h, sl3)) == [0]

    x = sl3.chart.slice_matrix.subs({z: k + 2 for k, z in enumerate(sl3.chart.coords)})
    parts = liealg.grading_decompose(x, sl3)
    assert sympy.ImmutableMatrix(sum(parts.values(), sympy.zeros(3, 3))) == x
    for lam, part in parts.items():
        assert bracket(h, part) == lam * part
