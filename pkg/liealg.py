"""
Matrix Lie algebra toolkit for the bundled sl3/sl4 cases

sl2-triples, the Dynkin grading of ad_h, the normalized trace form,
centralizers by exact null spaces, Slodowy slice charts and the restriction
of invariant polynomials to the slice. Case data is read from the JSON
fixtures under fixtures/ and validated when loaded.
"""

import json
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import sympy

import scalars
from errors import FixtureMismatchError, UnknownCaseError, UnsupportedCaseError
from models import CheckReport
from scalars import FieldScalar
from wb_types import CaseFixture

# ===== Config =====
FIXTURE_DIR = Path(__file__).resolve().parent / 'fixtures'
FIXTURE_SCHEMA = 1
CASE_IDS = ('sl3-21', 'sl3-21-fkdv', 'sl4-31', 'sl4-22')

logger = logging.getLogger('wpencil.liealg')

MatrixElement = sympy.ImmutableMatrix


@dataclass(frozen=True)
class Sl2Triple:
    e_elt: MatrixElement
    h_elt: MatrixElement
    f_elt: MatrixElement


@dataclass(frozen=True)
class SliceChart:
    """Slodowy slice q(z) = L1 + sum z_i X_i"""
    case_id: str
    coords: Tuple[sympy.Symbol, ...]
    basis: Tuple[MatrixElement, ...]
    eta: Tuple[sympy.Rational, ...]
    slice_matrix: MatrixElement

    @property
    def n_coords(self) -> int:
        return len(self.coords)

    @property
    def degrees(self) -> Tuple[sympy.Rational, ...]:
        return tuple(e + 1 for e in self.eta)


@dataclass(frozen=True)
class RestrictedInvariant:
    """Fixed invariant polynomial on the slice and its relation to the char-poly coefficients c_k"""
    name: str
    expr: sympy.Expr
    char_poly: sympy.Expr


@dataclass(frozen=True)
class NilpotentCase:
    case_id: str
    dim: int
    n: int
    rank: int
    kappa: sympy.Rational
    triple: Sl2Triple
    K1: MatrixElement
    chart: SliceChart
    invariants: Tuple[RestrictedInvariant, ...]
    fixture: CaseFixture = field(compare=False, repr=False)

    def coord(self, name: str) -> sympy.Symbol:
        for s in self.chart.coords:
            if s.name == name:
                return s
        raise KeyError(name)

    def invariant(self, name: str) -> RestrictedInvariant:
        for inv in self.invariants:
            if inv.name == name:
                return inv
        raise KeyError(name)


# ==========================================
# MATRIX HELPERS
# ==========================================
def matrix_unit(n: int, i: int, j: int) -> MatrixElement:
    """epsilon_{i,j} with 1-based indices"""
    m = sympy.zeros(n, n)
    m[i - 1, j - 1] = 1
    return sympy.ImmutableMatrix(m)


def bracket(a: sympy.MatrixBase, b: sympy.MatrixBase) -> sympy.Matrix:
    return (a * b - b * a).applyfunc(sympy.expand)


def parse_matrix(rows: Sequence[Sequence[str]], symbols: Optional[Dict[str, sympy.Symbol]] = None) -> MatrixElement:
    return sympy.ImmutableMatrix([[scalars.parse_expr(x, symbols) for x in row] for row in rows])


def is_zero_matrix(m: sympy.MatrixBase) -> bool:
    return all(sympy.expand(x) == 0 for x in m)


def trace_form(a: sympy.MatrixBase, b: sympy.MatrixBase, kappa: Any = 1) -> sympy.Expr:
    """kappa * tr(ab), expanded; entries may be symbolic"""
    return sympy.expand(sympy.sympify(kappa) * (a * b).trace())


def normalized_form(a: MatrixElement, b: MatrixElement, case: NilpotentCase) -> FieldScalar:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return FieldScalar.from_sympy(trace_form(a, b, case.kappa))


def _flatten(m: sympy.MatrixBase) -> List[FieldScalar]:
    return [FieldScalar.from_sympy(x) for x in m]


def _unflatten(vec: Sequence[FieldScalar], n: int) -> MatrixElement:
    return sympy.ImmutableMatrix(n, n, [v.to_sympy() for v in vec])


def centralizer_basis(x: MatrixElement) -> List[MatrixElement]:
    """Basis of ker ad_x inside sl_n, from an exact null space"""
    n = x.shape[0]
    rows: List[List[FieldScalar]] = []
    units = [matrix_unit(n, i + 1, j + 1) for i in range(n) for j in range(n)]
    images = [_flatten(bracket(x, u)) for u in units]
    for k in range(n * n):
        rows.append([img[k] for img in images])
    rows.append([FieldScalar.one() if i == j else FieldScalar.zero() for i in range(n) for j in range(n)])
    return [_unflatten(v, n) for v in scalars.nullspace(rows)]


def span_rank(elements: Sequence[MatrixElement]) -> int:
    if not elements:
        return 0
    vectors = [_flatten(e) for e in elements]
    return scalars.rank([list(col) for col in zip(*vectors)])


def is_regular_semisimple(x: MatrixElement) -> bool:
    """n distinct eigenvalues, i.e. squarefree characteristic polynomial"""
    mu = sympy.Symbol('mu')
    poly = sympy.Poly(x.charpoly(mu).as_expr(), mu)
    return sympy.discriminant(poly) != 0


def h_weights(case: NilpotentCase) -> List[sympy.Rational]:
    h = case.triple.h_elt
    if not h.is_diagonal():
        raise UnsupportedCaseError(f"{case.case_id}: grading needs a diagonal h")
    return [sympy.nsimplify(h[i, i]) for i in range(h.shape[0])]


def grading_decompose(x: MatrixElement, case: NilpotentCase) -> Dict[sympy.Rational, MatrixElement]:
    """Split x into ad_h eigencomponents; the matrix unit e_ij has weight h_i - h_j"""
    weights = h_weights(case)
    n = len(weights)
    parts: Dict[sympy.Rational, sympy.Matrix] = {}
    for i in range(n):
        for j in range(n):
            if x[i, j] == 0:
                continue
            lam = weights[i] - weights[j]
            parts.setdefault(lam, sympy.zeros(n, n))[i, j] = x[i, j]
    return {lam: sympy.ImmutableMatrix(m) for lam, m in sorted(parts.items())}


def grading_basis(case: NilpotentCase) -> Dict[sympy.Rational, List[MatrixElement]]:
    """Graded basis of sl_n: off-diagonal units by weight, traceless diagonals at weight 0"""
    weights = h_weights(case)
    n = len(weights)
    graded: Dict[sympy.Rational, List[MatrixElement]] = {}
    for i in range(n):
        for j in range(n):
            if i != j:
                graded.setdefault(weights[i] - weights[j], []).append(matrix_unit(n, i + 1, j + 1))
    cartan = [sympy.ImmutableMatrix(matrix_unit(n, k, k) - matrix_unit(n, k + 1, k + 1)) for k in range(1, n)]
    graded.setdefault(sympy.Integer(0), []).extend(cartan)
    return dict(sorted(graded.items()))


# ==========================================
# VERIFICATIONS
# ==========================================
def verify_sl2(triple: Sl2Triple) -> List[CheckReport]:
    e, h, f = triple.e_elt, triple.h_elt, triple.f_elt
    residuals = {
        '[h,e]=e': bracket(h, e) - e,
        '[h,f]=-f': bracket(h, f) + f,
        '[e,f]=2h': bracket(e, f) - 2 * h,
    }
    return [CheckReport(name, is_zero_matrix(r), residual=sympy.ImmutableMatrix(r).tolist())
            for name, r in residuals.items()]


def slice_basis(q: MatrixElement, coords: Sequence[sympy.Symbol]) -> Tuple[MatrixElement, ...]:
    return tuple(sympy.ImmutableMatrix(q.diff(z)) for z in coords)


def power_sums(q: sympy.MatrixBase) -> Dict[int, sympy.Expr]:
    """tr(q^k) for k = 2..dim"""
    out = {}
    power = sympy.Matrix(q)
    for k in range(2, q.shape[0] + 1):
        power = (power * q).applyfunc(sympy.expand)
        out[k] = sympy.expand(power.trace())
    return out


def char_poly_coefficients(q: sympy.MatrixBase) -> List[sympy.Expr]:
    """Coefficients of det(mu I - q), highest power of mu first"""
    mu = sympy.Symbol('mu')
    poly = sympy.Poly(sympy.expand((mu * sympy.eye(q.shape[0]) - q).det(method='berkowitz')), mu)
    return [sympy.expand(c) for c in poly.all_coeffs()]


def restricted_invariants(case: NilpotentCase) -> List[sympy.Expr]:
    """Fixed invariants on the slice, each verified against its char-poly relation"""
    coeffs = char_poly_coefficients(case.chart.slice_matrix)
    values = {sympy.Symbol(f"c{k}"): c for k, c in enumerate(coeffs) if k > 0}
    out = []
    for inv in case.invariants:
        residual = sympy.expand(inv.char_poly.xreplace(values) - inv.expr)
        if residual != 0:
            logger.error(f"{case.case_id}: {inv.name} != {inv.char_poly}")
            raise FixtureMismatchError(f"restricted invariant {inv.name} does not match {inv.char_poly}",
                                       stage='restricted_invariants',
                                       detail={'invariant': inv.name, 'residual': str(residual)})
        out.append(sympy.expand(inv.expr))
    return out


def invariant_jacobian_rank(case: NilpotentCase, seed: int = 42) -> int:
    coords = case.chart.coords
    point = scalars.sample_points(coords, 1, seed)[0]
    jac = sympy.Matrix([[sympy.diff(inv.expr, z) for z in coords] for inv in case.invariants]).xreplace(point)
    return scalars.rank(scalars.to_field_rows(jac.tolist()))


def ad_invariance_residuals(case: NilpotentCase, seed: int = 42, count: int = 5) -> List[FieldScalar]:
    """kappa tr([x,y] z) + kappa tr(y [x,z]) for random triples of basis elements"""
    graded = [b for basis in grading_basis(case).values() for b in basis]
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        x, y, z = (graded[int(k)] for k in rng.integers(0, len(graded), size=3))
        out.append(normalized_form(sympy.ImmutableMatrix(bracket(x, y)), z, case)
                   + normalized_form(y, sympy.ImmutableMatrix(bracket(x, z)), case))
    return out


def slice_homogeneity(case: NilpotentCase) -> List[CheckReport]:
    """Entry (a,b) of q(z) has weight w = h_a - h_b and must be homogeneous of degree 1 - w"""
    weights = h_weights(case)
    s = sympy.Symbol('s')
    scaling = {z: s ** d * z for z, d in zip(case.chart.coords, case.chart.degrees)}
    reports = []
    q = case.chart.slice_matrix
    for a in range(q.shape[0]):
        for b in range(q.shape[1]):
            entry = q[a, b]
            if entry == 0:
                continue
            expected = 1 - (weights[a] - weights[b])
            residual = sympy.expand(entry.xreplace(scaling) - s ** expected * entry)
            reports.append(CheckReport(f"q[{a + 1},{b + 1}] degree {expected}", residual == 0, residual=residual))
    return reports


def verify_opposite_cartan(case: NilpotentCase) -> List[CheckReport]:
    doc = case.fixture.get('opposite_cartan')
    if not doc:
        raise UnsupportedCaseError(f"{case.case_id} has no opposite Cartan data", stage='opposite_cartan')
    h_prime = sympy.ImmutableMatrix(case.triple.e_elt + case.K1)
    basis = [parse_matrix(m) for m in doc['basis']]
    reports = [CheckReport('L1+K1 regular semisimple', is_regular_semisimple(h_prime))]
    for k, b in enumerate(basis, start=1):
        reports.append(CheckReport(f"basis[{k}] commutes with L1+K1", is_zero_matrix(bracket(h_prime, b))))
    pairwise = all(is_zero_matrix(bracket(a, b)) for a in basis for b in basis)
    reports.append(CheckReport('basis is abelian', pairwise))
    n = h_prime.shape[0]
    reports.append(CheckReport('basis spans a Cartan subalgebra', span_rank(basis) == n - 1,
                               details={'rank': span_rank(basis), 'expected': n - 1}))
    reports.append(CheckReport('centralizer of L1+K1 has dimension rank',
                               len(centralizer_basis(h_prime)) == n - 1))
    return reports


# ==========================================
# CASE LOADING
# ==========================================
def _check(condition: bool, case_id: str, message: str) -> None:
    if not condition:
        logger.error(f"{case_id}: {message}")
        raise FixtureMismatchError(f"{case_id}: {message}", stage='load')


def _build_case(doc: CaseFixture) -> NilpotentCase:
    case_id = doc['case_id']
    if doc.get('schema') != FIXTURE_SCHEMA:
        raise FixtureMismatchError(f"{case_id}: unsupported fixture schema {doc.get('schema')}", stage='load')
    coords = tuple(sympy.Symbol(name) for name in doc['slice']['coords'])
    symbols = {s.name: s for s in coords}
    triple = Sl2Triple(*(parse_matrix(doc['triple'][k]) for k in ('e', 'h', 'f')))
    q = parse_matrix(doc['slice']['matrix'], symbols)
    eta = tuple(sympy.Rational(x) for x in doc['slice']['eta'])
    chart = SliceChart(case_id, coords, slice_basis(q, coords), eta, q)
    kappa = sympy.Rational(doc['kappa'])
    invariants = tuple(
        RestrictedInvariant(inv['name'], sympy.expand(scalars.parse_expr(inv['expr'], symbols)),
                            scalars.parse_expr(inv['char_poly']))
        for inv in doc['invariants'])
    case = NilpotentCase(case_id=case_id, dim=int(doc['dim']), n=int(doc['n']), rank=int(doc['rank']),
                         kappa=kappa, triple=triple, K1=parse_matrix(doc['K1']), chart=chart,
                         invariants=invariants, fixture=doc)
    _validate(case)
    return case


def _validate(case: NilpotentCase) -> None:
    cid = case.case_id
    e, h, f = case.triple.e_elt, case.triple.h_elt, case.triple.f_elt
    _check(all(r.passed for r in verify_sl2(case.triple)), cid, "sl2 relations fail")
    for name, m in (('e', e), ('h', h), ('f', f), ('K1', case.K1)):
        _check(m.trace() == 0, cid, f"{name} is not traceless")
    _check(case.chart.n_coords == case.n, cid, f"slice has {case.chart.n_coords} coordinates, expected {case.n}")
    _check(len(case.invariants) == case.rank, cid, "number of invariants differs from rank")
    q0 = case.chart.slice_matrix.xreplace({z: 0 for z in case.chart.coords})
    _check(q0 == e, cid, "q(0) differs from L1")
    _check(normalized_form(e, f, case) == 1, cid, "kappa does not normalize (L1, f) to 1")
    for k, (x, eta) in enumerate(zip(case.chart.basis, case.chart.eta), start=1):
        _check(x.trace() == 0, cid, f"X{k} is not traceless")
        _check(is_zero_matrix(bracket(f, x)), cid, f"X{k} does not centralize f")
        _check(is_zero_matrix(bracket(h, x) + eta * x), cid, f"ad_h X{k} != -{eta} X{k}")
    _check(span_rank(list(case.chart.basis)) == case.n, cid, "slice basis is not independent")


@lru_cache(maxsize=None)
def _load_cached(case_id: str, fixture_dir: str) -> NilpotentCase:
    path = Path(fixture_dir) / f"{case_id}.json"
    logger.debug(f"loading case fixture {path}")
    with open(path, 'r', encoding='utf-8') as fh:
        doc = json.load(fh)
    return _build_case(doc)


def load_case(case_id: str, fixture_dir: Optional[Path] = None) -> NilpotentCase:
    if case_id not in CASE_IDS:
        raise UnknownCaseError(f"unknown case '{case_id}'; available: {', '.join(CASE_IDS)}", stage='load')
    return _load_cached(case_id, str(fixture_dir or FIXTURE_DIR))


def available_cases() -> List[str]:
    return list(CASE_IDS)
