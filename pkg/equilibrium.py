"""
Reduction to the space N of common equilibrium points

N is cut out by derivative conditions on the restricted invariants. The
reduced bracket is the retained minor restricted to N (rewritten in the
locus parameters when N is parametrized), truncated at delta'''. The
dispersionless Dirac correction is computed separately and reported.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import sympy

import scalars
from diffalg import DiffOperator, EvolutionaryField, JetSpace
from dsred import ADAPTED_CHART, Pencil, chart_maps, slice_space
from errors import FixtureMismatchError, PreconditionError, SingularSystemError
from liealg import NilpotentCase
from models import CheckReport
from poisson import LocalPoissonOperator, coordinate_field, extract_dispersion, lie_derivative_bivector

# ===== Config =====
REDUCED_DELTA_ORDER = 3

logger = logging.getLogger('wpencil.equilibrium')


@dataclass
class EquilibriumLocus:
    case_id: str
    chart: str
    space: JetSpace
    invariants: Tuple[str, ...]
    constraints: Tuple[sympy.Expr, ...]
    constrained: Tuple[str, ...]
    retained: Tuple[str, ...]
    solution: Dict[str, sympy.Expr]
    parameter_space: JetSpace
    parametrization: Dict[str, sympy.Expr]

    @property
    def substitution(self) -> Dict[str, sympy.Expr]:
        """Every chart coordinate as a function of the locus parameters"""
        out = dict(self.parametrization)
        out.update(self.solution)
        return out

    @property
    def is_trivially_parametrized(self) -> bool:
        params = self.parameter_space
        return all(sympy.expand(expr - params.jet(name)) == 0 if name in params.names else False
                   for name, expr in self.parametrization.items())

    @property
    def is_coordinate_locus(self) -> bool:
        """Constrained coordinates pinned to constants; the retained minor is then a Poisson quotient"""
        return self.is_trivially_parametrized and not any(
            sympy.sympify(v).free_symbols for v in self.solution.values())

    def residuals(self) -> List[sympy.Expr]:
        return [sympy.expand(self.space.substitute_map(c, self.substitution, self.parameter_space, check=False))
                for c in self.constraints]

    def jacobian(self) -> sympy.Matrix:
        """d(retained)/d(parameters)"""
        params = self.parameter_space.coords
        return sympy.Matrix([[sympy.diff(self.parametrization[name], p) for p in params] for name in self.retained])

    def jacobian_rank(self, seed: int = 42) -> int:
        jac = self.jacobian()
        point = scalars.sample_points(list(self.parameter_space.coords), 1, seed)[0]
        return scalars.rank(scalars.to_field_rows(jac.xreplace(point).tolist()))


def equilibrium_constraints(case: NilpotentCase) -> EquilibriumLocus:
    doc = case.fixture['locus']
    chart = doc.get('chart', 'slice')
    if chart == ADAPTED_CHART:
        _, space, _, _ = chart_maps(case)
        inv_doc = case.fixture['chart']['invariants']
        polys = {name: space.parse(inv_doc[name]) for name in doc['invariants']}
    else:
        space = slice_space(case)
        polys = {name: case.invariant(name).expr for name in doc['invariants']}
    constraints = []
    for name in doc['invariants']:
        for c in doc['constrained']:
            d = sympy.expand(sympy.diff(polys[name], space.jet(c)))
            if d != 0 and d not in constraints:
                constraints.append(d)
    params = JetSpace(doc['parameters'], space.max_order, positive=doc.get('positive', []),
                      denominators=case.fixture['reduced'].get('denominators', []))
    locus = EquilibriumLocus(
        case_id=case.case_id, chart=chart, space=space, invariants=tuple(doc['invariants']),
        constraints=tuple(constraints), constrained=tuple(doc['constrained']), retained=tuple(doc['retained']),
        solution={k: params.parse(v) for k, v in doc['solution'].items()},
        parameter_space=params,
        parametrization={k: params.parse(v) for k, v in doc['parametrization'].items()})
    bad = [str(r) for r in locus.residuals() if r != 0]
    if bad:
        logger.error(f"{case.case_id}: locus solution leaves constraints {bad[:2]}")
        raise FixtureMismatchError(f"{case.case_id}: solved branch does not satisfy the constraints",
                                   stage='equilibrium_locus', detail={'residuals': bad})
    return locus


def locus_checks(locus: EquilibriumLocus, seed: int = 42) -> List[CheckReport]:
    names = locus.space.names
    ordered = list(names) == list(locus.retained) + list(locus.constrained)
    return [
        CheckReport('constraints vanish on the branch', all(r == 0 for r in locus.residuals()),
                    details={'constraints': [str(c) for c in locus.constraints]}),
        CheckReport('parametrization has full rank', locus.jacobian_rank(seed) == len(locus.retained)),
        CheckReport('retained coordinates come first', ordered),
    ]


# ==========================================
# REDUCTION
# ==========================================
@dataclass
class ReducedOperator:
    """Restricted minor in the locus parameters; full keeps every delta order"""
    full: LocalPoissonOperator
    truncated: LocalPoissonOperator
    locus: EquilibriumLocus


def _indices(space: JetSpace, names: Sequence[str]) -> List[int]:
    return [space.names.index(n) for n in names]


def _reparametrize(R: LocalPoissonOperator, jac: sympy.Matrix) -> LocalPoissonOperator:
    """Q^{ab} = J_ai o R^{ij} o J_bj"""
    space = R.space
    m = R.dim
    mult = [[DiffOperator.multiplication(jac[a, i]) for i in range(m)] for a in range(m)]
    entries = []
    for a in range(m):
        row = []
        for b in range(m):
            acc = DiffOperator.zero()
            for i in range(m):
                for j in range(m):
                    if mult[a][i].is_zero() or mult[b][j].is_zero() or R.entry(i, j).is_zero():
                        continue
                    acc = acc + space.op_compose(mult[a][i], space.op_compose(R.entry(i, j), mult[b][j]))
            row.append(acc)
        entries.append(row)
    return LocalPoissonOperator(space, entries)


def dirac_reduce(P: LocalPoissonOperator, locus: EquilibriumLocus,
                 max_delta: int = REDUCED_DELTA_ORDER) -> ReducedOperator:
    space = P.space
    if list(space.names) != list(locus.space.names):
        raise PreconditionError(f"operator lives on {list(space.names)}, locus on {list(locus.space.names)}",
                                stage='dirac_reduction')
    retained = _indices(space, locus.retained)
    target = locus.parameter_space
    mapping = locus.substitution
    entries = [[P.entry(i, j).map(lambda c: space.substitute_map(c, mapping, target, check=False))
                for j in retained] for i in retained]
    R = LocalPoissonOperator(target, entries)
    if not locus.is_trivially_parametrized:
        jac = locus.jacobian().inv().applyfunc(sympy.expand)
        R = _reparametrize(R, jac)
    for row in R.entries:
        for op in row:
            for c in op.coeffs:
                target.check_denominators(c)
    logger.debug(f"{locus.case_id}: reduced operator of order {R.order} on {list(target.names)}")
    return ReducedOperator(full=R, truncated=R.truncate(max_delta), locus=locus)


@dataclass
class DiracReport:
    mixed_F: sympy.Matrix
    mixed_Omega: sympy.Matrix
    constrained_F: sympy.Matrix
    correction: sympy.Matrix
    corrected_F: sympy.Matrix

    @property
    def vanishes(self) -> bool:
        return all(x == 0 for x in self.correction)

    def to_checks(self) -> List[CheckReport]:
        return [
            CheckReport('dispersionless Dirac correction vanishes', self.vanishes,
                        residual=self.correction.tolist() if not self.vanishes else 0),
            CheckReport('mixed F block on N (info)', True, details={'F': str(self.mixed_F.tolist())}),
            CheckReport('mixed Omega block on N (info)', True, details={'Omega': str(self.mixed_Omega.tolist())}),
        ]


def dirac_correction(P: LocalPoissonOperator, locus: EquilibriumLocus) -> DiracReport:
    """P^{a beta} (P^{beta gamma})^-1 P^{gamma b} on the F blocks, at jet order 0 on N"""
    data = extract_dispersion(P.dispersionless())
    ret = _indices(P.space, locus.retained)
    con = _indices(P.space, locus.constrained)
    mapping = locus.substitution
    target = locus.parameter_space
    on_n = lambda m: m.applyfunc(lambda c: P.space.substitute_map(c, mapping, target, check=False))
    F = on_n(data.F)
    Omega = on_n(data.Omega)
    mixed = F.extract(ret, con)
    block = F.extract(con, con)
    if all(x == 0 for x in mixed):
        correction = sympy.zeros(len(ret), len(ret))
    else:
        if sympy.expand(block.det()) == 0:
            raise SingularSystemError(f"{locus.case_id}: constrained F block is singular on N",
                                      stage='dirac_reduction', detail={'block': str(block.tolist())})
        correction = (mixed * block.inv() * F.extract(con, ret)).applyfunc(sympy.simplify)
    corrected = (F.extract(ret, ret) - correction).applyfunc(sympy.expand)
    return DiracReport(mixed, Omega.extract(ret, con), block, correction, corrected)


def reduced_fixture_checks(case: NilpotentCase, reduced: ReducedOperator) -> List[CheckReport]:
    doc = case.fixture['reduced']
    space = reduced.truncated.space
    data = extract_dispersion(reduced.truncated)
    parse = lambda rows: sympy.Matrix([[space.parse(x) for x in row] for row in rows])
    m = reduced.truncated.dim
    diff = lambda a, b: (sympy.Matrix(a) - b).applyfunc(sympy.expand)
    omega_res = diff(data.Omega, parse(doc['Omega2']))
    s_res = diff(data.leading(2), parse(doc['S22']))
    return [
        CheckReport('reduced Omega2', all(x == 0 for x in omega_res), residual=omega_res.tolist()),
        CheckReport('reduced S2;2', all(x == 0 for x in s_res), residual=s_res.tolist()),
        CheckReport('reduced F vanishes', data.has_dispersionless_limit, residual=data.F.tolist()),
        CheckReport('reduced S2;1 vanishes', all(x == 0 for x in data.leading(1)),
                    residual=data.leading(1).tolist() if 1 in data.S else sympy.zeros(m, m).tolist()),
    ]


# ==========================================
# DERIVED PENCIL
# ==========================================
@dataclass
class DerivedPencil:
    P2: LocalPoissonOperator
    P1: LocalPoissonOperator
    e: EvolutionaryField
    checks: List[CheckReport] = field(default_factory=list)

    @property
    def pencil(self) -> Pencil:
        return Pencil(self.P2, self.P1, self.e, 'reduced')


def pencil_field(case: NilpotentCase, space: JetSpace) -> EvolutionaryField:
    return coordinate_field(space, case.fixture['reduced']['e'])


def derived_pencil(P2: LocalPoissonOperator, e: EvolutionaryField, seed: int = 42) -> DerivedPencil:
    """(P2, L_e P2) after checking L_e^2 P2 = 0 and that L_e Omega2 is nondegenerate"""
    P1 = lie_derivative_bivector(P2, e)
    second = lie_derivative_bivector(P1, e)
    if not second.is_zero():
        raise PreconditionError('L_e^2 P2 does not vanish', stage='derived_pencil')
    omega1 = extract_dispersion(P1).Omega
    point = scalars.sample_points(list(P2.space.coords), 1, seed)[0]
    det = sympy.expand(omega1.det())
    value = scalars.sym_eval(det, point) if det.free_symbols else complex(det)
    if abs(value) == 0:
        raise PreconditionError('L_e Omega2 is degenerate', stage='derived_pencil',
                                detail={'Omega1': str(omega1.tolist())})
    checks = [CheckReport('L_e^2 P2 = 0', True), CheckReport('L_e Omega2 nondegenerate', True, residual=det)]
    return DerivedPencil(P2, P1, e, checks)


# ==========================================
# DISPLAY TENSORS
# ==========================================
@dataclass
class DisplayTensors:
    """Leading tensors of the reduced pencil in the display chart"""
    space: JetSpace
    Omega2: sympy.Matrix
    Omega1: sympy.Matrix
    S22: sympy.Matrix
    S12: sympy.Matrix
    S21: sympy.Matrix
    S11: sympy.Matrix
    F2: sympy.Matrix
    F1: sympy.Matrix
    unity: Dict[str, sympy.Expr]


def display_space(case: NilpotentCase) -> JetSpace:
    doc = case.fixture['display']
    return JetSpace(doc['coords'], positive=doc.get('positive', []))


def push_tensor(tensor: sympy.Matrix, jac: sympy.Matrix, source: JetSpace, inverse: Mapping[str, sympy.Expr],
                target: JetSpace) -> sympy.Matrix:
    """J T J^T rewritten in the target coordinates"""
    pushed = (jac * tensor * jac.T).applyfunc(sympy.expand)
    return pushed.applyfunc(lambda c: sympy.expand(source.substitute_map(c, inverse, target, check=False)))


def display_tensors(case: NilpotentCase, pencil: DerivedPencil) -> DisplayTensors:
    doc = case.fixture['display']
    source = pencil.P2.space
    target = display_space(case)
    forward = {t: source.parse(expr) for t, expr in doc['forward'].items()}
    inverse = {p: target.parse(expr) for p, expr in doc['inverse'].items()}
    jac = sympy.Matrix([[sympy.diff(forward[t], p) for p in source.coords] for t in target.names])
    d2 = extract_dispersion(pencil.P2)
    d1 = extract_dispersion(pencil.P1)
    push = lambda m: push_tensor(m, jac, source, inverse, target)
    field_vec = sympy.Matrix([pencil.e.component(p) for p in source.names])
    pushed_e = (jac * field_vec).applyfunc(
        lambda c: sympy.expand(source.substitute_map(c, inverse, target, check=False)))
    unity = {t: pushed_e[k] for k, t in enumerate(target.names)}
    return DisplayTensors(target, push(d2.Omega), push(d1.Omega), push(d2.leading(2)), push(d1.leading(2)),
                          push(d2.leading(1)), push(d1.leading(1)), push(d2.F), push(d1.F), unity)


def display_checks(case: NilpotentCase, tensors: DisplayTensors, samples: int = 5, seed: int = 42,
                   tol: float = 1e-9) -> List[CheckReport]:
    doc = case.fixture['display']
    space = tensors.space
    parse = lambda rows: sympy.Matrix([[space.parse(x) for x in row] for row in rows])

    def same(a: sympy.Expr, b: sympy.Expr) -> bool:
        d = sympy.expand(a - b)
        if d == 0:
            return True
        return scalars.sym_equal_sampled(a, b, samples=samples, seed=seed, tol=tol)

    reports = []
    for key, computed in (('Omega2', tensors.Omega2), ('Omega1', tensors.Omega1),
                          ('S22', tensors.S22), ('S12', tensors.S12)):
        expected = parse(doc[key])
        bad = [f"{i + 1},{j + 1}" for i in range(expected.rows) for j in range(expected.cols)
               if not same(computed[i, j], expected[i, j])]
        reports.append(CheckReport(f"display {key}", not bad, residual=bad or 0))
    unity = {t: space.parse(v) for t, v in doc['unity'].items()}
    bad = [t for t in space.names if not same(tensors.unity.get(t, 0), unity.get(t, 0))]
    reports.append(CheckReport('e pushes forward to the unity field', not bad, residual=bad or 0,
                               details={'unity': {t: str(v) for t, v in tensors.unity.items()}}))
    for key, mat in (('S2;1', tensors.S21), ('S1;1', tensors.S11), ('F2', tensors.F2), ('F1', tensors.F1)):
        reports.append(CheckReport(f"display {key} vanishes", all(x == 0 for x in mat)))
    return reports
