"""
Local Poisson operators

Entry P^{ij} = sum_k A_k d_x^k encodes {z_i(x), z_j(y)} = sum_k A_k(x) delta^(k)(x-y).
This module splits operators into their hydrodynamic pieces (F, Omega,
Gamma, S), checks skew-symmetry and the Jacobi identity (lambda-bracket
master formula), takes Lie derivatives along evolutionary fields and
changes coordinates.
"""

import logging
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from math import comb
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import sympy

import scalars
from diffalg import DiffOperator, EvolutionaryField, JetSpace
from errors import PreconditionError
from models import CheckReport
from wb_types import BracketDoc, BracketRow

# ===== Config =====
DEFAULT_PENCIL_LAMBDAS = (sympy.Integer(1), sympy.Integer(-1), sympy.Integer(2))
DELTA_LABELS = {0: 'δ', 1: "δ'", 2: "δ''", 3: "δ'''"}

logger = logging.getLogger('wpencil.poisson')

OperatorMatrix = Tuple[Tuple[DiffOperator, ...], ...]


class LocalPoissonOperator:
    """Square matrix of DiffOperators over a jet space"""

    def __init__(self, space: JetSpace, entries: Sequence[Sequence[DiffOperator]]):
        m = len(entries)
        if any(len(row) != m for row in entries) or m != space.dim:
            raise PreconditionError(f"operator of size {m} does not match jet space of dimension {space.dim}")
        self.space = space
        self.entries: OperatorMatrix = tuple(tuple(op.normalized() for op in row) for row in entries)

    @classmethod
    def zero(cls, space: JetSpace) -> 'LocalPoissonOperator':
        return cls(space, [[DiffOperator.zero() for _ in range(space.dim)] for _ in range(space.dim)])

    @classmethod
    def from_brackets(cls, space: JetSpace, table: Mapping[Tuple[int, int], DiffOperator]) -> 'LocalPoissonOperator':
        """0-based (i, j) -> P^{ij}; missing entries are filled by P^{ji} = -(P^{ij})^+"""
        m = space.dim
        entries = [[DiffOperator.zero() for _ in range(m)] for _ in range(m)]
        for (i, j), op in table.items():
            entries[i][j] = op
        for (i, j), op in table.items():
            if i != j and (j, i) not in table:
                entries[j][i] = -space.op_adjoint(op)
        return cls(space, entries)

    @classmethod
    def from_fixture(cls, space: JetSpace, brackets: Sequence[BracketDoc]) -> 'LocalPoissonOperator':
        table = {}
        for doc in brackets:
            orders = {int(k): space.parse(v) for k, v in doc['delta'].items()}
            size = max(orders) + 1 if orders else 0
            table[(doc['i'] - 1, doc['j'] - 1)] = DiffOperator(
                tuple(orders.get(k, sympy.Integer(0)) for k in range(size))).normalized()
        return cls.from_brackets(space, table)

    @property
    def dim(self) -> int:
        return len(self.entries)

    @property
    def order(self) -> int:
        return max((op.order for row in self.entries for op in row), default=-1)

    def entry(self, i: int, j: int) -> DiffOperator:
        return self.entries[i][j]

    def delta_matrix(self, k: int) -> sympy.Matrix:
        """Coefficient matrix of delta^(k)"""
        return sympy.Matrix(self.dim, self.dim, lambda i, j: self.entries[i][j].coeff(k))

    def map_entries(self, fn) -> 'LocalPoissonOperator':
        return LocalPoissonOperator(self.space, [[fn(op) for op in row] for row in self.entries])

    def map_coefficients(self, fn) -> 'LocalPoissonOperator':
        return self.map_entries(lambda op: op.map(fn))

    def truncate(self, max_delta: int) -> 'LocalPoissonOperator':
        if self.order > max_delta:
            logger.info(f"dropping delta orders above {max_delta} (operator order {self.order})")
        return self.map_entries(lambda op: op.truncate(max_delta))

    def dispersionless(self) -> 'LocalPoissonOperator':
        """F delta + Omega delta' + Gamma z' delta"""
        def keep(op: DiffOperator) -> DiffOperator:
            a0 = self.space.split_x_degree(op.coeff(0))
            a1 = self.space.split_x_degree(op.coeff(1))
            return DiffOperator.of(a0.get(0, 0) + a0.get(1, 0), a1.get(0, 0))
        return self.map_entries(keep)

    def scale(self, c) -> 'LocalPoissonOperator':
        return self.map_entries(lambda op: op.scale(c))

    def __add__(self, other: 'LocalPoissonOperator') -> 'LocalPoissonOperator':
        return LocalPoissonOperator(self.space, [[a + b for a, b in zip(r1, r2)]
                                                 for r1, r2 in zip(self.entries, other.entries)])

    def __sub__(self, other: 'LocalPoissonOperator') -> 'LocalPoissonOperator':
        return self + other.scale(-1)

    def is_zero(self) -> bool:
        return all(op.is_zero() for row in self.entries for op in row)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LocalPoissonOperator):
            return NotImplemented
        return self.dim == other.dim and (self - other).is_zero()

    __hash__ = None

    def __repr__(self) -> str:
        return f"LocalPoissonOperator(dim={self.dim}, order={self.order}, coords={list(self.space.names)})"


# ==========================================
# DISPERSION DATA
# ==========================================
@dataclass
class DispersionData:
    """F delta + Omega delta' + Gamma_k z^k_x delta + S_k delta^(k+1) + remainder"""
    coords: Tuple[sympy.Symbol, ...]
    F: sympy.Matrix
    Omega: sympy.Matrix
    Gamma: Dict[int, sympy.Matrix]
    S: Dict[int, sympy.Matrix]
    remainder: Dict[Tuple[int, int, int], sympy.Expr] = field(default_factory=dict)

    @property
    def has_dispersionless_limit(self) -> bool:
        return all(sympy.expand(x) == 0 for x in self.F)

    def gamma_table(self) -> List[List[List[sympy.Expr]]]:
        """[i][j][k] -> Gamma^{ij}_k"""
        m = len(self.coords)
        return [[[self.Gamma[k][i, j] for k in range(m)] for j in range(m)] for i in range(m)]

    def leading(self, k: int) -> sympy.Matrix:
        m = len(self.coords)
        return self.S.get(k, sympy.zeros(m, m))


def extract_dispersion(P: LocalPoissonOperator) -> DispersionData:
    space = P.space
    m = P.dim
    first_jets = [space.jet(name, 1) for name in space.names]
    F = sympy.zeros(m, m)
    Omega = sympy.zeros(m, m)
    Gamma = {k: sympy.zeros(m, m) for k in range(m)}
    S: Dict[int, sympy.Matrix] = {}
    remainder: Dict[Tuple[int, int, int], sympy.Expr] = {}

    def stash(i: int, j: int, k: int, parts: Dict[int, sympy.Expr], keep: Iterable[int]) -> None:
        rest = sum((v for d, v in parts.items() if d not in keep), sympy.Integer(0))
        if rest != 0:
            remainder[(i, j, k)] = sympy.expand(rest)

    for i in range(m):
        for j in range(m):
            op = P.entry(i, j)
            for k, coeff in enumerate(op.coeffs):
                parts = space.split_x_degree(coeff)
                if k == 0:
                    F[i, j] = parts.get(0, 0)
                    linear = parts.get(1, sympy.Integer(0))
                    for l, jet in enumerate(first_jets):
                        Gamma[l][i, j] = sympy.expand(sympy.diff(linear, jet))
                    stash(i, j, k, parts, (0, 1))
                elif k == 1:
                    Omega[i, j] = parts.get(0, 0)
                    stash(i, j, k, parts, (0,))
                else:
                    S.setdefault(k - 1, sympy.zeros(m, m))[i, j] = parts.get(0, 0)
                    stash(i, j, k, parts, (0,))
    return DispersionData(space.coords, F, Omega, Gamma, S, remainder)


def reassemble(data: DispersionData, space: JetSpace) -> LocalPoissonOperator:
    m = len(data.coords)
    first_jets = [space.jet(name, 1) for name in space.names]
    top = max(list(data.S) + [0]) + 1
    entries = []
    for i in range(m):
        row = []
        for j in range(m):
            coeffs = [sympy.Integer(0)] * (top + 1)
            coeffs[0] = data.F[i, j] + sum((data.Gamma[l][i, j] * first_jets[l] for l in range(m)), sympy.Integer(0))
            coeffs[1] = data.Omega[i, j]
            for k, mat in data.S.items():
                coeffs[k + 1] = mat[i, j]
            for (a, b, k), rest in data.remainder.items():
                if (a, b) == (i, j):
                    coeffs[k] += rest
            row.append(DiffOperator(tuple(coeffs)).normalized())
        entries.append(row)
    return LocalPoissonOperator(space, entries)


# ==========================================
# SKEW AND JACOBI
# ==========================================
def check_skew(P: LocalPoissonOperator) -> List[List[DiffOperator]]:
    """Residual P^{ij} + (P^{ji})^+; zero iff P is skew-adjoint"""
    return [[P.entry(i, j) + P.space.op_adjoint(P.entry(j, i)) for j in range(P.dim)] for i in range(P.dim)]


def skew_report(P: LocalPoissonOperator, name: str = 'skew') -> CheckReport:
    residual = check_skew(P)
    bad = {f"{i + 1},{j + 1}": str(op) for i, row in enumerate(residual) for j, op in enumerate(row) if not op.is_zero()}
    return CheckReport(name, not bad, residual=bad or 0)


@dataclass
class JacobiReport:
    residuals: Dict[Tuple[int, int, int], sympy.Expr]

    @property
    def passed(self) -> bool:
        return all(r == 0 for r in self.residuals.values())

    @property
    def failing(self) -> List[Tuple[int, int, int]]:
        return [t for t, r in self.residuals.items() if r != 0]

    def to_check(self, name: str = 'jacobi') -> CheckReport:
        bad = {f"{i + 1},{j + 1},{k + 1}": str(self.residuals[(i, j, k)]) for (i, j, k) in self.failing}
        return CheckReport(name, self.passed, residual=bad or 0, details={'triples': len(self.residuals)})


class _LambdaBrackets:
    """{z_i _lam z_j} = sum_k A^{ji}_k lam^k over a widened jet space"""

    def __init__(self, P: LocalPoissonOperator):
        self.P = P
        depth = max(P.order, 0)
        base = max((P.space.max_jet_order(c) for row in P.entries for op in row for c in op.coeffs), default=0)
        self.space = P.space.widened(max(0, 2 * base + depth + 2 - P.space.max_order))
        self.jets = [[self.space.jet(name, k) for k in range(self.space.max_order + 1)] for name in self.space.names]

    def generator(self, i: int, j: int, lam: sympy.Symbol) -> sympy.Expr:
        op = self.P.entry(j, i)
        return sympy.expand(sum((c * lam ** k for k, c in enumerate(op.coeffs)), sympy.Integer(0)))

    def shifted(self, lam: sympy.Expr, n: int, h: sympy.Expr) -> sympy.Expr:
        """(lam + d)^n h"""
        out = sympy.Integer(0)
        deriv = h
        for m in range(n + 1):
            out += comb(n, m) * lam ** (n - m) * deriv
            if m < n:
                deriv = self.space.total_derivative(deriv)
        return out

    def left(self, i: int, lam: sympy.Symbol, g: sympy.Expr) -> sympy.Expr:
        """{z_i _lam g} = sum dg/dz_l^(n) (lam + d)^n {z_i _lam z_l}"""
        out = sympy.Integer(0)
        for l, row in enumerate(self.jets):
            for n, jet in enumerate(row):
                dg = sympy.diff(g, jet)
                if dg == 0:
                    continue
                out += dg * self.shifted(lam, n, self.generator(i, l, lam))
        return sympy.expand(out)

    def right(self, f: sympy.Expr, nu: sympy.Expr, k: int) -> sympy.Expr:
        """{f _nu z_k} = sum_l {z_l _(nu + d) z_k}_-> (-nu - d)^m df/dz_l^(m)"""
        out = sympy.Integer(0)
        for l, row in enumerate(self.jets):
            op = self.P.entry(k, l)
            for m, jet in enumerate(row):
                df = sympy.diff(f, jet)
                if df == 0:
                    continue
                inner = sympy.expand((-1) ** m * self.shifted(nu, m, df))
                for p, b_p in enumerate(op.coeffs):
                    if b_p != 0:
                        out += b_p * self.shifted(nu, p, inner)
        return sympy.expand(out)


def check_jacobi(P: LocalPoissonOperator, triples: Optional[Iterable[Tuple[int, int, int]]] = None) -> JacobiReport:
    """Jacobi identity of the lambda-brackets on sorted generator triples"""
    lam, mu = sympy.symbols('lambda_ mu_')
    brackets = _LambdaBrackets(P)
    if triples is None:
        triples = combinations_with_replacement(range(P.dim), 3)
    residuals = {}
    for i, j, k in triples:
        first = brackets.left(i, lam, brackets.generator(j, k, mu))
        second = brackets.left(j, mu, brackets.generator(i, k, lam))
        third = brackets.right(brackets.generator(i, j, lam), lam + mu, k)
        residuals[(i, j, k)] = sympy.expand(first - second - third)
        if residuals[(i, j, k)] != 0:
            logger.debug(f"jacobi fails on ({i + 1},{j + 1},{k + 1})")
    return JacobiReport(residuals)


# ==========================================
# LIE DERIVATIVES AND COORDINATE CHANGES
# ==========================================
def lie_derivative_bivector(P: LocalPoissonOperator, X: EvolutionaryField) -> LocalPoissonOperator:
    """X(P) - D_e o P - P o D_e^+"""
    space = P.space
    m = P.dim
    jac = [space.frechet(X.component(name)) for name in space.names]
    entries = []
    for i in range(m):
        row = []
        for j in range(m):
            acc = P.entry(i, j).map(lambda c: space.prolong(X, c))
            for l in range(m):
                if not jac[i][l].is_zero():
                    acc = acc - space.op_compose(jac[i][l], P.entry(l, j))
                if not jac[j][l].is_zero():
                    acc = acc - space.op_compose(P.entry(i, l), space.op_adjoint(jac[j][l]))
            row.append(acc)
        entries.append(row)
    return LocalPoissonOperator(space, entries)


def coordinate_field(space: JetSpace, components: Mapping[str, str]) -> EvolutionaryField:
    return EvolutionaryField({name: space.parse(text) for name, text in components.items()})


def maps_are_inverse(source: JetSpace, target: JetSpace, forward: Mapping[str, sympy.Expr],
                     inverse: Mapping[str, sympy.Expr], samples: int = 5, seed: int = 42) -> bool:
    """forward(inverse(t)) = t, exactly when polynomial and on samples otherwise"""
    for t_name, expr in forward.items():
        back = sympy.expand(source.substitute_map(expr, inverse, target, check=False))
        t_sym = target.jet(t_name)
        if sympy.expand(back - t_sym) == 0:
            continue
        if not scalars.sym_equal_sampled(back, t_sym, samples=samples, seed=seed):
            return False
    return True


def change_coordinates(P: LocalPoissonOperator, forward: Mapping[str, sympy.Expr],
                       inverse: Mapping[str, sympy.Expr], target: JetSpace,
                       verify: bool = True) -> LocalPoissonOperator:
    """{t_a, t_b} = sum dt_a/dz_i o P^{ij} o dt_b/dz_j, rewritten in t through the inverse map"""
    source = P.space
    if verify and not maps_are_inverse(source, target, forward, inverse):
        raise PreconditionError('coordinate maps are not mutually inverse')
    jac = [[DiffOperator.multiplication(sympy.diff(forward[a], z)) for z in source.coords] for a in target.names]
    m = P.dim
    entries = []
    for a in range(target.dim):
        row = []
        for b in range(target.dim):
            acc = DiffOperator.zero()
            for i in range(m):
                if jac[a][i].is_zero():
                    continue
                for j in range(m):
                    if jac[b][j].is_zero() or P.entry(i, j).is_zero():
                        continue
                    acc = acc + source.op_compose(jac[a][i], source.op_compose(P.entry(i, j), jac[b][j]))
            row.append(acc.map(lambda c: source.substitute_map(c, inverse, target)))
        entries.append(row)
    return LocalPoissonOperator(target, entries)


# ==========================================
# PENCILS
# ==========================================
def pencil_checks(P2: LocalPoissonOperator, P1: LocalPoissonOperator, V: EvolutionaryField,
                  lambdas: Sequence = DEFAULT_PENCIL_LAMBDAS, jacobi: bool = True) -> List[CheckReport]:
    reports = []
    lie2 = lie_derivative_bivector(P2, V)
    reports.append(CheckReport('L_V P2 = P1', lie2 == P1))
    lie1 = lie_derivative_bivector(P1, V)
    reports.append(CheckReport('L_V P1 = 0', lie1.is_zero()))
    if jacobi:
        for lam in lambdas:
            result = check_jacobi(P2 + P1.scale(lam))
            reports.append(result.to_check(f"jacobi P2 + ({lam}) P1"))
    return reports


# ==========================================
# EXPORT
# ==========================================
def bracket_rows(P: LocalPoissonOperator, upper: bool = True) -> List[BracketRow]:
    rows: List[BracketRow] = []
    for i in range(P.dim):
        for j in range(i if upper else 0, P.dim):
            for k, c in enumerate(P.entry(i, j).coeffs):
                if c != 0:
                    rows.append({'i': i + 1, 'j': j + 1, 'delta_order': k, 'coefficient': str(c)})
    return rows


def operator_from_rows(space: JetSpace, rows: Sequence[BracketRow]) -> LocalPoissonOperator:
    grouped: Dict[Tuple[int, int], Dict[int, sympy.Expr]] = {}
    for row in rows:
        grouped.setdefault((row['i'] - 1, row['j'] - 1), {})[int(row['delta_order'])] = space.parse(row['coefficient'])
    table = {}
    for key, orders in grouped.items():
        table[key] = DiffOperator(tuple(orders.get(k, sympy.Integer(0)) for k in range(max(orders) + 1))).normalized()
    return LocalPoissonOperator.from_brackets(space, table)


def _delta_label(k: int) -> str:
    return DELTA_LABELS.get(k, f"δ^({k})")


def format_table(P: LocalPoissonOperator) -> str:
    """One line per nonzero upper-triangle entry: {z1, z3} = -z3/2 δ + ..."""
    names = P.space.names
    lines = []
    for i in range(P.dim):
        for j in range(i, P.dim):
            op = P.entry(i, j)
            if op.is_zero():
                continue
            terms = [f"({c}) {_delta_label(k)}" for k, c in enumerate(op.coeffs) if c != 0]
            lines.append(f"{{{names[i]}, {names[j]}}} = " + ' + '.join(terms))
    return '\n'.join(lines) + '\n'


def format_matrix(name: str, mat: sympy.Matrix) -> str:
    width = max((len(str(x)) for x in mat), default=1)
    body = '\n'.join('  [' + ', '.join(str(x).rjust(width) for x in mat.row(i)) + ']' for i in range(mat.rows))
    return f"{name} =\n{body}\n"
