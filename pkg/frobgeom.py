"""
Contravariant metrics, flat pencils and Frobenius potentials

Metric identities are checked by deterministic sampling: derivatives are
taken symbolically, then everything is evaluated at seeded rational points
and contracted with numpy.einsum. Potentials with logarithms and square
roots never enter an exact normal form.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import sympy

import scalars
from errors import DomainEvaluationError, NonQuadraticRemainderError, PreconditionError, SamplingError
from models import CheckReport
from wb_types import FrobeniusDoc

# ===== Config =====
FLAT_PENCIL_LAMBDAS = (sympy.Rational(1, 3), sympy.Rational(-2, 5), sympy.Rational(7, 4))
DEFAULT_TOL = 1e-9

logger = logging.getLogger('wpencil.frobgeom')

Point = Dict[sympy.Symbol, sympy.Rational]


@dataclass
class ContravariantMetric:
    """Omega^{ij}(u) = (du^i, du^j)"""
    matrix: sympy.Matrix
    coords: Tuple[sympy.Symbol, ...]

    def __post_init__(self):
        self.matrix = sympy.Matrix(self.matrix)
        self.coords = tuple(self.coords)
        if self.matrix.shape != (len(self.coords), len(self.coords)):
            raise PreconditionError(f"metric of shape {self.matrix.shape} on {len(self.coords)} coordinates")

    @property
    def dim(self) -> int:
        return len(self.coords)

    def is_symmetric(self) -> bool:
        return all(sympy.expand(self.matrix[i, j] - self.matrix[j, i]) == 0
                   for i in range(self.dim) for j in range(i + 1, self.dim))

    def __add__(self, other: 'ContravariantMetric') -> 'ContravariantMetric':
        return ContravariantMetric(self.matrix + other.matrix, self.coords)

    def scale(self, c) -> 'ContravariantMetric':
        return ContravariantMetric(self.matrix * c, self.coords)

    def evaluator(self) -> 'MetricEvaluator':
        return MetricEvaluator(self)


def christoffel(metric: ContravariantMetric) -> List[List[List[sympy.Expr]]]:
    """Gamma^{ij}_k = -Omega^{im} Gamma^j_{mk}, as [i][j][k]"""
    omega = metric.matrix
    coords = metric.coords
    n = metric.dim
    g = omega.inv()
    levi = [[[sum(sympy.Rational(1, 2) * omega[j, l] *
                  (sympy.diff(g[l, k], coords[m]) + sympy.diff(g[l, m], coords[k]) - sympy.diff(g[m, k], coords[l]))
                  for l in range(n)) for k in range(n)] for m in range(n)] for j in range(n)]
    return [[[sympy.simplify(-sum(omega[i, m] * levi[j][m][k] for m in range(n))) for k in range(n)]
             for j in range(n)] for i in range(n)]


class MetricEvaluator:
    """Numeric Omega, its first two derivatives, Christoffels and curvature at points"""

    def __init__(self, metric: ContravariantMetric):
        self.metric = metric
        coords = metric.coords
        n = metric.dim
        om = metric.matrix
        d1 = [[[sympy.diff(om[a, b], c) for b in range(n)] for a in range(n)] for c in coords]
        d2 = [[[[sympy.diff(om[a, b], c, d) for b in range(n)] for a in range(n)] for c in coords] for d in coords]
        self._omega = sympy.lambdify(coords, om.tolist(), modules='numpy')
        self._d1 = sympy.lambdify(coords, d1, modules='numpy')
        self._d2 = sympy.lambdify(coords, d2, modules='numpy')

    def _args(self, point: Point) -> List[complex]:
        return [complex(point[c]) if not isinstance(point[c], sympy.Basic) else complex(sympy.N(point[c]))
                for c in self.metric.coords]

    def _array(self, fn, point: Point, shape) -> np.ndarray:
        value = np.array(fn(*self._args(point)), dtype=complex)
        out = np.broadcast_to(value, shape) if value.shape != shape else value
        if not np.all(np.isfinite(out)):
            raise DomainEvaluationError(f"metric is singular at {point}")
        return out

    def omega(self, point: Point) -> np.ndarray:
        n = self.metric.dim
        return self._array(self._omega, point, (n, n))

    def levi_civita(self, point: Point) -> Tuple[np.ndarray, np.ndarray]:
        """Gamma^m_{ij} and its derivative d_d Gamma^m_{ij}"""
        n = self.metric.dim
        om = self.omega(point)
        d_om = self._array(self._d1, point, (n, n, n))
        dd_om = self._array(self._d2, point, (n, n, n, n))
        if abs(np.linalg.det(om)) < 1e-14:
            raise DomainEvaluationError(f"metric is degenerate at {point}")
        g = np.linalg.inv(om)
        dg = -np.einsum('ab,cbd,de->cae', g, d_om, g)
        ddg = (np.einsum('ab,dbc,ce,fep,pq->dfaq', g, d_om, g, d_om, g)
               + np.einsum('ab,fbc,ce,dep,pq->dfaq', g, d_om, g, d_om, g)
               - np.einsum('ab,dfbc,cq->dfaq', g, dd_om, g))
        first = np.einsum('ikj->kij', dg) + np.einsum('jki->kij', dg) - dg
        gamma = 0.5 * np.einsum('mk,kij->mij', om, first)
        d_first = np.einsum('dikj->dkij', ddg) + np.einsum('djki->dkij', ddg) - ddg
        d_gamma = 0.5 * np.einsum('dmk,kij->dmij', d_om, first) + 0.5 * np.einsum('mk,dkij->dmij', om, d_first)
        return gamma, d_gamma

    def christoffel(self, point: Point) -> np.ndarray:
        """Contravariant Gamma^{ij}_k as [i, j, k]"""
        gamma, _ = self.levi_civita(point)
        return -np.einsum('im,jmk->ijk', self.omega(point), gamma)

    def riemann(self, point: Point) -> np.ndarray:
        """R^i_{jkl}"""
        gamma, d_gamma = self.levi_civita(point)
        return (np.einsum('kilj->ijkl', d_gamma) - np.einsum('likj->ijkl', d_gamma)
                + np.einsum('ikp,plj->ijkl', gamma, gamma) - np.einsum('ilp,pkj->ijkl', gamma, gamma))


def _valid_points(metric: ContravariantMetric, samples: int, seed: int) -> List[Point]:
    evaluator = metric.evaluator()
    candidates = scalars.sample_points(list(metric.coords), samples * scalars.MAX_SAMPLE_ATTEMPTS, seed)
    points = []
    for p in candidates:
        try:
            evaluator.levi_civita(p)
        except (DomainEvaluationError, ZeroDivisionError, np.linalg.LinAlgError):
            continue
        points.append(p)
        if len(points) >= samples:
            break
    if not points:
        raise SamplingError('metric is singular at every sample point')
    return points


def curvature_residual(metric: ContravariantMetric, samples: int = 5, seed: int = 42) -> float:
    evaluator = metric.evaluator()
    return max(float(np.max(np.abs(evaluator.riemann(p)))) for p in _valid_points(metric, samples, seed))


def flat_pencil_check(omega2: ContravariantMetric, omega1: ContravariantMetric,
                      lambdas: Sequence = FLAT_PENCIL_LAMBDAS, samples: int = 5, seed: int = 42,
                      tol: float = DEFAULT_TOL) -> List[CheckReport]:
    reports = []
    for name, metric in (('Omega2', omega2), ('Omega1', omega1)):
        residual = curvature_residual(metric, samples, seed)
        reports.append(CheckReport(f"{name} flat", residual <= tol, residual=residual))
    e2, e1 = omega2.evaluator(), omega1.evaluator()
    for lam in lambdas:
        combo = omega2 + omega1.scale(lam)
        residual = curvature_residual(combo, samples, seed)
        reports.append(CheckReport(f"Omega2 + ({lam}) Omega1 flat", residual <= tol, residual=residual))
        ec = combo.evaluator()
        additivity = 0.0
        for p in _valid_points(combo, samples, seed):
            try:
                expected = e2.christoffel(p) + float(lam) * e1.christoffel(p)
            except DomainEvaluationError:
                continue
            additivity = max(additivity, float(np.max(np.abs(ec.christoffel(p) - expected))))
        reports.append(CheckReport(f"Christoffels additive at {lam}", additivity <= tol, residual=additivity))
    return reports


def levi_civita_consistency(metric: ContravariantMetric, gamma: Sequence[Sequence[Sequence[sympy.Expr]]],
                            samples: int = 5, seed: int = 42, tol: float = DEFAULT_TOL) -> CheckReport:
    """Gamma read off a hydrodynamic bracket equals christoffel(Omega) at samples"""
    evaluator = metric.evaluator()
    table = sympy.lambdify(metric.coords, [[list(row) for row in plane] for plane in gamma], modules='numpy')
    n = metric.dim
    worst = 0.0
    for p in _valid_points(metric, samples, seed):
        given = np.broadcast_to(np.array(table(*evaluator._args(p)), dtype=complex), (n, n, n))
        worst = max(worst, float(np.max(np.abs(evaluator.christoffel(p) - given))))
    return CheckReport('Gamma agrees with christoffel(Omega)', worst <= tol, residual=worst)


# ==========================================
# QUASIHOMOGENEOUS FLAT PENCILS
# ==========================================
def vector_bracket(X: Sequence[sympy.Expr], Y: Sequence[sympy.Expr], coords) -> List[sympy.Expr]:
    n = len(coords)
    return [sum(X[j] * sympy.diff(Y[i], coords[j]) - Y[j] * sympy.diff(X[i], coords[j]) for j in range(n))
            for i in range(n)]


def lie_derivative_metric(X: Sequence[sympy.Expr], omega: sympy.Matrix, coords) -> sympy.Matrix:
    """(L_X Omega)^{ij} = X^k d_k Omega^{ij} - Omega^{kj} d_k X^i - Omega^{ik} d_k X^j"""
    n = len(coords)
    return sympy.Matrix(n, n, lambda i, j: sum(
        X[k] * sympy.diff(omega[i, j], coords[k]) - omega[k, j] * sympy.diff(X[i], coords[k])
        - omega[i, k] * sympy.diff(X[j], coords[k]) for k in range(n)))


def _sampled_zero(exprs: Sequence[sympy.Expr], coords, samples: int, seed: int, tol: float) -> Tuple[bool, float]:
    worst = 0.0
    checked = 0
    for p in scalars.sample_points(list(coords), samples * scalars.MAX_SAMPLE_ATTEMPTS, seed):
        try:
            values = [scalars.sym_eval(sympy.sympify(e), p) if sympy.sympify(e).free_symbols else complex(e)
                      for e in exprs]
        except DomainEvaluationError:
            continue
        worst = max([worst] + [abs(v) for v in values])
        checked += 1
        if checked >= samples:
            break
    if checked == 0:
        raise SamplingError('no valid sample point')
    return worst <= tol, worst


@dataclass
class QfpmData:
    tau: sympy.Expr
    E: List[sympy.Expr]
    e: List[sympy.Expr]
    charge: sympy.Rational
    checks: List[CheckReport] = field(default_factory=list)
    regular: Optional[bool] = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def solve_tau(omega1: ContravariantMetric, e: Sequence[sympy.Expr]) -> sympy.Expr:
    """tau with d_j tau = (Omega1^-1)_{ji} e^i, integrated one coordinate at a time"""
    coords = omega1.coords
    n = omega1.dim
    inverse = omega1.matrix.inv()
    form = [sympy.simplify(sum(inverse[j, i] * e[i] for i in range(n))) for j in range(n)]
    for j in range(n):
        for k in range(j + 1, n):
            if sympy.simplify(sympy.diff(form[j], coords[k]) - sympy.diff(form[k], coords[j])) != 0:
                raise PreconditionError(f"Omega1^-1 e is not closed in ({coords[j]}, {coords[k]})", stage='qfpm',
                                        detail={'form': [str(w) for w in form]})
    tau = sympy.Integer(0)
    for j, c in enumerate(coords):
        tau += sympy.integrate(sympy.simplify(form[j] - sympy.diff(tau, c)), c)
    return sympy.expand(tau)


def qfpm_check(
omega2: ContravariantMetric, omega1: ContravariantMetric, tau: sympy.Expr, d,
               samples: int = 5, seed: int = 42, tol: float = DEFAULT_TOL) -> QfpmData:
    coords = omega2.coords
    n = omega2.dim
    d = sympy.nsimplify(d)
    grad = [sympy.diff(tau, c) for c in coords]
    E = [sympy.expand(sum(omega2.matrix[i, j] * grad[j] for j in range(n))) for i in range(n)]
    e = [sympy.expand(sum(omega1.matrix[i, j] * grad[j] for j in range(n))) for i in range(n)]
    identities = {
        '[e,E] = e': [a - b for a, b in zip(vector_bracket(e, E, coords), e)],
        'L_E Omega2 = (d-1) Omega2': list(lie_derivative_metric(E, omega2.matrix, coords) - (d - 1) * omega2.matrix),
        'L_e Omega2 = Omega1': list(lie_derivative_metric(e, omega2.matrix, coords) - omega1.matrix),
        'L_e Omega1 = 0': list(lie_derivative_metric(e, omega1.matrix, coords)),
    }
    checks = []
    for name, exprs in identities.items():
        ok, worst = _sampled_zero(exprs, coords, samples, seed, tol)
        checks.append(CheckReport(name, ok, residual=worst))
    regular = regularity(omega1, E, d, samples, seed)
    logger.debug(f"charge {d}, regular={regular}")
    checks.append(CheckReport('regularity (info)', True, details={'regular': regular, 'charge': str(d)}))
    return QfpmData(tau, E, e, d, checks, regular)


def regularity(omega1: ContravariantMetric, E: Sequence[sympy.Expr], d, samples: int = 5, seed: int = 42) -> bool:
    """R^j_i = (d-1)/2 delta^j_i + nabla_i E^j nondegenerate at every sample"""
    coords = omega1.coords
    n = omega1.dim
    evaluator = omega1.evaluator()
    dE = sympy.lambdify(coords, [[sympy.diff(E[j], coords[i]) for j in range(n)] for i in range(n)], modules='numpy')
    Ef = sympy.lambdify(coords, list(E), modules='numpy')
    for p in _valid_points(omega1, samples, seed):
        args = evaluator._args(p)
        gamma, _ = evaluator.levi_civita(p)
        nabla = np.broadcast_to(np.array(dE(*args), dtype=complex), (n, n)) \
            + np.einsum('jik,k->ij', gamma, np.broadcast_to(np.array(Ef(*args), dtype=complex), (n,)))
        R = float(d - 1) / 2 * np.eye(n) + nabla
        if abs(np.linalg.det(R)) < 1e-12:
            return False
    return True


# ==========================================
# FROBENIUS POTENTIALS
# ==========================================
@dataclass
class QuadraticRemainder:
    """E F - (3-d) F = t^T A t + B t + c"""
    expr: sympy.Expr
    A: sympy.Matrix
    B: List[sympy.Expr]
    c: sympy.Expr


@dataclass
class FrobeniusPotential:
    potential: sympy.Expr
    coords: Tuple[sympy.Symbol, ...]
    unity: str
    euler: Dict[str, sympy.Expr]
    charge: sympy.Rational
    remainder: Optional[sympy.Expr] = None

    @classmethod
    def from_fixture(cls, doc: FrobeniusDoc, coords: Sequence[sympy.Symbol]) -> 'FrobeniusPotential':
        symbols = {c.name: c for c in coords}
        parse = lambda text: scalars.parse_expr(text, symbols)
        return cls(parse(doc['potential']), tuple(coords), doc['unity'],
                   {k: parse(v) for k, v in doc['euler'].items()}, sympy.Rational(doc['charge']),
                   parse(doc['remainder']) if 'remainder' in doc else None)

    @property
    def dim(self) -> int:
        return len(self.coords)

    def coord(self, name: str) -> sympy.Symbol:
        return next(c for c in self.coords if c.name == name)

    def euler_vector(self) -> List[sympy.Expr]:
        return [self.euler.get(c.name, sympy.Integer(0)) for c in self.coords]

    def third_derivatives(self) -> List[List[List[sympy.Expr]]]:
        c = self.coords
        return [[[sympy.diff(self.potential, c[i], c[j], c[k]) for k in range(self.dim)]
                 for j in range(self.dim)] for i in range(self.dim)]


def metric_from_potential(Fp: FrobeniusPotential) -> Tuple[sympy.Matrix, List[List[List[sympy.Expr]]]]:
    """Pi_ij = d_unity d_i d_j F and C^k_ij = (Pi^-1)^{kp} d_p d_i d_j F"""
    u = Fp.coord(Fp.unity)
    third = Fp.third_derivatives()
    idx = Fp.coords.index(u)
    Pi = sympy.Matrix(Fp.dim, Fp.dim, lambda i, j: sympy.simplify(third[idx][i][j]))
    if any(x.free_symbols for x in Pi):
        raise PreconditionError(f"Pi is not constant: {Pi.tolist()}", stage='potential')
    if Pi.det() == 0:
        raise PreconditionError('Pi is singular', stage='potential')
    eta = Pi.inv()
    n = Fp.dim
    C = [[[sympy.expand(sum(eta[k, p] * third[p][i][j] for p in range(n))) for j in range(n)] for i in range(n)]
         for k in range(n)]
    return Pi, C


def wdvv_residual(Fp: FrobeniusPotential, samples: int = 5, seed: int = 42) -> float:
    """max |c_ijp eta^pq c_qkl - c_ikp eta^pq c_qjl| / (1 + max |c|^2); vacuous below dimension 3"""
    n = Fp.dim
    if n < 3:
        return 0.0
    Pi, _ = metric_from_potential(Fp)
    eta = np.array(Pi.inv().tolist(), dtype=complex)
    third = sympy.lambdify(Fp.coords, Fp.third_derivatives(), modules='numpy')
    worst = 0.0
    checked = 0
    for p in scalars.sample_points(list(Fp.coords), samples * scalars.MAX_SAMPLE_ATTEMPTS, seed):
        args = [float(p[c]) for c in Fp.coords]
        with np.errstate(all='ignore'):
            c = np.broadcast_to(np.array(third(*args), dtype=complex), (n, n, n))
        if not np.all(np.isfinite(c)):
            continue
        left = np.einsum('ijp,pq,qkl->ijkl', c, eta, c)
        right = np.einsum('ikp,pq,qjl->ijkl', c, eta, c)
        worst = max(worst, float(np.max(np.abs(left - right))) / (1 + float(np.max(np.abs(c))) ** 2))
        checked += 1
        if checked >= samples:
            break
    if checked == 0:
        raise SamplingError('potential is singular at every sample point')
    return worst


def euler_residual(Fp: FrobeniusPotential) -> QuadraticRemainder:
    coords = Fp.coords
    E = Fp.euler_vector()
    EF = sum(E[i] * sympy.diff(Fp.potential, coords[i]) for i in range(Fp.dim))
    rem = sympy.expand(EF - (3 - Fp.charge) * Fp.potential)
    if rem.has(sympy.log) or not rem.is_polynomial(*coords):
        rem = sympy.expand(sympy.simplify(rem))
    if rem.has(sympy.log) or not rem.is_polynomial(*coords):
        raise NonQuadraticRemainderError(f"Euler remainder is not polynomial: {rem}", stage='potential')
    if rem != 0 and sympy.Poly(rem, *coords).total_degree() > 2:
        raise NonQuadraticRemainderError(f"Euler remainder has degree above two: {rem}", stage='potential')
    hessian = sympy.hessian(rem, coords) / 2
    B = [sympy.diff(rem, c).xreplace({x: 0 for x in coords}) for c in coords]
    const = rem.xreplace({x: 0 for x in coords})
    return QuadraticRemainder(rem, hessian, B, const)


def intersection_form(Fp: FrobeniusPotential) -> ContravariantMetric:
    """Omega2^{ij} = E^p eta^{ik} eta^{jm} d_m d_k d_p F with eta = Pi^-1"""
    Pi, _ = metric_from_potential(Fp)
    eta = Pi.inv()
    third = Fp.third_derivatives()
    E = Fp.euler_vector()
    n = Fp.dim
    out = sympy.Matrix(n, n, lambda i, j: sympy.simplify(sum(
        E[p] * eta[i, k] * eta[j, m] * third[m][k][p]
        for p in range(n) for k in range(n) for m in range(n))))
    return ContravariantMetric(out, Fp.coords)


def frobenius_algebra_checks(Fp: FrobeniusPotential, samples: int = 5, seed: int = 42,
                             tol: float = DEFAULT_TOL) -> List[CheckReport]:
    """Commutativity, unity and invariance of Pi at samples"""
    Pi, C = metric_from_potential(Fp)
    n = Fp.dim
    Cf = sympy.lambdify(Fp.coords, C, modules='numpy')
    pi = np.array(Pi.tolist(), dtype=complex)
    u = Fp.coords.index(Fp.coord(Fp.unity))
    rng = np.random.default_rng(seed)
    worst = {'commutative': 0.0, 'unity': 0.0, 'invariant': 0.0}
    checked = 0
    for p in scalars.sample_points(list(Fp.coords), samples * scalars.MAX_SAMPLE_ATTEMPTS, seed):
        with np.errstate(all='ignore'):
            c = np.broadcast_to(np.array(Cf(*[float(p[x]) for x in Fp.coords]), dtype=complex), (n, n, n))
        if not np.all(np.isfinite(c)):
            continue
        worst['commutative'] = max(worst['commutative'], float(np.max(np.abs(c - np.einsum('kij->kji', c)))))
        worst['unity'] = max(worst['unity'], float(np.max(np.abs(c[:, u, :] - np.eye(n)))))
        a, b, v = rng.normal(size=(3, n))
        ab = np.einsum('kij,i,j->k', c, a, b)
        bv = np.einsum('kij,i,j->k', c, b, v)
        worst['invariant'] = max(worst['invariant'], abs(ab @ pi @ v - a @ pi @ bv))
        checked += 1
        if checked >= samples:
            break
    if checked == 0:
        raise SamplingError('potential is singular at every sample point')
    return [CheckReport(f"algebra {k}", w <= tol, residual=w) for k, w in worst.items()]


def matrix_check(name: str, computed: sympy.Matrix, expected: sympy.Matrix, samples: int = 5, seed: int = 42,
                 tol: float = DEFAULT_TOL) -> CheckReport:
    """Entrywise agreement, exact where the difference expands to zero and sampled otherwise"""
    bad = []
    for i in range(expected.rows):
        for j in range(expected.cols):
            a, b = sympy.sympify(computed[i, j]), sympy.sympify(expected[i, j])
            if sympy.expand(a - b) == 0:
                continue
            if not (a - b).free_symbols or not scalars.sym_equal_sampled(a, b, samples=samples, seed=seed, tol=tol):
                bad.append(f"{i + 1},{j + 1}")
    return CheckReport(name, not bad, residual=bad or 0)
