"""
Central invariants of a semisimple dispersive pencil

Canonical coordinates u^i are the roots of Psi(lam) = det(Omega2 - lam Omega1).
With Q = S2;2 - lam S1;2 the leading delta''' tensor of the pencil,

    c_i = (d_lam Psi)^2 Psi_k Psi_l Q^{kl} / (3 (Psi_k Psi_l Omega1^{kl})^2)   at lam = u^i

which is the canonical-coordinate formula pulled back through du^i = -Psi_k dt^k / d_lam Psi.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import sympy

import scalars
from equilibrium import DisplayTensors
from errors import DomainEvaluationError, PreconditionError, RootCollisionError, SamplingError
from models import CheckReport

# ===== Config =====
ROOT_SEPARATION = 1e-8
CONSTANCY_TOL = 1e-8
RESCALE_FACTORS = (sympy.Integer(-24), sympy.Integer(2))

LAMBDA = sympy.Symbol('lam')

logger = logging.getLogger('wpencil.centralinv')


def char_poly(omega2: sympy.Matrix, omega1: sympy.Matrix, lam: sympy.Symbol = LAMBDA) -> sympy.Expr:
    if omega2.shape != omega1.shape or omega2.rows > 3:
        raise PreconditionError(f"pencil of shape {omega2.shape} / {omega1.shape}")
    return sympy.expand((omega2 - lam * omega1).det(method='berkowitz'))


def _multiset_key(z: complex):
    return round(z.real, 12), round(z.imag, 12)


def canonical_roots(psi: sympy.Expr, point: Dict[sympy.Symbol, Any], lam: sympy.Symbol = LAMBDA,
                    separation: float = ROOT_SEPARATION) -> List[complex]:
    """Roots of Psi at point, sorted by real then imaginary part"""
    coeffs = [scalars.sym_eval(c, point) if c.free_symbols else complex(c)
              for c in sympy.Poly(psi, lam).all_coeffs()]
    if abs(coeffs[0]) == 0:
        raise PreconditionError(f"leading coefficient of the characteristic polynomial vanishes at {point}")
    where = {str(k): str(v) for k, v in point.items()}
    at_point = sympy.Poly(sympy.expand(psi.subs(point)), lam)
    if at_point.degree() > 1 and sympy.simplify(sympy.discriminant(at_point)) == 0:
        raise RootCollisionError(f"characteristic polynomial has a repeated root at {point}", detail={'point': where})
    roots = sorted(np.roots(coeffs), key=_multiset_key)
    scale = max(1.0, max(abs(z) for z in roots))
    for a in range(len(roots)):
        for b in range(a + 1, len(roots)):
            if abs(roots[a] - roots[b]) < max(separation, np.sqrt(np.finfo(float).eps)) * scale:
                raise RootCollisionError(f"roots {roots[a]} and {roots[b]} collide at {point}", detail={'point': where})
    return [complex(z) for z in roots]


@dataclass
class CentralInvariantReport:
    case_id: str
    points: List[Dict[sympy.Symbol, Any]] = field(default_factory=list)
    roots: List[List[complex]] = field(default_factory=list)
    values: List[List[complex]] = field(default_factory=list)
    skipped: int = 0
    expected: Optional[List[sympy.Expr]] = None
    tol: float = 1e-9
    constancy_tol: float = CONSTANCY_TOL

    @property
    def invariants(self) -> List[complex]:
        """c_i at the first accepted point, sorted as a multiset"""
        return sorted(self.values[0], key=_multiset_key) if self.values else []

    @property
    def deviation(self) -> float:
        """Largest change of the sorted c_i between samples; the root-to-value pairing may differ per point"""
        if not self.values:
            return float('inf')
        first = np.array(self.invariants)
        return max(float(np.max(np.abs(np.array(sorted(v, key=_multiset_key)) - first))) for v in self.values)

    @property
    def constant(self) -> bool:
        return bool(self.values) and self.deviation <= self.constancy_tol * (1 + float(np.max(np.abs(self.invariants))))

    @property
    def topological(self) -> bool:
        c = self.invariants
        return bool(c) and bool(max(abs(z - c[0]) for z in c) <= self.tol)

    def matches(self) -> Optional[bool]:
        if self.expected is None:
            return None
        expected = sorted((complex(v) for v in self.expected), key=_multiset_key)
        got = self.invariants
        return len(got) == len(expected) and all(abs(a - b) <= self.tol for a, b in zip(got, expected))

    def to_checks(self) -> List[CheckReport]:
        checks = [CheckReport('central invariants constant across samples', self.constant,
                              residual=self.deviation, details={'points': len(self.values), 'skipped': self.skipped})]
        if self.expected is not None:
            checks.append(CheckReport('central invariants match', bool(self.matches()),
                                      residual=[format_value(z) for z in self.invariants],
                                      details={'expected': [str(v) for v in self.expected]}))
        checks.append(CheckReport('topological type (info)', True, details={'topological': self.topological}))
        return checks

    def format_table(self) -> str:
        lines = []
        for point, roots, values in zip(self.points, self.roots, self.values):
            where = ', '.join(f"{k}={v}" for k, v in point.items())
            for u, c in zip(roots, values):
                lines.append(f"{where:<30} u = {format_value(u):<28} c = {format_value(c)}")
        lines.append(f"topological type: {'yes' if self.topological else 'no'}")
        return '\n'.join(lines)


def format_value(z: complex) -> str:
    if abs(z.imag) <= 1e-12:
        return f"{z.real:.12g}"
    return f"{z.real:.12g}{z.imag:+.12g}i"


def _require_pure_dispersion(tensors: DisplayTensors) -> None:
    for name, mat in (('F2', tensors.F2), ('F1', tensors.F1), ('S2;1', tensors.S21), ('S1;1', tensors.S11)):
        if any(sympy.simplify(x) != 0 for x in mat):
            raise PreconditionError(f"{name} does not vanish; the central-invariant formula does not apply",
                                    stage='central_invariants')


def central_invariants(tensors: DisplayTensors, case_id: str = '', samples: int = 5, seed: int = 42,
                       expected: Optional[Sequence[sympy.Expr]] = None, tol: float = 1e-9,
                       separation: float = ROOT_SEPARATION,
                       constancy_tol: float = CONSTANCY_TOL) -> CentralInvariantReport:
    _require_pure_dispersion(tensors)
    coords = list(tensors.space.coords)
    psi = char_poly(tensors.Omega2, tensors.Omega1)
    grad = [sympy.diff(psi, c) for c in coords]
    args = [LAMBDA] + coords
    d_lam = sympy.lambdify(args, sympy.diff(psi, LAMBDA), modules='numpy')
    grad_f = sympy.lambdify(args, grad, modules='numpy')
    q_f = sympy.lambdify(args, (tensors.S22 - LAMBDA * tensors.S12).tolist(), modules='numpy')
    omega1_f = sympy.lambdify(coords, tensors.Omega1.tolist(), modules='numpy')
    r = len(coords)

    report = CentralInvariantReport(case_id, expected=list(expected) if expected is not None else None,
                                    tol=tol, constancy_tol=constancy_tol)
    for point in scalars.sample_points(coords, samples * scalars.MAX_SAMPLE_ATTEMPTS, seed):
        try:
            roots = canonical_roots(psi, point, separation=separation)
        except (RootCollisionError, DomainEvaluationError) as e:
            logger.debug('resampling: %s', e.message)
            report.skipped += 1
            continue
        at = [float(point[c]) for c in coords]
        om1 = np.broadcast_to(np.array(omega1_f(*at), dtype=complex), (r, r))
        values = []
        for u in roots:
            g = np.broadcast_to(np.array(grad_f(u, *at), dtype=complex), (r,))
            q = np.broadcast_to(np.array(q_f(u, *at), dtype=complex), (r, r))
            f = g @ om1 @ g
            if abs(f) < separation:
                values = None
                break
            values.append(complex(d_lam(u, *at)) ** 2 * (g @ q @ g) / (3 * f ** 2))
        if values is None:
            report.skipped += 1
            continue
        report.points.append(point)
        report.roots.append(roots)
        report.values.append(values)
        if len(report.values) >= samples:
            break
    if not report.values:
        raise SamplingError('central-invariant denominator vanishes at every sample', stage='central_invariants')
    logger.info('%s central invariants %s (skipped %d points)', case_id,
                [format_value(z) for z in report.invariants], report.skipped)
    return report


def scaled(tensors: DisplayTensors, kappa) -> DisplayTensors:
    return DisplayTensors(tensors.space, tensors.Omega2 * kappa, tensors.Omega1 * kappa, tensors.S22 * kappa,
                          tensors.S12 * kappa, tensors.S21 * kappa, tensors.S11 * kappa, tensors.F2 * kappa,
                          tensors.F1 * kappa, tensors.unity)


def rescale_check(tensors: DisplayTensors, base: CentralInvariantReport, kappa, samples: int = 5, seed: int = 42,
                  tol: float = 1e-9) -> CheckReport:
    """Central invariants of (kappa P2, kappa P1) equal kappa^-1 times the originals"""
    kappa = sympy.nsimplify(kappa)
    if kappa == 0:
        raise PreconditionError('rescaling factor must be nonzero')
    rescaled = central_invariants(scaled(tensors, kappa), base.case_id, samples, seed, tol=tol)
    expected = [z / complex(kappa) for z in base.invariants]
    got = rescaled.invariants
    residual = max(abs(a - b) for a, b in zip(sorted(got, key=_multiset_key), sorted(expected, key=_multiset_key)))
    return CheckReport(f"rescaling by {kappa}", residual <= tol, residual=residual,
                       details={'values': [format_value(z) for z in got]})
