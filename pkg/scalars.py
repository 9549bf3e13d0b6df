"""
Exact scalars and small symbolic helpers

FieldScalar is an element of Q(i, sqrt2, sqrt3) stored as eight rational
coordinates on the basis {1, sqrt2, sqrt3, sqrt6} x {1, i}. Index k of the
coordinate tuple is radical + 4 * imaginary, where radical is a bit mask
(bit 0 = sqrt2, bit 1 = sqrt3).

Expressions on the reduced manifold (potentials, metric entries with square
roots and logarithms) are plain sympy expressions; this module adds exact
differentiation, sampled evaluation and a prefix-tree JSON codec for them.
"""

import itertools
from fractions import Fraction
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import sympy

from errors import (
    DomainEvaluationError,
    FieldDivisionError,
    FieldMembershipError,
    SamplingError,
    SingularSystemError,
)

Number = Union[int, Fraction, 'FieldScalar']

# ===== Config =====
DEFAULT_SAMPLE_BOX = (Fraction(1, 2), Fraction(3))
SAMPLE_DENOMINATOR = 40
MAX_SAMPLE_ATTEMPTS = 50

_RADICAL_SQUARES = (2, 3)
_RADICALS = (sympy.Integer(1), sympy.sqrt(2), sympy.sqrt(3), sympy.sqrt(6))


def _radical_product(a: int, b: int) -> Tuple[int, int]:
    coef = 1
    common = a & b
    if common & 1:
        coef *= _RADICAL_SQUARES[0]
    if common & 2:
        coef *= _RADICAL_SQUARES[1]
    return coef, a ^ b


class FieldScalar:
    """Exact element of Q(i, sqrt2, sqrt3)"""

    __slots__ = ('coords',)

    def __init__(self, coords: Iterable[Any] = ()):
        values = [Fraction(c) for c in coords]
        if len(values) > 8:
            raise ValueError(f"FieldScalar takes at most 8 coordinates, got {len(values)}")
        values.extend([Fraction(0)] * (8 - len(values)))
        object.__setattr__(self, 'coords', tuple(values))

    def __setattr__(self, key, value):
        raise AttributeError("FieldScalar is immutable")

    # ----------------------- constructors -----------------------
    @classmethod
    def rational(cls, value: Any) -> 'FieldScalar':
        return cls([Fraction(value)])

    @classmethod
    def zero(cls) -> 'FieldScalar':
        return cls()

    @classmethod
    def one(cls) -> 'FieldScalar':
        return cls([1])

    @classmethod
    def imaginary_unit(cls) -> 'FieldScalar':
        return cls([0, 0, 0, 0, 1])

    @classmethod
    def sqrt_rational(cls, value: Any) -> 'FieldScalar':
        """Square root of a rational whose squarefree part divides 6."""
        q = Fraction(value)
        if q == 0:
            return cls.zero()
        imag = q < 0
        q = abs(q)
        # sqrt(p/d) = sqrt(p*d)/d
        n = q.numerator * q.denominator
        outside = 1
        inside = 1
        for prime, exp in sympy.factorint(n).items():
            outside *= prime ** (exp // 2)
            if exp % 2:
                if prime not in (2, 3):
                    raise FieldMembershipError(f"sqrt({value}) is not in Q(i, sqrt2, sqrt3)")
                inside *= prime
        radical = {1: 0, 2: 1, 3: 2, 6: 3}[inside]
        coords = [Fraction(0)] * 8
        coords[radical + (4 if imag else 0)] = Fraction(outside, q.denominator)
        return cls(coords)

    @classmethod
    def coerce(cls, value: Number) -> 'FieldScalar':
        if isinstance(value, FieldScalar):
            return value
        if isinstance(value, (int, Fraction)):
            return cls.rational(value)
        return cls.from_sympy(value)

    @classmethod
    def from_sympy(cls, expr: Any) -> 'FieldScalar':
        """Convert a constant sympy expression; raises FieldMembershipError outside the field."""
        expr = sympy.sympify(expr)
        if expr.free_symbols:
            raise FieldMembershipError(f"not a constant: {expr}")
        if expr is sympy.I:
            return cls.imaginary_unit()
        if expr.is_Rational:
            return cls.rational(Fraction(int(expr.p), int(expr.q)))
        if expr.is_Add:
            total = cls.zero()
            for arg in expr.args:
                total = total + cls.from_sympy(arg)
            return total
        if expr.is_Mul:
            total = cls.one()
            for arg in expr.args:
                total = total * cls.from_sympy(arg)
            return total
        if expr.is_Pow:
            base, exp = expr.args
            if exp.is_Integer:
                return cls.from_sympy(base) ** int(exp)
            if exp.is_Rational and exp.q == 2 and base.is_Rational:
                root = cls.sqrt_rational(Fraction(int(base.p), int(base.q)))
                return root ** int(exp.p)
        raise FieldMembershipError(f"constant {expr} is not in Q(i, sqrt2, sqrt3)")

    @classmethod
    def parse(cls, text: str) -> 'FieldScalar':
        return cls.from_sympy(sympy.sympify(text))

    @classmethod
    def from_json(cls, payload: Union[str, Sequence[str]]) -> 'FieldScalar':
        if isinstance(payload, str):
            return cls.parse(payload)
        if len(payload) != 8:
            raise ValueError(f"FieldScalar JSON needs 8 rationals, got {len(payload)}")
        return cls(Fraction(p) for p in payload)

    # ----------------------- conversions -----------------------
    def to_json(self) -> List[str]:
        return [f"{c.numerator}/{c.denominator}" for c in self.coords]

    def to_sympy(self) -> sympy.Expr:
        total = sympy.Integer(0)
        for k, c in enumerate(self.coords):
            if c:
                term = sympy.Rational(c.numerator, c.denominator) * _RADICALS[k & 3]
                total += term * sympy.I if k >= 4 else term
        return total

    def embed(self) -> complex:
        roots = (1.0, 2.0 ** 0.5, 3.0 ** 0.5, 6.0 ** 0.5)
        re = sum(float(self.coords[k]) * roots[k] for k in range(4))
        im = sum(float(self.coords[k + 4]) * roots[k] for k in range(4))
        return complex(re, im)

    def is_zero(self) -> bool:
        return not any(self.coords)

    def is_rational(self) -> bool:
        return not any(self.coords[1:])

    def rational_part(self) -> Fraction:
        return self.coords[0]

    # ----------------------- arithmetic -----------------------
    def __add__(self, other: Number) -> 'FieldScalar':
        other = FieldScalar.coerce(other)
        return FieldScalar(a + b for a, b in zip(self.coords, other.coords))

    __radd__ = __add__

    def __neg__(self) -> 'FieldScalar':
        return FieldScalar(-c for c in self.coords)

    def __sub__(self, other: Number) -> 'FieldScalar':
        return self + (-FieldScalar.coerce(other))

    def __rsub__(self, other: Number) -> 'FieldScalar':
        return FieldScalar.coerce(other) - self

    def __mul__(self, other: Number) -> 'FieldScalar':
        other = FieldScalar.coerce(other)
        out = [Fraction(0)] * 8
        for i, x in enumerate(self.coords):
            if not x:
                continue
            for j, y in enumerate(other.coords):
                if not y:
                    continue
                coef, radical = _radical_product(i & 3, j & 3)
                imag = (i >> 2) + (j >> 2)
                sign = -1 if imag == 2 else 1
                out[radical + 4 * (imag % 2)] += sign * coef * x * y
        return FieldScalar(out)

    __rmul__ = __mul__

    def galois(self, flip_sqrt2: bool, flip_sqrt3: bool, flip_i: bool) -> 'FieldScalar':
        out = []
        for k, c in enumerate(self.coords):
            sign = 1
            if flip_sqrt2 and k & 1:
                sign = -sign
            if flip_sqrt3 and k & 2:
                sign = -sign
            if flip_i and k >= 4:
                sign = -sign
            out.append(sign * c)
        return FieldScalar(out)

    def conjugate(self) -> 'FieldScalar':
        return self.galois(False, False, True)

    def norm(self) -> Fraction:
        """Product of all eight Galois conjugates; a rational number."""
        total = self
        for flips in itertools.product((False, True), repeat=3):
            if any(flips):
                total = total * self.galois(*flips)
        return total.coords[0]

    def inverse(self) -> 'FieldScalar':
        if self.is_zero():
            raise FieldDivisionError("division by zero in Q(i, sqrt2, sqrt3)")
        cofactor = FieldScalar.one()
        for flips in itertools.product((False, True), repeat=3):
            if any(flips):
                cofactor = cofactor * self.galois(*flips)
        norm = (self * cofactor).coords[0]
        return cofactor * FieldScalar.rational(1 / norm)

    def __truediv__(self, other: Number) -> 'FieldScalar':
        return self * FieldScalar.coerce(other).inverse()

    def __rtruediv__(self, other: Number) -> 'FieldScalar':
        return FieldScalar.coerce(other) * self.inverse()

    def __pow__(self, exponent: int) -> 'FieldScalar':
        if exponent < 0:
            return self.inverse() ** (-exponent)
        result = FieldScalar.one()
        base = self
        while exponent:
            if exponent & 1:
                result = result * base
            base = base * base
            exponent >>= 1
        return result

    def __eq__(self, other: object) -> bool:
        if isinstance(other, (int, Fraction)):
            other = FieldScalar.rational(other)
        if not isinstance(other, FieldScalar):
            return NotImplemented
        return self.coords == other.coords

    def __hash__(self) -> int:
        return hash(self.coords)

    def __bool__(self) -> bool:
        return not self.is_zero()

    def __repr__(self) -> str:
        return f"FieldScalar({self.to_sympy()})"

    def __str__(self) -> str:
        return str(self.to_sympy())


def field_ops(a: Number, b: Optional[Number], kind: str) -> FieldScalar:
    """Exact field arithmetic; kind is one of add, mul, div, neg, conj."""
    a = FieldScalar.coerce(a)
    if kind == 'neg':
        return -a
    if kind == 'conj':
        return a.conjugate()
    if b is None:
        raise ValueError(f"field_ops kind={kind} needs a second operand")
    b = FieldScalar.coerce(b)
    if kind == 'add':
        return a + b
    if kind == 'mul':
        return a * b
    if kind == 'div':
        return a / b
    raise ValueError(f"unknown field operation: {kind}")


# ==========================================
# EXACT LINEAR ALGEBRA OVER THE FIELD
# ==========================================
FieldRows = List[List[FieldScalar]]


def to_field_rows(rows: Iterable[Iterable[Any]]) -> FieldRows:
    return [[FieldScalar.coerce(x) for x in row] for row in rows]


def row_reduce(rows: FieldRows) -> Tuple[FieldRows, List[int]]:
    """Reduced row echelon form and pivot columns (Gauss-Jordan)."""
    m = [list(row) for row in rows]
    if not m:
        return m, []
    n_rows, n_cols = len(m), len(m[0])
    pivots: List[int] = []
    piv_r = 0
    for piv_c in range(n_cols):
        for i_row in range(piv_r, n_rows):
            if not m[i_row][piv_c].is_zero():
                break
        else:
            continue
        if i_row != piv_r:
            m[piv_r], m[i_row] = m[i_row], m[piv_r]
        inv = m[piv_r][piv_c].inverse()
        m[piv_r] = [x * inv for x in m[piv_r]]
        for r in range(n_rows):
            if r == piv_r:
                continue
            fr = m[r][piv_c]
            if fr.is_zero():
                continue
            m[r] = [x - fr * y for x, y in zip(m[r], m[piv_r])]
        pivots.append(piv_c)
        piv_r += 1
        if piv_r == n_rows:
            break
    return m, pivots


def rank(rows: FieldRows) -> int:
    return len(row_reduce(rows)[1])


def nullspace(rows: FieldRows, n_cols: Optional[int] = None) -> FieldRows:
    """Basis of {x : rows . x = 0}, one vector per free column."""
    if not rows:
        size = n_cols or 0
        return [[FieldScalar.one() if i == j else FieldScalar.zero() for i in range(size)] for j in range(size)]
    reduced, pivots = row_reduce(rows)
    n_cols = len(rows[0])
    free = [c for c in range(n_cols) if c not in pivots]
    basis = []
    for fc in free:
        vec = [FieldScalar.zero() for _ in range(n_cols)]
        vec[fc] = FieldScalar.one()
        for r, pc in enumerate(pivots):
            vec[pc] = -reduced[r][fc]
        basis.append(vec)
    return basis


def inverse(rows: FieldRows) -> FieldRows:
    n = len(rows)
    augmented = [list(row) + [FieldScalar.one() if i == j else FieldScalar.zero() for j in range(n)]
                 for i, row in enumerate(rows)]
    reduced, pivots = row_reduce(augmented)
    if pivots[:n] != list(range(n)):
        raise SingularSystemError(f"matrix of size {n} is singular (rank {len([p for p in pivots if p < n])})")
    return [row[n:] for row in reduced]


def solve(rows: FieldRows, rhs: Sequence[FieldScalar]) -> List[FieldScalar]:
    inv = inverse(rows)
    return [sum((a * b for a, b in zip(row, rhs)), FieldScalar.zero()) for row in inv]


# ==========================================
# SYMBOLIC EXPRESSIONS
# ==========================================
def parse_expr(text: Union[str, int, float], symbols: Optional[Dict[str, sympy.Symbol]] = None) -> sympy.Expr:
    """Parse fixture text; names in `symbols` map onto those exact Symbol objects."""
    if isinstance(text, float):
        raise ValueError(f"floats are not exact: {text}")
    return sympy.sympify(text, locals=dict(symbols or {}), rational=True)


def is_polynomial(e: sympy.Expr) -> bool:
    return bool(e.is_polynomial(*e.free_symbols))


def canonical(e: sympy.Expr) -> sympy.Expr:
    return sympy.expand(e)


def sym_diff(e: sympy.Expr, v: sympy.Symbol) -> sympy.Expr:
    d = sympy.diff(e, v)
    if is_polynomial(d):
        return sympy.expand(d)
    return d


def _is_undefined(value: sympy.Expr) -> bool:
    return value.has(sympy.zoo, sympy.nan, sympy.oo, -sympy.oo)


def sym_eval(e: sympy.Expr, point: Dict[sympy.Symbol, Any]) -> complex:
    """Complex value of e at point; raises DomainEvaluationError at poles and log(0)."""
    missing = e.free_symbols - set(point)
    if missing:
        raise DomainEvaluationError(f"point does not assign {sorted(str(s) for s in missing)}")
    subs = {s: sympy.nsimplify(v) if isinstance(v, float) else sympy.sympify(v) for s, v in point.items()}
    value = e.xreplace(subs)
    if _is_undefined(value):
        raise DomainEvaluationError(f"{e} is undefined at {point}")
    value = sympy.N(value, 30)
    if _is_undefined(value):
        raise DomainEvaluationError(f"{e} is undefined at {point}")
    return complex(value)


def sample_points(symbols: Sequence[sympy.Symbol], count: int, seed: int,
                  box: Tuple[Fraction, Fraction] = DEFAULT_SAMPLE_BOX) -> List[Dict[sympy.Symbol, sympy.Rational]]:
    """Deterministic rational points inside the box, one coordinate per symbol."""
    rng = np.random.default_rng(seed)
    lo = int(box[0] * SAMPLE_DENOMINATOR)
    hi = int(box[1] * SAMPLE_DENOMINATOR)
    points = []
    for _ in range(count):
        nums = rng.integers(lo, hi + 1, size=len(symbols))
        points.append({s: sympy.Rational(int(n), SAMPLE_DENOMINATOR) for s, n in zip(symbols, nums)})
    return points


def sym_equal_sampled(e1: sympy.Expr, e2: sympy.Expr, samples: int = 5, seed: int = 42, tol: float = 1e-9,
                      box: Tuple[Fraction, Fraction] = DEFAULT_SAMPLE_BOX) -> bool:
    """True iff |e1 - e2| <= tol * (1 + |e1|) at every valid sample."""
    symbols = sorted(e1.free_symbols | e2.free_symbols, key=lambda s: s.name)
    candidates = sample_points(symbols, samples * MAX_SAMPLE_ATTEMPTS, seed, box)
    checked = 0
    for point in candidates:
        try:
            a = sym_eval(e1, point)
            b = sym_eval(e2, point)
        except DomainEvaluationError:
            continue
        if abs(a - b) > tol * (1 + abs(a)):
            return False
        checked += 1
        if checked >= samples:
            break
    if checked < samples:
        raise SamplingError(f"only {checked} of {samples} valid samples for {e1} vs {e2}",
                            detail={'checked': checked, 'samples': samples})
    return True


# ----------------------- prefix-tree JSON codec -----------------------
def sym_to_json(e: sympy.Expr) -> Dict[str, Any]:
    e = sympy.sympify(e)
    if not e.free_symbols:
        return {'op': 'const', 'value': FieldScalar.from_sympy(e).to_json()}
    if e.is_Symbol:
        return {'op': 'sym', 'name': e.name}
    if e.is_Add:
        return {'op': 'add', 'args': [sym_to_json(a) for a in e.args]}
    if e.is_Mul:
        return {'op': 'mul', 'args': [sym_to_json(a) for a in e.args]}
    if e.is_Pow:
        base, exp = e.args
        if not exp.is_Rational:
            raise FieldMembershipError(f"only rational exponents are supported: {e}")
        return {'op': 'pow', 'base': sym_to_json(base), 'exp': f"{exp.p}/{exp.q}"}
    if isinstance(e, sympy.log):
        return {'op': 'log', 'arg': sym_to_json(e.args[0])}
    raise FieldMembershipError(f"unsupported node {type(e).__name__} in {e}")


def sym_from_json(node: Dict[str, Any], symbols: Optional[Dict[str, sympy.Symbol]] = None) -> sympy.Expr:
    symbols = symbols or {}
    op = node['op']
    if op == 'const':
        return FieldScalar.from_json(node['value']).to_sympy()
    if op == 'sym':
        return symbols.get(node['name']) or sympy.Symbol(node['name'])
    if op == 'add':
        return sympy.Add(*[sym_from_json(a, symbols) for a in node['args']])
    if op == 'mul':
        return sympy.Mul(*[sym_from_json(a, symbols) for a in node['args']])
    if op == 'pow':
        return sympy.Pow(sym_from_json(node['base'], symbols), sympy.Rational(node['exp']))
    if op == 'log':
        return sympy.log(sym_from_json(node['arg'], symbols))
    raise ValueError(f"unknown expression node: {op}")
