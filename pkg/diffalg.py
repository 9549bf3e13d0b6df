"""
Differential polynomials in jet variables

A JetSpace owns the jet symbols z_i^(k) (written z1, z1_x, z1_xx, ...) up to
a fixed maximal order, the total derivative D_x and the operator calculus on
DiffOperator = sum A_k d_x^k. Coefficients are sympy expressions, polynomial
in the jets; negative powers are allowed only for designated order-0
variables.
"""

import logging
from dataclasses import dataclass, field
from math import comb
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import sympy

import scalars
from errors import CapacityError, DenominatorError
from scalars import FieldScalar
from wb_types import DiffPolyTerm

# ===== Config =====
DEFAULT_MAX_ORDER = 6

logger = logging.getLogger('wpencil.diffalg')

Coefficient = Union[sympy.Expr, int]


def jet_name(name: str, order: int) -> str:
    return name if order == 0 else f"{name}_{'x' * order}"


@dataclass(frozen=True)
class DiffOperator:
    """sum_k coeffs[k] d_x^k"""
    coeffs: Tuple[sympy.Expr, ...] = ()

    @classmethod
    def of(cls, *coeffs: Coefficient) -> 'DiffOperator':
        return cls(tuple(sympy.expand(sympy.sympify(c)) for c in coeffs)).normalized()

    @classmethod
    def zero(cls) -> 'DiffOperator':
        return cls(())

    @classmethod
    def multiplication(cls, c: Coefficient) -> 'DiffOperator':
        return cls.of(c)

    @classmethod
    def d(cls, order: int = 1) -> 'DiffOperator':
        return cls.of(*([0] * order + [1]))

    def normalized(self) -> 'DiffOperator':
        coeffs = [sympy.expand(c) for c in self.coeffs]
        while coeffs and coeffs[-1] == 0:
            coeffs.pop()
        return DiffOperator(tuple(coeffs))

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    def coeff(self, k: int) -> sympy.Expr:
        return self.coeffs[k] if 0 <= k < len(self.coeffs) else sympy.Integer(0)

    def is_zero(self) -> bool:
        return all(sympy.expand(c) == 0 for c in self.coeffs)

    def __add__(self, other: 'DiffOperator') -> 'DiffOperator':
        size = max(len(self.coeffs), len(other.coeffs))
        return DiffOperator(tuple(self.coeff(k) + other.coeff(k) for k in range(size))).normalized()

    def __neg__(self) -> 'DiffOperator':
        return DiffOperator(tuple(-c for c in self.coeffs))

    def __sub__(self, other: 'DiffOperator') -> 'DiffOperator':
        return self + (-other)

    def scale(self, c: Coefficient) -> 'DiffOperator':
        return DiffOperator(tuple(c * a for a in self.coeffs)).normalized()

    def truncate(self, max_order: int) -> 'DiffOperator':
        return DiffOperator(self.coeffs[:max_order + 1]).normalized()

    def map(self, fn) -> 'DiffOperator':
        return DiffOperator(tuple(fn(c) for c in self.coeffs)).normalized()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DiffOperator):
            return NotImplemented
        return (self - other).is_zero()

    def __hash__(self) -> int:
        return hash(self.normalized().coeffs)

    def __str__(self) -> str:
        if not self.coeffs:
            return '0'
        parts = []
        for k, c in enumerate(self.coeffs):
            if c == 0:
                continue
            parts.append(f"({c})" + ('' if k == 0 else ' d' if k == 1 else f" d^{k}"))
        return ' + '.join(parts) or '0'


@dataclass(frozen=True)
class EvolutionaryField:
    """Evolutionary vector field with characteristics e^i, keyed by variable name"""
    components: Mapping[str, sympy.Expr] = field(default_factory=dict)

    def component(self, name: str) -> sympy.Expr:
        return sympy.sympify(self.components.get(name, 0))

    def is_zero(self) -> bool:
        return all(sympy.expand(v) == 0 for v in self.components.values())

    def is_constant(self) -> bool:
        return all(not sympy.sympify(v).free_symbols for v in self.components.values())

    def to_dict(self) -> Dict[str, str]:
        return {k: str(v) for k, v in sorted(self.components.items())}


class JetSpace:
    """Jet variables of a list of coordinates up to max_order"""

    def __init__(self, names: Sequence[str], max_order: int = DEFAULT_MAX_ORDER,
                 positive: Iterable[str] = (), denominators: Iterable[str] = ()):
        self.names: Tuple[str, ...] = tuple(names)
        self.max_order = max_order
        self.positive = frozenset(positive)
        self.denominators = frozenset(denominators)
        self._jets: Dict[Tuple[str, int], sympy.Symbol] = {}
        self._index: Dict[sympy.Symbol, Tuple[str, int]] = {}
        for name in self.names:
            for k in range(max_order + 1):
                sym = sympy.Symbol(jet_name(name, k), positive=True) if (k == 0 and name in self.positive) \
                    else sympy.Symbol(jet_name(name, k))
                self._jets[(name, k)] = sym
                self._index[sym] = (name, k)

    def __repr__(self) -> str:
        return f"JetSpace({list(self.names)}, max_order={self.max_order})"

    @property
    def dim(self) -> int:
        return len(self.names)

    @property
    def coords(self) -> Tuple[sympy.Symbol, ...]:
        return tuple(self._jets[(n, 0)] for n in self.names)

    @property
    def symbols(self) -> Dict[str, sympy.Symbol]:
        return {s.name: s for s in self._index}

    def jet(self, name: Union[str, int], order: int = 0) -> sympy.Symbol:
        if isinstance(name, int):
            name = self.names[name]
        if order > self.max_order:
            raise CapacityError(f"jet order {order} of {name} exceeds maximum {self.max_order}",
                                detail={'variable': name, 'order': order})
        return self._jets[(name, order)]

    def parse_jet(self, sym: sympy.Symbol) -> Optional[Tuple[str, int]]:
        return self._index.get(sym)

    def parse(self, text: Union[str, int]) -> sympy.Expr:
        return sympy.expand(scalars.parse_expr(text, self.symbols))

    def widened(self, extra: int) -> 'JetSpace':
        return JetSpace(self.names, self.max_order + extra, self.positive, self.denominators)

    def extended(self, names: Sequence[str], denominators: Iterable[str] = ()) -> 'JetSpace':
        """Adjoin further differential indeterminates"""
        return JetSpace(self.names + tuple(n for n in names if n not in self.names), self.max_order,
                        self.positive, self.denominators | frozenset(denominators))

    def _jets_in(self, p: sympy.Expr) -> List[sympy.Symbol]:
        return sorted((s for s in p.free_symbols if s in self._index), key=lambda s: (self._index[s][1], s.name))

    # ---------------------- derivations ----------------------
    def total_derivative(self, p: Coefficient) -> sympy.Expr:
        """D_x p = sum dp/dz_i^(k) z_i^(k+1)"""
        p = sympy.sympify(p)
        out = sympy.Integer(0)
        for s in self._jets_in(p):
            name, k = self._index[s]
            out += sympy.diff(p, s) * self.jet(name, k + 1)
        return sympy.expand(out)

    def total_derivative_n(self, p: Coefficient, n: int) -> sympy.Expr:
        out = sympy.expand(sympy.sympify(p))
        for _ in range(n):
            out = self.total_derivative(out)
        return out

    def partial(self, p: Coefficient, name: str, order: int = 0) -> sympy.Expr:
        return sympy.expand(sympy.diff(sympy.sympify(p), self.jet(name, order)))

    def frechet(self, p: Coefficient) -> List[DiffOperator]:
        """Row of operators L_i = sum_k dp/dz_i^(k) d_x^k"""
        p = sympy.sympify(p)
        row = []
        for name in self.names:
            coeffs = [sympy.diff(p, self._jets[(name, k)]) for k in range(self.max_order + 1)]
            row.append(DiffOperator(tuple(coeffs)).normalized())
        return row

    def prolong(self, X: EvolutionaryField, p: Coefficient) -> sympy.Expr:
        """Action of the prolonged field: sum_{i,k} D^k(e^i) dp/dz_i^(k)"""
        p = sympy.sympify(p)
        out = sympy.Integer(0)
        cache: Dict[Tuple[str, int], sympy.Expr] = {}
        for s in self._jets_in(p):
            name, k = self._index[s]
            e = X.component(name)
            if e == 0:
                continue
            if (name, k) not in cache:
                cache[(name, k)] = self.total_derivative_n(e, k)
            out += cache[(name, k)] * sympy.diff(p, s)
        return sympy.expand(out)

    def variational_derivative(self, density: Coefficient) -> List[sympy.Expr]:
        h = sympy.sympify(density)
        out = []
        for name in self.names:
            acc = sympy.Integer(0)
            for k in range(self.max_order + 1):
                term = sympy.diff(h, self._jets[(name, k)])
                if term != 0:
                    acc += (-1) ** k * self.total_derivative_n(term, k)
            out.append(sympy.expand(acc))
        return out

    # ---------------------- operator calculus ----------------------
    def op_apply(self, op: DiffOperator, f: Coefficient) -> sympy.Expr:
        return sympy.expand(sum((c * self.total_derivative_n(f, k) for k, c in enumerate(op.coeffs) if c != 0),
                                sympy.Integer(0)))

    def op_compose(self, a: DiffOperator, b: DiffOperator) -> DiffOperator:
        """a o b; d^k B = sum_m C(k,m) D^m(B) d^(k-m)"""
        out: Dict[int, sympy.Expr] = {}
        for l, b_l in enumerate(b.coeffs):
            if b_l == 0:
                continue
            derivs = [b_l]
            for k, a_k in enumerate(a.coeffs):
                if a_k == 0:
                    continue
                while len(derivs) <= k:
                    derivs.append(self.total_derivative(derivs[-1]))
                for m in range(k + 1):
                    if derivs[m] == 0:
                        continue
                    out[k - m + l] = out.get(k - m + l, 0) + comb(k, m) * a_k * derivs[m]
        size = max(out) + 1 if out else 0
        return DiffOperator(tuple(out.get(k, sympy.Integer(0)) for k in range(size))).normalized()

    def op_adjoint(self, a: DiffOperator) -> DiffOperator:
        """(A d^k)^+ = (-d)^k o A"""
        out: Dict[int, sympy.Expr] = {}
        for k, a_k in enumerate(a.coeffs):
            if a_k == 0:
                continue
            deriv = a_k
            for m in range(k + 1):
                out[k - m] = out.get(k - m, 0) + (-1) ** k * comb(k, m) * deriv
                if m < k:
                    deriv = self.total_derivative(deriv)
        size = max(out) + 1 if out else 0
        return DiffOperator(tuple(out.get(k, sympy.Integer(0)) for k in range(size))).normalized()

    # ---------------------- substitution ----------------------
    def check_denominators(self, p: sympy.Expr) -> sympy.Expr:
        for node in sympy.preorder_traversal(p):
            if node.is_Pow and node.exp.is_negative:
                base = node.base
                if not (base.is_Symbol and base in self._index and self._index[base][1] == 0
                        and self._index[base][0] in self.denominators):
                    raise DenominatorError(f"unsupported denominator {base} in jet space {list(self.names)}",
                                           detail={'denominator': str(base)})
        return p

    def substitute_map(self, p: Coefficient, mapping: Mapping[str, sympy.Expr], target: 'JetSpace',
                       check: bool = True) -> sympy.Expr:
        """Rewrite p by z_i <- mapping[z_i](t); jets go to repeated total derivatives in the target space"""
        p = sympy.sympify(p)
        subs: Dict[sympy.Symbol, sympy.Expr] = {}
        for s in self._jets_in(p):
            name, k = self._index[s]
            if name not in mapping:
                continue
            subs[s] = target.total_derivative_n(mapping[name], k)
        out = sympy.expand(p.xreplace(subs))
        if check:
            target.check_denominators(out)
        return out

    # ---------------------- gradings ----------------------
    def x_degree(self, monomial: sympy.Expr) -> int:
        """Number of x-derivatives in a monomial, counted with multiplicity"""
        degree = 0
        for base, power in monomial.as_powers_dict().items():
            if base in self._index:
                degree += self._index[base][1] * int(power)
        return degree

    def split_x_degree(self, p: Coefficient) -> Dict[int, sympy.Expr]:
        parts: Dict[int, sympy.Expr] = {}
        for term in sympy.Add.make_args(sympy.expand(sympy.sympify(p))):
            if term == 0:
                continue
            d = self.x_degree(term)
            parts[d] = parts.get(d, sympy.Integer(0)) + term
        return parts

    def max_jet_order(self, p: Coefficient) -> int:
        orders = [self._index[s][1] for s in sympy.sympify(p).free_symbols if s in self._index]
        return max(orders, default=0)

    # ---------------------- JSON ----------------------
    def to_json(self, p: Coefficient) -> List[DiffPolyTerm]:
        terms: List[DiffPolyTerm] = []
        for term in sympy.Add.make_args(sympy.expand(sympy.sympify(p))):
            if term == 0:
                continue
            coeff = sympy.Integer(1)
            monomial, denominator = [], []
            for base, power in sorted(term.as_powers_dict().items(), key=lambda kv: str(kv[0])):
                if base in self._index:
                    name, k = self._index[base]
                    if power < 0:
                        denominator.append([name, int(-power)])
                    else:
                        monomial.append([name, k, int(power)])
                else:
                    coeff *= base ** power
            terms.append({'coeff': FieldScalar.from_sympy(coeff).to_json(),
                          'monomial': monomial, 'denominator': denominator})
        return terms

    def from_json(self, terms: Sequence[DiffPolyTerm]) -> sympy.Expr:
        out = sympy.Integer(0)
        for t in terms:
            term = FieldScalar.from_json(t['coeff']).to_sympy()
            for name, k, power in t['monomial']:
                term *= self.jet(name, k) ** power
            for name, power in t.get('denominator', []):
                term /= self.jet(name, 0) ** power
            out += term
        return sympy.expand(out)
