import numpy as np
import pytest
import sympy

from diffalg import DiffOperator, EvolutionaryField, JetSpace, jet_name
from errors import CapacityError, DenominatorError


@pytest.fixture
def space():
    return JetSpace(['z1', 'z2'], max_order=4)


def test_jet_names(space):
    assert jet_name('z1', 0) == 'z1'
    assert jet_name('z1', 3) == 'z1_xxx'
    assert space.jet('z2', 2).name == 'z2_xx'
    assert space.parse_jet(space.jet(0, 1)) == ('z1', 1)


def test_capacity(space):
    with pytest.raises(CapacityError):
        space.jet('z1', 5)


def test_total_derivative(space):
    p = space.parse('z1**2*z2_x')
    assert space.total_derivative(p) == space.parse('2*z1*z1_x*z2_x + z1**2*z2_xx')
    assert space.total_derivative_n(space.parse('z1'), 3) == space.jet('z1', 3)


def test_frechet(space):
    row = space.frechet(space.parse('z1*z1_x + z2**2'))
    assert row[0] == DiffOperator.of(space.parse('z1_x'), space.parse('z1'))
    assert row[1] == DiffOperator.of(space.parse('2*z2'))


def test_variational_derivative(space):
    assert space.variational_derivative(space.parse('z1_x**2/2')) == [space.parse('-z1_xx'), 0]
    assert space.variational_derivative(space.total_derivative(space.parse('z1**3*z2'))) == [0, 0]


def test_compose_with_multiplication(space):
    f = space.parse('z1')
    composed = space.op_compose(DiffOperator.d(), DiffOperator.multiplication(f))
    assert composed == DiffOperator.of(space.parse('z1_x'), f)


def test_adjoint(space):
    f = space.parse('z1')
    assert space.op_adjoint(DiffOperator.of(0, f)) == DiffOperator.of(space.parse('-z1_x'), -f)
    a = DiffOperator.of(space.parse('z2'), space.parse('z1**2'), 0, 1)
    assert space.op_adjoint(space.op_adjoint(a)) == a


def test_operator_apply(space):
    op = DiffOperator.of(0, space.parse('z1'))
    assert space.op_apply(op, space.parse('z2**2')) == space.parse('2*z1*z2*z2_x')


def test_prolongation(space):
    X = EvolutionaryField({'z1': sympy.Integer(1)})
    assert space.prolong(X, space.parse('z1**2*z1_x')) == space.parse('2*z1*z1_x')
    assert X.is_constant()


def test_substitution_into_target_jets():
    source = JetSpace(['z'], max_order=3)
    target = JetSpace(['t'], max_order=3)
    out = source.substitute_map(source.parse('z*z_x'), {'z': target.parse('t**2')}, target)
    assert out == target.parse('2*t**3*t_x')


def test_denominators():
    allowed = JetSpace(['u'], denominators=['u'])
    assert allowed.check_denominators(allowed.parse('u_x/u**2')) is not None
    with pytest.raises(DenominatorError):
        JetSpace(['u']).check_denominators(sympy.Integer(1) / sympy.Symbol('u'))
    with pytest.raises(DenominatorError):
        allowed.check_denominators(1 / (allowed.parse('u') + 1))


def test_x_degree_split(space):
    parts = space.split_x_degree(space.parse('z1**2 + z1_x*z2 + z1_x**2 + z2_xx'))
    assert parts[0] == space.parse('z1**2')
    assert parts[1] == space.parse('z1_x*z2')
    assert parts[2] == space.parse('z1_x**2 + z2_xx')
    assert space.max_jet_order(space.parse('z1*z2_xxx')) == 3


def test_json_terms(space):
    p = space.parse('3*z1**2*z2_x/2 - 5*z2 + 7')
    assert space.from_json(space.to_json(p)) == p


def test_operator_arithmetic():
    z = sympy.Symbol('z')
    a = DiffOperator.of(z, 1)
    assert (a - a).is_zero()
    assert a.order == 1
    assert a.scale(2) == DiffOperator.of(2 * z, 2)
    assert DiffOperator.of(z, 0, 0).order == 0
    assert DiffOperator.of(1, 2, 3).truncate(1) == DiffOperator.of(1, 2)


def _on_curve(expr, space, curves, x, x0):
    subs = {space.jet(name, k): sympy.diff(f, x, k) for name, f in curves.items() for k in range(space.max_order + 1)}
    return complex(sympy.N(sympy.sympify(expr).xreplace(subs).subs(x, x0)))


def test_frechet_matches_finite_differences():
    space = JetSpace(['z1', 'z2', 'h1', 'h2'], max_order=4)
    x = sympy.Symbol('x')
    p = space.parse('z1*z1_xx + z2**2*z1_x + z2_x**3')
    curves = {'z1': sympy.sin(x), 'z2': x ** 2 + 1}
    directions = {'z1': sympy.cos(x), 'z2': sympy.exp(x)}
    row = space.frechet(p)
    linear = sum(space.op_apply(row[i], space.jet(h)) for i, h in enumerate(['h1', 'h2']))
    exact = _on_curve(linear, space, dict(curves, h1=directions['z1'], h2=directions['z2']), x, 0.3)

    eps = 1e-6
    shifted = lambda s: {name: f + s * directions[name] for name, f in curves.items()}
    numeric = (_on_curve(p, space, shifted(eps), x, 0.3) - _on_curve(p, space, shifted(-eps), x, 0.3)) / (2 * eps)
    assert abs(exact - numeric) < 1e-6


def _random_poly(space, rng, max_jet, terms=3):
    jets = [space.jet(name, k) for name in space.names for k in range(max_jet + 1)]
    p = sympy.Integer(0)
    for _ in range(terms):
        powers = rng.integers(0, 2, size=len(jets))
        p += int(rng.integers(-3, 4)) * sympy.Mul(*[j ** int(e) for j, e in zip(jets, powers)])
    return sympy.expand(p)


def _random_operator(space, rng, order=1):
    return DiffOperator.of(*[_random_poly(space, rng, 1, terms=2) for _ in range(order + 1)])


@pytest.mark.parametrize('seed', range(4))
def test_partials_commute_with_total_derivative(space, seed):
    rng = np.random.default_rng(seed)
    p = _random_poly(space, rng, 2)
    Dp = space.total_derivative(p)
    for name in space.names:
        assert space.partial(Dp, name, 0) == space.total_derivative(space.partial(p, name, 0))
        for k in range(1, 4):
            commutator = space.partial(Dp, name, k) - space.total_derivative(space.partial(p, name, k))
            assert sympy.expand(commutator - space.partial(p, name, k - 1)) == 0


@pytest.mark.parametrize('seed', range(4))
def test_composition_is_associative(space, seed):
    rng = np.random.default_rng(100 + seed)
    a, b, c = (_random_operator(space, rng) for _ in range(3))
    assert space.op_compose(space.op_compose(a, b), c) == space.op_compose(a, space.op_compose(b, c))


@pytest.mark.parametrize('seed', range(4))
def test_adjoint_reverses_composition(space, seed):
    rng = np.random.default_rng(200 + seed)
    a, b = _random_operator(space, rng), _random_operator(space, rng)
    assert space.op_adjoint(space.op_compose(a, b)) == space.op_compose(space.op_adjoint(b), space.op_adjoint(a))


@pytest.mark.parametrize('seed', range(4))
def test_frechet_of_total_derivative(space, seed):
    rng = np.random.default_rng(300 + seed)
    p = _random_poly(space, rng, 2)
    outer = space.frechet(space.total_derivative(p))
    inner = space.frechet(p)
    assert outer == [space.op_compose(DiffOperator.d(), op) for op in inner]
