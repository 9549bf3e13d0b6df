import os
import sys

import pytest
import sympy

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

import liealg  # noqa: E402
from equilibrium import DisplayTensors  # noqa: E402
from diffalg import JetSpace  # noqa: E402

SL3_CASES = ('sl3-21', 'sl3-21-fkdv')
SL4_CASES = ('sl4-31', 'sl4-22')


@pytest.fixture(scope='session')
def load():
    return liealg.load_case


@pytest.fixture(scope='session')
def sl3():
    return liealg.load_case('sl3-21')


def fixture_display(case_id: str) -> DisplayTensors:
    """Display tensors exactly as transcribed, with vanishing F and delta'' parts"""
    doc = liealg.load_case(case_id).fixture['display']
    space = JetSpace(doc['coords'], positive=doc.get('positive', []))
    parse = lambda rows: sympy.Matrix([[space.parse(x) for x in row] for row in rows])
    r = space.dim
    zero = sympy.zeros(r, r)
    return DisplayTensors(space, parse(doc['Omega2']), parse(doc['Omega1']), parse(doc['S22']), parse(doc['S12']),
                          zero, zero, zero, zero, {t: space.parse(v) for t, v in doc['unity'].items()})
