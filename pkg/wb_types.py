from typing import Any, Dict, List, Optional, TypedDict

# JSON document shapes: case fixtures, bracket tables, reports

Matrix = List[List[str]]


class TripleDoc(TypedDict, total=False):
    """sl2-triple matrices, entries as exact expression strings"""
    e: Matrix
    h: Matrix
    f: Matrix


class SliceDoc(TypedDict, total=False):
    """Slodowy slice: coordinates, ad_h exponents and the displayed matrix q(z)"""
    coords: List[str]
    eta: List[str]
    matrix: Matrix
    provenance: Optional[str]


class InvariantDoc(TypedDict, total=False):
    """Restricted invariant and its relation to c_k, the coefficient of mu^(n-k) in det(mu - q)"""
    name: str
    expr: str
    char_poly: str


class BracketDoc(TypedDict, total=False):
    """One {z_i, z_j} entry; keys of delta are derivative orders of the delta function"""
    i: int
    j: int
    delta: Dict[str, str]


class WAlgebraDoc(TypedDict, total=False):
    provenance: Optional[str]
    brackets: List[BracketDoc]
    F: Matrix
    Omega: Matrix
    S21: Optional[Matrix]


class FirstBracketDoc(TypedDict, total=False):
    """Liouville field, in slice coordinates or in the adapted chart"""
    chart: str
    liouville: Dict[str, str]
    involution: List[str]
    provenance: Optional[str]


class ChartDoc(TypedDict, total=False):
    """Adapted coordinates t(z) with polynomial inverse z(t)"""
    coords: List[str]
    forward: Dict[str, str]
    inverse: Dict[str, str]
    invariants: Dict[str, str]
    F: Optional[Matrix]
    Omega: Optional[Matrix]
    provenance: Optional[str]


class LocusDoc(TypedDict, total=False):
    """Equilibrium locus N, solved branch and its polynomial parametrization"""
    chart: str
    invariants: List[str]
    constrained: List[str]
    retained: List[str]
    solution: Dict[str, str]
    parameters: List[str]
    parametrization: Dict[str, str]
    positive: List[str]
    provenance: Optional[str]


class ReducedDoc(TypedDict, total=False):
    """Expected reduced operator data in parameter coordinates"""
    denominators: List[str]
    e: Dict[str, str]
    Omega2: Optional[Matrix]
    S22: Optional[Matrix]
    provenance: Optional[str]


class DisplayDoc(TypedDict, total=False):
    """Coordinates the reduced pencil is displayed in"""
    coords: List[str]
    positive: List[str]
    forward: Dict[str, str]
    inverse: Dict[str, str]
    unity: Dict[str, str]
    Omega2: Matrix
    Omega1: Matrix
    S22: Matrix
    S12: Matrix
    provenance: Optional[str]


class FrobeniusDoc(TypedDict, total=False):
    potential: str
    unity: str
    euler: Dict[str, str]
    charge: str
    remainder: str
    Pi: Matrix
    tau: str
    provenance: Optional[str]


class CentralInvariantsDoc(TypedDict, total=False):
    values: List[str]
    topological: bool
    provenance: Optional[str]


class OppositeCartanDoc(TypedDict, total=False):
    basis: List[Matrix]
    provenance: Optional[str]


class CaseFixture(TypedDict, total=False):
    """Complete case document as stored under fixtures/"""
    schema: int
    case_id: str
    provenance: str
    dim: int
    n: int
    rank: int
    kappa: str
    triple: TripleDoc
    K1: Matrix
    slice: SliceDoc
    invariants: List[InvariantDoc]
    walgebra: WAlgebraDoc
    first_bracket: FirstBracketDoc
    chart: Optional[ChartDoc]
    locus: LocusDoc
    reduced: ReducedDoc
    display: DisplayDoc
    frobenius: FrobeniusDoc
    central_invariants: CentralInvariantsDoc
    opposite_cartan: Optional[OppositeCartanDoc]


class BracketRow(TypedDict):
    """Exported bracket table row, 1-based indices"""
    i: int
    j: int
    delta_order: int
    coefficient: str


class DiffPolyTerm(TypedDict):
    coeff: List[str]
    monomial: List[List[Any]]
    denominator: List[List[Any]]


class BracketTableDoc(TypedDict, total=False):
    schema: int
    case_id: str
    artifact: str
    coords: List[str]
    positive: List[str]
    denominators: List[str]
    rows: List[BracketRow]


class ReportDoc(TypedDict, total=False):
    schema: int
    case_id: str
    green: bool
    config: Dict[str, Any]
    stages: List[Dict[str, Any]]
