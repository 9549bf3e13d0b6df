from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np


class StageStatus(Enum):
    """Pipeline stage outcomes"""
    PENDING = 'pending'
    PASSED = 'passed'
    FAILED = 'failed'
    ERROR = 'error'
    SKIPPED = 'skipped'


class PipelineStage(Enum):
    """Pipeline stages in execution order"""
    LOAD = 'load'
    SL2 = 'sl2'
    INVARIANTS = 'restricted_invariants'
    OPPOSITE_CARTAN = 'opposite_cartan'
    W_ALGEBRA = 'w_algebra'
    SKEW = 'skew'
    JACOBI = 'jacobi'
    FIRST_BRACKET = 'first_bracket'
    EXACTNESS = 'exactness'
    CHART = 'adapted_chart'
    LOCUS = 'equilibrium_locus'
    REDUCTION = 'dirac_reduction'
    DERIVED_PENCIL = 'derived_pencil'
    DISPLAY = 'display_tensors'
    LEVI_CIVITA = 'levi_civita_consistency'
    FLATNESS = 'flatness'
    QFPM = 'qfpm'
    POTENTIAL = 'potential'
    CENTRAL_INVARIANTS = 'central_invariants'


class ArtifactKind(Enum):
    """Exportable artifacts"""
    BRACKETS = 'brackets'
    REDUCED = 'reduced'
    REPORT = 'report'


class ExportFormat(Enum):
    JSON = 'json'
    TEXT = 'text'


def _plain(value: Any) -> Any:
    """JSON-safe copy of a detail value; numpy and sympy scalars become bool, int or str"""
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    return str(value)


@dataclass
class CheckReport:
    """Single named identity check with its residual"""
    name: str
    passed: bool
    residual: Optional[Any] = None
    details: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'name': self.name,
            'passed': bool(self.passed),
            'residual': None if self.residual is None else str(self.residual),
            'details': {str(k): _plain(v) for k, v in self.details.items()},
        }


@dataclass
class StageResult:
    """Outcome of one pipeline stage"""
    stage: PipelineStage
    status: StageStatus = StageStatus.PENDING
    checks: List[CheckReport] = field(default_factory=list)
    error: Optional[str] = None
    elapsed: float = 0.0

    @property
    def passed(self) -> bool:
        return self.status == StageStatus.PASSED

    def to_dict(self) -> Dict[str, Any]:
        return {
            'stage': self.stage.value,
            'status': self.status.value,
            'checks': [c.to_dict() for c in self.checks],
            'error': self.error,
        }


@dataclass
class WorkbenchConfig:
    """Seeds, sample counts and tolerances for one run"""
    seed: int = 42
    samples: int = 5
    tol: float = 1e-9
    root_separation: float = 1e-8
    constancy_tol: float = 1e-8
    wdvv_tol: float = 1e-10
    max_delta_order: int = 3
    jacobi: bool = True
    debug: bool = False
    out: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data.pop('debug')
        data.pop('out')
        return data


@dataclass
class VerificationReport:
    """Per-case pipeline report; green iff no stage failed and every stage ran or was not applicable"""
    case_id: str
    config: WorkbenchConfig
    stages: List[StageResult] = field(default_factory=list)
    schema: int = 1

    @property
    def green(self) -> bool:
        return bool(self.stages) and not self.halted and all(
            s.status in (StageStatus.PASSED, StageStatus.SKIPPED) for s in self.stages)

    @property
    def halted(self) -> bool:
        return any(s.status == StageStatus.ERROR for s in self.stages)

    def stage(self, stage: PipelineStage) -> Optional[StageResult]:
        for s in self.stages:
            if s.stage == stage:
                return s
        return None

    def to_dict(self) -> Dict[str, Any]:
        """JSON document without wall-clock timings, so equal configs give equal bytes"""
        return {
            'schema': self.schema,
            'case_id': self.case_id,
            'green': self.green,
            'config': self.config.to_dict(),
            'stages': [s.to_dict() for s in self.stages],
        }
