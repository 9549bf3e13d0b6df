from typing import Any, Dict, Optional


class WorkbenchException(Exception):
    """Base error for every hard failure raised by the workbench"""
    def __init__(self, message: str, stage: Optional[str] = None, detail: Optional[Dict[str, Any]] = None):
        self.message = message
        self.stage = stage
        self.detail = detail or {}
        super().__init__(self.message)


class FieldDivisionError(WorkbenchException):
    """Division by an exact zero in the coefficient field"""


class FieldMembershipError(WorkbenchException):
    """A constant that does not lie in Q(i, sqrt2, sqrt3)"""


class DomainEvaluationError(WorkbenchException):
    """Evaluation at a pole, at log(0) or at an undefined power"""


class SamplingError(WorkbenchException):
    """Too few sample points off the singular locus"""


class UnknownCaseError(WorkbenchException):
    """Case id without a bundled fixture"""


class UnsupportedCaseError(WorkbenchException):
    """Operation not available for this case"""


class CapacityError(WorkbenchException):
    """Jet order beyond the configured maximum"""


class DenominatorError(WorkbenchException):
    """Expression with a denominator the jet space does not allow"""


class FixtureMismatchError(WorkbenchException):
    """Computed value disagrees with the transcribed fixture"""


class SingularSystemError(WorkbenchException):
    """Linear system without a unique solution"""


class PreconditionError(WorkbenchException):
    """Operation called on data that violates its precondition"""


class RootCollisionError(WorkbenchException):
    """Characteristic roots closer than the separation threshold"""


class NonQuadraticRemainderError(WorkbenchException):
    """Euler remainder of degree above two"""


class ExportError(WorkbenchException):
    """Artifact could not be written or read back"""
