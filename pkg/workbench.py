"""
Verification pipeline for the bundled nilpotent cases

A Workbench runs the stages of PipelineStage in order for one case, keeps
the intermediate objects so artifacts can be exported afterwards, and turns
every stage into a StageResult. A stage that raises halts the run; the
remaining stages are marked skipped. Failed identities do not halt.
"""

import json
import logging
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Union

import sympy

import liealg
from centralinv import RESCALE_FACTORS, CentralInvariantReport, central_invariants, rescale_check
from diffalg import JetSpace
from dsred import (Pencil, adapted_chart_checks, casimir_involution, chart_maps, classical_walgebra,
                   compare_walgebra, first_bracket, walgebra_homogeneity)
from equilibrium import (DerivedPencil, DisplayTensors, EquilibriumLocus, ReducedOperator, derived_pencil,
                         dirac_correction, dirac_reduce, display_checks, display_tensors, equilibrium_constraints,
                         locus_checks, pencil_field, reduced_fixture_checks)
from errors import (ExportError, PreconditionError, UnknownCaseError, UnsupportedCaseError, WorkbenchException)
from frobgeom import (ContravariantMetric, FrobeniusPotential, euler_residual, flat_pencil_check,
                      frobenius_algebra_checks, intersection_form, levi_civita_consistency, matrix_check,
                      metric_from_potential, qfpm_check, solve_tau, wdvv_residual)
from liealg import NilpotentCase
from models import (ArtifactKind, CheckReport, ExportFormat, PipelineStage, StageResult, StageStatus,
                    VerificationReport, WorkbenchConfig)
from poisson import (LocalPoissonOperator, bracket_rows, change_coordinates, check_jacobi, extract_dispersion,
                     format_matrix, format_table, operator_from_rows, pencil_checks, skew_report)
from wb_types import BracketTableDoc, ReportDoc

# ===== Config =====
SCHEMA_VERSION = 1
MAX_LOG_LINES = 500
LOG_FORMAT = '[%(asctime)s] %(levelname)s %(name)s: %(message)s'
LOG_DATEFMT = '%H:%M:%S'

logger = logging.getLogger('wpencil')


def set_debug(enabled: bool) -> None:
    """Enable or disable debug logging for every wpencil module at runtime."""
    if enabled:
        logger.setLevel(logging.DEBUG)
        if not logger.handlers:
            handler = logging.StreamHandler()
            handler.setLevel(logging.DEBUG)
            handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=LOG_DATEFMT))
            logger.addHandler(handler)
    else:
        logger.setLevel(logging.WARNING)


class StageMachine:
    """Stage ordering and halting rules of a pipeline run"""

    ORDER = tuple(PipelineStage)
    HALTING = {StageStatus.ERROR}

    def stages_until(self, until: Optional[PipelineStage] = None) -> List[PipelineStage]:
        if until is None:
            return list(self.ORDER)
        return list(self.ORDER[:self.ORDER.index(until) + 1])

    def can_continue(self, result: StageResult) -> bool:
        return result.status not in self.HALTING

    def status_of(self, checks: Sequence[CheckReport]) -> StageStatus:
        return StageStatus.PASSED if all(c.passed for c in checks) else StageStatus.FAILED


@dataclass
class PipelineContext:
    """Objects built so far in one run"""
    case_id: str
    case: Optional[NilpotentCase] = None
    B2: Optional[LocalPoissonOperator] = None
    pencil: Optional[Pencil] = None
    locus: Optional[EquilibriumLocus] = None
    reduced: Optional[ReducedOperator] = None
    derived: Optional[DerivedPencil] = None
    tensors: Optional[DisplayTensors] = None
    potential: Optional[FrobeniusPotential] = None
    central: Optional[CentralInvariantReport] = None
    extras: Dict[str, Any] = field(default_factory=dict)

    def require(self, name: str):
        value = getattr(self, name)
        if value is None:
            raise PreconditionError(f"{name} has not been computed for {self.case_id}")
        return value


class Workbench:
    """Runs the pipeline for cases and exports what it computed"""

    def __init__(self, config: Optional[WorkbenchConfig] = None, fixture_dir: Optional[Path] = None):
        self.config = config or WorkbenchConfig()
        self.fixture_dir = fixture_dir
        self.state_machine = StageMachine()
        self._lock = threading.Lock()
        self._contexts: Dict[str, PipelineContext] = {}
        self._reports: Dict[str, VerificationReport] = {}
        self._current: Dict[str, Optional[str]] = {}
        self._log: List[str] = []
        self._max_log_lines = MAX_LOG_LINES
        self._stages: Dict[PipelineStage, Callable[[PipelineContext], List[CheckReport]]] = {
            PipelineStage.LOAD: self._load,
            PipelineStage.SL2: self._sl2,
            PipelineStage.INVARIANTS: self._invariants,
            PipelineStage.OPPOSITE_CARTAN: self._opposite_cartan,
            PipelineStage.W_ALGEBRA: self._w_algebra,
            PipelineStage.SKEW: self._skew,
            PipelineStage.JACOBI: self._jacobi,
            PipelineStage.FIRST_BRACKET: self._first_bracket,
            PipelineStage.EXACTNESS: self._exactness,
            PipelineStage.CHART: self._chart,
            PipelineStage.LOCUS: self._locus,
            PipelineStage.REDUCTION: self._reduction,
            PipelineStage.DERIVED_PENCIL: self._derived_pencil,
            PipelineStage.DISPLAY: self._display,
            PipelineStage.LEVI_CIVITA: self._levi_civita,
            PipelineStage.FLATNESS: self._flatness,
            PipelineStage.QFPM: self._qfpm,
            PipelineStage.POTENTIAL: self._potential,
            PipelineStage.CENTRAL_INVARIANTS: self._central_invariants,
        }
        if self.config.debug:
            set_debug(True)

    # ----------------------- Public control -----------------------
    def run_pipeline(self, case_id: str, until: Optional[PipelineStage] = None) -> VerificationReport:
        if case_id not in liealg.available_cases():
            raise UnknownCaseError(f"unknown case '{case_id}'", detail={'known': liealg.available_cases()})
        ctx = PipelineContext(case_id)
        report = VerificationReport(case_id, self.config, schema=SCHEMA_VERSION)
        planned = self.state_machine.stages_until(until)
        halted = False
        for stage in PipelineStage:
            if halted or stage not in planned:
                reason = 'halted' if halted else 'not requested'
                report.stages.append(StageResult(stage, StageStatus.SKIPPED, error=reason))
                continue
            result = self._run_stage(ctx, stage)
            report.stages.append(result)
            halted = not self.state_machine.can_continue(result)
        with self._lock:
            self._contexts[case_id] = ctx
            self._reports[case_id] = report
            self._current[case_id] = None
            self._append_log(f"{case_id}: {'green' if report.green else 'not green'}")
        return report

    def _run_stage(self, ctx: PipelineContext, stage: PipelineStage) -> StageResult:
        with self._lock:
            self._current[ctx.case_id] = stage.value
        logger.debug(f"{ctx.case_id}: stage {stage.value} started")
        started = time.perf_counter()
        result = StageResult(stage)
        try:
            result.checks = self._stages[stage](ctx)
            result.status = self.state_machine.status_of(result.checks)
        except UnsupportedCaseError as e:
            result.status = StageStatus.SKIPPED
            result.error = e.message
        except WorkbenchException as e:
            result.status = StageStatus.ERROR
            result.error = f"{stage.value}: {e.message}"
            logger.error(f"{ctx.case_id}: {result.error}")
        except Exception as e:
            result.status = StageStatus.ERROR
            result.error = f"{stage.value}: {type(e).__name__}: {e}"
            logger.exception(f"{ctx.case_id}: stage {stage.value} crashed")
        result.elapsed = time.perf_counter() - started
        logger.debug(f"{ctx.case_id}: stage {stage.value} {result.status.value} in {result.elapsed:.2f}s")
        with self._lock:
            failing = [c.name for c in result.checks if not c.passed]
            line = f"{ctx.case_id} {stage.value}: {result.status.value}"
            if failing:
                line += f" ({', '.join(failing[:3])})"
            if result.error:
                line += f" [{result.error}]"
            self._append_log(line)
        return result

    def context(self, case_id: str) -> PipelineContext:
        with self._lock:
            if case_id not in self._contexts:
                raise PreconditionError(f"pipeline has not been run for {case_id}")
            return self._contexts[case_id]

    def report(self, case_id: str) -> VerificationReport:
        with self._lock:
            if case_id not in self._reports:
                raise PreconditionError(f"pipeline has not been run for {case_id}")
            return self._reports[case_id]

    # ----------------------- Stages -----------------------
    def _load(self, ctx: PipelineContext) -> List[CheckReport]:
        ctx.case = liealg.load_case(ctx.case_id, self.fixture_dir)
        return [CheckReport('fixture loaded', True, details={'dim': ctx.case.dim, 'n': ctx.case.n})]

    def _sl2(self, ctx: PipelineContext) -> List[CheckReport]:
        case = ctx.require('case')
        return liealg.verify_sl2(case.triple) + liealg.slice_homogeneity(case)

    def _invariants(self, ctx: PipelineContext) -> List[CheckReport]:
        case = ctx.require('case')
        liealg.restricted_invariants(case)
        rank = liealg.invariant_jacobian_rank(case, self.config.seed)
        residuals = liealg.ad_invariance_residuals(case, self.config.seed)
        return [
            CheckReport('invariants match char-poly relations', True, details={'count': len(case.invariants)}),
            CheckReport('invariants independent', rank == len(case.invariants), residual=rank),
            CheckReport('trace form ad-invariant', all(r.is_zero() for r in residuals)),
        ]

    def _opposite_cartan(self, ctx: PipelineContext) -> List[CheckReport]:
        return liealg.verify_opposite_cartan(ctx.require('case'))

    def _w_algebra(self, ctx: PipelineContext) -> List[CheckReport]:
        case = ctx.require('case')
        ctx.B2 = classical_walgebra(case)
        return compare_walgebra(case, ctx.B2) + walgebra_homogeneity(case, ctx.B2)

    def _skew(self, ctx: PipelineContext) -> List[CheckReport]:
        return [skew_report(ctx.require('B2'), 'skew B2')]

    def _jacobi(self, ctx: PipelineContext) -> List[CheckReport]:
        if not self.config.jacobi:
            raise UnsupportedCaseError('Jacobi checks disabled')
        return [check_jacobi(ctx.require('B2')).to_check('jacobi B2')]

    def _first_bracket(self, ctx: PipelineContext) -> List[CheckReport]:
        case = ctx.require('case')
        ctx.pencil = first_bracket(case, ctx.require('B2'))
        checks = [skew_report(ctx.pencil.P1, 'skew B1')]
        involution = case.fixture['first_bracket'].get('involution')
        if involution:
            densities = {name: case.invariant(name).expr for name in involution}
            checks += casimir_involution(ctx.pencil.P1, densities)
        return checks

    def _exactness(self, ctx: PipelineContext) -> List[CheckReport]:
        pencil = ctx.require('pencil')
        return pencil_checks(pencil.P2, pencil.P1, pencil.liouville, jacobi=self.config.jacobi)

    def _chart(self, ctx: PipelineContext) -> List[CheckReport]:
        case = ctx.require('case')
        if not case.fixture.get('chart'):
            raise UnsupportedCaseError(f"{case.case_id} reduces in slice coordinates")
        return adapted_chart_checks(case, ctx.require('pencil').P2)

    def _locus(self, ctx: PipelineContext) -> List[CheckReport]:
        ctx.locus = equilibrium_constraints(ctx.require('case'))
        return locus_checks(ctx.locus, self.config.seed)

    def _locus_operator(self, ctx: PipelineContext) -> LocalPoissonOperator:
        P2 = ctx.require('pencil').P2
        locus = ctx.require('locus')
        if list(P2.space.names) == list(locus.space.names):
            return P2
        _, target, forward, inverse = chart_maps(ctx.case)
        return change_coordinates(P2, forward, inverse, target)

    def _reduced_jacobi(self, ctx: PipelineContext, P: LocalPoissonOperator, name: str) -> List[CheckReport]:
        """Full Jacobi on coordinate loci; elsewhere only the dispersionless minor is Poisson"""
        if ctx.require('locus').is_coordinate_locus:
            return [check_jacobi(P).to_check(name)]
        full = check_jacobi(P)
        info = full.to_check(f"{name} (full, info)")
        info.passed = True
        info.details['holds'] = full.passed
        return [check_jacobi(P.dispersionless()).to_check(f"{name} dispersionless"), info]

    def _reduction(self, ctx: PipelineContext) -> List[CheckReport]:
        case = ctx.require('case')
        P = self._locus_operator(ctx)
        ctx.reduced = dirac_reduce(P, ctx.locus, self.config.max_delta_order)
        checks = reduced_fixture_checks(case, ctx.reduced)
        checks += dirac_correction(P, ctx.locus).to_checks()
        checks.append(skew_report(ctx.reduced.truncated, 'skew reduced B2'))
        if self.config.jacobi:
            checks += self._reduced_jacobi(ctx, ctx.reduced.full, 'jacobi reduced B2')
        return checks

    def _derived_pencil(self, ctx: PipelineContext) -> List[CheckReport]:
        case = ctx.require('case')
        P2 = ctx.require('reduced').full
        ctx.derived = derived_pencil(P2, pencil_field(case, P2.space), self.config.seed)
        checks = list(ctx.derived.checks)
        checks.append(skew_report(ctx.derived.P1, 'skew reduced B1'))
        if self.config.jacobi:
            checks += self._reduced_jacobi(ctx, ctx.derived.P1, 'jacobi reduced B1')
            checks += self._reduced_jacobi(ctx, ctx.derived.P2 + ctx.derived.P1, 'jacobi reduced B2 + B1')
        return checks

    def _display(self, ctx: PipelineContext) -> List[CheckReport]:
        case = ctx.require('case')
        ctx.tensors = display_tensors(case, ctx.require('derived'))
        return display_checks(case, ctx.tensors, self.config.samples, self.config.seed, self.config.tol)

    def _levi_civita(self, ctx: PipelineContext) -> List[CheckReport]:
        derived = ctx.require('derived')
        checks = []
        for name, P in (('B2', derived.P2), ('B1', derived.P1)):
            data = extract_dispersion(P)
            report = levi_civita_consistency(ContravariantMetric(data.Omega, data.coords), data.gamma_table(),
                                             self.config.samples, self.config.seed, self.config.tol)
            report.name = f"reduced {name}: {report.name}"
            checks.append(report)
        return checks

    def _metrics(self, ctx: PipelineContext):
        tensors = ctx.require('tensors')
        coords = tensors.space.coords
        return ContravariantMetric(tensors.Omega2, coords), ContravariantMetric(tensors.Omega1, coords)

    def _flatness(self, ctx: PipelineContext) -> List[CheckReport]:
        omega2, omega1 = self._metrics(ctx)
        return flat_pencil_check(omega2, omega1, samples=self.config.samples, seed=self.config.seed,
                                 tol=self.config.tol)

    def _qfpm(self, ctx: PipelineContext) -> List[CheckReport]:
        doc = ctx.require('case').fixture['frobenius']
        tensors = ctx.require('tensors')
        omega2, omega1 = self._metrics(ctx)
        tau = solve_tau(omega1, [tensors.unity.get(name, 0) for name in tensors.space.names])
        logger.debug(f"{tensors.space.names}: tau = {tau}")
        data = qfpm_check(omega2, omega1, tau, sympy.Rational(doc['charge']), self.config.samples,
                          self.config.seed, self.config.tol)
        return data.checks

    def _potential(self, ctx: PipelineContext) -> List[CheckReport]:
        doc = ctx.require('case').fixture['frobenius']
        tensors = ctx.require('tensors')
        space = tensors.space
        cfg = self.config
        ctx.potential = Fp = FrobeniusPotential.from_fixture(doc, space.coords)
        Pi, _ = metric_from_potential(Fp)
        expected_pi = sympy.Matrix([[space.parse(x) for x in row] for row in doc['Pi']])
        checks = [
            matrix_check('Pi from the potential', Pi, expected_pi),
            matrix_check('Pi^-1 = Omega1', Pi.inv(), tensors.Omega1, cfg.samples, cfg.seed, cfg.tol),
            matrix_check('intersection form = Omega2', intersection_form(Fp).matrix, tensors.Omega2,
                         cfg.samples, cfg.seed, cfg.tol),
        ]
        wdvv = wdvv_residual(Fp, cfg.samples, cfg.seed)
        checks.append(CheckReport('WDVV', wdvv <= cfg.wdvv_tol, residual=wdvv, details={'vacuous': Fp.dim < 3}))
        remainder = euler_residual(Fp)
        expected = space.parse(doc.get('remainder', '0'))
        checks.append(CheckReport('Euler remainder', sympy.expand(remainder.expr - expected) == 0,
                                  residual=remainder.expr))
        unity = {name: value for name, value in tensors.unity.items() if value != 0}
        checks.append(CheckReport('unity is the pencil field', unity == {Fp.unity: 1},
                                  details={'unity': {k: str(v) for k, v in unity.items()}}))
        checks += frobenius_algebra_checks(Fp, cfg.samples, cfg.seed, cfg.tol)
        return checks

    def _central_invariants(self, ctx: PipelineContext) -> List[CheckReport]:
        case = ctx.require('case')
        tensors = ctx.require('tensors')
        doc = case.fixture['central_invariants']
        cfg = self.config
        expected = [sympy.Rational(v) for v in doc['values']]
        ctx.central = central_invariants(tensors, case.case_id, cfg.samples, cfg.seed, expected, cfg.tol,
                                         cfg.root_separation, cfg.constancy_tol)
        checks = ctx.central.to_checks()
        checks.append(CheckReport('topological type', ctx.central.topological == bool(doc['topological']),
                                  details={'topological': ctx.central.topological}))
        for kappa in RESCALE_FACTORS:
            checks.append(rescale_check(tensors, ctx.central, kappa, cfg.samples, cfg.seed, cfg.tol))
        return checks

    # ----------------------- Artifacts -----------------------
    def artifact(self, case_id: str, what: ArtifactKind) -> Union[LocalPoissonOperator, VerificationReport]:
        if what == ArtifactKind.REPORT:
            return self.report(case_id)
        ctx = self.context(case_id)
        if what == ArtifactKind.BRACKETS:
            return ctx.require('B2')
        return ctx.require('reduced').truncated

    def export(self, case_id: str, what: ArtifactKind, fmt: ExportFormat, path: Union[str, Path]) -> Path:
        path = Path(path)
        item = self.artifact(case_id, what)
        if fmt == ExportFormat.JSON:
            doc = item.to_dict() if isinstance(item, VerificationReport) else bracket_table(case_id, what, item)
            text = json.dumps(doc, indent=2, sort_keys=True) + '\n'
        elif isinstance(item, VerificationReport):
            text = format_report(item)
        else:
            text = format_operator(case_id, what, item)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text, encoding='utf-8')
        except OSError as e:
            raise ExportError(f"could not write {path}: {e}", detail={'path': str(path)})
        with self._lock:
            self._append_log(f"exported {case_id} {what.value} to {path}")
        return path

    # ----------------------- Status helpers -----------------------
    def status_summary(self) -> str:
        with self._lock:
            done = ', '.join(f"{c}={'green' if r.green else 'red'}" for c, r in sorted(self._reports.items()))
            running = ', '.join(f"{c}:{s}" for c, s in sorted(self._current.items()) if s)
            return f"Workbench: done [{done or '-'}] | running [{running or '-'}]"

    def status_snapshot(self) -> Dict[str, Any]:
        with self._lock:
            return {
                'config': self.config.to_dict(),
                'running': {c: s for c, s in self._current.items() if s},
                'reports': {c: r.green for c, r in self._reports.items()},
                'log': list(self._log),
            }

    def _append_log(self, line: str) -> None:
        ts = time.strftime('%H:%M:%S', time.localtime())
        self._log.append(f"[{ts}] {line}")
        if len(self._log) > self._max_log_lines:
            self._log = self._log[-self._max_log_lines:]


class CaseRunner:
    """Runs distinct cases on worker threads; reports come back in case-id order"""

    def __init__(self, workbench: Workbench, case_ids: Sequence[str], until: Optional[PipelineStage] = None):
        self.workbench = workbench
        self.case_ids = sorted(set(case_ids))
        self.until = until
        self._results: Dict[str, VerificationReport] = {}
        self._errors: Dict[str, WorkbenchException] = {}
        self._lock = threading.Lock()
        self._threads: List[threading.Thread] = []

    def _worker(self, case_id: str) -> None:
        try:
            report = self.workbench.run_pipeline(case_id, self.until)
        except WorkbenchException as e:
            with self._lock:
                self._errors[case_id] = e
            return
        with self._lock:
            self._results[case_id] = report

    def start(self) -> None:
        for case_id in self.case_ids:
            t = threading.Thread(target=self._worker, args=(case_id,), name=f"CaseRunner-{case_id}", daemon=True)
            self._threads.append(t)
            t.start()

    def join(self) -> List[VerificationReport]:
        for t in self._threads:
            t.join()
        with self._lock:
            if self._errors:
                case_id, error = sorted(self._errors.items())[0]
                raise error
            return [self._results[c] for c in self.case_ids]

    def run(self) -> List[VerificationReport]:
        self.start()
        return self.join()


def run_pipeline(case_id: str, config: Optional[WorkbenchConfig] = None) -> VerificationReport:
    return Workbench(config).run_pipeline(case_id)


# ==========================================
# FORMATS
# ==========================================
def bracket_table(case_id: str, what: ArtifactKind, P: LocalPoissonOperator) -> BracketTableDoc:
    space = P.space
    return {
        'schema': SCHEMA_VERSION,
        'case_id': case_id,
        'artifact': what.value,
        'coords': list(space.names),
        'positive': sorted(space.positive),
        'denominators': sorted(space.denominators),
        'rows': bracket_rows(P),
    }


def format_operator(case_id: str, what: ArtifactKind, P: LocalPoissonOperator) -> str:
    data = extract_dispersion(P)
    parts = [f"# {case_id} {what.value} on ({', '.join(P.space.names)})\n", format_table(P), '\n',
             format_matrix('F', data.F), format_matrix('Omega', data.Omega)]
    for k in sorted(data.S):
        parts.append(format_matrix(f"S{k}", data.S[k]))
    return ''.join(parts)


def format_report(report: VerificationReport) -> str:
    lines = [f"{report.case_id}: {'GREEN' if report.green else 'NOT GREEN'}"]
    for s in report.stages:
        passed = sum(1 for c in s.checks if c.passed)
        line = f"  {s.stage.value:<26} {s.status.value:<8} {passed}/{len(s.checks)}"
        if s.error:
            line += f"  {s.error}"
        lines.append(line)
        for c in s.checks:
            if not c.passed:
                lines.append(f"      FAIL {c.name}: {c.residual}")
    return '\n'.join(lines) + '\n'


def import_artifact(path: Union[str, Path]) -> Union[LocalPoissonOperator, ReportDoc]:
    """Read back an exported JSON artifact: a bracket table becomes an operator, a report stays a document"""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding='utf-8'))
    except (OSError, ValueError) as e:
        raise ExportError(f"could not read {path}: {e}", detail={'path': str(path)})
    if doc.get('schema') != SCHEMA_VERSION:
        raise ExportError(f"unsupported schema {doc.get('schema')} in {path}")
    if 'rows' not in doc:
        return doc
    space = JetSpace(doc['coords'], positive=doc.get('positive', []), denominators=doc.get('denominators', []))
    return operator_from_rows(space, doc['rows'])
