import json
import shutil

import pytest

import liealg
import wpencil_cli
from conftest import SL4_CASES
from errors import ExportError, PreconditionError, UnknownCaseError
from models import ArtifactKind, ExportFormat, PipelineStage, StageStatus, WorkbenchConfig
from poisson import LocalPoissonOperator
from workbench import CaseRunner, StageMachine, Workbench, format_report, import_artifact


def quick_config(**kw):
    return WorkbenchConfig(jacobi=False, **kw)


@pytest.fixture(scope='module')
def sl3_bench():
    bench = Workbench(quick_config())
    bench.run_pipeline('sl3-21')
    return bench


def test_sl3_report_is_green(sl3_bench):
    report = sl3_bench.report('sl3-21')
    assert report.green, format_report(report)
    assert [s.stage for s in report.stages] == list(PipelineStage)
    jacobi = report.stage(PipelineStage.JACOBI)
    assert jacobi.status == StageStatus.SKIPPED
    assert jacobi.error == 'Jacobi checks disabled'
    assert report.stage(PipelineStage.OPPOSITE_CARTAN).status == StageStatus.PASSED


def test_central_invariants_reach_the_context(sl3_bench):
    central = sl3_bench.context('sl3-21').central
    assert central is not None
    assert all(abs(c + 1 / 24) < 1e-9 for c in central.invariants)


def test_report_document(sl3_bench):
    doc = sl3_bench.report('sl3-21').to_dict()
    assert doc['schema'] == 1
    assert doc['case_id'] == 'sl3-21'
    assert doc['green'] is True
    assert 'debug' not in doc['config']
    assert [s['stage'] for s in doc['stages']] == [s.value for s in PipelineStage]
    assert all(set(s) == {'stage', 'status', 'checks', 'error'} for s in doc['stages'])


def test_unknown_case():
    with pytest.raises(UnknownCaseError):
        Workbench().run_pipeline('sl5-11111')


def test_context_requires_a_run():
    with pytest.raises(PreconditionError):
        Workbench().context('sl3-21')


def test_partial_run_marks_rest_not_requested():
    report = Workbench(quick_config()).run_pipeline('sl3-21', until=PipelineStage.W_ALGEBRA)
    later = report.stages[list(PipelineStage).index(PipelineStage.SKEW):]
    assert all(s.status == StageStatus.SKIPPED and s.error == 'not requested' for s in later)
    assert report.green


def test_same_config_gives_same_bytes():
    dump = lambda: json.dumps(Workbench(quick_config(seed=7)).run_pipeline(
        'sl3-21', until=PipelineStage.REDUCTION).to_dict(), sort_keys=True)
    assert dump() == dump()


def test_stage_error_halts_the_run(tmp_path):
    for case_id in liealg.available_cases():
        shutil.copy(liealg.FIXTURE_DIR / f"{case_id}.json", tmp_path)
    path = tmp_path / 'sl3-21.json'
    doc = json.loads(path.read_text(encoding='utf-8'))
    doc['locus']['solution'] = {'t3': '0', 't4': '1'}
    path.write_text(json.dumps(doc), encoding='utf-8')

    report = Workbench(quick_config(), fixture_dir=tmp_path).run_pipeline('sl3-21')
    assert report.stage(PipelineStage.LOCUS).status == StageStatus.ERROR
    after = report.stages[list(PipelineStage).index(PipelineStage.REDUCTION):]
    assert all(s.status == StageStatus.SKIPPED and s.error == 'halted' for s in after)
    assert report.halted
    assert not report.green


def test_bracket_export_round_trip(sl3_bench, tmp_path):
    out = sl3_bench.export('sl3-21', ArtifactKind.BRACKETS, ExportFormat.JSON, tmp_path / 'b2.json')
    table = json.loads(out.read_text(encoding='utf-8'))
    assert table['coords'] == ['z1', 'z2', 'z3', 'z4']
    P = import_artifact(out)
    assert isinstance(P, LocalPoissonOperator)
    assert P == sl3_bench.context('sl3-21').B2


def test_reduced_export(sl3_bench, tmp_path):
    out = sl3_bench.export('sl3-21', ArtifactKind.REDUCED, ExportFormat.JSON, tmp_path / 'reduced.json')
    P = import_artifact(out)
    assert list(P.space.names) == ['t1', 't2']
    assert 't1' in P.space.positive
    text = sl3_bench.export('sl3-21', ArtifactKind.REDUCED, ExportFormat.TEXT, tmp_path / 'reduced.txt')
    assert 'Omega =' in text.read_text(encoding='utf-8')


def test_report_export(sl3_bench, tmp_path):
    out = sl3_bench.export('sl3-21', ArtifactKind.REPORT, ExportFormat.JSON, tmp_path / 'report.json')
    doc = import_artifact(out)
    assert doc['case_id'] == 'sl3-21'
    assert doc['green'] is True


def test_import_rejects_unknown_schema(tmp_path):
    path = tmp_path / 'bad.json'
    path.write_text(json.dumps({'schema': 99}), encoding='utf-8')
    with pytest.raises(ExportError):
        import_artifact(path)
    with pytest.raises(ExportError):
        import_artifact(tmp_path / 'missing.json')


def test_case_runner_orders_reports():
    bench = Workbench(quick_config())
    reports = CaseRunner(bench, ['sl3-21-fkdv', 'sl3-21', 'sl3-21'], until=PipelineStage.W_ALGEBRA).run()
    assert [r.case_id for r in reports] == ['sl3-21', 'sl3-21-fkdv']
    assert all(r.green for r in reports)
    assert 'sl3-21=green' in bench.status_summary()


def test_status_log_is_bounded():
    bench = Workbench(quick_config())
    bench._max_log_lines = 5
    bench.run_pipeline('sl3-21', until=PipelineStage.W_ALGEBRA)
    snapshot = bench.status_snapshot()
    assert len(snapshot['log']) == 5
    assert snapshot['reports'] == {'sl3-21': True}
    assert snapshot['running'] == {}


def test_config_document_lists_only_live_settings():
    assert set(WorkbenchConfig().to_dict()) == {'seed', 'samples', 'tol', 'root_separation', 'constancy_tol',
                                              'wdvv_tol', 'max_delta_order', 'jacobi'}


def test_stage_machine():
    machine = StageMachine()
    assert machine.stages_until(PipelineStage.SL2) == [PipelineStage.LOAD, PipelineStage.SL2]
    assert len(machine.stages_until()) == len(PipelineStage)


def test_cli_lists_cases(capsys):
    assert wpencil_cli.main(['cases', 'list']) == 0
    out = capsys.readouterr().out
    assert all(case_id in out for case_id in liealg.available_cases())


def test_cli_verify_brackets(tmp_path):
    out = tmp_path / 'report.json'
    assert wpencil_cli.main(['verify', 'brackets', '--case', 'sl3-21', '--no-jacobi', '--out', str(out)]) == 0
    assert json.loads(out.read_text(encoding='utf-8'))['case_id'] == 'sl3-21'


def test_cli_reports_errors(capsys):
    assert wpencil_cli.main(['compute', 'w-algebra', '--case', 'sl9-1']) == 2
    assert 'unknown case' in capsys.readouterr().err


def test_cli_export(tmp_path):
    out = tmp_path / 'b2.txt'
    assert wpencil_cli.main(['export', '--case', 'sl3-21', '--what', 'brackets', '--format', 'text',
                             '--out', str(out)]) == 0
    assert out.read_text(encoding='utf-8').startswith('# sl3-21 brackets')


@pytest.mark.slow
def test_sl3_full_run_with_jacobi():
    report = Workbench().run_pipeline('sl3-21')
    assert report.green, format_report(report)
    assert report.stage(PipelineStage.JACOBI).status == StageStatus.PASSED


@pytest.mark.slow
@pytest.mark.parametrize('case_id', ('sl3-21-fkdv',) + SL4_CASES)
def test_other_cases_are_green(case_id):
    report = Workbench(quick_config()).run_pipeline(case_id)
    assert report.green, format_report(report)


@pytest.mark.slow
def test_fractional_locus_reports_full_jacobi_as_information():
    report = Workbench().run_pipeline('sl3-21-fkdv')
    assert report.green, format_report(report)
    checks = {c.name: c for c in report.stage(PipelineStage.REDUCTION).checks}
    assert checks['jacobi reduced B2 dispersionless'].passed
    assert checks['jacobi reduced B2 (full, info)'].details['holds'] is False
