"""
wpencil command line

    python wpencil_cli.py cases list
    python wpencil_cli.py compute w-algebra --case sl3-21
    python wpencil_cli.py verify brackets|frobenius|all [--case ID]
    python wpencil_cli.py reduce --case sl4-31
    python wpencil_cli.py central-invariants --case sl4-22 --points 5
    python wpencil_cli.py export --case sl3-21 --what brackets --format json --out b2.json

Exit status is 0 iff every requested verification is green.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import liealg
from dsred import classical_walgebra, compare_walgebra
from errors import WorkbenchException
from models import ArtifactKind, ExportFormat, PipelineStage, VerificationReport, WorkbenchConfig
from poisson import format_table
from workbench import CaseRunner, Workbench, format_operator, format_report, set_debug


def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--case', help='case id, e.g. sl3-21')
    common.add_argument('--seed', type=int, default=42)
    common.add_argument('--samples', type=int, default=5, help='sample points per sampled identity')
    common.add_argument('--tol', type=float, default=1e-9)
    common.add_argument('--out', help='write the JSON report or artifact here')
    common.add_argument('--debug', action='store_true', help='debug logging to stderr')
    common.add_argument('--no-jacobi', dest='jacobi', action='store_false', help='skip Jacobi identity stages')
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog='wpencil', description='Classical W-algebra and bihamiltonian pencil workbench')
    verbs = parser.add_subparsers(dest='verb', required=True)

    cases = verbs.add_parser('cases', parents=[common], help='bundled cases')
    cases.add_argument('action', choices=['list'])

    compute = verbs.add_parser('compute', parents=[common], help='compute a structure')
    compute.add_argument('what', choices=['w-algebra'])

    verify = verbs.add_parser('verify', parents=[common], help='run verification stages')
    verify.add_argument('what', choices=['brackets', 'frobenius', 'all'])

    verbs.add_parser('reduce', parents=[common], help='reduce to the equilibrium locus')

    central = verbs.add_parser('central-invariants', parents=[common], help='central invariants of the reduced pencil')
    central.add_argument('--points', type=int, help='sample points (overrides --samples)')

    export = verbs.add_parser('export', parents=[common], help='export an artifact')
    export.add_argument('--what', choices=[k.value for k in ArtifactKind], required=True)
    export.add_argument('--format', choices=[f.value for f in ExportFormat], default=ExportFormat.JSON.value)
    return parser


def config_from_args(args: argparse.Namespace) -> WorkbenchConfig:
    samples = getattr(args, 'points', None) or args.samples
    return WorkbenchConfig(seed=args.seed, samples=samples, tol=args.tol, jacobi=args.jacobi,
                           debug=args.debug, out=args.out)


def _require_case(args: argparse.Namespace) -> str:
    if not args.case:
        raise SystemExit(f"wpencil {args.verb}: --case is required")
    return args.case


def _write_reports(path: Optional[str], reports: Sequence[VerificationReport]) -> None:
    if not path:
        return
    docs = [r.to_dict() for r in reports]
    payload = docs[0] if len(docs) == 1 else {'schema': 1, 'reports': docs}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + '\n', encoding='utf-8')


def _finish(reports: Sequence[VerificationReport], out: Optional[str]) -> int:
    for report in reports:
        print(format_report(report), end='')
    _write_reports(out, reports)
    return 0 if reports and all(r.green for r in reports) else 1


def run(args: argparse.Namespace) -> int:
    config = config_from_args(args)
    if config.debug:
        set_debug(True)
    bench = Workbench(config)

    if args.verb == 'cases':
        for case_id in liealg.available_cases():
            print(f"{case_id:<14} {liealg.load_case(case_id).fixture.get('provenance', '')}")
        return 0

    if args.verb == 'compute':
        case = liealg.load_case(_require_case(args))
        B2 = classical_walgebra(case)
        print(format_table(B2), end='')
        checks = compare_walgebra(case, B2)
        for c in checks:
            if not c.passed:
                print(f"FAIL {c.name}: {c.residual}")
        return 0 if all(c.passed for c in checks) else 1

    if args.verb == 'verify':
        until = {'brackets': PipelineStage.EXACTNESS, 'frobenius': PipelineStage.POTENTIAL}.get(args.what)
        case_ids = [args.case] if args.case else liealg.available_cases()
        return _finish(CaseRunner(bench, case_ids, until).run(), args.out)

    if args.verb == 'reduce':
        case_id = _require_case(args)
        report = bench.run_pipeline(case_id, until=PipelineStage.DISPLAY)
        ctx = bench.context(case_id)
        if ctx.reduced is not None:
            print(format_operator(case_id, ArtifactKind.REDUCED, ctx.reduced.truncated))
        return _finish([report], args.out)

    if args.verb == 'central-invariants':
        case_id = _require_case(args)
        report = bench.run_pipeline(case_id)
        central = bench.context(case_id).central
        if central is not None:
            print(central.format_table())
        return _finish([report], args.out)

    if args.verb == 'export':
        case_id = _require_case(args)
        what = ArtifactKind(args.what)
        until = {ArtifactKind.BRACKETS: PipelineStage.W_ALGEBRA, ArtifactKind.REDUCED: PipelineStage.REDUCTION}.get(what)
        bench.run_pipeline(case_id, until=until)
        out = args.out or f"{case_id}-{what.value}.{args.format}"
        print(bench.export(case_id, what, ExportFormat(args.format), out))
        return 0

    raise SystemExit(f"unknown verb {args.verb}")


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except WorkbenchException as e:
        stage = f" [{e.stage}]" if e.stage else ''
        print(f"error{stage}: {e.message}", file=sys.stderr)
        return 2


if __name__ == '__main__':
    sys.exit(main())
