import sys
import json
import math
import argparse
import logging
from pathlib import Path
from typing import Dict, Any, List, Tuple, Optional

import numpy as np

import settings
import measurement
from moments import MomentTable, ComplexJSONEncoder
from ortho import DegeneracyReport, orthonormalize
from hessenberg import HessenbergData, build_hessenberg, self_commutator, sigma_form, sigma_positivity, \
    compression_identity
from dilation import harmonic_cubature, DegenerateFunctionalError
from cubature import Cubature, ExactnessReport, GAUSSIAN, HARMONIC, CertificateError, SchurResidualError, \
    ContractError, normal_quadrature, verify_exactness
from fixtures import FixtureSpec, FIXTURE_KINDS, ATOMS

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_IO = 3

STAGES = [
    "orthonormalize",
    "build_hessenberg",
    "self_commutator",
    "unitary_power_dilation",
    "harmonic_cubature",
    "normal_quadrature",
    "verify_exactness",
]

Outcome = Tuple[Dict[str, Any], int]


class UsageError(ValueError):
    pass


def _require(args: Dict, *names: str) -> None:
    missing = [f"--{name.replace('_', '-')}" for name in names if args.get(name) is None]
    if missing:
        raise UsageError(f"Command '{args['action']}' requires {', '.join(missing)}")


def sidecar_path(out: str) -> str:
    """Path of the atom list written next to an atoms fixture."""
    return str(Path(out).with_suffix(".atoms.json"))


def _fixture_spec(args: Dict) -> FixtureSpec:
    name = args.get("name")
    if name not in FIXTURE_KINDS:
        raise UsageError(f"Unknown fixture '{name}', choose one of {FIXTURE_KINDS}")
    params = {
        "ngon": {"n": args["n"]},
        "dirichlet": {"a": args["a"]},
        "atoms": {"count": args["count"], "seed": args["seed"], "disk_radius": args["disk_radius"]},
    }.get(name, {})
    return FixtureSpec(name, args["degree"], params)


def _diagnostics(h: HessenbergData, table: MomentTable) -> Dict[str, Any]:
    report = self_commutator(h, settings.NORMAL_TOL)
    positivity = sigma_positivity(h)
    equivalences = report.equivalences
    return {
        "defect": h.defect,
        "lambda_minus": report.lambda_minus,
        "defect_sq_bound": report.defect_sq_bound,
        "norm": h.norm,
        "certificate": {
            "normal": equivalences.normal,
            "determinant": equivalences.determinant,
            "defect_vanishes": equivalences.defect_vanishes,
            "invariant_subspace": equivalences.invariant_subspace,
            "agree": report.conditions_agree(),
            "passed": report.certified(),
            "tolerance": report.tolerance,
        },
        "commutator_trace": report.trace,
        "negative_count": report.negative_count,
        "corrected_min": report.corrected_min,
        "congruence_residual": sigma_form(h).congruence_residual,
        "sigma_restricted_min": positivity.restricted_min,
        "sigma_corrected_min": positivity.corrected_min,
        "compression_residual": compression_identity(h, table, h.d + 1, h.d),
        "hessenberg": h.matrix,
    }


def _exactness(report: ExactnessReport) -> Dict[str, Any]:
    return {
        "contract": report.contract.to_json(),
        "max_residual": report.max_residual,
        "worst_pair": list(report.worst_pair),
        "threshold": report.threshold,
        "passed": report.passed,
        "failures": [list(pair) for pair in report.failures],
        "residuals": [{"j": j, "k": k, "residual": r} for (j, k), r in report.residuals.items()],
    }


def _basis(table: MomentTable, d: int, report: Dict[str, Any]):
    basis = orthonormalize(table, d, settings.RANK_TOL)
    if isinstance(basis, DegeneracyReport):
        logger.warning(f"Gram matrix degenerates at degree {basis.degree}, requested {d}")
        report["degenerate_degree"] = basis.degree
        report["degenerate_pivot"] = basis.pivot
        return None
    return basis


def fixture(args: Dict) -> Outcome:
    _require(args, "degree", "out")
    spec = _fixture_spec(args)
    table = spec.build()
    table.save(args["out"])
    logger.info(f"Wrote {table} to {args['out']}")

    report = {
        "input": spec.describe(),
        "out": args["out"],
        "max_total_degree": table.max_total_degree,
        "s00": table.s00,
    }
    if spec.kind == ATOMS:
        atoms = spec.atoms()
        path = sidecar_path(args["out"])
        atoms.save(path)
        report["atoms"] = path
    return report, EXIT_OK


def diagnose(args: Dict) -> Outcome:
    _require(args, "moments", "d")
    d = args["d"]
    table = MomentTable.load(args["moments"])
    table.require_degree(2 * d + 2, f"Diagnosis at d={d}")

    report: Dict[str, Any] = {"input": {"moments": args["moments"]}, "d": d, "max_total_degree": table.max_total_degree}
    basis = _basis(table, d, report)
    if basis is None:
        return report, EXIT_FAILED

    h = build_hessenberg(table, basis, d, settings.RANK_TOL)
    report.update(_diagnostics(h, table))
    return report, EXIT_OK if report["certificate"]["passed"] else EXIT_FAILED


def quadrature(args: Dict) -> Outcome:
    _require(args, "moments", "d")
    d = args["d"]
    mode = args["mode"]
    table = MomentTable.load(args["moments"])
    table.require_degree(2 * d + 2, f"{mode.capitalize()} cubature at d={d}")

    report: Dict[str, Any] = {"input": {"moments": args["moments"]}, "d": d, "mode": mode}

    if mode == HARMONIC:
        try:
            c = harmonic_cubature(table, d, settings.WEIGHT_TOL, settings.RANK_TOL)
        except (DegenerateFunctionalError, SchurResidualError) as e:
            logger.error(str(e))
            report["error"] = str(e)
            return report, EXIT_FAILED
        status = EXIT_OK
    else:
        basis = _basis(table, d, report)
        if basis is None:
            return report, EXIT_FAILED
        h = build_hessenberg(table, basis, d, settings.RANK_TOL)
        report.update(_diagnostics(h, table))
        try:
            c = normal_quadrature(h, basis, table, settings.NORMAL_TOL, settings.WEIGHT_TOL, force=args["force"])
        except (CertificateError, SchurResidualError) as e:
            logger.error(f"{e} (use --force to emit a cubature anyway)")
            report["error"] = str(e)
            return report, EXIT_FAILED
        status = EXIT_FAILED if c.forced else EXIT_OK

    exactness = verify_exactness(c, table, settings.EXACTNESS_TOL)
    report["cubature"] = c.to_json()
    report["node_count"] = len(c)
    report["exactness"] = _exactness(exactness)
    if not exactness.passed:
        status = EXIT_FAILED

    if args.get("out"):
        c.save(args["out"])
        logger.info(f"Wrote {c} to {args['out']}")
        report["out"] = args["out"]
    return report, status


def verify(args: Dict) -> Outcome:
    _require(args, "moments", "cubature")
    table = MomentTable.load(args["moments"])
    c = Cubature.load(args["cubature"])
    expected = args.get("contract")
    if expected is not None and expected != c.contract.kind:
        raise ContractError(f"Cubature claims a {c.contract.kind} contract, {expected} expected")

    exactness = verify_exactness(c, table, settings.EXACTNESS_TOL)
    for j, k in exactness.failures:
        logger.info(f"Pair ({j}, {k}) off by {exactness.residuals[(j, k)]}")
    report = {
        "input": {"moments": args["moments"], "cubature": args["cubature"]},
        "node_count": len(c),
        "exactness": _exactness(exactness),
    }
    return report, EXIT_OK if exactness.passed else EXIT_FAILED


def _finite(value: Any) -> bool:
    if isinstance(value, np.ndarray):
        return bool(np.all(np.isfinite(value)))
    if isinstance(value, dict):
        return all(_finite(v) for v in value.values())
    if isinstance(value, (list, tuple)):
        return all(_finite(v) for v in value)
    if isinstance(value, complex):
        return math.isfinite(value.real) and math.isfinite(value.imag)
    if isinstance(value, float):
        return math.isfinite(value)
    return True


def _timings(recorded: Dict[str, List[Dict[str, int]]]) -> Dict[str, int]:
    return {name: measurement.total_duration(recorded, name) for name in STAGES if name in recorded}


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="Cubature Command-Line Interface",
        description="Builds moment fixtures, diagnoses Hessenberg matrices and constructs and verifies cubatures. "
                    "Reports are printed to stdout as JSON.",
        add_help=True
    )
    parser.add_argument("action", type=str, choices=["fixture", "diagnose", "quadrature", "verify"])
    parser.add_argument("name", nargs="?", type=str, default=None,
                        help=f"Fixture name for 'fixture', one of {FIXTURE_KINDS}.")
    parser.add_argument("--degree", required=False, type=int, help="Max total degree D of a fixture table.")
    parser.add_argument("--n", required=False, type=int, default=3, help="Number of vertices of the ngon fixture.")
    parser.add_argument("--a", required=False, type=float, default=1.0,
                        help="Half-width of the interval of the dirichlet fixture.")
    parser.add_argument("--count", required=False, type=int, default=1, help="Number of atoms of the atoms fixture.")
    parser.add_argument("--seed", required=False, type=int, default=0, help="Seed of the atoms fixture.")
    parser.add_argument("--disk-radius", required=False, type=float, default=1.0,
                        help="Radius of the disk the atoms are drawn from.")
    parser.add_argument("--out", required=False, type=str, help="Output file (moment table or cubature).")
    parser.add_argument("--moments", required=False, type=str, help="Moment table JSON file.")
    parser.add_argument("--d", required=False, type=int, help="Polynomial degree d.")
    parser.add_argument("--mode", required=False, type=str, default=GAUSSIAN, choices=[GAUSSIAN, HARMONIC])
    parser.add_argument("--force", action="store_true",
                        help="Emit a gaussian cubature even if the normality certificate fails.")
    parser.add_argument("--cubature", required=False, type=str, help="Cubature JSON file to verify.")
    parser.add_argument("--contract", required=False, type=str, choices=[GAUSSIAN, HARMONIC],
                        help="Contract kind the verified cubature is expected to claim.")
    parser.add_argument("--config", required=False, type=str, help="JSON file with tolerance overrides.")
    parser.add_argument("--rank-tol", required=False, type=float,
                        help=f"Gram pivot threshold relative to s00 (default: {settings.RANK_TOL}).")
    parser.add_argument("--normal-tol", required=False, type=float,
                        help=f"Normality certificate tolerance (default: {settings.NORMAL_TOL}).")
    parser.add_argument("--weight-tol", required=False, type=float,
                        help=f"Weight pruning threshold relative to s00 (default: {settings.WEIGHT_TOL}).")
    parser.add_argument("--exactness-tol", required=False, type=float,
                        help=f"Exactness pass threshold (default: {settings.EXACTNESS_TOL}).")
    parser.add_argument("--timings", required=False, type=str, help="Record stage timings to this file.")
    parser.add_argument("--verbose", action="store_true", help="Log debug output.")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format=f"%(asctime)s %(module)s: %(message)s",
    )
    args = dict(args.__dict__)

    func = {
        "fixture": fixture,
        "diagnose": diagnose,
        "quadrature": quadrature,
        "verify": verify,
    }

    defaults = settings.tolerances()
    timing = args.get("timings") is not None
    if timing:
        measurement.begin_measurement()
    try:
        if args.get("config"):
            settings.load_config(args["config"])
        settings.override(
            rank_tol=args["rank_tol"],
            normal_tol=args["normal_tol"],
            weight_tol=args["weight_tol"],
            exactness_tol=args["exactness_tol"],
        )
        report, code = func[args["action"]](args)
    except OSError as e:
        logger.error(f"I/O failure: {e}")
        report, code = {"error": str(e)}, EXIT_IO
    except ValueError as e:
        logger.error(str(e))
        report, code = {"error": str(e)}, EXIT_USAGE
    finally:
        if timing:
            recorded = measurement.end_measurement(args["timings"])
    report = {"command": args["action"], **report, "tolerances": settings.tolerances()}
    if timing:
        report["timings"] = _timings(recorded)
    settings.override(**defaults)

    assert _finite(report), "Report holds non-finite values"
    print(json.dumps(report, cls=ComplexJSONEncoder, indent=2))
    return code


if __name__ == '__main__':
    sys.exit(main())
