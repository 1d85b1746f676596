import argparse
import logging
import json
import time
from typing import Dict, List, Any, Callable

import numpy as np
from tqdm import tqdm

import settings
import measurement
from moments import moments_from_atoms
from ortho import DegeneracyReport, orthonormalize
from hessenberg import HessenbergData, build_hessenberg, self_commutator, sigma_form, compression_identity, \
    compress_to_subspace
from dilation import unitary_power_dilation, power_matching_residual, harmonic_cubature
from cubature import normal_quadrature, verify_exactness, match_atoms, compression_quadrature
from fixtures import circle_arclength, ngon, dirichlet_interval, random_atoms, vanishing_subspace, EVEN, ODD

logger = logging.getLogger(__name__)
logging.basicConfig(
    level=logging.INFO,
    format=f"%(asctime)s %(module)s: %(message)s",
)

benchmark_results: Dict[str, Dict[str, Any]] = {}


def _hessenberg(table, d: int) -> HessenbergData:
    basis = orthonormalize(table, d)
    assert not isinstance(basis, DegeneracyReport), basis
    return build_hessenberg(table, basis, d)


def _record(name: str, start: int, cases: int, worst: Dict[str, float], failures: List[str]) -> None:
    stop = time.time_ns()
    passed = not failures
    for failure in failures[:10]:
        logger.info(f"{name}: {failure}")
    logger.info(f"Benchmarking {name} complete - {cases} cases, {len(failures)} failures, "
                f"{(stop - start) / 1e9:.3f} s")
    benchmark_results[name] = {
        "cases": cases,
        "passed": passed,
        "failures": len(failures),
        "duration": stop - start,
        "worst": worst,
    }


def benchmark_jordan(args: Dict[str, Any]) -> None:
    start = time.time_ns()
    worst = {"hessenberg": 0.0, "defect": 0.0, "commutator": 0.0, "lambda_minus": 0.0}
    failures = []
    degrees = list(range(2, 9))
    for d in tqdm(degrees):
        h = _hessenberg(circle_arclength(2 * d + 2), d)
        report = self_commutator(h)
        expected = np.zeros((d + 1, d + 1))
        expected[0, 0], expected[d, d] = 1, -1

        errors = {
            "hessenberg": float(np.max(np.abs(h.matrix - np.eye(d + 1, k=-1)))),
            "defect": abs(h.defect - 1),
            "commutator": float(np.max(np.abs(report.commutator - expected))),
            "lambda_minus": abs(report.lambda_minus + 1) + abs(report.lambda_minus - report.defect_sq_bound),
        }
        limits = {"hessenberg": 1e-12, "defect": 1e-12, "commutator": 1e-10, "lambda_minus": 1e-10}
        for key, value in errors.items():
            worst[key] = max(worst[key], value)
            if value > limits[key]:
                failures.append(f"d={d}: {key} error {value}")
    _record("jordan", start, len(degrees), worst, failures)


def benchmark_ngon(args: Dict[str, Any]) -> None:
    start = time.time_ns()
    n = 7
    table = ngon(n, 16)
    worst = {"hessenberg": 0.0, "compression": 0.0}
    failures = []
    degrees = list(range(2, 6))
    for d in tqdm(degrees):
        h = _hessenberg(table, d)
        report = self_commutator(h)
        hessenberg_error = float(np.max(np.abs(h.matrix - np.eye(d + 1, k=-1))))
        compression_error = compression_identity(h, table, d + 1, d)
        worst["hessenberg"] = max(worst["hessenberg"], hessenberg_error)
        worst["compression"] = max(worst["compression"], compression_error)
        if hessenberg_error > 1e-12:
            failures.append(f"d={d}: not a Jordan block ({hessenberg_error})")
        if report.certified():
            failures.append(f"d={d}: certificate passed for the {n}-gon")
        if compression_error > 1e-9:
            failures.append(f"d={d}: compression identity off by {compression_error}")
    _record("ngon", start, len(degrees), worst, failures)


def benchmark_gaussian(args: Dict[str, Any]) -> None:
    start = time.time_ns()
    iterations = args["iterations"]
    max_d = args["max_d"]
    worst = {"defect": 0.0, "matching": 0.0, "exactness": 0.0}
    failures = []
    for i in tqdm(range(iterations)):
        d = 1 + i % max_d
        seed = args["seed"] + i
        atoms = random_atoms(d + 1, seed)
        table = moments_from_atoms(atoms, 2 * d + 2)
        h = _hessenberg(table, d)
        report = self_commutator(h)
        worst["defect"] = max(worst["defect"], h.defect / max(h.norm, 1e-300))
        if not report.certified():
            failures.append(f"seed={seed}, d={d}: certificate failed (defect {h.defect})")
            continue

        basis = orthonormalize(table, d)
        c = normal_quadrature(h, basis, table)
        distance = match_atoms(c, atoms)
        exactness = verify_exactness(c, table)
        worst["matching"] = max(worst["matching"], distance)
        worst["exactness"] = max(worst["exactness"], exactness.max_residual)
        if distance > 1e-6:
            failures.append(f"seed={seed}, d={d}: matching distance {distance}")
        if not exactness.passed:
            failures.append(f"seed={seed}, d={d}: exactness residual {exactness.max_residual}")

        # more atoms than a Gaussian rule can carry
        excess = moments_from_atoms(random_atoms(d + 3, seed), 2 * d + 2)
        h_excess = _hessenberg(excess, d)
        if h_excess.defect <= 1e-4:
            failures.append(f"seed={seed}, d={d}: {d + 3} atoms with defect {h_excess.defect}")
    _record("gaussian", start, iterations, worst, failures)


def benchmark_eigenbound(args: Dict[str, Any]) -> None:
    start = time.time_ns()
    iterations = args["iterations"]
    rng = np.random.default_rng(args["seed"])
    worst = {"negative_count": 0, "bound": 0.0, "corrected": 0.0}
    failures = []
    for i in tqdm(range(iterations)):
        count = int(rng.integers(1, 13))
        d = int(rng.integers(0, min(8, count - 1) + 1))
        table = moments_from_atoms(random_atoms(count, args["seed"] + i), 2 * d + 2)
        h = _hessenberg(table, d)
        report = self_commutator(h)
        tol = report.tolerance
        eigenvalues = np.linalg.eigvalsh(report.commutator)
        negative = int(np.sum(eigenvalues < -tol))
        bound_gap = max(0.0, report.defect_sq_bound - tol - report.lambda_minus)
        corrected_gap = max(0.0, -tol - report.corrected_min)

        worst["negative_count"] = max(worst["negative_count"], negative)
        worst["bound"] = max(worst["bound"], bound_gap)
        worst["corrected"] = max(worst["corrected"], corrected_gap)
        if negative > 1 or bound_gap > 0 or corrected_gap > 0:
            failures.append(f"count={count}, d={d}: {negative} negative, gaps {bound_gap}, {corrected_gap}")
    _record("eigenbound", start, iterations, worst, failures)


def benchmark_congruence(args: Dict[str, Any]) -> None:
    start = time.time_ns()
    iterations = args["iterations"]
    rng = np.random.default_rng(args["seed"])
    worst = {"congruence": 0.0}
    failures = []
    for _ in tqdm(range(iterations)):
        d = int(rng.integers(0, 8))
        M = np.triu(rng.standard_normal((d + 1, d + 1)) + 1j * rng.standard_normal((d + 1, d + 1)), -1)
        h = HessenbergData(d, M, 0.0, np.ones(d + 1), 0.0)
        residual = sigma_form(h).congruence_residual
        relative = residual / (1 + h.norm ** 2)
        worst["congruence"] = max(worst["congruence"], relative)
        if relative > 1e-12:
            failures.append(f"d={d}: congruence residual {residual}")
    _record("congruence", start, iterations, worst, failures)


def benchmark_dilation(args: Dict[str, Any]) -> None:
    start = time.time_ns()
    iterations = args["iterations"]
    rng = np.random.default_rng(args["seed"])
    worst = {"unitarity": 0.0, "power_matching": 0.0}
    failures = []
    for _ in tqdm(range(iterations)):
        n = int(rng.integers(1, 9))
        N = int(rng.integers(1, 9))
        T = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        T = T / np.linalg.norm(T, 2) * rng.uniform(0.5, 1.0)
        e = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        e /= np.linalg.norm(e)

        result = unitary_power_dilation(T, N)
        matching = power_matching_residual(result, T, N, e)
        worst["unitarity"] = max(worst["unitarity"], result.unitarity_residual)
        worst["power_matching"] = max(worst["power_matching"], matching)
        if result.unitarity_residual > 1e-10 or matching > 1e-8:
            failures.append(f"n={n}, N={N}: unitarity {result.unitarity_residual}, matching {matching}")
    _record("dilation", start, iterations, worst, failures)


def benchmark_harmonic(args: Dict[str, Any]) -> None:
    start = time.time_ns()
    # (name, table, largest degree with a non-degenerate basis)
    tables = [("circle", circle_arclength(12), 5), ("ngon5", ngon(5, 12), 4), ("dirichlet", dirichlet_interval(1.0, 12), 5)]
    for i in range(20):
        count = 6 + i % 3
        tables.append((f"atoms{i}", moments_from_atoms(random_atoms(count, args["seed"] + i), 12), 5))
    worst = {"radius": 0.0, "mass": 0.0, "exactness": 0.0}
    failures = []
    cases = 0
    for name, table, max_d in tqdm(tables):
        for d in range(0, max_d + 1):
            cases += 1
            c = harmonic_cubature(table, d)
            R = c.contract.radius
            radius_error = float(np.max(np.abs(np.abs(c.nodes) - R))) if R > 0 else float(np.max(np.abs(c.nodes)))
            mass_error = abs(c.mass - table.s00) / table.s00
            exactness = verify_exactness(c, table)
            worst["radius"] = max(worst["radius"], radius_error)
            worst["mass"] = max(worst["mass"], mass_error)
            worst["exactness"] = max(worst["exactness"], exactness.max_residual)
            if radius_error > 1e-10 or mass_error > 1e-10 or len(c) > (d + 1) ** 2 or not exactness.passed:
                failures.append(f"{name}, d={d}: radius {radius_error}, mass {mass_error}, "
                                f"{len(c)} nodes, residual {exactness.max_residual}")
    _record("harmonic", start, cases, worst, failures)


def benchmark_skew(args: Dict[str, Any]) -> None:
    start = time.time_ns()
    a = 1.0
    table = dirichlet_interval(a, 24)
    worst = {"skew": 0.0, "real_part": 0.0}
    failures = []
    node_counts = {}
    cases = [(parity, count) for parity in (EVEN, ODD) for count in range(3, 6)]
    for parity, count in tqdm(cases):
        compression = compress_to_subspace(table, vanishing_subspace(a, count, parity))
        eigenvalues = np.linalg.eigvals(compression.matrix)
        nodes, weights = compression_quadrature(compression, radius=np.sqrt(table[1, 1].real / table.s00))
        real_part = max(float(np.max(np.abs(eigenvalues.real))), float(np.max(np.abs(nodes.real))))
        worst["skew"] = max(worst["skew"], compression.skew_residual)
        worst["real_part"] = max(worst["real_part"], real_part)
        node_counts[f"{parity}{count}"] = len(nodes)
        if compression.skew_residual > 1e-8 or real_part > 1e-8:
            failures.append(f"{parity}, {count} elements: skew {compression.skew_residual}, real part {real_part}")
    logger.info(f"Node counts of the subspace quadratures: {node_counts}")
    _record("skew", start, len(cases), worst, failures)
    benchmark_results["skew"]["node_counts"] = node_counts


def benchmark_equivalence(args: Dict[str, Any]) -> None:
    start = time.time_ns()
    cases = [(f"circle d={d}", circle_arclength(2 * d + 2), d) for d in range(2, 9)]
    cases += [(f"ngon d={d}", ngon(7, 16), d) for d in range(2, 6)]
    for i in range(args["iterations"]):
        d = 1 + i % 4
        cases.append((f"atoms seed={args['seed'] + i}", moments_from_atoms(random_atoms(d + 1, args["seed"] + i),
                                                                          2 * d + 2), d))
    failures = []
    for name, table, d in tqdm(cases):
        report = self_commutator(_hessenberg(table, d))
        if not report.conditions_agree():
            failures.append(f"{name}: conditions disagree {report.equivalences}")
    _record("equivalence", start, len(cases), {}, failures)


def main() -> None:
    parser = argparse.ArgumentParser(
        prog="Benchmarking Tool",
        description="Runs the cubature acceptance suites and records worst residuals and wall time",
        add_help=True,
    )

    ops: Dict[str, Callable[[Dict[str, Any]], None]] = {
        "jordan": benchmark_jordan,
        "ngon": benchmark_ngon,
        "gaussian": benchmark_gaussian,
        "eigenbound": benchmark_eigenbound,
        "congruence": benchmark_congruence,
        "dilation": benchmark_dilation,
        "harmonic": benchmark_harmonic,
        "skew": benchmark_skew,
        "equivalence": benchmark_equivalence,
    }

    parser.add_argument(
        "--output",
        required=False,
        type=str,
        default="benchmark.json",
        help="Path to the output.",
    )
    parser.add_argument(
        "--op",
        required=False,
        type=str,
        default="all",
        choices=["all", *ops.keys()],
        help="Suite to run",
    )
    parser.add_argument(
        "--iterations",
        required=False,
        type=int,
        default=50,
        help="Random cases for the randomized suites",
    )
    parser.add_argument(
        "--max-d",
        required=False,
        type=int,
        default=10,
        help="Largest degree of the gaussian round trip",
    )
    parser.add_argument(
        "--seed",
        required=False,
        type=int,
        default=0,
        help="Base seed of the randomized suites",
    )
    parser.add_argument(
        "--timings",
        required=False,
        type=str,
        help="Also record per-stage timings to this file",
    )
    parser.add_argument(
        "--config",
        required=False,
        type=str,
        help="JSON file with tolerance overrides",
    )
    args = vars(parser.parse_args())

    if args["config"]:
        settings.load_config(args["config"])
    if args["timings"]:
        measurement.begin_measurement()

    selected = list(ops.keys()) if args["op"] == "all" else [args["op"]]
    for op in selected:
        logger.info(f"Benchmarking {op} - {args['iterations']} iterations")
        ops[op](args)

    if args["timings"]:
        measurement.end_measurement(args["timings"])

    with open(args["output"], mode="w") as fp:
        json.dump({
            "iterations": args["iterations"],
            "tolerances": settings.tolerances(),
            "results": benchmark_results,
        }, fp, indent=2)


if __name__ == "__main__":
    main()
