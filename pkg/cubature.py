import os
import json
import logging
from pathlib import Path
from typing import NamedTuple, Optional, Dict, List, Tuple, Any

import numpy as np
from scipy.linalg import schur
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

import settings
import measurement
from moments import MomentTable, AtomicMeasure, ComplexJSONEncoder, MomentFormatError, decode_complex, Index
from ortho import OrthoBasis, cyclic_vector_coords
from hessenberg import HessenbergData, Compression, self_commutator

logger = logging.getLogger(__name__)

GAUSSIAN = "gaussian"
HARMONIC = "harmonic"


class CertificateError(RuntimeError):
    """Raised when a Gaussian quadrature is requested for a matrix that is not certified normal."""


class SchurResidualError(RuntimeError):
    """Raised when the triangular Schur factor of a supposedly normal matrix is not diagonal."""


class ContractError(ValueError):
    """Raised when an exactness contract does not fit the moment table, or the expected kind."""


class CubatureFormatError(ValueError):
    """Raised for malformed cubature files."""


class Contract(NamedTuple):
    """
    The exactness class a cubature claims: GAUSSIAN(d) or HARMONIC(d, R).
    """
    kind: str
    d: int
    radius: Optional[float] = None

    def required_degree(self) -> int:
        """Largest total moment degree the contract is checked against."""
        if self.kind == GAUSSIAN:
            return 2 * self.d + 1
        return self.d

    def pairs(self) -> List[Index]:
        """Monomial pairs (j, k) on which the contract claims exactness."""
        d = self.d
        if self.kind == GAUSSIAN:
            # the corner (d+1, d+1) is excluded
            return [(j, k) for j in range(d + 2) for k in range(d + 2) if j + k <= 2 * d + 1]
        return [(m, 0) for m in range(d + 1)] + [(0, m) for m in range(1, d + 1)]

    def to_json(self) -> Dict[str, Any]:
        data = {"kind": self.kind, "d": self.d}
        if self.radius is not None:
            data["radius"] = self.radius
        return data

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> "Contract":
        try:
            kind = data["kind"]
            d = data["d"]
        except (KeyError, TypeError) as e:
            raise CubatureFormatError(f"Invalid contract: {data}") from e
        if kind not in (GAUSSIAN, HARMONIC):
            raise CubatureFormatError(f"Unknown contract kind: {kind}")
        if not isinstance(d, int) or isinstance(d, bool) or d < 0:
            raise CubatureFormatError(f"Invalid contract degree: {d}")
        radius = data.get("radius")
        return cls(kind, d, None if radius is None else float(radius))


class Cubature(object):
    """
    Complex nodes a_k with positive weights c_k, together with the exactness contract they claim.
    """

    def __init__(self, nodes: np.ndarray, weights: np.ndarray, contract: Contract, forced: bool = False):
        nodes = np.array(nodes, dtype=complex).ravel()
        weights = np.array(weights, dtype=float).ravel()

        if len(nodes) != len(weights):
            raise CubatureFormatError(f"Got {len(nodes)} nodes but {len(weights)} weights")
        if len(nodes) == 0:
            raise CubatureFormatError("A cubature needs at least one node")
        if not np.all(np.isfinite(nodes)) or not np.all(np.isfinite(weights)):
            raise CubatureFormatError("Cubature nodes and weights must be finite")
        if not np.all(weights > 0):
            raise CubatureFormatError("Cubature weights must be strictly positive")
        if contract.kind == GAUSSIAN and len(nodes) > contract.d + 1:
            raise ContractError(f"A GAUSSIAN({contract.d}) cubature has at most {contract.d + 1} nodes, "
                                f"got {len(nodes)}")

        nodes.setflags(write=False)
        weights.setflags(write=False)
        self.nodes = nodes
        self.weights = weights
        self.contract = contract
        self.forced = forced

    @property
    def mass(self) -> float:
        return float(np.sum(self.weights))

    def __len__(self):
        return len(self.nodes)

    def to_json(self) -> Dict[str, Any]:
        data = {
            "contract": self.contract.to_json(),
            "nodes": [complex(a) for a in self.nodes],
            "weights": [float(c) for c in self.weights],
        }
        if self.forced:
            data["forced"] = True
        return data

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> "Cubature":
        if not isinstance(data, dict) or not {"contract", "nodes", "weights"} <= set(data):
            raise CubatureFormatError("Cubature file must hold 'contract', 'nodes' and 'weights'")
        try:
            nodes = [decode_complex(a) for a in data["nodes"]]
        except MomentFormatError as e:
            raise CubatureFormatError(str(e)) from e
        weights = data["weights"]
        if not isinstance(weights, list) or not all(isinstance(c, (int, float)) for c in weights):
            raise CubatureFormatError("Cubature weights must be a list of numbers")
        return cls(nodes, weights, Contract.from_json(data["contract"]), bool(data.get("forced", False)))

    @classmethod
    def load(cls, filename: str) -> "Cubature":
        with open(filename, mode="r") as fp:
            try:
                data = json.load(fp)
            except json.JSONDecodeError as e:
                raise CubatureFormatError(f"Could not parse cubature file: {e}") from e
        return cls.from_json(data)

    def save(self, filename: str) -> None:
        directory = os.path.dirname(filename)
        if directory:
            Path(directory).mkdir(parents=True, exist_ok=True)
        with open(filename, mode="w+") as fp:
            json.dump(self.to_json(), fp, cls=ComplexJSONEncoder)

    def __repr__(self):
        return f"Cubature(contract={self.contract}, nodes={len(self)}, mass={self.mass})"


class Spectral(NamedTuple):
    values: np.ndarray
    vectors: np.ndarray
    # largest off-diagonal entry of the triangular Schur factor
    residual: float


class ExactnessReport(NamedTuple):
    contract: Contract
    residuals: Dict[Index, float]
    max_residual: float
    worst_pair: Index
    threshold: float
    passed: bool
    failures: List[Index]


def spectral_decomposition(M: np.ndarray) -> Spectral:
    """
    Complex Schur decomposition M = Z T Z*. For a normal M the factor T is diagonal, its diagonal holds the
    eigenvalues and the columns of Z are orthonormal eigenvectors.
    """
    T, Z = schur(np.asarray(M, dtype=complex), output="complex")
    residual = float(np.max(np.abs(np.triu(T, 1)))) if T.shape[0] > 1 else 0.0
    return Spectral(T.diagonal().copy(), Z, residual)


def merge_nodes(nodes: np.ndarray, weights: np.ndarray, tol: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Merges nodes closer than tol into one node (the weighted mean) carrying the summed weight.
    """
    merged_nodes: List[complex] = []
    merged_weights: List[float] = []
    for a, c in zip(nodes, weights):
        for i, b in enumerate(merged_nodes):
            if abs(a - b) <= tol:
                total = merged_weights[i] + c
                if total > 0:
                    merged_nodes[i] = (merged_weights[i] * b + c * a) / total
                merged_weights[i] = total
                break
        else:
            merged_nodes.append(complex(a))
            merged_weights.append(float(c))
    return np.array(merged_nodes, dtype=complex), np.array(merged_weights, dtype=float)


def spectral_nodes(M: np.ndarray, seed: np.ndarray, merge_tol: float, weight_tol: float,
                   schur_tol: float = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Nodes (eigenvalues) and weights |<seed, f_k>|^2 of a normal matrix M, after merging and pruning.
    :param M: A normal matrix.
    :param seed: The vector whose spectral measure is extracted.
    :param merge_tol: Absolute distance below which nodes are merged.
    :param weight_tol: Absolute weight below which nodes are dropped.
    :param schur_tol: Optionally, the largest admissible off-diagonal Schur entry.
    :return: Tuple (nodes, weights).
    """
    spectral = spectral_decomposition(M)
    if schur_tol is not None and spectral.residual > schur_tol:
        raise SchurResidualError(f"Schur factor off-diagonal residual {spectral.residual} exceeds {schur_tol}")

    weights = np.abs(spectral.vectors.conj().T @ seed) ** 2
    nodes, weights = merge_nodes(spectral.values, weights, merge_tol)
    keep = weights >= weight_tol
    logger.debug(f"{len(nodes)} distinct nodes, {np.sum(~keep)} pruned")
    return nodes[keep], weights[keep]


@measurement.measure("normal_quadrature")
def normal_quadrature(h: HessenbergData, basis: OrthoBasis, table: MomentTable, normal_tol: float = None,
                      weight_tol: float = None, force: bool = False) -> Cubature:
    """
    Gaussian-type quadrature from a certified-normal Hessenberg matrix: the nodes are the eigenvalues of M and
    the weights |<1, f_k>|^2 for orthonormal eigenvectors f_k.
    :param h: The Hessenberg data.
    :param basis: The orthonormal basis h was built from.
    :param table: The moment table.
    :param normal_tol: Certificate tolerance (default: settings.NORMAL_TOL).
    :param weight_tol: Pruning threshold relative to s00 (default: settings.WEIGHT_TOL).
    :param force: Emit a cubature even if the certificate fails (recorded in Cubature.forced).
    :return: A Cubature with contract GAUSSIAN(d).
    """
    if normal_tol is None:
        normal_tol = settings.NORMAL_TOL
    if weight_tol is None:
        weight_tol = settings.WEIGHT_TOL

    report = self_commutator(h, normal_tol)
    certified = report.certified()
    if not certified:
        if not force:
            raise CertificateError(
                f"Normality certificate fails: defect {h.defect}, lambda_minus {report.lambda_minus}"
            )
        logger.warning(f"Forcing a quadrature without a normality certificate (defect {h.defect})")

    norm = max(h.norm, np.finfo(float).tiny)
    seed = cyclic_vector_coords(basis, table)[:h.d + 1]
    nodes, weights = spectral_nodes(
        h.matrix,
        seed,
        merge_tol=settings.MERGE_TOL * norm,
        weight_tol=weight_tol * table.s00,
        schur_tol=None if force else normal_tol * norm,
    )
    cubature = Cubature(nodes, weights, Contract(GAUSSIAN, h.d), forced=not certified)
    logger.debug(f"Built {cubature}")
    return cubature


def compression_quadrature(compression: Compression, weight_tol: float = None,
                           radius: float = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Nodes and weights of the spectral measure of a (normal) subspace compression, seeded with the first
    spanning polynomial v_0.
    :param compression: Output of compress_to_subspace.
    :param weight_tol: Pruning threshold relative to |v_0|^2 (default: settings.WEIGHT_TOL).
    :param radius: Length scale for merging nodes, e.g. sqrt(s11 / s00). Defaults to the norm of the
                   compression, which is useless when the compression vanishes.
    :return: Tuple (nodes, weights).
    """
    if weight_tol is None:
        weight_tol = settings.WEIGHT_TOL

    M = compression.matrix
    seed = np.zeros(M.shape[0], dtype=complex)
    seed[0] = compression.first_norm
    norm = float(np.linalg.norm(M, 2))
    scale = max(norm, radius or 0.0, np.finfo(float).tiny)
    return spectral_nodes(
        M,
        seed,
        merge_tol=settings.MERGE_TOL * scale,
        weight_tol=weight_tol * compression.first_norm ** 2,
    )


@measurement.measure("verify_exactness")
def verify_exactness(c: Cubature, table: MomentTable, tol: float = None) -> ExactnessReport:
    """
    Compares sum_m c_m a_m^j conj(a_m)^k with s_jk on every pair of the cubature's contract.
    GAUSSIAN(d): j, k <= d + 1 and j + k <= 2d + 1. HARMONIC(d, R): (m, 0) and (0, m) for m <= d.
    :param c: The cubature.
    :param table: The moment table.
    :param tol: Pass threshold relative to 1 + max |s_jk| (default: settings.EXACTNESS_TOL).
    :return: An ExactnessReport.
    """
    if tol is None:
        tol = settings.EXACTNESS_TOL

    required = c.contract.required_degree()
    if table.max_total_degree < required:
        raise ContractError(f"Contract {c.contract.kind}({c.contract.d}) needs moments up to degree {required}, "
                            f"table has {table.max_total_degree}")

    pairs = c.contract.pairs()
    top = max(max(j, k) for j, k in pairs)
    V = np.vander(c.nodes, top + 1, increasing=True)
    values = V.T @ (c.weights[:, None] * V.conj())

    residuals = {(j, k): float(abs(values[j, k] - table[j, k])) for j, k in pairs}
    worst_pair = max(residuals, key=residuals.get)
    threshold = tol * (1 + table.scale)
    failures = [pair for pair, r in residuals.items() if r > threshold]

    return ExactnessReport(
        contract=c.contract,
        residuals=residuals,
        max_residual=residuals[worst_pair],
        worst_pair=worst_pair,
        threshold=threshold,
        passed=not failures,
        failures=failures,
    )


def _has_perfect_matching(mask: np.ndarray) -> bool:
    matching = maximum_bipartite_matching(csr_matrix(mask.astype(float)), perm_type="column")
    return bool(np.all(matching >= 0))


def match_atoms(c: Cubature, reference: AtomicMeasure) -> float:
    """
    Minimum over bijections between cubature nodes and reference atoms of
    (max node distance) + (max weight discrepancy). A greedy matching gives an upper bound which is refined by
    an exhaustive threshold search for up to settings.MAX_FULL_MATCH atoms.
    :return: The matching distance, or inf if the counts differ.
    """
    n = len(c)
    if n != len(reference):
        return float("inf")

    distances = np.abs(c.nodes[:, None] - reference.nodes[None, :])
    discrepancies = np.abs(c.weights[:, None] - reference.weights[None, :])

    # greedy
    remaining = list(range(n))
    node_error = 0.0
    weight_error = 0.0
    for i in range(n):
        j = min(remaining, key=lambda r: distances[i, r])
        remaining.remove(j)
        node_error = max(node_error, distances[i, j])
        weight_error = max(weight_error, discrepancies[i, j])
    best = float(node_error + weight_error)

    if n > settings.MAX_FULL_MATCH:
        return best

    for t in np.unique(distances):
        if t >= best:
            break
        allowed = distances <= t
        if not _has_perfect_matching(allowed):
            continue
        for u in np.unique(discrepancies[allowed]):
            if t + u >= best:
                break
            if _has_perfect_matching(allowed & (discrepancies <= u)):
                best = float(t + u)
                break
    return best
