import logging
from typing import NamedTuple, Optional

import numpy as np
from scipy.linalg import eigh, svd

import settings
import measurement
from moments import MomentTable
from ortho import DegeneracyReport, orthonormalize, cyclic_vector_coords
from hessenberg import build_hessenberg
from cubature import Cubature, Contract, HARMONIC, spectral_nodes

logger = logging.getLogger(__name__)


class NotContractiveError(ValueError):
    """Raised when a matrix that should be a contraction has norm > 1, i.e. a defect operator is not PSD."""


class DegenerateFunctionalError(ValueError):
    """Raised when the orthonormal basis needed for a harmonic cubature does not exist."""


class DilationResult(NamedTuple):
    """
    unitary: U of size n(N+1)
    embed: indices of the first block in U, where the dilated space embeds
    radius: the scaling R applied before dilating (1 for a plain contraction)
    unitarity_residual: max |U*U - I|
    """
    unitary: np.ndarray
    embed: np.ndarray
    radius: float
    unitarity_residual: float


def operator_norm(M: np.ndarray) -> float:
    """
    Largest singular value of M (0 for an empty matrix).
    """
    M = np.asarray(M)
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))


def defect_sqrt(A: np.ndarray, tol: float = None) -> np.ndarray:
    """
    Principal square root of a Hermitian positive semidefinite matrix via its eigendecomposition. Eigenvalues in
    [-tol, 0) are clamped to 0.
    :param A: A Hermitian PSD matrix, typically I - T*T.
    :param tol: Admissible negative eigenvalue magnitude (default: settings.CONTRACTION_TOL).
    :return: The Hermitian PSD square root of A.
    """
    if tol is None:
        tol = settings.CONTRACTION_TOL

    A = np.asarray(A, dtype=complex)
    A = (A + A.conj().T) / 2
    values, vectors = eigh(A)
    if values[0] < -tol:
        raise NotContractiveError(f"Smallest eigenvalue {values[0]} below -{tol}, matrix is not PSD")

    root = (vectors * np.sqrt(np.clip(values, 0, None))) @ vectors.conj().T
    residual = float(np.max(np.abs(root @ root - A)))
    assert residual <= settings.SQRT_TOL * max(1.0, float(np.max(np.abs(A)))), residual
    return root


def _defect_pair(T: np.ndarray):
    """
    sqrt(I - T*T) and sqrt(I - TT*) from one singular value decomposition T = W S V*, so that
    T sqrt(I - T*T) = sqrt(I - TT*) T holds to roundoff even for singular values at 1.
    :return: Tuple (D_T, D_T*, norm of T).
    """
    W, sigma, Vh = svd(T)
    norm = float(sigma[0])
    if norm > 1 + settings.CONTRACTION_TOL:
        raise NotContractiveError(f"Operator norm {norm} exceeds 1")
    c = np.sqrt(np.clip(1 - sigma ** 2, 0, None))
    D_T = (Vh.conj().T * c) @ Vh
    D_T_star = (W * c) @ W.conj().T
    return D_T, D_T_star, norm


@measurement.measure("unitary_power_dilation")
def unitary_power_dilation(T: np.ndarray, N: int, radius: float = 1.0) -> DilationResult:
    """
    Unitary U on n(N+1) dimensions whose compression to the first block reproduces T^k for 0 <= k <= N.
    Block layout (D_T = sqrt(I - T*T), D_T* = sqrt(I - TT*)):

        row 0:     T    0  ...  0   D_T*
        row 1:     D_T  0  ...  0   -T*
        row k >= 2: identity in block column k - 1

    A vector leaving the first block through D_T travels down the identity chain and needs N + 1 steps to
    return, so the powers up to N stay exact.
    :param T: A contraction of size n.
    :param N: Number of powers to match, N >= 1.
    :param radius: The factor T was scaled by, recorded in the result.
    :return: A DilationResult.
    """
    T = np.asarray(T, dtype=complex)
    if T.ndim != 2 or T.shape[0] != T.shape[1]:
        raise ValueError(f"Expected a square matrix, got shape {T.shape}")
    if N < 1:
        raise ValueError(f"A power dilation needs N >= 1, got {N}")
    n = T.shape[0]
    I = np.eye(n, dtype=complex)
    D_T, D_T_star, norm = _defect_pair(T)

    U = np.zeros((n * (N + 1), n * (N + 1)), dtype=complex)

    def block(i: int, j: int) -> tuple:
        return slice(i * n, (i + 1) * n), slice(j * n, (j + 1) * n)

    U[block(0, 0)] = T
    U[block(0, N)] = D_T_star
    U[block(1, 0)] = D_T
    U[block(1, N)] = -T.conj().T
    for k in range(2, N + 1):
        U[block(k, k - 1)] = I

    residual = float(np.max(np.abs(U.conj().T @ U - np.eye(U.shape[0]))))
    if residual > settings.UNITARY_TOL:
        logger.warning(f"Dilation unitarity residual {residual} above {settings.UNITARY_TOL}")
    logger.debug(f"Dilated {n}x{n} contraction (norm {norm}) to size {U.shape[0]}")

    return DilationResult(U, np.arange(n), radius, residual)


def power_matching_residual(result: DilationResult, T: np.ndarray, N: int, vector: Optional[np.ndarray] = None) -> float:
    """
    max_k |<U^k e, e> - <T^k e, e>| over 0 <= k <= N for a vector e of the first block, or, without a vector,
    the largest entry of (U^k)|first block - T^k.
    """
    T = np.asarray(T, dtype=complex)
    U = result.unitary
    idx = result.embed
    U_k = np.eye(U.shape[0], dtype=complex)
    T_k = np.eye(T.shape[0], dtype=complex)
    worst = 0.0
    for _ in range(N + 1):
        compressed = U_k[np.ix_(idx, idx)]
        if vector is None:
            worst = max(worst, float(np.max(np.abs(compressed - T_k))))
        else:
            e = np.asarray(vector, dtype=complex)
            worst = max(worst, abs(np.vdot(e, compressed @ e) - np.vdot(e, T_k @ e)))
        U_k = U @ U_k
        T_k = T @ T_k
    return worst


def _point_mass_at_zero(table: MomentTable, rank_tol: float) -> bool:
    # L(|z|^2) = 0 for a positive functional means all mass sits at the origin
    return table[1, 1].real <= rank_tol * table.s00


@measurement.measure("harmonic_cubature")
def harmonic_cubature(table: MomentTable, d: int, weight_tol: float = None, rank_tol: float = None) -> Cubature:
    """
    Cubature on the circle |z| = R = ||M_d|| exact on harmonic polynomials of degree <= d.
    The compressed multiplier M_d is scaled to the contraction T = M_d / R, dilated to a unitary U with N = d
    steps, and the spectral measure of U in the cyclic vector gives nodes R * lambda_k and weights
    |<e, f_k>|^2 summing to s00.
    :param table: A moment table with max_total_degree >= 2d + 2.
    :param d: The harmonic degree.
    :param weight_tol: Pruning threshold relative to s00 (default: settings.WEIGHT_TOL).
    :param rank_tol: Passed to orthonormalize (default: settings.RANK_TOL).
    :return: A Cubature with contract HARMONIC(d, R).
    """
    if weight_tol is None:
        weight_tol = settings.WEIGHT_TOL
    if rank_tol is None:
        rank_tol = settings.RANK_TOL

    table.require_degree(2 * d + 2, "harmonic cubature")
    s00 = table.s00

    basis = orthonormalize(table, d, rank_tol)
    if isinstance(basis, DegeneracyReport):
        if _point_mass_at_zero(table, rank_tol):
            logger.debug("Functional is concentrated at the origin")
            return Cubature([0j], [s00], Contract(HARMONIC, d, 0.0))
        raise DegenerateFunctionalError(
            f"Orthonormal polynomials exist only below degree {basis.degree}, harmonic degree {d} requested"
        )

    h = build_hessenberg(table, basis, d, rank_tol)
    R = h.norm
    if R <= settings.RADIUS_GUARD * np.sqrt(max(table[1, 1].real, 0.0) / s00):
        logger.debug(f"Radius {R} below guard, returning the point mass at 0")
        return Cubature([0j], [s00], Contract(HARMONIC, d, 0.0))

    T = h.matrix / R
    dilation = unitary_power_dilation(T, max(d, 1), radius=R)

    seed = np.zeros(dilation.unitary.shape[0], dtype=complex)
    seed[dilation.embed] = cyclic_vector_coords(basis, table)
    nodes, weights = spectral_nodes(
        dilation.unitary,
        seed,
        merge_tol=settings.MERGE_TOL,
        weight_tol=weight_tol * s00,
        schur_tol=settings.SCHUR_TOL,
    )
    # project back onto the circle, merging may have averaged neighbours
    nodes = R * nodes / np.abs(nodes)

    cubature = Cubature(nodes, weights, Contract(HARMONIC, d, R))
    logger.debug(f"Harmonic cubature with {len(cubature)} nodes on radius {R}")
    return cubature

