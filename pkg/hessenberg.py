import logging
from typing import NamedTuple

import numpy as np
from scipy.linalg import eigh, solve_triangular

import settings
import measurement
from moments import MomentTable, DegreeOverflowError, pairing
from ortho import OrthoBasis, NotPositiveSemidefiniteError, hermitian_cholesky

logger = logging.getLogger(__name__)


class BasisMismatchError(ValueError):
    """Raised when a basis does not belong to the table it is used with, or is of too small a degree."""


class DegenerateSpanError(ValueError):
    """Raised when the polynomials spanning a subspace are linearly dependent in the L-inner product."""


def _shift(coeffs: np.ndarray) -> np.ndarray:
    """Coefficient rows of z * p for every row p."""
    coeffs = np.atleast_2d(coeffs)
    shifted = np.zeros((coeffs.shape[0], coeffs.shape[1] + 1), dtype=complex)
    shifted[:, 1:] = coeffs
    return shifted


class HessenbergData(object):
    """
    The compressed multiplier M_d = pi_d M_z pi_d in the orthonormal basis P_0, ..., P_d, with entries
    a_jk = <z P_k, P_j>_L, together with the defect a_{d+1,d} = |(I - pi_d)(z P_d)|_L.
    """

    def __init__(self, d: int, matrix: np.ndarray, defect: float, leading: np.ndarray, zp_norm_sq: float,
                 fill_in: float = 0.0):
        matrix = np.array(matrix, dtype=complex)
        assert matrix.shape == (d + 1, d + 1)
        assert defect >= 0

        matrix.setflags(write=False)
        self.d = d
        self.matrix = matrix
        self.defect = float(defect)
        self.leading = np.array(leading[:d + 1], dtype=float)
        # |z P_d|_L^2, the degree-2 scale of the last column
        self.zp_norm_sq = float(zp_norm_sq)
        # largest entry below the first subdiagonal before it was zeroed
        self.fill_in = float(fill_in)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.matrix, 2))

    @property
    def scale(self) -> float:
        """Scale of degree-2 quantities (commutator entries, defect^2)."""
        return max(self.norm ** 2, self.zp_norm_sq, np.finfo(float).tiny)

    def __repr__(self):
        return f"HessenbergData(d={self.d}, defect={self.defect}, norm={self.norm})"


class Equivalences(NamedTuple):
    """The four equivalent normality conditions, evaluated at a shared tolerance."""
    normal: bool
    determinant: bool
    defect_vanishes: bool
    invariant_subspace: bool

    def agree(self) -> bool:
        return len(set(self)) == 1


class CommutatorReport(NamedTuple):
    commutator: np.ndarray
    lambda_minus: float
    defect_sq_bound: float
    is_normal: bool
    certificate_det: bool
    equivalences: Equivalences
    trace: float
    negative_count: int
    corrected_min: float
    tolerance: float
    degree: int

    def certified(self) -> bool:
        """
        Whether M passes the normality certificate. A 1x1 matrix is always normal and the one-node rule at
        s10 / s00 is exact on its grid, so the defect only enters from degree 1 on.
        """
        return self.certificate_det and (self.degree == 0 or self.equivalences.defect_vanishes)

    def conditions_agree(self) -> bool:
        # at degree 0 the defect is unconstrained while the commutator vanishes identically
        return self.degree == 0 or self.equivalences.agree()


class SigmaForm(NamedTuple):
    matrix: np.ndarray
    congruence_residual: float


class SigmaPositivity(NamedTuple):
    # smallest eigenvalue on C_d[z] + C_{d-1}[z]
    restricted_min: float
    # smallest eigenvalue of [[I, M*], [M, M*M + K]] on C_d[z] + C_d[z]
    corrected_min: float


class Compression(NamedTuple):
    matrix: np.ndarray
    coeffs: np.ndarray
    gram: np.ndarray
    first_norm: float
    skew_residual: float
    commutator_norm: float


@measurement.measure("build_hessenberg")
def build_hessenberg(table: MomentTable, basis: OrthoBasis, d: int, rank_tol: float = None) -> HessenbergData:
    """
    Computes a_jk = <z P_k, P_j>_L from the moments by bilinear expansion, and the defect
    a_{d+1,d}^2 = |z P_d|^2 - sum_{j <= d} |<z P_d, P_j>|^2 without constructing P_{d+1}.
    :param table: Moment table with max_total_degree >= 2d + 2.
    :param basis: Orthonormal basis of degree >= d built from the same table.
    :param d: Size parameter of the compression (matrix is (d+1)x(d+1)).
    :param rank_tol: Tolerance below which a negative defect^2 signals an invalid functional
                     (default: settings.RANK_TOL).
    :return: A HessenbergData object.
    """
    if rank_tol is None:
        rank_tol = settings.RANK_TOL
    if d < 0:
        raise DegreeOverflowError(f"Degree must be non-negative, got {d}")
    if basis.degree < d:
        raise BasisMismatchError(f"Basis of degree {basis.degree} is too small for a degree-{d} Hessenberg matrix")
    if not np.isclose(basis.mass, table.s00, rtol=1e-12, atol=0):
        raise BasisMismatchError(f"Basis was built for s00 = {basis.mass}, table has s00 = {table.s00}")
    table.require_degree(2 * d + 2, f"Hessenberg matrix of degree {d}")

    C = basis.coeffs[:d + 1, :d + 1]
    zC = _shift(C)
    A = pairing(table, zC, C)

    fill_in = float(np.max(np.abs(np.tril(A, -2)))) if d > 0 else 0.0
    if fill_in > settings.HESSENBERG_TOL * (1 + np.max(np.abs(A))):
        logger.warning(f"Entries below the subdiagonal reach {fill_in}, zeroing them")
    matrix = np.triu(A, -1)

    zp_norm_sq = float(pairing(table, zC[d:d + 1]).real[0, 0])
    defect_sq = zp_norm_sq - float(np.sum(np.abs(A[:, d]) ** 2))
    if defect_sq < 0:
        # defect^2 / kappa_d^2 is the degree-(d+1) Gram pivot
        pivot = defect_sq / basis.leading[d] ** 2
        if pivot < -rank_tol * table.s00:
            raise NotPositiveSemidefiniteError(f"Degree-{d + 1} Gram pivot {pivot} is negative")
        if defect_sq < -settings.DEFECT_CLAMP * max(zp_norm_sq, np.finfo(float).tiny):
            logger.warning(f"Clamping negative defect^2 = {defect_sq} to zero")
        defect_sq = 0.0

    h = HessenbergData(d, matrix, np.sqrt(defect_sq), basis.leading, zp_norm_sq, fill_in)
    logger.debug(f"Built {h}")
    return h


@measurement.measure("self_commutator")
def self_commutator(h: HessenbergData, normal_tol: float = None) -> CommutatorReport:
    """
    Evaluates the self-commutator [M*, M] = M*M - MM* and the normality certificate.
    All four conditions compare degree-2 quantities against normal_tol * h.scale.
    :param h: The Hessenberg data.
    :param normal_tol: Relative tolerance (default: settings.NORMAL_TOL).
    :return: A CommutatorReport.
    """
    if normal_tol is None:
        normal_tol = settings.NORMAL_TOL

    M = h.matrix
    Ms = M.conj().T
    commutator = Ms @ M - M @ Ms
    commutator = (commutator + commutator.conj().T) / 2

    eigenvalues = eigh(commutator, eigvals_only=True)
    lambda_minus = float(eigenvalues[0])
    corrected_min = float(eigh(commutator + perturbation_K(h), eigvals_only=True)[0])

    tol = normal_tol * h.scale
    is_normal = bool(np.max(np.abs(commutator)) <= tol)
    certificate_det = lambda_minus >= -tol
    defect_vanishes = h.defect ** 2 <= tol
    # z P_d is the only image of C_d[z] that can leave C_d[z] under M_{d+1}
    invariant_subspace = defect_vanishes

    report = CommutatorReport(
        commutator=commutator,
        lambda_minus=lambda_minus,
        defect_sq_bound=-h.defect ** 2,
        is_normal=is_normal,
        certificate_det=certificate_det,
        equivalences=Equivalences(is_normal, certificate_det, defect_vanishes, invariant_subspace),
        trace=float(np.trace(commutator).real),
        negative_count=int(np.sum(eigenvalues < -tol)),
        corrected_min=corrected_min,
        tolerance=tol,
        degree=h.d,
    )
    if not report.conditions_agree():
        logger.warning(f"Normality conditions disagree at tolerance {tol}: {report.equivalences}")
    return report


def sigma_form(h: HessenbergData) -> SigmaForm:
    """
    Returns the block form [[I, M*], [M, M*M]] of the quadratic form
    sigma_M(p, q) = |p|^2 + |Mq|^2 + 2 Re <Mp, q>, and checks that the congruence
    [[I, 0], [-M, I]] . S . [[I, -M*], [0, I]] = diag(I, [M*, M]).
    """
    M = h.matrix
    Ms = M.conj().T
    n = h.d + 1
    I = np.eye(n, dtype=complex)
    Z = np.zeros((n, n), dtype=complex)

    S = np.block([[I, Ms], [M, Ms @ M]])
    left = np.block([[I, Z], [-M, I]])
    right = np.block([[I, -Ms], [Z, I]])
    target = np.block([[I, Z], [Z, Ms @ M - M @ Ms]])

    residual = float(np.max(np.abs(left @ S @ right - target)))
    if residual > settings.CONGRUENCE_TOL * (1 + h.norm ** 2):
        logger.warning(f"Congruence residual {residual} exceeds tolerance")
    return SigmaForm(S, residual)


def sigma_positivity(h: HessenbergData) -> SigmaPositivity:
    """
    Smallest eigenvalues of the block form restricted to C_d[z] + C_{d-1}[z], and of the rank-one corrected
    form on the whole space. Both are non-negative when L is non-negative on real squares.
    """
    S = sigma_form(h).matrix
    n = h.d + 1
    # drop the P_d coordinate of the second component
    keep = list(range(2 * n - 1))
    restricted = S[np.ix_(keep, keep)]

    corrected = S.copy()
    corrected[n:, n:] += perturbation_K(h)

    return SigmaPositivity(
        restricted_min=float(eigh(restricted, eigvals_only=True)[0]),
        corrected_min=float(eigh(corrected, eigvals_only=True)[0]),
    )


def perturbation_K(h: HessenbergData) -> np.ndarray:
    """
    The rank-one correction K with <Kq, q> = a_{d+1,d}^2 |<q, P_d>|^2.
    """
    K = np.zeros((h.d + 1, h.d + 1), dtype=complex)
    K[h.d, h.d] = h.defect ** 2
    return K


def compression_identity(h: HessenbergData, table: MomentTable, p_degree: int, q_degree: int) -> float:
    """
    Largest deviation |<M^j 1, M^k 1> - s_jk| over j <= p_degree, k <= q_degree, j + k <= 2d + 1.
    """
    e = np.zeros(h.d + 1, dtype=complex)
    e[0] = np.sqrt(table.s00)

    krylov = [e]
    for _ in range(max(p_degree, q_degree)):
        krylov.append(h.matrix @ krylov[-1])

    residual = 0.0
    for j in range(p_degree + 1):
        for k in range(q_degree + 1):
            if j + k > 2 * h.d + 1:
                continue
            value = np.vdot(krylov[k], krylov[j])
            residual = max(residual, abs(value - table[j, k]))
    return float(residual)


def compress_to_subspace(table: MomentTable, span: np.ndarray, rank_tol: float = None) -> Compression:
    """
    Compresses M_z to the span of the polynomials v_0, ..., v_m (coefficient rows of span): the span is
    orthonormalized in the L-inner product and pi_V M_z pi_V is returned in that basis.
    :param table: Moment table with max_total_degree >= 2 * max deg v_i + 1.
    :param span: Coefficient rows of v_0, ..., v_m.
    :param rank_tol: Pivot threshold relative to s00 (default: settings.RANK_TOL).
    :return: A Compression with the matrix, the orthonormal coefficient rows and diagnostics.
    """
    if rank_tol is None:
        rank_tol = settings.RANK_TOL

    V = np.atleast_2d(np.asarray(span, dtype=complex))
    nonzero = np.flatnonzero(np.any(V != 0, axis=0))
    max_deg = int(nonzero[-1]) if len(nonzero) else 0
    table.require_degree(2 * max_deg + 1, "Compression to a subspace")
    V = V[:, :max_deg + 1]

    H = pairing(table, V)
    H = (H + H.conj().T) / 2
    L, r, pivot = hermitian_cholesky(H, rank_tol * table.s00)
    if r < V.shape[0]:
        raise DegenerateSpanError(f"Span loses rank at element {r} (pivot {pivot})")

    W = solve_triangular(L, V.conj(), lower=True).conj()
    M = pairing(table, _shift(W), W)
    Ms = M.conj().T

    compression = Compression(
        matrix=M,
        coeffs=W,
        gram=H,
        first_norm=float(L[0, 0].real),
        skew_residual=float(np.max(np.abs(M + Ms))),
        commutator_norm=float(np.max(np.abs(Ms @ M - M @ Ms))),
    )
    logger.debug(f"Compressed M_z to a {V.shape[0]}-dimensional subspace, "
                 f"skew residual {compression.skew_residual}")
    return compression
