import logging
from typing import NamedTuple, Optional, Tuple, Union

import numpy as np
from scipy.linalg import solve_triangular

import settings
import measurement
from moments import MomentTable, DegreeOverflowError, gram_matrix

logger = logging.getLogger(__name__)


class NotPositiveSemidefiniteError(ValueError):
    """Raised when a Gram matrix has a clearly negative pivot, i.e. the functional is not positive."""


class DegeneracyReport(NamedTuple):
    """
    Returned instead of a basis when the Gram matrix loses strict positivity.
    degree: the first degree r at which the pivot fell below rank_tol * s00
    pivot: the offending pivot (squared distance of z^r to the span of lower monomials)
    """
    degree: int
    pivot: float
    requested: int


def hermitian_cholesky(G: np.ndarray, threshold: float, invalid: Optional[float] = None) -> Tuple[np.ndarray, int, float]:
    """
    Column-by-column Cholesky factorization G = L L^* of a Hermitian matrix, without pivoting so that the
    factor stays aligned with the ordering of G.
    :param G: A Hermitian matrix.
    :param threshold: Pivots below this value stop the factorization.
    :param invalid: Optionally, pivots below this (negative) value raise NotPositiveSemidefiniteError.
    :return: Tuple (L, r, pivot): the lower-triangular factor of the leading r x r block, the number r of
             successful steps (r == n on success) and the last pivot examined.
    """
    n = G.shape[0]
    L = np.zeros((n, n), dtype=complex)
    pivot = float("nan")
    for r in range(n):
        pivot = float((G[r, r] - np.vdot(L[r, :r], L[r, :r])).real)
        if invalid is not None and pivot < invalid:
            raise NotPositiveSemidefiniteError(f"Gram pivot {pivot} at step {r} is negative")
        if pivot < threshold:
            return L[:r, :r], r, pivot
        L[r, r] = np.sqrt(pivot)
        L[r + 1:, r] = (G[r + 1:, r] - L[r + 1:, :r] @ L[r, :r].conj()) / L[r, r]
    return L, n, pivot


class OrthoBasis(object):
    """
    The complex orthonormal polynomials P_0, ..., P_m of a moment table, with positive leading coefficients.
    Row j of coeffs holds the monomial coefficients of P_j, so coeffs is lower triangular and
    coeffs[j, j] = kappa_j > 0.
    """

    def __init__(self, coeffs: np.ndarray, mass: float):
        coeffs = np.array(coeffs, dtype=complex)
        assert coeffs.ndim == 2 and coeffs.shape[0] == coeffs.shape[1]
        assert np.all(coeffs.diagonal().real > 0)

        coeffs.setflags(write=False)
        self.degree = coeffs.shape[0] - 1
        self.coeffs = coeffs
        self.leading = coeffs.diagonal().real.copy()
        # s00 of the table the basis was built from
        self.mass = mass

    def truncate(self, d: int) -> "OrthoBasis":
        if d > self.degree:
            raise DegreeOverflowError(f"Basis of degree {self.degree} cannot be truncated to degree {d}")
        return OrthoBasis(self.coeffs[:d + 1, :d + 1], self.mass)

    def evaluate(self, j: int, z: complex) -> complex:
        return evaluate(self, j, z)

    def __repr__(self):
        return f"OrthoBasis(degree={self.degree}, leading={self.leading})"


@measurement.measure("orthonormalize")
def orthonormalize(table: MomentTable, d: int, rank_tol: float = None) -> Union[OrthoBasis, DegeneracyReport]:
    """
    Gram-Schmidt on the monomials 1, z, ..., z^d in the L-inner product, carried out as a Cholesky
    factorization G = L L^* of the Gram matrix; P_j then has coefficients conj(L^{-1})[j].
    :param table: A moment table with max_total_degree >= 2d.
    :param d: The degree of the basis.
    :param rank_tol: Pivot threshold relative to s00 (default: settings.RANK_TOL).
    :return: The basis, or a DegeneracyReport naming the first degree at which strict positivity fails.
    """
    if rank_tol is None:
        rank_tol = settings.RANK_TOL

    G = gram_matrix(table, d)
    s00 = table.s00
    L, r, pivot = hermitian_cholesky(G, rank_tol * s00, invalid=-rank_tol * s00)
    if r <= d:
        logger.debug(f"Gram matrix degenerates at degree {r} (pivot {pivot})")
        return DegeneracyReport(degree=r, pivot=pivot, requested=d)

    L_inv = solve_triangular(L, np.eye(d + 1, dtype=complex), lower=True)
    basis = OrthoBasis(np.tril(L_inv.conj()), s00)
    logger.debug(f"Orthonormal basis of degree {d}, last pivot {pivot}")
    return basis


def orthonormality_residual(basis: OrthoBasis, table: MomentTable) -> float:
    """
    Recomputes <P_k, P_j>_L from the moment table and returns max |<P_k, P_j>_L - delta_jk|.
    """
    gram = gram_matrix(table, basis.degree)
    products = basis.coeffs.conj() @ gram @ basis.coeffs.T
    return float(np.max(np.abs(products - np.eye(basis.degree + 1))))


def cyclic_vector_coords(basis: OrthoBasis, table: MomentTable) -> np.ndarray:
    """
    Coordinates of the constant function 1 in the basis {P_j}: 1 = <1, P_0> P_0 with <1, P_0> = kappa_0 s00,
    which equals sqrt(s00) because kappa_0 = s00^(-1/2).
    :return: The vector (sqrt(s00), 0, ..., 0).
    """
    e = np.zeros(basis.degree + 1, dtype=complex)
    e[0] = np.sqrt(table.s00)
    return e


def evaluate(basis: OrthoBasis, j: int, z: complex) -> complex:
    """
    Evaluates P_j at z.
    :param basis: An orthonormal basis.
    :param j: Index of the polynomial, 0 <= j <= basis.degree.
    :param z: The point.
    :return: P_j(z)
    """
    if not 0 <= j <= basis.degree:
        raise IndexError(f"Polynomial index {j} outside 0..{basis.degree}")
    # np.polyval expects the highest power first
    return complex(np.polyval(basis.coeffs[j, :j + 1][::-1], z))
