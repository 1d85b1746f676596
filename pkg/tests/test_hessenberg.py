import unittest
import logging

import numpy as np

from moments import MomentTable, AtomicMeasure, moments_from_atoms, DegreeOverflowError
from ortho import orthonormalize
from hessenberg import HessenbergData, BasisMismatchError, DegenerateSpanError, build_hessenberg, \
    self_commutator, sigma_form, sigma_positivity, perturbation_K, compression_identity, compress_to_subspace
from fixtures import circle_arclength, ngon, dirichlet_interval, random_atoms, vanishing_subspace, EVEN, ODD


logging.basicConfig(format='%(asctime)s %(module)s %(levelname)s: %(message)s', level=logging.INFO)
logger = logging.getLogger(__name__)


def _hessenberg(table: MomentTable, d: int) -> HessenbergData:
    return build_hessenberg(table, orthonormalize(table, d), d)


def _jordan(d: int) -> np.ndarray:
    return np.eye(d + 1, k=-1)


class HessenbergTestCase(unittest.TestCase):

    def setUp(self) -> None:
        super().setUp()

        # (table, d) pairs with d + 1 atoms, where a Gaussian quadrature exists
        self.normal_cases = []
        for i in range(10):
            d = 1 + i % 4
            self.normal_cases.append((moments_from_atoms(random_atoms(d + 1, seed=100 + i), 2 * d + 2), d))

    def test_circle_jordan_block(self):
        for d in range(2, 9):
            h = _hessenberg(circle_arclength(2 * d + 2), d)
            error = np.max(np.abs(h.matrix - _jordan(d)))
            logger.info(f"d={d}: Jordan block error {error}, defect {h.defect}")
            self.assertLessEqual(error, 1e-12)
            self.assertAlmostEqual(h.defect, 1, delta=1e-12)

    def test_ngon_jordan_block(self):
        h = _hessenberg(ngon(5, 6), 2)
        self.assertLessEqual(np.max(np.abs(h.matrix - _jordan(2))), 1e-12)
        self.assertAlmostEqual(h.defect, 1, delta=1e-12)

    def test_atomic_defect_vanishes(self):
        for table, d in self.normal_cases:
            h = _hessenberg(table, d)
            logger.info(f"d={d}: defect {h.defect}, norm {h.norm}")
            self.assertLessEqual(h.defect ** 2, 1e-8 * h.scale)

    def test_hessenberg_structure(self):
        for seed in range(5):
            table = moments_from_atoms(random_atoms(8, seed=seed), 12)
            h = _hessenberg(table, 4)
            self.assertTrue(np.array_equal(h.matrix, np.triu(h.matrix, -1)))
            self.assertLessEqual(h.fill_in, 1e-10)

    def test_subdiagonal_identity(self):
        table = moments_from_atoms(random_atoms(8, seed=21), 12)
        basis = orthonormalize(table, 5)
        h = build_hessenberg(table, basis, 4)
        for j in range(4):
            self.assertAlmostEqual(h.matrix[j + 1, j] * basis.leading[j + 1], basis.leading[j], delta=1e-10)
            self.assertAlmostEqual(h.matrix[j + 1, j].imag, 0, delta=1e-10)

    def test_degree_zero(self):
        table = moments_from_atoms(random_atoms(3, seed=2), 2)
        h = _hessenberg(table, 0)
        self.assertAlmostEqual(h.matrix[0, 0], table[1, 0] / table.s00, places=12)

    def test_insufficient_degree(self):
        table = circle_arclength(7)
        basis = orthonormalize(table, 3)
        with self.assertRaises(DegreeOverflowError):
            build_hessenberg(table, basis, 3)

    def test_basis_mismatch(self):
        table = moments_from_atoms(random_atoms(4, seed=1), 8)
        with self.assertRaises(BasisMismatchError):
            build_hessenberg(table, orthonormalize(circle_arclength(8), 3), 3)
        with self.assertRaises(BasisMismatchError):
            build_hessenberg(table, orthonormalize(table, 1), 2)


class CommutatorTestCase(unittest.TestCase):

    def test_circle(self):
        h = _hessenberg(circle_arclength(8), 3)
        report = self_commutator(h)
        self.assertTrue(np.allclose(report.commutator, np.diag([1, 0, 0, -1]), atol=1e-10))
        self.assertAlmostEqual(report.lambda_minus, -1, delta=1e-10)
        self.assertAlmostEqual(report.lambda_minus, report.defect_sq_bound, delta=1e-10)
        self.assertFalse(report.is_normal)
        self.assertFalse(report.certificate_det)
        self.assertEqual(report.negative_count, 1)
        self.assertTrue(report.equivalences.agree())

    def test_degree_zero_is_normal(self):
        table = moments_from_atoms(random_atoms(1, seed=4), 2)
        report = self_commutator(_hessenberg(table, 0))
        self.assertEqual(report.commutator.shape, (1, 1))
        self.assertAlmostEqual(report.commutator[0, 0], 0)
        self.assertTrue(report.is_normal)

    def test_degree_zero_with_two_atoms(self):
        table = moments_from_atoms(AtomicMeasure([1.0, -1.0], [1.0, 1.0]), 2)
        report = self_commutator(_hessenberg(table, 0))
        self.assertTrue(report.is_normal)
        self.assertTrue(report.certificate_det)
        # zP_0 = z / sqrt(2) is orthogonal to the constants
        self.assertFalse(report.equivalences.defect_vanishes)
        self.assertFalse(report.equivalences.agree())
        self.assertTrue(report.conditions_agree())
        self.assertTrue(report.certified())

    def test_certified_needs_vanishing_defect(self):
        report = self_commutator(_hessenberg(circle_arclength(4), 1))
        self.assertFalse(report.certified())
        self.assertTrue(report.conditions_agree())

    def test_atomic_certificate(self):
        for i in range(10):
            d = 1 + i % 4
            table = moments_from_atoms(random_atoms(d + 1, seed=200 + i), 2 * d + 2)
            h = _hessenberg(table, d)
            report = self_commutator(h)
            logger.info(f"d={d}: lambda_minus {report.lambda_minus}, equivalences {report.equivalences}")
            self.assertGreaterEqual(report.lambda_minus, -1e-8 * h.scale)
            self.assertTrue(all(report.equivalences))

    def test_eigenvalue_bounds(self):
        rng = np.random.default_rng(7)
        for i in range(30):
            count = int(rng.integers(1, 9))
            d = int(rng.integers(0, min(4, count - 1) + 1))
            table = moments_from_atoms(random_atoms(count, seed=300 + i), 2 * d + 2)
            h = _hessenberg(table, d)
            report = self_commutator(h)
            tol = 1e-8 * h.scale
            eigenvalues = np.linalg.eigvalsh(report.commutator)
            self.assertLessEqual(int(np.sum(eigenvalues < -tol)), 1)
            self.assertGreaterEqual(report.lambda_minus, report.defect_sq_bound - tol)
            self.assertGreaterEqual(report.corrected_min, -tol)
            self.assertLessEqual(abs(report.trace), 1e-10 * max(h.norm ** 2, 1))

    def test_certificate_equivalence(self):
        cases = [(circle_arclength(2 * d + 2), d) for d in range(2, 9)]
        cases += [(ngon(7, 16), d) for d in range(2, 6)]
        cases += [(moments_from_atoms(random_atoms(d + 1, seed=d), 2 * d + 2), d) for d in range(1, 5)]
        for table, d in cases:
            report = self_commutator(_hessenberg(table, d))
            self.assertTrue(report.equivalences.agree(), f"d={d}: {report.equivalences}")


class SigmaFormTestCase(unittest.TestCase):

    def test_scalar(self):
        a = 0.5 - 2j
        h = HessenbergData(0, np.array([[a]]), 0.0, np.ones(1), 0.0)
        S = sigma_form(h).matrix
        self.assertTrue(np.allclose(S, [[1, np.conj(a)], [a, abs(a) ** 2]]))

    def test_circle_congruence(self):
        self.assertEqual(sigma_form(_hessenberg(circle_arclength(6), 2)).congruence_residual, 0)

    def test_random_congruence(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            d = int(rng.integers(0, 8))
            M = np.triu(rng.standard_normal((d + 1, d + 1)) + 1j * rng.standard_normal((d + 1, d + 1)), -1)
            h = HessenbergData(d, M, 0.0, np.ones(d + 1), 0.0)
            residual = sigma_form(h).congruence_residual
            self.assertLessEqual(residual, 1e-12 * (1 + h.norm ** 2))

    def test_positivity(self):
        for seed in range(5):
            table = moments_from_atoms(random_atoms(7, seed=seed), 10)
            h = _hessenberg(table, 3)
            positivity = sigma_positivity(h)
            logger.info(f"Restricted minimum {positivity.restricted_min}, corrected {positivity.corrected_min}")
            self.assertGreaterEqual(positivity.restricted_min, -1e-8 * h.scale)
            self.assertGreaterEqual(positivity.corrected_min, -1e-8 * h.scale)


class PerturbationTestCase(unittest.TestCase):

    def test_circle(self):
        K = perturbation_K(_hessenberg(circle_arclength(8), 3))
        self.assertTrue(np.allclose(K, np.diag([0, 0, 0, 1]), atol=1e-12))

    def test_ngon(self):
        K = perturbation_K(_hessenberg(ngon(5, 6), 2))
        self.assertTrue(np.allclose(K, np.diag([0, 0, 1]), atol=1e-12))

    def test_zero_defect(self):
        h = HessenbergData(2, np.zeros((3, 3)), 0.0, np.ones(3), 0.0)
        self.assertTrue(np.array_equal(perturbation_K(h), np.zeros((3, 3))))


class CompressionTestCase(unittest.TestCase):

    def test_ngon_compression_identity(self):
        table = ngon(7, 16)
        for d in range(2, 6):
            h = _hessenberg(table, d)
            residual = compression_identity(h, table, d + 1, d)
            logger.info(f"d={d}: compression identity residual {residual}")
            self.assertLessEqual(residual, 1e-9)

    def test_monomial_span_reproduces_hessenberg(self):
        table = moments_from_atoms(random_atoms(6, seed=17), 8)
        h = _hessenberg(table, 3)
        compression = compress_to_subspace(table, np.eye(4))
        self.assertTrue(np.allclose(compression.matrix, h.matrix, atol=1e-10))

    def test_constant_span(self):
        table = moments_from_atoms(random_atoms(3, seed=19), 2)
        compression = compress_to_subspace(table, [[1.0]])
        self.assertAlmostEqual(compression.matrix[0, 0], table[1, 0] / table.s00, places=12)
        self.assertAlmostEqual(compression.first_norm, np.sqrt(table.s00), places=12)

    def test_dirichlet_skew(self):
        a = 1.0
        table = dirichlet_interval(a, 24)
        for parity in (EVEN, ODD):
            for count in range(3, 6):
                compression = compress_to_subspace(table, vanishing_subspace(a, count, parity))
                eigenvalues = np.linalg.eigvals(compression.matrix)
                logger.info(f"{parity}, {count} elements: skew residual {compression.skew_residual}")
                self.assertLessEqual(compression.skew_residual, 1e-8)
                self.assertLessEqual(np.max(np.abs(eigenvalues.real)), 1e-8)

    def test_degenerate_span(self):
        table = moments_from_atoms(random_atoms(4, seed=3), 8)
        with self.assertRaises(DegenerateSpanError):
            compress_to_subspace(table, [[1, 0], [2, 0]])


if __name__ == '__main__':
    unittest.main()
