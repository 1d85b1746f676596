import os
import unittest
import logging
import tempfile

import numpy as np

import settings
from moments import AtomicMeasure, moments_from_atoms
from ortho import orthonormalize
from hessenberg import build_hessenberg, compress_to_subspace
from cubature import Cubature, Contract, GAUSSIAN, HARMONIC, CertificateError, ContractError, CubatureFormatError, \
    normal_quadrature, compression_quadrature, verify_exactness, match_atoms, merge_nodes, spectral_decomposition
from fixtures import circle_arclength, ngon, dirichlet_interval, random_atoms, vanishing_subspace, EVEN, ODD


logging.basicConfig(format='%(asctime)s %(module)s %(levelname)s: %(message)s', level=logging.INFO)
logger = logging.getLogger(__name__)


def _quadrature(table, d, **kwargs) -> Cubature:
    basis = orthonormalize(table, d)
    return normal_quadrature(build_hessenberg(table, basis, d), basis, table, **kwargs)


class NormalQuadratureTestCase(unittest.TestCase):

    def test_round_trip(self):
        """d + 1 random atoms are recovered from their moments."""
        for i in range(50):
            d = 1 + i % 5
            atoms = random_atoms(d + 1, seed=i)
            table = moments_from_atoms(atoms, 2 * d + 2)
            c = _quadrature(table, d)
            distance = match_atoms(c, atoms)
            exactness = verify_exactness(c, table)
            logger.debug(f"seed={i}, d={d}: matching distance {distance}, residual {exactness.max_residual}")
            self.assertEqual(len(c), d + 1)
            self.assertLessEqual(distance, 1e-6, f"seed={i}, d={d}")
            self.assertTrue(exactness.passed, f"seed={i}, d={d}: {exactness.max_residual}")
            self.assertFalse(c.forced)

    def test_nodes_within_norm(self):
        for i in range(10):
            d = 1 + i % 4
            table = moments_from_atoms(random_atoms(d + 1, seed=50 + i), 2 * d + 2)
            basis = orthonormalize(table, d)
            h = build_hessenberg(table, basis, d)
            c = normal_quadrature(h, basis, table)
            self.assertLessEqual(np.max(np.abs(c.nodes)), h.norm + 1e-8)

    def test_ngon_roots_of_unity(self):
        n = 5
        c = _quadrature(ngon(n, 2 * n), n - 1)
        roots = AtomicMeasure(np.exp(2j * np.pi * np.arange(n) / n), np.full(n, 1 / n))
        distance = match_atoms(c, roots)
        logger.info(f"{n}-gon matching distance: {distance}")
        self.assertLessEqual(distance, 1e-10)

    def test_single_atom(self):
        table = moments_from_atoms(AtomicMeasure([0.3 - 0.4j], [2.0]), 2)
        c = _quadrature(table, 0)
        self.assertEqual(len(c), 1)
        self.assertAlmostEqual(c.nodes[0], table[1, 0] / table.s00, places=12)
        self.assertAlmostEqual(c.weights[0], table.s00, places=12)

    def test_degree_zero_with_many_atoms(self):
        for seed in range(5):
            atoms = random_atoms(2 + seed, seed=seed)
            table = moments_from_atoms(atoms, 2)
            c = _quadrature(table, 0)
            self.assertFalse(c.forced)
            self.assertEqual(len(c), 1)
            self.assertAlmostEqual(c.nodes[0], table[1, 0] / table.s00, places=12)
            self.assertAlmostEqual(c.weights[0], table.s00, places=12)
            self.assertTrue(verify_exactness(c, table).passed)

    def test_certificate_failure(self):
        with self.assertRaises(CertificateError):
            _quadrature(circle_arclength(6), 2)

    def test_forced(self):
        c = _quadrature(circle_arclength(6), 2, force=True)
        self.assertTrue(c.forced)
        self.assertEqual(c.contract, Contract(GAUSSIAN, 2))
        self.assertFalse(verify_exactness(c, circle_arclength(6)).passed)

    def test_excess_atoms_fail(self):
        for d in range(1, 4):
            atoms = random_atoms(d + 3, seed=d)
            table = moments_from_atoms(atoms, 2 * d + 2)
            basis = orthonormalize(table, d)
            h = build_hessenberg(table, basis, d)
            logger.info(f"d={d}, {d + 3} atoms: defect {h.defect}")
            self.assertGreater(h.defect, 1e-4)
            with self.assertRaises(CertificateError):
                normal_quadrature(h, basis, table)


class CompressionQuadratureTestCase(unittest.TestCase):

    def test_dirichlet_nodes_are_imaginary(self):
        a = 1.0
        table = dirichlet_interval(a, 24)
        radius = np.sqrt(table[1, 1].real / table.s00)
        for parity in (EVEN, ODD):
            for count in range(3, 6):
                compression = compress_to_subspace(table, vanishing_subspace(a, count, parity))
                nodes, weights = compression_quadrature(compression, radius=radius)
                logger.info(f"{parity}, {count} elements: {len(nodes)} nodes")
                self.assertGreaterEqual(len(nodes), 1)
                self.assertLessEqual(np.max(np.abs(nodes.real)), 1e-8)
                self.assertTrue(np.all(weights > 0))
                self.assertAlmostEqual(np.sum(weights), compression.first_norm ** 2,
                                       delta=1e-10 * compression.first_norm ** 2)


class VerifyExactnessTestCase(unittest.TestCase):

    def test_wrong_claim(self):
        c = Cubature([0j], [1.0], Contract(GAUSSIAN, 1))
        report = verify_exactness(c, circle_arclength(4))
        self.assertFalse(report.passed)
        self.assertAlmostEqual(report.residuals[(1, 1)], 1)
        self.assertEqual(report.worst_pair, (1, 1))
        self.assertIn((1, 1), report.failures)

    def test_own_table(self):
        atoms = random_atoms(4, seed=6)
        c = Cubature(atoms.nodes, atoms.weights, Contract(GAUSSIAN, 3))
        report = verify_exactness(c, moments_from_atoms(atoms, 7))
        logger.info(f"Residual against its own table: {report.max_residual}")
        self.assertLessEqual(report.max_residual, 1e-9)
        self.assertTrue(report.passed)

    def test_mass_pair(self):
        atoms = random_atoms(3, seed=7)
        table = moments_from_atoms(atoms, 5)
        c = Cubature(atoms.nodes, atoms.weights, Contract(GAUSSIAN, 2))
        report = verify_exactness(c, table)
        self.assertAlmostEqual(report.residuals[(0, 0)], abs(c.mass - table.s00))

    def test_grid(self):
        contract = Contract(GAUSSIAN, 2)
        pairs = contract.pairs()
        self.assertNotIn((3, 3), pairs)
        self.assertIn((3, 2), pairs)
        self.assertIn((2, 3), pairs)
        self.assertTrue(all(j <= 3 and k <= 3 and j + k <= 5 for j, k in pairs))
        self.assertEqual(set(Contract(HARMONIC, 2, 1.0).pairs()), {(0, 0), (1, 0), (2, 0), (0, 1), (0, 2)})

    def test_contract_exceeds_table(self):
        c = Cubature([0j], [1.0], Contract(GAUSSIAN, 2))
        with self.assertRaises(ContractError):
            verify_exactness(c, circle_arclength(4))

    def test_threshold_follows_settings(self):
        atoms = random_atoms(2, seed=2)
        table = moments_from_atoms(atoms, 3)
        c = Cubature(atoms.nodes + 1e-5, atoms.weights, Contract(GAUSSIAN, 1))
        self.assertFalse(verify_exactness(c, table).passed)
        self.assertTrue(verify_exactness(c, table, tol=1e-3).passed)


class MatchAtomsTestCase(unittest.TestCase):

    def setUp(self) -> None:
        super().setUp()

        # pin seed
        self.atoms = random_atoms(6, seed=13)
        self.cubature = Cubature(self.atoms.nodes, self.atoms.weights, Contract(GAUSSIAN, 5))

    def test_identical(self):
        self.assertEqual(match_atoms(self.cubature, self.atoms), 0)

    def test_permuted(self):
        order = np.random.default_rng(2).permutation(len(self.atoms))
        permuted = AtomicMeasure(self.atoms.nodes[order], self.atoms.weights[order])
        self.assertEqual(match_atoms(self.cubature, permuted), 0)

    def test_perturbed(self):
        perturbed = AtomicMeasure(self.atoms.nodes + 1e-7, self.atoms.weights)
        self.assertLessEqual(match_atoms(self.cubature, perturbed), 2e-7)

    def test_count_mismatch(self):
        self.assertEqual(match_atoms(self.cubature, random_atoms(5, seed=13)), float("inf"))

    def test_exhaustive_search_beats_greedy(self):
        # greedy pairs node 0 with 0.1 and leaves 1.0 for the node at -1
        c = Cubature([0j, -1 + 0j], [1.0, 1.0], Contract(GAUSSIAN, 1))
        reference = AtomicMeasure([0.1, 1.0], [1.0, 1.0])
        self.assertAlmostEqual(match_atoms(c, reference), 1.1)
        previous = settings.MAX_FULL_MATCH
        try:
            settings.override(max_full_match=0)
            self.assertAlmostEqual(match_atoms(c, reference), 2.0)
        finally:
            settings.override(max_full_match=previous)


class CubatureTestCase(unittest.TestCase):

    def test_validation(self):
        with self.assertRaises(CubatureFormatError):
            Cubature([0j], [0.0], Contract(GAUSSIAN, 0))
        with self.assertRaises(CubatureFormatError):
            Cubature([0j, 1j], [1.0], Contract(GAUSSIAN, 1))
        with self.assertRaises(ContractError):
            Cubature([0j, 1j, 2j], [1.0, 1.0, 1.0], Contract(GAUSSIAN, 1))

    def test_save_and_load(self):
        atoms = random_atoms(3, seed=4)
        c = Cubature(atoms.nodes, atoms.weights, Contract(HARMONIC, 2, 0.75))
        with tempfile.TemporaryDirectory() as directory:
            filename = os.path.join(directory, "cubature.json")
            c.save(filename)
            loaded = Cubature.load(filename)
        self.assertEqual(loaded.contract, c.contract)
        self.assertTrue(np.array_equal(loaded.nodes, c.nodes))
        self.assertTrue(np.array_equal(loaded.weights, c.weights))

    def test_malformed(self):
        for data in [{}, {"contract": {"kind": "other", "d": 1}, "nodes": [], "weights": []},
                     {"contract": {"kind": GAUSSIAN, "d": -1}, "nodes": [0], "weights": [1]},
                     {"contract": {"kind": GAUSSIAN, "d": 1}, "nodes": ["x"], "weights": [1]}]:
            with self.assertRaises(CubatureFormatError):
                Cubature.from_json(data)

    def test_merge_nodes(self):
        nodes, weights = merge_nodes(np.array([1.0, 1.0 + 1e-12, 2.0]), np.array([1.0, 3.0, 1.0]), 1e-9)
        self.assertEqual(len(nodes), 2)
        self.assertAlmostEqual(weights[0], 4.0)
        self.assertAlmostEqual(nodes[0], 1.0, places=11)

    def test_spectral_decomposition_of_normal_matrix(self):
        Q, _ = np.linalg.qr(np.random.default_rng(1).standard_normal((4, 4)))
        M = Q @ np.diag([1, 2j, -1, 0.5]) @ Q.T
        spectral = spectral_decomposition(M)
        self.assertLessEqual(spectral.residual, 1e-12)
        self.assertTrue(np.allclose(sorted(spectral.values, key=lambda v: (v.real, v.imag)),
                                    sorted([1, 2j, -1, 0.5], key=lambda v: (np.real(v), np.imag(v)))))


if __name__ == '__main__':
    unittest.main()
