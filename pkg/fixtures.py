import logging
from typing import NamedTuple, Optional, Dict, Any

import numpy as np

from moments import MomentTable, AtomicMeasure, moments_from_atoms

logger = logging.getLogger(__name__)

CIRCLE = "circle"
NGON = "ngon"
DIRICHLET = "dirichlet"
ATOMS = "atoms"

FIXTURE_KINDS = [CIRCLE, NGON, DIRICHLET, ATOMS]

EVEN = "even"
ODD = "odd"

# resampling attempts before random_atoms gives up
MAX_RETRIES = 1000


def _degree_grid(D: int):
    j, k = np.indices((D + 1, D + 1))
    return j, k


def circle_arclength(D: int) -> MomentTable:
    """
    Normalized arc length on the unit circle: s_jk = delta_jk.
    """
    assert D >= 0
    return MomentTable(np.eye(D + 1))


def ngon(n: int, D: int) -> MomentTable:
    """
    Uniform probability measure on the n-th roots of unity: s_jk = 1 if j = k (mod n), else 0.
    """
    if n < 3:
        raise ValueError(f"An n-gon needs n >= 3, got {n}")
    assert D >= 0
    j, k = _degree_grid(D)
    return MomentTable(((j - k) % n == 0).astype(float))


def _interval_integral(m: np.ndarray, a: float) -> np.ndarray:
    """Integral of x^m over [-a, a] (0 for odd or negative m)."""
    m = np.asarray(m)
    safe = np.maximum(m, 0)
    values = 2 * a ** (safe + 1) / (safe + 1)
    return np.where((m >= 0) & (m % 2 == 0), values, 0.0)


def dirichlet_interval(a: float, D: int) -> MomentTable:
    """
    Moments of the Dirichlet type form L(p conj(q)) = integral over [-a, a] of p conj(q) + p' conj(q'):
    s_jk = I(j + k) + j k I(j + k - 2) with I(m) the integral of x^m.
    """
    if a <= 0:
        raise ValueError(f"Interval half-width must be positive, got {a}")
    assert D >= 0
    j, k = _degree_grid(D)
    values = _interval_integral(j + k, a) + j * k * _interval_integral(j + k - 2, a)
    return MomentTable(values)


def random_atoms(count: int, seed: int, disk_radius: float = 1.0, max_retries: int = MAX_RETRIES) -> AtomicMeasure:
    """
    Random atomic measure with count nodes in the disk |z| <= disk_radius, pairwise at least
    disk_radius / (10 count) apart, and weights in [0.1, 1]. Deterministic in the seed.
    """
    if count < 1:
        raise ValueError(f"Need at least one atom, got {count}")
    if disk_radius <= 0:
        raise ValueError(f"Disk radius must be positive, got {disk_radius}")

    rng = np.random.default_rng(seed)
    separation = disk_radius / (10 * count)
    for attempt in range(max_retries):
        radii = disk_radius * np.sqrt(rng.uniform(0, 1, count))
        angles = rng.uniform(0, 2 * np.pi, count)
        nodes = radii * np.exp(1j * angles)
        weights = rng.uniform(0.1, 1, count)

        distances = np.abs(nodes[:, None] - nodes[None, :])
        np.fill_diagonal(distances, np.inf)
        if np.min(distances) >= separation:
            if attempt > 0:
                logger.debug(f"Resampled atoms {attempt} times for seed {seed}")
            return AtomicMeasure(nodes, weights)

    raise RuntimeError(f"Could not place {count} atoms with separation {separation} after {max_retries} tries")


def vanishing_subspace(a: float, count: int, parity: str) -> np.ndarray:
    """
    Coefficient rows spanning the even (or odd) polynomials vanishing at +-a:
    (z^2 - a^2) z^(2m) for the even, (z^2 - a^2) z^(2m+1) for the odd subspace, m = 0, ..., count - 1.
    """
    if parity not in (EVEN, ODD):
        raise ValueError(f"Parity must be '{EVEN}' or '{ODD}', got {parity}")
    assert count >= 1
    offset = 0 if parity == EVEN else 1
    span = np.zeros((count, 2 * (count - 1) + offset + 3))
    for m in range(count):
        low = 2 * m + offset
        span[m, low] = -a ** 2
        span[m, low + 2] = 1
    return span


class FixtureSpec(NamedTuple):
    """
    A named fixture with its parameters and the total degree of the table to build.
    """
    kind: str
    degree: int
    params: Optional[Dict[str, Any]] = None

    @property
    def options(self) -> Dict[str, Any]:
        return dict(self.params or {})

    def validate(self) -> None:
        if self.kind not in FIXTURE_KINDS:
            raise ValueError(f"Unknown fixture '{self.kind}', choose one of {FIXTURE_KINDS}")
        if self.degree < 0:
            raise ValueError(f"Degree must be non-negative, got {self.degree}")
        if self.kind == NGON and self.options.get("n", 0) < 3:
            raise ValueError("The ngon fixture needs n >= 3")
        if self.kind == DIRICHLET and self.options.get("a", 1.0) <= 0:
            raise ValueError("The dirichlet fixture needs a > 0")
        if self.kind == ATOMS and self.options.get("count", 0) < 1:
            raise ValueError("The atoms fixture needs count >= 1")

    def atoms(self) -> AtomicMeasure:
        assert self.kind == ATOMS
        return random_atoms(self.options["count"], self.options.get("seed", 0), self.options.get("disk_radius", 1.0))

    def build(self) -> MomentTable:
        self.validate()
        if self.kind == CIRCLE:
            return circle_arclength(self.degree)
        if self.kind == NGON:
            return ngon(self.options["n"], self.degree)
        if self.kind == DIRICHLET:
            return dirichlet_interval(self.options.get("a", 1.0), self.degree)
        return moments_from_atoms(self.atoms(), self.degree)

    def describe(self) -> Dict[str, Any]:
        return {"fixture": self.kind, "degree": self.degree, **self.options}
