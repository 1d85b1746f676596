import os
import json
import logging
from json import JSONEncoder
from pathlib import Path
from typing import Dict, Tuple, Iterator, IO, Union, Any, Optional

import numpy as np

import settings

logger = logging.getLogger(__name__)

Index = Tuple[int, int]
MomentSource = Union[IO, bytes, str]


class MomentFormatError(ValueError):
    """Raised for malformed or inconsistent moment data."""


class DegreeOverflowError(ValueError):
    """Raised when a computation needs moments beyond the degree stored in a table."""


class ComplexJSONEncoder(JSONEncoder):
    """
    JSONEncoder extension that stores complex values as {"re": ..., "im": ...} and converts numpy scalars and
    arrays to plain python values.
    """
    def default(self, o: Any) -> Any:
        if isinstance(o, (complex, np.complexfloating)):
            return {"re": float(o.real), "im": float(o.imag)}
        if isinstance(o, np.bool_):
            return bool(o)
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.floating):
            return float(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        return JSONEncoder.default(self, o)


def decode_complex(obj: Any) -> complex:
    """
    Inverts the complex encoding of ComplexJSONEncoder. Plain numbers are accepted as real values.
    :param obj: A dict {"re": float, "im": float} or a number.
    :return: The complex value.
    """
    if isinstance(obj, dict):
        re = obj.get("re")
        im = obj.get("im", 0.0)
        if not _is_number(re) or not _is_number(im):
            raise MomentFormatError(f"Invalid complex value: {obj}")
        return complex(re, im)
    if _is_number(obj):
        return complex(obj)
    raise MomentFormatError(f"Invalid complex value: {obj}")


def _is_number(x: Any) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and np.isfinite(x)


def _is_degree(x: Any) -> bool:
    return isinstance(x, int) and not isinstance(x, bool) and x >= 0


def _triangle_mask(D: int) -> np.ndarray:
    j, k = np.indices((D + 1, D + 1))
    return j + k <= D


def _hermitian_part(values: np.ndarray) -> np.ndarray:
    """
    Rebuilds a square array from its lower triangle (j >= k) so that the result is exactly Hermitian.
    """
    lower = np.tril(values)
    result = lower + np.tril(values, -1).conj().T
    np.fill_diagonal(result, result.diagonal().real)
    return result


class MomentTable(object):
    """
    The truncated moments s_jk = L(z^j zbar^k), j + k <= D, of a real functional L on C[z, zbar].

    Values live in a read-only (D+1)x(D+1) array whose entries with j + k > D are zero. A table is always
    Hermitian-complete (s_kj == conj(s_jk) bit for bit) and has a real, positive s_00.
    """

    def __init__(self, values: np.ndarray):
        values = np.array(values, dtype=complex)
        if values.ndim != 2 or values.shape[0] != values.shape[1] or values.shape[0] == 0:
            raise MomentFormatError(f"Moment array must be square and non-empty, got shape {values.shape}")

        D = values.shape[0] - 1
        values[~_triangle_mask(D)] = 0

        if not np.array_equal(values, values.conj().T):
            raise MomentFormatError("Moment array is not Hermitian")
        if not np.all(np.isfinite(values)):
            raise MomentFormatError("Moment array holds non-finite values")
        if not values[0, 0].real > 0:
            raise MomentFormatError(f"s_00 must be positive, got {values[0, 0].real}")

        values.setflags(write=False)
        self.max_total_degree = D
        self._values = values

    @classmethod
    def from_entries(cls, max_total_degree: int, entries: Dict[Index, complex], tol: float = None) -> "MomentTable":
        """
        Builds a table from a partial map of moments, completing missing conjugate partners.
        For every pair the representative with j >= k wins; given partners must agree under conjugation.
        :param max_total_degree: The degree D of the table.
        :param entries: Map (j, k) -> s_jk. At least one of (j, k), (k, j) must be present for j + k <= D.
        :param tol: Symmetry tolerance relative to the largest modulus entry (default: settings.SYMMETRY_TOL).
        :return: A validated MomentTable.
        """
        if tol is None:
            tol = settings.SYMMETRY_TOL
        if not _is_degree(max_total_degree):
            raise MomentFormatError(f"max_total_degree must be a non-negative integer, got {max_total_degree}")
        D = max_total_degree

        for (j, k) in entries:
            if j < 0 or k < 0 or j + k > D:
                raise MomentFormatError(f"Moment index ({j}, {k}) outside the degree-{D} triangle")

        scale = max((abs(v) for v in entries.values()), default=0.0)
        values = np.zeros((D + 1, D + 1), dtype=complex)

        for j in range(D + 1):
            for k in range(min(j, D - j) + 1):
                given = entries.get((j, k))
                partner = entries.get((k, j))
                if given is None and partner is None:
                    raise MomentFormatError(f"Missing moment s_({j},{k}) and its conjugate partner")
                if given is not None and partner is not None:
                    mismatch = abs(complex(partner) - complex(given).conjugate())
                    if mismatch > tol * scale:
                        raise MomentFormatError(
                            f"Symmetry violation at ({j},{k}): s_({j},{k}) = {given}, s_({k},{j}) = {partner}"
                        )
                value = complex(given) if given is not None else complex(partner).conjugate()
                if j == k:
                    if abs(value.imag) > tol * scale:
                        raise MomentFormatError(f"Diagonal moment s_({j},{j}) = {value} is not real")
                    value = complex(value.real)
                values[j, k] = value
                values[k, j] = value.conjugate()

        return cls(values)

    @property
    def values(self) -> np.ndarray:
        """Read-only (D+1)x(D+1) array with values[j, k] = s_jk (zero outside j + k <= D)."""
        return self._values

    @property
    def s00(self) -> float:
        return float(self._values[0, 0].real)

    @property
    def scale(self) -> float:
        """The largest modulus of any stored moment."""
        return float(np.max(np.abs(self._values)))

    def __getitem__(self, index: Index) -> complex:
        j, k = index
        if j < 0 or k < 0 or j + k > self.max_total_degree:
            raise DegreeOverflowError(
                f"Moment s_({j},{k}) is outside a table of max_total_degree {self.max_total_degree}"
            )
        return complex(self._values[j, k])

    def items(self) -> Iterator[Tuple[Index, complex]]:
        """
        Iterates the stored representatives (j >= k) of all conjugate pairs.
        """
        D = self.max_total_degree
        for j in range(D + 1):
            for k in range(min(j, D - j) + 1):
                yield (j, k), complex(self._values[j, k])

    def require_degree(self, degree: int, purpose: str = "") -> None:
        if degree > self.max_total_degree:
            raise DegreeOverflowError(
                f"{purpose or 'Computation'} requires max_total_degree >= {degree}, "
                f"table has {self.max_total_degree}"
            )

    def truncate(self, max_total_degree: int) -> "MomentTable":
        self.require_degree(max_total_degree, "Truncation")
        D = max_total_degree
        return MomentTable(self._values[:D + 1, :D + 1])

    def to_json(self) -> Dict[str, Any]:
        return {
            "max_total_degree": self.max_total_degree,
            "moments": [
                {"j": j, "k": k, "re": value.real, "im": value.imag} for (j, k), value in self.items()
            ],
        }

    @classmethod
    def load(cls, filename: str) -> "MomentTable":
        """
        Initializes a MomentTable from a moment JSON file.
        :param filename: The path to the JSON-file.
        :return: A MomentTable.
        """
        with open(filename, mode="rb") as fp:
            return load_moments(fp)

    def save(self, filename: str) -> None:
        """
        Writes this table to a moment JSON file (one representative per conjugate pair).
        :param filename: The path to the JSON-file.
        """
        directory = os.path.dirname(filename)
        if directory:
            Path(directory).mkdir(parents=True, exist_ok=True)
        with open(filename, mode="w+") as fp:
            json.dump(self.to_json(), fp, cls=ComplexJSONEncoder)

    def __add__(self, other: "MomentTable") -> "MomentTable":
        if self.max_total_degree != other.max_total_degree:
            raise DegreeOverflowError(
                f"Cannot add tables of degrees {self.max_total_degree} and {other.max_total_degree}"
            )
        return MomentTable(self._values + other._values)

    def __eq__(self, other):
        return isinstance(other, MomentTable) and np.array_equal(self._values, other._values)

    def __repr__(self):
        return f"MomentTable(max_total_degree={self.max_total_degree}, s00={self.s00})"


class AtomicMeasure(object):
    """
    A finite positive measure sum_m c_m delta_{a_m} on the complex plane.
    """

    def __init__(self, nodes: np.ndarray, weights: np.ndarray):
        nodes = np.array(nodes, dtype=complex).ravel()
        weights = np.array(weights, dtype=float).ravel()

        if len(nodes) == 0:
            raise MomentFormatError("An atomic measure needs at least one atom")
        if len(nodes) != len(weights):
            raise MomentFormatError(f"Got {len(nodes)} nodes but {len(weights)} weights")
        if not np.all(np.isfinite(nodes)) or not np.all(np.isfinite(weights)):
            raise MomentFormatError("Atoms must be finite")
        if not np.all(weights > 0):
            raise MomentFormatError("Atom weights must be strictly positive")

        nodes.setflags(write=False)
        weights.setflags(write=False)
        self.nodes = nodes
        self.weights = weights

    @property
    def mass(self) -> float:
        return float(np.sum(self.weights))

    def __len__(self):
        return len(self.nodes)

    def __add__(self, other: "AtomicMeasure") -> "AtomicMeasure":
        return AtomicMeasure(np.concatenate([self.nodes, other.nodes]), np.concatenate([self.weights, other.weights]))

    def to_json(self) -> Dict[str, Any]:
        return {
            "atoms": [
                {"re": a.real, "im": a.imag, "weight": c} for a, c in zip(self.nodes, self.weights)
            ]
        }

    @classmethod
    def load(cls, filename: str) -> "AtomicMeasure":
        with open(filename, mode="r") as fp:
            data = json.load(fp)
        try:
            atoms = data["atoms"]
            nodes = [decode_complex(atom) for atom in atoms]
            weights = [float(atom["weight"]) for atom in atoms]
        except (KeyError, TypeError) as e:
            raise MomentFormatError(f"Invalid atom file {filename}: {e}") from e
        return cls(nodes, weights)

    def save(self, filename: str) -> None:
        directory = os.path.dirname(filename)
        if directory:
            Path(directory).mkdir(parents=True, exist_ok=True)
        with open(filename, mode="w+") as fp:
            json.dump(self.to_json(), fp, cls=ComplexJSONEncoder)

    def __repr__(self):
        return f"AtomicMeasure(atoms={len(self)}, mass={self.mass})"


def load_moments(source: MomentSource) -> MomentTable:
    """
    Parses a moment JSON document:
    {"max_total_degree": D, "moments": [{"j": int, "k": int, "re": float, "im": float}, ...]}
    Unlisted conjugate partners are completed, duplicate (j, k) entries are rejected.
    :param source: A readable stream, or the document as bytes / str.
    :return: A validated, Hermitian-completed MomentTable.
    """
    raw = source.read() if hasattr(source, "read") else source
    if isinstance(raw, bytes):
        try:
            raw = raw.decode("utf-8")
        except UnicodeDecodeError as e:
            raise MomentFormatError(f"Moment file is not valid UTF-8: {e}") from e

    try:
        data = json.loads(raw)
    except json.JSONDecodeError as e:
        raise MomentFormatError(f"Could not parse moment file: {e}") from e

    if not isinstance(data, dict) or "max_total_degree" not in data or "moments" not in data:
        raise MomentFormatError("Moment file must be an object with 'max_total_degree' and 'moments'")
    D = data["max_total_degree"]
    if not _is_degree(D):
        raise MomentFormatError(f"max_total_degree must be a non-negative integer, got {D}")
    if not isinstance(data["moments"], list):
        raise MomentFormatError("'moments' must be a list")

    entries: Dict[Index, complex] = {}
    for item in data["moments"]:
        if not isinstance(item, dict):
            raise MomentFormatError(f"Invalid moment entry: {item}")
        j, k = item.get("j"), item.get("k")
        if not _is_degree(j) or not _is_degree(k):
            raise MomentFormatError(f"Invalid moment index in entry {item}")
        if (j, k) in entries:
            raise MomentFormatError(f"Duplicate moment entry ({j}, {k})")
        entries[(j, k)] = decode_complex(item)

    table = MomentTable.from_entries(D, entries)
    logger.debug(f"Loaded {table} from {len(entries)} entries")
    return table


def moments_from_atoms(measure: AtomicMeasure, D: int) -> MomentTable:
    """
    Computes s_jk = sum_m c_m a_m^j conj(a_m)^k for all j + k <= D.
    :param measure: An atomic measure.
    :param D: The max total degree of the table.
    :return: The moment table of the measure.
    """
    if not _is_degree(D):
        raise MomentFormatError(f"Degree must be a non-negative integer, got {D}")
    # V[m, j] = a_m^j
    V = np.vander(measure.nodes, D + 1, increasing=True)
    values = V.T @ (measure.weights[:, None] * V.conj())
    return MomentTable(_hermitian_part(values))


def gram_matrix(table: MomentTable, d: int) -> np.ndarray:
    """
    Returns the Gram matrix of the monomials 1, z, ..., z^d: G[j, k] = <z^k, z^j>_L = s_kj.
    :param table: A moment table with max_total_degree >= 2d.
    :param d: The polynomial degree.
    :return: A Hermitian (d+1)x(d+1) matrix.
    """
    if not _is_degree(d):
        raise DegreeOverflowError(f"Degree must be a non-negative integer, got {d}")
    table.require_degree(2 * d, f"Gram matrix of degree {d}")
    return table.values[:d + 1, :d + 1].T.copy()


def _effective_width(coeffs: np.ndarray) -> int:
    nonzero = np.flatnonzero(np.any(coeffs != 0, axis=0))
    return int(nonzero[-1]) + 1 if len(nonzero) else 1


def pairing(table: MomentTable, P: np.ndarray, Q: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Inner products of two families of polynomials in the L-inner product <p, q>_L = L(p conj(q)).
    Row i of P (resp. Q) holds the monomial coefficients of p_i (resp. q_i).
    :param table: The moment table.
    :param P: Coefficient rows of the first family.
    :param Q: Coefficient rows of the second family (default: P).
    :return: The matrix A with A[j, k] = <p_k, q_j>_L.
    """
    P = np.atleast_2d(np.asarray(P, dtype=complex))
    Q = P if Q is None else np.atleast_2d(np.asarray(Q, dtype=complex))

    a = _effective_width(P)
    b = _effective_width(Q)
    table.require_degree(a + b - 2, "Inner product")

    P = P[:, :a]
    Q = Q[:, :b]
    block = table.values[:a, :b]
    return Q.conj() @ block.T @ P.T
