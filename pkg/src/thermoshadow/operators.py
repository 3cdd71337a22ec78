"""Dense Hermitian linear algebra for small qubit systems.

Hamiltonian assembly from Pauli words, spectral decomposition, thermal
states, matrix square roots, and the weighted inner product
``<X, Y>_rho = Tr[X^dag rho^(1/2) Y rho^(1/2)]`` used by the
detailed-balance verifiers.  Everything is stored dense in the
computational basis; the intended regime is n <= 12 qubits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, NumericError

HERMITICITY_TOL = 1e-12
RECONSTRUCTION_TOL = 1e-10
TRACE_TOL = 1e-12
DENSITY_EIG_FLOOR = -1e-12
PSD_EIG_FLOOR = -1e-10
DEFAULT_RANK_TOL = 1e-13
MAX_QUBITS = 12

PAULI_MATRICES = {
    "I": np.eye(2, dtype=np.complex128),
    "X": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "Z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
}


@dataclass(frozen=True)
class PauliTerm:
    """One weighted Pauli word, e.g. ``0.5 * XZI``."""

    coefficient: float
    word: str

    def __post_init__(self):
        if not np.isfinite(self.coefficient):
            raise InputError(f"non-finite coefficient {self.coefficient!r}")
        if not self.word or any(ch not in PAULI_MATRICES for ch in self.word):
            raise InputError(f"invalid Pauli word {self.word!r}")


def _as_matrix(m) -> np.ndarray:
    a = np.asarray(m, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InputError(f"expected a square matrix, got shape {a.shape}")
    return a


def max_abs(m: np.ndarray) -> float:
    """Entrywise max-abs norm; the tolerance currency of this package."""
    return float(np.max(np.abs(m))) if m.size else 0.0


def spectral_norm(m: np.ndarray) -> float:
    """Largest singular value (largest |eigenvalue| for Hermitian input)."""
    a = np.asarray(m)
    if max_abs(a - a.conj().T) <= HERMITICITY_TOL * max(1.0, max_abs(a)):
        return float(np.max(np.abs(np.linalg.eigvalsh(a)))) if a.size else 0.0
    return float(np.linalg.norm(a, 2))


@dataclass(frozen=True)
class HermitianOperator:
    """Dense Hermitian matrix on a 2^n-dimensional qubit register."""

    matrix: np.ndarray

    def __post_init__(self):
        a = _as_matrix(self.matrix)
        object.__setattr__(self, "matrix", a)
        scale = max(1.0, max_abs(a))
        if max_abs(a - a.conj().T) > HERMITICITY_TOL * scale:
            raise InputError("matrix is not Hermitian within tolerance")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def norm(self) -> float:
        return spectral_norm(self.matrix)


@dataclass(frozen=True)
class Spectrum:
    """Eigendecomposition of a Hermitian operator.

    ``eigenvalues`` ascend; ``eigenvectors`` holds the eigenbasis in its
    columns, so ``V diag(E) V^dag`` reconstructs the operator.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


@dataclass(frozen=True)
class DensityMatrix:
    """Unit-trace positive-semidefinite matrix."""

    matrix: np.ndarray
    validate: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        a = _as_matrix(self.matrix)
        object.__setattr__(self, "matrix", a)
        if not self.validate:
            return
        scale = max(1.0, max_abs(a))
        if max_abs(a - a.conj().T) > HERMITICITY_TOL * scale:
            raise InputError("density matrix is not Hermitian within tolerance")
        tr = complex(np.trace(a))
        if abs(tr - 1.0) > TRACE_TOL * 10:
            raise InputError(f"density matrix trace {tr} is not 1")
        w = np.linalg.eigvalsh(a)
        if w.min() < DENSITY_EIG_FLOOR:
            raise InputError(f"density matrix has negative eigenvalue {w.min():.3e}")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def build_hamiltonian(terms, n: int, *, allow_large: bool = False) -> HermitianOperator:
    """Assemble ``sum_k coeff_k * P_k`` from Pauli words of length ``n``.

    The dense cost is 4^n, so n is capped at MAX_QUBITS unless
    ``allow_large`` overrides the gate.
    """
    if n < 1:
        raise InputError(f"system size n={n} must be >= 1")
    if n > MAX_QUBITS and not allow_large:
        raise InputError(
            f"n={n} exceeds the dense-simulation cap {MAX_QUBITS}; "
            "pass allow_large=True to override"
        )
    dim = 2**n
    total = np.zeros((dim, dim), dtype=np.complex128)
    for raw in terms:
        term = raw if isinstance(raw, PauliTerm) else PauliTerm(*raw)
        if len(term.word) != n:
            raise InputError(
                f"Pauli word {term.word!r} has length {len(term.word)}, expected n={n}"
            )
        op = np.array([[term.coefficient]], dtype=np.complex128)
        for ch in term.word:
            op = np.kron(op, PAULI_MATRICES[ch])
        total += op
    return HermitianOperator(total)


def parse_pauli_terms(text: str, *, source: str = "<string>"):
    """Parse the one-term-per-line text format ``<coefficient> <word>``.

    ``#`` starts a comment, blank lines are skipped.  Returns
    ``(terms, n)`` where ``n`` is the common word length.  Malformed lines
    raise InputError carrying the line number.
    """
    terms: list[PauliTerm] = []
    n = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise InputError(
                f"{source}:{lineno}: expected '<coefficient> <pauli-word>', got {raw!r}"
            )
        try:
            coeff = float(parts[0])
        except ValueError:
            raise InputError(f"{source}:{lineno}: bad coefficient {parts[0]!r}") from None
        word = parts[1].upper()
        try:
            term = PauliTerm(coeff, word)
        except InputError as exc:
            raise InputError(f"{source}:{lineno}: {exc}") from None
        if n is None:
            n = len(word)
        elif len(word) != n:
            raise InputError(
                f"{source}:{lineno}: word length {len(word)} != {n} from earlier lines"
            )
        terms.append(term)
    if n is None:
        raise InputError(f"{source}: no terms found")
    return terms, n


def read_pauli_file(path):
    """Read a Pauli-term file; returns ``(terms, n)``."""
    with open(path, "r", encoding="utf-8") as fh:
        return parse_pauli_terms(fh.read(), source=str(path))


def eig_decompose(op: HermitianOperator) -> Spectrum:
    """Full eigendecomposition with ascending eigenvalues.

    Degenerate eigenvalues are returned as-is; frequency grouping
    downstream absorbs degeneracy with a tolerance.
    """
    if not isinstance(op, HermitianOperator):
        op = HermitianOperator(_as_matrix(op))
    w, v = np.linalg.eigh(op.matrix)
    spec = Spectrum(w, v)
    scale = max(1.0, float(np.max(np.abs(w))) if w.size else 0.0)
    if max_abs(spec.reconstruct() - op.matrix) > RECONSTRUCTION_TOL * scale:
        raise NumericError("eigendecomposition failed the reconstruction check")
    gram = v.conj().T @ v
    if max_abs(gram - np.eye(op.dim)) > RECONSTRUCTION_TOL:
        raise NumericError("eigenvector matrix is not unitary within tolerance")
    return spec


def thermal_weights(spectrum: Spectrum, beta: float) -> np.ndarray:
    """Normalized Boltzmann weights exp(-beta E_i)/Z in the eigenbasis.

    Energies are shifted by min(E) before exponentiating so large
    beta*||H|| cannot overflow; the shift cancels in the normalization.
    """
    if not np.isfinite(beta) or beta < 0:
        raise InputError(f"inverse temperature beta={beta!r} must be finite and >= 0")
    e = spectrum.eigenvalues
    shifted = np.exp(-beta * (e - e.min()))
    return shifted / shifted.sum()


def gibbs_state(spectrum: Spectrum, beta: float) -> DensityMatrix:
    """Thermal state exp(-beta H)/Tr[exp(-beta H)] from a spectrum."""
    w = thermal_weights(spectrum, beta)
    v = spectrum.eigenvectors
    rho = (v * w) @ v.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    # Hermitian by construction with positive normalized weights; skip the
    # O(d^3) revalidation.
    return DensityMatrix(rho, validate=False)


def kms_inner_product(x, y, rho: DensityMatrix, *, rank_tol: float = 1e-14) -> complex:
    """Weighted inner product Tr[X^dag rho^(1/2) Y rho^(1/2)].

    Conjugate-symmetric and positive definite whenever rho is full rank;
    a rho that is singular beyond ``rank_tol`` raises NumericError.
    """
    x = _as_matrix(x)
    y = _as_matrix(y)
    if x.shape != y.shape or x.shape[0] != rho.dim:
        raise InputError("dimension mismatch in kms_inner_product")
    w, v = np.linalg.eigh(rho.matrix)
    if w.min() <= rank_tol * max(w.max(), 0.0):
        raise NumericError(
            f"state is singular beyond rank tolerance (min eigenvalue {w.min():.3e})"
        )
    sqrt_rho = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T
    return complex(np.trace(x.conj().T @ sqrt_rho @ y @ sqrt_rho))


def psd_sqrt(m) -> np.ndarray:
    """Square root of a PSD Hermitian matrix.

    Eigenvalues in [PSD_EIG_FLOOR, 0) are treated as rounding noise and
    clipped to zero; anything below the floor raises NumericError naming
    the offending eigenvalue.
    """
    a = _as_matrix(m)
    w, v = np.linalg.eigh(0.5 * (a + a.conj().T))
    if w.min() < PSD_EIG_FLOOR:
        raise NumericError(
            f"matrix is not PSD: eigenvalue {w.min():.6e} below floor {PSD_EIG_FLOOR}"
        )
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def pinv_sqrt(m, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Inverse square root with eigenvalues below rank_tol*max clipped out."""
    a = _as_matrix(m)
    w, v = np.linalg.eigh(0.5 * (a + a.conj().T))
    if w.min() < PSD_EIG_FLOOR:
        raise NumericError(
            f"matrix is not PSD: eigenvalue {w.min():.6e} below floor {PSD_EIG_FLOOR}"
        )
    w_max = float(w.max()) if w.size else 0.0
    if w_max <= 0.0:
        raise NumericError("cannot invert the square root of a zero matrix")
    kept = w > rank_tol * w_max
    inv = np.zeros_like(w)
    inv[kept] = 1.0 / np.sqrt(w[kept])
    return (v * inv) @ v.conj().T
