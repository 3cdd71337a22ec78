import numpy as np
import pytest

from thermoshadow.operators import HermitianOperator, PauliTerm, build_hamiltonian

PAULI_LABELS = "IXYZ"


def rng_for(tag: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=tag))


def random_hermitian(dim: int, rng: np.random.Generator, norm: float | None = None):
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    h = 0.5 * (z + z.conj().T)
    if norm is not None:
        h *= norm / max(np.abs(np.linalg.eigvalsh(h)))
    return HermitianOperator(h)


def random_pauli_word(n: int, rng: np.random.Generator, nontrivial: bool = True) -> str:
    while True:
        word = "".join(PAULI_LABELS[i] for i in rng.integers(0, 4, size=n))
        if not nontrivial or set(word) != {"I"}:
            return word


def random_hamiltonian(n: int, rng: np.random.Generator, n_terms: int = 3):
    terms = [
        PauliTerm(float(rng.uniform(-1.0, 1.0)), random_pauli_word(n, rng))
        for _ in range(n_terms)
    ]
    return build_hamiltonian(terms, n)


def random_pauli_observable(n: int, rng: np.random.Generator):
    return build_hamiltonian([PauliTerm(1.0, random_pauli_word(n, rng))], n)


def random_pure_state(dim: int, rng: np.random.Generator) -> np.ndarray:
    psi = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return psi / np.linalg.norm(psi)


@pytest.fixture
def rng():
    return rng_for(20260810)
