"""Classical sandbox for the sample-complexity lower-bound ingredients.

Boolean-function Hamiltonians and their thermal distributions, the
temperature-to-ground-state total-variation bound, grid rounding of
distributions, subset realizations and the birthday-collision coupling,
bin-splitting observables, and a small exact phase-oracle simulator that
checks the trace-distance bound accumulated over oracle queries.

Everything here is exact or Monte-Carlo with explicit RNG streams; no
quantum trajectory machinery is involved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError

MAX_BITS = 24
QUERY_SIM_MAX_N = 4
QUERY_SIM_MAX_T = 5
PROB_SUM_TOL = 1e-12


@dataclass(frozen=True)
class BooleanHamiltonian:
    """A function f: {0,1}^n -> {0,1} stored through its zero set.

    The zero set (ground space) is a sorted array of distinct n-bit
    integers; it must be nonempty.
    """

    n: int
    zero_set: np.ndarray

    def __post_init__(self):
        if not 1 <= self.n <= MAX_BITS:
            raise InputError(f"n={self.n} outside [1, {MAX_BITS}]")
        zs = np.unique(np.asarray(self.zero_set, dtype=np.int64))
        if zs.size != np.asarray(self.zero_set).size:
            raise InputError("zero_set contains duplicates")
        if zs.size < 1:
            raise InputError("zero_set must be nonempty")
        if zs.min() < 0 or zs.max() >= 2**self.n:
            raise InputError("zero_set entries outside {0,1}^n")
        object.__setattr__(self, "zero_set", zs)

    @property
    def k(self) -> int:
        return int(self.zero_set.size)

    @property
    def size(self) -> int:
        return 2**self.n

    def values(self) -> np.ndarray:
        """Dense 0/1 table of f (1 on excited states)."""
        table = np.ones(self.size, dtype=np.uint8)
        table[self.zero_set] = 0
        return table


def write_boolean_hamiltonian(f: BooleanHamiltonian, path):
    """Text format: first line ``n k``, then k hex-encoded bitstrings."""
    digits = -(-f.n // 4)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{f.n} {f.k}\n")
        for b in f.zero_set:
            fh.write(format(int(b), f"0{digits}x") + "\n")


def read_boolean_hamiltonian(path) -> BooleanHamiltonian:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise InputError(f"{path}: empty file")
    try:
        n, k = (int(x) for x in lines[0].split())
    except ValueError:
        raise InputError(f"{path}:1: expected 'n k'") from None
    entries = lines[1:]
    if len(entries) != k:
        raise InputError(f"{path}: header claims {k} strings, found {len(entries)}")
    try:
        zero_set = np.array([int(e, 16) for e in entries], dtype=np.int64)
    except ValueError:
        raise InputError(f"{path}: malformed hex bitstring") from None
    return BooleanHamiltonian(n=n, zero_set=zero_set)


@dataclass(frozen=True)
class InducedDistribution:
    """Probability vector over bitstrings or bins."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size < 1:
            raise InputError("probability vector must be 1-D and nonempty")
        if p.min() < -PROB_SUM_TOL:
            raise InputError(f"negative probability {p.min():.3e}")
        if abs(p.sum() - 1.0) > PROB_SUM_TOL:
            raise InputError(f"probabilities sum to {p.sum()!r}, not 1")
        object.__setattr__(self, "probs", p)

    @property
    def m(self) -> int:
        return self.probs.size


@dataclass(frozen=True)
class BinPartition:
    """Partition of {0,1}^n into m index-contiguous bins.

    Bin of bitstring b is floor(b * m / 2^n); sizes differ by at most 1.
    """

    n: int
    m: int

    def __post_init__(self):
        if not 1 <= self.n <= MAX_BITS:
            raise InputError(f"n={self.n} outside [1, {MAX_BITS}]")
        if not 1 <= self.m <= 2**self.n:
            raise InputError(f"m={self.m} outside [1, 2^{self.n}]")

    def bin_of(self, b):
        return (np.asarray(b, dtype=np.int64) * self.m) >> self.n

    def boundaries(self) -> np.ndarray:
        """lo[i]..lo[i+1]-1 is bin i; computed with ceiling division."""
        size = 2**self.n
        idx = np.arange(self.m + 1, dtype=np.int64)
        return -(-idx * size // self.m)

    def sizes(self) -> np.ndarray:
        return np.diff(self.boundaries())


def classical_gibbs(f: BooleanHamiltonian, beta: float) -> InducedDistribution:
    """Thermal distribution of a 0/1-valued energy function, in closed form.

    Zeros carry weight 1, ones weight exp(-beta); the normalization is
    ``k + (2^n - k) exp(-beta)``.  ``beta=inf`` gives the uniform
    distribution over the zero set.
    """
    if beta < 0 or math.isnan(beta):
        raise InputError(f"beta={beta!r} must be >= 0")
    k = f.k
    if math.isinf(beta):
        p_zero, p_one = 1.0 / k, 0.0
    else:
        w = math.exp(-beta)
        z = k + (f.size - k) * w
        p_zero, p_one = 1.0 / z, w / z
    probs = np.full(f.size, p_one)
    probs[f.zero_set] = p_zero
    return InducedDistribution(probs)


def bin_distribution(
    f: BooleanHamiltonian, beta: float, partition: BinPartition
) -> InducedDistribution:
    """Thermal distribution pushed onto partition bins, without 2^n scans."""
    if partition.n != f.n:
        raise InputError("partition and Hamiltonian disagree on n")
    bounds = partition.boundaries()
    zeros_per_bin = np.diff(np.searchsorted(f.zero_set, bounds))
    sizes = partition.sizes()
    k = f.k
    if math.isinf(beta):
        probs = zeros_per_bin / k
    else:
        w = math.exp(-beta)
        z = k + (f.size - k) * w
        probs = (zeros_per_bin + (sizes - zeros_per_bin) * w) / z
    return InducedDistribution(probs)


def tv_distance(p: InducedDistribution, q: InducedDistribution) -> float:
    """Total variation distance (half the l1 distance)."""
    if p.m != q.m:
        raise InputError(f"length mismatch: {p.m} vs {q.m}")
    return float(0.5 * np.abs(p.probs - q.probs).sum())


def tv_beta_vs_ground(n: int, k: int, beta: float) -> float:
    """Closed-form TV between the thermal and zero-temperature distributions.

    Equals ``(2^n - k) exp(-beta) / (k + (2^n - k) exp(-beta))``; bounded
    by exp(-r) whenever beta >= n ln 2 + r.
    """
    if not 1 <= k <= 2**n:
        raise InputError(f"k={k} outside [1, 2^{n}]")
    if beta < 0:
        raise InputError("beta must be >= 0")
    excited = float(2**n - k)
    w = math.exp(-beta)
    return excited * w / (k + excited * w)


def temperature_threshold(n: int, r: float) -> float:
    """The beta above which the TV bound exp(-r) is guaranteed."""
    return n * math.log(2.0) + r


def round_distribution(p: InducedDistribution, grid: int) -> InducedDistribution:
    """Round probabilities onto the 1/grid lattice, preserving the total.

    Cumulative-floor recursion: partial sums of the output equal
    ``floor(partial_sum(p) * grid) / grid`` with the final entry forced so
    the total is exactly 1.  Entrywise the output moves by at most
    1/grid, and distributions already on the lattice are fixed points.
    """
    if grid < 1:
        raise InputError("grid must be >= 1")
    cum = np.cumsum(p.probs)
    # The epsilon nudge keeps on-lattice inputs fixed despite float
    # accumulation error; it cannot move a genuine boundary by more than
    # the 1/grid guarantee.
    counts = np.floor(cum * grid + 1e-9).astype(np.int64)
    counts[-1] = grid
    q = np.diff(counts, prepend=0) / grid
    return InducedDistribution(q)


def realize_subset(
    q: InducedDistribution,
    partition: BinPartition,
    subset_size: int,
    stream: np.random.Generator,
) -> BooleanHamiltonian:
    """Draw a zero set realizing on-lattice bin probabilities exactly.

    Requires every ``subset_size * q_i`` to be an integer not exceeding
    the bin capacity; bin i then receives exactly that many uniformly
    chosen ground states, so the induced bin frequencies reproduce q
    exactly rather than statistically.
    """
    if q.m != partition.m:
        raise InputError("distribution and partition disagree on bin count")
    if subset_size < 1:
        raise InputError("subset_size must be >= 1")
    raw = q.probs * subset_size
    counts = np.rint(raw).astype(np.int64)
    if np.max(np.abs(raw - counts)) > 1e-9:
        raise InputError("every subset_size * q_i must be an integer")
    if counts.sum() != subset_size:
        raise InputError("rounded counts do not sum to the subset size")
    bounds = partition.boundaries()
    sizes = partition.sizes()
    if np.any(counts > sizes):
        worst = int(np.argmax(counts - sizes))
        raise InputError(
            f"bin {worst} holds {sizes[worst]} strings but needs {counts[worst]}"
        )
    chosen = []
    for i, cnt in enumerate(counts):
        if cnt == 0:
            continue
        lo, hi = int(bounds[i]), int(bounds[i + 1])
        picks = stream.choice(hi - lo, size=int(cnt), replace=False) + lo
        chosen.append(picks)
    zero_set = np.sort(np.concatenate(chosen))
    return BooleanHamiltonian(n=partition.n, zero_set=zero_set)


def induced_bin_frequencies(
    f: BooleanHamiltonian, partition: BinPartition
) -> InducedDistribution:
    """Ground-state frequencies per bin: |zero_set ∩ B_i| / |zero_set|."""
    if partition.n != f.n:
        raise InputError("partition and Hamiltonian disagree on n")
    counts = np.diff(np.searchsorted(f.zero_set, partition.boundaries()))
    return InducedDistribution(counts / f.k)


def splitting_expectation(bits, p: InducedDistribution) -> float:
    """Expectation of the bin-splitting observable sum_l bits_l * p_l."""
    b = np.asarray(bits, dtype=float)
    if b.shape != (p.m,):
        raise InputError(f"bit vector length {b.size} != {p.m} bins")
    return float(np.dot(b, p.probs))


@dataclass(frozen=True)
class CollisionStats:
    empirical: float
    bound: float
    trials: int

    @property
    def standard_error(self) -> float:
        p = max(self.empirical, 1.0 / self.trials)
        return math.sqrt(p * (1 - min(p, 1.0)) / self.trials)


def collision_probability(
    draws: int, universe: int, trials: int, stream: np.random.Generator
) -> CollisionStats:
    """Birthday-collision frequency for S uniform draws from a K-set.

    The union bound S^2/(2K), clipped to 1, dominates the empirical
    collision frequency.
    """
    if draws < 1 or universe < 1 or trials < 1:
        raise InputError("draws, universe, and trials must be >= 1")
    bound = min(1.0, draws * draws / (2.0 * universe))
    if draws == 1:
        return CollisionStats(empirical=0.0, bound=bound, trials=trials)
    samples = stream.integers(0, universe, size=(trials, draws))
    samples.sort(axis=1)
    collided = np.any(samples[:, 1:] == samples[:, :-1], axis=1)
    return CollisionStats(empirical=float(collided.mean()), bound=bound, trials=trials)


# ---------------------------------------------------------------------------
# Exact phase-oracle query simulator
# ---------------------------------------------------------------------------

def hybrid_bound(flip_probs, queries: int) -> float:
    """Trace-distance cap ``2 T sqrt(max_b Pr[f(b) != f0(b)])``."""
    if queries < 0:
        raise InputError("query count must be >= 0")
    probs = np.asarray(flip_probs, dtype=float)
    if probs.size and (probs.min() < 0 or probs.max() > 1):
        raise InputError("flip probabilities must lie in [0, 1]")
    peak = float(probs.max()) if probs.size else 0.0
    return 2.0 * queries * math.sqrt(peak)


def phase_oracle_diagonal(f_values: np.ndarray, workspace_dim: int) -> np.ndarray:
    """Diagonal of the +-1 phase oracle extended by an identity workspace."""
    phases = 1.0 - 2.0 * np.asarray(f_values, dtype=float)  # (-1)^f
    return np.repeat(phases, workspace_dim)


def run_query_algorithm(unitaries, f_values: np.ndarray, n: int) -> np.ndarray:
    """Exact final state of U_T O_f U_{T-1} ... O_f U_0 |0...0>.

    ``unitaries`` holds T+1 operators on the query register tensored with
    an optional workspace; the oracle acts on the first n qubits only.
    """
    dim_total = unitaries[0].shape[0]
    dim_query = 2**n
    if dim_total % dim_query:
        raise InputError("unitary dimension is not a multiple of the query register")
    diag = phase_oracle_diagonal(f_values, dim_total // dim_query)
    state = np.zeros(dim_total, dtype=np.complex128)
    state[0] = 1.0
    state = unitaries[0] @ state
    for u in unitaries[1:]:
        state = u @ (diag * state)
    return state


@dataclass(frozen=True)
class QuerySimReport:
    """Exact trace distance of the averaged output versus the reference."""

    trace_distance: float
    bound: float
    max_flip_probability: float
    queries: int
    trials: int

    @property
    def satisfied(self) -> bool:
        return self.trace_distance <= self.bound + 1e-9


def query_sim_validate(
    n: int,
    queries: int,
    f_distribution,
    f0: np.ndarray,
    algorithm,
    trials: int,
    stream: np.random.Generator,
) -> QuerySimReport:
    """Check the query bound on exact state-vector simulations.

    ``f_distribution`` is a callable rng -> dense 0/1 table; ``trials``
    functions are sampled, and both the averaged output state and the
    per-label flip probabilities are computed over that same empirical
    ensemble, for which the bound holds exactly.
    """
    if not 1 <= n <= QUERY_SIM_MAX_N:
        raise InputError(f"n={n} outside [1, {QUERY_SIM_MAX_N}]")
    if not 0 <= queries <= QUERY_SIM_MAX_T:
        raise InputError(f"T={queries} outside [0, {QUERY_SIM_MAX_T}]")
    unitaries = [np.asarray(u, dtype=np.complex128) for u in algorithm]
    if len(unitaries) != queries + 1:
        raise InputError(f"need T+1={queries + 1} unitaries, got {len(unitaries)}")
    dim_total = unitaries[0].shape[0]
    if dim_total > 2 ** (2 * n):
        raise InputError(
            f"dimension budget exceeded: {dim_total} > 2^(2n) = {2 ** (2 * n)}"
        )
    eye = np.eye(dim_total)
    for u in unitaries:
        if u.shape != (dim_total, dim_total):
            raise InputError("algorithm unitaries have inconsistent dimensions")
        if np.max(np.abs(u.conj().T @ u - eye)) > 1e-10:
            raise InputError("algorithm contains a non-unitary operator")
    f0 = np.asarray(f0, dtype=np.uint8)
    if f0.shape != (2**n,):
        raise InputError(f"f0 must be a dense table of length 2^{n}")
    if trials < 1:
        raise InputError("trials must be >= 1")

    reference = run_query_algorithm(unitaries, f0, n)
    averaged = np.zeros((dim_total, dim_total), dtype=np.complex128)
    flips = np.zeros(2**n)
    for _ in range(trials):
        f_values = np.asarray(f_distribution(stream), dtype=np.uint8)
        if f_values.shape != f0.shape:
            raise InputError("sampled function table has the wrong length")
        flips += f_values != f0
        state = run_query_algorithm(unitaries, f_values, n)
        averaged += np.outer(state, state.conj())
    averaged /= trials
    flips /= trials
    delta = averaged - np.outer(reference, reference.conj())
    distance = 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(delta))))
    return QuerySimReport(
        trace_distance=distance,
        bound=hybrid_bound(flips, queries),
        max_flip_probability=float(flips.max()),
        queries=queries,
        trials=trials,
    )


def uniform_zero_set_ensemble(n: int, k: int):
    """Sampler of functions with exactly k uniformly chosen zeros."""
    if not 1 <= k <= 2**n:
        raise InputError(f"k={k} outside [1, 2^{n}]")

    def sample(stream: np.random.Generator) -> np.ndarray:
        table = np.ones(2**n, dtype=np.uint8)
        table[stream.choice(2**n, size=k, replace=False)] = 0
        return table

    return sample


def random_unitary(dim: int, stream: np.random.Generator) -> np.ndarray:
    """Haar-ish unitary from the QR decomposition of a Gaussian matrix."""
    z = stream.normal(size=(dim, dim)) + 1j * stream.normal(size=(dim, dim))
    q, r = np.linalg.qr(z)
    return q * (np.diagonal(r) / np.abs(np.diagonal(r)))
