"""Measurement channels that preserve a thermal state when outcomes are ignored.

Construction pipeline for one observable A with ||A|| <= 1 against a
Hamiltonian H at inverse temperature beta:

1. a frequency filter ``g(nu) = exp(-(beta*sigma*nu + 1/sigma)^2 / 8)``
   obeying ``g(nu) = g(-nu) exp(-beta*nu/2)`` pointwise,
2. the frequency decomposition of A over energy gaps nu = E_i - E_j,
3. the filtered observable ``sum_nu g(nu) A_nu``,
4. its polarizations ``(I +- filtered)/2``,
5. scaled Kraus operators for outcomes 1 and 2 plus a rejection operator
   for outcome 0 that restores trace preservation without disturbing the
   thermal fixed point.

The resulting channel satisfies, to rounding,

* completeness  ``sum_i K_i^dag K_i = I``,
* fixed point   ``sum_i K_i rho_beta K_i^dag = rho_beta``,
* self-adjointness with respect to <X,Y>_rho = Tr[X^dag rho^(1/2) Y rho^(1/2)],
* the signal identity ``(2/c) (p_1 - p_2) = Tr[rho A]`` for any state
  diagonal in the energy basis.

Verifier routines quantify every identity as an explicit residual.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConstructionError, InputError, NumericError
from .operators import (
    DensityMatrix,
    HermitianOperator,
    Spectrum,
    eig_decompose,
    max_abs,
    psd_sqrt,
    spectral_norm,
    thermal_weights,
)

NORM_SLACK = 1e-9
COMPLETENESS_TOL = 1e-9
KMS_CHECK_TOL = 1e-8
ZERO_PROB = 1e-14
PROB_SUM_TOL = 1e-8
RHO_RANK_TOL = 1e-13
CONDITIONING_WARN_BETA_GAP = 60.0


@dataclass(frozen=True)
class GaussianFilter:
    """Shifted-Gaussian frequency filter with parameters (beta, sigma).

    beta = 0 is allowed: the filter degenerates to a constant and the
    balance identity becomes plain self-adjointness.
    """

    beta: float
    sigma: float

    def __post_init__(self):
        if not np.isfinite(self.beta) or self.beta < 0:
            raise InputError(f"filter beta={self.beta!r} must be finite and >= 0")
        if not np.isfinite(self.sigma) or self.sigma <= 0:
            raise InputError(f"filter sigma={self.sigma!r} must be finite and > 0")

    def log_weight(self, nu):
        """Exponent of the filter; kept separate for overflow-free algebra."""
        arg = self.beta * self.sigma * np.asarray(nu, dtype=float) + 1.0 / self.sigma
        return -(arg * arg) / 8.0

    def weight(self, nu):
        """Filter value g(nu); strictly positive for finite nu."""
        return np.exp(self.log_weight(nu))

    @property
    def weight_at_zero(self) -> float:
        return float(self.weight(0.0))


def filter_weight(filt: GaussianFilter, nu: float) -> float:
    """Evaluate the filter at a single frequency."""
    return float(filt.weight(nu))


def filter_identity_residual(filt: GaussianFilter, nu) -> np.ndarray:
    """Relative residual of g(nu) = g(-nu) exp(-beta*nu/2).

    Both sides are evaluated through their exponents so the comparison
    stays meaningful in deep Gaussian tails.
    """
    nu = np.asarray(nu, dtype=float)
    lhs = filt.weight(nu)
    rhs = np.exp(filt.log_weight(-nu) - filt.beta * nu / 2.0)
    scale = np.maximum(np.maximum(lhs, rhs), np.finfo(float).tiny)
    return np.abs(lhs - rhs) / scale


@dataclass(frozen=True)
class BohrDecomposition:
    """Observable split into components on distinct energy-gap frequencies.

    ``groups`` holds (frequency, component) pairs; components live in the
    computational basis, sum to the source observable, and are supported
    only on eigenvector pairs whose energy gap matches the group frequency
    (within the grouping tolerance used at construction).
    """

    groups: tuple
    source_norm: float
    spectrum: Spectrum

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([nu for nu, _ in self.groups])

    def component_sum(self) -> np.ndarray:
        dim = self.spectrum.dim
        total = np.zeros((dim, dim), dtype=np.complex128)
        for _, comp in self.groups:
            total += comp
        return total


def _cluster_frequencies(gaps: np.ndarray, group_tol: float):
    """Merge near-degenerate frequencies to their mean.

    Returns (representatives, label_matrix): the sorted distinct merged
    frequencies and, per matrix element, the index of its group.
    """
    flat = np.sort(gaps.ravel())
    breaks = np.nonzero(np.diff(flat) > group_tol)[0]
    starts = np.concatenate(([0], breaks + 1))
    ends = np.concatenate((breaks, [flat.size - 1]))
    reps = np.array([flat[a : b + 1].mean() for a, b in zip(starts, ends)])
    # Elements <= the cluster-ending value belong to that cluster.
    cluster_end_values = flat[ends]
    labels = np.searchsorted(cluster_end_values, gaps, side="left")
    return reps, labels


def default_group_tol(hamiltonian_norm: float) -> float:
    """Frequency-merging tolerance: eigensolver jitter scale, not physics."""
    return 1e-9 * max(hamiltonian_norm, 1.0)


def bohr_decompose(
    a: HermitianOperator, spectrum: Spectrum, group_tol: float
) -> BohrDecomposition:
    """Split A over the energy-gap frequencies of the given spectrum.

    Element (i, j) of A in the eigenbasis is assigned the frequency
    E_i - E_j; frequencies closer than ``group_tol`` are merged to their
    mean.  Groups whose component vanishes identically are dropped.

    Memory is O(d^2) per distinct frequency, so this explicit form is
    meant for small systems; the channel builder uses an equivalent
    elementwise path that never materializes the groups.
    """
    if a.dim != spectrum.dim:
        raise InputError(f"dimension mismatch: A is {a.dim}, spectrum is {spectrum.dim}")
    if not group_tol > 0:
        raise InputError("group_tol must be positive")
    e = spectrum.eigenvalues
    v = spectrum.eigenvectors
    a_eig = v.conj().T @ a.matrix @ v
    gaps = e[:, None] - e[None, :]
    reps, labels = _cluster_frequencies(gaps, group_tol)
    # Basis-rotation noise leaves ~eps-size debris in elements that are
    # structurally zero; dropping whole groups below this floor keeps the
    # decomposition reconstruction-exact at the tolerances in play.
    drop_tol = 1e-14 * max(1.0, max_abs(a_eig))
    groups = []
    for idx, nu in enumerate(reps):
        comp_eig = np.where(labels == idx, a_eig, 0.0)
        if max_abs(comp_eig) <= drop_tol:
            continue
        comp = v @ comp_eig @ v.conj().T
        groups.append((float(nu), comp))
    return BohrDecomposition(tuple(groups), a.norm(), spectrum)


def operator_fourier_transform(decomp: BohrDecomposition, filt: GaussianFilter) -> np.ndarray:
    """Frequency-weighted recombination ``sum_nu g(nu) * A_nu``.

    Enforces the norm bound ||result|| <= ||A|| + slack and the balance
    conjugation identity as construction-time assertions.
    """
    dim = decomp.spectrum.dim
    out = np.zeros((dim, dim), dtype=np.complex128)
    for nu, comp in decomp.groups:
        out += float(filt.weight(nu)) * comp
    norm = spectral_norm(out)
    if norm > decomp.source_norm + NORM_SLACK:
        raise ConstructionError(
            f"filtered observable norm {norm:.12f} exceeds source norm "
            f"{decomp.source_norm:.12f}"
        )
    _assert_conjugation_identity(out, decomp.spectrum, filt.beta)
    return out


def conjugation_residual(a_hat: np.ndarray, spectrum: Spectrum, beta: float) -> float:
    """Relative residual of exp(beta H/2) A_hat exp(-beta H/2) = A_hat^dag.

    Evaluated elementwise in the eigenbasis.  The exponential factor is
    clipped before multiplying: wherever it would overflow, the filtered
    matrix element is an exact underflow zero and both sides vanish.
    """
    e = spectrum.eigenvalues
    v = spectrum.eigenvectors
    a_hat_eig = v.conj().T @ np.asarray(a_hat, dtype=np.complex128) @ v
    gaps = e[:, None] - e[None, :]
    factor = np.exp(np.clip(beta * gaps / 2.0, None, 700.0))
    conjugated = np.where(a_hat_eig != 0, factor * a_hat_eig, 0.0)
    scale = max(1.0, max_abs(a_hat_eig))
    return max_abs(conjugated - a_hat_eig.conj().T) / scale


def _assert_conjugation_identity(a_hat: np.ndarray, spectrum: Spectrum, beta: float):
    residual = conjugation_residual(a_hat, spectrum, beta)
    if residual > KMS_CHECK_TOL:
        raise ConstructionError(
            f"filtered observable fails the balance conjugation identity: "
            f"residual {residual:.3e}"
        )


def polarize(a_hat: np.ndarray):
    """Polarization pair ``(I + A_hat)/2, (I - A_hat)/2`` with norm gates."""
    a_hat = np.asarray(a_hat, dtype=np.complex128)
    dim = a_hat.shape[0]
    if spectral_norm(a_hat) > 1.0 + NORM_SLACK:
        raise ConstructionError(
            f"cannot polarize: operator norm {spectral_norm(a_hat):.12f} exceeds 1"
        )
    eye = np.eye(dim)
    plus = 0.5 * (eye + a_hat)
    minus = 0.5 * (eye - a_hat)
    for name, part in (("plus", plus), ("minus", minus)):
        norm = spectral_norm(part)
        if norm > 1.0 + NORM_SLACK:
            raise ConstructionError(f"{name} polarization norm {norm:.12f} exceeds 1")
    gram_sum = plus.conj().T @ plus + minus.conj().T @ minus
    expect = 0.5 * (eye + a_hat.conj().T @ a_hat)
    if max_abs(gram_sum - expect) > 1e-10 * max(1.0, max_abs(expect)):
        raise NumericError("polarization Gram identity lost beyond 1e-10")
    return plus, minus


@dataclass(frozen=True)
class MeasurementChannel:
    """Kraus triple for one observable; outcome labels are 0, 1, 2.

    Label 0 is the rejection outcome, labels 1 and 2 the informative ones.
    ``kraus[i]`` is the operator for label i.  ``g0`` records the filter
    value at zero frequency actually used in the normalization (it is
    evaluated, never a hard-coded constant).  Instances are immutable and
    safe to share across threads.
    """

    kraus: np.ndarray
    c: float
    g0: float
    sigma: float
    beta: float
    observable_id: str = ""

    @property
    def dim(self) -> int:
        return self.kraus.shape[1]

    @property
    def kraus_0(self) -> np.ndarray:
        return self.kraus[0]

    @property
    def kraus_1(self) -> np.ndarray:
        return self.kraus[1]

    @property
    def kraus_2(self) -> np.ndarray:
        return self.kraus[2]

    def grams(self) -> np.ndarray:
        """Stack of K_i^dag K_i; branch probabilities are Tr[gram rho]."""
        return np.einsum("kba,kbc->kac", self.kraus.conj(), self.kraus)


def default_subnormalization(sigma: float) -> float:
    """Default outcome-probability cap c for a given filter width.

    Bounded by 1/2 and by twice the zero-frequency filter weight so the
    rejection operator always exists.
    """
    g0 = GaussianFilter(1.0, sigma).weight_at_zero  # g(0) is beta-independent
    return min(0.5, 2.0 * math.exp(-sigma * sigma / 8.0), 2.0 * g0)


def build_channel(
    a: HermitianOperator,
    h: HermitianOperator,
    beta: float,
    sigma: float,
    c: float,
    *,
    group_tol: float | None = None,
    observable_id: str = "",
    spectrum: Spectrum | None = None,
) -> MeasurementChannel:
    """Build the three-outcome measurement channel for observable ``a``.

    Outcome-1/2 operators are the polarizations scaled by
    ``sqrt(c / (2 g(0)))``; the normalization divides by the evaluated
    g(0) so the signal identity holds exactly for whichever filter
    parametrization is configured.  The rejection operator completes the
    channel while leaving the thermal state fixed.

    Preconditions: ``||a|| <= 1``, ``beta >= 0``, ``0 < c <= 2 g(0)``
    (the last makes the rejection operator exist).
    """
    if a.dim != h.dim:
        raise InputError(f"dimension mismatch: A is {a.dim}, H is {h.dim}")
    a_norm = a.norm()
    if a_norm > 1.0 + NORM_SLACK:
        raise InputError(f"observable norm {a_norm:.12f} exceeds 1")
    if not np.isfinite(c) or not 0.0 < c <= 1.0:
        raise InputError(f"subnormalization c={c!r} must lie in (0, 1]")
    filt = GaussianFilter(beta, sigma)
    g0 = filt.weight_at_zero
    scale = c / (2.0 * g0)
    if scale > 1.0 + 1e-12:
        raise ConstructionError(
            f"c={c} too large for the rejection operator: need c <= 2*g(0) = "
            f"{2.0 * g0:.9f} at sigma={sigma}"
        )

    if spectrum is None:
        spectrum = eig_decompose(h)
    if group_tol is None:
        group_tol = default_group_tol(h.norm())

    e = spectrum.eigenvalues
    v = spectrum.eigenvectors
    gaps = e[:, None] - e[None, :]
    reps, labels = _cluster_frequencies(gaps, group_tol)
    rep_gaps = reps[labels]

    a_eig = v.conj().T @ a.matrix @ v
    a_hat_eig = filt.weight(rep_gaps) * a_eig
    a_hat = v @ a_hat_eig @ v.conj().T
    if spectral_norm(a_hat) > a_norm + NORM_SLACK:
        raise ConstructionError("filtered observable norm exceeds the source norm")
    _assert_conjugation_identity(a_hat, spectrum, beta)
    plus, minus = polarize(a_hat)

    root = math.sqrt(scale)
    k1 = root * plus
    k2 = root * minus
    for label, k in ((1, k1), (2, k2)):
        gram_norm = spectral_norm(k.conj().T @ k)
        if gram_norm > c + NORM_SLACK:
            raise ConstructionError(
                f"outcome-{label} probability cap violated: ||K^dag K|| = "
                f"{gram_norm:.12f} > c = {c}"
            )

    # Rejection operator, assembled in the eigenbasis where the thermal
    # state is diagonal.
    weights = thermal_weights(spectrum, beta)
    gap_span = beta * float(e.max() - e.min()) if e.size else 0.0
    if gap_span > CONDITIONING_WARN_BETA_GAP:
        warnings.warn(
            f"beta * spectral-gap span = {gap_span:.1f} > "
            f"{CONDITIONING_WARN_BETA_GAP}; rejection-operator conditioning "
            "degrades as exp(beta*gap/2)",
            RuntimeWarning,
            stacklevel=2,
        )
    if weights.min() < RHO_RANK_TOL * weights.max():
        raise NumericError(
            "thermal state is numerically singular at this beta*||H||; the "
            "rejection operator cannot be completed — reduce beta or the "
            "Hamiltonian scale"
        )
    k1_eig = v.conj().T @ k1 @ v
    k2_eig = v.conj().T @ k2 @ v
    transfer = k1_eig.conj().T @ k1_eig + k2_eig.conj().T @ k2_eig
    leftover = np.eye(spectrum.dim) - transfer
    sqrt_w = np.sqrt(weights)
    sandwich = (sqrt_w[:, None] * leftover) * sqrt_w[None, :]
    k0_eig = psd_sqrt(sandwich) * (1.0 / sqrt_w)[None, :]
    k0 = v @ k0_eig @ v.conj().T

    kraus = np.stack([k0, k1, k2]).astype(np.complex128)
    completeness = max_abs(
        np.einsum("kba,kbc->ac", kraus.conj(), kraus) - np.eye(spectrum.dim)
    )
    if completeness > COMPLETENESS_TOL:
        raise NumericError(
            f"channel completeness residual {completeness:.3e} exceeds "
            f"{COMPLETENESS_TOL}; reduce beta*||H||"
        )
    return MeasurementChannel(
        kraus=kraus, c=c, g0=g0, sigma=sigma, beta=beta, observable_id=observable_id
    )


@dataclass(frozen=True)
class ChannelAction:
    """Result of one exact channel application to a state.

    ``post_states[i]`` is None when the branch probability is below the
    zero-probability floor (the branch is never sampled).
    """

    probs: np.ndarray
    post_states: tuple
    marginal: DensityMatrix


def apply_channel(ch: MeasurementChannel, rho: DensityMatrix) -> ChannelAction:
    """Branch probabilities, conditional states, and the marginal output."""
    if rho.dim != ch.dim:
        raise InputError(f"dimension mismatch: state {rho.dim}, channel {ch.dim}")
    branches = [k @ rho.matrix @ k.conj().T for k in ch.kraus]
    probs = np.array([float(np.trace(b).real) for b in branches])
    total = probs.sum()
    if abs(total - 1.0) > PROB_SUM_TOL:
        raise NumericError(f"branch probabilities sum to {total}, not 1")
    posts = []
    for p, b in zip(probs, branches):
        if p < ZERO_PROB:
            posts.append(None)
        else:
            posts.append(DensityMatrix(b / p, validate=False))
    marginal = DensityMatrix(sum(branches), validate=False)
    return ChannelAction(probs=probs, post_states=tuple(posts), marginal=marginal)


def exact_signal(ch: MeasurementChannel, rho: DensityMatrix) -> float:
    """Unbiased readout ``(2/c) (p_1 - p_2)``.

    Equals Tr[rho A] whenever rho is diagonal in the energy basis of the
    Hamiltonian the channel was built against (the thermal state in
    particular).
    """
    grams = ch.grams()
    p1 = float(np.trace(grams[1] @ rho.matrix).real)
    p2 = float(np.trace(grams[2] @ rho.matrix).real)
    return (2.0 / ch.c) * (p1 - p2)


def signal_identity_residual(
    ch: MeasurementChannel, rho: DensityMatrix, a: HermitianOperator
) -> float:
    """|Tr[rho (P+^dag P+ - P-^dag P-)] - g(0) Tr[rho A]| for the channel's
    polarizations, reconstructed from the stored Kraus operators."""
    grams = ch.grams()
    scale = ch.c / (2.0 * ch.g0)
    lhs = float(np.trace((grams[1] - grams[2]) @ rho.matrix).real) / scale
    rhs = ch.g0 * float(np.trace(a.matrix @ rho.matrix).real)
    return abs(lhs - rhs)


@dataclass(frozen=True)
class BalanceReport:
    """Residuals of every channel identity, plus the pass verdict.

    Field names match the serialized report schema: ``completeness``,
    ``fixed_point``, ``kms_channel``, ``kms_kraus_1``, ``kms_kraus_2``.
    """

    completeness: float
    fixed_point: float
    kms_channel: float
    kms_kraus_1: float
    kms_kraus_2: float
    tol: float

    @property
    def passed(self) -> bool:
        return all(
            r <= self.tol
            for r in (
                self.completeness,
                self.fixed_point,
                self.kms_channel,
                self.kms_kraus_1,
                self.kms_kraus_2,
            )
        )

    def as_dict(self) -> dict:
        return {
            "completeness": self.completeness,
            "fixed_point": self.fixed_point,
            "kms_channel": self.kms_channel,
            "kms_kraus_1": self.kms_kraus_1,
            "kms_kraus_2": self.kms_kraus_2,
            "tol": self.tol,
            "passed": self.passed,
        }


def verify_detailed_balance(
    ch: MeasurementChannel, rho: DensityMatrix, tol: float = KMS_CHECK_TOL
) -> BalanceReport:
    """Quantify every exact identity of the channel against a state.

    * completeness: max |sum K^dag K - I|
    * fixed_point:  max |sum K rho K^dag - rho|
    * kms_channel:  self-adjointness of the marginal channel in the
      rho-weighted inner product, maximized over a matrix-unit basis
    * kms_kraus_1/2: per-operator residual of
      ``rho^(-1/2) K rho^(1/2) = K^dag`` for the informative outcomes
      (the rejection operator is only checked at channel level)

    The channel-level check builds the d^2 x d^2 superoperator, so keep
    the dimension small (n <= 6 qubits is comfortable).
    """
    if rho.dim != ch.dim:
        raise InputError("dimension mismatch between channel and state")
    dim = ch.dim
    eye = np.eye(dim)
    kraus = ch.kraus

    completeness = max_abs(np.einsum("kba,kbc->ac", kraus.conj(), kraus) - eye)
    out = np.einsum("kab,bc,kdc->ad", kraus, rho.matrix, kraus.conj())
    fixed_point = max_abs(out - rho.matrix)

    w, v = np.linalg.eigh(rho.matrix)
    if w.min() <= RHO_RANK_TOL * max(w.max(), 0.0):
        raise NumericError(
            f"state is singular beyond rank tolerance (min eigenvalue {w.min():.3e})"
        )
    w = np.clip(w, 0.0, None)
    sqrt_w = np.sqrt(w)
    kraus_eig = np.einsum("ab,kbc,cd->kad", v.conj().T, kraus, v)

    # Per-operator balance: K_tilde[i,j] * sqrt(w_j/w_i) == conj(K_tilde[j,i]).
    ratio = sqrt_w[None, :] / sqrt_w[:, None]
    per_kraus = []
    for k in (kraus_eig[1], kraus_eig[2]):
        per_kraus.append(max_abs(k * ratio - k.conj().T))

    # Channel-level balance: the observable-picture dual N^dag[X] = sum
    # K^dag X K must be self-adjoint in the weighted inner product.  Over
    # matrix units the weighted Gram G[(ab),(cd)] = sqrt(w_a w_b) *
    # <a| N^dag[|c><d|] |b> collects every pairing, so the residual is
    # its deviation from Hermiticity.
    dual_super = np.einsum("kca,kdb->abcd", kraus_eig.conj(), kraus_eig)
    gram = (sqrt_w[:, None] * sqrt_w[None, :]).reshape(-1, 1) * dual_super.reshape(
        dim * dim, dim * dim
    )
    kms_channel = max_abs(gram - gram.conj().T)

    return BalanceReport(
        completeness=float(completeness),
        fixed_point=float(fixed_point),
        kms_channel=float(kms_channel),
        kms_kraus_1=float(per_kraus[0]),
        kms_kraus_2=float(per_kraus[1]),
        tol=tol,
    )
