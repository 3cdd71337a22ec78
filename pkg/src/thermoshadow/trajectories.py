"""Stochastic trajectories of sequential measurement channels.

Each of ``copies`` independent thermal-state copies is pushed through the
configured channels in plan order, each channel applied ``ell`` times;
every application samples an outcome label in {0, 1, 2} and updates the
conditional state.

Randomness engineering: all labels derive from a single counter-based
(Philox) stream keyed on the plan seed.  Copy ``j`` owns the counter block
``[j * stride, (j + 1) * stride)`` where ``stride`` is the per-copy step
count rounded up to the 4-draw Philox block, so every copy's substream is
a pure function of (seed, copy_index) and transcripts are byte-identical
for any worker count, batch split, or execution order.

The hot loop is a compiled kernel that processes copies in parallel with
strictly scalar per-copy arithmetic, which keeps results bitwise
independent of the thread count.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass

import numba
import numpy as np
from numba import njit, prange

from .channels import PROB_SUM_TOL, ZERO_PROB, build_channel
from .errors import InputError, NumericError
from .operators import DensityMatrix, HermitianOperator, eig_decompose, gibbs_state

MARGINAL_BUDGET = 10**6
WORKERS_ENV_VAR = "THERMOSHADOW_WORKERS"


@dataclass(frozen=True)
class ProtocolPlan:
    """Full description of one protocol run.

    ``observable_ids`` fixes both the number of observables and their
    measurement order within each copy; ``ell`` is the per-observable
    repetition count; channel parameters are shared by all observables.
    """

    observable_ids: tuple
    ell: int
    copies: int
    seed: int
    beta: float
    sigma: float
    c: float
    group_tol: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "observable_ids", tuple(self.observable_ids))
        if len(self.observable_ids) < 1:
            raise InputError("plan needs at least one observable")
        if self.ell < 1 or self.copies < 1:
            raise InputError("ell and copies must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise InputError("seed must fit in 64 bits")

    @property
    def n_observables(self) -> int:
        return len(self.observable_ids)

    @property
    def steps_per_copy(self) -> int:
        return self.n_observables * self.ell

    def as_dict(self) -> dict:
        return {
            "observable_ids": list(self.observable_ids),
            "ell": self.ell,
            "copies": self.copies,
            "seed": self.seed,
            "beta": self.beta,
            "sigma": self.sigma,
            "c": self.c,
            "group_tol": self.group_tol,
        }


@dataclass(frozen=True)
class OutcomeRecord:
    copy_index: int
    observable_index: int
    repetition_index: int
    label: int


@dataclass(frozen=True)
class Transcript:
    """All outcome labels of a protocol run.

    ``labels`` has shape (copies, n_observables, ell) with values in
    {0, 1, 2}; the execution order within a copy is observable-major.
    """

    plan: ProtocolPlan
    labels: np.ndarray
    rng_fingerprint: str

    def __post_init__(self):
        expected = (self.plan.copies, self.plan.n_observables, self.plan.ell)
        if self.labels.shape != expected:
            raise InputError(
                f"label grid shape {self.labels.shape} does not match plan {expected}"
            )

    @property
    def record_count(self) -> int:
        return self.labels.size

    def iter_records(self):
        copies, n_obs, ell = self.labels.shape
        for cp in range(copies):
            for m in range(n_obs):
                for rep in range(ell):
                    yield OutcomeRecord(cp, m, rep, int(self.labels[cp, m, rep]))

    @property
    def records(self) -> list:
        return list(self.iter_records())

    def label_fractions(self) -> np.ndarray:
        return np.bincount(self.labels.ravel(), minlength=3) / self.record_count


def _fingerprint(plan: ProtocolPlan, labels: np.ndarray) -> str:
    digest = hashlib.sha256()
    digest.update(json.dumps(plan.as_dict(), sort_keys=True).encode())
    digest.update(labels.tobytes())
    return digest.hexdigest()


# ---------------------------------------------------------------------------
# Counter-based uniform substreams
# ---------------------------------------------------------------------------

def _stride(steps: int) -> int:
    # Philox emits 4 x 64-bit words per counter increment; block-align the
    # per-copy stride so advancing by whole blocks lands exactly on a copy
    # boundary.
    return -(-steps // 4) * 4


def uniform_table(seed: int, copies: int, steps: int) -> np.ndarray:
    """Uniforms for all copies: row j is copy j's substream.

    Shape (copies, stride) with stride >= steps; only the first ``steps``
    columns are consumed, the rest is block padding.
    """
    gen = np.random.Generator(np.random.Philox(key=seed))
    return gen.random((copies, _stride(steps)))


def copy_uniforms(seed: int, copy_index: int, steps: int) -> np.ndarray:
    """The substream of one copy, independent of every other copy."""
    stride = _stride(steps)
    bits = np.random.Philox(key=seed)
    bits.advance(copy_index * stride // 4)
    return np.random.Generator(bits).random(steps)


# ---------------------------------------------------------------------------
# Compiled trajectory kernel
# ---------------------------------------------------------------------------

@njit(parallel=True, cache=True)
def _trajectory_kernel(kraus, gram_t, rho0, uniforms, steps, ell, labels, finals, errs):
    """Per-copy sequential sampling, parallel over copies.

    ``kraus[ch, k]`` is the label-k operator of channel ch; ``gram_t[ch, k]``
    is the transpose of K^dag K so the branch probability is the plain
    elementwise contraction sum(state * gram_t).  All arithmetic inside a
    copy is scalar and strictly ordered, so results do not depend on the
    thread count or on how copies are batched.
    """
    n_copies = uniforms.shape[0]
    d = rho0.shape[0]
    for cp in prange(n_copies):
        state = rho0.copy()
        work = np.empty((d, d), dtype=np.complex128)
        for t in range(steps):
            ch = t // ell
            p0 = 0.0
            p1 = 0.0
            p2 = 0.0
            for a in range(d):
                for b in range(d):
                    s = state[a, b]
                    p0 += (s * gram_t[ch, 0, a, b]).real
                    p1 += (s * gram_t[ch, 1, a, b]).real
                    p2 += (s * gram_t[ch, 2, a, b]).real
            total = p0 + p1 + p2
            if abs(total - 1.0) > PROB_SUM_TOL:
                errs[cp] = t + 1
                break
            # Branches below the zero floor are never sampled.
            if p0 < ZERO_PROB:
                p0 = 0.0
            if p1 < ZERO_PROB:
                p1 = 0.0
            if p2 < ZERO_PROB:
                p2 = 0.0
            norm = p0 + p1 + p2
            u = uniforms[cp, t]
            lab = 0
            if u >= p0 / norm:
                lab = 1
            if u >= (p0 + p1) / norm:
                lab = 2
            labels[cp, t] = lab
            # state <- K state K^dag / trace, renormalized every step.
            for a in range(d):
                for c2 in range(d):
                    acc = 0.0 + 0.0j
                    for b in range(d):
                        acc += kraus[ch, lab, a, b] * state[b, c2]
                    work[a, c2] = acc
            tr = 0.0
            for a in range(d):
                for b in range(d):
                    acc = 0.0 + 0.0j
                    for c2 in range(d):
                        acc += work[a, c2] * np.conj(kraus[ch, lab, b, c2])
                    state[a, b] = acc
                    if a == b:
                        tr += acc.real
            inv = 1.0 / tr
            for a in range(d):
                for b in range(d):
                    state[a, b] *= inv
        for a in range(d):
            for b in range(d):
                finals[cp, a, b] = state[a, b]


def _channel_arrays(channels):
    kraus = np.ascontiguousarray(
        np.stack([ch.kraus for ch in channels]).astype(np.complex128)
    )
    grams = np.einsum("ckba,ckbd->ckad", kraus.conj(), kraus)
    gram_t = np.ascontiguousarray(grams.transpose(0, 1, 3, 2))
    return kraus, gram_t


def _run_batch(channels, rho0: np.ndarray, uniforms: np.ndarray, ell: int):
    steps = len(channels) * ell
    kraus, gram_t = _channel_arrays(channels)
    n_copies = uniforms.shape[0]
    labels = np.zeros((n_copies, steps), dtype=np.uint8)
    finals = np.zeros((n_copies, rho0.shape[0], rho0.shape[0]), dtype=np.complex128)
    errs = np.zeros(n_copies, dtype=np.int64)
    _trajectory_kernel(
        kraus,
        gram_t,
        np.ascontiguousarray(rho0),
        np.ascontiguousarray(uniforms),
        steps,
        ell,
        labels,
        finals,
        errs,
    )
    if errs.any():
        cp = int(np.nonzero(errs)[0][0])
        raise NumericError(
            f"branch probabilities failed to sum to 1 within {PROB_SUM_TOL} "
            f"at copy {cp}, step {int(errs[cp]) - 1}; the channel set is corrupted"
        )
    return labels, finals


def run_copy(rho: DensityMatrix, channels, ell: int, stream):
    """Drive one copy through every channel ``ell`` times in sequence.

    ``stream`` is either a numpy Generator (one uniform is drawn per step)
    or a precomputed uniform array of length ``len(channels) * ell``.
    Returns (records, final_state).
    """
    channels = list(channels)
    if not channels:
        return [], rho
    if ell < 1:
        raise InputError("ell must be >= 1")
    dim = rho.dim
    for ch in channels:
        if ch.dim != dim:
            raise InputError("channel dimension does not match the state")
    steps = len(channels) * ell
    if isinstance(stream, np.random.Generator):
        uniforms = stream.random(steps)
    else:
        uniforms = np.asarray(stream, dtype=float)
        if uniforms.shape != (steps,):
            raise InputError(f"need {steps} uniforms, got shape {uniforms.shape}")
    labels, finals = _run_batch(channels, rho.matrix, uniforms[None, :], ell)
    records = [
        OutcomeRecord(0, t // ell, t % ell, int(labels[0, t])) for t in range(steps)
    ]
    return records, DensityMatrix(finals[0], validate=False)


def resolve_workers(workers: int | None = None) -> int:
    """Worker count: explicit argument, else the environment, else numba's default."""
    if workers is None:
        env = os.environ.get(WORKERS_ENV_VAR, "")
        workers = int(env) if env else numba.config.NUMBA_NUM_THREADS
    return max(1, min(int(workers), numba.config.NUMBA_NUM_THREADS))


def build_plan_channels(plan: ProtocolPlan, h: HermitianOperator, observables):
    """Channels for every observable in plan order, sharing one spectrum."""
    observables = list(observables)
    if len(observables) != plan.n_observables:
        raise InputError(
            f"plan names {plan.n_observables} observables but {len(observables)} given"
        )
    spectrum = eig_decompose(h)
    channels = []
    for oid, a in zip(plan.observable_ids, observables):
        try:
            channels.append(
                build_channel(
                    a,
                    h,
                    plan.beta,
                    plan.sigma,
                    plan.c,
                    group_tol=plan.group_tol,
                    observable_id=str(oid),
                    spectrum=spectrum,
                )
            )
        except Exception as exc:
            raise type(exc)(f"observable {oid!r}: {exc}") from exc
    return spectrum, channels


def run_protocol(
    plan: ProtocolPlan,
    h: HermitianOperator,
    observables,
    *,
    workers: int | None = None,
) -> Transcript:
    """Run ``plan.copies`` independent copies and collect the label grid.

    The thermal state and all channels are built once; copies are executed
    in parallel and merged in copy order.  Identical plans produce
    byte-identical transcripts regardless of ``workers``.
    """
    spectrum, channels = build_plan_channels(plan, h, observables)
    rho = gibbs_state(spectrum, plan.beta)
    uniforms = uniform_table(plan.seed, plan.copies, plan.steps_per_copy)
    n_threads = resolve_workers(workers)
    previous = numba.get_num_threads()
    numba.set_num_threads(n_threads)
    try:
        labels, _ = _run_batch(channels, rho.matrix, uniforms, plan.ell)
    finally:
        numba.set_num_threads(previous)
    grid = labels.reshape(plan.copies, plan.n_observables, plan.ell)
    return Transcript(plan=plan, labels=grid, rng_fingerprint=_fingerprint(plan, grid))


def marginal_check_exact(channels, rho: DensityMatrix, m: int) -> float:
    """Exact outcome-marginal deviation for channel ``m`` in the sequence.

    Composes density matrices (no sampling): the outcome distribution of
    the m-th channel (1-based) inside the full sequence is compared with
    the distribution of the same channel applied to ``rho`` directly.
    For channels that hold ``rho`` fixed the two agree to rounding.
    """
    channels = list(channels)
    n = len(channels)
    if not 1 <= m <= n:
        raise InputError(f"m={m} outside the channel sequence of length {n}")
    if 3**n > MARGINAL_BUDGET:
        raise InputError(
            f"outcome-sequence budget exceeded: 3^{n} > {MARGINAL_BUDGET}"
        )
    state = rho.matrix
    for ch in channels[: m - 1]:
        state = np.einsum("kab,bc,kdc->ad", ch.kraus, state, ch.kraus.conj())
    target = channels[m - 1]
    branches = [k @ state @ k.conj().T for k in target.kraus]
    seq_probs = []
    for branch in branches:
        for ch in channels[m:]:
            branch = np.einsum("kab,bc,kdc->ad", ch.kraus, branch, ch.kraus.conj())
        seq_probs.append(float(np.trace(branch).real))
    direct = [
        float(np.trace(k @ rho.matrix @ k.conj().T).real) for k in target.kraus
    ]
    return float(np.max(np.abs(np.array(seq_probs) - np.array(direct))))


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

TRANSCRIPT_HEADER = "copy,observable,repetition,label"


def write_transcript(
    transcript: Transcript,
    csv_path,
    sidecar_path=None,
    *,
    comment: str = "",
    extra: dict | None = None,
):
    """Write the label grid as CSV plus a JSON sidecar.

    CSV columns: copy, observable, repetition, label — one row per record
    in execution order.  The sidecar carries the plan, seed, and RNG
    fingerprint plus any ``extra`` metadata (e.g. a config digest).  An
    optional ``comment`` line is placed before the CSV header.
    """
    copies, n_obs, ell = transcript.labels.shape
    grid = np.indices((copies, n_obs, ell)).reshape(3, -1)
    rows = np.vstack([grid, transcript.labels.reshape(1, -1)]).T
    comment_line = ""
    if comment:
        comment_line = comment if comment.startswith("#") else "# " + comment
        comment_line += "\n"
    np.savetxt(
        csv_path,
        rows,
        fmt="%d",
        delimiter=",",
        header=comment_line + TRANSCRIPT_HEADER,
        comments="",
    )
    if sidecar_path is not None:
        payload = {
            "plan": transcript.plan.as_dict(),
            "seed": transcript.plan.seed,
            "rng_fingerprint": transcript.rng_fingerprint,
        }
        payload.update(extra or {})
        with open(sidecar_path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


def read_transcript_labels(csv_path) -> np.ndarray:
    """Load the raw (copy, observable, repetition, label) rows back."""
    rows = []
    with open(csv_path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("copy"):
                continue
            rows.append([int(x) for x in line.split(",")])
    return np.asarray(rows, dtype=np.int64)
