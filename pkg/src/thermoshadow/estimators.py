"""Expectation-value estimators over outcome transcripts.

Outcome labels map to the three-valued sample {+2/c, -2/c, 0}; per-copy
block means feed either a clipped mean (the default) or a median of group
means.  Sample-size calculators instantiate the concentration bounds with
explicit constants, and a brute-force coupling oracle validates the
block-mean tail bound empirically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .trajectories import Transcript

METHOD_TRUNCATED = "mean-of-truncated-block-means"
METHOD_MEDIAN = "median-of-means"
METHODS = (METHOD_TRUNCATED, METHOD_MEDIAN)

DEFAULT_CLIP = 4.0
# Centered clipped block means lie in a width-8 interval; used as the
# almost-sure bound in the Bernstein-style copy count.
TRUNCATED_RANGE_BOUND = 8.0


def outcome_to_sample(label: int, c: float) -> float:
    """Label -> sample value: 1 -> +2/c, 2 -> -2/c, 0 -> 0."""
    if not 0.0 < c <= 1.0:
        raise InputError(f"c={c!r} must lie in (0, 1]")
    if label == 0:
        return 0.0
    if label == 1:
        return 2.0 / c
    if label == 2:
        return -2.0 / c
    raise InputError(f"label {label!r} outside {{0, 1, 2}}")


def samples_from_labels(labels: np.ndarray, c: float) -> np.ndarray:
    """Vectorized label-to-sample map."""
    if not 0.0 < c <= 1.0:
        raise InputError(f"c={c!r} must lie in (0, 1]")
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() > 2):
        raise InputError("labels outside {0, 1, 2}")
    lut = np.array([0.0, 2.0 / c, -2.0 / c])
    return lut[labels]


def block_mean(samples) -> float:
    """Arithmetic mean of one block of samples."""
    arr = np.asarray(samples, dtype=float)
    if arr.size == 0:
        raise InputError("block_mean requires a nonempty sample block")
    return float(arr.mean())


def truncated_mean_estimate(block_means, clip: float = DEFAULT_CLIP) -> float:
    """Mean of block means clipped to [-clip, +clip]."""
    arr = np.asarray(block_means, dtype=float)
    if arr.size == 0:
        raise InputError("truncated_mean_estimate requires block means")
    return float(np.clip(arr, -clip, clip).mean())


def median_of_means(block_means, n_groups: int) -> float:
    """Median of ``n_groups`` equally sized group means.

    Blocks are consumed in order; a remainder that does not fill a group
    is dropped.  For an even group count the two central order statistics
    are averaged.
    """
    arr = np.asarray(block_means, dtype=float)
    if n_groups < 1:
        raise InputError("n_groups must be >= 1")
    if arr.size < n_groups:
        raise InputError(f"{arr.size} blocks cannot fill {n_groups} groups")
    per_group = arr.size // n_groups
    used = arr[: per_group * n_groups].reshape(n_groups, per_group)
    return float(np.median(used.mean(axis=1)))


def sample_size_chernoff(epsilon: float, delta: float) -> int:
    """Two-sided Chernoff-Hoeffding sample count at worst-case mean.

    Smallest k with ``2 exp(-eps^2 k / (2 (p + eps))) <= delta`` at p = 1,
    i.e. ``ceil(2 ln(2/delta) (1 + eps) / eps^2)``, floored at 1.
    """
    if not 0.0 < epsilon < 1.0 or not 0.0 < delta < 1.0:
        raise InputError("epsilon and delta must lie in (0, 1)")
    k = math.ceil(2.0 * math.log(2.0 / delta) * (1.0 + epsilon) / epsilon**2)
    return max(1, k)


def block_second_moment_bound(c: float, ell: int) -> float:
    """Worst-case bound 8 + 8/(c*ell) on E[s^2] for a length-ell block mean."""
    if not 0.0 < c <= 1.0 or ell < 1:
        raise InputError("need c in (0, 1] and ell >= 1")
    return 8.0 + 8.0 / (c * ell)


def truncation_eta(epsilon: float, delta: float) -> float:
    """Clipping-bias budget min(delta * eps^2 / (8 ln(2/delta)), 1/4)."""
    if not 0.0 < epsilon < 1.0 or not 0.0 < delta < 1.0:
        raise InputError("epsilon and delta must lie in (0, 1)")
    return min(delta * epsilon**2 / (8.0 * math.log(2.0 / delta)), 0.25)


def default_repetitions(epsilon: float, delta: float, c: float) -> int:
    """Per-copy channel repetitions ``ceil((8/3) ln(2/eta) / c)``.

    ``delta`` is the failure budget of the single observable being sized
    (callers pass delta/M for simultaneous estimates).  At this ell the
    clipping bias of the block mean is below eta.
    """
    if not 0.0 < c <= 1.0:
        raise InputError(f"c={c!r} must lie in (0, 1]")
    eta = truncation_eta(epsilon, delta)
    return max(1, math.ceil((8.0 / 3.0) * math.log(2.0 / eta) / c))


def mom_group_count(delta: float) -> int:
    """Group count ceil(2 ln(2/delta)) so the median fails with prob <= delta."""
    if not 0.0 < delta < 1.0:
        raise InputError("delta must lie in (0, 1)")
    return max(1, math.ceil(2.0 * math.log(2.0 / delta)))


def required_copies(
    epsilon: float, delta: float, c: float, ell: int, method: str = METHOD_TRUNCATED
) -> int:
    """Copies needed for one observable at failure budget ``delta``.

    median-of-means: ``K * N`` with K groups of N = ceil(34 v / eps^2)
    blocks, v the worst-case block second moment.

    truncated mean: Bernstein count
    ``ceil(ln(2/delta) (2 v + (2/3) b (eps - eta)) / (eps - eta)^2)`` with
    range bound b = 8 and the clipping bias eta reserved out of epsilon.
    """
    if method not in METHODS:
        raise InputError(f"unknown method {method!r}; expected one of {METHODS}")
    v = block_second_moment_bound(c, ell)
    if method == METHOD_MEDIAN:
        groups = mom_group_count(delta)
        per_group = math.ceil(34.0 * v / epsilon**2)
        return groups * per_group
    eta = truncation_eta(epsilon, delta)
    eff = epsilon - eta
    count = math.ceil(
        math.log(2.0 / delta)
        * (2.0 * v + (2.0 / 3.0) * TRUNCATED_RANGE_BOUND * eff)
        / eff**2
    )
    return max(1, count)


def minimum_repetitions(epsilon: float, delta: float, c: float) -> int:
    """Alias of default_repetitions, named for its role as a validity gate."""
    return default_repetitions(epsilon, delta, c)


@dataclass(frozen=True)
class EstimatorReport:
    """One observable's estimate with the sizing that produced it."""

    observable_id: str
    estimate: float
    method: str
    block_size: int
    blocks: int
    claimed_epsilon: float
    claimed_delta: float

    def as_dict(self) -> dict:
        return {
            "observable_id": self.observable_id,
            "estimate": self.estimate,
            "method": self.method,
            "block_size": self.block_size,
            "blocks": self.blocks,
            "claimed_epsilon": self.claimed_epsilon,
            "claimed_delta": self.claimed_delta,
        }


def estimate_all(
    transcript: Transcript,
    method: str = METHOD_TRUNCATED,
    epsilon: float = 0.1,
    delta: float = 0.1,
) -> list:
    """Estimate every observable in the transcript simultaneously.

    Each observable is sized for failure probability delta/M so the union
    over all M estimates fails with probability at most delta.  Raises
    InputError when the transcript holds fewer copies (or repetitions)
    than the chosen method requires.
    """
    if method not in METHODS:
        raise InputError(f"unknown method {method!r}; expected one of {METHODS}")
    plan = transcript.plan
    n_obs = plan.n_observables
    delta_each = delta / n_obs
    need_ell = minimum_repetitions(epsilon, delta_each, plan.c)
    if plan.ell < need_ell:
        raise InputError(
            f"transcript has ell={plan.ell} repetitions per copy; "
            f"(epsilon={epsilon}, delta={delta}, M={n_obs}, c={plan.c}) "
            f"requires ell >= {need_ell}"
        )
    need_copies = required_copies(epsilon, delta_each, plan.c, plan.ell, method)
    if plan.copies < need_copies:
        raise InputError(
            f"transcript has {plan.copies} copies; "
            f"(epsilon={epsilon}, delta={delta}, M={n_obs}, c={plan.c}, "
            f"ell={plan.ell}) requires r >= {need_copies}"
        )
    samples = samples_from_labels(transcript.labels, plan.c)
    block_means = samples.mean(axis=2)  # (copies, M)
    reports = []
    for m, oid in enumerate(plan.observable_ids):
        column = block_means[:, m]
        if method == METHOD_MEDIAN:
            estimate = median_of_means(column, mom_group_count(delta_each))
        else:
            estimate = truncated_mean_estimate(column)
        reports.append(
            EstimatorReport(
                observable_id=str(oid),
                estimate=estimate,
                method=method,
                block_size=plan.ell,
                blocks=plan.copies,
                claimed_epsilon=epsilon,
                claimed_delta=delta,
            )
        )
    return reports


# ---------------------------------------------------------------------------
# Brute-force tail oracle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TailOracleStats:
    """Empirical moments of the extremal three-valued block process.

    ``clip_bias`` is the mean of (|S_k| - 4)+, the error a clipped block
    mean can introduce; at the recommended block length it stays below the
    same eta budget as the tail probability.
    """

    k: int
    c: float
    trials: int
    mean_square: float
    tail_probability: float
    clip_bias: float
    second_moment_bound: float
    tail_standard_error: float


def tail_oracle_binomial(
    k: int, c: float, trials: int, stream: np.random.Generator
) -> TailOracleStats:
    """Simulate the process that saturates the per-step probability caps.

    Every step independently takes +2/c and -2/c each with probability
    min(c, 1/2) (the extremal adversary allowed by the conditional caps).
    Returns the empirical E[S_k^2], Pr[|S_k| >= 4], and the clipping bias
    E[(|S_k| - 4)+] along with the proved second-moment bound 8 + 8/(c k).
    """
    if k < 1 or trials < 1:
        raise InputError("k and trials must be >= 1")
    if not 0.0 < c <= 1.0:
        raise InputError(f"c={c!r} must lie in (0, 1]")
    p_hit = min(c, 0.5)
    u = stream.random((trials, k))
    steps = np.where(u < p_hit, 2.0 / c, 0.0)
    steps = np.where((u >= p_hit) & (u < 2 * p_hit), -2.0 / c, steps)
    block = steps.mean(axis=1)
    tail = float(np.mean(np.abs(block) >= 4.0))
    return TailOracleStats(
        k=k,
        c=c,
        trials=trials,
        mean_square=float(np.mean(block**2)),
        tail_probability=tail,
        clip_bias=float(np.mean(np.clip(np.abs(block) - 4.0, 0.0, None))),
        second_moment_bound=8.0 + 8.0 / (c * k),
        tail_standard_error=math.sqrt(max(tail * (1 - tail), 1.0 / trials) / trials),
    )


# ---------------------------------------------------------------------------
# Report serialization
# ---------------------------------------------------------------------------

REPORT_HEADER = "observable,estimate,exact,abs_error,method,ell,copies"


def write_reports_csv(reports, path, exact=None, *, comment: str = ""):
    """CSV per the report schema; ``exact`` fills the ground-truth column.

    ``exact`` is a mapping observable_id -> value; missing entries leave
    the exact and abs_error columns empty.
    """
    exact = exact or {}
    lines = []
    if comment:
        lines.append(comment if comment.startswith("#") else "# " + comment)
    lines.append(REPORT_HEADER)
    for rep in reports:
        truth = exact.get(rep.observable_id)
        if truth is None:
            exact_s, err_s = "", ""
        else:
            exact_s = repr(float(truth))
            err_s = repr(abs(rep.estimate - float(truth)))
        lines.append(
            f"{rep.observable_id},{rep.estimate!r},{exact_s},{err_s},"
            f"{rep.method},{rep.block_size},{rep.blocks}"
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
