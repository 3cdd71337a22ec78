"""Operator-facing command line: verify, estimate, scaling, lowerbound.

Configuration is a single JSON file; individual flags override file
values, which override defaults.  Every emitted file carries the resolved
config digest and the seed, and rerunning any command with the same
config reproduces its outputs byte for byte.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import estimators as est
from .channels import (
    GaussianFilter,
    build_channel,
    default_subnormalization,
    filter_identity_residual,
    signal_identity_residual,
    verify_detailed_balance,
)
from .errors import ConstructionError, InputError, NumericError
from .lowerbound import (
    BinPartition,
    InducedDistribution,
    QUERY_SIM_MAX_N,
    collision_probability,
    induced_bin_frequencies,
    query_sim_validate,
    random_unitary,
    realize_subset,
    round_distribution,
    temperature_threshold,
    tv_beta_vs_ground,
    uniform_zero_set_ensemble,
)
from .operators import (
    HermitianOperator,
    build_hamiltonian,
    eig_decompose,
    gibbs_state,
    read_pauli_file,
)
from .trajectories import (
    ProtocolPlan,
    marginal_check_exact,
    run_protocol,
    write_transcript,
)

IDENTITY_TOL_DEFAULT = 1e-8


@dataclass
class RunConfig:
    """Resolved parameters for one command invocation."""

    hamiltonian: str = ""
    observables: list = field(default_factory=list)
    n: int | None = None
    beta: float = 1.0
    sigma: float = 1.0
    c: float | None = None
    group_tol: float | None = None
    M: int | None = None
    epsilon: float = 0.1
    delta: float = 0.1
    ell: int | None = None
    copies: int | None = None
    seed: int = 0
    output_dir: str = "runs"
    method: str = est.METHOD_TRUNCATED
    workers: int | None = None
    identity_tol: float = IDENTITY_TOL_DEFAULT
    # scaling study
    scaling_m_grid: list = field(default_factory=lambda: [2, 4, 8])
    scaling_epsilon_grid: list = field(default_factory=lambda: [0.2, 0.1])
    scaling_fixed_m: int = 4
    scaling_fixed_epsilon: float = 0.2
    scaling_seeds: int = 100
    max_kernel_steps: float = 6e9
    # lower-bound battery
    lb_max_n: int = 12
    lb_r_max: int = 10
    lb_beta_offset: float = 0.0
    lb_rounding_trials: int = 2000
    lb_collision_trials: int = 20000
    lb_hybrid_instances: int = 25
    lb_selftest_negative: bool = True

    def resolved_c(self) -> float:
        return self.c if self.c is not None else default_subnormalization(self.sigma)

    def digest(self) -> str:
        payload = dataclasses.asdict(self)
        # Execution-only knobs: the same experiment rerun with a different
        # worker count or output location must emit identical bytes.
        payload.pop("workers")
        payload.pop("output_dir")
        blob = json.dumps(payload, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def stamp(self) -> str:
        return f"config_digest={self.digest()} seed={self.seed}"


_CONFIG_FIELDS = {f.name for f in dataclasses.fields(RunConfig)}


def load_config(path: str | None, overrides: dict) -> RunConfig:
    """File values override defaults; explicit flags override the file."""
    data: dict = {}
    if path:
        with open(path, "r", encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
        unknown = set(data) - _CONFIG_FIELDS
        if unknown:
            raise InputError(f"{path}: unknown config keys {sorted(unknown)}")
    for key, value in overrides.items():
        if value is not None:
            data[key] = value
    return RunConfig(**data)


def _ensure_outdir(config: RunConfig) -> str:
    os.makedirs(config.output_dir, exist_ok=True)
    return config.output_dir


def _write_json(path: str, payload: dict):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_problem(config: RunConfig):
    """Hamiltonian plus the observable list (cycled up to M entries)."""
    if not config.hamiltonian:
        raise InputError("config needs a 'hamiltonian' file path")
    if not config.observables:
        raise InputError("config needs at least one observable file path")
    terms, n = read_pauli_file(config.hamiltonian)
    if config.n is not None and config.n != n:
        raise InputError(
            f"config says n={config.n} but {config.hamiltonian} has words of length {n}"
        )
    h = build_hamiltonian(terms, n)
    pool = []
    for path in config.observables:
        obs_terms, obs_n = read_pauli_file(path)
        if obs_n != n:
            raise InputError(f"{path}: observable acts on {obs_n} qubits, H on {n}")
        a = build_hamiltonian(obs_terms, n)
        norm = a.norm()
        if norm > 1.0 + 1e-9:
            raise InputError(f"{path}: observable norm {norm:.6f} exceeds 1")
        stem = os.path.splitext(os.path.basename(path))[0]
        pool.append((stem, a))
    count = config.M if config.M is not None else len(pool)
    if count < 1:
        raise InputError("M must be >= 1")
    observables, ids = [], []
    for i in range(count):
        stem, a = pool[i % len(pool)]
        ids.append(stem if count <= len(pool) else f"{stem}@{i}")
        observables.append(a)
    return n, h, ids, observables


def _sizing(config: RunConfig, m_count: int):
    c = config.resolved_c()
    delta_each = config.delta / m_count
    ell = config.ell if config.ell is not None else est.default_repetitions(
        config.epsilon, delta_each, c
    )
    copies = config.copies if config.copies is not None else est.required_copies(
        config.epsilon, delta_each, c, ell, config.method
    )
    return c, ell, copies


def _exact_expectations(h: HermitianOperator, beta: float, ids, observables) -> dict:
    spectrum = eig_decompose(h)
    rho = gibbs_state(spectrum, beta)
    return {
        oid: float(np.trace(rho.matrix @ a.matrix).real)
        for oid, a in zip(ids, observables)
    }


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def cmd_verify(config: RunConfig) -> int:
    """Run every channel identity suite; exit 0 iff all residuals pass."""
    outdir = _ensure_outdir(config)
    n, h, ids, observables = _load_problem(config)
    c = config.resolved_c()
    tol = config.identity_tol
    spectrum = eig_decompose(h)
    rho = gibbs_state(spectrum, config.beta)

    channel_rows, channels = [], []
    for oid, a in zip(ids, observables):
        ch = build_channel(
            a,
            h,
            config.beta,
            config.sigma,
            c,
            group_tol=config.group_tol,
            observable_id=oid,
            spectrum=spectrum,
        )
        channels.append(ch)
        report = verify_detailed_balance(ch, rho, tol)
        row = report.as_dict()
        row["observable"] = oid
        row["signal_identity"] = signal_identity_residual(ch, rho, a)
        row["passed"] = report.passed and row["signal_identity"] <= tol
        channel_rows.append(row)

    marginal_rows = []
    for m in range(1, len(channels) + 1):
        residual = marginal_check_exact(channels, rho, m)
        marginal_rows.append(
            {"m": m, "residual": residual, "passed": residual <= max(tol, 1e-10)}
        )

    filt = GaussianFilter(config.beta if config.beta > 0 else 1.0, config.sigma)
    nus = np.random.Generator(np.random.Philox(key=config.seed)).uniform(-6, 6, 1000)
    filter_residual = float(filter_identity_residual(filt, nus).max())

    passed = (
        all(r["passed"] for r in channel_rows)
        and all(r["passed"] for r in marginal_rows)
        and filter_residual <= 1e-12
    )
    payload = {
        "command": "verify",
        "config_digest": config.digest(),
        "seed": config.seed,
        "n": n,
        "tol": tol,
        "channels": channel_rows,
        "marginal_law": marginal_rows,
        "filter_identity_max_rel": filter_residual,
        "passed": passed,
    }
    _write_json(os.path.join(outdir, "report.json"), payload)
    return 0 if passed else 1


# ---------------------------------------------------------------------------
# estimate
# ---------------------------------------------------------------------------

def cmd_estimate(config: RunConfig) -> int:
    """Protocol run plus estimation; writes estimates and transcript files."""
    outdir = _ensure_outdir(config)
    n, h, ids, observables = _load_problem(config)
    c, ell, copies = _sizing(config, len(ids))
    plan = ProtocolPlan(
        observable_ids=tuple(ids),
        ell=ell,
        copies=copies,
        seed=config.seed,
        beta=config.beta,
        sigma=config.sigma,
        c=c,
        group_tol=config.group_tol,
    )
    transcript = run_protocol(plan, h, observables, workers=config.workers)
    reports = est.estimate_all(
        transcript, method=config.method, epsilon=config.epsilon, delta=config.delta
    )
    exact = _exact_expectations(h, config.beta, ids, observables)

    stamp = config.stamp()
    est.write_reports_csv(
        reports, os.path.join(outdir, "estimates.csv"), exact=exact, comment=stamp
    )
    write_transcript(
        transcript,
        os.path.join(outdir, "transcript.csv"),
        os.path.join(outdir, "transcript.json"),
        comment=stamp,
        extra={"config_digest": config.digest()},
    )
    payload = {
        "command": "estimate",
        "config_digest": config.digest(),
        "seed": config.seed,
        "plan": plan.as_dict(),
        "estimates": [
            dict(r.as_dict(), exact=exact[r.observable_id],
                 abs_error=abs(r.estimate - exact[r.observable_id]))
            for r in reports
        ],
        "rng_fingerprint": transcript.rng_fingerprint,
    }
    _write_json(os.path.join(outdir, "estimates.json"), payload)
    return 0


# ---------------------------------------------------------------------------
# scaling
# ---------------------------------------------------------------------------

def _scaling_points(config: RunConfig):
    points = [(int(m), config.scaling_fixed_epsilon) for m in config.scaling_m_grid]
    points += [(config.scaling_fixed_m, float(e)) for e in config.scaling_epsilon_grid]
    return points


def _estimate_cost(config: RunConfig, dim: int) -> tuple[float, float]:
    total_steps = 0.0
    for m_count, eps in _scaling_points(config):
        c = config.resolved_c()
        delta_each = config.delta / m_count
        ell = est.default_repetitions(eps, delta_each, c)
        copies = est.required_copies(eps, delta_each, c, ell, config.method)
        total_steps += float(copies) * m_count * ell * config.scaling_seeds
    est_seconds = total_steps * dim * dim / 4e8
    return total_steps, est_seconds


def cmd_scaling(config: RunConfig) -> int:
    """Success-rate study over a grid of (observable count, precision)."""
    outdir = _ensure_outdir(config)
    n, h, ids_all, observables_all = _load_problem(config)
    dim = 2**n
    total_steps, est_seconds = _estimate_cost(config, dim)
    if total_steps > config.max_kernel_steps:
        raise InputError(
            f"scaling budget exceeded: ~{total_steps:.3g} kernel steps "
            f"(~{est_seconds / 60:.1f} min estimated) > max_kernel_steps="
            f"{config.max_kernel_steps:.3g}; shrink the grid or raise the budget"
        )

    c = config.resolved_c()
    pool = list(zip(ids_all, observables_all))
    rows = []
    for m_count, eps in _scaling_points(config):
        ids = [
            (pool[i % len(pool)][0] if m_count <= len(pool)
             else f"{pool[i % len(pool)][0]}@{i}")
            for i in range(m_count)
        ]
        observables = [pool[i % len(pool)][1] for i in range(m_count)]
        delta_each = config.delta / m_count
        ell = est.default_repetitions(eps, delta_each, c)
        copies = est.required_copies(eps, delta_each, c, ell, config.method)
        exact = _exact_expectations(h, config.beta, ids, observables)
        worst_error = 0.0
        successes = 0
        for trial in range(config.scaling_seeds):
            plan = ProtocolPlan(
                observable_ids=tuple(ids),
                ell=ell,
                copies=copies,
                seed=(config.seed + 0x9E3779B1 * (trial + 1)) % 2**64,
                beta=config.beta,
                sigma=config.sigma,
                c=c,
                group_tol=config.group_tol,
            )
            transcript = run_protocol(plan, h, observables, workers=config.workers)
            reports = est.estimate_all(
                transcript, method=config.method, epsilon=eps, delta=config.delta
            )
            errs = [abs(r.estimate - exact[r.observable_id]) for r in reports]
            worst_error = max(worst_error, max(errs))
            successes += all(e <= eps for e in errs)
        rows.append(
            {
                "M": m_count,
                "epsilon": eps,
                "copies_used": copies,
                "worst_error": worst_error,
                "success_fraction": successes / config.scaling_seeds,
            }
        )

    lines = [f"# {config.stamp()}", "M,epsilon,copies_used,worst_error,success_fraction"]
    for row in rows:
        lines.append(
            f"{row['M']},{row['epsilon']!r},{row['copies_used']},"
            f"{row['worst_error']!r},{row['success_fraction']!r}"
        )
    with open(os.path.join(outdir, "scaling.csv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    _write_json(
        os.path.join(outdir, "scaling.json"),
        {
            "command": "scaling",
            "config_digest": config.digest(),
            "seed": config.seed,
            "rows": rows,
        },
    )
    return 0


# ---------------------------------------------------------------------------
# lowerbound
# ---------------------------------------------------------------------------

def _lb_stream(config: RunConfig, tag: int) -> np.random.Generator:
    key = np.array([config.seed % 2**64, tag], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _lb_temperature_sweep(config: RunConfig):
    entries = []
    failures = 0
    for n in range(1, config.lb_max_n + 1):
        for k in sorted({1, 2 ** (n - 1), 2**n - 1}):
            for r in range(1, config.lb_r_max + 1):
                beta = temperature_threshold(n, r) + config.lb_beta_offset
                entry = {"n": n, "k": k, "r": r, "beta": beta}
                if beta < temperature_threshold(n, r) - 1e-12:
                    entry["status"] = "skipped"
                    entry["reason"] = "beta below n*ln2 + r; bound not applicable"
                else:
                    tv = tv_beta_vs_ground(n, k, beta)
                    ok = tv <= math.exp(-r) + 1e-15
                    entry["tv"] = tv
                    entry["bound"] = math.exp(-r)
                    entry["status"] = "pass" if ok else "fail"
                    failures += not ok
                entries.append(entry)
    return entries, failures


def _lb_rounding_battery(config: RunConfig):
    stream = _lb_stream(config, 1)
    worst_gap = 0.0
    worst_sum = 0.0
    failures = 0
    for _ in range(config.lb_rounding_trials):
        m = int(stream.integers(2, 24))
        grid = int(stream.integers(1, 400))
        p = InducedDistribution(stream.dirichlet(np.ones(m)))
        q = round_distribution(p, grid)
        on_grid = np.max(np.abs(q.probs * grid - np.rint(q.probs * grid)))
        gap = np.max(np.abs(q.probs - p.probs))
        total = abs(q.probs.sum() - 1.0)
        again = round_distribution(q, grid)
        idempotent = np.array_equal(again.probs, q.probs)
        ok = on_grid <= 1e-9 and gap <= 1.0 / grid + 1e-12 and total <= 1e-12 and idempotent
        failures += not ok
        worst_gap = max(worst_gap, gap * grid)
        worst_sum = max(worst_sum, total)
    result = {
        "trials": config.lb_rounding_trials,
        "failures": failures,
        "worst_gap_times_grid": worst_gap,
        "worst_sum_deviation": worst_sum,
    }
    if config.lb_selftest_negative:
        # Deliberately corrupted rounding (per-entry ceiling) must trip the
        # sum-to-one invariant.
        p = InducedDistribution(stream.dirichlet(np.ones(6)))
        bad = np.ceil(p.probs * 10) / 10
        result["negative_control_detected"] = bool(abs(bad.sum() - 1.0) > 1e-12)
    return result


def _lb_subset_battery(config: RunConfig):
    stream = _lb_stream(config, 2)
    failures = 0
    cases = 50
    for _ in range(cases):
        n = int(stream.integers(4, 11))
        m = int(stream.integers(2, 9))
        part = BinPartition(n=n, m=m)
        # the subset size may not exceed the smallest bin
        grid = int(stream.integers(1, min(64, 2**n // m) + 1))
        p = InducedDistribution(stream.dirichlet(np.ones(m)))
        q = round_distribution(p, grid)
        f = realize_subset(q, part, grid, stream)
        induced = induced_bin_frequencies(f, part)
        failures += not np.array_equal(induced.probs, q.probs)
    return {"cases": cases, "failures": failures}


def _lb_collision_battery(config: RunConfig):
    stream = _lb_stream(config, 3)
    rows = []
    failures = 0
    for draws in (2, 5, 10):
        for universe in (16, 256, 4096):
            stats = collision_probability(
                draws, universe, config.lb_collision_trials, stream
            )
            ok = stats.empirical <= stats.bound + 3 * stats.standard_error
            failures += not ok
            rows.append(
                {
                    "draws": draws,
                    "universe": universe,
                    "empirical": stats.empirical,
                    "bound": stats.bound,
                    "passed": ok,
                }
            )
    return {"rows": rows, "failures": failures}


def _lb_hybrid_battery(config: RunConfig):
    stream = _lb_stream(config, 4)
    rows = []
    failures = 0
    for _ in range(config.lb_hybrid_instances):
        n = int(stream.integers(2, QUERY_SIM_MAX_N + 1))
        queries = int(stream.integers(1, 6))
        workspace = int(stream.integers(0, n + 1))
        dim = 2 ** (n + workspace)
        algorithm = [random_unitary(dim, stream) for _ in range(queries + 1)]
        k = int(stream.integers(1, 4))
        ensemble = uniform_zero_set_ensemble(n, k)
        f0 = np.ones(2**n, dtype=np.uint8)
        report = query_sim_validate(
            n, queries, ensemble, f0, algorithm, trials=24, stream=stream
        )
        failures += not report.satisfied
        rows.append(
            {
                "n": n,
                "T": queries,
                "workspace": workspace,
                "trace_distance": report.trace_distance,
                "bound": report.bound,
                "passed": report.satisfied,
            }
        )
    return {"rows": rows, "failures": failures}


def cmd_lowerbound(config: RunConfig) -> int:
    """Exact lemma-level checks for the lower-bound constructions."""
    outdir = _ensure_outdir(config)
    sweep, sweep_failures = _lb_temperature_sweep(config)
    rounding = _lb_rounding_battery(config)
    subset = _lb_subset_battery(config)
    collision = _lb_collision_battery(config)
    hybrid = _lb_hybrid_battery(config)
    failures = (
        sweep_failures
        + rounding["failures"]
        + subset["failures"]
        + collision["failures"]
        + hybrid["failures"]
    )
    if config.lb_selftest_negative and not rounding.get("negative_control_detected", True):
        failures += 1
    payload = {
        "command": "lowerbound",
        "config_digest": config.digest(),
        "seed": config.seed,
        "temperature_sweep": {
            "entries": len(sweep),
            "failures": sweep_failures,
            "skipped": sum(e["status"] == "skipped" for e in sweep),
            "worst_margin": max(
                (e["tv"] / e["bound"] for e in sweep if e["status"] == "pass"),
                default=0.0,
            ),
        },
        "rounding": rounding,
        "subset_realization": subset,
        "collision": collision,
        "hybrid": hybrid,
        "passed": failures == 0,
    }
    _write_json(os.path.join(outdir, "report.json"), payload)
    return 0 if failures == 0 else 1


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--hamiltonian")
    parser.add_argument("--observables", nargs="+")
    parser.add_argument("--beta", type=float)
    parser.add_argument("--sigma", type=float)
    parser.add_argument("--c", type=float)
    parser.add_argument("--M", type=int)
    parser.add_argument("--epsilon", type=float)
    parser.add_argument("--delta", type=float)
    parser.add_argument("--ell", type=int)
    parser.add_argument("--copies", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--output-dir", dest="output_dir")
    parser.add_argument("--method", choices=est.METHODS)
    parser.add_argument("--workers", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="thermoshadow",
        description="Verification and estimation harness for detailed-balance "
        "measurement channels on thermal states",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("verify", cmd_verify),
        ("estimate", cmd_estimate),
        ("scaling", cmd_scaling),
        ("lowerbound", cmd_lowerbound),
    ):
        p = sub.add_parser(name)
        _add_common(p)
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {
        key: getattr(args, key)
        for key in _CONFIG_FIELDS
        if hasattr(args, key) and getattr(args, key) is not None
    }
    try:
        config = load_config(args.config, overrides)
        return args.func(config)
    except (InputError, ConstructionError, NumericError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
