"""Shadow estimation of thermal observables via balance-preserving measurements.

A desk-scale numerical laboratory: exact Kraus-level construction of
measurement channels that leave a thermal state invariant when outcomes
are discarded, stochastic trajectory sampling of the sequential
multi-observable protocol, estimators with explicit concentration-bound
sizing, and a classical sandbox for the matching sample-complexity lower
bound.
"""

from .channels import (
    BalanceReport,
    BohrDecomposition,
    GaussianFilter,
    MeasurementChannel,
    apply_channel,
    bohr_decompose,
    build_channel,
    default_subnormalization,
    exact_signal,
    filter_weight,
    operator_fourier_transform,
    polarize,
    verify_detailed_balance,
)
from .errors import ConstructionError, InputError, NumericError
from .estimators import (
    EstimatorReport,
    METHOD_MEDIAN,
    METHOD_TRUNCATED,
    block_mean,
    default_repetitions,
    estimate_all,
    median_of_means,
    outcome_to_sample,
    required_copies,
    sample_size_chernoff,
    tail_oracle_binomial,
    truncated_mean_estimate,
)
from .lowerbound import (
    BinPartition,
    BooleanHamiltonian,
    InducedDistribution,
    classical_gibbs,
    collision_probability,
    hybrid_bound,
    query_sim_validate,
    realize_subset,
    round_distribution,
    splitting_expectation,
    tv_beta_vs_ground,
    tv_distance,
)
from .operators import (
    DensityMatrix,
    HermitianOperator,
    PauliTerm,
    Spectrum,
    build_hamiltonian,
    eig_decompose,
    gibbs_state,
    kms_inner_product,
    pinv_sqrt,
    psd_sqrt,
    read_pauli_file,
)
from .trajectories import (
    OutcomeRecord,
    ProtocolPlan,
    Transcript,
    marginal_check_exact,
    run_copy,
    run_protocol,
    write_transcript,
)

__version__ = "0.1.0"
