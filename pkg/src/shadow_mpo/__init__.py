"""Matrix-product-operator tomography from local randomized measurements.

The package covers the full pipeline: simulating reference states as matrix
product operators, sampling randomized local measurements from them,
reconstructing an MPO ansatz from the measurement records, benchmarking the
reconstruction with factorized fidelity estimators, and extracting the
principal component of the reconstructed operator for error mitigation.
"""

import os as _os

# BLAS thread caps must be in the environment before numpy loads; this module
# is imported before any submodule touches numpy (console script included).
_threads = _os.environ.get("SHADOW_MPO_THREADS")
if _threads is not None:
    for _var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "BLIS_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
    ):
        _os.environ.setdefault(_var, _threads)

from .errors import (
    CapacityError,
    ConditioningError,
    DatasetFormatError,
    DegenerateEstimateError,
    DegenerateFactorizationError,
    NormalizationError,
    NotTranslationInvariantError,
    SamplingError,
    ShadowMpoError,
)
from .mpo import (
    AfcValue,
    Fidelities,
    MPOperator,
    MPState,
    TransferSpectrum,
    afc_fidelity_exact,
    afc_overlap_exact,
    afc_partition,
    afc_purity_exact,
    canonicalize,
    dense_to_mpo,
    dense_to_mps,
    expectation,
    fidelities,
    hermiticity_residual,
    load_state,
    mpo_add,
    mpo_dagger,
    mpo_overlap,
    mpo_purity,
    mpo_scale,
    mpo_to_dense,
    mpo_trace,
    mps_add,
    mps_expectation,
    mps_norm,
    mps_operator_expectation,
    mps_overlap,
    mps_reduced_density_matrix,
    mps_to_dense,
    mps_to_mpo,
    normalize_mps,
    reduced_density_matrix,
    renyi2_entropy,
    save_state,
    transfer_spectrum,
    von_neumann_entropy,
)
from .states import (
    CircuitSpec,
    GibbsSpec,
    apply_depolarizing,
    ising_gibbs,
    kicked_ising_state,
    maximally_mixed,
    random_mpdo,
    random_mpo,
    zero_state,
)
from .measure import (
    BasisRecord,
    MeasurementDataset,
    generate_dataset,
    read_dataset,
    sample_bitstrings,
    sample_cue_unitary,
    write_dataset,
)
from .shadows import (
    AfcEstimate,
    CrmPrior,
    IntervalShadow,
    crm_interval_shadow,
    estimate_afc_fidelity,
    estimate_afc_purity,
    estimate_observable,
    estimate_purity_hamming,
    estimate_overlap_with_known,
    fit_depolarization_prior,
    interval_shadow_average,
    interval_shadow_noise,
)
from .learner import (
    LearnerConfig,
    LearnReport,
    SweepStats,
    build_local_normal_map,
    learn,
    local_update_one_site,
    local_update_two_site,
)
from .qpca import QpcaResult, mitigated_expectation, principal_component

__version__ = "0.1.0"

__all__ = [
    "AfcEstimate",
    "AfcValue",
    "BasisRecord",
    "CapacityError",
    "CircuitSpec",
    "ConditioningError",
    "CrmPrior",
    "DatasetFormatError",
    "DegenerateEstimateError",
    "DegenerateFactorizationError",
    "Fidelities",
    "GibbsSpec",
    "IntervalShadow",
    "LearnReport",
    "LearnerConfig",
    "MPOperator",
    "MPState",
    "MeasurementDataset",
    "NormalizationError",
    "NotTranslationInvariantError",
    "QpcaResult",
    "SamplingError",
    "ShadowMpoError",
    "SweepStats",
    "TransferSpectrum",
    "afc_fidelity_exact",
    "afc_overlap_exact",
    "afc_partition",
    "afc_purity_exact",
    "apply_depolarizing",
    "build_local_normal_map",
    "canonicalize",
    "crm_interval_shadow",
    "dense_to_mpo",
    "dense_to_mps",
    "estimate_afc_fidelity",
    "estimate_afc_purity",
    "estimate_observable",
    "estimate_overlap_with_known",
    "estimate_purity_hamming",
    "expectation",
    "fidelities",
    "fit_depolarization_prior",
    "generate_dataset",
    "hermiticity_residual",
    "interval_shadow_average",
    "interval_shadow_noise",
    "ising_gibbs",
    "kicked_ising_state",
    "learn",
    "load_state",
    "local_update_one_site",
    "local_update_two_site",
    "maximally_mixed",
    "mitigated_expectation",
    "mpo_add",
    "mpo_dagger",
    "mpo_overlap",
    "mpo_purity",
    "mpo_scale",
    "mpo_to_dense",
    "mpo_trace",
    "mps_add",
    "mps_expectation",
    "mps_norm",
    "mps_operator_expectation",
    "mps_overlap",
    "mps_reduced_density_matrix",
    "mps_to_dense",
    "mps_to_mpo",
    "normalize_mps",
    "principal_component",
    "random_mpdo",
    "random_mpo",
    "read_dataset",
    "reduced_density_matrix",
    "renyi2_entropy",
    "sample_bitstrings",
    "sample_cue_unitary",
    "save_state",
    "transfer_spectrum",
    "von_neumann_entropy",
    "write_dataset",
    "zero_state",
]
