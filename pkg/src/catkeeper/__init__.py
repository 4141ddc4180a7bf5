"""Cat-state preservation by repeated parity probes in a lossy cavity.

The package simulates a field mode prepared in an even Schrodinger-cat
state, damped at zero temperature, and repeatedly probed by two-level
atoms that measure photon-number parity without absorbing photons. Every
closed-form prediction (mixture weights, detection probabilities, missed
probe corrections, the two-cavity extension) is implemented next to an
independent numerical channel so each can be validated against the other.
"""

from .closedform import (
    CatDecomposition,
    StepProbabilities,
    damped_cat,
    decoherence_time,
    detection_probabilities,
    joint_cat_state,
    missed_probe_update,
    normalization_factor,
    propagate_weights,
    reconstruct_density,
    reconstruct_two_cavity_density,
    sequence_all_upper,
    sequence_all_upper_product,
    two_cavity_weights,
)
from .errors import (
    CatkeeperError,
    ConfigError,
    DegenerateStateError,
    DimensionOverflowError,
    IntegrationDivergedError,
    MeasurementDegenerateError,
    TruncationError,
    TruncationWarning,
)
from .fock import (
    annihilation,
    cat_state,
    coherent_state,
    density_matrix,
    fidelity,
    number_operator,
    parity_projectors,
    phase_operator,
    purity,
    state_fidelity,
    tensor,
    trace_distance,
    truncation_dim,
)
from .kernels import available_backends, default_backend
from .lindblad import (
    DampingChannel,
    kraus_evolve,
    kraus_evolve_two_mode,
    mean_photon,
    parity_expectation,
    rk4_evolve,
)
from .protocol import (
    AtomStepRecord,
    EnsembleStats,
    ProtocolConfig,
    TrajectoryResult,
    build_plan,
    dispersive_step,
    measure_atom,
    prepare_atom,
    run_ensemble,
    run_trajectory,
)

__version__ = "0.1.0"
