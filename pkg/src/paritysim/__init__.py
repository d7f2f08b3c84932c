"""Desk-scale simulator for charge-parity noise in transmon qubits.

Parity-band spectroscopy, embedded parity detection with post-selection,
Ramsey and spin-echo dephasing under telegraph parity noise, and the
flip-time ensemble average of the master-equation model.
"""

from .errors import (
    ConfigError,
    CoverageError,
    DimensionError,
    IntegratorError,
    NoOscillationError,
    NotResolvableError,
    ParitySimError,
    ShotRecordError,
    StateError,
)
from .qcore import DensityMatrix, Operator, annihilation_op, dm_pure, expectation
from .transmon import (
    DeviceParams,
    Parity,
    asymptotic_suppression,
    dispersion,
    parity_detuning,
    transition_freq,
)
from .lindblad import (
    CollapseSet,
    HamiltonianSegment,
    integrate,
    integrate_with_flip,
    lindblad_rhs,
)
from .sequences import (
    PulseSequence,
    build_echo,
    build_parity_detection,
    build_ramsey,
    build_spectroscopy,
    compile_sequence,
)
from .montecarlo import (
    ParityTrajectory,
    ProtocolConfig,
    ShotRecord,
    classify,
    run_protocol,
    run_shot,
    sample_parity_trajectory,
)
from .analysis import (
    FitResult,
    SweepResult,
    ensemble_average_t2,
    find_peaks,
    fit_decaying_sinusoid,
    ingest_shot_records,
    optimize_tau_p,
    sweep_dispersion,
    t2_vs_ideal_curves,
)

__version__ = "0.1.0"
