"""Floquet analysis and population transfer for sinusoidally driven two-level and N-level systems."""

from __future__ import annotations

__version__ = "0.1.0"

from .analytic_model import (
    analytic_evolution,
    analytic_pnd,
    delta_phase,
    flip_time,
    gamma_x,
    predicted_residual,
    rwa_gap,
    special_amplitudes,
    step_count_estimate,
)
from .bessel import bessel_j, bessel_zeros
from .dynamics import (
    bloch_trajectory,
    compare_analytic,
    detect_steps,
    flip_time_from_spectrum,
    non_decay_trace,
    scan_pnd,
)
from .errors import (
    DimensionMismatchError,
    DivergentFlipTimeError,
    FeatureError,
    FloquetTransferError,
    NonHermitianError,
    NumericalFault,
    PeriodicityError,
    SchemaError,
)
from .floquet import find_features, measured_peaks, monodromy, quasienergies, spectrum_sweep
from .multilevel import (
    MultiLevelSystem,
    SyntheticACSpec,
    driven_dynamics,
    effective_tls,
    find_acs,
    floquet_sweep_multilevel,
    load_system,
    save_system,
    static_spectrum,
    synthetic_ac,
)
from .propagator import PropagationGrid, evolve_state, matrix_exp_skew, propagate
from .tls_model import DriveParams, field_components, gamma_z, hamiltonian, rotating_frame_hamiltonian
