"""Simulator for an engine driven by interaction-free measurements of a bouncing bomb."""
from .analytic import AnalyticReport, analytic_weak_values, closed_forms
from .bouncer import (
    BounceEigenstate,
    BouncerConfig,
    GaussianFit,
    airy_ai,
    airy_zeros,
    bounce_eigenstate,
    fit_gaussian,
    overlap_with_minus,
    safe_raise_height,
)
from .dynamics import (
    EvolutionResult,
    PortOutcomes,
    detect_ports,
    evolve_no_explosion,
    phase_correction,
    run_interferometer,
    run_single_arm,
)
from .engine import EngineLedger, audit, expected_yield, run_cycle
from .reservoir import MicroReservoirSpec, OracleReport, microscopic_oracle, oracle_params
from .statespace import (
    FrequencyGrid,
    JointState,
    Observable,
    Params,
    apply_exit_beamsplitter,
    build_grid,
    expectations,
    gaussian_wavepacket,
    initial_state,
)
from .weakvalues import (
    BackwardState,
    EffectivePropagator,
    WeakValueSeries,
    backward_propagate,
    detect_anomalies,
    effective_propagator_apply,
    weak_value,
    weak_value_series,
)

__version__ = "0.1.0"
