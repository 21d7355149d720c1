"""Discrete-time integral resonant control for negative-imaginary plants."""

from .discretize import Mode, ModalSpec, build_modal_plant, demo_spec, zoh_sample
from .errors import (
    AssumptionError,
    DefinitenessError,
    DimensionError,
    DtircError,
    FormatError,
    PoleEvaluationError,
    UnitEigenvalueError,
)
from .interconnect import (
    ClosedLoopCertificate,
    certify_closed_loop,
    close_loop,
    closed_loop_system,
    decomposition_check,
    lyapunov_decrement_trace,
)
from .irc_design import (
    IrcParams,
    SaniController,
    build_irc,
    continuous_irc,
    discrete_k,
    synthesize_params,
)
from .ni_cert import (
    InfeasibilityReport,
    NiCertificate,
    check_dissipation_empirical,
    find_certificate,
    verify_candidate,
    verify_sani_structure,
)
from .sim_analysis import (
    DampingReport,
    FrfCurve,
    Signal,
    Trajectory,
    closed_loop_frf,
    damping_report,
    frf,
    gamma_sweep,
    simulate,
    simulate_coupled,
)
from .state_space import (
    ContinuousStateSpace,
    DiscreteStateSpace,
    dc_gain,
    eval_transfer,
    spectral_radius,
)

__version__ = "0.1.0"
