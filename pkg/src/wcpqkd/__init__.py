"""Weak-coherent-pulse BB84 toolkit.

Models the per-pulse physics of a fibre BB84 link, the secure key rate
against photon-number-splitting and individual attacks, finds the optimal
pulse intensity per fibre length, simulates full sessions at the pulse
level, and post-processes raw keys with Cascade reconciliation and
Toeplitz privacy amplification.
"""
from .link import (
    ChannelParams,
    DetectorParams,
    LinkBudget,
    SourceParams,
    detection_prob,
    link_budget,
    multiphoton_prob,
    pns_boundary_mu,
    qber,
    transmission,
)
from .rates import (
    GainBreakdown,
    RateParams,
    SecurityViolation,
    binary_entropy,
    gain_to_bps,
    pa_fraction,
    secure_gain,
    sifted_gain,
)
from .optimize import (
    EmptyWindow,
    OptimizeConfig,
    RatePoint,
    SecureWindow,
    contour_grid,
    max_secure_length,
    optimize_mu,
    rate_curve,
)
from .simulate import (
    ConfigError,
    DetectionLog,
    EveConfig,
    PulseLog,
    QberEstimate,
    SessionResult,
    SimConfig,
    estimate_qber,
    run_session,
    run_session_with_pns,
    sift,
)
from .postprocess import (
    KeyPipelineReport,
    PaParams,
    ReconciliationReport,
    ResidualErrors,
    cascade_reconcile,
    final_key_length,
    replay_transcript,
    run_pipeline,
    toeplitz_hash,
)

__version__ = "0.1.0"
