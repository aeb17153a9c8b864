"""Modelling, identification and control of an active remote-centre-of-compliance device."""

__version__ = "0.1.0"

from .lti import TransferFunction, StateSpace, cutoff_frequency, freq_response
from .plant import PlantConfig, PlantState, LinearSpring, TwoStageSpring, Environment
from .control import Configuration, HybridLoopConfig, StiffnessController, find_stability_margin_gain
from .sysid import Signal, generate_sweep, iv_identify, nrmse_fit, mse, bandwidth_report

__all__ = [
    "TransferFunction",
    "StateSpace",
    "cutoff_frequency",
    "freq_response",
    "PlantConfig",
    "PlantState",
    "LinearSpring",
    "TwoStageSpring",
    "Environment",
    "Configuration",
    "HybridLoopConfig",
    "StiffnessController",
    "find_stability_margin_gain",
    "Signal",
    "generate_sweep",
    "iv_identify",
    "nrmse_fit",
    "mse",
    "bandwidth_report",
]
