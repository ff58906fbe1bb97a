"""Digital robust control of a two-level system.

Continuous robust controls (``control``), their compilation into Gaussian
subpulse trains (``digitize``), propagation models (``propagate``),
amplitude-robustness scans (``robustness``), time-optimal waveform search
(``optimizer``), pulse schedules (``schedule``) and the ``drio`` CLI.
"""
from .control import (THIRD_ORDER, THREE_DIGIT_THIRD_ORDER, TIME_OPTIMAL_THIRD_ORDER, ContinuousControl,
                      RioParams, load_waveform, pi_pulse, rio_third_order, save_waveform)
from .digitize import SubpulseTrain, digitize, effective_control, validate
from .propagate import (ModeTruncation, Trajectory, delta_kick, propagate, propagate_delta_train,
                        propagate_effective, propagate_full, propagate_modes)
from .robustness import RobustnessProfile, ScalingFit, compare, fit_order, scan
from .specfun import ellipj, ellipk

__version__ = "0.1.0"

__all__ = [
    "THIRD_ORDER", "THREE_DIGIT_THIRD_ORDER", "TIME_OPTIMAL_THIRD_ORDER", "ContinuousControl", "RioParams",
    "load_waveform", "pi_pulse", "rio_third_order", "save_waveform", "SubpulseTrain", "digitize",
    "effective_control", "validate", "ModeTruncation", "Trajectory", "delta_kick", "propagate",
    "propagate_delta_train", "propagate_effective", "propagate_full", "propagate_modes",
    "RobustnessProfile", "ScalingFit", "compare", "fit_order", "scan", "ellipj", "ellipk",
]
