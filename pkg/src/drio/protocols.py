"""Named protocols: the digital pi pulse and the third- and fifth-order controls.

``drio3`` / ``drio5`` keep the rounded durations ``1.86 pi / Omega`` and
``2.71 pi / Omega`` exactly; ``drio3-opt`` / ``drio5-opt`` are the exact
time-optimal solutions (``1.8588 pi`` and ``2.7105 pi``).
"""
from __future__ import annotations

from dataclasses import replace
from functools import lru_cache
from importlib import resources

from .control import TIME_OPTIMAL_THIRD_ORDER, elliptic_control, load_waveform, pi_pulse, rescaled, rio_third_order
from .digitize import digitize

PROFILE_TAGS = {"pi": "pi_pulse", "drio3": "drio3", "drio5": "drio5", "drio3-opt": "custom",
                "drio5-opt": "custom"}
DATA_FILES = {"drio5": "fifth_order.json", "drio5-opt": "fifth_order_min.json"}
NAMES = tuple(PROFILE_TAGS)


class UnknownProtocol(KeyError):
    pass


@lru_cache(maxsize=None)
def _packaged(name):
    text = resources.files("drio").joinpath("data", DATA_FILES[name]).read_text()
    return load_waveform(text)


def protocol_control(name, rabi_amplitude=None, duration=None):
    """Continuous control of a named protocol; give one of ``rabi_amplitude`` or ``duration``."""
    if rabi_amplitude is None and duration is None:
        rabi_amplitude = 1.0
    if name == "pi":
        return pi_pulse(rabi_amplitude, duration)
    if name == "drio3":
        if duration is None:
            return rio_third_order(rabi_amplitude)
        return rescaled(rio_third_order(1.0), duration=duration)
    if name == "drio3-opt":
        return elliptic_control(TIME_OPTIMAL_THIRD_ORDER, rabi_amplitude, duration, order=3,
                                source="time_optimal_third_order")
    if name in DATA_FILES:
        return rescaled(_packaged(name), rabi_amplitude, duration)
    raise UnknownProtocol(f"unknown protocol {name!r}; choose from {', '.join(NAMES)}")


def protocol_train(name, rabi_amplitude=None, duration=None, n_pulses=15, tau_over_sigma=6.0,
                   shape="gaussian"):
    train = digitize(protocol_control(name, rabi_amplitude, duration), n_pulses, tau_over_sigma, shape)
    return replace(train, meta={**train.meta, "protocol": name})


def profile_tag(name):
    return PROFILE_TAGS.get(name, "custom")
