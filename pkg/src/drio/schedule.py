"""Hardware-style pulse schedules for subpulse trains.

Each subpulse becomes a ``parametric_gaussian`` instruction occupying a slot
of ``tau`` rounded up to the scheduler resolution ``dt``, with its amplitude
normalised to a declared maximum Rabi rate and quantised to 16 bits.  The
Gaussian is ``exp(-(t - t_c)^2 / sigma^2)`` centred in its slot.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .digitize import SubpulseTrain

VERSION = "1.0"
DEFAULT_DT_NS = 2.0 / 9.0
AMPLITUDE_LEVELS = 2 ** 16 - 1
WINDOW_HALF_WIDTH = 3.0  # sigmas on either side of the centre
_SLACK = 1e-6


class ScheduleError(ValueError):
    pass


@dataclass
class ScheduleDocument:
    dt_ns: float
    max_rabi_rad_per_ns: float
    instructions: list
    metadata: dict = field(default_factory=dict)
    version: str = VERSION

    def to_dict(self):
        return {
            "version": self.version,
            "dt_ns": self.dt_ns,
            "max_rabi_rad_per_ns": self.max_rabi_rad_per_ns,
            "gaussian_convention": "exp(-(t - t0 - duration/2)^2 / sigma^2)",
            "instructions": [dict(i) for i in self.instructions],
            "metadata": dict(self.metadata),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def save(self, path):
        Path(path).write_text(self.to_json())


def _quantise(x):
    return round(x * AMPLITUDE_LEVELS) / AMPLITUDE_LEVELS


def export_schedule(train, dt_ns=DEFAULT_DT_NS, max_rabi=None, channel="d0", protocol_tag=None):
    """Schedule for ``train``; ``max_rabi`` defaults to the largest peak Rabi frequency."""
    if not dt_ns > 0:
        raise ScheduleError("dt_ns must be positive")
    meta = {"protocol_tag": protocol_tag or train.meta.get("protocol", "custom"),
            "order": train.meta.get("order"), "N": train.n_pulses, "total_duration_ns": 0.0,
            "sigma_ns": train.sigma, "tau_ns": train.tau}
    if train.n_pulses == 0:
        return ScheduleDocument(dt_ns, float(max_rabi or 1.0), [], meta)
    peak = float(np.max(train.rabi))
    max_rabi = peak if max_rabi is None else float(max_rabi)
    if not max_rabi > 0:
        raise ScheduleError("max_rabi must be positive")
    if peak > max_rabi * (1.0 + 1e-12):
        raise ScheduleError(f"peak Rabi frequency {peak:.6g} rad/ns exceeds the declared maximum {max_rabi:.6g}")
    if train.start < -1e-12:
        raise ScheduleError(f"train starts at negative time {train.start:.6g} ns")
    slots = math.ceil(train.tau / dt_ns - 1e-9)
    slot = slots * dt_ns
    if 2.0 * WINDOW_HALF_WIDTH * train.sigma > slot * (1.0 + _SLACK):
        raise ScheduleError(f"+-{WINDOW_HALF_WIDTH:g} sigma windows overlap: 6 sigma = "
                            f"{2 * WINDOW_HALF_WIDTH * train.sigma:.6g} ns > slot {slot:.6g} ns")
    first = math.floor(max(train.start, 0.0) / dt_ns + 1e-9)
    instructions = []
    for n, (rabi, phase) in enumerate(zip(train.rabi, train.phases)):
        instructions.append({
            "type": "parametric_gaussian",
            "t0_ns": (first + n * slots) * dt_ns,
            "t0_dt": first + n * slots,
            "duration_dt": slots,
            "sigma_ns": train.sigma,
            "amplitude": _quantise(float(rabi) / max_rabi),
            "phase_rad": float(phase),
            "channel": channel,
        })
    meta["total_duration_ns"] = train.n_pulses * slot
    return ScheduleDocument(dt_ns, max_rabi, instructions, meta)


def parse_schedule(document):
    """Train described by a schedule (dict, JSON text or path)."""
    if isinstance(document, (str, Path)) and not str(document).lstrip().startswith("{"):
        document = Path(document).read_text()
    if isinstance(document, str):
        document = json.loads(document)
    try:
        dt = float(document["dt_ns"])
        max_rabi = float(document["max_rabi_rad_per_ns"])
        ins = list(document["instructions"])
        meta = dict(document.get("metadata") or {})
    except (KeyError, TypeError, ValueError) as exc:
        raise ScheduleError(f"malformed schedule: {exc!r}") from None
    train_meta = {k: meta[k] for k in ("order", "protocol_tag") if meta.get(k) is not None}
    if not ins:
        return SubpulseTrain(float(meta.get("sigma_ns", 1.0)), float(meta.get("tau_ns", 6.0)), [], [], [],
                             meta=train_meta)
    starts = [i["t0_dt"] * dt if "t0_dt" in i else i["t0_ns"] for i in ins]
    if any(b < a for a, b in zip(starts, starts[1:])):
        raise ScheduleError("instruction times must be non-decreasing")
    if any(i.get("type") != "parametric_gaussian" for i in ins):
        raise ScheduleError("only parametric_gaussian instructions are supported")
    sigmas = {float(i["sigma_ns"]) for i in ins}
    widths = {int(i["duration_dt"]) for i in ins}
    if len(sigmas) != 1 or len(widths) != 1:
        raise ScheduleError("instructions must share sigma and duration")
    slot = widths.pop() * dt
    centers = np.asarray(starts) + 0.5 * slot
    return SubpulseTrain(sigmas.pop(), slot, centers,
                         [float(i["amplitude"]) * max_rabi for i in ins],
                         [float(i["phase_rad"]) for i in ins], meta=train_meta)
