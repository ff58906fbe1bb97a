"""Compile continuous controls into Gaussian subpulse trains and back.

A train is ``N`` subpulses of common width ``sigma``, spaced by ``tau`` and
occupying ``[0, N tau]`` with half-``tau`` margins, each with its own peak Rabi
frequency ``Omega_n`` and constant phase ``phi_n``.  The subpulse area is
``A_n = sqrt(pi) sigma Omega_n``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator

from .control import ContinuousControl, phase_from_detuning, square_envelope

SQRT_PI = math.sqrt(math.pi)
MIN_TAU_OVER_SIGMA = 4.0
MIN_PULSES = 5
SHAPES = ("gaussian", "square")


class TimescaleError(ValueError):
    """sigma << tau << T is violated."""


class TrainError(ValueError):
    pass


def _frozen(values):
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SubpulseTrain:
    sigma: float
    tau: float
    centers: np.ndarray
    rabi: np.ndarray
    phases: np.ndarray
    shape: str = "gaussian"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("centers", "rabi", "phases"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        n = len(self.centers)
        if not (len(self.rabi) == n and len(self.phases) == n):
            raise TrainError("centers, rabi and phases must have equal length")
        if not (self.sigma > 0 and self.tau > 0):
            raise TrainError("sigma and tau must be positive")
        if self.shape not in SHAPES:
            raise TrainError(f"unknown subpulse shape {self.shape!r}")
        if np.any(self.rabi < 0) or not np.all(np.isfinite(self.rabi)):
            raise TrainError("peak Rabi frequencies must be finite and non-negative")
        if n > 1 and np.max(np.abs(np.diff(self.centers) - self.tau)) > 1e-9 * self.tau:
            raise TrainError("pulse centers must be contiguous with spacing tau")

    @property
    def n_pulses(self):
        return len(self.centers)

    @property
    def areas(self):
        return SQRT_PI * self.sigma * self.rabi

    @property
    def total_area(self):
        return float(np.sum(self.areas))

    @property
    def duration(self):
        return self.n_pulses * self.tau

    @property
    def start(self):
        return float(self.centers[0] - 0.5 * self.tau) if self.n_pulses else 0.0

    @property
    def end(self):
        return self.start + self.duration

    @property
    def boundaries(self):
        """Interval edges ``t_{n -+ 1/2}``; ``N + 1`` values."""
        return self.start + self.tau * np.arange(self.n_pulses + 1)

    @property
    def phase_steps(self):
        """``Delta phi_n = phi_n - phi_{n-1}`` for ``n = 1..N-1``."""
        return np.diff(self.phases)

    def scaled(self, alpha):
        return replace(self, rabi=self.rabi * (1.0 + alpha))

    def with_phases(self, phases):
        return replace(self, phases=np.asarray(phases, dtype=float))

    def envelope(self, t, n):
        """Shape of pulse ``n`` at times ``t`` (peak 1)."""
        x = (np.asarray(t, dtype=float) - self.centers[n]) / self.sigma
        if self.shape == "gaussian":
            return np.exp(-x * x)
        return (np.abs(x) <= 0.5 * SQRT_PI).astype(float)

    def to_dict(self):
        return {
            "sigma_ns": self.sigma,
            "tau_ns": self.tau,
            "shape": self.shape,
            "pulses": [{"t_ns": float(t), "omega_rad_per_ns": float(o), "phase_rad": float(p)}
                       for t, o, p in zip(self.centers, self.rabi, self.phases)],
            "meta": dict(self.meta),
        }

    @classmethod
    def from_dict(cls, doc):
        try:
            pulses = doc["pulses"]
            return cls(
                sigma=float(doc["sigma_ns"]),
                tau=float(doc["tau_ns"]),
                centers=[p["t_ns"] for p in pulses],
                rabi=[p["omega_rad_per_ns"] for p in pulses],
                phases=[p["phase_rad"] for p in pulses],
                shape=doc.get("shape", "gaussian"),
                meta=dict(doc.get("meta") or {}),
            )
        except (KeyError, TypeError) as exc:
            raise TrainError(f"malformed train document: {exc!r}") from None

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def check_timescales(n_pulses, tau_over_sigma):
    if n_pulses < MIN_PULSES:
        raise TimescaleError(f"need N >= {MIN_PULSES} pulses for tau << T, got {n_pulses}")
    if tau_over_sigma < MIN_TAU_OVER_SIGMA:
        raise TimescaleError(
            f"need tau/sigma >= {MIN_TAU_OVER_SIGMA} for non-overlapping pulses, got {tau_over_sigma}")


def digitize(control, n_pulses=15, tau_over_sigma=6.0, shape="gaussian"):
    """Sample ``control`` into ``n_pulses`` subpulses.

    ``tau = T/N``, ``sigma = tau/tau_over_sigma``, centers at ``(n + 1/2) tau``;
    peak amplitudes ``Omega_n = tau Omega(t_n) / (sqrt(pi) sigma)`` so that each
    area equals ``tau Omega(t_n)``; phases ``phi_n = phi(t_n)``.
    """
    n_pulses = int(n_pulses)
    check_timescales(n_pulses, tau_over_sigma)
    if control.phase is None:
        raise TrainError("control has no phase; apply phase_from_detuning first")
    tau = control.duration / n_pulses
    sigma = tau / tau_over_sigma
    centers = (np.arange(n_pulses) + 0.5) * tau
    rabi = tau / (SQRT_PI * sigma) * control.rabi(centers)
    phases = np.asarray(control.phase(centers), dtype=float)
    meta = {k: control.meta[k] for k in ("order", "source") if k in control.meta}
    return SubpulseTrain(sigma, tau, centers, rabi, phases, shape=shape, meta=meta)


class _SampledCurve:
    """PCHIP through samples; constant for a single sample."""

    def __init__(self, t, y):
        self.value = float(y[0]) if len(y) == 1 else None
        self.pchip = None if len(y) == 1 else PchipInterpolator(t, y, extrapolate=True)

    def __call__(self, t):
        if self.pchip is None:
            return np.full_like(np.asarray(t, dtype=float), self.value)
        return self.pchip(t)

    def antiderivative(self):
        if self.pchip is None:
            return np.polynomial.Polynomial([0.0, self.value])
        return self.pchip.antiderivative()


def effective_control(train):
    """Continuous model seen by the train at lowest order (resonant mode only).

    ``Omega_eff(t_n) = A_n / tau`` at the pulse centers and
    ``Delta_eff(t_{n-1/2}) = (phi_n - phi_{n-1}) / tau`` at the interior
    boundaries, joined by monotone cubics on ``[0, T]``.
    """
    if train.n_pulses < 2:
        raise TrainError("a single-pulse train has no phase differences")
    offset = train.start
    tau = train.tau
    area_rate = train.areas / tau
    peak = float(np.max(area_rate))
    centers = train.centers - offset
    mids = train.boundaries[1:-1] - offset
    det = _SampledCurve(mids, train.phase_steps / tau)
    if peak > 0 and np.ptp(area_rate) > 0:
        shape = _SampledCurve(centers / train.duration, area_rate / peak)
        envelope = (lambda s: np.clip(shape(s), 0.0, 1.0))
    else:
        envelope = square_envelope
    control = ContinuousControl(peak, train.duration, detuning=det, envelope=envelope,
                                meta={"source": "effective", "order": train.meta.get("order")})
    return phase_from_detuning(control, reference=float(train.phases[0]))


@dataclass(frozen=True)
class ValidityReport:
    second_rwa_margin: float
    timescale_ratios: tuple
    adiabatic_area_ratio: float
    threshold: float
    passed: bool
    reasons: tuple = ()

    def to_dict(self):
        return {
            "second_rwa_margin": self.second_rwa_margin,
            "tau_over_sigma": self.timescale_ratios[0],
            "T_over_tau": self.timescale_ratios[1],
            "adiabatic_area_ratio": self.adiabatic_area_ratio,
            "threshold": self.threshold,
            "pass": self.passed,
            "reasons": list(self.reasons),
        }


def second_rwa_margins(train):
    """Per-pulse ``sqrt|4 pi^2 - Delta phi_n^2| / A_n`` (``Delta phi_0 = 0``)."""
    dphi = np.concatenate([[0.0], train.phase_steps])
    num = np.sqrt(np.abs(4.0 * math.pi ** 2 - dphi ** 2))
    with np.errstate(divide="ignore"):
        return np.where(train.areas > 0, num / np.where(train.areas > 0, train.areas, 1.0), np.inf)


def validate(train, threshold=5.0):
    margins = second_rwa_margins(train)
    margin = float(np.min(margins)) if len(margins) else math.inf
    ratios = (train.tau / train.sigma, float(train.n_pulses))
    reasons = []
    if margin < threshold:
        reasons.append(f"second-RWA margin {margin:.3g} below {threshold}")
    if ratios[0] < MIN_TAU_OVER_SIGMA:
        reasons.append(f"tau/sigma = {ratios[0]:.3g} below {MIN_TAU_OVER_SIGMA}")
    if ratios[1] < MIN_PULSES:
        reasons.append(f"T/tau = {ratios[1]:.0f} below {MIN_PULSES}")
    # int A(t) dt / tau with A sampled once per tau
    adiabatic = train.total_area
    return ValidityReport(margin, ratios, adiabatic, threshold, not reasons, tuple(reasons))


def taylor_phase_correction(train, control, order=0, step=None):
    """Correct the sampled phases for the cubic term of the phase-step expansion.

    Plain sampling realises ``Delta phi = tau phi' + (tau/2)^3 phi'''/3 + ...``.
    ``order=0`` keeps that; ``order=1`` subtracts the cubic term (with
    ``phi''' = Delta''`` by central differences) so the phase steps follow
    ``tau Delta`` through O(tau^3).
    """
    if order not in (0, 1):
        raise ValueError(f"correction order must be 0 or 1, got {order!r}")
    if order == 0 or train.n_pulses < 2:
        return train
    h = step if step is not None else 1e-3 * control.duration
    mids = train.boundaries[1:-1] - train.start
    d = control.detuning
    third = (np.asarray(d(mids + h)) - 2.0 * np.asarray(d(mids)) + np.asarray(d(mids - h))) / (h * h)
    steps = train.phase_steps - (train.tau / 2.0) ** 3 / 3.0 * third
    phases = train.phases[0] + np.concatenate([[0.0], np.cumsum(steps)])
    return train.with_phases(phases)
