"""Continuous-time control laws in the resonant frame.

A control is a constant-or-shaped Rabi frequency ``Omega(t) = Omega_0 Pi(t/T)``
together with a detuning ``Delta(t)`` and its running phase
``phi(t) = phi(0) + int_0^t Delta``.  Controls live on ``[0, T]``.

Units are whatever the caller uses consistently; waveform files are written in
nanoseconds and rad/ns.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
from scipy.interpolate import PchipInterpolator

from .specfun import ellipk, jacobi_cn

WAVEFORM_UNITS = {"time": "ns", "angular_frequency": "rad/ns"}


class WaveformError(ValueError):
    pass


def square_envelope(s):
    return np.ones_like(np.asarray(s, dtype=float))


def zero_detuning(t):
    return np.zeros_like(np.asarray(t, dtype=float))


@dataclass(frozen=True)
class ContinuousControl:
    """Resonant-frame control ``(Omega(t), Delta(t), phi(t))`` on ``[0, duration]``.

    ``rabi_amplitude`` is the peak Rabi frequency ``Omega_0``; the time
    dependence of the coupling is carried by ``envelope``, a shape on
    ``s = t / duration`` with values in ``[0, 1]``.  ``phase`` is ``None``
    until :func:`phase_from_detuning` has been applied.
    """

    rabi_amplitude: float
    duration: float
    detuning: Callable = zero_detuning
    envelope: Callable = square_envelope
    phase: Callable | None = None
    meta: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if not self.duration > 0:
            raise WaveformError(f"duration must be positive, got {self.duration!r}")
        if self.rabi_amplitude < 0:
            raise WaveformError("rabi_amplitude must be non-negative")

    def rabi(self, t):
        t = np.asarray(t, dtype=float)
        return self.rabi_amplitude * self.envelope(t / self.duration)

    @property
    def area(self):
        """Pulse area ``int_0^T Omega(t) dt``."""
        if self.envelope is square_envelope:
            return self.rabi_amplitude * self.duration
        x, w = np.polynomial.legendre.leggauss(64)
        t = 0.5 * self.duration * (x + 1.0)
        return 0.5 * self.duration * float(np.dot(w, self.rabi(t)))

    @property
    def area_multiple(self):
        return self.area / math.pi

    def scaled(self, alpha):
        """Amplitude inhomogeneity ``Omega -> Omega (1 + alpha)``; phases untouched."""
        return replace(self, rabi_amplitude=self.rabi_amplitude * (1.0 + alpha))

    def times(self, n=401):
        return np.linspace(0.0, self.duration, n)


@dataclass(frozen=True)
class RioParams:
    """Constants of ``Delta(t) = Delta_0 cn(omega t + K(m), m)`` relative to ``Omega``."""

    m: float
    omega_over_rabi: float
    delta0_over_rabi: float
    area_multiple: float  # T * Omega / pi


# Three-digit constants.  With these the continuous transfer is incomplete at
# the 2e-6 level.
THREE_DIGIT_THIRD_ORDER = RioParams(m=0.235, omega_over_rabi=1.149, delta0_over_rabi=1.114,
                                    area_multiple=1.86)

# m = 0.235 and T*Omega = 1.86 pi held fixed; omega and Delta_0 re-solved for
# complete transfer (drio.optimizer.solve_elliptic_at_duration).  The residual
# first derivative of c1 leaves d^3(1-P) ~ 0.1 at alpha = 0.
THIRD_ORDER = RioParams(m=0.235, omega_over_rabi=1.1484576138848863,
                        delta0_over_rabi=1.113164010284226, area_multiple=1.86)

# Odd about mid-pulse (T*Omega = 4 K(m) / omega) with c1 = c1' = 0: exactly
# third order.  Over the symmetric family T*Omega is stationary at m ~ 0.235.
TIME_OPTIMAL_THIRD_ORDER = RioParams(m=0.235, omega_over_rabi=1.149191842819282,
                                     delta0_over_rabi=1.1138764344325731,
                                     area_multiple=1.8588116293841543)


class CumulativeIntegral:
    """``t -> reference + int_0^t f`` by composite Gauss-Legendre.

    The panel count is doubled until the total changes by less than ``rtol``
    (relative to ``int |f|``), then frozen; evaluation inside a panel uses the
    same rule on the partial interval.
    """

    def __init__(self, func, duration, reference=0.0, rtol=1e-10, degree=12, max_panels=4096):
        self.func = func
        self.duration = float(duration)
        self.reference = float(reference)
        self.nodes, self.weights = np.polynomial.legendre.leggauss(degree)
        panels = 8
        totals = self._panel_integrals(panels)
        scale = float(np.sum(self._panel_integrals(16, absolute=True)))
        while True:
            finer = self._panel_integrals(2 * panels)
            change = abs(finer.sum() - totals.sum())
            panels *= 2
            totals = finer
            if change <= rtol * scale or scale == 0.0 or panels >= max_panels:
                break
        self.error_estimate = change
        self.edges = np.linspace(0.0, self.duration, panels + 1)
        self.cumulative = np.concatenate([[0.0], np.cumsum(totals)])

    def _panel_integrals(self, panels, absolute=False):
        edges = np.linspace(0.0, self.duration, panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        pts = mid[:, None] + half[:, None] * self.nodes[None, :]
        vals = np.asarray(self.func(pts.ravel()), dtype=float).reshape(pts.shape)
        if absolute:
            vals = np.abs(vals)
        return half * (vals @ self.weights)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        flat = t.ravel()
        idx = np.clip(np.searchsorted(self.edges, flat, side="right") - 1, 0, len(self.edges) - 2)
        left = self.edges[idx]
        half = 0.5 * (flat - left)
        pts = (left + half)[:, None] + half[:, None] * self.nodes[None, :]
        vals = np.asarray(self.func(pts.ravel()), dtype=float).reshape(pts.shape)
        partial = half * (vals @ self.weights)
        out = self.reference + self.cumulative[idx] + partial
        return out.reshape(t.shape) if t.shape else float(out[0])


class _Antiderivative:
    def __init__(self, poly, reference):
        self.poly = poly.antiderivative()
        self.offset = reference - float(self.poly(0.0))

    def __call__(self, t):
        out = self.poly(np.asarray(t, dtype=float)) + self.offset
        return out if np.ndim(out) else float(out)


def phase_from_detuning(control, reference=0.0, rtol=1e-10):
    """Populate ``control.phase`` with ``phi(t) = reference + int_0^t Delta``.

    Lowest-order inversion of the digital phase/detuning relation
    (``Delta ~ phi'``).  Piecewise-polynomial detunings are integrated exactly.
    """
    det = control.detuning
    if hasattr(det, "antiderivative"):
        phase = _Antiderivative(det, reference)
    else:
        phase = CumulativeIntegral(det, control.duration, reference=reference, rtol=rtol)
    return replace(control, phase=phase)


# --- analytic families ---------------------------------------------------------

class EllipticDetuning:
    """``Delta_0 cn(omega t + K(m), m)``, vectorised."""

    def __init__(self, m, omega, delta0):
        self.m, self.omega, self.delta0 = float(m), float(omega), float(delta0)
        self.quarter_period = ellipk(self.m)

    def __call__(self, t):
        return self.delta0 * jacobi_cn(self.omega * np.asarray(t, dtype=float) + self.quarter_period, self.m)


class FourierDetuning:
    """``Omega sum_k (a_k sin(2 pi k t/T) + b_k cos(2 pi k t/T))``.

    Sine terms are odd about mid-pulse; cosine terms (optional) break that symmetry.
    """

    def __init__(self, rabi, duration, sine, cosine=()):
        self.rabi = float(rabi)
        self.duration = float(duration)
        self.sine = np.asarray(sine, dtype=float)
        self.cosine = np.asarray(cosine, dtype=float)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        x = 2.0 * np.pi * t[..., None] / self.duration
        out = np.sin(x * np.arange(1, len(self.sine) + 1)) @ self.sine
        if len(self.cosine):
            out = out + np.cos(x * np.arange(1, len(self.cosine) + 1)) @ self.cosine
        return self.rabi * out


class ChebyshevDetuning:
    """``Omega sum_j c_j T_j(2t/T - 1)``; odd ``j`` only gives a detuning odd about mid-pulse."""

    def __init__(self, rabi, duration, coefficients):
        self.rabi = float(rabi)
        self.duration = float(duration)
        self.coefficients = np.asarray(coefficients, dtype=float)

    def __call__(self, t):
        x = 2.0 * np.asarray(t, dtype=float) / self.duration - 1.0
        return self.rabi * np.polynomial.chebyshev.chebval(x, self.coefficients)


def _resolve_scale(area_multiple, rabi_amplitude, duration):
    if (rabi_amplitude is None) == (duration is None):
        raise ValueError("give exactly one of rabi_amplitude or duration")
    if rabi_amplitude is None:
        if not duration > 0:
            raise WaveformError("duration must be positive")
        rabi_amplitude = area_multiple * math.pi / duration
    if not rabi_amplitude > 0:
        raise ValueError("rabi_amplitude must be positive")
    return float(rabi_amplitude), area_multiple * math.pi / rabi_amplitude


def elliptic_control(params, rabi_amplitude=None, duration=None, order=3, source="elliptic"):
    rabi, T = _resolve_scale(params.area_multiple, rabi_amplitude, duration)
    det = EllipticDetuning(params.m, params.omega_over_rabi * rabi, params.delta0_over_rabi * rabi)
    ansatz = {"type": "jacobi_cn", "m": params.m, "omega_over_rabi": params.omega_over_rabi,
              "delta0_over_rabi": params.delta0_over_rabi}
    control = ContinuousControl(rabi, T, detuning=det,
                                meta={"order": order, "source": source, "ansatz": ansatz})
    return phase_from_detuning(control)


def rio_third_order(rabi_amplitude, params=THIRD_ORDER):
    """Third-order RIO control: constant ``Omega``, cn-shaped detuning, ``T = 1.86 pi / Omega``."""
    if not rabi_amplitude > 0:
        raise ValueError("rabi_amplitude must be positive")
    return elliptic_control(params, rabi_amplitude=rabi_amplitude, order=3, source="rio_third_order")


def fourier_control(sine, area_multiple, rabi_amplitude=None, duration=None, cosine=(),
                    order=None, source="fourier"):
    rabi, T = _resolve_scale(area_multiple, rabi_amplitude, duration)
    det = FourierDetuning(rabi, T, sine, cosine)
    ansatz = {"type": "fourier", "sine_over_rabi": [float(v) for v in sine],
              "cosine_over_rabi": [float(v) for v in cosine]}
    control = ContinuousControl(rabi, T, detuning=det,
                                meta={"order": order, "source": source, "ansatz": ansatz})
    return phase_from_detuning(control)


def chebyshev_control(coefficients, area_multiple, rabi_amplitude=None, duration=None, order=None,
                      source="chebyshev"):
    rabi, T = _resolve_scale(area_multiple, rabi_amplitude, duration)
    det = ChebyshevDetuning(rabi, T, coefficients)
    ansatz = {"type": "chebyshev", "coefficients_over_rabi": [float(v) for v in coefficients]}
    control = ContinuousControl(rabi, T, detuning=det,
                                meta={"order": order, "source": source, "ansatz": ansatz})
    return phase_from_detuning(control)


def pi_pulse(rabi_amplitude=None, duration=None):
    rabi, T = _resolve_scale(1.0, rabi_amplitude, duration)
    control = ContinuousControl(rabi, T, meta={"order": 1, "source": "pi_pulse",
                                               "ansatz": {"type": "constant", "delta_over_rabi": 0.0}})
    return phase_from_detuning(control)


def from_ansatz(ansatz, area_multiple, rabi_amplitude=None, duration=None, order=None, source="file"):
    kind = ansatz.get("type")
    try:
        if kind == "jacobi_cn":
            params = RioParams(ansatz["m"], ansatz["omega_over_rabi"], ansatz["delta0_over_rabi"],
                               area_multiple)
            return elliptic_control(params, rabi_amplitude, duration, order=order, source=source)
        if kind == "fourier":
            return fourier_control(ansatz["sine_over_rabi"], area_multiple, rabi_amplitude, duration,
                                   cosine=ansatz.get("cosine_over_rabi", ()), order=order, source=source)
        if kind == "chebyshev":
            return chebyshev_control(ansatz["coefficients_over_rabi"], area_multiple, rabi_amplitude,
                                     duration, order=order, source=source)
        if kind == "constant":
            rabi, T = _resolve_scale(area_multiple, rabi_amplitude, duration)
            d = float(ansatz.get("delta_over_rabi", 0.0)) * rabi
            control = ContinuousControl(rabi, T, detuning=lambda t: np.full_like(np.asarray(t, float), d),
                                        meta={"order": order, "source": source, "ansatz": dict(ansatz)})
            return phase_from_detuning(control)
    except KeyError as exc:
        raise WaveformError(f"ansatz {kind!r} is missing {exc}") from None
    raise WaveformError(f"unknown ansatz type {kind!r}")


def rescaled(control, rabi_amplitude=None, duration=None):
    """Same dimensionless control (fixed ``T * Omega``) at a new amplitude or duration."""
    ansatz = control.meta.get("ansatz")
    if ansatz is not None:
        return from_ansatz(ansatz, control.area_multiple, rabi_amplitude, duration,
                           order=control.meta.get("order"), source=control.meta.get("source", "file"))
    if (rabi_amplitude is None) == (duration is None):
        raise ValueError("give exactly one of rabi_amplitude or duration")
    factor = control.duration / duration if duration is not None else rabi_amplitude / control.rabi_amplitude
    det = control.detuning
    new = ContinuousControl(control.rabi_amplitude * factor, control.duration / factor,
                            detuning=lambda t: factor * det(np.asarray(t, dtype=float) * factor),
                            envelope=control.envelope, meta=dict(control.meta))
    return phase_from_detuning(new)


# --- waveform files --------------------------------------------------------------

def waveform_document(control, n_samples=1001):
    t = control.times(n_samples)
    doc = {
        "duration": control.duration,
        "rabi_amplitude": control.rabi_amplitude,
        "time_grid": t.tolist(),
        "detuning": np.asarray(control.detuning(t), dtype=float).tolist(),
        "meta": {"order": control.meta.get("order"), "source": control.meta.get("source", "")},
        "units": dict(WAVEFORM_UNITS),
    }
    if control.envelope is not square_envelope:
        doc["envelope"] = np.asarray(control.envelope(t / control.duration), dtype=float).tolist()
    if "ansatz" in control.meta:
        doc["ansatz"] = control.meta["ansatz"]
    return doc


def save_waveform(control, path, n_samples=1001):
    doc = waveform_document(control, n_samples)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")
    return doc


def load_waveform(document):
    """Build a :class:`ContinuousControl` from a waveform document (dict, JSON path or string).

    An ``ansatz`` block, when present, is evaluated exactly; otherwise the
    detuning samples are joined by monotone cubic (PCHIP) interpolation.
    """
    if isinstance(document, (str, Path)):
        text = str(document)
        if isinstance(document, Path) or not text.lstrip().startswith("{"):
            try:
                text = Path(document).read_text()
            except OSError as exc:
                raise WaveformError(f"cannot read waveform file: {exc}") from None
        try:
            document = json.loads(text)
        except json.JSONDecodeError as exc:
            raise WaveformError(f"waveform is not valid JSON: {exc}") from None
    if not isinstance(document, Mapping):
        raise WaveformError("waveform document must be a JSON object")
    for key in ("duration", "rabi_amplitude"):
        if key not in document:
            raise WaveformError(f"waveform document is missing {key!r}")
    duration = float(document["duration"])
    rabi = float(document["rabi_amplitude"])
    if not duration > 0:
        raise WaveformError(f"duration must be positive, got {duration}")
    meta = dict(document.get("meta") or {})
    order, source = meta.get("order"), meta.get("source", "file")

    if "ansatz" in document and "envelope" not in document:
        return from_ansatz(document["ansatz"], rabi * duration / math.pi, rabi_amplitude=rabi,
                           order=order, source=source)

    if "time_grid" not in document or "detuning" not in document:
        raise WaveformError("waveform document needs time_grid and detuning samples or an ansatz")
    t = np.asarray(document["time_grid"], dtype=float)
    d = np.asarray(document["detuning"], dtype=float)
    if t.ndim != 1 or t.shape != d.shape or len(t) < 2:
        raise WaveformError("time_grid and detuning must be equal-length 1-d arrays (>= 2 samples)")
    if np.any(np.diff(t) <= 0):
        raise WaveformError("time_grid must be strictly increasing")
    if not np.all(np.isfinite(d)):
        raise WaveformError("detuning samples must be finite")
    if abs(t[0]) > 1e-9 * duration or abs(t[-1] - duration) > 1e-9 * duration:
        raise WaveformError("time_grid must span [0, duration]")
    detuning = PchipInterpolator(t, d, extrapolate=True)
    envelope = square_envelope
    if "envelope" in document:
        env = np.asarray(document["envelope"], dtype=float)
        if env.shape != t.shape or np.any(env < 0) or np.any(env > 1 + 1e-12):
            raise WaveformError("envelope samples must lie in [0, 1] on the time grid")
        envelope = PchipInterpolator(t / duration, env, extrapolate=True)
    control = ContinuousControl(rabi, duration, detuning=detuning, envelope=envelope,
                                meta={"order": order, "source": source})
    return phase_from_detuning(control)
