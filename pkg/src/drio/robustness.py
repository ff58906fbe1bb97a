"""Amplitude-inhomogeneity scans, robustness-order fits and plateau widths.

A scan multiplies every Rabi amplitude by ``1 + alpha`` (phases untouched),
propagates from ``|1>`` and records the transfer probability ``P(alpha)``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .control import ContinuousControl
from .digitize import SubpulseTrain
from .propagate import PropagationError, propagate

PROTOCOL_TAGS = ("pi_pulse", "drio3", "drio5", "custom")
FLOOR = 1e-12
DEFAULT_WINDOW = (0.01, 0.05)
PLATEAU_THRESHOLD = 1e-2


class ScanError(RuntimeError):
    def __init__(self, alpha, cause):
        super().__init__(f"propagation failed at alpha = {alpha!r}: {cause}")
        self.alpha = alpha


class FitError(ValueError):
    pass


def default_grid(n_uniform=81, n_log=40, lo=1e-3, hi=0.2):
    """Uniform grid on [-1, 1] merged with a symmetric log-spaced grid on ``lo <= |alpha| <= hi``."""
    logs = np.logspace(math.log10(lo), math.log10(hi), n_log)
    grid = np.concatenate([np.linspace(-1.0, 1.0, n_uniform), logs, -logs])
    return np.unique(np.round(grid, 15))


def _check_grid(alphas):
    alphas = np.asarray(alphas, dtype=float).ravel()
    if alphas.size == 0:
        raise ValueError("empty alpha grid")
    if not np.all(np.isfinite(alphas)) or np.any(np.abs(alphas) > 1.0):
        raise ValueError("alpha grid must lie within [-1, 1]")
    return alphas


@dataclass(frozen=True, eq=False)
class RobustnessProfile:
    alphas: np.ndarray
    probabilities: np.ndarray
    protocol_tag: str = "custom"
    model_tag: str = "delta"

    def __post_init__(self):
        a = np.asarray(self.alphas, dtype=float)
        p = np.asarray(self.probabilities, dtype=float)
        if a.shape != p.shape:
            raise ValueError("alphas and probabilities differ in length")
        object.__setattr__(self, "alphas", a)
        object.__setattr__(self, "probabilities", np.clip(p, 0.0, 1.0))

    @property
    def infidelity(self):
        return 1.0 - self.probabilities

    def at(self, alpha):
        idx = np.flatnonzero(np.isclose(self.alphas, alpha, rtol=0, atol=1e-14))
        if idx.size == 0:
            raise KeyError(f"alpha = {alpha} not on the grid")
        return float(self.probabilities[idx[0]])

    def asymmetry(self):
        """Largest ``|P(alpha) - P(-alpha)|`` over mirrored grid points (0 if none)."""
        pos = self.alphas[self.alphas > 0]
        diffs = [abs(self.at(a) - self.at(-a)) for a in pos if np.any(np.isclose(self.alphas, -a, rtol=0, atol=1e-14))]
        return max(diffs, default=0.0)

    def rows(self):
        for a, p in zip(self.alphas, self.probabilities):
            yield float(a), float(p), self.protocol_tag, self.model_tag

    def to_csv(self, path=None):
        return profiles_to_csv([self], path)


def profiles_to_csv(profiles, path=None):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("alpha", "probability", "protocol_tag", "model_tag"))
    for prof in profiles:
        for a, p, tag, model in prof.rows():
            writer.writerow((repr(a), repr(p), tag, model))
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def _delta_probabilities(train, alphas):
    """All scan points at once: kicks vectorised over alpha."""
    areas = np.multiply.outer(1.0 + alphas, train.areas)
    c, s = np.cos(0.5 * areas), np.sin(0.5 * areas)
    e = np.exp(1j * train.phases)
    c1 = np.ones(alphas.shape, dtype=complex)
    c2 = np.zeros(alphas.shape, dtype=complex)
    for n in range(train.n_pulses):
        cn, sn = c[:, n], s[:, n]
        c1, c2 = cn * c1 - 1j * np.conj(e[n]) * sn * c2, -1j * e[n] * sn * c1 + cn * c2
    return np.abs(c2) ** 2


def _scaled(subject, alpha, inhomogeneity):
    if inhomogeneity == "amplitude" or isinstance(subject, SubpulseTrain):
        # interaction-time errors on fixed-phase subpulses scale every area alike
        return subject.scaled(alpha)
    raise ValueError("time inhomogeneity is only defined for subpulse trains")


def scan(subject, alphas=None, model="delta", protocol_tag="custom", tolerance=1e-10,
         max_workers=None, inhomogeneity="amplitude"):
    """Transfer probability versus amplitude deviation.

    ``subject`` is a :class:`SubpulseTrain` (any model tag) or a
    :class:`ContinuousControl` (effective model only).  ODE models may fan out
    over ``max_workers`` threads; results are keyed by grid position, so the
    profile does not depend on evaluation order.
    """
    if inhomogeneity not in ("amplitude", "time"):
        raise ValueError(f"unknown inhomogeneity {inhomogeneity!r}")
    alphas = _check_grid(default_grid() if alphas is None else alphas)
    if isinstance(subject, ContinuousControl):
        if model == "delta":
            model = "effective"
        if inhomogeneity == "time":
            raise ValueError("time inhomogeneity is only defined for subpulse trains")
    if isinstance(subject, SubpulseTrain) and model == "delta":
        return RobustnessProfile(alphas, _delta_probabilities(subject, alphas), protocol_tag, model)

    def point(alpha):
        try:
            return propagate(_scaled(subject, alpha, inhomogeneity), model, tolerance).final_population
        except PropagationError as exc:
            raise ScanError(float(alpha), exc) from exc

    if max_workers and max_workers > 1:
        with ThreadPoolExecutor(max_workers) as pool:
            probs = list(pool.map(point, alphas))
    else:
        probs = [point(a) for a in alphas]
    return RobustnessProfile(alphas, np.array(probs), protocol_tag, model)


@dataclass(frozen=True)
class ScalingFit:
    exponent: float
    window: tuple
    residual: float
    n_points: int
    prefactor: float = math.nan
    floor_limited: bool = False
    residual_threshold: float = 0.1

    @property
    def valid(self):
        return (not self.floor_limited and self.exponent > 0
                and self.residual <= self.residual_threshold)

    def to_dict(self):
        return {"exponent": self.exponent, "window": list(self.window), "residual": self.residual,
                "n_points": self.n_points, "prefactor": self.prefactor,
                "floor_limited": self.floor_limited, "valid": self.valid}


def symmetric_infidelity(profile, window=DEFAULT_WINDOW):
    """``|alpha|`` and ``(1-P(alpha) + 1-P(-alpha))/2`` inside the window (one side if unpaired)."""
    lo, hi = window
    if not 0.0 < lo < hi <= 0.2:
        raise FitError(f"fit window must satisfy 0 < lo < hi <= 0.2, got {window}")
    mags = np.unique(np.abs(profile.alphas[(np.abs(profile.alphas) >= lo) & (np.abs(profile.alphas) <= hi)]))
    inf = []
    for a in mags:
        vals = [1.0 - p for x, p in zip(profile.alphas, profile.probabilities) if abs(abs(x) - a) <= 1e-14]
        inf.append(float(np.mean(vals)))
    return mags, np.array(inf)


def fit_order(profile, window=DEFAULT_WINDOW, residual_threshold=0.1):
    """Least-squares slope of ``log(1-P)`` against ``log|alpha|`` on the window."""
    mags, inf = symmetric_infidelity(profile, window)
    if mags.size < 5:
        raise FitError(f"need at least 5 grid points in {window}, found {mags.size}")
    above = inf >= FLOOR
    floor_limited = not np.all(above)
    x, y = np.log(mags[above]), np.log(inf[above])
    if x.size < 2:
        return ScalingFit(math.nan, tuple(window), math.inf, int(x.size), floor_limited=True,
                          residual_threshold=residual_threshold)
    slope, icpt = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + icpt)) ** 2)))
    return ScalingFit(float(slope), tuple(window), resid, int(x.size), float(math.exp(icpt)),
                      floor_limited, residual_threshold)


def plateau(profile, threshold=PLATEAU_THRESHOLD):
    """Interval around ``alpha = 0`` on which ``1 - P <= threshold``.

    Edges are located by linear interpolation between the last grid point
    inside and the first outside.  Returns ``(lo, hi)``; an edge equal to the
    grid end means the plateau reaches it.
    """
    a, inf = profile.alphas, profile.infidelity
    order = np.argsort(a)
    a, inf = a[order], inf[order]
    i0 = int(np.argmin(np.abs(a)))
    if inf[i0] > threshold:
        return (0.0, 0.0)

    def edge(step):
        i = i0
        while 0 <= i + step < len(a) and inf[i + step] <= threshold:
            i += step
        j = i + step
        if not 0 <= j < len(a):
            return float(a[i])
        frac = (threshold - inf[i]) / (inf[j] - inf[i])
        return float(a[i] + frac * (a[j] - a[i]))

    return edge(-1), edge(+1)


@dataclass(frozen=True)
class Comparison:
    alphas: np.ndarray
    table: dict
    plateaus: dict
    threshold: float

    def half_width(self, tag):
        lo, hi = self.plateaus[tag]
        return min(-lo, hi)

    def to_dict(self):
        return {"threshold": self.threshold,
                "plateaus": {k: {"lo": v[0], "hi": v[1], "half_width": self.half_width(k)}
                             for k, v in self.plateaus.items()}}


def compare(profiles, threshold=PLATEAU_THRESHOLD):
    """Side-by-side probabilities and plateau widths for profiles on a common grid."""
    if not profiles:
        raise ValueError("nothing to compare")
    grid = profiles[0].alphas
    for prof in profiles[1:]:
        if prof.alphas.shape != grid.shape or np.any(prof.alphas != grid):
            raise ValueError("profiles must share the alpha grid")
    table = {p.protocol_tag: p.probabilities for p in profiles}
    plateaus = {p.protocol_tag: plateau(p, threshold) for p in profiles}
    return Comparison(grid, table, plateaus, threshold)


def summary(profiles, window=DEFAULT_WINDOW, threshold=PLATEAU_THRESHOLD):
    """JSON-ready summary: fitted exponent and plateau per profile."""
    comp = compare(profiles, threshold)
    out = {"window": list(window), "threshold": threshold, "protocols": {}}
    for prof in profiles:
        try:
            fit = fit_order(prof, window).to_dict()
        except FitError as exc:
            fit = {"error": str(exc)}
        lo, hi = comp.plateaus[prof.protocol_tag]
        out["protocols"][prof.protocol_tag] = {
            "model": prof.model_tag,
            "fit": fit,
            "plateau": {"lo": lo, "hi": hi, "half_width": comp.half_width(prof.protocol_tag)},
            "infidelity_at_zero": float(1.0 - prof.at(0.0)) if np.any(prof.alphas == 0) else None,
            "asymmetry": prof.asymmetry(),
        }
    return out


def write_summary(profiles, path, **kwargs):
    text = json.dumps(summary(profiles, **kwargs), indent=2, sort_keys=True) + "\n"
    Path(path).write_text(text)
    return text
