"""Two-level dynamics for digital and continuous controls.

Models, from exact to coarse-grained:

``delta``      each subpulse collapsed to an instantaneous SU(2) rotation;
``full``       Schroedinger equation with the actual Gaussian envelopes;
``modes:k``    Dirac-comb expansion of the kicked Hamiltonian keeping |k| <= k_max
               harmonics of the repetition frequency (transformed frame);
``effective``  the resonant (k = 0) continuous Hamiltonian
               ``H = 1/2 [[-Delta, Omega], [Omega, Delta]]``.

States are ``(c1, c2)`` amplitudes in the bare basis; transfer is ``|c2|^2``
starting from ``|1> = (1, 0)``.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp

from .digitize import effective_control

log = logging.getLogger(__name__)

GROUND = np.array([1.0 + 0j, 0.0 + 0j])
TOLERANCE_RANGE = (1e-12, 1e-6)
CSV_COLUMNS = ("time_ns", "pop_1", "pop_2", "re_c1", "im_c1", "re_c2", "im_c2", "model_tag")


class PropagationError(RuntimeError):
    def __init__(self, message, time=None):
        super().__init__(message if time is None else f"{message} (at t = {time:.6g})")
        self.time = time


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    model: str

    @property
    def populations(self):
        return np.abs(self.states) ** 2

    @property
    def final_state(self):
        return self.states[-1]

    @property
    def final_population(self):
        """Population of ``|2>`` at the end."""
        return float(np.abs(self.states[-1, 1]) ** 2)

    @property
    def norm_deviation(self):
        return float(np.max(np.abs(np.sum(self.populations, axis=1) - 1.0)))

    def rows(self):
        pops = self.populations
        for t, (c1, c2), (p1, p2) in zip(self.times, self.states, pops):
            yield (float(t), float(p1), float(p2), c1.real, c1.imag, c2.real, c2.imag, self.model)

    def to_csv(self, path=None):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in self.rows():
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def _initial(initial):
    psi = GROUND.copy() if initial is None else np.asarray(initial, dtype=complex).copy()
    if psi.shape != (2,):
        raise ValueError("initial state must have two amplitudes")
    if abs(np.vdot(psi, psi).real - 1.0) > 1e-12:
        raise ValueError("initial state must be normalised")
    return psi


def _check_tolerance(tolerance):
    lo, hi = TOLERANCE_RANGE
    if not lo <= tolerance <= hi:
        raise ValueError(f"tolerance must lie in [{lo:g}, {hi:g}], got {tolerance!r}")


def _report_norm(traj, tolerance):
    dev = traj.norm_deviation
    if dev > 10 * tolerance:
        log.warning("%s propagation: norm deviates from 1 by %.3g", traj.model, dev)
    return traj


# --- delta kicks -----------------------------------------------------------------

def delta_kick(area, phase):
    """Propagator of a resonant kick of area ``A`` and phase ``phi`` (unit determinant)."""
    c, s = math.cos(0.5 * area), math.sin(0.5 * area)
    return np.array([[c, -1j * np.exp(-1j * phase) * s],
                     [-1j * np.exp(1j * phase) * s, c]])


def kicks(areas, phases):
    """Stack of kick propagators, shape ``(N, 2, 2)``."""
    areas = np.asarray(areas, dtype=float)
    phases = np.asarray(phases, dtype=float)
    c, s = np.cos(0.5 * areas), np.sin(0.5 * areas)
    out = np.empty(areas.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = c
    out[..., 1, 1] = c
    out[..., 0, 1] = -1j * np.exp(-1j * phases) * s
    out[..., 1, 0] = -1j * np.exp(1j * phases) * s
    return out


def train_propagator(train):
    """Ordered product of all kicks (latest on the left)."""
    u = np.eye(2, dtype=complex)
    for k in kicks(train.areas, train.phases):
        u = k @ u
    return u


def propagate_delta_train(train, initial=None):
    """State at the start of the train and after each kick (at ``t_{n+1/2}``)."""
    psi = _initial(initial)
    states = [psi]
    for k in kicks(train.areas, train.phases):
        psi = k @ psi
        states.append(psi)
    return Trajectory(train.boundaries, np.array(states), "delta")


def propagate_delta_frame(train, initial=None):
    """Delta model in the frame that absorbs the pulse phases.

    Couplings become real kicks at ``t_n``; the phase steps act as diagonal
    kicks ``diag(e^{i dphi/2}, e^{-i dphi/2})`` at ``t_{n-1/2}``.  Populations
    coincide with :func:`propagate_delta_train`.
    """
    psi = _initial(initial)
    states = [psi]
    steps = np.concatenate([[0.0], train.phase_steps])
    for k, dphi in zip(kicks(train.areas, np.zeros(train.n_pulses)), steps):
        psi = np.array([np.exp(0.5j * dphi) * psi[0], np.exp(-0.5j * dphi) * psi[1]])
        psi = k @ psi
        states.append(psi)
    return Trajectory(train.boundaries, np.array(states), "delta_frame")


# --- ODE models ----------------------------------------------------------------------

def _integrate(rhs, t0, t1, psi, tolerance, max_step=np.inf, t_eval=None):
    sol = solve_ivp(rhs, (t0, t1), psi, method="DOP853", rtol=tolerance, atol=tolerance,
                    max_step=max_step, t_eval=t_eval)
    if sol.status != 0:
        t_fail = float(sol.t[-1]) if len(sol.t) else t0
        raise PropagationError(f"integration failed: {sol.message}", t_fail)
    return sol


def propagate_full(train, initial=None, tolerance=1e-10, truncate=False):
    """Integrate the Schroedinger equation of the Gaussian train itself.

    By default every pulse keeps its full Gaussian tails (neighbours overlap);
    ``truncate=True`` switches each pulse off outside its own interval.  States
    are recorded at the interval boundaries, plus at the ends of the padding
    used to capture the outer tails.
    """
    _check_tolerance(tolerance)
    psi = _initial(initial)
    n = train.n_pulses
    if n == 0:
        return Trajectory(np.array([0.0]), psi[None, :], "full")
    sigma = train.sigma
    amps = train.rabi * np.exp(1j * train.phases)
    centers = train.centers
    if train.shape == "gaussian":
        shape = (lambda x: np.exp(-x * x))
        reach = 8.0 * sigma
    else:
        shape = (lambda x: (np.abs(x) <= 0.5 * math.sqrt(math.pi)).astype(float))
        reach = sigma
    pad = 0.0 if truncate else max(0.0, reach - 0.5 * train.tau)

    def coupling(t, active=None):
        if active is not None:
            return amps[active] * shape((t - centers[active]) / sigma)
        return np.dot(amps, shape((t - centers) / sigma))

    def make_rhs(active):
        def rhs(t, y):
            g = coupling(t, active)
            return np.array([-0.5j * np.conj(g) * y[1], -0.5j * g * y[0]])
        return rhs

    edges = train.boundaries
    times, states = [], []
    t_prev = edges[0] - pad
    if pad:
        times.append(t_prev)
        states.append(psi)
    segments = [(edges[0] - pad, edges[0], None)] if pad else []
    segments += [(edges[i], edges[i + 1], i if truncate else None) for i in range(n)]
    if pad:
        segments.append((edges[-1], edges[-1] + pad, None))
    times.append(edges[0])
    if not pad:
        states.append(psi)
    for k, (a, b, active) in enumerate(segments):
        sol = _integrate(make_rhs(active), a, b, psi, tolerance, max_step=0.5 * sigma)
        psi = sol.y[:, -1]
        if pad and k == 0:
            states.append(psi)
            continue
        times.append(b)
        states.append(psi)
    traj = Trajectory(np.array(times), np.array(states), "full")
    return _report_norm(traj, tolerance)


def effective_hamiltonian_rhs(control):
    rabi, det = control.rabi, control.detuning

    def rhs(t, y):
        om = float(rabi(t))
        d = float(det(t))
        return np.array([-0.5j * (-d * y[0] + om * y[1]), -0.5j * (om * y[0] + d * y[1])])
    return rhs


def propagate_effective(control, initial=None, tolerance=1e-10, t_eval=None):
    """Integrate ``H = 1/2 [[-Delta, Omega], [Omega, Delta]]`` over ``[0, T]``."""
    _check_tolerance(tolerance)
    psi = _initial(initial)
    if t_eval is None:
        t_eval = control.times(201)
    sol = _integrate(effective_hamiltonian_rhs(control), 0.0, control.duration, psi, tolerance,
                     t_eval=np.asarray(t_eval, dtype=float))
    traj = Trajectory(sol.t, sol.y.T, "effective")
    return _report_norm(traj, tolerance)


@dataclass(frozen=True)
class ModeTruncation:
    """Keep the Dirac-comb harmonics ``|k| <= k_max`` of the repetition rate ``2 pi / tau``."""

    k_max: int
    tau: float

    def __post_init__(self):
        if self.k_max < 0:
            raise ValueError("k_max must be non-negative")

    @property
    def gamma(self):
        return 2.0 * math.pi / self.tau

    def comb(self, x):
        """Truncated comb ``sum_{|k|<=k_max} e^{i k gamma x}`` (real: a Dirichlet kernel)."""
        x = np.asarray(x, dtype=float)
        k = np.arange(1, self.k_max + 1)
        return 1.0 + 2.0 * np.cos(self.gamma * np.multiply.outer(x, k)).sum(axis=-1)


def propagate_modes(train, truncation, initial=None, tolerance=1e-10):
    """Transformed-frame Hamiltonian with ``|k| <= k_max`` comb modes.

    ``H = 1/(2 tau) sum_k [[-(-1)^k dphi(t), A(t)], [A(t), (-1)^k dphi(t)]] e^{i k gamma t}``
    with ``A`` and ``dphi`` the same interpolants as :func:`drio.digitize.effective_control`,
    so ``k_max = 0`` is exactly the effective model.  Time runs over ``[0, T]``
    measured from the train start.
    """
    _check_tolerance(tolerance)
    psi = _initial(initial)
    eff = effective_control(train)
    tau = train.tau
    rabi, det = eff.rabi, eff.detuning
    first = 0.5 * tau
    comb = truncation.comb

    def rhs(t, y):
        # (-1)^k e^{ik gamma (t - t0)} = e^{ik gamma (t - t0 + tau/2)}
        om = float(rabi(t)) * float(comb(t - first))
        d = float(det(t)) * float(comb(t - first + 0.5 * tau))
        return np.array([-0.5j * (-d * y[0] + om * y[1]), -0.5j * (om * y[0] + d * y[1])])

    max_step = tau / (4.0 * (2 * truncation.k_max + 1))
    t_eval = train.boundaries - train.start
    sol = _integrate(rhs, 0.0, train.duration, psi, tolerance, max_step=max_step, t_eval=t_eval)
    traj = Trajectory(sol.t + train.start, sol.y.T, f"modes:{truncation.k_max}")
    return _report_norm(traj, tolerance)


def propagate(subject, model="delta", tolerance=1e-10, initial=None):
    """Dispatch on a model tag: ``delta``, ``full``, ``effective`` or ``modes:<k>``."""
    from .control import ContinuousControl

    if isinstance(subject, ContinuousControl):
        if model != "effective":
            raise ValueError(f"a continuous control only supports the effective model, not {model!r}")
        return propagate_effective(subject, initial, tolerance)
    if model == "delta":
        return propagate_delta_train(subject, initial)
    if model == "full":
        return propagate_full(subject, initial, tolerance)
    if model == "effective":
        return propagate_effective(effective_control(subject), initial, tolerance)
    if model.startswith("modes:"):
        try:
            k = int(model.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"bad mode count in {model!r}") from None
        return propagate_modes(subject, ModeTruncation(k, subject.tau), initial, tolerance)
    raise ValueError(f"unknown model tag {model!r}")
