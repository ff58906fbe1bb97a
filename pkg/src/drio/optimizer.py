"""Time-optimal robust controls by direct constrained search.

Controls have constant amplitude ``Omega`` and a detuning expanded in a small
basis.  With ``c1(alpha)`` the amplitude left in ``|1>`` after the pulse at
amplitude ``Omega (1 + alpha)``, the infidelity is ``|c1|^2``.  Robustness of
order ``2q + 1`` means ``c1^{(j)}(0) = 0`` for ``j <= q``, which makes every
``d^k(1-P)/d alpha^k`` vanish at ``alpha = 0`` for ``k <= 2q + 1``.

Inside the search ``c1`` comes from a fixed-grid fourth-order Magnus
propagator evaluated on a small alpha stencil at once; its Taylor
coefficients are read off an interpolating polynomial.  Accepted controls are
re-checked with the adaptive effective-model integrator by
:func:`constraint_residuals`.
"""
from __future__ import annotations

import logging
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares, minimize

from .control import RioParams, chebyshev_control, elliptic_control, fourier_control
from .propagate import propagate_effective
from .specfun import ellipk, jacobi_cn

log = logging.getLogger(__name__)

ORDERS = (3, 5)
AREA_GUESS = {3: 1.9, 5: 2.8}
STENCIL = np.linspace(-0.08, 0.08, 9)
_NODE = math.sqrt(3.0) / 6.0


class InfeasibleError(RuntimeError):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class NoiseFloorWarning(RuntimeWarning):
    pass


# --- parametrisation ---------------------------------------------------------------

@dataclass(frozen=True)
class DetuningAnsatz:
    """Detuning ``Delta(t) / Omega = sum_j a_j f_j(t/T)``.

    ``fourier``: ``sin(2 pi k s)`` (symmetric) or interleaved sine/cosine.
    ``chebyshev``: odd ``T_{2j+1}(2s - 1)`` (symmetric) or all ``T_j``.
    Symmetric members are odd about mid-pulse.  ``|Delta| <= delta_cap Omega``
    is enforced on a sample grid.
    """

    n_coeffs: int = 8
    basis: str = "fourier"
    delta_cap: float = 3.0
    symmetric: bool = True

    def __post_init__(self):
        if self.basis not in ("fourier", "chebyshev"):
            raise ValueError(f"unknown basis {self.basis!r}")
        if self.n_coeffs < 1:
            raise ValueError("need at least one coefficient")
        if not self.delta_cap > 0:
            raise ValueError("delta_cap must be positive")

    def design(self, s):
        """Basis functions at fractional times ``s = t/T``; shape ``(len(s), n_coeffs)``."""
        s = np.asarray(s, dtype=float)[:, None]
        j = np.arange(self.n_coeffs)
        if self.basis == "fourier":
            if self.symmetric:
                return np.sin(2.0 * np.pi * (j + 1) * s)
            k = j // 2 + 1
            return np.where(j % 2 == 0, np.sin(2.0 * np.pi * k * s), np.cos(2.0 * np.pi * k * s))
        degrees = 2 * j + 1 if self.symmetric else j
        return np.cos(degrees * np.arccos(np.clip(2.0 * s - 1.0, -1.0, 1.0)))

    def control(self, coeffs, area_multiple, rabi_amplitude=None, duration=None, order=None,
                source="optimizer"):
        coeffs = [float(c) for c in coeffs]
        if self.basis == "fourier":
            if self.symmetric:
                sine, cosine = coeffs, ()
            else:
                sine, cosine = coeffs[0::2], coeffs[1::2]
            return fourier_control(sine, area_multiple, rabi_amplitude, duration, cosine=cosine,
                                   order=order, source=source)
        if self.symmetric:
            full = np.zeros(2 * self.n_coeffs)
            full[1::2] = coeffs
            coeffs = full.tolist()
        return chebyshev_control(coeffs, area_multiple, rabi_amplitude, duration, order=order,
                                 source=source)

    def to_dict(self):
        return {"n_coeffs": self.n_coeffs, "basis": self.basis, "delta_cap": self.delta_cap,
                "symmetric": self.symmetric}


@dataclass(frozen=True)
class RobustnessConstraints:
    order: int = 3
    derivative_tolerance: float = 1e-4
    transfer_tolerance: float = 1e-8

    def __post_init__(self):
        if self.order not in ORDERS:
            raise ValueError(f"robustness order must be one of {ORDERS}, got {self.order!r}")
        if not (self.derivative_tolerance > 0 and self.transfer_tolerance > 0):
            raise ValueError("tolerances must be positive")

    @property
    def vanishing(self):
        """Number of leading Taylor coefficients of ``c1`` that must vanish."""
        return (self.order + 1) // 2

    def accepts(self, residuals, infidelity):
        return (infidelity <= self.transfer_tolerance
                and bool(np.all(np.abs(residuals[:self.order]) <= self.derivative_tolerance)))


# --- fast amplitude model -------------------------------------------------------------

def _magnus_steps(det1, det2, h, alphas):
    """Fourth-order Magnus step propagators, shape ``(n_alpha, n_steps, 2, 2)``.

    With ``H = 1/2 b . sigma`` and ``b = ((1 + alpha), 0, -Delta)`` sampled at
    the two Gauss nodes, ``Omega_4 = -i/2 c . sigma`` where
    ``c = h (b1 + b2)/2 + sqrt(3) h^2 (b2 x b1)/12``.
    """
    bx = np.broadcast_to((1.0 + np.asarray(alphas))[:, None], (len(alphas), det1.shape[-1]))
    cx = h * bx
    cy = math.sqrt(3.0) / 12.0 * h * h * bx * (det1 - det2)[None, :]
    cz = np.broadcast_to(-0.5 * h * (det1 + det2)[None, :], bx.shape)
    theta = np.sqrt(cx * cx + cy * cy + cz * cz)
    sinc = 0.5 * np.sinc(theta / (2.0 * np.pi))
    cos = np.cos(0.5 * theta)
    out = np.empty(theta.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = cos - 1j * sinc * cz
    out[..., 1, 1] = cos + 1j * sinc * cz
    out[..., 0, 1] = -1j * sinc * (cx - 1j * cy)
    out[..., 1, 0] = -1j * sinc * (cx + 1j * cy)
    return out


def _ordered_product(mats):
    """``M[n-1] ... M[1] M[0]`` along axis -3 by pairwise reduction."""
    while mats.shape[-3] > 1:
        if mats.shape[-3] % 2:
            pad = np.broadcast_to(np.eye(2, dtype=complex), mats.shape[:-3] + (1, 2, 2))
            mats = np.concatenate([mats, pad], axis=-3)
        mats = mats[..., 1::2, :, :] @ mats[..., 0::2, :, :]
    return mats[..., 0, :, :]


class AmplitudeModel:
    """``c1(alpha)`` and its Taylor coefficients for unit Rabi amplitude.

    Time is in units of ``1/Omega``; the detuning is given in units of ``Omega``
    either as a callable of ``s = t/T`` or, through an ansatz, as coefficients.
    """

    def __init__(self, n_steps=256, alphas=STENCIL):
        self.n_steps = int(n_steps)
        self.alphas = np.asarray(alphas, dtype=float)
        base = np.arange(self.n_steps)
        self.nodes = ((base + 0.5 - _NODE) / self.n_steps, (base + 0.5 + _NODE) / self.n_steps)
        self._vander = np.vander(self.alphas, len(self.alphas), increasing=True)
        self._designs = {}

    def designs(self, ansatz):
        if ansatz not in self._designs:
            self._designs[ansatz] = tuple(ansatz.design(s) for s in self.nodes)
        return self._designs[ansatz]

    def amplitudes(self, det1, det2, area):
        """``c1`` on the alpha stencil, detuning samples at both Gauss nodes of each step."""
        h = area / self.n_steps
        u = _ordered_product(_magnus_steps(np.asarray(det1), np.asarray(det2), h, self.alphas))
        return u[:, 0, 0]

    def taylor(self, det1, det2, area):
        """``c1^{(j)}(0) / j!`` for ``j = 0 .. len(alphas) - 1``."""
        return np.linalg.solve(self._vander, self.amplitudes(det1, det2, area))

    def ansatz_taylor(self, ansatz, coeffs, area):
        d1, d2 = self.designs(ansatz)
        return self.taylor(d1 @ coeffs, d2 @ coeffs, area)

    def function_taylor(self, func, area):
        return self.taylor(func(self.nodes[0]), func(self.nodes[1]), area)


def _equations(taylor, count, real):
    head = taylor[:count]
    return head.real if real else np.concatenate([head.real, head.imag])


# --- independent residual check --------------------------------------------------------

def _stencil_derivatives(values, h, count):
    """Derivatives ``0..count-1`` at the centre of a symmetric equispaced stencil."""
    p = (len(values) - 1) // 2
    x = np.arange(-p, p + 1) * h
    coef = np.linalg.solve(np.vander(x, len(x), increasing=True), values)
    return coef[:count] * np.array([math.factorial(j) for j in range(count)])


def leibniz_infidelity_derivatives(c1_derivatives, order):
    """``d^k |c1|^2`` for ``k = 1..order`` from derivatives of ``c1``."""
    d = np.asarray(c1_derivatives, dtype=complex)
    return np.array([sum(math.comb(k, j) * d[j] * np.conj(d[k - j]) for j in range(k + 1)).real
                     for k in range(1, order + 1)])


@dataclass(frozen=True)
class ResidualReport:
    derivatives: np.ndarray
    c1_derivatives: np.ndarray
    disagreement: np.ndarray
    infidelity: float
    noise_limited: bool

    def __iter__(self):
        return iter(self.derivatives)


def constraint_residuals(control, order, step=1e-2, tolerance=1e-12, half_points=3):
    """Finite-difference ``d^k(1-P)/d alpha^k`` at ``alpha = 0`` for ``k = 1..order``.

    ``c1`` is sampled with the adaptive effective-model integrator on symmetric
    stencils of spacing ``h`` and ``h/2``; its derivatives are Richardson-combined
    and assembled into infidelity derivatives with the Leibniz rule.  When the
    two stencils disagree by more than the value itself (and more than 1e-8),
    the estimate is flagged as noise-limited.
    """
    if order < 1:
        raise ValueError("order must be at least 1")
    count = order + 1
    p = max(half_points, (count + 1) // 2)
    if 2 * p + 1 < count:
        raise ValueError("stencil too small for the requested order")

    cache = {}

    def c1(alpha):
        key = round(alpha, 15)
        if key not in cache:
            traj = propagate_effective(control.scaled(alpha), tolerance=tolerance,
                                       t_eval=[control.duration])
            cache[key] = traj.final_state[0]
        return cache[key]

    coarse = _stencil_derivatives(np.array([c1(i * step) for i in range(-p, p + 1)]), step, count)
    fine = _stencil_derivatives(np.array([c1(i * step / 2) for i in range(-p, p + 1)]), step / 2, count)
    # leading truncation error of derivative j is h^(2p+1-j) or h^(2p+2-j), whichever is even
    j = np.arange(count)
    r = np.where((2 * p + 1 - j) % 2 == 0, 2 * p + 1 - j, 2 * p + 2 - j)
    best = fine + (fine - coarse) / (2.0 ** r - 1.0)
    disagreement = np.abs(best - fine)
    noisy = bool(np.any((disagreement > np.abs(best)) & (disagreement > 1e-8)))
    derivs = leibniz_infidelity_derivatives(best, order)
    if noisy:
        warnings.warn("finite-difference derivatives are limited by integrator noise", NoiseFloorWarning,
                      stacklevel=2)
    return ResidualReport(derivs, best, disagreement, float(abs(c1(0.0)) ** 2), noisy)


# --- search ----------------------------------------------------------------------------

@dataclass
class OptimizationReport:
    order: int
    T_times_omega_over_pi: float
    residuals: list
    transfer_infidelity: float
    accepted: bool
    seeds_tried: list
    feasible_seeds: list
    wall_time: float
    coefficients: list
    ansatz: dict
    fixed_duration: bool = False
    model_residuals: list = field(default_factory=list)

    def to_dict(self):
        return {
            "order": self.order,
            "T_times_omega_over_pi": self.T_times_omega_over_pi,
            "residuals": list(self.residuals),
            "transfer_infidelity": self.transfer_infidelity,
            "accepted": self.accepted,
            "seeds_tried": list(self.seeds_tried),
            "feasible_seeds": list(self.feasible_seeds),
            "wall_time": self.wall_time,
            "coefficients": list(self.coefficients),
            "ansatz": self.ansatz,
            "fixed_duration": self.fixed_duration,
        }


def _cap_constraint(ansatz, n=201):
    grid = ansatz.design(np.linspace(0.0, 1.0, n))
    cap = ansatz.delta_cap
    return {"type": "ineq", "fun": lambda x: np.concatenate([cap - grid @ x[1:], cap + grid @ x[1:]]),
            "jac": lambda x: np.vstack([np.hstack([np.zeros((n, 1)), -grid]),
                                        np.hstack([np.zeros((n, 1)), grid])])}


def _single_start(model, ansatz, count, area0, seed, fixed, feas_tol=1e-9):
    """Feasible point at ``area0`` by least squares, then SLSQP on ``(area, coeffs)``.

    With ``fixed`` the area stays at ``area0`` and Taylor coefficient ``count``
    is minimised instead of the duration.
    """
    real = ansatz.symmetric
    rng = np.random.default_rng(seed)
    a0 = np.clip(rng.normal(0.0, 1.0, ansatz.n_coeffs), -0.9 * ansatz.delta_cap, 0.9 * ansatz.delta_cap)

    def eqs(x):
        return _equations(model.ansatz_taylor(ansatz, x[1:], x[0]), count, real)

    cap = ansatz.delta_cap
    fit = least_squares(lambda a: eqs(np.r_[area0, a]), a0, bounds=(-cap, cap), xtol=1e-15, ftol=1e-15,
                        gtol=1e-15)
    if np.linalg.norm(fit.fun) > 1e-6:
        return None
    x0 = np.r_[area0, fit.x]
    bounds = [(area0, area0) if fixed else (math.pi, 4.0 * math.pi)] + [(-cap, cap)] * ansatz.n_coeffs
    if fixed:
        def objective(x):
            nxt = model.ansatz_taylor(ansatz, x[1:], x[0])[count]
            return 1e6 * float(abs(nxt) ** 2)
        jac = None
    else:
        def objective(x):
            return x[0]

        def jac(x):
            return np.r_[1.0, np.zeros(ansatz.n_coeffs)]
    with warnings.catch_warnings():
        # a pinned duration is a zero-width bound, which SLSQP reports as clipping
        warnings.simplefilter("ignore", RuntimeWarning)
        res = minimize(objective, x0, jac=jac, method="SLSQP", bounds=bounds,
                       constraints=[{"type": "eq", "fun": eqs}, _cap_constraint(ansatz)],
                       options={"maxiter": 400, "ftol": 1e-14})
    x = res.x
    if np.max(np.abs(eqs(x))) > feas_tol:
        # SLSQP may stop slightly off the constraint surface: project back at fixed area
        polish = least_squares(lambda a: eqs(np.r_[x[0], a]), x[1:], bounds=(-cap, cap),
                               xtol=1e-15, ftol=1e-15, gtol=1e-15)
        x = np.r_[x[0], polish.x]
    err = float(np.max(np.abs(eqs(x))))
    return (float(x[0]), x[1:], err) if err <= feas_tol else None


def _polish(model, ansatz, count, area, coeffs, fixed):
    """Nearest point of the constraint surface of ``model``.

    At the minimum duration the coefficient Jacobian is nearly singular (that is
    what makes the duration minimal), so unless the duration is pinned it is
    allowed to move as well.
    """
    cap = ansatz.delta_cap
    if fixed:
        res = least_squares(lambda a: _equations(model.ansatz_taylor(ansatz, a, area), count, ansatz.symmetric),
                            coeffs, bounds=(-cap, cap), xtol=1e-15, ftol=1e-15, gtol=1e-15)
        return area, res.x
    x0 = np.r_[area, coeffs]
    res = least_squares(lambda x: _equations(model.ansatz_taylor(ansatz, x[1:], x[0]), count, ansatz.symmetric),
                        x0, bounds=(np.r_[math.pi, [-cap] * len(coeffs)], np.r_[4 * math.pi, [cap] * len(coeffs)]),
                        xtol=1e-15, ftol=1e-15, gtol=1e-15)
    return float(res.x[0]), res.x[1:]


def optimize(order=3, rabi_amplitude=1.0, ansatz=None, seed=0, n_starts=16, duration=None,
             constraints=None, area_guess=None, n_steps=256, polish_factor=8, max_workers=None,
             verify=True):
    """Minimum-duration constant-amplitude control robust to the given order.

    ``seed`` fixes the first of ``n_starts`` consecutive start seeds.  Passing
    ``duration`` (in the units of ``1/rabi_amplitude``) instead fixes ``T``,
    imposes all but the last vanishing condition and minimises that one, which
    still works when ``T`` is below the minimum duration.  Returns the
    control and an :class:`OptimizationReport`; raises :class:`InfeasibleError`
    when no start reaches the constraint surface.
    """
    t_start = time.perf_counter()
    constraints = constraints or RobustnessConstraints(order)
    if constraints.order != order:
        raise ValueError("constraints disagree with the requested order")
    ansatz = ansatz or DetuningAnsatz()
    if ansatz.n_coeffs < order:
        raise ValueError(f"ansatz has {ansatz.n_coeffs} coefficients; order {order} needs at least {order}")
    if not rabi_amplitude > 0:
        raise ValueError("rabi_amplitude must be positive")
    fixed = duration is not None
    # at a pinned duration (possibly below the minimum) the last condition becomes the objective
    count = constraints.vanishing - 1 if fixed else constraints.vanishing
    area0 = (duration * rabi_amplitude if fixed
             else (area_guess or AREA_GUESS[order]) * math.pi)
    model = AmplitudeModel(n_steps)
    model.designs(ansatz)
    seeds = [seed + i for i in range(n_starts)]

    def run(s):
        return _single_start(model, ansatz, count, area0, s, fixed)

    if max_workers and max_workers > 1:
        with ThreadPoolExecutor(max_workers) as pool:
            results = list(pool.map(run, seeds))
    else:
        results = [run(s) for s in seeds]
    feasible = [(s, r) for s, r in zip(seeds, results) if r is not None]
    if not feasible:
        raise InfeasibleError(f"no feasible start among seeds {seeds}")

    if fixed:
        def score(item):
            _, (area, coeffs, _) = item
            return abs(model.ansatz_taylor(ansatz, coeffs, area)[count])
    else:
        def score(item):
            return item[1][0]
    best_seed, (area, coeffs, err) = min(feasible, key=score)
    # the search grid's own discretisation error is ~1e-7 in c1''; re-solve on a finer one
    model = AmplitudeModel(polish_factor * n_steps)
    area, coeffs = _polish(model, ansatz, count, area, coeffs, fixed)
    area_multiple = area / math.pi
    control = ansatz.control(coeffs, area_multiple, rabi_amplitude=rabi_amplitude, order=order)
    model_taylor = model.ansatz_taylor(ansatz, coeffs, area)
    model_derivs = leibniz_infidelity_derivatives(
        model_taylor[:order + 1] * np.array([math.factorial(j) for j in range(order + 1)]), order)
    if verify:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NoiseFloorWarning)
            check = constraint_residuals(control, order)
        residuals, infidelity = check.derivatives, check.infidelity
    else:
        residuals, infidelity = model_derivs, float(abs(model_taylor[0]) ** 2)
    report = OptimizationReport(
        order=order,
        T_times_omega_over_pi=area_multiple,
        residuals=[float(v) for v in residuals],
        transfer_infidelity=infidelity,
        accepted=constraints.accepts(np.asarray(residuals), infidelity),
        seeds_tried=seeds,
        feasible_seeds=[s for s, _ in feasible],
        wall_time=time.perf_counter() - t_start,
        coefficients=[float(c) for c in coeffs],
        ansatz=ansatz.to_dict(),
        fixed_duration=fixed,
        model_residuals=[float(v) for v in model_derivs],
    )
    log.info("order %d: T Omega / pi = %.6f (seed %d, %d/%d feasible)", order, area_multiple,
             best_seed, len(feasible), n_starts)
    return control, report


# --- elliptic family ----------------------------------------------------------------------

def _elliptic_profile(m, omega, delta0, area):
    k = ellipk(m)
    return lambda s: delta0 * jacobi_cn(omega * area * np.asarray(s) + k, m)


def fit_elliptic(guess=(0.25, 1.1, 1.1), n_steps=512):
    """Shortest symmetric member of ``Delta0 cn(omega t + K(m), m)``.

    Odd symmetry about mid-pulse pins ``T Omega = 4 K(m) / omega``; the search
    minimises that over ``(m, omega, Delta0)`` subject to ``c1 = c1' = 0``.
    Returns :class:`RioParams` (with the resulting area multiple) and the
    equation residual.
    """
    model = AmplitudeModel(n_steps)

    def area(x):
        return 4.0 * ellipk(x[0]) / x[1]

    def eqs(x):
        m, om, d0 = x
        return model.function_taylor(_elliptic_profile(m, om, d0, area(x)), area(x))[:2].real

    res = minimize(area, np.asarray(guess, float), method="SLSQP",
                   bounds=[(0.01, 0.9), (0.3, 3.0), (0.1, 3.0)],
                   constraints=[{"type": "eq", "fun": eqs}], options={"maxiter": 300, "ftol": 1e-14})
    m, om, d0 = res.x
    return RioParams(float(m), float(om), float(d0), float(area(res.x) / math.pi)), float(np.max(np.abs(eqs(res.x))))


def solve_elliptic_at_duration(m, area_multiple, guess=(1.149, 1.114), n_steps=4096):
    """``(omega, Delta0)`` in units of ``Omega`` giving complete transfer at fixed ``m`` and ``T Omega``.

    ``c1 = 0`` is two real equations for the two unknowns.
    """
    model = AmplitudeModel(n_steps, alphas=np.array([0.0]))
    area = area_multiple * math.pi

    def eqs(x):
        c1 = model.amplitudes(*(_elliptic_profile(m, x[0], x[1], area)(s) for s in model.nodes), area)[0]
        return np.array([c1.real, c1.imag])

    res = least_squares(eqs, np.asarray(guess, float), xtol=1e-15, ftol=1e-15, gtol=1e-15)
    return RioParams(float(m), float(res.x[0]), float(res.x[1]), float(area_multiple)), float(np.max(np.abs(res.fun)))


def elliptic_candidate(params, rabi_amplitude=1.0):
    return elliptic_control(params, rabi_amplitude=rabi_amplitude, order=3, source="fit_elliptic")
