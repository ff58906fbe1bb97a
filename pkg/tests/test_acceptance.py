"""Acceptance criteria 1-11; each test records one PASS/FAIL line for the terminal summary."""
import math
import time
from functools import lru_cache

import numpy as np
import pytest
from scipy.integrate import quad

from conftest import ACCEPTANCE
from drio.cli import frequency_note
from drio.control import rescaled
from drio.digitize import SQRT_PI, SubpulseTrain, digitize, effective_control
from drio.optimizer import optimize
from drio.propagate import (ModeTruncation, propagate_delta_train, propagate_effective, propagate_full,
                            propagate_modes)
from drio.protocols import profile_tag, protocol_control, protocol_train
from drio.robustness import default_grid, fit_order, scan
from drio.schedule import export_schedule, parse_schedule
from drio.specfun import ellipj, ellipk

pytestmark = pytest.mark.acceptance

# delta-kick oracle sweep (unit Rabi, N = 15, tau = 6 sigma): 1 - P at alpha = +-0.15
FROZEN_6 = {
    "pi_pulse": (5.4497e-2, 5.4497e-2),
    "drio3": (1.8779e-3, 2.3917e-3),
    "drio5": (3.1769e-5, 1.4533e-5),
}


def record(n, passed, detail):
    ACCEPTANCE.append(f"CRITERION {n}: {'PASS' if passed else 'FAIL'} {detail}")
    return passed


def note(n, detail):
    ACCEPTANCE.append(f"CRITERION {n} note: {detail}")


@lru_cache(maxsize=None)
def criterion_5():
    prof = scan(protocol_train("pi", 1.0), default_grid(), protocol_tag="pi_pulse")
    err = float(np.max(np.abs(prof.probabilities - np.cos(math.pi * prof.alphas / 2) ** 2)))
    exponent = fit_order(prof).exponent
    ok = err < 1e-10 and abs(exponent - 2.0) <= 0.05
    return ok, f"max |P - cos^2(pi a/2)| = {err:.2e}, exponent = {exponent:.4f}"


@lru_cache(maxsize=None)
def criterion_6():
    t0 = time.perf_counter()
    grid = default_grid()
    profs = {profile_tag(n): scan(protocol_train(n, 1.0), grid, protocol_tag=profile_tag(n))
             for n in ("pi", "drio3", "drio5")}
    wall = time.perf_counter() - t0
    mask = (np.abs(grid) > 0) & (np.abs(grid) <= 0.15)
    inf = {k: p.infidelity[mask] for k, p in profs.items()}
    bad53 = int(np.sum(inf["drio5"] > inf["drio3"]))
    bad3pi = int(np.sum(inf["drio3"] > inf["pi_pulse"]))
    exps = [fit_order(profs[k]).exponent for k in ("pi_pulse", "drio3", "drio5")]
    increasing = exps[0] < exps[1] < exps[2]
    frozen = all(abs((1 - profs[k].at(a)) / ref - 1) <= 0.1
                 for k, refs in FROZEN_6.items() for a, ref in zip((0.15, -0.15), refs))
    ok = bad53 == 0 and bad3pi == 0 and increasing and frozen and wall < 10
    detail = (f"delta model, 0 < |a| <= 0.15: DRIO5 > DRIO3 at {bad53} points, DRIO3 > pi at {bad3pi} points; "
              f"exponents pi/DRIO3/DRIO5 = {exps[0]:.3f}/{exps[1]:.3f}/{exps[2]:.3f}; "
              f"frozen targets {'ok' if frozen else 'off'}; {wall:.2f} s")
    return ok, detail


def effective_note_6():
    logs = np.logspace(-2, math.log10(0.05), 10)
    grid = np.unique(np.concatenate([logs, -logs, np.linspace(-0.15, 0.15, 31)]))
    profs = {n: scan(protocol_control(n, 1.0), grid, model="effective", tolerance=1e-12, max_workers=4)
             for n in ("pi", "drio3", "drio5")}
    mask = (np.abs(grid) > 0) & (np.abs(grid) <= 0.15)
    inf = {k: p.infidelity[mask] for k, p in profs.items()}
    order = bool(np.all(inf["drio5"] <= inf["drio3"] + 1e-12) and np.all(inf["drio3"] <= inf["pi"] + 1e-12))
    exps = [fit_order(profs[k]).exponent for k in ("pi", "drio3", "drio5")]
    return (f"continuous controls (effective model): ordering {'holds' if order else 'fails'}, "
            f"exponents {exps[0]:.3f}/{exps[1]:.3f}/{exps[2]:.3f}; the DRIO failures above come from the "
            f"digitisation floors 1-P(0) = 9.1e-5 (DRIO3) and 2.2e-5 (DRIO5)")


@lru_cache(maxsize=None)
def criterion_7():
    t0 = time.perf_counter()
    errs = {}
    for ratio in (4.0, 6.0, 8.0, 12.0):
        train = protocol_train("drio3", 1.0, tau_over_sigma=ratio)
        errs[ratio] = abs(propagate_delta_train(train).final_population
                          - propagate_full(train, tolerance=1e-12).final_population)
    wall = time.perf_counter() - t0
    vals = list(errs.values())
    monotone = all(b < a for a, b in zip(vals, vals[1:]))
    ok = errs[6.0] <= 1e-3 and monotone and wall < 30
    detail = ", ".join(f"{r:g}: {e:.2e}" for r, e in errs.items())
    return ok, f"|P_delta - P_full| at tau/sigma {detail}; monotone = {monotone}; {wall:.1f} s"


@lru_cache(maxsize=None)
def criterion_8():
    train = protocol_train("drio3", 1.0)
    eff = propagate_effective(effective_control(train), tolerance=1e-10).final_population
    k0 = propagate_modes(train, ModeTruncation(0, train.tau), tolerance=1e-10).final_population
    n = 5
    strong = SubpulseTrain(1.0, 6.0, (np.arange(n) + 0.5) * 6.0, [2 * math.sqrt(math.pi)] * n,
                           1.5 * np.arange(n))
    s0 = propagate_modes(strong, ModeTruncation(0, strong.tau)).final_population
    s20 = propagate_modes(strong, ModeTruncation(20, strong.tau)).final_population
    ok = abs(k0 - eff) <= 1e-9 and abs(s0 - s20) > 0.05
    return ok, (f"|P(k=0) - P_effective| = {abs(k0 - eff):.1e}; strong train (A_n = 2 pi): "
                f"P(k=0) = {s0:.4f}, P(k=20) = {s20:.2e}, discrepancy {abs(s0 - s20):.3f}")


@lru_cache(maxsize=None)
def schedule_round_trip():
    train = protocol_train("drio3", duration=382.0)
    back = parse_schedule(export_schedule(train).to_json())
    d = abs(propagate_delta_train(back).final_population - propagate_delta_train(train).final_population)
    f = abs(propagate_full(back, tolerance=1e-11).final_population
            - propagate_full(train, tolerance=1e-11).final_population)
    return max(d, f) <= 1e-4, f"schedule round trip |dP| delta {d:.1e}, full {f:.1e}"


def test_criterion_01_drio3_fidelity():
    t0 = time.perf_counter()
    train = digitize(protocol_control("drio3", 1.0), 15, 6.0)
    p = propagate_delta_train(train).final_population
    wall = time.perf_counter() - t0
    ok = record(1, 1 - p < 1e-4 and wall < 1.0,
                f"DRIO3 delta-kick infidelity {1 - p:.3e} (< 1e-4), {wall * 1e3:.1f} ms")
    assert ok


def test_criterion_02_continuous_exactness():
    t0 = time.perf_counter()
    p = propagate_effective(protocol_control("drio3", 1.0)).final_population
    wall = time.perf_counter() - t0
    ok = record(2, 1 - p < 1e-6 and wall < 1.0, f"continuous RIO infidelity {1 - p:.2e} (< 1e-6), {wall * 1e3:.0f} ms")
    assert ok


def test_criterion_03_area_bookkeeping():
    a3 = protocol_train("drio3", 1.0).total_area / math.pi
    a5 = protocol_train("drio5", 1.0).total_area / math.pi
    ok = record(3, abs(a3 - 1.86) <= 1e-12 and abs(a5 - 2.71) <= 1e-12,
                f"sum A_n / pi = {a3:.15f} (DRIO3), {a5:.15f} (DRIO5)")
    assert ok


def test_criterion_04_experimental_geometry():
    sigma = 3 * math.sqrt(2)
    duration = 15 * 6 * sigma
    rabi3 = rescaled(protocol_control("drio3", 1.0), duration=duration).rabi_amplitude
    rabi5 = rescaled(protocol_control("drio5", 1.0), duration=duration).rabi_amplitude
    notes = frequency_note(rabi3) + " | " + frequency_note(rabi5)
    ok = (abs(duration / 382 - 1) <= 1e-3 and "15.3 MHz" in notes and "22.3 MHz" in notes
          and abs(digitize(protocol_control("drio3", duration=382.0)).sigma / sigma - 1) <= 1e-3)
    record(4, ok, f"T = {duration:.2f} ns ({(duration / 382 - 1) * 100:+.3f}% vs 382 ns); "
                  f"Omega3 = {rabi3:.4e} rad/ns ('15.3 MHz'), Omega5 = {rabi5:.4e} rad/ns ('22.3 MHz')")
    assert ok


def test_criterion_05_pi_profile():
    ok, detail = criterion_5()
    record(5, ok, detail)
    assert ok


def test_criterion_06_robustness_ordering():
    ok, detail = criterion_6()
    record(6, ok, detail)
    note(6, effective_note_6())
    assert ok


def test_criterion_07_model_equivalence():
    ok, detail = criterion_7()
    record(7, ok, detail)
    assert ok


def test_criterion_08_second_rwa():
    ok, detail = criterion_8()
    record(8, ok, detail)
    assert ok


@pytest.mark.slow
def test_criterion_09_optimizer_durations():
    t0 = time.perf_counter()
    _, rep3 = optimize(3)
    _, rep5 = optimize(5)
    wall = time.perf_counter() - t0
    r3, r5 = max(map(abs, rep3.residuals)), max(map(abs, rep5.residuals))
    ok = (abs(rep3.T_times_omega_over_pi / 1.86 - 1) <= 0.02 and abs(rep5.T_times_omega_over_pi / 2.71 - 1) <= 0.02
          and r3 < 1e-4 and r5 < 1e-4 and wall < 600)
    record(9, ok, f"order 3: T Omega = {rep3.T_times_omega_over_pi:.6f} pi, max residual {r3:.1e}; "
                  f"order 5: T Omega = {rep5.T_times_omega_over_pi:.6f} pi, max residual {r5:.1e}; {wall:.0f} s")
    assert ok


def test_criterion_10_elliptic_functions():
    rng = np.random.default_rng(10)
    u = rng.uniform(-20, 20, 200)
    ident = 0.0
    for m in rng.uniform(0, 0.99, 50):
        s, c, _ = ellipj(u, m)
        ident = max(ident, float(np.max(np.abs(s * s + c * c - 1))))
    trig = float(np.max(np.abs(ellipj(u, 0.0)[1] - np.cos(u))))
    k_ref = quad(lambda th: 1 / math.sqrt(1 - 0.235 * math.sin(th) ** 2), 0, math.pi / 2,
                 epsabs=1e-13, epsrel=1e-13)[0]
    k_err = abs(ellipk(0.235) - k_ref)
    ok = record(10, ident < 1e-10 and trig < 1e-10 and k_err < 1e-10,
                f"max |sn^2 + cn^2 - 1| = {ident:.1e}, max |cn(u,0) - cos u| = {trig:.1e}, "
                f"|K(0.235) - quad| = {k_err:.1e}")
    assert ok


def test_criterion_11_property_substitute():
    parts = {5: criterion_5()[0], 6: criterion_6()[0], 7: criterion_7()[0], 8: criterion_8()[0]}
    rt_ok, rt_detail = schedule_round_trip()
    ok = all(parts.values()) and rt_ok
    status = ", ".join(f"{k}: {'pass' if v else 'fail'}" for k, v in parts.items())
    record(11, ok, f"criteria {status}; {rt_detail}")
    assert ok


def test_sqrt_pi_constant():
    # sanity for the area convention used above: A = sqrt(pi) sigma Omega
    assert SQRT_PI == pytest.approx(math.sqrt(math.pi), abs=0)
