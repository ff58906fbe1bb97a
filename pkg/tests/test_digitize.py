import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import trapezoid

from drio.control import pi_pulse, rescaled, rio_third_order
from drio.digitize import (SQRT_PI, SubpulseTrain, TimescaleError, TrainError, digitize, effective_control,
                           second_rwa_margins, taylor_phase_correction, validate)


def test_peak_amplitudes_for_unit_rabi(drio3_train):
    # tau * Omega / (sqrt(pi) sigma) with tau = 6 sigma
    assert np.allclose(drio3_train.rabi, 6 / SQRT_PI, rtol=1e-14)
    assert drio3_train.n_pulses == 15


def test_experimental_geometry():
    c = rescaled(rio_third_order(1.0), duration=382.0)
    train = digitize(c)
    assert train.sigma == pytest.approx(382.0 / 90.0, rel=1e-14)
    assert train.sigma == pytest.approx(3 * math.sqrt(2), rel=1e-3)
    assert train.tau == pytest.approx(6 * train.sigma)


@given(st.integers(5, 40), st.floats(4.0, 12.0), st.floats(0.01, 5.0))
def test_total_area_bookkeeping(n, ratio, rabi):
    c = rio_third_order(rabi)
    train = digitize(c, n, ratio)
    assert abs(train.total_area - c.duration * rabi) < 1e-12 * c.duration * rabi
    assert train.duration == pytest.approx(c.duration, rel=1e-14)


def test_phases_sample_the_continuous_phase(drio3, drio3_train):
    assert np.allclose(drio3_train.phases, drio3.phase(drio3_train.centers), atol=0)
    assert np.allclose(drio3_train.centers, (np.arange(15) + 0.5) * drio3.duration / 15)


@pytest.mark.parametrize("n, ratio", [(4, 6.0), (15, 3.0), (2, 8.0)])
def test_timescale_violations(n, ratio):
    with pytest.raises(TimescaleError):
        digitize(rio_third_order(1.0), n, ratio)


def test_halved_sigma_at_ratio_twelve():
    a = digitize(rio_third_order(1.0), 15, 6.0)
    b = digitize(rio_third_order(1.0), 15, 12.0)
    assert b.sigma == pytest.approx(a.sigma / 2)
    assert np.allclose(b.areas, a.areas)
    assert validate(b).passed


def test_train_invariants():
    with pytest.raises(TrainError):
        SubpulseTrain(1.0, 6.0, [3.0, 9.0, 16.0], [1, 1, 1], [0, 0, 0])
    with pytest.raises(TrainError):
        SubpulseTrain(1.0, 6.0, [3.0, 9.0], [1, 1], [0])
    with pytest.raises(TrainError):
        SubpulseTrain(1.0, 6.0, [3.0, 9.0], [1, -1], [0, 0])
    with pytest.raises(TrainError):
        SubpulseTrain(0.0, 6.0, [3.0], [1], [0])
    with pytest.raises(TrainError):
        SubpulseTrain(1.0, 6.0, [3.0], [1], [0], shape="lorentzian")
    empty = SubpulseTrain(1.0, 6.0, [], [], [])
    assert empty.n_pulses == 0 and empty.total_area == 0.0


def test_train_is_immutable(drio3_train):
    with pytest.raises(ValueError):
        drio3_train.rabi[0] = 0.0


def test_train_dict_round_trip(tmp_path, drio3_train):
    path = tmp_path / "t.json"
    drio3_train.save(path)
    back = SubpulseTrain.load(path)
    for name in ("centers", "rabi", "phases"):
        assert np.array_equal(getattr(back, name), getattr(drio3_train, name))
    assert back.sigma == drio3_train.sigma and back.tau == drio3_train.tau
    doc = drio3_train.to_dict()
    assert set(doc["pulses"][0]) == {"t_ns", "omega_rad_per_ns", "phase_rad"}
    with pytest.raises(TrainError):
        SubpulseTrain.from_dict({"sigma_ns": 1.0})


def test_square_subpulses_have_same_area():
    c = rio_third_order(1.0)
    g, s = digitize(c, shape="gaussian"), digitize(c, shape="square")
    assert np.allclose(g.areas, s.areas)
    t = np.linspace(s.centers[0] - s.tau / 2, s.centers[0] + s.tau / 2, 200001)
    integral = trapezoid(s.rabi[0] * s.envelope(t, 0), t)
    assert integral == pytest.approx(s.areas[0], rel=1e-4)


def test_effective_control_samples(drio3_train):
    eff = effective_control(drio3_train)
    mids = drio3_train.boundaries[1:-1] - drio3_train.start
    assert np.allclose(eff.detuning(mids), drio3_train.phase_steps / drio3_train.tau, atol=1e-13)
    assert eff.rabi_amplitude == pytest.approx(1.0, rel=1e-14)
    assert eff.duration == pytest.approx(drio3_train.duration)
    assert eff.area == pytest.approx(drio3_train.total_area, rel=1e-10)


def test_effective_detuning_close_to_continuous(drio3, drio3_train):
    # phase steps sample tau * Delta at the midpoints up to tau^2/24 Delta''
    eff = effective_control(drio3_train)
    mids = drio3_train.boundaries[1:-1]
    err = np.max(np.abs(eff.detuning(mids) - drio3.detuning(mids)))
    t, h = drio3.times(401), 1e-3
    curvature = np.max(np.abs(drio3.detuning(t + h) - 2 * drio3.detuning(t) + drio3.detuning(t - h))) / h ** 2
    assert 0 < err <= 1.05 * drio3_train.tau ** 2 / 24 * curvature


def test_effective_control_needs_two_pulses():
    with pytest.raises(TrainError):
        effective_control(SubpulseTrain(1.0, 6.0, [3.0], [1.0], [0.0]))


def test_validity_report(drio3_train):
    rep = validate(drio3_train)
    assert rep.passed and not rep.reasons
    assert rep.second_rwa_margin == pytest.approx(2 * math.pi / drio3_train.areas[0], rel=0.2)
    assert rep.timescale_ratios == (6.0, 15.0)
    assert set(rep.to_dict()) >= {"second_rwa_margin", "pass", "reasons"}


def test_strong_train_fails_second_rwa():
    c = rescaled(pi_pulse(1.0), rabi_amplitude=1.0)
    train = digitize(c, 5, 6.0)
    strong = train.scaled(2 * math.pi / train.areas[0] - 1)
    assert np.allclose(strong.areas, 2 * math.pi)
    rep = validate(strong)
    assert not rep.passed
    assert rep.second_rwa_margin == pytest.approx(1.0)


def test_margins_account_for_phase_steps():
    train = SubpulseTrain(1.0, 6.0, [3.0, 9.0], [0.1, 0.1], [0.0, math.pi])
    m = second_rwa_margins(train)
    assert m[1] == pytest.approx(math.sqrt(3 * math.pi ** 2) / train.areas[1])


def test_taylor_correction(drio3, drio3_train):
    same = taylor_phase_correction(drio3_train, drio3, order=0)
    assert same is drio3_train
    fixed = taylor_phase_correction(drio3_train, drio3, order=1)
    mids = drio3_train.boundaries[1:-1]
    target = drio3_train.tau * drio3.detuning(mids)
    before = np.max(np.abs(drio3_train.phase_steps - target))
    after = np.max(np.abs(fixed.phase_steps - target))
    assert after < before / 10
    assert fixed.phases[0] == drio3_train.phases[0]
    with pytest.raises(ValueError):
        taylor_phase_correction(drio3_train, drio3, order=2)


def test_digitize_requires_phase():
    from drio.control import ContinuousControl
    with pytest.raises(TrainError):
        digitize(ContinuousControl(1.0, 10.0))
