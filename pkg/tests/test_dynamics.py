import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from cavmux.dynamics import (
    BlochState,
    DynamicsError,
    EchoSequence,
    ExcitationTable,
    Pulse,
    echo_contrast,
    echo_populations,
    evolve_pulse,
    excitation_probability,
    free_evolution,
    hard_pulse,
    rabi_area,
    rabi_scan,
)
from cavmux.rng import stream

TWO_PI = 2 * math.pi


def _oracle(pulse: Pulse, detuning: float, decay=None):
    """Independent reference: the Bloch equations integrated with solve_ivp."""

    def rhs(t, r):
        om = pulse.rabi(t)
        wx, wy = om * math.cos(pulse.phase), om * math.sin(pulse.phase)
        wz = TWO_PI * (pulse.center_detuning + detuning + float(pulse.sweep(t)))
        u, v, w = r
        du = wy * w - wz * v
        dv = wz * u - wx * w
        dw = wx * v - wy * u
        if decay is not None:
            lifetime, t2 = decay
            du -= u / t2
            dv -= v / t2
            dw -= (w + 1.0) / lifetime
        return [du, dv, dw]

    half = 0.5 * pulse.window
    sol = solve_ivp(rhs, (-half, half), [0.0, 0.0, -1.0], rtol=1e-10, atol=1e-12, method="DOP853")
    return sol.y[:, -1]


@pytest.mark.parametrize("area", [0.5 * math.pi, math.pi, 3 * math.pi])
@pytest.mark.parametrize("detuning", [0.0, 0.3e6, -1.1e6])
def test_propagator_matches_solve_ivp(area, detuning):
    pulse = Pulse(1e-6, area=area, phase=0.3)
    s = evolve_pulse(BlochState.ground(), pulse, detuning)
    ref = _oracle(pulse, detuning)
    np.testing.assert_allclose([s.u, s.v, s.w], ref, atol=1e-6)


def test_chirped_propagator_matches_solve_ivp():
    pulse = Pulse.chirped(0.5e6, 10e-6, area=3 * math.pi)
    s = evolve_pulse(BlochState.ground(), pulse, 0.1e6)
    np.testing.assert_allclose([s.u, s.v, s.w], _oracle(pulse, 0.1e6), atol=1e-6)


def test_decay_matches_solve_ivp():
    pulse = Pulse(20e-6, area=math.pi)
    decay = (50e-6, 30e-6)
    s = evolve_pulse(BlochState.ground(), pulse, 5e3, decay)
    np.testing.assert_allclose([s.u, s.v, s.w], _oracle(pulse, 5e3, decay), atol=1e-6)


@settings(max_examples=40, deadline=None)
@given(
    st.floats(0.1, 10 * math.pi),
    st.floats(-5e6, 5e6),
    st.floats(0.0, 2 * math.pi),
    st.floats(0.2e-6, 5e-6),
)
def test_norm_conserved_without_decay(area, detuning, phase, duration):
    s = evolve_pulse(BlochState.ground(), Pulse(duration, area=area, phase=phase), detuning)
    assert abs(float(s.norm) - 1.0) < 1e-9


def test_pulse_area_on_resonance():
    assert excitation_probability(Pulse(1e-6, area=math.pi)) == pytest.approx(1.0, abs=1e-9)
    assert excitation_probability(Pulse(1e-6, area=0.5 * math.pi)) == pytest.approx(0.5, abs=1e-9)
    assert excitation_probability(Pulse(1e-6, area=2 * math.pi)) == pytest.approx(0.0, abs=1e-9)


def test_bandwidth_round_trip():
    p = Pulse.from_bandwidth(0.55e6)
    assert p.bandwidth_fwhm == pytest.approx(0.55e6)
    with pytest.raises(ValueError):
        Pulse(0.0)
    with pytest.raises(DynamicsError):
        evolve_pulse(BlochState.ground(), Pulse(1e-6), 0.0, steps_per_fwhm=0)


def test_broadcasting_matches_scalar_calls():
    pulse = Pulse(1e-6)
    d = np.array([0.0, 0.2e6, 0.5e6])
    vec = excitation_probability(pulse, d)
    assert vec.shape == (3,)
    for di, vi in zip(d, vec):
        assert excitation_probability(pulse, float(di)) == pytest.approx(vi, abs=1e-12)


def test_excitation_table_interpolates():
    pulse = Pulse.from_bandwidth(0.28e6)
    table = ExcitationTable(pulse)
    x = np.array([0.0, 0.1e6, -0.2e6])
    np.testing.assert_allclose(table(x), excitation_probability(pulse, x), atol=1e-4)
    assert table(1e12) == 0.0


def test_free_evolution_is_rotation():
    s = BlochState(np.array(1.0), np.array(0.0), np.array(0.0))
    out = free_evolution(s, 1e3, 0.25e-3)
    assert float(out.u) == pytest.approx(0.0, abs=1e-12)
    assert float(out.v) == pytest.approx(1.0)


def test_hard_pi_pulse_inverts():
    s = hard_pulse(BlochState.ground(), math.pi)
    assert float(s.w) == pytest.approx(1.0)


@pytest.mark.parametrize("factor", [-10.0, -3.0, 0.0, 0.7, 10.0])
def test_hard_pulse_echo_refocuses_static_detuning(factor):
    pulse = Pulse.from_bandwidth(1e6)
    det = factor * pulse.bandwidth_fwhm
    unc, inv = echo_populations(EchoSequence(50e-6), pulse, det, hard=True)
    assert abs(float(inv) - float(unc)) > 0.99


def test_soft_pulse_echo_refocuses_small_detunings():
    pulse = Pulse(1e-6)
    det = np.linspace(-20e3, 20e3, 41)
    unc, inv = echo_populations(EchoSequence(100e-6), pulse, det)
    assert np.all(np.abs(inv - unc) > 0.99)


def test_echo_contrast_decays_with_t2():
    rng = stream(0, "t")
    kw = dict(t2=0.115e-3, lifetime=10.0, shots=50, rng=rng)
    c0, _ = echo_contrast(EchoSequence(0.0), Pulse(1e-6), **kw)
    c1, _ = echo_contrast(EchoSequence(0.115e-3), Pulse(1e-6), **kw)
    assert c1 / c0 == pytest.approx(math.exp(-1.0), rel=0.02)


def test_echo_contrast_requires_linewidth_for_jitter():
    with pytest.raises(DynamicsError):
        echo_contrast(EchoSequence(0.0), Pulse(1e-6), t2=1e-3, lifetime=1.0, jitter_sigma=1e6, rng=stream(0))


def test_rabi_area_and_scan_background():
    assert rabi_area(8.0, 8.0) == pytest.approx(math.pi)
    n = np.array([0.0, 8.0, 32.0])
    sig, err = rabi_scan(n, pulse=Pulse(1e-6), n_pi=8.0, cavity_linewidth=13e6, background_slope=0.01,
                         shots=4, rng=stream(0))
    np.testing.assert_allclose(sig, [0.0, 1.08, 0.32], atol=1e-6)
    with pytest.raises(ValueError):
        rabi_scan([-1.0], pulse=Pulse(1e-6), n_pi=8.0, cavity_linewidth=13e6, rng=stream(0))
