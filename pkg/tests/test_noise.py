import math

import numpy as np
import pytest

from cavmux.noise import (
    CavityJitter,
    FrequencyTrace,
    NoiseParams,
    NoiseProcess,
    OUProcess,
    TelegraphSpin,
    jitter_path,
    ou_path,
    ou_step,
    sample_spins,
    telegraph_path,
)
from cavmux.rng import stream


def test_ou_stationary_variance_and_autocorrelation():
    sigma, tau, dt = 40e3, 0.08, 0.01
    x = ou_path(sigma, tau, dt, 400_000, stream(0, "t"))
    assert x.std() == pytest.approx(sigma, rel=0.05)
    for k in (1, 8, 16):
        r = np.corrcoef(x[:-k], x[k:])[0, 1]
        assert r == pytest.approx(math.exp(-k * dt / tau), abs=0.02)


def test_ou_step_matches_path():
    p = OUProcess(1.0, 2.0, 0.5)
    q = ou_step(p, 0.0, stream(0, "a"))
    assert q == p
    with pytest.raises(ValueError):
        ou_step(p, -1.0, stream(0))
    with pytest.raises(ValueError):
        OUProcess(1.0, 0.0)


def test_telegraph_flip_statistics():
    spin = TelegraphSpin(1e5, flip_rate=2.0, state=1)
    s = telegraph_path(spin, 0.01, 200_000, stream(1, "tg"))
    flips = np.count_nonzero(np.diff(s))
    p_odd = 0.5 * (1 - math.exp(-2 * 2.0 * 0.01))
    assert flips / s.size == pytest.approx(p_odd, rel=0.05)
    assert set(np.unique(s)) == {-1, 1}
    frozen = telegraph_path(TelegraphSpin(1e5, 0.0, -1), 0.01, 10, stream(0))
    assert np.all(frozen == -1)


def test_trace_chunking_invariant():
    p = NoiseParams(mean_spins=3.0)
    full = FrequencyTrace(p, 5, 2, 0.01).next(1000)
    t = FrequencyTrace(p, 5, 2, 0.01)
    parts = np.concatenate([t.next(1), t.next(499), t.next(0), t.next(500)])
    np.testing.assert_allclose(parts, full, rtol=0, atol=1e-9)


def test_disabled_noise_is_zero():
    x = FrequencyTrace(NoiseParams().disabled(), 0, 0, 1e-3).next(100)
    assert np.all(x == 0)


def test_spins_deterministic_per_emitter():
    p = NoiseParams(mean_spins=5.0)
    assert sample_spins(p, 1, 0) == sample_spins(p, 1, 0)
    assert all(p.flip_rate_min <= s.flip_rate <= p.flip_rate_max for s in sample_spins(p, 1, 0))
    assert sample_spins(NoiseParams(mean_spins=0.0), 1, 0) == []


def test_noise_process_cannot_go_back():
    n = NoiseProcess.create(NoiseParams(), 0, 0)
    n.advance_to(1.0)
    with pytest.raises(ValueError):
        n.advance_to(0.5)


def test_jitter_iid_and_correlated():
    j = CavityJitter(6e6)
    x = jitter_path(j, 1e-3, 100_000, stream(0, "j"))
    assert x.std() == pytest.approx(j.sigma, rel=0.02)
    jc = CavityJitter(6e6, correlation_time=0.1)
    y = jitter_path(jc, 1e-3, 100_000, stream(0, "j"))
    assert np.corrcoef(y[:-1], y[1:])[0, 1] > 0.95


def test_total_sigma():
    assert NoiseParams(fast_sigma=3.0, slow_sigma=4.0).total_sigma == 5.0
