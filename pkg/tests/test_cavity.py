import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cavmux.cavity import (
    CavityError,
    CavityGeometry,
    MirrorSet,
    apply_branching,
    cavity_transmission,
    compute_finesse,
    compute_linewidth,
    compute_purcell_tl,
    derive,
    free_spectral_range,
    loss_channels,
    mode_coupling,
    node_offset,
    outcoupling_efficiency,
)

MIRRORS = MirrorSet(22e-6, 20e-6, 27e-6)


def test_finesse_is_two_pi_over_loss():
    assert compute_finesse(MIRRORS) == pytest.approx(2 * math.pi / 69e-6, rel=1e-12)


def test_linewidth_is_fsr_over_finesse():
    f = compute_finesse(MIRRORS)
    assert compute_linewidth(f, 128e-6) == pytest.approx(free_spectral_range(128e-6) / f)
    assert compute_linewidth(f, 128e-6) == pytest.approx(12.86e6, rel=1e-3)


def test_invalid_inputs_raise():
    with pytest.raises(CavityError):
        compute_finesse(MirrorSet(0, 0, 0))
    with pytest.raises(CavityError):
        MirrorSet(-1e-6, 0, 0)
    with pytest.raises(CavityError):
        CavityGeometry(roc=100e-6, l_opt=128e-6)
    with pytest.raises(CavityError):
        apply_branching(100.0, 1.5)
    with pytest.raises(CavityError):
        compute_purcell_tl(-1, 1e-15, 1.5e-6, 1.78)


@given(st.floats(1e-7, 1e-3), st.floats(1e-7, 1e-3), st.floats(0, 1e-3))
def test_loss_channels_sum_to_one(a, b, c):
    m = MirrorSet(a, b, c)
    out, back, rest = loss_channels(m)
    assert out + back + rest == pytest.approx(1.0, abs=1e-12)
    assert out == pytest.approx(outcoupling_efficiency(m))
    assert min(out, back, rest) >= -1e-12


def test_mode_coupling_extremes():
    g = CavityGeometry()
    assert mode_coupling((0.0, 0.0), g) == pytest.approx(1.0)
    assert mode_coupling((0.0, node_offset(g)), g) == pytest.approx(0.0, abs=1e-12)
    assert mode_coupling((g.waist, 0.0), g) == pytest.approx(math.exp(-2), rel=1e-6)
    r = np.linspace(0, 3 * g.waist, 50)
    c = mode_coupling((r, np.zeros_like(r)), g)
    assert np.all(np.diff(c) < 0)


def test_transmission_half_at_half_width():
    assert cavity_transmission(6.5e6, 13e6) == pytest.approx(0.5)
    assert cavity_transmission(0.0, 13e6) == 1.0


def test_derive_override_and_branching():
    d = derive(MIRRORS, CavityGeometry(), 0.204, 362.0)
    assert d.p_tl == 362.0
    assert d.p_branched == pytest.approx(73.848)
    free = derive(MIRRORS, CavityGeometry(), 0.204, None)
    assert free.p_tl == pytest.approx(
        compute_purcell_tl(free.quality_factor, free.mode_volume, 1536.5e-9, 1.78)
    )
    assert set(d.as_dict()) >= {"finesse", "fwhm_linewidth", "eta_out", "p_branched"}
