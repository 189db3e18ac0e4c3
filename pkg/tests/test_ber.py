import math

import numpy as np
import pytest
from conftest import sumrate_config
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from dfrc.ber import (SinrSupport, ber_bound_integral, ber_curve, ber_kernel, ber_upper_bound,
                      binomial_ci95, differential_detect, gamma_density, interference_moment,
                      power_law_support, q_function, rational_index, simulate_link,
                      viterbi_cpm_detect)
from dfrc.config import ConfigError
from dfrc.waveform import cpm_modulate, mask_map, random_bits


def test_rational_index():
    assert rational_index(0.5) == (1, 2)
    assert rational_index(0.75) == (3, 4)
    with pytest.raises(ConfigError):
        rational_index(math.pi / 10)
    with pytest.raises(ConfigError):
        viterbi_cpm_detect(np.ones((1, 4)), 2, 1 / math.sqrt(2))


def test_ambiguous_index_is_rejected():
    with pytest.raises(ConfigError):
        viterbi_cpm_detect(np.ones((1, 4)), 4, 0.5)
    with pytest.raises(ConfigError):
        differential_detect(np.ones((1, 4)), 8, 0.25)


@pytest.mark.parametrize("order,h", [(2, 0.5), (2, 1 / 3), (4, 0.25), (8, 0.125)])
def test_noiseless_sequence_is_recovered(order, h, rng):
    k = int(math.log2(order))
    bits = random_bits(rng, 10_000 * k)
    y = 0.8j * cpm_modulate(mask_map(bits, order).reshape(50, -1), h).samples
    np.testing.assert_array_equal(viterbi_cpm_detect(y, order, h, 0.8j), bits)
    np.testing.assert_array_equal(differential_detect(y, order, h, 0.8j), bits)


def test_coin_flip_limit(rng):
    errors, bits = simulate_link(1.0, np.array([]), 1e8, 2, 0.5, 50, 2000, rng)
    assert bits == 100_000
    assert errors / bits == pytest.approx(0.5, abs=0.02 * 0.5)


def test_kernel_bounds_viterbi_on_awgn(rng):
    for snr_db in (0, 4, 8, 12):
        g = 10 ** (snr_db / 10)
        e, b = simulate_link(1.0, np.array([]), 1 / g, 2, 0.5, 100, 500, rng)
        assert e / b <= float(ber_kernel(g, 2, 0.5))
    e, b = simulate_link(1.0, np.array([]), 1.0, 2, 0.5, 100, 500, rng)
    assert float(ber_kernel(1.0, 2, 0.5)) / 3 <= e / b


def test_interference_raises_error_rate():
    clean = simulate_link(1.0, np.array([]), 0.2, 2, 0.5, 40, 500, np.random.default_rng(0))
    dirty = simulate_link(1.0, np.array([0.5, 0.3j]), 0.2, 2, 0.5, 40, 500,
                          np.random.default_rng(0))
    assert dirty[0] > clean[0]


def test_kernel_and_q():
    assert float(q_function(0.0)) == pytest.approx(0.5)
    assert float(ber_kernel(0.0, 2, 0.5)) == pytest.approx(1.0)
    # h = 0.5: sin(pi) = 0, so the kernel is 2 Q(sqrt(gamma))
    assert float(ber_kernel(4.0, 2, 0.5)) == pytest.approx(2 * float(q_function(2.0)))


def test_confidence_interval():
    assert binomial_ci95(0, 0) == 1.0
    assert binomial_ci95(50, 100) == pytest.approx(1.96 * 0.05)


# ----------------------------------------------------------------- bound ---

def test_point_mass_reduces_to_kernel():
    s = SinrSupport(7.0, 7.0)
    assert ber_bound_integral(s, 3.0, 2, 0.5) == pytest.approx(float(ber_kernel(7.0, 2, 0.5)))


def test_bound_quadrature_is_resolved():
    s = SinrSupport(0.01, 1e4)
    a = ber_bound_integral(s, 3.0, 2, 0.5, n_points=1001)
    b = ber_bound_integral(s, 3.0, 2, 0.5, n_points=4001)
    assert abs(a - b) < 1e-4


def test_bound_matches_direct_integral():
    s, alpha = SinrSupport(0.5, 200.0), 3.0
    direct = integrate.quad(lambda g: float(ber_kernel(g, 2, 0.5)) *
                            float(gamma_density(g, s, alpha)), s.gamma_lo, s.gamma_hi,
                            limit=200, points=[1, 10])[0]
    assert ber_bound_integral(s, alpha, 2, 0.5) == pytest.approx(direct, rel=1e-6)


@given(st.floats(1.1, 6.0), st.floats(1e-3, 10.0), st.floats(1.5, 1e4))
def test_density_is_normalized(alpha, lo, ratio):
    s = SinrSupport(lo, lo * ratio)
    mass = integrate.quad(lambda g: float(gamma_density(g, s, alpha)), s.gamma_lo, s.gamma_hi,
                          limit=200)[0]
    assert mass == pytest.approx(1.0, rel=1e-6)


def test_support_window():
    s = power_law_support(1.0, 3.0, 100.0, 100.0, 400.0, 2.0, 0.0, 1.0)
    assert s.gamma_hi == pytest.approx(math.exp(4.0))
    assert s.gamma_lo == pytest.approx(4.0 ** -3 * math.exp(-4.0))
    with pytest.raises(ValueError):
        ber_bound_integral(SinrSupport(0.0, 1.0), 3.0, 2, 0.5)


def test_bound_requires_decaying_path_loss():
    cfg = sumrate_config().replace(alpha=1.0)
    with pytest.raises(ValueError):
        ber_upper_bound(cfg, [10.0], mean_interference=0.0)


def test_bound_decreases_with_snr():
    cfg = sumrate_config()
    pts = ber_upper_bound(cfg, [0.0, 10.0, 20.0], mean_interference=0.0)
    vals = [p.ber for p in pts]
    assert vals[0] > vals[1] > vals[2]


def test_interference_moment_is_reproducible():
    cfg = sumrate_config()
    a = interference_moment(cfg, 4, 0.1, draws=200, seed=3)
    assert a > 0 and a == interference_moment(cfg, 4, 0.1, draws=200, seed=3)


# ------------------------------------------------------------ full chain ---

def test_small_curve_is_well_formed_and_reproducible():
    cfg = sumrate_config()
    kw = dict(n_users=2, candidates=6, min_errors=5, min_drops=3, blocks_per_drop=2, seed=11)
    a = ber_curve(cfg, "MRT", [0.0, 20.0], **kw)
    assert a == ber_curve(cfg, "MRT", [0.0, 20.0], **kw)
    for p in a:
        assert 0 <= p.ber <= 1 and p.bits_simulated > 0
        assert p.ci95 == pytest.approx(binomial_ci95(p.errors, p.bits_simulated))
    assert a[1].ber < a[0].ber
