import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from dfrc.config import (ConfigError, SystemConfig, annulus_cdf, build_frame_plan,
                         config_from_mapping, grid_shape, load_config, spawn_users)


@pytest.mark.parametrize("dt,dp,m", [(10, 10, 324), (15, 10, 216), (90, 360, 1)])
def test_block_counts(dt, dp, m):
    assert math.prod(grid_shape(math.radians(dt), math.radians(dp))) == m


def test_frame_plan_layout(cfg):
    plan = build_frame_plan(cfg)
    assert len(plan) == len(plan.chirp_signs) == cfg.m_blocks == 324
    assert plan.chirp_signs[:4] == (1, -1, 1, -1)
    assert all(a == -b for a, b in zip(plan.chirp_signs, plan.chirp_signs[1:]))
    first, second = plan.scan_directions[:2]
    assert first.theta == pytest.approx(math.radians(5))
    assert first.phi == pytest.approx(math.radians(5))
    # azimuth varies fastest
    assert second.theta == first.theta and second.phi == pytest.approx(math.radians(15))
    assert all(d.is_target_region() for d in plan.scan_directions)
    assert build_frame_plan(cfg) == plan


@pytest.mark.parametrize("dt,dp", [(0, 10), (10, -1), (7, 10)])
def test_bad_beamwidths(dt, dp):
    with pytest.raises(ConfigError):
        grid_shape(math.radians(dt), math.radians(dp))


def test_spawn_users_deterministic(cfg):
    a = spawn_users(cfg, 30, rng=np.random.default_rng(7))
    b = spawn_users(cfg, 30, rng=np.random.default_rng(7))
    assert a == b


def test_single_user_within_annulus(cfg):
    (u,) = spawn_users(cfg, 1, rng=np.random.default_rng(0))
    assert cfg.d_0 <= u.distance <= cfg.cell_radius
    assert u.direction.is_user_region() and u.shadow > 0


def test_distance_law_ks(cfg):
    users = spawn_users(cfg, 10_000, rng=np.random.default_rng(3))
    d = np.array([u.distance for u in users])
    ks = stats.kstest(d, lambda x: annulus_cdf(x, cfg.d_0, cfg.cell_radius)).statistic
    assert ks < 0.02


def test_radius_must_exceed_reference(cfg):
    with pytest.raises(ConfigError):
        spawn_users(cfg, 3, cell_radius=cfg.d_0)


@settings(max_examples=40, deadline=None)
@given(count=st.integers(1, 50), seed=st.integers(0, 2**32 - 1),
       radius=st.floats(150.0, 5000.0))
def test_users_respect_regions(count, seed, radius):
    cfg = SystemConfig()
    for u in spawn_users(cfg, count, cell_radius=radius, rng=np.random.default_rng(seed)):
        assert cfg.d_0 <= u.distance <= radius
        assert u.direction.is_user_region() and not u.direction.is_target_region()
        assert u.shadow > 0


def test_mapping_units_and_unknown_keys():
    cfg = config_from_mapping({"delta_theta_deg": 15, "m_blocks": 216, "p_tot_dbm": 30, "n_tx": 2})
    assert cfg.delta_theta == pytest.approx(math.radians(15))
    assert cfg.p_tot == pytest.approx(1.0)
    with pytest.raises(ConfigError):
        config_from_mapping({"bogus": 1})
    with pytest.raises(ConfigError):
        config_from_mapping({"delta_theta": 0.1})


def test_invalid_values_rejected():
    for bad in ({"mask_order": 3}, {"mod_index": 0}, {"n_tx": 0}, {"t_s": -1.0}):
        with pytest.raises(ConfigError):
            config_from_mapping(bad)


def test_load_config_splits_experiment(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("cell_radius: 400\nexperiment:\n  drops: 3\n")
    cfg, exp = load_config(p)
    assert cfg.cell_radius == 400 and exp == {"drops": 3}


def test_snr_keeps_noise_ratio(cfg):
    c = cfg.with_snr_db(20)
    assert c.p_tot / c.ue_noise_power == pytest.approx(100.0)
    assert c.noise_power / c.ue_noise_power == pytest.approx(cfg.noise_power / cfg.ue_noise_power)


def test_digest_is_stable(cfg):
    assert cfg.digest() == SystemConfig().digest()
    assert cfg.digest() != cfg.replace(seed=1).digest()
