"""Scenario generation: config units, geometry, large-scale gains and
channel draws."""

import dataclasses
import json
import math

import numpy as np
import pytest

from fdsb.network import (ChannelSet, NetworkConfig, compute_large_scale,
                          complex_normal, generate_topology, sample_channels)


def make_rng(*path):
    return np.random.default_rng(np.random.SeedSequence(list(path)))


def build_scene(seed=0, **over):
    cfg = NetworkConfig(**over)
    rng = make_rng(11, seed)
    topo = generate_topology(cfg, rng)
    ls = compute_large_scale(topo, cfg, rng)
    ch = sample_channels(ls, cfg, rng)
    return cfg, topo, ls, ch


# ---------------------------------------------------------------- config

def test_config_defaults_are_desk_scale():
    cfg = NetworkConfig()
    assert (cfg.n_sbs, cfg.n_users_scheduled) == (4, 2)
    assert (cfg.mbs_antennas, cfg.sbs_tx_antennas) == (8, 2)
    assert cfg.region_side_m == 600.0


def test_noise_power_from_psd_and_bandwidth():
    cfg = NetworkConfig()
    # -174 dBm/Hz over 10 MHz -> -104 dBm
    expected = 10.0 ** ((-174.0 - 30.0) / 10.0) * 1e7
    assert cfg.noise_w == pytest.approx(expected, rel=1e-12)


def test_dbm_and_si_conversions():
    cfg = NetworkConfig(mbs_power_dbm=40.0, sbs_power_dbm=30.0,
                        si_cancellation_db=100.0)
    assert cfg.p_mbs_w == pytest.approx(10.0)
    assert cfg.p_sbs_w == pytest.approx(1.0)
    assert cfg.beta_si_linear == pytest.approx(1e-10)


def test_default_weights_are_all_ones():
    cfg = NetworkConfig(n_users_scheduled=3)
    assert cfg.weights == (1.0, 1.0, 1.0)


def test_weights_validation():
    with pytest.raises(ValueError):
        NetworkConfig(n_users_scheduled=2, weights=(1.0,))
    with pytest.raises(ValueError):
        NetworkConfig(n_users_scheduled=2, weights=(1.0, -0.5))
    with pytest.raises(ValueError):
        NetworkConfig(n_users_scheduled=2, weights=(0.0, 0.0))


def test_config_roundtrip_through_json(tmp_path):
    cfg = NetworkConfig(n_sbs=5, weights=(0.2, 0.8), seed=9)
    path = tmp_path / "net.json"
    path.write_text(json.dumps(cfg.to_dict()))
    back = NetworkConfig.from_file(path)
    assert back == cfg


def test_config_rejects_unknown_fields():
    with pytest.raises(ValueError, match="unknown config fields"):
        NetworkConfig.from_dict({"n_sbs": 4, "frequency_ghz": 2.0})


# -------------------------------------------------------------- topology

def test_topology_shapes_and_center():
    cfg, topo, _, _ = build_scene()
    assert topo.mbs_pos.shape == (2,)
    np.testing.assert_allclose(topo.mbs_pos, [300.0, 300.0])
    assert topo.sbs_pos.shape == (cfg.n_sbs, 2)
    assert topo.user_pos.shape == (cfg.n_users_scheduled, 2)


@pytest.mark.parametrize("seed", range(25))
def test_user_exclusion_zones(seed):
    cfg, topo, _, _ = build_scene(seed=seed)
    d_mbs = np.linalg.norm(topo.user_pos - topo.mbs_pos, axis=1)
    assert np.all(d_mbs >= cfg.mbs_exclusion_m)
    d_sbs = np.linalg.norm(
        topo.user_pos[:, None] - topo.sbs_pos[None], axis=2)
    assert np.all(d_sbs >= cfg.sbs_exclusion_m)
    assert np.all(topo.user_pos >= 0) and np.all(
        topo.user_pos <= cfg.region_side_m)


def test_sbs_grid_avoids_the_center_cell():
    cfg, topo, _, _ = build_scene(n_sbs=8, region_side_m=900.0)
    # 3x3 grid minus the middle cell: no SBS may sit at the center
    d = np.linalg.norm(topo.sbs_pos - topo.mbs_pos, axis=1)
    assert np.all(d > 1.0)
    # all eight outer cell centers are distinct
    assert len({tuple(p) for p in topo.sbs_pos.round(6)}) == 8


def test_impossible_exclusion_raises():
    # radii pass the static config check yet the five circles cover the
    # whole square, so rejection sampling must hit its cap
    cfg = NetworkConfig(region_side_m=600.0, mbs_exclusion_m=299.0,
                        sbs_exclusion_m=299.0)
    with pytest.raises(RuntimeError, match="placement failed"):
        generate_topology(cfg, make_rng(1))


def test_exclusion_radius_must_fit_region():
    with pytest.raises(ValueError, match="exclusion"):
        NetworkConfig(region_side_m=150.0, mbs_exclusion_m=400.0)


# ------------------------------------------------------------ large scale

def test_large_scale_shapes_and_positivity():
    cfg, _, ls, _ = build_scene()
    K, N = cfg.n_users_scheduled, cfg.n_sbs
    assert ls.beta_user_mbs.shape == (K,)
    assert ls.beta_user_sbs.shape == (K, N)
    assert ls.beta_sbs_mbs.shape == (N,)
    assert ls.beta_sbs_sbs.shape == (N, N)
    for arr in (ls.beta_user_mbs, ls.beta_user_sbs, ls.beta_sbs_mbs):
        assert np.all(arr > 0)
    assert np.all(np.diag(ls.beta_sbs_sbs) == 0)
    off = ls.beta_sbs_sbs[~np.eye(N, dtype=bool)]
    assert np.all(off > 0)


def test_macro_to_sbs_gain_formula_no_shadowing():
    """Independent recomputation of one deterministic gain entry."""
    cfg = NetworkConfig(shadow_std_macro_db=1e-12, shadow_std_small_db=1e-12,
                        antenna_gain_mbs_dbi=15.0)
    rng = make_rng(3)
    topo = generate_topology(cfg, rng)
    ls = compute_large_scale(topo, cfg, rng)
    d_km = np.linalg.norm(topo.sbs_pos[0] - topo.mbs_pos) / 1000.0
    pl_db = 103.4 + 24.2 * math.log10(d_km)
    expected = 10.0 ** (-(pl_db - 15.0) / 10.0)
    assert ls.beta_sbs_mbs[0] == pytest.approx(expected, rel=1e-6)


def test_macro_to_user_gain_formula_no_shadowing():
    cfg = NetworkConfig(shadow_std_macro_db=1e-12, shadow_std_small_db=1e-12)
    rng = make_rng(4)
    topo = generate_topology(cfg, rng)
    ls = compute_large_scale(topo, cfg, rng)
    d_km = np.linalg.norm(topo.user_pos[1] - topo.mbs_pos) / 1000.0
    pl_db = 128.1 + 37.6 * math.log10(d_km)
    expected = 10.0 ** (-(pl_db - 15.0) / 10.0)
    assert ls.beta_user_mbs[1] == pytest.approx(expected, rel=1e-6)


def test_sbs_to_user_gain_formula_no_shadowing():
    cfg = NetworkConfig(shadow_std_macro_db=1e-12, shadow_std_small_db=1e-12,
                        antenna_gain_sbs_dbi=5.0)
    rng = make_rng(5)
    topo = generate_topology(cfg, rng)
    ls = compute_large_scale(topo, cfg, rng)
    d_km = np.linalg.norm(topo.user_pos[0] - topo.sbs_pos[2]) / 1000.0
    pl_db = 140.7 + 36.7 * math.log10(d_km)
    expected = 10.0 ** (-(pl_db - 5.0) / 10.0)
    assert ls.beta_user_sbs[0, 2] == pytest.approx(expected, rel=1e-6)


def test_sbs_to_sbs_gain_formula_no_shadowing():
    cfg = NetworkConfig(shadow_std_macro_db=1e-12, shadow_std_small_db=1e-12)
    rng = make_rng(6)
    topo = generate_topology(cfg, rng)
    ls = compute_large_scale(topo, cfg, rng)
    d_km = np.linalg.norm(topo.sbs_pos[3] - topo.sbs_pos[1]) / 1000.0
    pl_db = 103.8 + 20.9 * math.log10(d_km)
    expected = 10.0 ** (-(pl_db - 5.0) / 10.0)
    assert ls.beta_sbs_sbs[3, 1] == pytest.approx(expected, rel=1e-6)


def test_shadowing_spread_matches_configured_std():
    """Across many independent draws of one fixed link, the dB-domain
    spread must match the configured standard deviation."""
    cfg = NetworkConfig(shadow_std_macro_db=8.0, shadow_std_small_db=10.0)
    topo = generate_topology(cfg, make_rng(8))
    samples = []
    for i in range(4000):
        ls = compute_large_scale(topo, cfg, make_rng(20, i))
        samples.append(10.0 * math.log10(ls.beta_user_mbs[0]))
    assert np.std(samples) == pytest.approx(8.0, rel=0.08)


# --------------------------------------------------------------- channels

def test_channel_shapes_and_noise():
    cfg, _, _, ch = build_scene()
    K, N, L, M = ch.dims
    assert (K, N, L, M) == (2, 4, 2, 8)
    assert ch.h_user_mbs.shape == (K, M)
    assert ch.h_user_sbs.shape == (K, N, L)
    assert ch.h_sbs_mbs.shape == (N, M)
    assert ch.h_sbs_sbs.shape == (N, N, L)
    np.testing.assert_allclose(ch.noise_user, cfg.noise_w)
    np.testing.assert_allclose(ch.noise_sbs, cfg.noise_w)
    assert ch.beta_si == pytest.approx(cfg.beta_si_linear)


def test_inter_sbs_channel_diagonal_is_zero():
    _, _, _, ch = build_scene()
    N = ch.dims[1]
    for n in range(N):
        np.testing.assert_array_equal(ch.h_sbs_sbs[n, n], 0.0)


def test_channel_variance_tracks_large_scale():
    """E|h|^2 per entry equals the link gain."""
    cfg, topo, ls, _ = build_scene()
    acc = 0.0
    n_draws = 3000
    for i in range(n_draws):
        ch = sample_channels(ls, cfg, make_rng(21, i))
        acc += np.abs(ch.h_user_sbs[0, 1]) ** 2 / ch.h_user_sbs.shape[2]
    mean_gain = acc.mean() / n_draws if np.ndim(acc) else acc / n_draws
    assert mean_gain == pytest.approx(ls.beta_user_sbs[0, 1], rel=0.08)


def test_complex_normal_moments():
    rng = make_rng(40)
    z = complex_normal(rng, (200_000,))
    assert np.mean(z) == pytest.approx(0.0, abs=0.01)
    assert np.mean(np.abs(z) ** 2) == pytest.approx(1.0, rel=0.02)
    # circular symmetry: real/imag each carry half the power
    assert np.mean(z.real ** 2) == pytest.approx(0.5, rel=0.03)


def test_same_stream_reproduces_channels():
    cfg = NetworkConfig()
    a = build_scene(seed=5)
    b = build_scene(seed=5)
    np.testing.assert_array_equal(a[3].h_user_sbs, b[3].h_user_sbs)
    np.testing.assert_array_equal(a[3].h_sbs_mbs, b[3].h_sbs_mbs)
    c = build_scene(seed=6)
    assert not np.array_equal(a[3].h_user_sbs, c[3].h_user_sbs)


def test_channel_copy_is_deep():
    _, _, _, ch = build_scene()
    cp = ch.copy()
    cp.h_user_sbs[0, 0, 0] = 0
    assert ch.h_user_sbs[0, 0, 0] != 0
