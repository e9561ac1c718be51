"""Rate model: interference aggregates, SIC ordering, per-hop and
end-to-end rates, and the feasible-set projection.

Reference values come from two independent sources: a naive per-index
loop re-implementation of every interference/rate formula, and a
KKT-bisection solver for the ball projection.  The library is compared
against both.
"""

import math

import numpy as np
import pytest

from fdsb.network import (ChannelSet, NetworkConfig, complex_normal,
                          compute_large_scale, generate_topology,
                          sample_channels)
from fdsb.rates import (BeamformerSet, Clustering, DecodingOrder,
                        PowerBudgets, access_rate, backhaul_rate_per_sbs,
                        decoding_order, end_to_end_rates,
                        expected_decoding_order, interference_access,
                        interference_backhaul, is_feasible, project_feasible,
                        random_feasible)


def make_rng(*path):
    return np.random.default_rng(np.random.SeedSequence(list(path)))


def build_scene(seed=0, **over):
    cfg = NetworkConfig(**over)
    rng = make_rng(11, seed)
    topo = generate_topology(cfg, rng)
    ls = compute_large_scale(topo, cfg, rng)
    ch = sample_channels(ls, cfg, rng)
    return cfg, ch


def synth_channel(K, N, L, M, seed=0, beta_si=1e-10, noise_user=1e-13,
                  noise_sbs=4e-14):
    """Hand-buildable channel with unit-variance entries; the
    large-scale record is not consulted by any rate computation."""
    rng = make_rng(77, seed)
    return ChannelSet(
        h_user_mbs=complex_normal(rng, (K, M)),
        h_user_sbs=complex_normal(rng, (K, N, L)),
        h_sbs_mbs=complex_normal(rng, (N, M)),
        h_sbs_sbs=complex_normal(rng, (N, N, L)),
        large_scale=None,
        noise_user=np.full(K, noise_user),
        noise_sbs=np.full(N, noise_sbs),
        beta_si=beta_si,
    )


def random_cluster(K, N, rng):
    """Random association matrix with at least one serving SBS per user."""
    act = rng.random((K, N)) < 0.6
    for k in range(K):
        if not act[k].any():
            act[k, rng.integers(N)] = True
    return Clustering(act)


# ------------------------------------------------------- naive oracles

def oracle_sic_interferers(k, n, h_agg, active):
    """Straight transcription of the SIC interference set: users whose
    messages are still undecoded when k's is decoded (weaker aggregate
    gain, ties broken towards lower index), plus everyone the SBS does
    not serve."""
    K = len(h_agg)
    out = set()
    for i in range(K):
        undecoded = h_agg[i] < h_agg[k] or (h_agg[i] == h_agg[k] and i < k)
        if undecoded or not active[i, n]:
            out.add(i)
    return out


def oracle_phi(k, x, ch, cl):
    phi = 0.0
    K, N, _, _ = ch.dims
    for i in range(K):
        phi += abs(np.vdot(ch.h_user_mbs[k], x.v[i])) ** 2
    for i in range(K):
        if i == k:
            continue
        s = 0j
        for j in range(N):
            if cl.active[i, j]:
                s += np.vdot(ch.h_user_sbs[k, j], x.w[i, j])
        phi += abs(s) ** 2
    return phi


def oracle_access_rate(k, x, ch, cl):
    s = 0j
    for j in range(ch.dims[1]):
        if cl.active[k, j]:
            s += np.vdot(ch.h_user_sbs[k, j], x.w[k, j])
    snr = abs(s) ** 2 / (oracle_phi(k, x, ch, cl) + ch.noise_user[k])
    return math.log2(1.0 + snr)


def oracle_delta(k, n, x, ch, cl):
    K, N, _, _ = ch.dims
    h_agg = [float((np.abs(ch.h_user_sbs[i]) ** 2).sum()) for i in range(K)]
    d = 0.0
    for i in oracle_sic_interferers(k, n, h_agg, cl.active):
        d += abs(np.vdot(ch.h_sbs_mbs[n], x.v[i])) ** 2
    for i in range(K):
        if not cl.active[i, n]:
            s = 0j
            for j in range(N):
                if cl.active[i, j]:
                    s += np.vdot(ch.h_sbs_sbs[n, j], x.w[i, j])
            d += abs(s) ** 2
    for i in range(K):
        if cl.active[i, n]:
            d += ch.beta_si * float((np.abs(x.w[i, n]) ** 2).sum())
    return d


def oracle_backhaul_rate(k, n, x, ch, cl):
    sig = abs(np.vdot(ch.h_sbs_mbs[n], x.v[k])) ** 2
    return math.log2(1.0 + sig / (oracle_delta(k, n, x, ch, cl)
                                  + ch.noise_sbs[n]))


def oracle_report(x, ch, cl, weights):
    K, N, _, _ = ch.dims
    access = [oracle_access_rate(k, x, ch, cl) for k in range(K)]
    backhaul = []
    for k in range(K):
        serving = [n for n in range(N) if cl.active[k, n]]
        if not serving:
            backhaul.append(0.0)
        else:
            backhaul.append(min(oracle_backhaul_rate(k, n, x, ch, cl)
                                for n in serving))
    end = [min(a, b) for a, b in zip(access, backhaul)]
    return access, backhaul, end, sum(w * r for w, r in zip(weights, end))


def kkt_project_ball(z, cap):
    """Euclidean projection onto {y : ||y||^2 <= cap} via bisection on
    the KKT multiplier of min ||y - z||^2."""
    nrm2 = float((np.abs(z) ** 2).sum())
    if nrm2 <= cap:
        return z.copy()
    lo, hi = 0.0, 1.0
    while nrm2 / (1.0 + hi) ** 2 > cap:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if nrm2 / (1.0 + mid) ** 2 > cap:
            lo = mid
        else:
            hi = mid
    return z / (1.0 + 0.5 * (lo + hi))


def kkt_project(x, cl, budgets):
    w = x.w * cl.active[:, :, None]
    v = x.v * cl.has_cluster[:, None]
    for n in range(w.shape[1]):
        w[:, n, :] = kkt_project_ball(w[:, n, :], budgets.p_sbs[n])
    v = kkt_project_ball(v, budgets.p_mbs)
    return BeamformerSet(w, v)


# ------------------------------------------------------------- types

def test_clustering_derived_sets_consistent():
    act = np.array([[1, 0, 1], [0, 1, 0]], dtype=bool)
    cl = Clustering(act)
    assert list(cl.sbs_of(0)) == [0, 2]
    assert list(cl.sbs_of(1)) == [1]
    assert list(cl.users_of(2)) == [0]
    assert cl.n_links == 3
    assert cl.has_cluster.all()


def test_clustering_rejects_non_matrix():
    with pytest.raises(ValueError):
        Clustering(np.ones(4, dtype=bool))


def test_beamformer_power_accounting():
    x = BeamformerSet.zeros((2, 3, 2, 4))
    assert x.is_zero() and x.mbs_power() == 0.0
    x.w[0, 1, :] = [3.0, 4.0j]
    x.v[1, :] = 0.5
    assert x.sbs_powers() == pytest.approx([0.0, 25.0, 0.0])
    assert x.link_powers()[0, 1] == pytest.approx(25.0)
    assert x.mbs_power() == pytest.approx(4 * 0.25)


def test_power_budgets_from_config_and_validation():
    cfg = NetworkConfig(mbs_power_dbm=40.0, sbs_power_dbm=30.0)
    b = PowerBudgets.from_config(cfg)
    assert b.p_mbs == pytest.approx(10.0)
    assert b.p_sbs == pytest.approx([1.0] * cfg.n_sbs)
    with pytest.raises(ValueError):
        PowerBudgets(0.0, np.ones(2))
    with pytest.raises(ValueError):
        PowerBudgets(1.0, np.array([1.0, -1.0]))


# ---------------------------------------------------------- SIC order

def test_decoding_order_descending_with_tie_rule():
    # ties broken towards the lower index decoding later
    order = DecodingOrder.from_aggregate([2.0, 5.0, 2.0])
    assert list(order.order) == [1, 2, 0]
    # user 0 decodes last: nobody is still undecoded for it
    assert not order.later[0].any()
    # while decoding user 2, the tied lower-index user 0 is undecoded
    assert order.later[2, 0] and not order.later[2, 1]
    # while decoding user 1 (strongest), both others are undecoded
    assert order.later[1, 0] and order.later[1, 2]


def test_interferers_match_set_definition():
    for seed in range(5):
        _, ch = build_scene(seed, n_users_scheduled=3)
        rng = make_rng(5, seed)
        cl = random_cluster(3, ch.dims[1], rng)
        ordr = decoding_order(ch)
        h_agg = [float((np.abs(ch.h_user_sbs[i]) ** 2).sum())
                 for i in range(3)]
        for n in range(ch.dims[1]):
            for k in cl.users_of(n):
                assert set(ordr.interferers(k, n, cl)) == \
                    oracle_sic_interferers(k, n, h_agg, cl.active)


def test_last_decoded_user_sees_only_out_of_cluster_users():
    _, ch = build_scene(3, n_users_scheduled=3)
    ordr = decoding_order(ch)
    k_last = int(ordr.order[-1])
    full = Clustering.full(3, ch.dims[1])
    assert ordr.interferers(k_last, 0, full) == []
    partial = Clustering(np.array([[1, 1, 0, 0],
                                   [1, 0, 1, 0],
                                   [0, 1, 1, 1]], dtype=bool))
    for n in partial.sbs_of(k_last):
        expect = {i for i in range(3) if not partial.active[i, n]}
        assert set(ordr.interferers(k_last, n, partial)) == expect


def test_expected_order_fills_unknown_links_with_mean_power():
    cfg, ch = build_scene(4)
    ls = ch.large_scale
    K, N, L, _ = ch.dims
    cl = Clustering(np.eye(K, N, dtype=bool))
    known = ch.h_user_sbs * cl.active[:, :, None]
    expect = ((np.abs(known) ** 2).sum(axis=2)
              + ls.beta_user_sbs * L * (~cl.active)).sum(axis=1)
    got = expected_decoding_order(known, ls, cl)
    assert got.h_aggregate == pytest.approx(expect, rel=1e-12)
    assert list(got.order) == sorted(range(K),
                                     key=lambda k: (-expect[k], -k))


# ------------------------------------------------ closed-form examples

def test_single_user_no_beams_has_no_interference():
    ch = synth_channel(1, 2, 2, 4)
    cl = Clustering.full(1, 2)
    x = BeamformerSet.zeros(ch.dims)
    assert interference_access(0, x, ch, cl) == 0.0


def test_orthogonal_neighbour_causes_no_access_interference():
    ch = synth_channel(2, 2, 2, 4, seed=1)
    ch.h_user_sbs[0, :, :] = [1.0, 0.0]   # victim listens on axis 0
    cl = Clustering.full(2, 2)
    x = BeamformerSet.zeros(ch.dims)
    x.w[1, :, :] = [0.0, 0.7]             # neighbour beams on axis 1
    assert interference_access(0, x, ch, cl) == pytest.approx(0.0, abs=0)


def test_access_rate_closed_form_two_bits():
    ch = synth_channel(1, 1, 1, 2, noise_user=1e-13)
    ch.h_user_sbs[0, 0, 0] = 1.0
    ch.h_user_mbs[:] = 0.0
    cl = Clustering.full(1, 1)
    x = BeamformerSet.zeros(ch.dims)
    x.w[0, 0, 0] = math.sqrt(3 * 1e-13)   # desired power 3 sigma^2
    assert access_rate(0, x, ch, cl) == pytest.approx(2.0, rel=1e-12)


def test_access_rate_zero_without_beams():
    ch = synth_channel(2, 2, 2, 4, seed=2)
    cl = Clustering.full(2, 2)
    assert access_rate(0, BeamformerSet.zeros(ch.dims), ch, cl) == 0.0


def test_backhaul_rate_one_bit_at_unit_snr():
    ch = synth_channel(1, 1, 1, 1, noise_sbs=4e-14)
    ch.h_sbs_mbs[0, 0] = 1.0
    cl = Clustering.full(1, 1)
    x = BeamformerSet.zeros(ch.dims)
    x.v[0, 0] = math.sqrt(4e-14)          # received power = noise power
    ordr = decoding_order(ch)
    assert backhaul_rate_per_sbs(0, 0, x, ch, cl, ordr) == \
        pytest.approx(1.0, rel=1e-12)


def test_backhaul_rate_zero_without_beam():
    ch = synth_channel(1, 1, 1, 2)
    cl = Clustering.full(1, 1)
    ordr = decoding_order(ch)
    x = BeamformerSet.zeros(ch.dims)
    assert backhaul_rate_per_sbs(0, 0, x, ch, cl, ordr) == 0.0


def test_residual_si_power_is_beta_times_spent_watts():
    ch = synth_channel(1, 1, 2, 2, beta_si=1e-10)
    cl = Clustering.full(1, 1)
    x = BeamformerSet.zeros(ch.dims)
    x.w[0, 0, :] = [0.6, 0.8]             # exactly one Watt
    ordr = decoding_order(ch)
    assert interference_backhaul(0, 0, x, ch, cl, ordr) == \
        pytest.approx(1e-10, rel=1e-12)


def test_backhaul_queries_require_serving_sbs():
    ch = synth_channel(2, 2, 1, 2)
    cl = Clustering(np.array([[True, False], [False, True]]))
    x = BeamformerSet.zeros(ch.dims)
    ordr = decoding_order(ch)
    with pytest.raises(ValueError):
        interference_backhaul(0, 1, x, ch, cl, ordr)
    with pytest.raises(ValueError):
        backhaul_rate_per_sbs(1, 0, x, ch, cl, ordr)


def test_bottleneck_is_min_over_serving_sbs():
    sigma_u, sigma_b = 1e-13, 4e-14
    ch = synth_channel(1, 3, 1, 1, noise_user=sigma_u, noise_sbs=sigma_b)
    ch.h_user_mbs[:] = 0.0
    ch.h_user_sbs[0, :, 0] = [1.0, 0.0, 0.0]
    # per-SBS backhaul SNRs 7, 1, 3 -> rates 3, 1, 2 bits
    ch.h_sbs_mbs[:, 0] = np.sqrt(np.array([7.0, 1.0, 3.0]) * sigma_b)
    cl = Clustering.full(1, 3)
    x = BeamformerSet.zeros(ch.dims)
    x.v[0, 0] = 1.0
    x.w[0, 0, 0] = math.sqrt(3 * sigma_u)
    rep = end_to_end_rates(x, ch, cl, decoding_order(ch), [1.0])
    assert rep.backhaul_per_sbs[0, 1] == pytest.approx(1.0, rel=1e-12)
    assert rep.backhaul[0] == pytest.approx(1.0, rel=1e-9)
    assert rep.access[0] == pytest.approx(2.0, rel=1e-9)
    # two-hop rate is the weaker hop
    assert rep.end_to_end[0] == pytest.approx(1.0, rel=1e-9)
    assert rep.weighted_sum == pytest.approx(1.0, rel=1e-9)


def test_end_to_end_capped_by_access_hop():
    sigma_u = 1e-13
    ch = synth_channel(1, 1, 1, 1, noise_user=sigma_u, noise_sbs=4e-14)
    ch.h_user_mbs[:] = 0.0
    ch.h_user_sbs[0, 0, 0] = 1.0
    ch.h_sbs_mbs[0, 0] = math.sqrt(31 * 4e-14)     # backhaul rate 5
    cl = Clustering.full(1, 1)
    x = BeamformerSet.zeros(ch.dims)
    x.v[0, 0] = 1.0
    x.w[0, 0, 0] = math.sqrt(3 * sigma_u)          # access rate 2
    rep = end_to_end_rates(x, ch, cl, decoding_order(ch), [1.0])
    assert rep.backhaul[0] == pytest.approx(5.0, rel=1e-6)
    assert rep.end_to_end[0] == pytest.approx(2.0, rel=1e-12)


# ------------------------------------------------- oracle comparisons

@pytest.mark.parametrize("seed", range(6))
def test_interference_terms_match_naive_loops(seed):
    K, N, L, M = (2, 2, 2, 2) if seed < 3 else (3, 4, 2, 8)
    ch = synth_channel(K, N, L, M, seed=seed)
    rng = make_rng(21, seed)
    cl = random_cluster(K, N, rng)
    budgets = PowerBudgets(10.0, np.ones(N))
    x = random_feasible(ch.dims, cl, budgets, rng)
    ordr = decoding_order(ch)
    for k in range(K):
        assert interference_access(k, x, ch, cl) == \
            pytest.approx(oracle_phi(k, x, ch, cl), rel=1e-12, abs=1e-300)
        for n in cl.sbs_of(k):
            assert interference_backhaul(k, n, x, ch, cl, ordr) == \
                pytest.approx(oracle_delta(k, n, x, ch, cl),
                              rel=1e-12, abs=1e-300)


@pytest.mark.parametrize("seed", range(6))
def test_full_report_matches_naive_loops(seed):
    cfg, ch = build_scene(seed, n_users_scheduled=3)
    rng = make_rng(22, seed)
    cl = random_cluster(3, cfg.n_sbs, rng)
    budgets = PowerBudgets.from_config(cfg)
    x = random_feasible(ch.dims, cl, budgets, rng)
    weights = np.array([0.5, 1.0, 1.5])
    rep = end_to_end_rates(x, ch, cl, decoding_order(ch), weights)
    access, backhaul, end, wsum = oracle_report(x, ch, cl, weights)
    assert rep.access == pytest.approx(access, rel=1e-12)
    assert rep.backhaul == pytest.approx(backhaul, rel=1e-12)
    assert rep.end_to_end == pytest.approx(end, rel=1e-12)
    assert rep.weighted_sum == pytest.approx(wsum, rel=1e-12)
    for k in range(3):
        for n in cl.sbs_of(k):
            assert rep.backhaul_per_sbs[k, n] == \
                pytest.approx(oracle_backhaul_rate(k, n, x, ch, cl),
                              rel=1e-12)


def test_more_interference_means_less_rate():
    cfg, ch = build_scene(7)
    cl = Clustering.full(2, cfg.n_sbs)
    budgets = PowerBudgets.from_config(cfg)
    x = random_feasible(ch.dims, cl, budgets, make_rng(4), fraction=0.25)
    bumped = x.copy()
    bumped.w[1] *= 1.8                       # louder neighbour
    assert interference_access(0, bumped, ch, cl) > \
        interference_access(0, x, ch, cl)
    assert access_rate(0, bumped, ch, cl) < access_rate(0, x, ch, cl)


def test_end_to_end_never_exceeds_either_hop():
    for seed in range(4):
        cfg, ch = build_scene(seed, n_users_scheduled=3)
        rng = make_rng(31, seed)
        cl = random_cluster(3, cfg.n_sbs, rng)
        x = random_feasible(ch.dims, cl, PowerBudgets.from_config(cfg), rng)
        rep = end_to_end_rates(x, ch, cl, decoding_order(ch), [1, 1, 1])
        assert (rep.end_to_end <= rep.access + 1e-12).all()
        for k in range(3):
            for n in cl.sbs_of(k):
                assert rep.end_to_end[k] <= rep.backhaul_per_sbs[k, n] + 1e-12
        assert (rep.access >= 0).all() and (rep.end_to_end >= 0).all()


def test_unserved_user_reported_at_zero_rate():
    cfg, ch = build_scene(9)
    act = np.zeros((2, cfg.n_sbs), dtype=bool)
    act[1, 0] = True
    cl = Clustering(act)
    x = random_feasible(ch.dims, cl, PowerBudgets.from_config(cfg),
                        make_rng(6))
    assert x.is_zero(tol=0.0) is False
    rep = end_to_end_rates(x, ch, cl, decoding_order(ch), [1.0, 1.0])
    assert rep.access[0] == 0.0
    assert rep.backhaul[0] == 0.0
    assert rep.end_to_end[0] == 0.0


def test_report_scales_to_throughput():
    cfg, ch = build_scene(2)
    cl = Clustering.full(2, cfg.n_sbs)
    x = random_feasible(ch.dims, cl, PowerBudgets.from_config(cfg),
                        make_rng(8))
    rep = end_to_end_rates(x, ch, cl, decoding_order(ch), [1.0, 1.0])
    mbps = rep.mbps(cfg.bandwidth_hz)
    assert mbps == pytest.approx(rep.end_to_end * 10.0, rel=1e-12)


# ----------------------------------------------------------- projection

def test_projection_keeps_feasible_points_unchanged():
    ch = synth_channel(2, 3, 2, 4)
    cl = Clustering.full(2, 3)
    budgets = PowerBudgets(10.0, np.ones(3))
    x = random_feasible(ch.dims, cl, budgets, make_rng(9), fraction=0.9)
    y = project_feasible(x, cl, budgets)
    assert y.w == pytest.approx(x.w)
    assert y.v == pytest.approx(x.v)


def test_projection_rescales_quadruple_power_by_half():
    cl = Clustering.full(1, 1)
    budgets = PowerBudgets(1.0, np.array([1.0]))
    x = BeamformerSet.zeros((1, 1, 2, 2))
    x.w[0, 0, :] = [2.0, 0.0]              # 4x the SBS budget
    x.v[0, :] = [0.0, 2.0j]                # 4x the MBS budget
    y = project_feasible(x, cl, budgets)
    assert y.w[0, 0, 0] == pytest.approx(1.0, rel=1e-14)
    assert y.v[0, 1] == pytest.approx(1.0j, rel=1e-14)


def test_projection_enforces_zero_pattern():
    rng = make_rng(41)
    act = np.array([[True, False], [False, False]])
    cl = Clustering(act)
    budgets = PowerBudgets(1.0, np.ones(2))
    x = BeamformerSet(complex_normal(rng, (2, 2, 2)),
                      complex_normal(rng, (2, 3)))
    y = project_feasible(x, cl, budgets)
    assert np.all(y.w[~act] == 0)
    assert np.all(y.v[1] == 0)             # no serving SBS -> no stream
    assert np.all(y.w[0, 0] != 0)


@pytest.mark.parametrize("seed", range(10))
def test_projection_matches_kkt_bisection(seed):
    rng = make_rng(42, seed)
    K, N, L, M = 3, 4, 2, 8
    cl = random_cluster(K, N, rng)
    budgets = PowerBudgets(float(rng.uniform(0.1, 10.0)),
                           rng.uniform(0.1, 4.0, N))
    scale = float(rng.uniform(0.2, 5.0))
    x = BeamformerSet(scale * complex_normal(rng, (K, N, L)),
                      scale * complex_normal(rng, (K, M)))
    got = project_feasible(x, cl, budgets)
    want = kkt_project(x, cl, budgets)
    assert got.w == pytest.approx(want.w, abs=1e-10)
    assert got.v == pytest.approx(want.v, abs=1e-10)
    again = project_feasible(got, cl, budgets)
    assert again.w == pytest.approx(got.w, abs=1e-12)
    assert again.v == pytest.approx(got.v, abs=1e-12)
    assert is_feasible(got, cl, budgets)


def test_random_feasible_spends_requested_fraction():
    rng = make_rng(43)
    cl = Clustering.full(2, 3)
    budgets = PowerBudgets(8.0, np.array([1.0, 2.0, 0.5]))
    x = random_feasible((2, 3, 2, 6), cl, budgets, rng, fraction=0.5)
    assert x.mbs_power() == pytest.approx(4.0, rel=1e-12)
    assert x.sbs_powers() == pytest.approx(0.5 * budgets.p_sbs, rel=1e-12)
    assert is_feasible(x, cl, budgets)
    full = random_feasible((2, 3, 2, 6), cl, budgets, rng, fraction=1.0)
    assert is_feasible(full, cl, budgets)
