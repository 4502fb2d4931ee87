import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import crandn
from redos.channel import GroupProfile, sample_channels
from redos.scheduling import (NORM, QUASI_SINR, alpha_min, best_beam, candidate_set, cqi_reports, dpc_rate,
                              exhaustive_dpc, greedy_dpc, greedy_dpc_select, quasi_sinr, rbf_select, rbf_sinr,
                              redos_group, redos_select, sus_group, sus_select)


def _iso_batch(K, r, seed):
    prof = GroupProfile(np.eye(r, dtype=complex), np.linspace(1.0, 0.5, r), r, n_users=K)
    return sample_channels([prof], seed)


# --------------------------------------------------------------------------
# cones
# --------------------------------------------------------------------------
def test_candidate_set_examples():
    np.testing.assert_array_equal(candidate_set(np.array([0, 1, 0, 0], complex), 0.9), [1])
    assert candidate_set(np.full(4, 0.5 + 0.5j), 0.51).size == 0
    assert candidate_set(np.zeros(3, complex), 0.5).size == 0


def test_candidate_set_definition(rng):
    for _ in range(200):
        g = crandn(rng, 5)
        a = rng.uniform(0.3, 1.0)
        ref = [i for i in range(5) if abs(g[i]) / np.linalg.norm(g) >= a]
        np.testing.assert_array_equal(candidate_set(g, a), ref)


def test_alpha_min_totality(rng):
    for r in (2, 3, 4, 8):
        G = crandn(rng, 100_000 // 4, r)
        _, top = best_beam(G)
        assert np.all(top >= alpha_min(r) - 1e-15)


def test_cones_disjoint_above_half_angle(rng):
    G = crandn(rng, 50_000, 4)
    for a in (0.7072, 0.75, 0.9):
        mags = np.abs(G) / np.linalg.norm(G, axis=1, keepdims=True)
        assert np.all(np.sum(mags >= a, axis=1) <= 1)


def test_quasi_sinr_examples():
    assert quasi_sinr(4.0, 0.125, 2.0, 4) == pytest.approx(4.0)
    assert quasi_sinr(3.0, 0.0, 2.5, 4) == pytest.approx(7.5)
    assert quasi_sinr(4.0, 0.5, np.inf, 2) == pytest.approx(4.0)
    with pytest.raises(ValueError):
        quasi_sinr(1.0, 0.0, 0.0, 2)


# --------------------------------------------------------------------------
# cone selection
# --------------------------------------------------------------------------
def test_redos_on_beam_users():
    G = np.diag([1.0, 2.0, 0.5]).astype(complex)[[2, 0, 1]]
    s = redos_group(G, np.zeros(3), 0.9, 1.0)
    np.testing.assert_array_equal(s.users, [1, 2, 0])
    np.testing.assert_array_equal(s.beams, [0, 1, 2])


def test_redos_argmax_in_cone():
    G = np.array([[np.sqrt(3), 0.1], [np.sqrt(5), 0.1]], complex)
    s = redos_group(G, np.zeros(2), 0.9, 1.0, score=np.array([3.0, 5.0]))
    np.testing.assert_array_equal(s.users, [1])
    np.testing.assert_array_equal(s.candidate_sizes, [2, 0])


def test_redos_tie_goes_to_lower_index():
    G = np.array([[1, 0], [1, 0], [0, 1]], complex)
    s = redos_group(G, np.zeros(3), 0.9, 1.0)
    np.testing.assert_array_equal(s.users, [0, 2])


def test_redos_matches_brute_force(rng):
    for seed in range(5):
        ch = _iso_batch(100, 4, seed).channels[0]
        inter = rng.exponential(0.1, 100)
        for a in (0.5, 0.75, 0.9):
            s = redos_group(ch.G, inter, a, 3.0)
            users = []
            for i in range(4):
                best, who = -1.0, None
                for k in range(100):
                    g = ch.G[k]
                    mags = np.abs(g) / np.linalg.norm(g)
                    if mags[i] >= a and np.argmax(mags) == i:
                        q = np.linalg.norm(g) ** 2 / (1 / 3.0 + 4 * inter[k])
                        if q > best:
                            best, who = q, k
                if who is not None:
                    users.append(who)
            np.testing.assert_array_equal(s.users, users)


def test_redos_semi_orthogonality(rng):
    for a in (0.7072, 0.8, 0.9):
        for seed in range(20):
            ch = _iso_batch(200, 4, 100 + seed).channels[0]
            s = redos_group(ch.G, ch.intergroup_power, a, 1.0)
            Gs = ch.G[s.users] / np.linalg.norm(ch.G[s.users], axis=1, keepdims=True)
            coh = np.abs(Gs @ Gs.conj().T) - np.eye(len(s.users))
            assert coh.max(initial=0.0) <= 2 * a * np.sqrt(1 - a * a) + 1e-12


def test_redos_scale_invariance(rng):
    ch = _iso_batch(60, 4, 7).channels[0]
    inter = np.zeros(60)
    base = redos_group(ch.G, inter, 0.6, 1.0)
    for k in base.users:
        G = ch.G.copy()
        G[k] *= 3.0
        s = redos_group(G, inter, 0.6, 1.0)
        assert k in s.users
        np.testing.assert_array_equal(s.candidate_sizes, base.candidate_sizes)


def test_redos_select_slots_distinct(fig4_groups):
    groups = [g.with_users(100) for g in fig4_groups]
    out = redos_select(sample_channels(groups, 1), 0.75, 10.0)
    for s in out.groups:
        assert len(set(s.users.tolist())) == len(s.users) <= 2
        assert len(set(s.beams.tolist())) == len(s.beams)


def test_cqi_reports_consistent():
    ch = _iso_batch(40, 3, 2).channels[0]
    reps = cqi_reports(ch.G, ch.intergroup_power, 0.8, 1.0)
    s = redos_group(ch.G, ch.intergroup_power, 0.8, 1.0)
    assert len(reps) == s.n_reports
    beam, _ = best_beam(ch.G)
    assert all(r.beam == beam[r.user] for r in reps)
    assert len(cqi_reports(ch.G, ch.intergroup_power, 0.8, 1.0, index_only=True)) == 40


# --------------------------------------------------------------------------
# random beamforming
# --------------------------------------------------------------------------
def test_rbf_sinr_example():
    G = np.array([[np.sqrt(2), np.sqrt(6)]], complex)
    # ``1 + 6`` in the denominator for beam 0 at unit per-beam power
    assert rbf_sinr(G, np.zeros(1), 1.0)[0, 0] == pytest.approx(2 / 7)


def test_rbf_single_beam():
    G = np.array([[2.0]], complex)
    assert rbf_sinr(G, np.zeros(1), 3.0)[0, 0] == pytest.approx(12.0)


def test_rbf_prefers_on_beam_user_at_high_snr():
    G = np.array([[1e-2, 0.0], [10.0, 10.0]], complex)
    sinr = rbf_sinr(G, np.zeros(2), 1e6)
    assert sinr[0, 0] > sinr[1, 0]


def test_rbf_select_one_report_per_user(fig4_groups):
    groups = [g.with_users(50) for g in fig4_groups]
    out = rbf_select(sample_channels(groups, 2), 5.0)
    for s in out.groups:
        assert s.n_reports == 50
        assert len(set(s.users.tolist())) == len(s.users)


# --------------------------------------------------------------------------
# semi-orthogonal user selection
# --------------------------------------------------------------------------
def _sus_replay(G, metric, gamma):
    chosen = []
    while len(chosen) < G.shape[1]:
        cands = []
        for k in range(G.shape[0]):
            if k in chosen or np.linalg.norm(G[k]) == 0:
                continue
            ok = all(abs(np.vdot(G[j], G[k])) / (np.linalg.norm(G[j]) * np.linalg.norm(G[k])) <= gamma
                     for j in chosen)
            if ok:
                cands.append(k)
        if not cands:
            break
        chosen.append(max(cands, key=lambda k: (metric[k], -k)))
    return chosen


def test_sus_plain_greedy_at_gamma_one(rng):
    G = crandn(rng, 30, 4)
    m = np.linalg.norm(G, axis=1) ** 2
    s = sus_group(G, m, 1.0)
    np.testing.assert_array_equal(s.users, np.argsort(-m)[:4])


def test_sus_orthonormal_users():
    G = np.diag([1.0, 3.0, 2.0]).astype(complex)
    s = sus_group(G, np.array([1.0, 9.0, 4.0]), 0.1)
    np.testing.assert_array_equal(s.users, [1, 2, 0])


def test_sus_matches_replay(rng):
    for _ in range(10):
        G = crandn(rng, 50, 4)
        m = rng.exponential(size=50)
        np.testing.assert_array_equal(sus_group(G, m, 0.4).users, _sus_replay(G, m, 0.4))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.05, 0.95))
def test_sus_pairwise_coherence(seed, gamma):
    G = crandn(np.random.default_rng(seed), 40, 4)
    s = sus_group(G, np.linalg.norm(G, axis=1), gamma)
    Gs = G[s.users] / np.linalg.norm(G[s.users], axis=1, keepdims=True)
    coh = np.abs(Gs @ Gs.conj().T) - np.eye(len(s.users))
    assert coh.max(initial=0.0) <= gamma + 1e-12


def test_sus_select_criteria(fig4_groups):
    groups = [g.with_users(40) for g in fig4_groups]
    b = sample_channels(groups, 3)
    for crit in (NORM, QUASI_SINR):
        out = sus_select(b, 0.4, 5.0, crit)
        assert out.scheme == f"sus_{crit}"
        assert all(len(s) <= 2 for s in out.groups)
    with pytest.raises(ValueError):
        sus_select(b, 0.4, 5.0, "bogus")


# --------------------------------------------------------------------------
# greedy dirty-paper baseline
# --------------------------------------------------------------------------
def test_dpc_single_user():
    h = np.array([[1.0, 1.0j]])
    order, diag = greedy_dpc(h, 2.0, 2)
    np.testing.assert_array_equal(order, [0])
    assert dpc_rate(h, 2.0) == pytest.approx(np.log(5.0))


def test_dpc_two_orthogonal_users():
    H = np.array([[2.0, 0], [0, 2.0]], complex)
    order, diag = greedy_dpc(H, 1.0, 2)
    assert sorted(order.tolist()) == [0, 1]
    assert np.sum(np.log1p(diag**2)) == pytest.approx(2 * np.log(5.0))


def _stepwise_oracle(H, rho, s_max):
    # each step adds the user giving the largest QR rate of the growing set
    chosen = []
    for _ in range(s_max):
        best, who = dpc_rate(H[chosen], rho) if chosen else 0.0, None
        for k in range(H.shape[0]):
            if k not in chosen:
                v = dpc_rate(H[chosen + [k]], rho)
                if v > best + 1e-12:
                    best, who = v, k
        if who is None:
            break
        chosen.append(who)
    return chosen


def test_dpc_greedy_matches_stepwise_and_bounded_by_exhaustive(rng):
    for _ in range(10):
        H = crandn(rng, 10, 4)
        order, diag = greedy_dpc(H, 3.0, 3)
        np.testing.assert_array_equal(order, _stepwise_oracle(H, 3.0, 3))
        rate = float(np.sum(np.log1p(3.0 * diag**2)))
        assert rate == pytest.approx(dpc_rate(H[order], 3.0), rel=1e-12)
        assert rate <= exhaustive_dpc(H, 3.0, 3) + 1e-12


def test_dpc_select_over_groups(fig4_groups):
    groups = [g.with_users(30) for g in fig4_groups]
    b = sample_channels(groups, 5)
    res = greedy_dpc_select(b, 10.0)
    assert len(res.users) <= 4
    H = np.concatenate([ch.h for ch in b.channels])
    rows = [g * 30 + k for g, k in res.users]
    assert res.rate == pytest.approx(dpc_rate(H[rows], 10.0), rel=1e-10)
