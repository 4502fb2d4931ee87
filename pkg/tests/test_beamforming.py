import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import crandn
from oracles import waterfill_grid, zf_oracle
from redos.beamforming import (EQUAL, WATERFILL, RankDeficientError, allocate_power, check_approx_bd,
                               gershgorin_gain_bound, waterfill, zf_precoder)
from redos.channel import DftColumns, GroupProfile


# --------------------------------------------------------------------------
# block-diagonalisation check
# --------------------------------------------------------------------------
def test_bd_disjoint_columns_pass():
    a = GroupProfile.from_spec(DftColumns(8, 0, 4, (1, .5, .25, .1)), 2)
    b = GroupProfile.from_spec(DftColumns(8, 4, 8, (1, .5, .25, .1)), 2)
    rep = check_approx_bd([a, b])
    assert rep.ok and max(rep.residuals) < 1e-12


def test_bd_fig4_passes(fig4_groups):
    rep = check_approx_bd(fig4_groups)
    assert rep.ok
    assert max(rep.residuals) < 1e-12


def test_bd_identical_groups_fail():
    a = GroupProfile.from_spec(DftColumns(4, 0, 2, (1, .5)), 2)
    rep = check_approx_bd([a, a])
    assert not rep.ok
    assert rep.passed == (False, False)


# --------------------------------------------------------------------------
# zero forcing
# --------------------------------------------------------------------------
def test_zf_identity():
    zf = zf_precoder(np.eye(3))
    np.testing.assert_allclose(zf.W_tilde, np.eye(3), atol=1e-14)
    np.testing.assert_allclose(zf.gammas, 1.0)


def test_zf_orthogonal_rows_gain_is_norm():
    G = np.diag([2.0, 0.5, 3.0]).astype(complex) @ np.fft.fft(np.eye(3)) / np.sqrt(3)
    zf = zf_precoder(G)
    np.testing.assert_allclose(zf.gammas, np.sum(np.abs(G) ** 2, axis=1), rtol=1e-12)


@pytest.mark.parametrize("s,r", [(1, 1), (2, 2), (2, 4), (3, 4), (4, 4), (5, 8)])
def test_zf_matches_cofactor_oracle(s, r, rng):
    for _ in range(20):
        G = crandn(rng, s, r)
        zf = zf_precoder(G)
        W_ref, g_ref = zf_oracle(G)
        np.testing.assert_allclose(zf.W_tilde, W_ref, atol=1e-9)
        np.testing.assert_allclose(zf.gammas, g_ref, rtol=1e-9)
        np.testing.assert_allclose(G @ zf.W_tilde, np.eye(s), atol=1e-9)


def test_zf_ill_conditioned_uses_pseudo_inverse(rng):
    G = crandn(rng, 2, 4)
    G[1] = G[0] + 1e-7 * crandn(rng, 4)
    zf = zf_precoder(G)
    np.testing.assert_allclose(G @ zf.W_tilde, np.eye(2), atol=1e-6)


def test_zf_rank_deficient_names_rows(rng):
    G = crandn(rng, 3, 4)
    G[2] = 2 * G[0]
    with pytest.raises(RankDeficientError) as err:
        zf_precoder(G)
    assert set(err.value.users) & {0, 2}
    with pytest.raises(RankDeficientError):
        zf_precoder(crandn(rng, 5, 4))


def test_zf_empty():
    zf = zf_precoder(np.zeros((0, 3), dtype=complex))
    assert zf.n_streams == 0


# --------------------------------------------------------------------------
# gain bound
# --------------------------------------------------------------------------
def test_gain_bound_examples():
    assert gershgorin_gain_bound(1.0, 4) == 1.0
    assert gershgorin_gain_bound(1 / np.sqrt(2), 2) == pytest.approx(0.0, abs=1e-12)
    assert gershgorin_gain_bound(0.96, 4) == 0.0
    assert gershgorin_gain_bound(0.99, 2) == pytest.approx(1 - 2 * 0.99 * np.sqrt(1 - 0.99**2))
    with pytest.raises(ValueError):
        gershgorin_gain_bound(0.6, 2)


# --------------------------------------------------------------------------
# power allocation
# --------------------------------------------------------------------------
def _pre(gammas, r=None):
    g = np.asarray(gammas, float)
    r = r or g.size
    return zf_precoder(np.diag(np.sqrt(g)).astype(complex) @ np.eye(g.size, r))


def test_waterfill_single_user():
    zf = allocate_power(_pre([2.0]), np.array([1.0]), 4.0, WATERFILL)
    np.testing.assert_allclose(zf.powers, [8.0])


def test_waterfill_symmetric_equal_split():
    q, _ = waterfill(np.full(4, 3.0), 2.0)
    np.testing.assert_allclose(q, 0.5)


def test_waterfill_drops_weak_user():
    zf = allocate_power(_pre([1.0, 1.0]), np.array([1.0, 100.0]), 2.0, WATERFILL)
    np.testing.assert_allclose(zf.powers, [2.0, 0.0], atol=1e-12)
    gains = np.array([1.0, 0.01])
    q, _ = waterfill(gains, 2.0)
    assert np.sum(np.log1p(q * gains)) == pytest.approx(waterfill_grid(gains, 2.0), abs=1e-8)


def test_equal_power_per_stream():
    zf = allocate_power(_pre([2.0, 0.5], 4), np.ones(2), 8.0, EQUAL)
    # every stream gets budget / r_star = 2 of transmit power
    np.testing.assert_allclose(zf.transmit_powers, 2.0)
    np.testing.assert_allclose(zf.powers, [4.0, 1.0])


def test_transmit_power_is_scale_over_gain(rng):
    zf = allocate_power(zf_precoder(crandn(rng, 3, 4)), rng.uniform(1, 2, 3), 5.0, WATERFILL)
    np.testing.assert_allclose(zf.transmit_powers, zf.powers / zf.gammas, rtol=1e-10)
    assert np.sum(zf.transmit_powers) == pytest.approx(5.0, abs=1e-8)


def test_allocate_power_rejects_unknown_mode():
    with pytest.raises(ValueError):
        allocate_power(_pre([1.0]), np.ones(1), 1.0, "greedy")


def test_waterfill_matches_grid_oracle(rng):
    for _ in range(40):
        n = int(rng.integers(2, 5))
        gains = rng.exponential(size=n) * 10 ** rng.uniform(-1, 1)
        budget = float(rng.uniform(0.2, 5))
        q, _ = waterfill(gains, budget)
        assert np.sum(np.log1p(q * gains)) >= waterfill_grid(gains, budget) - 1e-8


def test_waterfill_beats_random_feasible_allocations(rng):
    gains = np.array([2.0, 0.7, 0.2, 0.05])
    budget = 3.0
    q, _ = waterfill(gains, budget)
    best = np.sum(np.log1p(q * gains))
    rand = rng.dirichlet(np.ones(4), size=2000) * budget
    assert np.all(np.sum(np.log1p(rand * gains), axis=1) <= best + 1e-12)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(1e-3, 1e3), min_size=1, max_size=8), st.floats(1e-2, 1e2))
def test_waterfill_kkt(gains, budget):
    gains = np.array(gains)
    q, mu = waterfill(gains, budget)
    assert np.all(q >= 0)
    assert abs(q.sum() - budget) <= 1e-8 * budget
    on = q > 0
    # active users sit exactly on the water level, inactive ones above it
    np.testing.assert_allclose(q[on] + 1 / gains[on], mu, rtol=1e-8)
    assert np.all(1 / gains[~on] >= mu - 1e-8 * mu)
