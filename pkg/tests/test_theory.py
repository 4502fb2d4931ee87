import numpy as np
import pytest
from scipy import stats

from redos.channel import DftColumns, ExpCorrelation, GroupProfile
from redos.theory import (TailBoundSpec, alpha_bar_lower, alpha_min_probe, ccdf_sandwich_check,
                          cone_pair_bound, cone_pair_bound_check, evt_constant_stability, evt_tail_check,
                          exponential_exceedance, fit_loglog_slope, sample_cone, _rejection_cone)


# --------------------------------------------------------------------------
# cone geometry
# --------------------------------------------------------------------------
@pytest.mark.parametrize("r", [2, 3, 4, 8])
def test_alpha_min_floor_and_sharpness(r, rng):
    assert alpha_min_probe(r, 1 / np.sqrt(r), 100_000, rng) == 0
    assert alpha_min_probe(r, 1 / np.sqrt(r) + 0.05, 100_000, rng) > 0


@pytest.mark.parametrize("r", range(2, 33))
def test_alpha_bar_endpoint_admissible(r):
    assert alpha_bar_lower(r) >= 1 / np.sqrt(2) - 1e-15
    assert alpha_bar_lower(r) < 1


def test_alpha_bar_at_two():
    assert alpha_bar_lower(2) == pytest.approx(1 / np.sqrt(2), abs=1e-15)


def test_sample_cone_matches_rejection(rng):
    # conditional sampler vs plain rejection: same law of |u_beam|^2
    for r, a in ((2, 0.8), (4, 0.75)):
        fast = sample_cone(rng, 4000, r, 1, a)
        slow, _ = _rejection_cone(rng, 4000, r, 1, a, 10**7)
        assert np.all(np.abs(fast[:, 1]) >= a - 1e-12)
        np.testing.assert_allclose(np.linalg.norm(fast, axis=1), 1.0, atol=1e-12)
        assert stats.ks_2samp(np.abs(fast[:, 1]) ** 2, np.abs(slow[:, 1]) ** 2).pvalue > 1e-3
        other = [j for j in range(r) if j != 1][0]
        assert stats.ks_2samp(np.abs(fast[:, other]), np.abs(slow[:, other])).pvalue > 1e-3


def test_cone_pair_alpha_one_is_orthogonal(rng):
    res = cone_pair_bound_check(1.0, 3, 1000, rng)
    assert res.bound == 0.0
    assert res.max_observed <= 1e-12 and res.passed


def test_cone_pair_vacuous_at_half_angle(rng):
    res = cone_pair_bound_check(1 / np.sqrt(2), 2, 5000, rng)
    assert res.bound == pytest.approx(1.0)
    assert res.max_observed <= 1.0 + 1e-12 and res.passed


def test_cone_pair_sharp_at_point_nine(rng):
    res = cone_pair_bound_check(0.9, 4, 100_000, rng)
    assert res.bound == pytest.approx(2 * 0.9 * np.sqrt(0.19))
    assert res.bound == pytest.approx(0.7846, abs=1e-4)
    assert res.passed
    assert 0.95 * res.bound < res.max_observed <= res.bound + 1e-12


def test_cone_pair_rejection_mode(rng):
    res = cone_pair_bound_check(0.8, 2, 2000, rng, method="rejection", n_cross=300)
    assert res.passed and not res.inconclusive


def test_cone_pair_rejection_budget_inconclusive(rng):
    res = cone_pair_bound_check(0.999, 8, 500, rng, method="rejection", n_cross=100, max_draws=20_000)
    assert res.inconclusive


def test_cone_pair_rejects_small_alpha(rng):
    with pytest.raises(ValueError):
        cone_pair_bound_check(0.6, 2, 10, rng)
    with pytest.raises(ValueError):
        cone_pair_bound_check(0.8, 1, 10, rng)


def test_cone_pair_bound_formula():
    assert cone_pair_bound(1 / np.sqrt(2)) == pytest.approx(1.0)
    assert cone_pair_bound(1.0) == 0.0


# --------------------------------------------------------------------------
# extreme values
# --------------------------------------------------------------------------
def test_tail_spec_constants():
    s = TailBoundSpec((1.0, 0.5), 0.5, 1000)
    xi1 = 1 - 0.5 / 1.0
    assert s.a_K == 1.0
    assert s.b_K == pytest.approx(np.log(1000) + np.log(0.5 / xi1))
    assert s.u_K == pytest.approx(np.log(1000) - np.log(np.log(1000)) + np.log(0.5 / xi1))
    assert s.u_gi(2.0) == pytest.approx((np.log(1000) - np.log(np.log(1000))) / 1.5)
    with pytest.raises(ValueError):
        TailBoundSpec((1.0,), 0.0, 100)
    with pytest.raises(ValueError):
        TailBoundSpec((1.0, 0.9), 1.0, 100, z_tau=0.0)


def test_tail_spec_cdf_and_ppf():
    s = TailBoundSpec((1.0, 0.7), 0.5, 100)
    z = np.linspace(0, 20, 400)
    F = s.cdf(z)
    assert F[0] == 0.0 and np.all(np.diff(F) >= -1e-12)
    p = np.linspace(0.01, 0.999999, 50)
    np.testing.assert_allclose(s.cdf(s.ppf(p)), p, atol=1e-10)


def test_exponential_closed_form():
    for K in (100, 1000, 10_000):
        assert exponential_exceedance(K) == pytest.approx(1 - 1 / K, abs=0.6 / K)


def test_exponential_tail_against_closed_form(rng):
    spec = TailBoundSpec((1.0,), 1.0, 1000, z_tau=0.0)
    res = evt_tail_check(spec, 100_000, rng)
    p = exponential_exceedance(1000)
    assert abs(res.freq - p) <= 3 * np.sqrt(p * (1 - p) / 100_000)


def test_max_sampler_matches_direct_maxima(rng):
    spec = TailBoundSpec((1.0,), 1.0, 50, z_tau=0.0)
    fast = spec.sample_max(rng, 20_000)
    slow = rng.exponential(size=(20_000, 50)).max(axis=1)
    assert stats.ks_2samp(fast, slow).pvalue > 1e-3


def test_two_term_exceedance(rng):
    res = evt_tail_check(TailBoundSpec((1.0, 0.7), 0.5, 10_000), 10_000, rng)
    assert not res.inconclusive
    assert res.freq >= 0.995


def test_constant_stability(rng):
    res, ratio = evt_constant_stability((1.0, 0.7), 0.5, (100, 1000, 10_000), rng, trials=10_000)
    assert all(not r.inconclusive for r in res)
    assert ratio < 2.0


def test_tail_inconclusive_below_threshold(rng):
    spec = TailBoundSpec((1.0, 0.7), 0.5, 10, z_tau=5.0)
    assert evt_tail_check(spec, 100, rng).inconclusive


# --------------------------------------------------------------------------
# quasi-SINR tail sandwich
# --------------------------------------------------------------------------
@pytest.mark.parametrize("alpha", [0.75, 0.9])
def test_ccdf_sandwich_fig4(fig4_groups, alpha, rng):
    for beam in (0, 1):
        res = ccdf_sandwich_check(fig4_groups, 0, beam, alpha, 10 ** 1.5, 200_000, rng)
        assert 0 < res.zeta < 1
        assert res.passed
        # the conditional-norm dominance holds on the strongest beam only;
        # the weaker cone tilts the norm toward its smaller eigenvalue
        assert res.lemma4_passed == (beam == 0)


def test_cone_conditioning_neutral_for_equal_eigenvalues(rng):
    prof = GroupProfile(np.eye(3, dtype=complex), np.ones(3), 3)
    res = ccdf_sandwich_check([prof], 0, 1, 0.7, 10.0, 200_000, rng, eps=1e-6)
    np.testing.assert_allclose(res.cond_ccdf, res.ccdf, atol=4 * res.cond_sigma.max())


def test_ccdf_sandwich_correlated(rng):
    groups = [GroupProfile.from_spec(ExpCorrelation(4, 0.3), 4)]
    res = ccdf_sandwich_check(groups, 0, 0, 0.7, 10.0, 200_000, rng, eps=1e-6)
    assert res.passed and res.lemma4_passed


# --------------------------------------------------------------------------
# log log slope
# --------------------------------------------------------------------------
def test_slope_single_user_single_beam(rng):
    # one antenna, one beam: best of K users has gain ~ log K
    prof = GroupProfile.from_spec(DftColumns(1, 0, 1, (1.0,)), 1)
    Ks = np.array([100, 1000, 10_000, 100_000])
    rho = 1e4
    means = [np.mean(np.log1p(rho * rng.exponential(size=(400, K)).max(axis=1))) for K in Ks]
    fit = fit_loglog_slope(Ks, means, [prof], rho, 1)
    assert fit.beta == 1
    # at high SNR the form log(1 + rho log K) has unit log log slope
    assert fit.predicted_slope == pytest.approx(1.0, abs=0.01)
    assert fit.ratio_to_beta == pytest.approx(1.0, abs=0.15)
    assert np.max(np.abs(np.asarray(means) - fit.predicted)) < 0.2


def test_slope_fit_needs_three_points():
    prof = GroupProfile.from_spec(DftColumns(1, 0, 1, (1.0,)), 1)
    with pytest.raises(ValueError):
        fit_loglog_slope([100, 1000], [1.0, 2.0], [prof], 1.0, 1)


def test_slope_fit_beta_is_min_of_dims(fig4_groups):
    fit = fit_loglog_slope([100, 1000, 10_000], [1.0, 2.0, 3.0], fig4_groups, 10.0, 4)
    assert fit.beta == 4
    np.testing.assert_allclose(fit.K_prime, [50, 500, 5000])
