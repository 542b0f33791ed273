import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from capgame.bounds import (
    EPSILON_GRID,
    big_gamma,
    blend_label,
    cubic_ratio,
    gamma,
    optimal_lower_bound,
    optimal_upper_bound,
    p2_slacks,
    predict,
    prop1_lower_bound,
    prop1_upper_bound,
    prop2_sandwich,
    short_blend_label,
    split_label,
    taylor_remainder,
    verify_witness_lower,
    verify_witness_split,
    verify_witness_upper,
    witness_speculators,
)
from capgame.errors import CAPGameError, MissingLedgerError
from capgame.moments import capm_residual, moments_of_path
from capgame.protocol import GameConfig, Play, play_batch, run_game
from capgame.strategies import (
    AlternatingMarket,
    DeterministicMarket,
    FixedWeights,
    GBMMarket,
    HoldIndex,
    adversarial,
)

from conftest import HAND_M, HAND_S

EPS = (0.01, 0.1, 0.3)
ALPHAS = (0.5, 0.1, 0.01)


def zero_summary(n=10, dt=0.1):
    return moments_of_path(np.zeros(n), np.zeros(n), dt)


def hand_summary():
    return moments_of_path(np.array(HAND_S), np.array(HAND_M), 1.0)


def play_on(x, g, epsilons=EPS, dt=0.01):
    cfg = GameConfig(x.shape[1] - 1, x.shape[0], dt)
    return play_batch(cfg, g, x, witness_speculators(epsilons))


class TestEnvelopes:
    def test_gamma_values(self):
        assert gamma(0.0) == 0.0
        assert gamma(1.0) == pytest.approx(1 / 24, rel=1e-15)
        assert gamma(-0.5) == pytest.approx(-1 / 3, rel=1e-15)

    def test_big_gamma_values(self):
        assert big_gamma(0.0) == 0.0
        assert big_gamma(0.3) == pytest.approx(0.009, rel=1e-14)
        assert big_gamma(-0.1) == pytest.approx(-1 / 3000, rel=1e-14)

    @pytest.mark.parametrize("x", [-1.0, -1.5])
    def test_gamma_domain(self, x):
        with pytest.raises(CAPGameError):
            gamma(x)

    def test_taylor_sandwich(self, rng):
        x = rng.uniform(-0.99, 10.0, 100_000)
        r = taylor_remainder(x)
        assert np.all(r - gamma(x) >= -1e-14)
        assert np.all(big_gamma(x) - r >= -1e-14)

    def test_taylor_sandwich_near_zero(self):
        # cancellation-free reference: series ln(1+x) - x + x^2/2 = x^3/3 - x^4/4 + ...
        x = np.array([1e-3, -1e-3, 1e-4])
        series = x**3 / 3 - x**4 / 4 + x**5 / 5
        np.testing.assert_allclose(taylor_remainder(x), series, rtol=1e-5)

    def test_monotone(self):
        grid = np.linspace(-0.99, 10.0, 20_001)
        assert np.all(np.diff(gamma(grid)) >= 0)
        assert np.all(np.diff(big_gamma(grid)) >= 0)

    def test_cubic_ratio(self):
        assert cubic_ratio(1.0) == pytest.approx(1 / 8)
        assert cubic_ratio(-1.0) == math.inf
        np.testing.assert_array_equal(cubic_ratio(np.array([0.0, -2.0])), [0.0, np.inf])


class TestUpperBound:
    def test_all_zero(self):
        assert prop1_upper_bound(zero_summary(), 0.3, 1.0) == 0.0

    def test_single_term(self):
        s = dataclasses.replace(zero_summary(), sigma_diff_sq=0.04)
        assert prop1_upper_bound(s, 0.1, 1.0) == pytest.approx(0.002, rel=1e-14)

    def test_hand_path(self):
        # every statistic typed in from the two-round path, dt = 1, T = 2
        eps, alpha, T = 0.5, 0.5, 2.0
        sig_diff, sig_s, sig_m = 4.625e-4, 2.5e-4, 6.25e-5
        ratio_s = max(0.01 / 1.01**3, 0.02 / 0.98**3)
        ratio_m = max(0.005 / 1.005**3, 0.01 / 1.01**3)
        expected = (
            eps / 2 * sig_diff
            + (sig_s * ratio_s + sig_m * ratio_m + sig_m * 0.01) / (3 * eps)
            + math.log(2) / (T * eps)
        )
        assert prop1_upper_bound(hand_summary(), eps, alpha) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("eps,alpha", [(0.0, 0.5), (1.0, 0.5), (0.5, 0.0), (0.5, -1.0)])
    def test_parameters_checked(self, eps, alpha):
        with pytest.raises(CAPGameError):
            prop1_upper_bound(hand_summary(), eps, alpha)

    def test_optimised_is_grid_minimum(self, rng):
        s = moments_of_path(rng.normal(0, 0.01, 2000), rng.normal(0, 0.008, 2000), 1e-3)
        eps, bound = optimal_upper_bound(s, 0.05)
        assert eps in EPSILON_GRID
        assert bound == min(prop1_upper_bound(s, e, 0.05) for e in EPSILON_GRID)


class TestLowerBound:
    def test_all_zero(self):
        assert prop1_lower_bound(zero_summary(), 0.2, 1.0) == 0.0

    def test_hand_path(self):
        eps, alpha, T = 0.2, 0.5, 2.0
        sig_diff, sig_m = 4.625e-4, 6.25e-5
        # 2m - s = (0, 0.04)
        sig_2ms = 0.04**2 / 2
        ratio_m = max(0.005 / 1.005**3, 0.01 / 1.01**3)
        ratio_2ms = 0.04 / 1.04**3
        expected = -(
            eps / 2 * sig_diff
            + (sig_m * ratio_m + sig_2ms * ratio_2ms + sig_m * 0.01) / (3 * eps)
            + math.log(2) / (T * eps)
        )
        assert prop1_lower_bound(hand_summary(), eps, alpha) == pytest.approx(expected, rel=1e-12)

    def test_negation_symmetry(self):
        base = moments_of_path(np.array(HAND_S), np.array(HAND_M), 1.0)
        sym = dataclasses.replace(base, sigma_2ms_sq=base.sigma_s_sq, max_2ms_ratio=base.max_s_ratio)
        for eps in (0.05, 0.2, 0.3):
            assert prop1_lower_bound(sym, eps, 0.1) == pytest.approx(-prop1_upper_bound(sym, eps, 0.1), rel=1e-15)

    @pytest.mark.parametrize("eps", [1 / 3, 0.5])
    def test_epsilon_below_third(self, eps):
        with pytest.raises(CAPGameError):
            prop1_lower_bound(hand_summary(), eps, 0.5)

    def test_optimised_is_grid_maximum(self):
        eps, bound = optimal_lower_bound(hand_summary(), 0.1)
        assert eps < 1 / 3
        assert bound == max(prop1_lower_bound(hand_summary(), e, 0.1) for e in EPSILON_GRID if e < 1 / 3)


class TestSandwich:
    def test_all_zero(self):
        assert prop2_sandwich(zero_summary()) == (0.0, 0.0)

    def test_s_equals_m(self, rng):
        m = rng.uniform(-0.1, 0.1, 100)
        lower, upper = prop2_sandwich(moments_of_path(m, m, 0.01))
        assert lower >= 0 and upper >= 0

    def test_hand_path(self):
        s, m, T = np.array(HAND_S), np.array(HAND_M), 2.0
        deficit = (np.sum(np.log1p(s)) - np.sum(np.log1p(m))) / T + 0.5 * np.sum((s - m) ** 2) / T
        capm = np.sum(s - m) / T + np.sum(m * m - s * m) / T
        lhs = capm - np.sum(np.abs((s / (1 + s)) ** 3 / 3)) / T - np.sum(m**3 / 3) / T
        rhs = capm + np.sum(s**3 / 3) / T + np.sum(np.abs((m / (1 + m)) ** 3 / 3)) / T
        lower, upper = prop2_sandwich(hand_summary())
        assert lower == pytest.approx(deficit - lhs, rel=1e-9)
        assert upper == pytest.approx(rhs - deficit, rel=1e-9)
        assert lower >= 0 and upper >= 0

    @given(st.lists(st.tuples(st.floats(-0.9, 3.0), st.floats(-0.9, 3.0)), min_size=1, max_size=50))
    @settings(max_examples=300, deadline=None)
    def test_gaps_nonnegative(self, pairs):
        s, m = np.array(pairs).T
        lower, upper = prop2_sandwich(moments_of_path(s, m, 0.01))
        assert lower >= -1e-12 and upper >= -1e-12

    def test_slacks_are_correction_sums(self):
        lo, up = p2_slacks(hand_summary())
        s, m = np.array(HAND_S), np.array(HAND_M)
        assert lo == pytest.approx((np.sum(np.abs(gamma(s))) + np.sum(big_gamma(m))) / 2, rel=1e-12)
        assert up == pytest.approx((np.sum(big_gamma(s)) + np.sum(np.abs(gamma(m)))) / 2, rel=1e-12)


class TestWitness:
    def test_s_equals_m_clause_two(self, rng):
        x = np.tile(rng.normal(0, 0.01, (300, 1)), (1, 2))
        play = play_on(x, np.array([0.5, 0.5]))
        assert play.capm_residual == 0.0
        for eps in EPS:
            for alpha in ALPHAS:
                assert verify_witness_upper(play, eps, alpha)
                assert verify_witness_lower(play, eps, alpha)
                assert verify_witness_split(play, eps, alpha)

    def test_clause_one_alone_suffices(self):
        play = play_on(np.zeros((5, 2)), np.array([1.0, 0.0]))
        play.speculator_capitals[blend_label(0.1)] = 100.0
        play.speculator_capitals[short_blend_label(0.1)] = 100.0
        play.speculator_capitals[split_label(0.1)] = 100.0
        # bound scaled to -inf side: clause two fails, clause one carries the verdict
        assert verify_witness_upper(play, 0.1, 0.5, scale=-1.0)
        assert verify_witness_lower(play, 0.1, 0.5, scale=-1.0)
        assert verify_witness_split(play, 0.1, 0.5, scale=-1.0)

    def test_zero_scale_flags_quiet_play(self, rng):
        x = rng.normal(0.0, 0.01, (500, 2))
        play = play_on(x, np.array([0.0, 1.0]))
        if play.capm_residual > 0:
            assert not verify_witness_upper(play, 0.1, 0.5, scale=0.0)
        else:
            assert not verify_witness_lower(play, 0.1, 0.5, scale=0.0)

    def test_missing_ledger(self):
        play = play_on(np.zeros((3, 2)), np.array([1.0, 0.0]), epsilons=(0.1,))
        with pytest.raises(MissingLedgerError):
            verify_witness_upper(play, 0.2, 0.5)
        with pytest.raises(MissingLedgerError):
            verify_witness_lower(play, 0.2, 0.5)

    @pytest.mark.parametrize("seed", range(20))
    def test_gbm_paths(self, seed):
        cfg = GameConfig(1, 2000, 1e-3)
        x = GBMMarket([0.05, 0.08], [0.2, 0.5], 0.3, seed=seed).returns(cfg)
        play = play_on(x, np.array([-0.5, 1.5]), dt=1e-3)
        for eps in EPS:
            for alpha in ALPHAS:
                assert verify_witness_upper(play, eps, alpha)
                assert verify_witness_lower(play, eps, alpha)
                assert verify_witness_split(play, eps, alpha)

    @pytest.mark.parametrize("amplitude", [0.001, 0.05, 0.2])
    def test_alternating_paths(self, amplitude):
        cfg = GameConfig(1, 1000, 0.01)
        x = AlternatingMarket(amplitude, 2).returns(cfg)
        for g in ([0.0, 1.0], [2.0, -1.0], [-1.0, 2.0]):
            play = play_on(x, np.array(g))
            for eps in EPS:
                for alpha in ALPHAS:
                    assert verify_witness_upper(play, eps, alpha)
                    assert verify_witness_lower(play, eps, alpha)

    def test_large_moves_path(self):
        # few rounds, big returns: the cubic terms dominate
        x = np.array([[0.3, -0.4], [-0.2, 0.9], [0.5, -0.45], [-0.1, 0.2]])
        play = play_on(x, np.array([0.0, 1.0]), dt=0.25)
        for eps in EPS:
            for alpha in ALPHAS:
                assert verify_witness_upper(play, eps, alpha)
                assert verify_witness_lower(play, eps, alpha)

    def test_engine_route(self):
        cfg = GameConfig(1, 400, 0.01)
        market = GBMMarket([0.05, 0.08], [0.2, 0.3], 0.5, seed=8)
        state, acc = run_game(cfg, FixedWeights([0.5, 0.5]), dict(witness_speculators(EPS)), market)
        play = Play.from_game(state, acc)
        for eps in EPS:
            for alpha in ALPHAS:
                assert verify_witness_upper(play, eps, alpha)
                assert verify_witness_lower(play, eps, alpha)
                assert verify_witness_split(play, eps, alpha)

    def test_replayed_adversary(self):
        rows = [[0.02, -0.03], [-0.02, 0.04]] * 50
        cfg = GameConfig(1, 100, 0.01)
        state, acc = run_game(cfg, HoldIndex(), dict(witness_speculators((0.1,))), adversarial("replay", rows=rows))
        play = Play.from_game(state, acc)
        assert play.capm_residual == 0.0
        assert verify_witness_upper(play, 0.1, 0.1)


class TestPredict:
    def test_fields(self):
        cfg = GameConfig(1, 500, 0.01)
        x = GBMMarket([0.05, 0.08], [0.2, 0.3], 0.5, seed=1).returns(cfg)
        play = play_on(x, np.array([0.5, 0.5]))
        report = predict(play, 0.1, 0.1)
        assert report.capm_residual == capm_residual(play.summary)
        assert report.upper_bound_p1 == prop1_upper_bound(play.summary, 0.1, 0.1)
        assert report.lower_bound_p1 == prop1_lower_bound(play.summary, 0.1, 0.1)
        assert (report.p2_lower_slack, report.p2_upper_slack) == p2_slacks(play.summary)
        assert report.speculator_terminal_ratio_blend == pytest.approx(
            play.speculator_capitals[blend_label(0.1)] / play.index_capital
        )
        assert report.witness_verdict_upper and report.witness_verdict_lower
        assert set(report.to_dict()) >= {"epsilon", "alpha", "witness_verdict_upper"}


def test_bound_tightens_with_dt():
    gbm = GBMMarket([0.05, 0.08], [0.2, 0.3], 0.5, seed=0)
    horizon = 20.0
    fine = np.random.default_rng(0).standard_normal((int(horizon / 1e-4), 2))
    bounds = []
    for factor, dt in ((100, 1e-2), (10, 1e-3), (1, 1e-4)):
        z = fine.reshape(-1, factor, 2).sum(axis=1) / math.sqrt(factor)
        cfg = GameConfig(1, z.shape[0], dt)
        x = gbm.returns(cfg, noise=z)
        play = play_batch(cfg, np.array([0.5, 0.5]), x)
        bounds.append(optimal_upper_bound(play.summary, 0.05)[1])
    assert bounds[0] > bounds[1] > bounds[2]
