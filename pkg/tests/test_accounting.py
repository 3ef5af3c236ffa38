import math

import numpy as np
import pytest

from dpsynth.accounting import (
    DEFAULT_ORDERS,
    MomentsAccountant,
    laplace_vote_log_moments,
    subsampled_gaussian_log_moments,
)

from _oracles import renyi_log_moment_quad, subsampled_gaussian_epsilon_quad


def test_fresh_state_reports_zero():
    assert MomentsAccountant().epsilon_at(1e-5) == 0.0


def test_zero_steps_change_nothing():
    acct = MomentsAccountant()
    acct.step_subsampled_gaussian(0.01, 1.1, 0)
    acct.step_laplace_vote(2.0, 0)
    assert acct.epsilon_at(1e-5) == 0.0
    assert acct.history == []


def test_epsilon_monotone_in_steps():
    acct = MomentsAccountant()
    prev = acct.epsilon_at(1e-5)
    for _ in range(25):
        acct.step_subsampled_gaussian(0.02, 1.3, 4)
        cur = acct.epsilon_at(1e-5)
        assert cur >= prev
        prev = cur


def test_epsilon_monotone_in_delta():
    acct = MomentsAccountant().step_subsampled_gaussian(0.01, 1.1, 500)
    assert acct.epsilon_at(1e-6) >= acct.epsilon_at(1e-5) >= acct.epsilon_at(1e-3)


def test_monotonicity_random_grid():
    # epsilon non-decreasing in steps and q, non-increasing in sigma and lam
    rng = np.random.default_rng(0)
    for _ in range(100):
        q = float(rng.uniform(0.001, 0.2))
        sigma = float(rng.uniform(0.8, 4.0))
        steps = int(rng.integers(1, 400))
        base = MomentsAccountant().step_subsampled_gaussian(q, sigma, steps)
        more_steps = MomentsAccountant().step_subsampled_gaussian(q, sigma, steps + 10)
        more_q = MomentsAccountant().step_subsampled_gaussian(min(1.0, q * 1.3), sigma, steps)
        more_sigma = MomentsAccountant().step_subsampled_gaussian(q, sigma * 1.3, steps)
        e = base.epsilon_at(1e-5)
        assert more_steps.epsilon_at(1e-5) >= e - 1e-12
        assert more_q.epsilon_at(1e-5) >= e - 1e-12
        assert more_sigma.epsilon_at(1e-5) <= e + 1e-12

        lam = float(rng.uniform(0.5, 50.0))
        votes = MomentsAccountant().step_laplace_vote(lam, steps)
        assert (
            MomentsAccountant().step_laplace_vote(lam, 2 * steps).epsilon_at(1e-5)
            >= votes.epsilon_at(1e-5) - 1e-12
        )
        assert (
            MomentsAccountant().step_laplace_vote(lam * 1.5, steps).epsilon_at(1e-5)
            <= votes.epsilon_at(1e-5) + 1e-12
        )


def test_subsampled_gaussian_matches_integration_oracle():
    # the acceptance configuration, checked against adaptive quadrature
    q, sigma, steps, delta = 0.01, 1.1, 1000, 1e-5
    acct = MomentsAccountant().step_subsampled_gaussian(q, sigma, steps)
    ours = acct.epsilon_at(delta)
    oracle = subsampled_gaussian_epsilon_quad(q, sigma, steps, delta, acct.orders)
    assert ours == pytest.approx(oracle, rel=0.02)


def test_per_order_moments_match_oracle_at_small_orders():
    q, sigma = 0.0128, 1.3
    ours = subsampled_gaussian_log_moments(q, sigma, (2, 4, 8, 16))
    for lm, order in zip(ours, (2, 4, 8, 16)):
        assert lm == pytest.approx(renyi_log_moment_quad(q, sigma, order + 1), rel=1e-6, abs=1e-9)


def test_full_batch_reduces_to_plain_gaussian():
    # q = 1: log moment at order l is l (l + 1) / (2 sigma^2)
    sigma = 2.0
    orders = (2, 5, 10)
    ours = subsampled_gaussian_log_moments(1.0, sigma, orders)
    for lm, l in zip(ours, orders):
        assert lm == pytest.approx(l * (l + 1) / (2 * sigma * sigma), rel=1e-12)


def test_laplace_vote_single_query_bound():
    # one sensitivity-1 query at scale lam is (1/lam)-DP; the conversion adds
    # exactly log(1/delta)/max_order of slack
    lam, delta = 1000.0, 1e-5
    acct = MomentsAccountant().step_laplace_vote(lam, 1)
    slack = math.log(1.0 / delta) / max(acct.orders)
    assert acct.epsilon_at(delta) <= 1.0 / lam + slack + 1e-12


def test_laplace_vote_moment_bound_shape():
    lams = laplace_vote_log_moments(2.0, (1, 2, 10))
    eps_q = 0.5
    for lm, l in zip(lams, (1, 2, 10)):
        assert lm == pytest.approx(min(l * eps_q, 0.5 * eps_q**2 * l * (l + 1)))


def test_rejects_invalid_parameters():
    acct = MomentsAccountant()
    with pytest.raises(ValueError):
        acct.step_subsampled_gaussian(0.0, 1.0)
    with pytest.raises(ValueError):
        acct.step_subsampled_gaussian(0.5, -1.0)
    with pytest.raises(ValueError):
        acct.step_laplace_vote(0.0)
    with pytest.raises(ValueError):
        acct.epsilon_at(0.0)
    with pytest.raises(ValueError):
        MomentsAccountant(orders=())
    with pytest.raises(ValueError):
        MomentsAccountant(orders=(2, 2))


def test_json_round_trip():
    acct = MomentsAccountant((2, 4, 8))
    acct.step_subsampled_gaussian(0.05, 1.5, 7)
    acct.step_laplace_vote(3.0, 11)
    back = MomentsAccountant.from_json(acct.to_json())
    assert back.orders == acct.orders
    assert np.allclose(back.log_moments, acct.log_moments)
    assert back.history == acct.history
    assert back.epsilon_at(1e-5) == acct.epsilon_at(1e-5)


def test_history_merges_repeated_configs():
    acct = MomentsAccountant()
    acct.step_subsampled_gaussian(0.01, 1.1, 3)
    acct.step_subsampled_gaussian(0.01, 1.1, 2)
    acct.step_subsampled_gaussian(0.02, 1.1, 1)
    assert [h["steps"] for h in acct.history] == [5, 1]


def test_default_orders_reach_deep_budgets():
    # the conversion floor log(1/delta)/max_order must sit below 0.1
    assert math.log(1e5) / max(DEFAULT_ORDERS) < 0.1
