import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from boostcp.gbm import (BoostingError, Ensemble, SplitGrid, Stump, StumpModel, boost_trajectory, fit_gbm,
                         fit_stump, predict)
from boostcp.losses import LossGrad
from boostcp.pipeline import ConstantBase


def sse(t):
    return float(np.sum((t - t.mean()) ** 2))


def test_fit_stump_two_groups():
    X = np.array([[0.0], [0.0], [1.0], [1.0]])
    st_ = fit_stump(X, np.array([1.0, 1.0, -1.0, -1.0]))
    assert st_.feature == 0 and 0 < st_.threshold < 1
    assert (st_.left_value, st_.right_value) == (1.0, -1.0)


def test_fit_stump_constant_targets():
    X = np.random.default_rng(0).uniform(size=(20, 3))
    st_ = fit_stump(X, np.full(20, 2.5))
    np.testing.assert_allclose(st_.predict(X), 2.5, rtol=0, atol=1e-15)


def test_fit_stump_reduces_sse():
    x = np.arange(1.0, 21.0)
    st_ = fit_stump(x[:, None], x)
    resid = x - st_.predict(x[:, None])
    assert np.sum(resid ** 2) < sse(x)
    assert st_.threshold == pytest.approx(10.5)


def test_fit_stump_no_valid_split():
    X = np.ones((5, 2))
    st_ = fit_stump(X, np.array([1.0, 2.0, 3.0, 4.0, 5.0]))
    assert st_.threshold == -math.inf
    np.testing.assert_array_equal(st_.predict(X), 3.0)


def test_fit_stump_tie_break_lowest_feature():
    x = np.arange(10.0)
    X = np.column_stack([x, x, x])
    assert fit_stump(X, (x > 4).astype(float)).feature == 0


def test_fit_stump_errors():
    with pytest.raises(ValueError):
        fit_stump(np.zeros((3, 1)), np.array([1.0, np.nan, 0.0]))
    with pytest.raises(ValueError):
        fit_stump(np.zeros((3, 1)), np.zeros(2))


def test_stump_threshold_is_a_grid_cut():
    X = np.random.default_rng(1).normal(size=(500, 2))
    grid = SplitGrid(X)
    st_ = fit_stump(X, X[:, 1] ** 3, grid)
    assert st_.threshold in set(grid.cuts[st_.feature])


def _toy():
    X = np.repeat(np.arange(4.0), 5)[:, None]
    y = np.repeat([3.0, -1.0, 2.0, 0.5], 5)
    return X, y


def test_quadratic_toy_loss_decreases():
    X, y = _toy()
    n = y.size
    quad = lambda mu, s: LossGrad(float(np.sum((mu - y) ** 2)), 2 * (mu - y), np.zeros(n))  # noqa: E731
    traj = boost_trajectory(X, np.zeros(n), np.zeros(n), quad, 40, learning_rate=0.5, grad_scale=1.0)
    losses = np.array(traj.losses)
    floor = 1e-20
    active = losses[:-1] > floor
    assert np.all(np.diff(losses)[active] < 0)
    assert losses[-1] < 1e-6 * losses[0]


def test_zero_gradient_is_noop():
    X, y = _toy()
    n = y.size
    zero = lambda mu, s: LossGrad(0.0, np.zeros(n), np.zeros(n))  # noqa: E731
    mu0 = np.linspace(-1, 1, n)
    traj = boost_trajectory(X, mu0, np.zeros(n), zero, 5)
    mu, s = predict(traj[-1], X, (mu0, np.zeros(n)))
    np.testing.assert_array_equal(mu, mu0)
    np.testing.assert_array_equal(s, 0.0)


def test_zero_rounds_returns_initialization():
    X, y = _toy()
    traj = boost_trajectory(X, y, -y, lambda m, s: 1 / 0, 0)
    assert len(traj) == 1 and traj.losses == []
    mu, s = predict(traj[0], X, (y, -y))
    np.testing.assert_array_equal(mu, y)
    np.testing.assert_array_equal(s, -y)


def _grad(y):
    def fn(mu, s):
        return LossGrad(float(np.mean((mu - y) ** 2 + s ** 2)), 2 * (mu - y) / y.size, 2 * (s - 0.3) / y.size)
    return fn


def test_replay_and_prefix_property():
    rng = np.random.default_rng(2)
    X = rng.uniform(size=(120, 3))
    y = np.sin(4 * X[:, 0]) + X[:, 1]
    seen = []

    def recording(mu, s):
        seen.append((mu.copy(), s.copy()))
        return _grad(y)(mu, s)

    mu0, s0 = np.zeros(120), np.zeros(120)
    full = boost_trajectory(X, mu0, s0, recording, 12, 0.1)
    assert len(full) == 13 and len(seen) == 12
    for t in range(12):
        mu_t, s_t = predict(full[t], X, (mu0, s0))
        np.testing.assert_array_equal(mu_t, seen[t][0])
        np.testing.assert_array_equal(s_t, seen[t][1])
    short = boost_trajectory(X, mu0, s0, _grad(y), 5, 0.1)
    assert short.ensemble.stumps_mu == full[5].stumps_mu
    assert short.ensemble.stumps_log_sigma == full[5].stumps_log_sigma


def test_determinism():
    rng = np.random.default_rng(3)
    X = rng.uniform(size=(80, 2))
    y = X[:, 0] * 3
    a = boost_trajectory(X, np.zeros(80), np.zeros(80), _grad(y), 8)
    b = boost_trajectory(X, np.zeros(80), np.zeros(80), _grad(y), 8)
    assert a.ensemble.to_json() == b.ensemble.to_json()


def test_non_finite_gradient_aborts_with_round():
    X, y = _toy()
    n = y.size
    calls = []

    def bad(mu, s):
        calls.append(1)
        d = np.zeros(n)
        if len(calls) == 3:
            d[4] = np.inf
        return LossGrad(0.0, np.zeros(n), d)

    with pytest.raises(BoostingError, match="round 2: non-finite d_log_sigma at rows \\[4\\]"):
        boost_trajectory(X, np.zeros(n), np.zeros(n), bad, 5)


def test_predict_formula_and_errors():
    base = ConstantBase(1.0, -0.5)
    st_ = Stump(0, 0.5, 2.0, -4.0)
    ens = Ensemble(base, [st_], [Stump(1, 0.0, 0.0, 0.0)], 0.1)
    X = np.array([[0.2, 1.0], [0.9, 1.0]])
    mu, s = predict(ens, X)
    np.testing.assert_allclose(mu, [1.0 + 0.1 * 2.0, 1.0 - 0.1 * 4.0])
    np.testing.assert_allclose(s, -0.5)
    mu, s = predict(Ensemble(base, [], [], 0.1), X)
    np.testing.assert_array_equal(mu, 1.0)
    with pytest.raises(ValueError):
        predict(ens, np.ones((2, 1)))
    with pytest.raises(ValueError):
        predict(Ensemble(None, [], [], 0.1), X)


def test_ensemble_json_and_truncate():
    ens = Ensemble(ConstantBase(), [Stump(0, 0.5, 1.0, 2.0)], [Stump(0, 0.5, 0.0, 1.0)], 0.05)
    d = json.loads(ens.to_json())
    assert d["learning_rate"] == 0.05 and d["base"]["kind"] == "constant"
    assert Stump.from_dict(d["stumps_mu"][0]) == ens.stumps_mu[0]
    assert ens.truncate(0).rounds == 0
    with pytest.raises(IndexError):
        ens.truncate(2)


def test_fit_gbm_squared_and_pinball():
    rng = np.random.default_rng(4)
    X = rng.uniform(size=(400, 1))
    y = 3 * (X[:, 0] > 0.5) + rng.normal(scale=0.1, size=400)
    m = fit_gbm(X, y, 50, 0.2)
    assert np.mean((m.predict(X) - y) ** 2) < 0.05
    assert fit_gbm(X, y, 0, 0.1).predict(X[:3]).tolist() == [float(np.mean(y))] * 3
    c = fit_gbm(X, np.full(400, 1.25), 10, 0.1, "pinball", 0.9)
    np.testing.assert_allclose(c.predict(X), 1.25)
    back = StumpModel.from_dict(m.to_dict())
    np.testing.assert_array_equal(back.predict(X), m.predict(X))
    with pytest.raises(ValueError):
        fit_gbm(X, y, 5, 0.1, "huber")


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 8), st.integers(0, 1000))
def test_prefix_property_random(t, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(60, 2))
    y = rng.normal(size=60)
    full = boost_trajectory(X, np.zeros(60), np.zeros(60), _grad(y), 8)
    part = boost_trajectory(X, np.zeros(60), np.zeros(60), _grad(y), t)
    assert part.ensemble.to_json() == full[t].to_json()
