import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from boostcp.conformal import (CalibratedQuantile, Intervals, calibrate, empirical_quantile,
                               interval_cqr, interval_local, order_index, split_conformal)
from boostcp.scores import CqrScoreEval, LocalScoreEval, local_score


def _brute_quantile(z, alpha):
    """Smallest score whose mass (1/(n+1) each, plus +inf) reaches 1 - alpha."""
    z = np.sort(z)
    n = z.size
    for i, v in enumerate(z, start=1):
        if i / (n + 1) >= 1 - alpha - 1e-12:
            return v
    return math.inf


@pytest.mark.parametrize("scores, alpha, expected", [
    (range(1, 10), 0.1, 9.0),
    ([1, 2, 3], 0.5, 2.0),
    ([5], 0.1, math.inf),
    (range(1, 100), 0.1, 90.0),
    ([4.2] * 17, 0.1, 4.2),
])
def test_empirical_quantile_examples(scores, alpha, expected):
    q = empirical_quantile(np.array(list(scores), float), alpha)
    assert q.value == expected
    assert calibrate(np.array(list(scores), float), alpha).value == expected


def test_order_index_boundary_n19():
    assert order_index(19, 0.05) == 19
    assert empirical_quantile(np.arange(1.0, 20.0), 0.05).value == 19.0
    assert empirical_quantile(np.arange(1.0, 19.0), 0.05).value == math.inf


def test_empirical_quantile_errors():
    with pytest.raises(ValueError):
        empirical_quantile(np.array([]), 0.1)
    with pytest.raises(ValueError):
        empirical_quantile(np.array([1.0]), 1.5)


@settings(max_examples=200)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=60), st.sampled_from([0.05, 0.1, 0.2, 0.5]))
def test_quantile_matches_mass_function(values, alpha):
    z = np.array(values)
    assert empirical_quantile(z, alpha).value == _brute_quantile(z, alpha)


@settings(max_examples=100)
@given(st.lists(st.floats(0, 50), min_size=5, max_size=60), st.sampled_from([0.1, 0.2]))
def test_monotone_invariance(values, alpha):
    z = np.array(values)
    g = lambda t: np.exp(t / 10) + 3 * t  # noqa: E731 - strictly increasing
    q = empirical_quantile(z, alpha).value
    qg = empirical_quantile(g(z), alpha).value
    if math.isinf(q):
        assert math.isinf(qg)
    else:
        assert qg == g(np.array([q]))[0]


def test_interval_local_examples():
    iv = interval_local(np.array([0.0]), np.array([1.0]), 2.0)
    assert (iv.lower[0], iv.upper[0]) == (-2.0, 2.0)
    iv = interval_local(np.array([1.5]), np.array([3.0]), 0.0)
    assert iv.lower[0] == iv.upper[0] == 1.5
    iv = interval_local(np.array([1.5]), np.array([3.0]), CalibratedQuantile(math.inf, 0.1, 3))
    assert iv.lower[0] == -math.inf and iv.upper[0] == math.inf


@pytest.mark.parametrize("q, lo, hi", [(0.5, 0.5, 3.5), (-0.5, 1.5, 2.5), (0.0, 1.0, 3.0)])
def test_interval_cqr_examples(q, lo, hi):
    e = CqrScoreEval(np.array([1.0]), np.array([3.0]), np.array([1.0]))
    iv = interval_cqr(e, q)
    assert (iv.lower[0], iv.upper[0]) == (lo, hi)


def test_interval_local_equals_set_inversion():
    mu, sigma, q = 0.3, 0.7, 1.25
    grid = np.linspace(-3, 3, 6001)
    e = LocalScoreEval(np.full(grid.size, mu), np.full(grid.size, np.log(sigma)))
    inside = grid[local_score(e, grid) <= q]
    iv = interval_local(np.array([mu]), np.array([sigma]), q)
    step = grid[1] - grid[0]
    assert iv.lower[0] <= inside.min() < iv.lower[0] + step
    assert iv.upper[0] - step < inside.max() <= iv.upper[0]


def test_intervals_validation_and_scaling():
    with pytest.raises(ValueError):
        Intervals(np.array([1.0]), np.array([0.0]))
    iv = Intervals(np.array([-1.0, 0.0]), np.array([1.0, 2.0])).scaled(3.0)
    np.testing.assert_array_equal(iv.length, [6.0, 6.0])


def test_split_conformal_coverage_is_in_sandwich():
    # 400 reps of n2=99 calibration points; coverage of 200 fresh test points each
    rng = np.random.default_rng(2024)
    alpha, n2, reps, m = 0.1, 99, 400, 200
    covs = np.empty(reps)
    for r in range(reps):
        yc, yt = rng.standard_normal(n2), rng.standard_normal(m)
        e_c = LocalScoreEval(np.zeros(n2), np.zeros(n2))
        e_t = LocalScoreEval(np.zeros(m), np.zeros(m))
        _, iv = split_conformal(e_c, yc, e_t, alpha)
        covs[r] = np.mean((iv.lower <= yt) & (yt <= iv.upper))
    se = covs.std(ddof=1) / np.sqrt(reps)
    assert 1 - alpha - 3 * se <= covs.mean() <= 1 - alpha + 2 / (n2 + 2) + 3 * se
