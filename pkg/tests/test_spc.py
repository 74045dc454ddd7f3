import json
import math
import warnings

import numpy as np
import pytest

from graphwatch import spc


def test_constant_sample_quantile():
    for p in (0.1, 0.5, 0.8, 0.95):
        assert spc.empirical_quantile([7.0] * 9, p) == 7.0


def test_median_of_five():
    assert spc.empirical_quantile([5, 1, 4, 2, 3], 0.5) == 3.0


def test_interpolated_quantile():
    # h = 99 * 0.95 + 1 = 95.05 -> between the 95th and 96th order statistics
    assert spc.empirical_quantile(np.arange(1, 101), 0.95) == pytest.approx(95.05, abs=1e-12)


def test_quantile_matches_numpy_linear():
    rng = np.random.default_rng(0)
    for _ in range(200):
        x = rng.exponential(size=int(rng.integers(1, 60)))
        p = float(rng.uniform(0.01, 0.99))
        assert spc.empirical_quantile(x, p) == pytest.approx(np.quantile(x, p), rel=1e-12, abs=1e-14)


@pytest.mark.parametrize("samples, p", [([], 0.5), ([1.0], 0.0), ([1.0], 1.0)])
def test_quantile_rejects(samples, p):
    with pytest.raises(ValueError):
        spc.empirical_quantile(samples, p)


def test_control_limit_arl_1000():
    assert spc.control_limit(1000) == pytest.approx(13.8155, abs=1e-3)
    assert spc.control_limit(1000) == pytest.approx(-2 * math.log(0.001), rel=1e-14)


def test_control_limit_alpha_inverse_e():
    assert spc.control_limit(math.e) == pytest.approx(2.0, rel=1e-12)


@pytest.mark.parametrize("prob, df, expect", [(0.999, 2, 13.8155), (0.5, 2, 1.3863), (0.95, 1, 3.8415)])
def test_chi_square_quantile(prob, df, expect):
    assert spc.chi_square_quantile(prob, df) == pytest.approx(expect, abs=1e-4)


def test_chi_square_df1_matches_normal_oracle():
    # square of the standard normal 0.975 quantile found by bisection on erf
    lo, hi = 0.0, 5.0
    for _ in range(200):
        mid = (lo + hi) / 2
        if 0.5 * (1 + math.erf(mid / math.sqrt(2))) < 0.975:
            lo = mid
        else:
            hi = mid
    assert spc.chi_square_quantile(0.95, 1) == pytest.approx(lo**2, rel=1e-10)


@pytest.mark.parametrize("df", [1, 3, 4, 7, 10])
def test_chi_square_general_df_matches_scipy(df):
    from scipy import stats

    for prob in (0.1, 0.5, 0.95, 0.999):
        assert spc.chi_square_quantile(prob, df) == pytest.approx(stats.chi2.ppf(prob, df), rel=1e-10)


def _state(q0, sigma, limit=13.8155):
    sigma = np.asarray(sigma, dtype=float)
    return spc.QuantileChartState(np.asarray(q0, dtype=float), sigma, np.linalg.inv(sigma), limit, 1000.0)


def test_statistic_zero_at_mean():
    assert spc.statistic(_state([1, 2], [[2, 0.5], [0.5, 1]]), [1, 2]) == 0.0


def test_statistic_identity():
    assert spc.statistic(_state([0, 0], np.eye(2)), [1, 1]) == pytest.approx(2.0, rel=1e-15)


def test_statistic_diagonal():
    assert spc.statistic(_state([0, 0], np.diag([4.0, 1.0])), [2, 3]) == pytest.approx(10.0, rel=1e-15)


def test_monitor_boundary():
    st = _state([0, 0], np.eye(2), limit=2.0)
    assert spc.monitor(st, [1, 1]) == (True, pytest.approx(2.0))
    assert spc.monitor(st, [0, 0]) == (False, 0.0)


def test_statistics_vectorised_matches_scalar():
    rng = np.random.default_rng(1)
    q = rng.normal(size=(50, 2)) @ np.array([[1, 0.3], [0, 0.5]])
    st = spc.calibrate(q)
    pts = rng.normal(size=(20, 2))
    np.testing.assert_allclose(spc.statistics(st, pts), [spc.statistic(st, p) for p in pts], rtol=1e-13)


def test_calibrate_moments():
    rng = np.random.default_rng(2)
    q = rng.normal(size=(500, 2))
    st = spc.calibrate(q)
    np.testing.assert_allclose(st.q0, q.mean(0), rtol=1e-14)
    np.testing.assert_allclose(st.sigma0, np.cov(q.T), rtol=1e-14)
    assert st.control_limit == pytest.approx(13.815510557964274)
    assert not st.regularized


def test_identical_days_regularise():
    with pytest.warns(spc.RegularizationWarning):
        st = spc.calibrate([[5.0, 8.0]] * 10)
    assert st.regularized
    assert np.isfinite(st.sigma0_inverse).all()


def test_collinear_days_regularise():
    x = np.linspace(0, 1, 20)
    with pytest.warns(spc.RegularizationWarning):
        st = spc.calibrate(np.column_stack([x, 2 * x]))
    assert st.regularized


def test_calibrate_rejects_short_or_nonfinite():
    with pytest.raises(ValueError):
        spc.calibrate([[1.0, 2.0]])
    with pytest.raises(ValueError):
        spc.calibrate([[1.0, np.nan], [2.0, 3.0]])


def test_state_roundtrip_is_exact():
    rng = np.random.default_rng(3)
    st = spc.calibrate(rng.gamma(2.0, size=(100, 2)))
    again = spc.QuantileChartState.from_dict(json.loads(json.dumps(st.to_dict())))
    np.testing.assert_array_equal(again.q0, st.q0)
    np.testing.assert_array_equal(again.sigma0_inverse, st.sigma0_inverse)
    assert again.control_limit == st.control_limit


def test_state_version_checked():
    d = spc.calibrate(np.random.default_rng(0).normal(size=(10, 2))).to_dict()
    d["version"] = 9
    with pytest.raises(ValueError):
        spc.QuantileChartState.from_dict(d)


def test_well_conditioned_no_warning():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        spc.calibrate(np.random.default_rng(4).normal(size=(30, 2)))
