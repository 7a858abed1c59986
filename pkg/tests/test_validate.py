import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from no2daily.errors import InputError
from no2daily.validate import calibration, semivariogram


def _keyed(values):
    return {(f"S{i // 4}", i % 4): float(v) for i, v in enumerate(values)}


def test_perfect_prediction():
    z = np.linspace(5, 40, 40)
    rep = calibration(_keyed(z), _keyed(z))
    assert rep.alpha0 == pytest.approx(0.0, abs=1e-12)
    assert rep.alpha1 == pytest.approx(1.0, abs=1e-12)
    assert rep.predictive_r2 == pytest.approx(1.0, abs=1e-12)
    assert rep.rmse == 0.0
    assert rep.n_sites == 10 and rep.n_obs == 40


def test_constant_shift():
    z = np.linspace(5, 40, 40)
    rep = calibration(_keyed(z), _keyed(z + 1))
    assert rep.alpha0 == pytest.approx(-1.0, abs=1e-12)
    assert rep.alpha1 == pytest.approx(1.0, abs=1e-12)
    assert rep.rmse == pytest.approx(1.0, rel=1e-14)


def test_random_fixture_matches_oracle():
    rng = np.random.default_rng(0)
    p = rng.lognormal(3, 0.3, 200)
    z = 0.5 + 0.95 * p + rng.normal(0, 2, 200)
    rep = calibration(_keyed(z), _keyed(p))
    X = np.column_stack([np.ones(200), p])
    beta = np.linalg.solve(X.T @ X, X.T @ z)
    s2 = np.sum((z - X @ beta) ** 2) / 198
    se = np.sqrt(s2 * np.diag(np.linalg.inv(X.T @ X)))
    assert np.allclose([rep.alpha0, rep.alpha1], beta, rtol=1e-8)
    assert np.allclose(rep.se, se, rtol=1e-8)
    assert rep.rmse == pytest.approx(math.sqrt(np.mean((z - p) ** 2)), rel=1e-8)
    assert rep.predictive_r2 == pytest.approx(np.corrcoef(z, p)[0, 1] ** 2, rel=1e-8)
    assert rep.n_sites == 50


def test_unmatched_keys():
    with pytest.raises(InputError):
        calibration({("A", 0): 1.0, ("B", 0): 2.0}, {("A", 0): 1.0, ("C", 0): 2.0})


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100), st.floats(-50, 50))
def test_rmse_permutation_and_affine_r2(seed, slope, shift):
    rng = np.random.default_rng(seed)
    z = rng.lognormal(3, 0.3, 20)
    p = z + rng.normal(0, 1, 20)
    rep = calibration(_keyed(z), _keyed(p))
    perm = rng.permutation(20)
    rep_perm = calibration(_keyed(z[perm]), _keyed(p[perm]))
    assert rep_perm.rmse == pytest.approx(rep.rmse, rel=1e-12)
    assert calibration(_keyed(z), _keyed(slope * p + shift)).predictive_r2 == pytest.approx(rep.predictive_r2, rel=1e-9)
    assert rep.rmse > 0


def test_semivariogram_constant_values():
    rng = np.random.default_rng(1)
    locs = {f"s{i}": tuple(rng.uniform(0, 30_000, 2)) for i in range(30)}
    sv = semivariogram({s: 3.0 for s in locs}, locs)
    assert np.all(sv.semivariance[sv.counts > 0] == 0.0)


def test_semivariogram_two_sites():
    sv = semivariogram({"a": 0.0, "b": 2.0}, {"a": (0.0, 0.0), "b": (5000.0, 0.0)}, bin_width=2.0, max_lag=6.0)
    assert sv.counts.tolist() == [0, 0, 1]
    assert sv.semivariance[2] == 2.0
    assert np.isnan(sv.semivariance[0])
    assert sv.centers.tolist() == [1.0, 3.0, 5.0]


def test_semivariogram_gaussian_field_oracle():
    rng = np.random.default_rng(2)
    n = 100
    xy = rng.uniform(0, 60_000, (n, 2))
    D = np.hypot(*(xy[:, None, :] - xy[None, :, :]).transpose(2, 0, 1)) / 1000
    v = np.linalg.cholesky(np.exp(-D / 10) + 1e-9 * np.eye(n)) @ rng.normal(size=n)
    ids = [f"s{i}" for i in range(n)]
    values, locs = dict(zip(ids, v)), dict(zip(ids, map(tuple, xy)))
    sv = semivariogram(values, locs, bin_width=2.0)
    max_lag = D.max() / 2
    n_bins = math.ceil(max_lag / 2.0)
    sums, counts = np.zeros(n_bins), np.zeros(n_bins, int)
    for i, j in itertools.combinations(range(n), 2):
        if D[i, j] <= max_lag:
            k = min(int(D[i, j] // 2.0), n_bins - 1)
            sums[k] += (v[i] - v[j]) ** 2
            counts[k] += 1
    assert sv.max_lag == pytest.approx(max_lag, rel=1e-14)
    assert sv.counts.tolist() == counts.tolist()
    ok = counts > 0
    assert np.allclose(sv.semivariance[ok], sums[ok] / (2 * counts[ok]), rtol=1e-10, atol=0)
    # pair accounting
    assert sv.counts.sum() == int(np.sum(D[np.triu_indices(n, 1)] <= max_lag))


def test_sill_is_pair_weighted_outer_half():
    sv = semivariogram({"a": 0.0, "b": 1.0, "c": 3.0}, {"a": (0.0, 0.0), "b": (1000.0, 0.0), "c": (7000.0, 0.0)},
                       bin_width=2.0, max_lag=8.0)
    # pairs: ab d=1 (bin 0, 0.5), bc d=6 (bin 3, 2.0), ac d=7 (bin 3, 4.5)
    assert sv.counts.tolist() == [1, 0, 0, 2]
    assert sv.sill() == pytest.approx((2.0 + 4.5) / 2)
