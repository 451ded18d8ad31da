import csv

import numpy as np
import pytest

from conftest import toy_archive
from fosr.data import ValidationError
from fosr.summaries import (
    coefficient_draws,
    gbpv_scores,
    gbpv_select,
    pointwise_band,
    simultaneous_band,
    summarize_coefficients,
    write_coefficient_csvs,
)


def random_archive(rng, S=400, m=12, K=2, p=3, shift=0.0):
    F = np.repeat(np.linalg.qr(rng.normal(size=(m, K)))[0][None], S, axis=0)
    A = shift + rng.normal(size=(S, K, p))
    return toy_archive(F, A)


def test_zero_coefficients_give_zero_summaries(rng):
    arch = random_archive(rng)
    arch.A[:] = 0
    s = summarize_coefficients(arch)
    for v in (s.alpha_tilde_mean, s.pointwise_lo, s.pointwise_hi, s.simult_lo, s.simult_hi):
        assert np.all(v == 0)
    assert not gbpv_select(s).any()


def test_single_draw_mean(rng):
    arch = random_archive(rng, S=1)
    d = coefficient_draws(arch)
    np.testing.assert_array_equal(d.mean(axis=0), d[0])


def test_constant_loading():
    m = 9
    F = np.full((1, m, 1), 1 / np.sqrt(m))
    A = np.array([[[2.0, -3.0]]])
    np.testing.assert_allclose(coefficient_draws(toy_archive(F, A))[0], np.array([[2.0], [-3.0]]) / np.sqrt(m) * np.ones(m),
                               rtol=0, atol=1e-15)


def test_raw_scale(rng):
    arch = random_archive(rng, S=5)
    scaled = toy_archive(arch.F, arch.A, scale=[2.0, 4.0, 0.5])
    np.testing.assert_allclose(coefficient_draws(scaled), coefficient_draws(arch) / np.array([2.0, 4.0, 0.5])[:, None])


def test_symmetric_draws_symmetric_band():
    s = np.repeat([1.0, -1.0], 100)
    draws = np.repeat(s[:, None], 7, axis=1)
    lo, hi = simultaneous_band(draws)
    np.testing.assert_allclose(lo, -hi)


def test_simultaneous_contains_pointwise_and_nested(rng):
    for _ in range(5):
        arch = random_archive(rng, shift=rng.normal())
        s95 = summarize_coefficients(arch, 0.95)
        s99 = summarize_coefficients(arch, 0.99)
        assert np.all(s95.simult_lo <= s95.pointwise_lo) and np.all(s95.simult_hi >= s95.pointwise_hi)
        assert np.all(s99.simult_lo <= s95.simult_lo) and np.all(s99.simult_hi >= s95.simult_hi)


def test_sign_convention_invariance(rng):
    arch = random_archive(rng)
    flipped = toy_archive(-arch.F, -arch.A)
    a, b = summarize_coefficients(arch), summarize_coefficients(flipped)
    np.testing.assert_allclose(a.alpha_tilde_mean, b.alpha_tilde_mean, atol=1e-14)
    np.testing.assert_allclose(a.simult_hi, b.simult_hi, atol=1e-12)


def test_simultaneous_coverage_gaussian_process():
    rng = np.random.default_rng(0)
    m, S, reps = 15, 1000, 2000
    L = np.linalg.cholesky(0.5 ** np.abs(np.subtract.outer(np.arange(m), np.arange(m))))
    hits = 0
    for _ in range(reps):
        draws = rng.normal(size=(S, m)) @ L.T
        lo, hi = simultaneous_band(draws, 0.95)
        new = L @ rng.normal(size=m)
        hits += np.all((lo <= new) & (new <= hi))
    assert abs(hits / reps - 0.95) <= 0.02


def test_pointwise_band_percentiles(rng):
    x = rng.normal(size=(1000, 3))
    lo, hi = pointwise_band(x)
    np.testing.assert_allclose(lo, np.percentile(x, 2.5, axis=0))
    np.testing.assert_allclose(hi, np.percentile(x, 97.5, axis=0))


def test_zero_sd_points_excluded():
    rng = np.random.default_rng(1)
    draws = np.column_stack([np.zeros(200), rng.normal(size=200)])
    lo, hi = simultaneous_band(draws)
    assert lo[0] == hi[0] == 0 and lo[1] < 0 < hi[1]


def test_too_few_draws(rng):
    with pytest.raises(ValidationError):
        simultaneous_band(rng.normal(size=(50, 3)))


def test_gbpv_rules():
    class S:
        simult_lo = np.array([[-1.0, -1.0], [-1.0, 0.2], [-2.0, -1.0]])
        simult_hi = np.array([[1.0, 1.0], [1.0, 3.0], [-0.1, 1.0]])

    np.testing.assert_array_equal(gbpv_select(S), [False, True, True])


def test_gbpv_scores_match_level_sweep(rng):
    arch = random_archive(rng, S=1000, p=8, shift=0.0)
    arch.A[:, :, :4] += np.linspace(0.5, 3.5, 4)
    draws = coefficient_draws(arch)
    scores = gbpv_scores(draws)
    for level in (0.5, 0.8, 0.9, 0.95, 0.99):
        sel = []
        for j in range(draws.shape[1]):
            lo, hi = simultaneous_band(draws[:, j], level)
            sel.append(np.any((lo > 0) | (hi < 0)))
        close = np.abs(scores - level) <= 2 / draws.shape[0]
        assert np.all((np.array(sel) == (scores > level)) | close)


def test_csv_export(tmp_path, rng):
    s = summarize_coefficients(random_archive(rng, p=2))
    paths = write_coefficient_csvs(s, tmp_path)
    assert len(paths) == 2
    with open(paths[1]) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["tau", "mean", "pw_lo", "pw_hi", "sim_lo", "sim_hi"]
    assert len(rows) == 13
    np.testing.assert_allclose([float(r[1]) for r in rows[1:]], s.alpha_tilde_mean[1])
