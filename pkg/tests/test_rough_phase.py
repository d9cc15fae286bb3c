"""Rough-phase Monte Carlo checks against the Gaussian predictions.

At large beta the discrete Gaussian model is in its rough phase: the height
variance grows like ``beta log|y| / (pi (1 + s))`` with a small ``s`` and the
cosine correlation decays with exponent ``eta^2 / (2 pi (1 + s))``.
"""
import math

import numpy as np
import pytest

from artifact.montecarlo import McConfig, cosine_correlation, estimate_variance_and_stiffness, mcmc_run

YS = [(k, 0) for k in range(2, 9)]


@pytest.fixture(scope="module")
def rough():
    cfg = McConfig(beta=40.0, side=64, n_burn=2000, n_sweeps=40_000, measure_every=5, seed=7,
                   y_list=YS, etas=[0.5])
    return mcmc_run(cfg)


def _fit(res):
    r = np.array([y[0] for y in YS], dtype=float)
    v = res.variance()
    return r, estimate_variance_and_stiffness(r, [e.mean for e in v], [e.stderr for e in v], res.config.beta,
                                              res.config.side, series=res.var_series)


def test_rough_phase_log_slope(rough):
    _, fit = _fit(rough)
    assert fit.slope * math.pi / rough.config.beta == pytest.approx(1.0, abs=0.03)
    assert abs(fit.s_hat) <= 3 * fit.s_hat_err + 0.01


def test_rough_phase_cosine_exponent(rough):
    r, fit = _fit(rough)
    c = rough.cosine(0)
    cf = cosine_correlation(r, [e.mean for e in c], [e.stderr for e in c], 0.5, series=rough.cos_series[:, 0, :])
    pred = 0.25 / (2 * math.pi * (1 + fit.s_hat))
    pred_err = pred * fit.s_hat_err / (1 + fit.s_hat)
    assert not cf.truncated
    assert abs(cf.exponent - pred) <= 3 * math.hypot(cf.exponent_err, pred_err)


def test_jackknife_error_not_smaller_than_naive(rough):
    r = np.array([y[0] for y in YS], dtype=float)
    v = rough.variance()
    m, e = [x.mean for x in v], [x.stderr for x in v]
    naive = estimate_variance_and_stiffness(r, m, e, 40.0, 64)
    jk = estimate_variance_and_stiffness(r, m, e, 40.0, 64, series=rough.var_series)
    assert jk.slope == naive.slope
    assert jk.slope_err > naive.slope_err
