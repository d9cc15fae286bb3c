import itertools
import math

import numpy as np
import pytest

from artifact.errors import ConfigError, DomainError, FitError, ResourceError
from artifact.montecarlo import (McConfig, cosine_correlation, default_dipole, detailed_balance_residual,
                                 estimate, estimate_variance_and_stiffness, exact_enumerate, gaussian_rhs_ratio,
                                 gff_control, heatbath_conditional, integrated_autocorr, mcmc_run, mgf_decompose,
                                 site_energy, tilted_expectation, uniforms)
from artifact.spectral import covariance_qform, frakc_kernel

Y2 = [(1, 0), (1, 1)]


def within(est, exact, k=3.0):
    return abs(est.mean - exact) <= k * max(est.stderr, 1e-15)


# -- exact enumeration -----------------------------------------------------------


def test_enumeration_golden():
    ex = exact_enumerate(6.0, 0.5, 8, side=2, y_list=Y2, zs=(0.1, 0.2), etas=(0.5,))
    assert ex.tail < 1e-10
    # frozen values of the 2 x 2 oracle
    assert math.isclose(ex.mgf[(0.2, None)], 1.0000002455551587, rel_tol=1e-14)
    assert math.isclose(ex.var[(1, 0)], 7.207190095731812e-05, rel_tol=1e-10)


def test_enumeration_even_and_log_convex():
    zs = (-0.3, -0.2, -0.1, 0.1, 0.2, 0.3)
    ex = exact_enumerate(40.0, 0.5, 6, side=2, y_list=Y2, zs=zs + (0.0,))
    for z in (0.1, 0.2, 0.3):
        for y in [None, *Y2]:
            assert ex.mgf[(z, y)] == pytest.approx(ex.mgf[(-z, y)], rel=1e-15, abs=0)
    lm = [math.log(ex.mgf[(z, None)]) for z in (-0.3, -0.2, -0.1, 0.0, 0.1, 0.2, 0.3)]
    assert all(a + c - 2 * b >= -1e-14 for a, b, c in zip(lm, lm[1:], lm[2:]))


def test_enumeration_frozen_limit():
    ex = exact_enumerate(0.05, 0.5, 3, side=2, y_list=Y2)
    assert ex.var[(1, 0)] < 1e-100


def test_enumeration_chain_bruteforce():
    beta, m2, nmax, n = 30.0, 0.3, 3, 4
    ex = exact_enumerate(beta, m2, nmax, chain=n, y_list=[(2,)], zs=(0.2,))
    h = 2 * math.pi / math.sqrt(beta)
    Z = V = M = 0.0
    for c in itertools.product(range(-nmax, nmax + 1), repeat=n):
        c = np.array(c)
        E = 0.5 * h * h * (sum((c[i] - c[(i + 1) % n]) ** 2 for i in range(n)) + m2 * c @ c)
        w = math.exp(-E)
        Z += w
        V += w * (2 * math.pi * (c[0] - c[2])) ** 2
        M += w * math.exp(0.2 * h * (c[0] - c[1]))
    assert math.isclose(ex.var[(2,)], V / Z, rel_tol=1e-12)
    assert math.isclose(ex.mgf[(0.2, None)], M / Z, rel_tol=1e-12)


def test_enumeration_budget():
    with pytest.raises(ResourceError):
        exact_enumerate(6.0, 0.5, 60, side=2)


# -- sampler -----------------------------------------------------------------------


def test_rng_reproducible():
    a = uniforms(7, np.arange(1000))
    assert np.array_equal(a, uniforms(7, np.arange(1000)))
    assert np.all((a >= 0) & (a < 1)) and abs(a.mean() - 0.5) < 0.05
    assert not np.array_equal(a, uniforms(8, np.arange(1000)))


def test_detailed_balance():
    rng = np.random.default_rng(0)
    for _ in range(300):
        S = int(rng.integers(-30, 30))
        k = int(rng.integers(-10, 10))
        kp = k + int(rng.choice([-3, -2, -1, 1, 2, 3]))
        h, m2 = rng.uniform(0.3, 2), rng.uniform(0, 1)
        scale = max(1.0, abs(float(site_energy(kp, S, h, m2))))
        assert detailed_balance_residual("heatbath", k, kp, S, h, m2) / scale < 1e-12
        assert detailed_balance_residual("metropolis", k, kp, S, h, m2, window=3) / scale < 1e-12


def test_heatbath_conditional_normalised():
    k, p = heatbath_conditional(5, 0.9, 0.2, 6)
    assert math.isclose(p.sum(), 1.0) and k[np.argmax(p)] == round(5 / 4.2)


def test_config_validation():
    with pytest.raises(ConfigError):
        McConfig(beta=10, update="metropolis", window=0).validate()
    with pytest.raises(ConfigError):
        McConfig(beta=-1).validate()
    with pytest.raises(ConfigError):
        McConfig(beta=10, m2=0.0, gauge="free").validate()


# Metropolis at beta = 6 accepts ~1e-5 of proposals and sees no fluctuation
# in a chain of this length, so its standard error is zero; heat-bath resolves it.
@pytest.mark.parametrize("update,beta", [("heatbath", 6.0), ("heatbath", 60.0), ("metropolis", 60.0)])
def test_mc_matches_enumeration(update, beta):
    ex = exact_enumerate(beta, 0.5, 8, side=2, y_list=Y2, zs=(0.2,), etas=(0.5,))
    cfg = McConfig(beta=beta, m2=0.5, side=2, n_burn=100, n_sweeps=100000, measure_every=1, y_list=Y2,
                   zs=[0.2], etas=[0.5], seed=11, update=update, window=2)
    r = mcmc_run(cfg)
    for i, y in enumerate(Y2):
        assert within(r.variance()[i], ex.var[y])
        assert within(r.cosine()[i], ex.cos[(0.5, y)])
        assert within(r.mgf()[i], ex.mgf[(0.2, y)])
    assert all(e.tau_int >= 0.5 and e.stderr >= 0 for e in r.variance())


def test_reproducible_run():
    cfg = McConfig(beta=30, side=8, n_burn=10, n_sweeps=200, seed=5)
    a, b = mcmc_run(cfg), mcmc_run(cfg)
    assert np.array_equal(a.var_series, b.var_series) and np.array_equal(a.final, b.final)
    assert a.final[0, 0] == 0  # pinned gauge


def test_localised_phase_bounded():
    ys = [(1, 0), (2, 0), (4, 0), (8, 0)]
    r = mcmc_run(McConfig(beta=0.1, m2=1.0, side=32, n_burn=20, n_sweeps=200, y_list=ys, seed=2))
    v = [e.mean for e in r.variance()]
    assert max(v) < 1e-6


def test_gauge_consistency():
    ys = [(1, 0), (2, 0)]
    base = dict(beta=40.0, side=8, n_burn=500, n_sweeps=100000, measure_every=5, y_list=ys, seed=3)
    pinned = mcmc_run(McConfig(m2=0.0, **base)).variance()
    a = mcmc_run(McConfig(m2=0.04, gauge="free", **base)).variance()
    b = mcmc_run(McConfig(m2=0.02, gauge="free", **base)).variance()
    for p, ea, eb in zip(pinned, a, b):
        extrap = 2 * eb.mean - ea.mean
        err = math.sqrt(p.stderr**2 + 4 * eb.stderr**2 + ea.stderr**2)
        assert abs(extrap - p.mean) < 3 * err


# -- estimators --------------------------------------------------------------------


def test_autocorrelation_ar1():
    rng = np.random.default_rng(1)
    rho, n = 0.8, 200000
    x = np.empty(n)
    x[0] = 0
    e = rng.normal(size=n)
    for i in range(1, n):
        x[i] = rho * x[i - 1] + e[i]
    tau = integrated_autocorr(x)
    assert abs(tau - (1 + rho) / (2 * (1 - rho))) < 0.3
    est = estimate(x)
    assert abs(est.blocking_err / est.stderr - 1) < 0.2
    assert integrated_autocorr(rng.normal(size=1000)) >= 0.5


def test_variance_fit_synthetic():
    beta = 16.0
    r = np.array([1.0, 2, 3, 4, 6, 8])
    v = beta / math.pi * np.log(r) + 0.3
    err = np.full(len(r), 0.01)
    fit = estimate_variance_and_stiffness(r, v, err, beta, side=64)
    assert abs(fit.s_hat) < max(fit.s_hat_err, 1e-12)
    with pytest.raises(FitError):
        estimate_variance_and_stiffness(r[:3], v[:3], err[:3], beta)
    with pytest.raises(FitError):
        estimate_variance_and_stiffness(r, v, err, beta, side=32)


def test_gff_control():
    # |y| = 1 carries a 1% lattice correction to the log slope; start at 2
    ys = [(2, 0), (3, 0), (4, 0), (6, 0), (8, 0)]
    fit = gff_control(64, 40.0, ys, n_samples=400, seed=4)
    assert abs(fit.s_hat) < 2 * fit.s_hat_err


def test_cosine_fit():
    r = np.array([1.0, 2, 4, 8, 16])
    assert cosine_correlation(r, np.ones(5), np.full(5, 1e-3), 0.0).exponent == 0
    c = 0.9 * r**-0.25
    err = np.full(5, 1e-4)
    f = cosine_correlation(r, c, err, 0.5)
    assert abs(f.exponent - 0.25) < 1e-6 and not f.truncated
    c2 = c.copy()
    c2[-1] = 1e-5
    f2 = cosine_correlation(r, c2, err, 0.5)
    assert f2.truncated and not f2.used[-1]


def test_tilted_expectation():
    rng = np.random.default_rng(5)
    F = rng.normal(size=1000)
    assert tilted_expectation(F, rng.normal(size=1000), 0.0).value == pytest.approx(F.mean())
    # Gaussian tilt shifts the mean by tau C f~
    C = np.array([[1.0, 0.3, 0.1], [0.3, 1.0, 0.3], [0.1, 0.3, 1.0]])
    ft = np.array([1.0, -1.0, 0.5])
    g = np.array([0.2, 0.7, -0.4])
    tau = 0.4
    phi = rng.multivariate_normal(np.zeros(3), C, size=400000)
    est = tilted_expectation(phi @ g, phi @ ft, tau)
    assert est.reliable and abs(est.value - tau * g @ C @ ft) < 5e-3
    # bounded F against a dense quadrature over the three coordinates
    x = np.linspace(-7, 7, 71)
    X = np.stack(np.meshgrid(x, x, x, indexing="ij"), -1).reshape(-1, 3)
    w = np.exp(-0.5 * np.einsum("si,ij,sj->s", X, np.linalg.inv(C), X) + tau * X @ ft)
    Fq = np.cos(X @ g)
    ref = np.sum(w * Fq) / np.sum(w)
    est = tilted_expectation(np.cos(phi @ g), phi @ ft, tau)
    assert abs(est.value - ref) < 5e-3
    assert not tilted_expectation(F[:50], rng.normal(size=50), 0.0).reliable


def test_rhs_ratio_non_psd():
    with pytest.raises(DomainError):
        gaussian_rhs_ratio(2, 0.5, 0.0, 0.25, 6.0, 0.2)


def test_rhs_ratio_trivial_and_oracle():
    assert gaussian_rhs_ratio(2, 0.5, 0.0, 0.1, 6.0, 0.0).ratio == 1.0
    res = {}
    for z in (0.2, -0.2):
        ex = exact_enumerate(6.0, 0.5, 8, side=2, zs=(z,), y_list=[(1, 0)])
        est = gaussian_rhs_ratio(2, 0.5, 0.0, 0.1, 6.0, z, n_samples=1_000_000, seed=3)
        assert abs(est.mgf - ex.mgf[(z, None)]) <= 3 * est.mgf_err
        res[z] = est
    assert abs(res[0.2].mgf - res[-0.2].mgf) <= 3 * math.hypot(res[0.2].mgf_err, res[-0.2].mgf_err)


def test_rhs_ratio_rough_parameters():
    # larger beta and a nonzero stiffness on a 3 x 3 torus, against the 2 x 2 oracle style check
    ex = exact_enumerate(20.0, 0.5, 8, side=2, zs=(0.3,), y_list=[(1, 0)])
    est = gaussian_rhs_ratio(2, 0.5, 0.0, 0.1, 20.0, 0.3, n_samples=1_000_000, seed=9)
    assert abs(est.mgf - ex.mgf[(0.3, None)]) <= 3 * est.mgf_err


def test_mgf_decompose_pure_gaussian():
    side, s, g, z = 32, 0.0, 0.1, 0.3
    ys = [(2, 0), (3, 0), (4, 0), (6, 0), (8, 0), (10, 0)]
    K = frakc_kernel(side, s, g)
    f1 = default_dipole(side)
    gauss = [0.5 * z * z * covariance_qform(K, f1 + np.roll(f1, y, axis=(0, 1))) for y in ys]
    d = mgf_decompose(ys, np.array(gauss) + 0.7, np.full(len(ys), 1e-4), z, side, s, g)
    assert np.allclose(d.h2, 0, atol=1e-10) and math.isclose(d.h1_sum, 0.7) and d.declined
