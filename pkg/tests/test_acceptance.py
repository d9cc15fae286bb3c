"""Acceptance gate: twelve criteria, one PASS/FAIL line each.

Run ``pytest -v tests/test_acceptance.py`` (lines appear in the terminal
summary) or ``python tests/test_acceptance.py`` (lines printed directly).
"""
import math
import sys
import time

import numpy as np
import pytest

from artifact.errors import ArtifactError
from artifact.flow import FlowSpec, stable_manifold_shoot, toy_critical_stiffness, toy_quadratic
from artifact.frd import build_frd, verify_frd
from artifact.geometry import (block_partition, coalescence, fit_reblock_constants, origin_block_distance,
                               reblock_shapes, reblock_weighted_sum)
from artifact.montecarlo import (McConfig, cosine_correlation, estimate_variance_and_stiffness, exact_enumerate,
                                 gaussian_rhs_ratio, mcmc_run, mgf_decompose)
from artifact.regularize import comb_coeffs_quadrature, sg_activity_expansion, smoothed_comb_potential
from artifact.spectral import dipole_form, green_asymptotics_fit, green_kernel

RESULTS = {}


def report(n: int, ok: bool, detail: str):
    line = f"CRITERION {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


def test_01_green_asymptotics():
    t = time.time()
    fit = green_asymptotics_fit(2048)
    dt = time.time() - t
    rel = abs(fit.slope * math.pi - 1)
    report(1, rel <= 0.01 and dt < 60, f"slope*pi = {fit.slope * math.pi:.6f} (rel err {rel:.2e}), {dt:.1f}s")


def test_02_nearest_neighbour():
    v = dipole_form(green_kernel(2048).profile(), (1, 0))
    report(2, abs(v - 0.5) <= 1e-3, f"(f,G f) at side 2048 = {v:.9f}")


def test_03_frd_reconstruction():
    t = time.time()
    st = build_frd(8, 5, s=0.0, m2=1e-6)
    rep = verify_frd(st)
    dt = time.time() - t
    ratio = st.diagonal() * 2 * math.pi * (1 + st.s) / math.log(st.L)
    diag_ok = bool(np.all((ratio[2:] >= 0.85) & (ratio[2:] <= 1.15)))
    ok = rep.checks["sum_identity"]["passed"] and rep.checks["tail"]["passed"] and diag_ok and dt < 120
    report(3, ok, f"sum rel err {rep.checks['sum_identity']['value']:.2e}, "
                  f"tails ok={rep.checks['tail']['passed']}, diag ratios j=3..4 {np.round(ratio[2:], 4).tolist()}, "
                  f"{dt:.1f}s")


def test_04_regularisation_oracle():
    g = 0.25
    err = 0.0
    for beta in (20.0, 60.0):
        pot = smoothed_comb_potential(beta, g, q_max=10)
        err = max(err, float(np.max(np.abs(pot.coeffs - comb_coeffs_quadrature(beta, g, 10)))))
    q = np.arange(1, 11)
    ratio = lambda beta: np.abs(smoothed_comb_potential(beta, g, q_max=10).z) / np.exp(-g * beta * (1 + q) / 4)  # noqa: E731
    C = max(ratio(20.0).max(), ratio(60.0).max())
    held = all(np.all(ratio(b) <= C) for b in (40.0, 80.0, 120.0))
    report(4, err <= 1e-10 and held, f"max |coef - quadrature| = {err:.2e}; fitted C = {C:.4f} holds at beta 40, 80, 120")


def test_05_sine_gordon():
    err = 0.0
    n = 256
    x = 2 * np.pi * np.arange(n) / n
    for z in (0.5, 1.0, 2.0):
        ref = 2 * np.fft.rfft(np.exp(z * np.cos(x))).real[:9] / n
        ref[0] /= 2
        err = max(err, float(np.max(np.abs(sg_activity_expansion(z, 8).coeffs - ref))))
    report(5, err <= 1e-10, f"max |double sum - quadrature| = {err:.2e}")


def test_06_end_to_end_reformulation():
    t = time.time()
    parts = []
    ok = True
    for z in (0.1, 0.2):
        ex = exact_enumerate(6.0, 0.5, 8, side=2, zs=(z,), y_list=[(1, 0)])
        ok &= ex.tail < 1e-10
        try:
            est = gaussian_rhs_ratio(2, 0.5, 0.0, 0.25, 6.0, z, n_samples=4_000_000, seed=1)
        except ArtifactError as e:
            ok = False
            parts.append(f"z={z}: {type(e).__name__}: {e}")
            continue
        dev = abs(est.mgf - ex.mgf[(z, None)]) / est.mgf_err
        ok &= dev <= 3
        parts.append(f"z={z}: {dev:.2f} sigma")
    report(6, ok and time.time() - t < 300, "; ".join(parts))


def test_07_marginality():
    m = FlowSpec(L=2, beta=8 * math.pi).multiplier(1, 1)
    m1 = FlowSpec(L=2, beta=8 * math.pi + 1).multiplier(1, 1)
    report(7, abs(m - 1) <= 1e-12 and m1 < 1, f"multiplier at 8 pi: 1 + {m - 1:.1e}; at 8 pi + 1: {m1:.4f}")


def test_08_shooting():
    rng = np.random.default_rng(8)
    spec = FlowSpec(L=2, beta=40.0, J=15, nonlinearity=toy_quadratic(1.0), q_max=3)
    err = 0.0
    for _ in range(5):
        z0 = rng.uniform(-0.05, 0.05, size=3)
        err = max(err, abs(stable_manifold_shoot(spec, z0, bracket=(-1, 1)) - toy_critical_stiffness(z0, spec, 1.0)))
    report(8, err <= 1e-10, f"max |bisection - closed form| = {err:.1e}")


def test_09_polymer_geometry():
    tiles = True
    for L, N in ((3, 3), (4, 3), (8, 2)):
        side = L**N
        for j in range(N + 1):
            cover = np.zeros((side, side), dtype=int)
            for b in block_partition(j, L, N):
                s = b.sites()
                cover[s[:, 0] % side, s[:, 1] % side] += 1
            tiles &= bool(np.all(cover == 1))
    dist = all(origin_block_distance(L, j, N) >= L**j / 3 for L, N in ((3, 3), (4, 3), (8, 2)) for j in range(N))
    r = [8 ** coalescence((2**k, 0), 8).j0y / 2**k for k in range(11)]
    C = max(max(r), 1 / min(r))
    report(9, tiles and dist and C <= 10, f"tilings exact={tiles}, distance bound={dist}, coalescence C={C:g} (<= 10)")


def test_10_reblocking():
    fit = fit_reblock_constants(4)
    worst = 0.0
    for name, X in reblock_shapes(4).items():
        for A in (16.0, 32.0, 64.0, 128.0, 256.0):
            worst = max(worst, reblock_weighted_sum(X, A) / fit.bound(X.size, A))
    report(10, fit.eta > 0 and worst <= 1 + 1e-12,
           f"C = {fit.C:.3f}, eta = {fit.eta:.3f}; max sum/bound = {worst:.3f} (A = 64 held out)")


MC_Y = [(2, 0), (3, 0), (4, 0), (6, 0), (8, 0), (12, 0), (16, 0)]
MC_Z = 0.5


@pytest.fixture(scope="module")
def mc128():
    cfg = McConfig(beta=16.0, m2=0.0, side=128, n_burn=10_000, n_sweeps=1_000_000, measure_every=10,
                   y_list=MC_Y, etas=[0.5], zs=[MC_Z, -MC_Z], seed=2024)
    return mcmc_run(cfg)


def test_11_monte_carlo_physics(mc128):
    beta = 16.0
    r = np.hypot(*np.asarray(MC_Y, dtype=float).T)
    var = mc128.variance()
    fit = estimate_variance_and_stiffness(r, [e.mean for e in var], [e.stderr for e in var], beta, 128,
                                          series=mc128.var_series)
    slope_ok = abs(fit.slope / (beta / (2 * math.pi)) - 1) <= 0.10
    s_ok = fit.s_hat >= -2 * fit.s_hat_err
    cos = mc128.cosine(0)
    detail = (f"slope {fit.slope:.4f} vs beta/2pi {beta / (2 * math.pi):.4f} (beta/pi {beta / math.pi:.4f}); "
              f"s_hat {fit.s_hat:.3f} +- {fit.s_hat_err:.3f}")
    cos_ok = False
    try:
        cf = cosine_correlation(r, [e.mean for e in cos], [e.stderr for e in cos], 0.5,
                                series=mc128.cos_series[:, 0, :])
        pred = 0.25 / (2 * math.pi * (1 + fit.s_hat))
        pred_err = 0.25 / (2 * math.pi * (1 + fit.s_hat) ** 2) * fit.s_hat_err
        cos_ok = abs(cf.exponent - pred) <= 2 * math.hypot(cf.exponent_err, pred_err)
        detail += f"; cos exponent {cf.exponent:.2e} +- {cf.exponent_err:.1e} vs {pred:.2e}"
    except ArtifactError as e:
        detail += f"; cosine fit: {e}"
    detail += f"; {mc128.seconds:.0f}s"
    report(11, slope_ok and s_ok and cos_ok and mc128.seconds < 1800, detail)


def test_12_evenness(mc128):
    ex = exact_enumerate(6.0, 0.5, 8, side=2, zs=(0.1, -0.1, 0.2, -0.2), y_list=[(1, 0), (1, 1)])
    exact_even = max(abs(ex.mgf[(z, y)] - ex.mgf[(-z, y)]) for z in (0.1, 0.2) for y in (None, (1, 0), (1, 1)))
    r = np.hypot(*np.asarray(MC_Y, dtype=float).T)
    var = mc128.variance()
    fit = estimate_variance_and_stiffness(r, [e.mean for e in var], [e.stderr for e in var], 16.0, 128,
                                          series=mc128.var_series)
    h2 = []
    for k, z in enumerate((MC_Z, -MC_Z)):
        m = mc128.mgf(k)
        lm = np.log([e.mean for e in m])
        le = np.array([e.stderr / e.mean for e in m])
        h2.append(mgf_decompose(MC_Y, lm, le, z, 128, fit.s_hat, 0.1))
    dev = np.abs(h2[0].h2 - h2[1].h2) / np.hypot(h2[0].h2_err, h2[1].h2_err)
    ok = exact_even <= 1e-15 and bool(np.all(dev <= 3))
    report(12, ok, f"exact |MGF(z) - MGF(-z)| = {exact_even:.1e}; h2 odd part max {dev.max():.2f} sigma")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
