import math

import numpy as np
import pytest

from artifact.errors import DomainError
from artifact.spectral import (GREEN_CONST_INF, c_kernel, covariance_qform, cs_kernel, dipole_form,
                               frakc_kernel, green_asymptotics_fit, green_dipole_infinite, green_kernel,
                               infinite_volume_two_point, laplacian_A_sup, remainder_decomposition,
                               symbol_lambda, torus_two_point)
from test_lattice import dense_laplacian


def dipole(side, y=(1, 0)):
    f = np.zeros((side, side))
    f[0, 0] += 1
    f[y[0] % side, y[1] % side] -= 1
    return f


def test_symbol_values():
    assert symbol_lambda(0.0, 0.0) == 0
    assert np.isclose(symbol_lambda(np.pi, np.pi), 8)
    assert np.isclose(symbol_lambda(np.pi / 2, 0.0), 2)


def test_qform_zero_and_dense_green():
    K = green_kernel(8, 1.0)
    assert covariance_qform(K, np.zeros((8, 8))) == 0
    f = dipole(8)
    G = np.linalg.inv(dense_laplacian(8, 1.0))
    assert np.isclose(covariance_qform(K, f), f.ravel() @ G @ f.ravel(), rtol=1e-12)


def test_massless_qform_needs_neutral_source():
    with pytest.raises(DomainError):
        covariance_qform(green_kernel(8), np.eye(8)[:, :1] @ np.eye(8)[:1])


def test_kernel_relations():
    side, s, m2, g = 8, 0.05, 0.4, 0.1
    lap = dense_laplacian(side)
    C = np.linalg.inv(lap + m2 * np.eye(64)) - g * np.eye(64)
    Cs = np.linalg.inv(np.linalg.inv(C) + s * lap)
    f = dipole(side, (2, 1))
    fv = f.ravel()
    assert np.isclose(covariance_qform(c_kernel(side, m2, g), f), fv @ C @ fv, rtol=1e-12)
    assert np.isclose(covariance_qform(cs_kernel(side, s, m2, g), f), fv @ Cs @ fv, rtol=1e-12)


def test_nearest_neighbour_half():
    G = green_kernel(2048).profile()
    assert abs(dipole_form(G, (1, 0)) - 0.5) < 1e-3


def test_green_fit_slope_and_constant():
    fit = green_asymptotics_fit(2048)
    assert abs(fit.slope * math.pi - 1) < 0.01
    # infinite-volume constant (gamma_E + 3/2 log 2) / pi, up to finite-size corrections
    assert abs(fit.const - GREEN_CONST_INF) < 2e-3


def test_green_rotation_symmetry():
    G = green_kernel(256).profile()
    for y in [(3, 0), (5, 2), (7, 1)]:
        assert np.isclose(dipole_form(G, y), dipole_form(G, (-y[1], y[0])), rtol=1e-12)


def test_green_dipole_infinite_values():
    assert np.isclose(green_dipole_infinite((1, 0)), 0.5)
    # random-walk potential kernel a(1,1) = 4/pi, and the form is 2 a / 4
    assert np.isclose(green_dipole_infinite((1, 1)), 2 / math.pi, rtol=1e-9)


def test_two_point_s_zero_closed_form():
    for y, g in [((1, 0), 0.25), ((5, 2), 0.1)]:
        v = infinite_volume_two_point(y, 0.0, g)
        assert np.isclose(v, green_dipole_infinite(y) - 2 * g, atol=1e-9)
    assert abs(infinite_volume_two_point((1, 0), 0.0, 0.25)) < 1e-9


def test_two_point_against_torus_richardson():
    # torus values converge like side^-2; extrapolate 1024 -> 2048
    a = torus_two_point((10, 3), 0.01, 0.25, 1024)
    b = torus_two_point((10, 3), 0.01, 0.25, 2048)
    ref = b + (b - a) / 3
    assert abs(infinite_volume_two_point((10, 3), 0.01, 0.25) - ref) < 1e-6


def test_torus_two_point_matches_kernel():
    side = 64
    K = frakc_kernel(side, 0.02, 0.2)
    assert np.isclose(torus_two_point((3, 1), 0.02, 0.2, side), covariance_qform(K, dipole(side, (3, 1))),
                      rtol=1e-12)


def test_remainder_split():
    y, s, g = (6, 1), 0.02, 0.25
    r = remainder_decomposition(y, s, g)
    assert abs(r.total - infinite_volume_two_point(y, s, g)) < 1e-8
    r0 = remainder_decomposition(y, 0.0, g)
    assert np.isclose(r0.C1, -2 * g) and abs(r0.R) < 1e-15


def test_remainder_decay_bound():
    s, g = 0.01, 0.25
    bound = laplacian_A_sup(s, g)
    for k in range(1, 8):
        y = (2**k, 0)
        assert y[0] ** 2 * abs(remainder_decomposition(y, s, g).R) <= bound
