import math

import numpy as np
import pytest

from artifact.errors import DomainError, RootNotBracketedError
from artifact.flow import (CouplingState, FlowSpec, coupling_norm, flow_step, loc_contraction_factors, run_flow,
                           stable_manifold_shoot, stack_diagonal, toy_critical_stiffness, toy_quadratic,
                           write_trajectory_csv)
from artifact.frd import build_frd
from artifact.regularize import smoothed_comb_potential


def test_zero_state_fixed():
    spec = FlowSpec(L=2, beta=30.0, nonlinearity=toy_quadratic(1.0))
    st = flow_step(CouplingState(0, 0.0, np.zeros(4)), spec)
    assert st.s == 0 and np.all(st.z == 0) and st.j == 1


def test_marginal_multiplier():
    for L in (2, 4, 8):
        assert abs(FlowSpec(L=L, beta=8 * math.pi).multiplier(1, 1) - 1) < 1e-12
        assert FlowSpec(L=L, beta=8 * math.pi + 1).multiplier(1, 1) < 1


def test_multiplier_with_built_diagonal():
    st = build_frd(8, 5, s=0.0, m2=1e-6)
    beta = 30.0
    spec = FlowSpec(L=8, beta=beta, gamma_diag=stack_diagonal(st), J=4)
    for j in (3, 4):
        exact = 8 ** (2 - beta / (4 * math.pi))
        # Gamma_j(0,0) = (log L + O(L^{-(j-1)})) / 2 pi
        rel = abs(math.log(spec.multiplier(1, j) / exact)) / (beta / (4 * math.pi) * math.log(8))
        assert rel < 8.0 ** (-(j - 1)) * 8
    with pytest.raises(DomainError):
        spec.gamma_diag(5)


def test_loc_contraction():
    beta, h = 50.0, 0.5
    vals = [loc_contraction_factors(0, beta, L, h, math.log(L) / (2 * math.pi)) for L in (4, 8, 16, 32)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    first = (math.log(16) / 256) ** 1.5
    v = loc_contraction_factors(2, 1e4, 16, 1e-3, math.log(16) / (2 * math.pi))
    series = sum(math.exp(2 * 100 * q * 1e-3 - (q - 0.5) * 1e4 * math.log(16) / (2 * math.pi)) for q in range(1, 50))
    assert math.isclose(v, first + min(1.0, series), rel_tol=1e-12)
    # h = sqrt(beta) makes the charge series diverge
    with pytest.raises(DomainError):
        loc_contraction_factors(0, 50.0, 8, math.sqrt(50.0), math.log(8) / (2 * math.pi))


def test_coupling_norm():
    assert coupling_norm(CouplingState(0, 0.0, np.zeros(3)), 10.0, 0.1, 60.0) == 0
    assert math.isclose(coupling_norm(CouplingState(0, 1e-3, np.zeros(3)), 100.0, 0.1, 60.0), 0.1)
    z = smoothed_comb_potential(60.0, 0.25, q_max=12).z
    n = coupling_norm(CouplingState(0, 0.0, z), 100.0, 0.25 / 4, 60.0)
    q = np.arange(1, 13)
    assert math.isfinite(n)
    assert math.isclose(n, 100 * np.max(np.exp(0.0625 * 60 * q) * np.abs(z)), rel_tol=1e-14)


def test_run_flow_irrelevant_and_alpha():
    z = smoothed_comb_potential(60.0, 0.25, q_max=12).z
    spec = FlowSpec(L=2, beta=60.0, J=20, q_max=12)
    res = run_flow(CouplingState(0, 0.0, z), spec)
    assert res.alpha_hat > 0 and not res.diverged
    assert math.isclose(res.alpha_hat, 60 / (4 * math.pi) - 2, rel_tol=1e-9)


def test_run_flow_relevant_flagged():
    spec = FlowSpec(L=2, beta=20.0, J=10, q_max=1)
    res = run_flow(CouplingState(0, 0.0, [1e-3]), spec)
    assert res.diverged and res.norms[-1] > res.norms[0]


def test_shooting_trivial_nonlinearity():
    spec = FlowSpec(L=2, beta=40.0, J=10)
    with pytest.raises(RootNotBracketedError):
        stable_manifold_shoot(spec, np.zeros(2), bracket=(0.1, 1.0))
    assert abs(stable_manifold_shoot(spec, [0.01, 0.0], bracket=(-1, 1))) < 1e-12


def test_shooting_toy_closed_form(rng):
    spec = FlowSpec(L=2, beta=40.0, J=15, nonlinearity=toy_quadratic(1.0), q_max=3)
    for _ in range(5):
        z0 = rng.uniform(-0.05, 0.05, size=3)
        s0 = stable_manifold_shoot(spec, z0, bracket=(-1, 1))
        assert abs(s0 - toy_critical_stiffness(z0, spec, 1.0)) < 1e-10


def test_trajectory_csv(tmp_path):
    spec = FlowSpec(L=2, beta=60.0, J=3, q_max=2)
    res = run_flow(CouplingState(0, 0.0, [1e-3, 1e-6]), spec)
    p = tmp_path / "t.csv"
    write_trajectory_csv(res, p, comment="hash")
    lines = p.read_text().splitlines()
    assert lines[0] == "# hash" and lines[1] == "scale,s,z1,z2,norm" and len(lines) == 6
