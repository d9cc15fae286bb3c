"""Scalar flow of the couplings ``(s_j, z_j^(q))``.

One step multiplies each charge activity by ``L^2 exp(-q^w beta Gamma_{j+1}(0,0) / 2)``
(``w = 2`` by default) and shifts the stiffness by a pluggable nonlinearity.
With the leading diagonal ``Gamma_j(0,0) = log L / (2 pi)`` the ``q = 1``
multiplier is ``L^{2 - beta / (4 pi)}``, marginal at ``beta = 8 pi``.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import bisect

from .errors import DomainError, NumericError, RootNotBracketedError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CouplingState:
    """Couplings at scale ``j``: stiffness ``s`` and activities ``z[q-1] = z^(q)``."""

    j: int
    s: float
    z: np.ndarray

    def __post_init__(self):
        z = np.atleast_1d(np.asarray(self.z, dtype=float))
        object.__setattr__(self, "z", z)

    @property
    def q_max(self) -> int:
        return len(self.z)

    def is_finite(self) -> bool:
        return bool(math.isfinite(self.s) and np.all(np.isfinite(self.z)))


def trivial_nonlinearity(state: CouplingState, spec: "FlowSpec") -> float:
    return 0.0


def toy_quadratic(c: float = 1.0) -> Callable:
    """Model stand-in ``delta s = c sum_q (z^(q))^2``.

    This is a placeholder with a verifiable fixed point, not the true
    polymer-driven correction to the stiffness.
    """

    def f(state: CouplingState, spec: "FlowSpec") -> float:
        return c * float(np.sum(state.z**2))

    f.c = c
    return f


def analytic_diagonal(L: int, s: float = 0.0) -> Callable[[int], float]:
    """Leading diagonal ``Gamma_j(0,0) = log L / (2 pi (1 + s))`` for every ``j``."""
    val = math.log(L) / (2.0 * math.pi * (1.0 + s))
    return lambda j: val


def stack_diagonal(stack) -> Callable[[int], float]:
    """Diagonal taken from a built decomposition, valid for ``1 <= j <= N-1``."""
    diag = stack.diagonal()

    def g(j: int) -> float:
        if not 1 <= j <= len(diag):
            raise DomainError(f"stack provides Gamma_j(0,0) only for 1 <= j <= {len(diag)}")
        return float(diag[j - 1])

    return g


@dataclass
class FlowSpec:
    """Parameters of the coupling flow.

    Attributes
    ----------
    L : int
        Block factor.
    beta, gamma : float
        Inverse temperature and smoothing variance.
    gamma_diag : callable
        ``j -> Gamma_j(0,0)``; defaults to :func:`analytic_diagonal`.
    nonlinearity : callable
        ``(state, spec) -> delta s``.
    q_max : int
        Number of charges carried.
    J : int
        Final scale.
    charge_power : float
        Exponent ``w`` of ``q`` in the step multiplier.
    c_f : float or None
        Norm weight; defaults to ``gamma / 4``.
    """

    L: int
    beta: float
    gamma: float = 0.25
    gamma_diag: Callable | None = None
    nonlinearity: Callable = trivial_nonlinearity
    q_max: int = 8
    J: int = 20
    charge_power: float = 2.0
    c_f: float | None = None

    def __post_init__(self):
        if self.L < 2 or self.beta <= 0 or self.J < 1:
            raise DomainError("need L >= 2, beta > 0 and J >= 1")
        if self.gamma_diag is None:
            self.gamma_diag = analytic_diagonal(self.L)
        if self.c_f is None:
            self.c_f = self.gamma / 4.0

    def multiplier(self, q, j: int):
        """Step multiplier of ``z^(q)`` from scale ``j - 1`` to ``j``."""
        q = np.asarray(q, dtype=float)
        return self.L**2 * np.exp(-(q**self.charge_power) * self.beta * self.gamma_diag(j) / 2.0)


def flow_step(state: CouplingState, spec: FlowSpec) -> CouplingState:
    """Map the couplings from scale ``j`` to ``j + 1``."""
    q = np.arange(1, state.q_max + 1)
    with np.errstate(over="ignore"):
        z = spec.multiplier(q, state.j + 1) * state.z
    ds = spec.nonlinearity(state, spec)
    return CouplingState(state.j + 1, state.s + ds, z)


def loc_contraction_factors(k: int, beta: float, L: int, h: float, Gamma0: float,
                            q_max: int = 400, C: float = 1.0, tail_tol: float = 1e-14) -> float:
    """``C (L^{-2} log L)^{(k+1)/2} + C min(1, sum_{q>=1} e^{2 sqrt(beta) q h} e^{-(q - 1/2) beta Gamma0})``.

    The series is truncated at ``q_max``; the geometric tail bound must be
    below ``tail_tol`` relative to the partial sum.

    Raises
    ------
    DomainError
        If the series diverges, i.e. ``2 sqrt(beta) h >= beta Gamma0``.
    """
    if k not in (0, 2):
        raise DomainError("k must be 0 or 2")
    if h <= 0 or Gamma0 <= 0 or beta <= 0:
        raise DomainError("need h, Gamma0, beta > 0")
    log_r = 2.0 * math.sqrt(beta) * h - beta * Gamma0
    if log_r >= 0:
        raise DomainError(
            f"charge series diverges: 2 sqrt(beta) h = {2 * math.sqrt(beta) * h:.4g} "
            f">= beta Gamma0 = {beta * Gamma0:.4g}; h too large")
    q = np.arange(1, q_max + 1)
    terms = np.exp(q * log_r + 0.5 * beta * Gamma0)
    partial = float(terms.sum())
    tail = math.exp((q_max + 1) * log_r + 0.5 * beta * Gamma0) / (1.0 - math.exp(log_r))
    if tail > tail_tol * max(partial, 1e-300):
        raise NumericError(f"series tail {tail:.3g} not negligible at q_max={q_max}")
    first = C * (math.log(L) / L**2) ** ((k + 1) / 2.0)
    return first + C * min(1.0, partial)


def coupling_norm(state: CouplingState, A: float, c_f: float, beta: float) -> float:
    """``A max(|s|, sup_q e^{c_f beta q} |z^(q)|)``."""
    if A <= 0 or c_f <= 0:
        raise DomainError("need A > 0 and c_f > 0")
    q = np.arange(1, state.q_max + 1)
    with np.errstate(over="ignore", invalid="ignore"):
        zpart = float(np.max(np.exp(c_f * beta * q) * np.abs(state.z))) if state.q_max else 0.0
    return A * max(abs(state.s), zpart)


@dataclass
class FlowResult:
    trajectory: list
    norms: np.ndarray
    alpha_hat: float
    diverged: bool
    A: float = 1.0

    def to_rows(self) -> list[list]:
        rows = []
        for st, nm in zip(self.trajectory, self.norms):
            rows.append([st.j, st.s, *st.z.tolist(), nm])
        return rows


def run_flow(initial: CouplingState, spec: FlowSpec, A: float = 1.0) -> FlowResult:
    """Iterate :func:`flow_step` to scale ``spec.J`` and fit ``||U_j|| ~ C L^{-alpha j}``.

    Divergence (non-finite couplings or a growing norm, ``alpha_hat < 0``) is
    flagged rather than raised.
    """
    traj = [initial]
    st = initial
    diverged = False
    while st.j < spec.J:
        st = flow_step(st, spec)
        traj.append(st)
        if not st.is_finite():
            diverged = True
            break
    norms = np.array([coupling_norm(t, A, spec.c_f, spec.beta) for t in traj])
    js = np.array([t.j for t in traj], dtype=float)
    ok = np.isfinite(norms) & (norms > 0)
    alpha = math.nan
    if ok.sum() >= 2:
        slope = np.polyfit(js[ok] * math.log(spec.L), np.log(norms[ok]), 1)[0]
        alpha = float(-slope)
        diverged = diverged or alpha < 0
    return FlowResult(traj, norms, alpha, diverged, A)


def terminal_stiffness(s0: float, z0, spec: FlowSpec) -> float:
    st = CouplingState(0, s0, z0)
    while st.j < spec.J:
        st = flow_step(st, spec)
    return st.s


def stable_manifold_shoot(spec: FlowSpec, z0, bracket=(-1.0, 1.0), target: float = 0.0,
                          xtol: float = 1e-12, n_check: int = 9) -> float:
    """Bisection for the initial stiffness whose flow ends at ``target``.

    The terminal map ``s0 -> s_J`` is sampled on the bracket and must be
    monotone there.

    Raises
    ------
    RootNotBracketedError
        If ``s_J - target`` does not change sign on the bracket.
    NumericError
        If the sampled terminal map is not monotone.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if not lo < hi:
        raise DomainError("bracket must satisfy lo < hi")
    z0 = np.asarray(z0, dtype=float)
    F = lambda s: terminal_stiffness(s, z0, spec) - target  # noqa: E731
    xs = np.linspace(lo, hi, n_check)
    vals = np.array([F(x) for x in xs])
    d = np.diff(vals)
    if not (np.all(d >= 0) or np.all(d <= 0)):
        raise NumericError("terminal map not monotone on the bracket")
    if vals[0] == 0:
        return lo
    if vals[-1] == 0:
        return hi
    if np.sign(vals[0]) == np.sign(vals[-1]):
        raise RootNotBracketedError(f"no sign change of s_J - target on [{lo}, {hi}]")
    return float(bisect(F, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=500))


def toy_critical_stiffness(z0, spec: FlowSpec, c: float, target: float = 0.0) -> float:
    """Closed form of the shooting target for the toy quadratic nonlinearity.

    ``s0 = target - c sum_{j<J} sum_q (z_j^(q))^2``; with a constant diagonal
    each charge gives a geometric series in ``m_q^2``.
    """
    z0 = np.asarray(z0, dtype=float)
    q = np.arange(1, len(z0) + 1)
    diag = np.array([spec.gamma_diag(j) for j in range(1, spec.J + 1)])
    if np.allclose(diag, diag[0], rtol=0, atol=0):
        r = spec.multiplier(q, 1) ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            geo = np.where(np.isclose(r, 1.0, rtol=1e-15, atol=0), float(spec.J),
                           (1.0 - r**spec.J) / (1.0 - r))
        return float(target - c * np.sum(z0**2 * geo))
    # varying diagonal: cumulative products of the multipliers
    tot = 0.0
    fac = np.ones_like(z0)
    for j in range(spec.J):
        tot += np.sum((fac * z0) ** 2)
        fac = fac * spec.multiplier(q, j + 1)
    return float(target - c * tot)


def write_trajectory_csv(result: FlowResult, path, comment: str | None = None) -> None:
    """CSV with columns ``scale, s, z1..zq, norm`` and an optional ``#`` comment line."""
    qn = result.trajectory[0].q_max
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh)
        w.writerow(["scale", "s"] + [f"z{q}" for q in range(1, qn + 1)] + ["norm"])
        for row in result.to_rows():
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
