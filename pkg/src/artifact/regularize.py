"""Smoothed periodic potentials of the integer-height model.

Periodic functions of ``theta`` with period ``2 pi / sqrt(beta)`` are stored
by their cosine coefficients, ``f(theta) = c_0 + sum_{q>=1} c_q cos(q sqrt(beta) theta)``.
The two-sided Fourier coefficients are ``f^(0) = c_0`` and ``f^(+-q) = c_q / 2``,
so the weighted norm is

    ||f||_c = |c_0| + sum_{q>=1} e^{c q} |c_q|,

which is submultiplicative under pointwise products.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import DomainError, ResolutionError

LOG_TAIL_TOL = 1e-12


@dataclass
class PeriodicCoeffs:
    """Cosine coefficients of an even periodic function.

    Attributes
    ----------
    beta : float
        Frequency parameter; the period is ``2 pi / sqrt(beta)``.
    coeffs : ndarray
        ``c_0 .. c_qmax``.
    c : float
        Exponential weight of the default norm.
    """

    beta: float
    coeffs: np.ndarray
    c: float = 0.0

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.beta <= 0:
            raise DomainError("beta must be positive")
        if not np.all(np.isfinite(self.coeffs)):
            raise DomainError("non-finite coefficient")

    @property
    def q_max(self) -> int:
        return len(self.coeffs) - 1

    @property
    def const(self) -> float:
        """The neutral (``q = 0``) part."""
        return float(self.coeffs[0])

    @property
    def z(self) -> np.ndarray:
        """Charge coefficients ``q = 1 .. q_max``."""
        return self.coeffs[1:]

    def norm(self, c: float | None = None) -> float:
        c = self.c if c is None else c
        q = np.arange(len(self.coeffs))
        return float(np.sum(np.exp(c * q) * np.abs(self.coeffs)))

    def __call__(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        q = np.arange(len(self.coeffs))
        return np.cos(np.multiply.outer(theta, q) * math.sqrt(self.beta)) @ self.coeffs

    def two_sided(self) -> np.ndarray:
        """Fourier coefficients for ``q = -q_max .. q_max``."""
        half = self.coeffs[1:] / 2.0
        return np.concatenate([half[::-1], self.coeffs[:1], half])

    @classmethod
    def from_two_sided(cls, beta, fhat, q_max, c=0.0) -> "PeriodicCoeffs":
        m = (len(fhat) - 1) // 2
        out = np.zeros(q_max + 1)
        out[0] = fhat[m].real
        k = min(q_max, m)
        out[1 : k + 1] = fhat[m + 1 : m + k + 1].real + fhat[m - 1 : m - k - 1 : -1].real
        return cls(beta, out, c)

    def __mul__(self, other: "PeriodicCoeffs") -> "PeriodicCoeffs":
        if other.beta != self.beta:
            raise DomainError("products need a common period")
        q_max = max(self.q_max, other.q_max)
        prod = np.convolve(self.two_sided(), other.two_sided())
        return PeriodicCoeffs.from_two_sided(self.beta, prod, q_max, self.c)

    def __add__(self, other: "PeriodicCoeffs") -> "PeriodicCoeffs":
        n = max(len(self.coeffs), len(other.coeffs))
        a = np.zeros(n)
        a[: len(self.coeffs)] += self.coeffs
        a[: len(other.coeffs)] += other.coeffs
        return PeriodicCoeffs(self.beta, a, self.c)

    def scaled(self, a: float) -> "PeriodicCoeffs":
        return PeriodicCoeffs(self.beta, a * self.coeffs, self.c)


def hat_ell1_log(f: PeriodicCoeffs, c: float | None = None, q_max: int | None = None) -> PeriodicCoeffs:
    """Coefficients of ``log(1 + f)`` by the power series in the coefficient algebra.

    The series ``sum_k (-1)^{k+1} f^k / k`` is summed until the tail bound
    ``||f||^{K+1} / ((K+1) (1 - ||f||))`` drops below ``1e-12``; products are
    truncated at ``q_max`` (default ``f.q_max``).

    Raises
    ------
    DomainError
        If ``||f||_c >= 1``.
    """
    c = f.c if c is None else c
    if q_max is not None and q_max > f.q_max:
        f = PeriodicCoeffs(f.beta, np.pad(f.coeffs, (0, q_max - f.q_max)), f.c)
    r = f.norm(c)
    if r >= 1.0:
        raise DomainError(f"log series needs ||f|| < 1, got {r:.4g}; beta too small")
    out = PeriodicCoeffs(f.beta, np.zeros(len(f.coeffs)), c)
    if r == 0.0:
        return out
    power = f
    k = 1
    while True:
        out = out + power.scaled((-1.0) ** (k + 1) / k)
        tail = r ** (k + 1) / ((k + 1) * (1.0 - r))
        if tail < LOG_TAIL_TOL:
            break
        power = power * f
        k += 1
    out.c = c
    return out


def default_q_max(beta: float, gamma: float) -> int:
    """Smallest ``q`` with ``exp(-gamma beta (1 + q) / 4) < 1e-16``."""
    return max(1, int(math.floor(4.0 * math.log(1e16) / (gamma * beta) - 1.0)) + 1)


def smoothed_gsg_potential(lambdas, beta: float, gamma: float, q_max: int | None = None,
                           c: float = 0.0) -> PeriodicCoeffs:
    """``log(lambda_0 + sum_q lambda_q e^{-gamma beta q^2 / 2} cos(q sqrt(beta) y))``.

    Returns the cosine coefficients; ``log lambda_0`` is included in the
    constant term.  ``lambdas`` may be shorter than ``q_max + 1`` (missing
    entries are zero) or a callable ``q -> lambda_q``.
    """
    if not (0.0 < gamma < 1.0 / 3.0):
        raise DomainError("gamma must lie in (0, 1/3)")
    q_max = default_q_max(beta, gamma) if q_max is None else int(q_max)
    if q_max < 1:
        raise DomainError("q_max must be at least 1")
    if callable(lambdas):
        lam = np.array([lambdas(q) for q in range(q_max + 1)], dtype=float)
    else:
        lam = np.zeros(q_max + 1)
        v = np.asarray(lambdas, dtype=float)[: q_max + 1]
        lam[: len(v)] = v
    if lam[0] <= 0:
        raise DomainError("lambda_0 must be positive")
    q = np.arange(q_max + 1)
    fl = lam / lam[0] * np.exp(-0.5 * gamma * beta * q**2.0)
    fl[0] = 0.0
    out = hat_ell1_log(PeriodicCoeffs(beta, fl, c), c)
    out.coeffs[0] += math.log(lam[0])
    return out


def smoothed_comb_potential(beta: float, gamma: float, q_max: int | None = None,
                            c: float = 0.0) -> PeriodicCoeffs:
    """Cosine coefficients of ``U = log rho``, the Gaussian-smoothed integer comb.

    ``rho(theta) = sum_n exp(-(theta - h n)^2 / (2 gamma))`` with
    ``h = 2 pi / sqrt(beta)``.  Poisson summation gives
    ``rho = (sqrt(2 pi gamma) / h) (1 + 2 sum_q e^{-gamma beta q^2 / 2} cos(q sqrt(beta) theta))``
    and the logarithm is expanded in the weighted coefficient algebra with
    weight ``c``.  The constant term (``coeffs[0]``) includes ``log`` of the
    prefactor; ``coeffs[1:]`` are the activities ``z_0^(q)``.

    Raises
    ------
    DomainError
        If the fluctuation has norm ``>= 1`` (``beta`` too small).
    """
    if beta <= 0:
        raise DomainError("beta must be positive")
    out = smoothed_gsg_potential(lambda q: 1.0 if q == 0 else 2.0, beta, gamma, q_max, c)
    h = 2.0 * math.pi / math.sqrt(beta)
    out.coeffs[0] += math.log(math.sqrt(2.0 * math.pi * gamma) / h)
    return out


def log_comb_density(theta, beta: float, gamma: float) -> np.ndarray:
    """``log rho(theta)`` by direct summation over the nearby comb points."""
    theta = np.asarray(theta, dtype=float)
    h = 2.0 * math.pi / math.sqrt(beta)
    K = int(math.ceil(math.sqrt(2.0 * gamma * 50.0) / h)) + 1
    n0 = np.rint(theta / h)
    k = np.arange(-K, K + 1)
    d = np.subtract.outer(theta - n0 * h, k * h)
    return logsumexp(-(d**2) / (2.0 * gamma), axis=-1)


def comb_coeffs_quadrature(beta: float, gamma: float, q_max: int, n: int = 512) -> np.ndarray:
    """Cosine coefficients of ``log rho`` by trapezoid quadrature over one period."""
    h = 2.0 * math.pi / math.sqrt(beta)
    t = h * np.arange(n) / n
    F = np.fft.rfft(log_comb_density(t, beta, gamma)) / n
    out = 2.0 * F.real[: q_max + 1]
    out[0] = F.real[0]
    return out


def sg_activity_expansion(z: float, q_max: int, tol: float = 1e-18) -> PeriodicCoeffs:
    """Cosine coefficients of ``e^{z cos x}`` from the binomial double series.

    ``e^{z cos x} = sum_n sum_{k=0..n} (z/2)^n / (k! (n-k)!) Re e^{i (2k - n) x}``;
    every ``(n, k)`` with ``|2k - n| = q`` feeds ``cos(q x)``.  Equivalently
    ``c_q = I(q) sum_k (z/2)^{2k+q} / (k! (k+q)!)`` with ``I(0) = 1`` and
    ``I(q) = 2`` for every ``k`` when ``q >= 1``, i.e. ``c_0 = I_0(z)`` and
    ``c_q = 2 I_q(z)`` (modified Bessel functions).
    """
    if q_max < 0:
        raise DomainError("q_max must be non-negative")
    out = np.zeros(q_max + 1)
    if z == 0:
        out[0] = 1.0
        return PeriodicCoeffs(1.0, out)
    lz = math.log(abs(z) / 2.0)
    n = 0
    peak = -math.inf
    while True:
        k = np.arange(n + 1)
        logt = n * lz - np.array([math.lgamma(v + 1) + math.lgamma(n - v + 1) for v in k])
        q = np.abs(2 * k - n)
        sel = q <= q_max
        np.add.at(out, q[sel], math.copysign(1.0, z) ** n * np.exp(logt[sel]))
        peak = max(peak, float(logt.max()))
        if n > abs(z) and logt.max() < peak + math.log(tol):
            break
        n += 1
    return PeriodicCoeffs(1.0, out)


def sg_double_sum_bound(z: float, q: int, k_max: int = 400) -> tuple[float, float]:
    """``(sum_k I(q,k) q! / (k! (k+q)!) (z/2)^{2k+q}, 2 (z/2)^q e^{z^2/4})`` with weight 2."""
    zh = abs(z) / 2.0
    if zh == 0:
        return (1.0 if q == 0 else 0.0), (2.0 if q == 0 else 0.0)
    k = np.arange(k_max)
    logt = (math.lgamma(q + 1) - np.array([math.lgamma(v + 1) + math.lgamma(v + q + 1) for v in k])
            + (2 * k + q) * math.log(zh))
    return float(2.0 * np.exp(logt).sum()), 2.0 * zh**q * math.exp(z * z / 4.0)


@dataclass
class Admissibility:
    admissible: bool
    margin: float
    C: float


def gsg_admissible(lambda_coeffs, eta: float, theta: float, beta: float, gamma: float) -> Admissibility:
    """Growth condition ``|lambda_q| <= C e^{(eta + beta theta) q^2} lambda_0`` with ``theta < gamma / 2``.

    Returns the smallest ``C`` over the supplied coefficients and the margin
    ``gamma / 2 - theta``.
    """
    lam = np.asarray(lambda_coeffs, dtype=float)
    if lam[0] <= 0:
        raise DomainError("lambda_0 must be positive")
    q = np.arange(len(lam))
    C = float(np.max(np.abs(lam) / (np.exp((eta + beta * theta) * q**2.0) * lam[0])))
    margin = gamma / 2.0 - theta
    return Admissibility(bool(margin > 0 and np.isfinite(C)), margin, C)


def charge_component(samples, q: int, beta: float) -> complex:
    """``F^_q`` from samples of ``F`` on a uniform grid over one period ``2 pi / sqrt(beta)``.

    ``F(t) = sum_q e^{i sqrt(beta) q t} F^_q``; trapezoid quadrature is exact
    for trigonometric polynomials of degree below half the grid size.
    """
    if beta <= 0:
        raise DomainError("beta must be positive")
    F = np.asarray(samples)
    n = F.shape[0]
    if n < 4 * abs(q) + 8:
        raise ResolutionError(f"grid of {n} points too coarse for charge {q}")
    phase = np.exp(-2j * np.pi * q * np.arange(n) / n)
    return complex(np.tensordot(phase, F, axes=(0, 0)) / n)
