"""Fourier-space covariances and the infinite-volume two-point form.

All kernels here are translation invariant on a periodic square lattice and
are stored through their Fourier multiplier on the ``rfft2`` half grid.
``lam(p) = 4 - 2 cos p1 - 2 cos p2`` is the multiplier of ``-Delta``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import integrate

from .errors import DomainError, FitError, NumericError


def symbol_lambda(p1, p2=None):
    """Fourier multiplier ``4 - 2 cos p1 - 2 cos p2`` of ``-Delta``.

    Accepts two arrays or a single pair.
    """
    if p2 is None:
        p1, p2 = p1
    return 4.0 - 2.0 * np.cos(p1) - 2.0 * np.cos(p2)


def _half_grid(side: int):
    p1 = 2 * np.pi * np.fft.fftfreq(side)
    p2 = 2 * np.pi * np.fft.rfftfreq(side)
    return p1[:, None], p2[None, :]


def _half_weights(side: int) -> np.ndarray:
    """Multiplicity of each ``rfft2`` column in the full momentum sum."""
    w = np.full(side // 2 + 1, 2.0)
    w[0] = 1.0
    if side % 2 == 0:
        w[-1] = 1.0
    return w


def frakc_symbol(lam, s: float, gamma: float):
    """``|1 - s gamma lam|^2 (1/lam - gamma) / (1 + s lam (1/lam - gamma))``."""
    lam = np.asarray(lam, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return (1 - s * gamma * lam) ** 2 * (1 - gamma * lam) / (lam * (1 + s - s * gamma * lam))


def cs_symbol(lam, s: float, m2: float, gamma: float):
    """Multiplier of ``C(s, m2) = ((( -Delta + m2)^{-1} - gamma)^{-1} - s Delta)^{-1}``."""
    lam = np.asarray(lam, dtype=float)
    mu = lam + m2
    with np.errstate(divide="ignore", invalid="ignore"):
        return (1 - gamma * mu) / (mu + s * lam * (1 - gamma * mu))


@dataclass
class TranslationKernel:
    """Translation-invariant kernel on a torus of side ``side``.

    Attributes
    ----------
    side : int
    tag : str
        One of ``green``, ``C``, ``Cs``, ``frakC``.
    params : dict
        ``m2``, ``s`` and ``gamma`` as applicable.
    multiplier : ndarray
        Values on the ``rfft2`` half grid; the ``p = 0`` entry is ``inf``
        for massless kernels.
    """

    side: int
    tag: str
    params: dict
    multiplier: np.ndarray = field(repr=False)

    @property
    def massless(self) -> bool:
        return not np.isfinite(self.multiplier[0, 0])

    def profile(self) -> np.ndarray:
        """Real-space kernel ``K(0, x)``; massless kernels drop the zero mode."""
        m = self.multiplier
        if self.massless:
            m = m.copy()
            m[0, 0] = 0.0
        return np.fft.irfft2(m, s=(self.side, self.side))

    def min_multiplier(self) -> float:
        m = self.multiplier[np.isfinite(self.multiplier)]
        return float(m.min())


def green_kernel(side: int, m2: float = 0.0) -> TranslationKernel:
    """``(-Delta + m2)^{-1}``."""
    p1, p2 = _half_grid(side)
    lam = symbol_lambda(p1, p2)
    with np.errstate(divide="ignore"):
        mult = 1.0 / (lam + m2)
    return TranslationKernel(side, "green", {"m2": m2}, mult)


def c_kernel(side: int, m2: float, gamma: float) -> TranslationKernel:
    """``C(m2) = (-Delta + m2)^{-1} - gamma``."""
    k = green_kernel(side, m2)
    return TranslationKernel(side, "C", {"m2": m2, "gamma": gamma}, k.multiplier - gamma)


def cs_kernel(side: int, s: float, m2: float, gamma: float) -> TranslationKernel:
    """``C(s, m2) = (C(m2)^{-1} - s Delta)^{-1}``."""
    p1, p2 = _half_grid(side)
    mult = cs_symbol(symbol_lambda(p1, p2), s, m2, gamma)
    return TranslationKernel(side, "Cs", {"s": s, "m2": m2, "gamma": gamma}, mult)


def frakc_kernel(side: int, s: float, gamma: float) -> TranslationKernel:
    """Massless limit of ``(1 + s gamma Delta) C(s, m2) (1 + s gamma Delta)``."""
    p1, p2 = _half_grid(side)
    lam = symbol_lambda(p1, p2)
    mult = frakc_symbol(lam, s, gamma)
    mult[0, 0] = np.inf
    return TranslationKernel(side, "frakC", {"s": s, "gamma": gamma}, mult)


def covariance_qform(k: TranslationKernel, f: np.ndarray) -> float:
    """Quadratic form ``(f, K f)`` evaluated in Fourier space.

    Raises
    ------
    DomainError
        Massless kernel with a source of non-zero total charge.
    """
    f = np.asarray(f, dtype=float)
    if f.shape != (k.side, k.side):
        raise DomainError("field and kernel live on different tori")
    fh = np.fft.rfft2(f)
    w = np.abs(fh) ** 2 * _half_weights(k.side)[None, :]
    m = k.multiplier
    if k.massless:
        if abs(f.sum()) > 1e-12 * max(np.abs(f).sum(), 1.0):
            raise DomainError("massless form needs a neutral source (sum f = 0)")
        m = m.copy()
        m[0, 0] = 0.0
    return float((m * w).sum() / k.side**2)


def dipole_form(profile: np.ndarray, y) -> float:
    """``(delta_0 - delta_y, K (delta_0 - delta_y)) = 2 (K(0) - K(y))``."""
    side = profile.shape[0]
    return float(2.0 * (profile[0, 0] - profile[y[0] % side, y[1] % side]))


@dataclass
class GreenFit:
    """Least-squares fit ``form(y) = slope log|y| + const``."""

    slope: float
    const: float
    y: np.ndarray
    values: np.ndarray
    residuals: np.ndarray


def default_y_list(side: int) -> list:
    """Axis and diagonal displacements ``2^k`` up to ``side / 16``."""
    out = []
    k = 2
    while 2**k <= side // 16:
        out += [(2**k, 0), (0, 2**k), (2**k, 2**k)]
        k += 1
    return out


def green_asymptotics_fit(side: int, y_list=None, profile: np.ndarray | None = None) -> GreenFit:
    """Fit the massless dipole form against ``log |y|_2`` on a torus.

    Parameters
    ----------
    side : int
        Torus side, at least 512.
    y_list : sequence of pairs, optional
        Displacements with ``|y|_2 <= side / 8``; defaults to
        :func:`default_y_list`.
    profile : ndarray, optional
        Precomputed massless Green's function profile.
    """
    if side < 512:
        raise DomainError("green-fit needs side >= 512")
    if y_list is None:
        y_list = default_y_list(side)
    y = np.array(y_list, dtype=int).reshape(-1, 2)
    r = np.hypot(y[:, 0], y[:, 1])
    if np.any(r == 0) or np.any(r > side / 8):
        raise DomainError("displacements must satisfy 0 < |y| <= side/8")
    if len(np.unique(np.round(r, 9))) < 3:
        raise FitError("need at least 3 distinct |y| values")
    G = green_kernel(side).profile() if profile is None else profile
    vals = np.array([dipole_form(G, t) for t in y])
    X = np.column_stack([np.log(r), np.ones_like(r)])
    coef, *_ = np.linalg.lstsq(X, vals, rcond=None)
    return GreenFit(float(coef[0]), float(coef[1]), y, vals, vals - X @ coef)


GREEN_CONST_INF = (np.euler_gamma + 1.5 * math.log(2.0)) / math.pi


def green_dipole_infinite(y) -> float:
    """``(f_y, (-Delta)^{-1} f_y)`` on the infinite lattice by a 1D integral.

    Integrating out ``p2`` in closed form leaves
    ``(2/pi) int_0^pi (1 - cos(y1 p) r^{|y2|}) / sqrt(b^2 - 4) dp`` with
    ``b = 4 - 2 cos p`` and ``r = 2 / (b + sqrt(b^2 - 4))``.
    """
    y1, y2 = int(y[0]), abs(int(y[1]))
    if y1 == 0 and y2 == 0:
        return 0.0

    def g(p):
        bm = 4.0 * math.sin(p / 2) ** 2
        bp = 6.0 - 2.0 * math.cos(p)
        root = math.sqrt(bm * bp)
        r = 2.0 / (4.0 - 2.0 * math.cos(p) + root)
        rn = math.exp(y2 * math.log(r))
        num = -math.expm1(y2 * math.log(r)) + rn * 2.0 * math.sin(y1 * p / 2) ** 2
        return num / root

    nosc = max(abs(y1), y2, 1)
    pts = np.linspace(0, math.pi, min(nosc, 400) + 1)[1:-1]
    val, err = integrate.quad(g, 0.0, math.pi, limit=2000, epsabs=1e-14, epsrel=1e-13,
                              points=pts if len(pts) else None)
    return 2.0 * val / math.pi


def _gl_panels(y, n: int, levels: int = 48):
    """Gauss-Legendre nodes on ``[0, pi]`` graded towards 0."""
    x, w = np.polynomial.legendre.leggauss(n)
    edges = [0.0] + [math.pi * 2.0**-k for k in range(levels, 0, -1)] + [math.pi]
    hmax = 2.0 * math.pi / max(abs(y[0]), abs(y[1]), 1) / 2
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        m = max(1, int(math.ceil((b - a) / hmax)))
        for k in range(m):
            lo = a + (b - a) * k / m
            hi = a + (b - a) * (k + 1) / m
            nodes.append(0.5 * (hi - lo) * x + 0.5 * (hi + lo))
            weights.append(0.5 * (hi - lo) * w)
    return np.concatenate(nodes), np.concatenate(weights)


def infinite_volume_two_point(y, s: float, gamma: float, n: int = 16, tol: float = 1e-9) -> float:
    """``(f_y, frakC f_y)`` on the infinite lattice by 2D quadrature.

    Uses the reflection symmetry of the multiplier to integrate
    ``(2/pi^2) (1 - cos(y1 p1) cos(y2 p2)) K(p)`` over ``[0, pi]^2`` with
    tensor Gauss-Legendre panels graded geometrically into ``p = 0``; the
    integrand is bounded there, so the corner panel of width ``pi 2^-48`` is
    negligible.  The error estimate compares ``n`` and ``n + 8`` nodes.

    Raises
    ------
    DomainError
        ``y = 0`` or a denominator ``1 + s - s gamma lam`` that is not positive.
    NumericError
        Error estimate above ``tol``.
    """
    y = (int(y[0]), int(y[1]))
    if y == (0, 0):
        raise DomainError("y must be non-zero")
    if 1 + s - 8 * s * gamma <= 0 or 1 + s <= 0:
        raise DomainError("denominator 1 + s lam (1/lam - gamma) not positive on the spectrum")

    def quad(nn):
        p, w = _gl_panels(y, nn)
        c1 = np.cos(y[0] * p)
        c2 = np.cos(y[1] * p)
        lam_half = 4.0 * np.sin(p / 2) ** 2
        total = 0.0
        # row blocks keep the temporary arrays small
        for i0 in range(0, len(p), 256):
            sl = slice(i0, i0 + 256)
            lam = lam_half[sl, None] + lam_half[None, :]
            K = frakc_symbol(lam, s, gamma)
            F = (1.0 - c1[sl, None] * c2[None, :]) * K
            total += float(w[sl] @ F @ w)
        return 2.0 * total / math.pi**2

    a = quad(n)
    b = quad(n + 8)
    if abs(a - b) > tol:
        raise NumericError(f"quadrature error estimate {abs(a - b):.3g} above {tol:g}")
    return b


def torus_two_point(y, s: float, gamma: float, side: int, chunk: int = 256) -> float:
    """``(f_y, frakC f_y)`` on a finite torus as a direct momentum sum."""
    p = 2 * np.pi * np.arange(side) / side
    lh = 2.0 - 2.0 * np.cos(p)
    total = 0.0
    for i0 in range(0, side, chunk):
        sl = slice(i0, i0 + chunk)
        lam = lh[sl, None] + lh[None, :]
        ph = y[0] * p[sl, None] + y[1] * p[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            K = frakc_symbol(lam, s, gamma)
            F = (2.0 - 2.0 * np.cos(ph)) * K
        if i0 == 0:
            F[0, 0] = 0.0
        total += float(F.sum())
    return total / side**2


def _A_polys(s: float, gamma: float):
    """``A(lam) = Q(lam) / Dn(lam)`` with the ``1/lam`` pole cancelled exactly."""
    num = (1 + s) * P.polymul(P.polymul([1.0, -s * gamma], [1.0, -s * gamma]), [1.0, -gamma])
    num = P.polysub(num, [1 + s, -s * gamma])
    Q = np.asarray(num[1:], dtype=float)  # constant term cancels
    Dn = (1 + s) * np.array([1 + s, -s * gamma])
    return Q, Dn


def symbol_A(lam, s: float, gamma: float):
    """Smooth part ``A = K - 1/((1 + s) lam)`` of the two-point multiplier."""
    Q, Dn = _A_polys(s, gamma)
    return P.polyval(lam, Q) / P.polyval(lam, Dn)


def laplacian_A_sup(s: float, gamma: float, grid: int = 512) -> float:
    """``sup_p |Delta_p A(p)|`` for the continuum Laplacian in ``p``."""
    Q, Dn = _A_polys(s, gamma)
    p = 2 * np.pi * np.arange(grid) / grid
    p1, p2 = np.meshgrid(p, p, indexing="ij")
    lam = symbol_lambda(p1, p2)
    q, dq, ddq = (P.polyval(lam, c) for c in (Q, P.polyder(Q), P.polyder(Q, 2)))
    d, dd = P.polyval(lam, Dn), P.polyval(lam, P.polyder(Dn))
    F1 = (dq * d - q * dd) / d**2
    # Dn is linear, so its second derivative vanishes
    F2 = (ddq * d**2 - 2 * dq * dd * d + 2 * q * dd**2) / d**3
    grad2 = 4.0 * (np.sin(p1) ** 2 + np.sin(p2) ** 2)
    lap = 2.0 * (np.cos(p1) + np.cos(p2))
    return float(np.abs(F2 * grad2 + F1 * lap).max())


@dataclass
class RemainderSplit:
    """``(f_y, frakC f_y) = leading + C1 + R``."""

    leading: float
    C1: float
    R: float

    @property
    def total(self) -> float:
        return self.leading + self.C1 + self.R


def _A_fourier(s: float, gamma: float, grid: int) -> np.ndarray:
    p = 2 * np.pi * np.arange(grid) / grid
    lam = symbol_lambda(p[:, None], p[None, :])
    return np.real(np.fft.ifft2(symbol_A(lam, s, gamma)))


def remainder_decomposition(y, s: float, gamma: float, grid: int = 1024) -> RemainderSplit:
    """Split the two-point form into the Green's part, a constant and ``R(y)``.

    ``leading = (f_y, (-Delta)^{-1} f_y) / (1 + s)``, ``C1 = (1/2pi^2) int A``
    and ``R(y) = -(1/4pi^2) int 2 cos(y.p) A(p) dp``.  ``A`` is a smooth
    periodic function, so its Fourier coefficients come from the trapezoid
    rule on a ``grid x grid`` lattice with exponentially small aliasing.
    """
    y = (int(y[0]), int(y[1]))
    if y == (0, 0):
        raise DomainError("y must be non-zero")
    if 1 + s - 8 * s * gamma <= 0 or 1 + s <= 0:
        raise DomainError("denominator 1 + s lam (1/lam - gamma) not positive on the spectrum")
    if max(abs(y[0]), abs(y[1])) >= grid // 2:
        raise DomainError("grid too small for this displacement")
    ahat = _A_fourier(s, gamma, grid)
    lead = green_dipole_infinite(y) / (1 + s)
    C1 = 2.0 * float(ahat[0, 0])
    R = -2.0 * float(ahat[y[0] % grid, y[1] % grid])
    return RemainderSplit(lead, C1, R)
