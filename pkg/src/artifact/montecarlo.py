"""Sampling and exact enumeration of the integer-height model.

Heights ``n`` are integers; the physical field is ``sigma = 2 pi n`` and the
rescaled field is ``h n`` with ``h = 2 pi / sqrt(beta)``.  The weight is

    exp(-1/2 h^2 (n, (-Delta + m2) n)),

so ``m2 = 0`` needs the pinned gauge ``n(0) = 0`` and ``m2 > 0`` uses free
heights.  Observables:

* ``Var(sigma_0 - sigma_y) = 4 pi^2 E[(n_0 - n_y)^2]``
* ``<cos(eta h (n_0 - n_y))>`` (equal to ``cos(beta^{-1/2} eta (sigma_0 - sigma_y))``)
* ``<exp(z h (f, n))>`` for ``f = f_1 + T_y f_2`` with the dipole
  ``f_1 = f_2 = delta_0 - delta_{e_1}``.

Single-site updates use a counter-based RNG: the uniform for site ``x`` in
sweep ``t`` is a hash of ``(seed, t * n_sites + x)``, so a run is reproducible
from one 64-bit seed.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numba as nb
import numpy as np
from scipy.special import logsumexp

from .errors import ConfigError, DomainError, FitError, ResourceError
from .lattice import laplacian_apply
from .regularize import log_comb_density

log = logging.getLogger(__name__)

MEASURE_TABLE = 256  # integer differences covered by the lookup tables


# ---------------------------------------------------------------------------
# RNG and single-site kernels


@nb.njit(cache=True, inline="always")
def _mix(x):
    x = (x + np.uint64(0x9E3779B97F4A7C15))
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


@nb.njit(cache=True, inline="always")
def _uniform(key, counter):
    return float(_mix(key ^ _mix(np.uint64(counter))) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


def uniforms(seed: int, counters) -> np.ndarray:
    """The stream used by the samplers, exposed for tests."""
    c = np.asarray(counters, dtype=np.int64)
    return _uniforms(np.uint64(seed), c)


@nb.njit(cache=True)
def _uniforms(key, counters):
    out = np.empty(counters.shape[0])
    k = _mix(key)
    for i in range(counters.shape[0]):
        out[i] = _uniform(k, counters[i])
    return out


def heatbath_conditional(S: float, h: float, m2: float, window: int):
    """Heights and probabilities of the one-site conditional law.

    The conditional of ``n_x`` given its neighbour sum ``S`` is the discrete
    Gaussian ``exp(-a/2 (k - mu)^2)`` with ``a = h^2 (4 + m2)`` and
    ``mu = S / (4 + m2)``, truncated to ``floor(mu) +- window``.
    """
    a = h * h * (4.0 + m2)
    mu = S / (4.0 + m2)
    base = math.floor(mu)
    k = np.arange(base - window, base + window + 2)
    lw = -0.5 * a * (k - mu) ** 2
    p = np.exp(lw - lw.max())
    return k, p / p.sum()


def heatbath_window(h: float, m2: float) -> int:
    """Half-width covering 8 standard deviations of the conditional (at least 3)."""
    sd = 1.0 / (h * math.sqrt(4.0 + m2))
    return max(3, int(math.ceil(8.0 * sd)))


def _massless_tables(h: float, window: int):
    # conditional CDFs for mu = r / 4, r = 0..3, over k = -window .. window + 1
    k = np.arange(-window, window + 2)
    cdf = np.empty((4, len(k)))
    for r in range(4):
        lw = -0.5 * h * h * 4.0 * (k - r / 4.0) ** 2
        p = np.exp(lw - lw.max())
        cdf[r] = np.cumsum(p / p.sum())
    cdf[:, -1] = 1.0
    return k.astype(np.int64), cdf


@nb.njit(cache=True)
def _sweep_heatbath0(n, key, sweep, kvals, cdf, pinned):
    side = n.shape[0]
    ns = side * side
    k = _mix(key)
    for x1 in range(side):
        for x2 in range(side):
            idx = x1 * side + x2
            if pinned and idx == 0:
                continue
            S = (n[(x1 + 1) % side, x2] + n[(x1 - 1) % side, x2]
                 + n[x1, (x2 + 1) % side] + n[x1, (x2 - 1) % side])
            q = S >> 2
            r = S & 3
            u = _uniform(k, sweep * ns + idx)
            row = cdf[r]
            j = 0
            while j < row.shape[0] - 1 and u > row[j]:
                j += 1
            n[x1, x2] = q + kvals[j]


@nb.njit(cache=True)
def _sweep_heatbath(n, key, sweep, h, m2, window, pinned):
    side = n.shape[0]
    ns = side * side
    k = _mix(key)
    a = h * h * (4.0 + m2)
    nw = 2 * window + 2
    w = np.empty(nw)
    for x1 in range(side):
        for x2 in range(side):
            idx = x1 * side + x2
            if pinned and idx == 0:
                continue
            S = (n[(x1 + 1) % side, x2] + n[(x1 - 1) % side, x2]
                 + n[x1, (x2 + 1) % side] + n[x1, (x2 - 1) % side])
            mu = S / (4.0 + m2)
            base = math.floor(mu) - window
            tot = 0.0
            for j in range(nw):
                d = base + j - mu
                w[j] = math.exp(-0.5 * a * d * d)
                tot += w[j]
            u = _uniform(k, sweep * ns + idx) * tot
            acc = 0.0
            j = 0
            while j < nw - 1:
                acc += w[j]
                if u <= acc:
                    break
                j += 1
            n[x1, x2] = int(base) + j


@nb.njit(cache=True)
def _sweep_metropolis(n, key, sweep, h, m2, window, pinned):
    side = n.shape[0]
    ns = side * side
    k = _mix(key)
    a = h * h * (4.0 + m2)
    acc = 0
    for x1 in range(side):
        for x2 in range(side):
            idx = x1 * side + x2
            if pinned and idx == 0:
                continue
            S = (n[(x1 + 1) % side, x2] + n[(x1 - 1) % side, x2]
                 + n[x1, (x2 + 1) % side] + n[x1, (x2 - 1) % side])
            c = 2 * (sweep * ns + idx)
            step = int(_uniform(k, c) * 2 * window)
            step = step - window if step < window else step - window + 1
            old = n[x1, x2]
            new = old + step
            # energy in n_x: a/2 n^2 - h^2 n S
            dE = 0.5 * a * (new * new - old * old) - h * h * (new - old) * S
            if dE <= 0.0 or _uniform(k, c + 1) < math.exp(-dE):
                n[x1, x2] = new
                acc += 1
    return acc


def metropolis_log_acceptance(dE: float) -> float:
    """Log of the Metropolis acceptance ``min(1, e^{-dE})``."""
    return min(0.0, -dE)


def site_energy(k, S: float, h: float, m2: float):
    """Energy of height ``k`` at a site with neighbour sum ``S`` (terms depending on ``k``)."""
    k = np.asarray(k, dtype=float)
    return 0.5 * h * h * (4.0 + m2) * k * k - h * h * k * S


def log_transition(kind: str, k: int, kp: int, S: float, h: float, m2: float, window: int = 1) -> float:
    """Log probability that one update moves the site from ``k`` to ``kp != k``."""
    if kind == "heatbath":
        # independent of k: the new height is drawn from the conditional law
        a = h * h * (4.0 + m2)
        mu = S / (4.0 + m2)
        return -0.5 * a * (kp - mu) ** 2 - float(logsumexp(-0.5 * a * (np.arange(-400, 401) + math.floor(mu) - mu) ** 2))
    if kind == "metropolis":
        if not 0 < abs(kp - k) <= window:
            return -math.inf
        dE = float(site_energy(kp, S, h, m2) - site_energy(k, S, h, m2))
        return -math.log(2 * window) + metropolis_log_acceptance(dE)
    raise ConfigError(f"unknown update {kind!r}")


def detailed_balance_residual(kind: str, k: int, kp: int, S: float, h: float, m2: float, window: int = 1) -> float:
    """``|log T(k->k') - log T(k'->k) + E(k') - E(k)|``, zero for a reversible update."""
    lhs = log_transition(kind, k, kp, S, h, m2, window) - log_transition(kind, kp, k, S, h, m2, window)
    rhs = -float(site_energy(kp, S, h, m2) - site_energy(k, S, h, m2))
    return abs(lhs - rhs)


@nb.njit(cache=True)
def _measure(n, ys, dh, cos_tab, mgf_tab, tab_off, var_out, cos_out, mgf_out):
    """Translation- and rotation-averaged observables of one configuration."""
    side = n.shape[0]
    ny = ys.shape[0]
    neta = cos_tab.shape[0]
    nz = mgf_tab.shape[0]
    tmax = cos_tab.shape[1]
    mmax = mgf_tab.shape[1]
    norm = 1.0 / (2.0 * side * side)
    for iy in range(ny):
        v = 0.0
        for e in range(neta):
            cos_out[e, iy] = 0.0
        for e in range(nz):
            mgf_out[e, iy] = 0.0
        for rot in range(2):
            y1 = ys[iy, 0] if rot == 0 else -ys[iy, 1]
            y2 = ys[iy, 1] if rot == 0 else ys[iy, 0]
            for x1 in range(side):
                for x2 in range(side):
                    a = n[x1, x2]
                    b = n[(x1 + y1) % side, (x2 + y2) % side]
                    d = a - b
                    v += d * d
                    t = d + tab_off
                    for e in range(neta):
                        if 0 <= t < tmax:
                            cos_out[e, iy] += cos_tab[e, t]
                        else:
                            cos_out[e, iy] += math.cos(dh[e] * d)
                    if nz > 0:
                        # (f, n) for f = (delta_0 - delta_e) + T_y (delta_0 - delta_e), e along y's frame
                        ex1 = 1 if rot == 0 else 0
                        ex2 = 0 if rot == 0 else 1
                        fn = (a - n[(x1 + ex1) % side, (x2 + ex2) % side]
                              + b - n[(x1 + y1 + ex1) % side, (x2 + y2 + ex2) % side])
                        t2 = fn + 2 * tab_off
                        for e in range(nz):
                            if 0 <= t2 < mmax:
                                mgf_out[e, iy] += mgf_tab[e, t2]
                            else:
                                mgf_out[e, iy] += math.exp(dh[neta + e] * fn)
        var_out[iy] = v * norm
        for e in range(neta):
            cos_out[e, iy] *= norm
        for e in range(nz):
            mgf_out[e, iy] *= norm


# ---------------------------------------------------------------------------
# configuration and results


@dataclass
class McConfig:
    """Monte Carlo run specification.

    Attributes
    ----------
    beta, m2 : float
        Inverse temperature and mass.
    side : int
        Torus side.
    n_burn, n_sweeps : int
        Burn-in sweeps and measured sweeps.
    measure_every : int
        Sweeps between measurements.
    update : {"heatbath", "metropolis"}
    window : int
        Metropolis proposal half-width (heat-bath ignores it).
    seed : int
        64-bit seed.
    y_list : list of pair
        Displacements; each is averaged with its 90 degree rotation.
    etas, zs : list of float
        Cosine charges and MGF arguments.
    gauge : {"auto", "pinned", "free"}
        ``auto`` pins at ``m2 = 0`` and frees otherwise.
    """

    beta: float
    m2: float = 0.0
    side: int = 32
    n_burn: int = 1000
    n_sweeps: int = 10000
    measure_every: int = 10
    update: str = "heatbath"
    window: int = 1
    seed: int = 1
    y_list: list = field(default_factory=lambda: [(1, 0), (2, 0), (4, 0)])
    etas: list = field(default_factory=lambda: [0.5])
    zs: list = field(default_factory=list)
    gauge: str = "auto"

    def validate(self):
        if self.beta <= 0:
            raise ConfigError("beta must be positive")
        if self.m2 < 0:
            raise ConfigError("m2 must be non-negative")
        if self.side < 2 or self.n_sweeps <= 0 or self.n_burn < 0 or self.measure_every <= 0:
            raise ConfigError("side >= 2 and positive sweep counts required")
        if self.update not in ("heatbath", "metropolis"):
            raise ConfigError(f"unknown update {self.update!r}")
        if self.update == "metropolis" and self.window <= 0:
            raise ConfigError("zero proposal window is not ergodic")
        if self.pinned is False and self.m2 == 0:
            raise ConfigError("free gauge needs m2 > 0")
        if not self.y_list:
            raise ConfigError("empty y_list")

    @property
    def h(self) -> float:
        return 2.0 * math.pi / math.sqrt(self.beta)

    @property
    def pinned(self) -> bool:
        if self.gauge == "auto":
            return self.m2 == 0
        return self.gauge == "pinned"


@dataclass
class ObservableEstimate:
    """Mean with an autocorrelation-corrected error."""

    mean: float
    stderr: float
    tau_int: float
    n: int
    seeds: tuple = ()
    blocking_err: float = math.nan

    def to_dict(self):
        return asdict(self)


def integrated_autocorr(x, c: float = 6.0) -> float:
    """Integrated autocorrelation time with automatic windowing (``tau >= 1/2``)."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 4:
        return 0.5
    d = x - x.mean()
    var = float(d @ d) / n
    if var == 0:
        return 0.5
    f = np.fft.rfft(d, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n] / (n * var)
    tau = 0.5
    for W in range(1, n):
        tau += acf[W]
        if W >= c * tau:
            break
    return max(0.5, float(tau))


def blocking_error(x, min_blocks: int = 32) -> float:
    """Largest standard error over successive pairwise blockings."""
    x = np.asarray(x, dtype=float)
    best = float(x.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else math.nan
    while len(x) // 2 >= min_blocks:
        m = len(x) // 2
        x = 0.5 * (x[: 2 * m : 2] + x[1 : 2 * m : 2])
        best = max(best, float(x.std(ddof=1) / math.sqrt(len(x))))
    return best


def estimate(series, seeds=()) -> ObservableEstimate:
    x = np.asarray(series, dtype=float)
    tau = integrated_autocorr(x)
    n = len(x)
    sd = float(x.std(ddof=1)) if n > 1 else 0.0
    err = sd * math.sqrt(2.0 * tau / n) if n > 0 else math.nan
    return ObservableEstimate(float(x.mean()), err, tau, n, tuple(seeds), blocking_error(x))


@dataclass
class McResult:
    config: McConfig
    y_list: np.ndarray
    var_series: np.ndarray  # (n_meas, n_y), Var(sigma_0 - sigma_y) samples
    cos_series: np.ndarray  # (n_meas, n_eta, n_y)
    mgf_series: np.ndarray  # (n_meas, n_z, n_y)
    acceptance: float
    seconds: float
    final: np.ndarray = field(repr=False, default=None)

    def variance(self) -> list[ObservableEstimate]:
        return [estimate(self.var_series[:, i], (self.config.seed,)) for i in range(len(self.y_list))]

    def cosine(self, k: int = 0) -> list[ObservableEstimate]:
        return [estimate(self.cos_series[:, k, i], (self.config.seed,)) for i in range(len(self.y_list))]

    def mgf(self, k: int = 0) -> list[ObservableEstimate]:
        return [estimate(self.mgf_series[:, k, i], (self.config.seed,)) for i in range(len(self.y_list))]


def _tables(cfg: McConfig):
    h = cfg.h
    off = MEASURE_TABLE
    d = np.arange(-off, off)
    cos_tab = np.cos(np.outer(np.asarray(cfg.etas, dtype=float) * h, d))
    dm = np.arange(-2 * off, 2 * off)
    mgf_tab = np.exp(np.clip(np.outer(np.asarray(cfg.zs, dtype=float) * h, dm), -700, 700))
    dh = np.array([e * h for e in cfg.etas] + [z * h for z in cfg.zs], dtype=float)
    return dh, cos_tab, mgf_tab, off


def mcmc_run(cfg: McConfig, init: np.ndarray | None = None) -> McResult:
    """Run a single chain and record observables every ``measure_every`` sweeps."""
    cfg.validate()
    t0 = time.time()
    side = cfg.side
    n = np.zeros((side, side), dtype=np.int64) if init is None else np.array(init, dtype=np.int64)
    if cfg.pinned:
        n -= n[0, 0]
    key = np.uint64(cfg.seed & 0xFFFFFFFFFFFFFFFF)
    h, m2 = cfg.h, float(cfg.m2)
    window = heatbath_window(h, m2) if cfg.update == "heatbath" else cfg.window
    use_table = cfg.update == "heatbath" and m2 == 0.0
    if use_table:
        kvals, cdf = _massless_tables(h, window)
    ys = np.asarray(cfg.y_list, dtype=np.int64).reshape(-1, 2)
    dh, cos_tab, mgf_tab, off = _tables(cfg)
    n_meas = cfg.n_sweeps // cfg.measure_every
    var_s = np.empty((n_meas, len(ys)))
    cos_s = np.empty((n_meas, len(cfg.etas), len(ys)))
    mgf_s = np.empty((n_meas, len(cfg.zs), len(ys)))
    cbuf = np.empty((len(cfg.etas), len(ys)))
    mbuf = np.empty((len(cfg.zs), len(ys)))
    vbuf = np.empty(len(ys))
    accepted = 0
    total = cfg.n_burn + n_meas * cfg.measure_every
    im = 0
    for t in range(total):
        if cfg.update == "metropolis":
            accepted += _sweep_metropolis(n, key, t, h, m2, window, cfg.pinned)
        elif use_table:
            _sweep_heatbath0(n, key, t, kvals, cdf, cfg.pinned)
        else:
            _sweep_heatbath(n, key, t, h, m2, window, cfg.pinned)
        if t >= cfg.n_burn and (t - cfg.n_burn + 1) % cfg.measure_every == 0:
            _measure(n, ys, dh, cos_tab, mgf_tab, off, vbuf, cbuf, mbuf)
            var_s[im] = vbuf * (4.0 * math.pi**2)
            cos_s[im] = cbuf
            mgf_s[im] = mbuf
            im += 1
    n_upd = total * (side * side - (1 if cfg.pinned else 0))
    acc = accepted / n_upd if cfg.update == "metropolis" else 1.0
    return McResult(cfg, ys, var_s, cos_s, mgf_s, acc, time.time() - t0, n)


# ---------------------------------------------------------------------------
# exact enumeration


def laplacian_matrix(side: int | None = None, chain: int | None = None) -> np.ndarray:
    """Dense ``-Delta`` on a ``side x side`` torus or a periodic chain."""
    if (side is None) == (chain is None):
        raise DomainError("give exactly one of side or chain")
    if side is not None:
        ns = side * side
        M = np.empty((ns, ns))
        for i in range(ns):
            e = np.zeros(ns)
            e[i] = 1.0
            M[:, i] = laplacian_apply(e.reshape(side, side)).ravel()
        return M
    M = 2.0 * np.eye(chain)
    for i in range(chain):
        M[i, (i + 1) % chain] -= 1.0
        M[i, (i - 1) % chain] -= 1.0
    return M


@dataclass
class ExactResult:
    """Exact sums over truncated height configurations."""

    log_Z: float
    var: dict  # y -> Var(sigma_0 - sigma_y)
    mgf: dict  # (z, y) -> MGF(z) for f1 + T_y f2; (z, None) for f1 alone
    cos: dict  # (eta, y) -> <cos(eta h (n_0 - n_y))>
    tail: float
    n_states: int
    f: np.ndarray = field(repr=False, default=None)


def default_dipole(side: int) -> np.ndarray:
    """``delta_0 - delta_{e_1}`` on a ``side x side`` torus."""
    f = np.zeros((side, side))
    f[0, 0] += 1.0
    f[1 % side, 0] -= 1.0
    return f


def exact_enumerate(beta: float, m2: float, n_max: int, side: int | None = 2, chain: int | None = None,
                    y_list=((1, 0), (1, 1)), zs=(0.1, 0.2), etas=(0.5,), f1: np.ndarray | None = None,
                    f2: np.ndarray | None = None, gauge: str = "auto", budget: int = 10**8,
                    chunk: int = 2**20) -> ExactResult:
    """Brute-force sums over all heights with ``|n_x| <= n_max``.

    The moment generating function is evaluated for ``f1`` alone and for
    ``f1 + T_y f2`` at every ``y``; both default to ``delta_0 - delta_{e_1}``.

    The truncation tail is the weight of configurations with some
    ``|n_x| = n_max`` relative to the total.

    Raises
    ------
    ResourceError
        If ``(2 n_max + 1)^sites`` exceeds ``budget``.
    """
    if chain is not None:
        side = None
    L = laplacian_matrix(side, chain)
    ns = L.shape[0]
    pinned = (m2 == 0) if gauge == "auto" else gauge == "pinned"
    if not pinned and m2 <= 0:
        raise DomainError("free gauge needs m2 > 0")
    free = np.arange(1 if pinned else 0, ns)
    base = 2 * n_max + 1
    count = base ** len(free)
    if count > budget:
        raise ResourceError(f"{count} states exceed the budget {budget}", count=count)
    h = 2.0 * math.pi / math.sqrt(beta)
    Q = h * h * (L + m2 * np.eye(ns))
    dip = default_dipole(side) if side is not None else np.eye(ns)[0] - np.eye(ns)[1 % ns]
    f1 = dip if f1 is None else np.asarray(f1, dtype=float)
    f2 = dip if f2 is None else np.asarray(f2, dtype=float)
    ykeys = [tuple(int(v) for v in np.atleast_1d(y)) for y in y_list]
    if side is not None:
        yi = [((y[0] % side) * side + (y[1] % side)) for y in ykeys]
        fs = {y: (f1 + np.roll(f2, y, axis=(0, 1))).ravel() for y in ykeys}
    else:
        yi = [y[0] % ns for y in ykeys]
        fs = {y: f1 + np.roll(f2, y[0]) for y in ykeys}
    fs[None] = f1.ravel()
    fmat = np.array(list(fs.values())).T
    # accumulate log-sum-exp pieces per chunk
    parts = {"Z": [], "edge": []}
    for y in ykeys:
        parts[("var", y)] = []
    for z in zs:
        for y in fs:
            parts[("mgf", z, y)] = []
    for e in etas:
        for y in ykeys:
            parts[("cos", e, y)] = []
    for start in range(0, count, chunk):
        idx = np.arange(start, min(start + chunk, count), dtype=np.int64)
        n = np.zeros((len(idx), ns), dtype=np.int64)
        rem = idx.copy()
        for k in free[::-1]:
            n[:, k] = rem % base - n_max
            rem //= base
        lw = -0.5 * np.einsum("si,ij,sj->s", n, Q, n)
        parts["Z"].append(logsumexp(lw))
        edge = np.any(np.abs(n[:, free]) == n_max, axis=1)
        parts["edge"].append(logsumexp(lw[edge]) if edge.any() else -np.inf)
        for y, i in zip(ykeys, yi):
            d = (n[:, 0] - n[:, i]).astype(float)
            parts[("var", y)].append(logsumexp(lw, b=4 * math.pi**2 * d * d) if np.any(d) else -np.inf)
            for e in etas:
                # cosine may be negative: keep signed sums
                parts[("cos", e, y)].append(
                    (np.max(lw), float(np.sum(np.exp(lw - np.max(lw)) * np.cos(e * h * d)))))
        fn = n @ fmat
        for z in zs:
            for k, y in enumerate(fs):
                parts[("mgf", z, y)].append(logsumexp(lw + z * h * fn[:, k]))
    log_Z = float(logsumexp(parts["Z"]))
    var = {k[1]: float(np.exp(logsumexp(v) - log_Z)) for k, v in parts.items() if isinstance(k, tuple) and k[0] == "var"}
    mgf = {(k[1], k[2]): float(np.exp(logsumexp(v) - log_Z))
           for k, v in parts.items() if isinstance(k, tuple) and k[0] == "mgf"}
    cos = {}
    for k, v in parts.items():
        if isinstance(k, tuple) and k[0] == "cos":
            tot = sum(s * math.exp(m - log_Z) for m, s in v)
            cos[(k[1], k[2])] = float(tot)
    tail = float(np.exp(logsumexp(parts["edge"]) - log_Z))
    return ExactResult(log_Z, var, mgf, cos, tail, count, f1)


# ---------------------------------------------------------------------------
# fits


@dataclass
class VarianceFit:
    slope: float
    slope_err: float
    intercept: float
    s_hat: float
    s_hat_err: float
    chi2_dof: float


def _wls(x, y, err):
    x, y, err = map(lambda a: np.asarray(a, dtype=float), (x, y, err))
    if np.any(~np.isfinite(err)) or np.any(err <= 0):
        raise FitError("errors must be positive and finite")
    coef, cov = np.polyfit(x, y, 1, w=1.0 / err, cov="unscaled")
    resid = (y - np.polyval(coef, x)) / err
    dof = max(len(x) - 2, 1)
    return coef, cov, float(resid @ resid / dof)


def _block_jackknife(series, stat, n_blocks: int) -> float:
    """Block-jackknife error of ``stat(mean over rows of series)``."""
    series = np.asarray(series, dtype=float)
    n = series.shape[0] // n_blocks * n_blocks
    if n < n_blocks or n_blocks < 2:
        raise FitError("series too short for the jackknife")
    sums = series[:n].reshape(n_blocks, -1, *series.shape[1:]).sum(axis=1)
    tot = sums.sum(axis=0)
    m = n - n // n_blocks
    vals = np.array([stat((tot - b) / m) for b in sums])
    return float(math.sqrt((n_blocks - 1) / n_blocks * np.sum((vals - vals.mean()) ** 2)))


def estimate_variance_and_stiffness(r, var, var_err, beta: float, side: int | None = None,
                                    series=None, n_blocks: int = 50) -> VarianceFit:
    """Weighted fit ``Var(sigma_0 - sigma_y) = slope log|y| + c`` and the stiffness.

    The Gaussian relation ``Var = beta log|y| / (pi (1 + s))`` gives
    ``s_hat = beta / (pi slope) - 1``, with the error propagated from the
    slope.  If the per-measurement ``series`` (shape ``(n, len(r))``) is
    given, the slope error is a block jackknife, which accounts for the
    correlation between radii; otherwise the points are taken as independent.

    Raises
    ------
    FitError
        Fewer than four distinct radii, radii beyond ``side / 8``, or a
        degenerate fit.
    """
    r = np.asarray(r, dtype=float)
    if len(np.unique(np.round(r, 12))) < 4:
        raise FitError("need at least 4 distinct |y|")
    if side is not None and r.max() > side / 8:
        raise FitError(f"|y| = {r.max()} exceeds side/8 = {side / 8}")
    coef, cov, chi2 = _wls(np.log(r), var, var_err)
    slope, icpt = float(coef[0]), float(coef[1])
    serr = float(math.sqrt(cov[0, 0]))
    if not np.isfinite(serr):
        raise FitError("ill-conditioned variance fit")
    if series is not None:
        w = 1.0 / np.asarray(var_err, dtype=float)
        serr = _block_jackknife(series, lambda v: np.polyfit(np.log(r), v, 1, w=w)[0], n_blocks)
    if slope == 0:
        s_hat, s_err = math.inf, math.inf
    else:
        s_hat = beta / (math.pi * slope) - 1.0
        s_err = beta / (math.pi * slope**2) * serr
    return VarianceFit(slope, serr, icpt, s_hat, s_err, chi2)


@dataclass
class CosineFit:
    exponent: float
    exponent_err: float
    amplitude: float
    used: np.ndarray
    truncated: bool


def cosine_correlation(r, corr, corr_err, eta: float, noise_sigma: float = 3.0,
                       series=None, n_blocks: int = 50) -> CosineFit:
    """Fit ``<cos> = C |y|^{-p}`` on points above the noise floor.

    Points with ``corr < noise_sigma * err`` are dropped (``truncated`` flag).
    With the per-measurement ``series`` (shape ``(n, len(r))``) the exponent
    error is a block jackknife over measurements.
    """
    r, corr, corr_err = (np.asarray(a, dtype=float) for a in (r, corr, corr_err))
    if eta == 0:
        return CosineFit(0.0, 0.0, 1.0, np.ones(len(r), dtype=bool), False)
    ok = corr > noise_sigma * corr_err
    if ok.sum() < 2:
        raise FitError("cosine correlation below the noise floor")
    x = np.log(r[ok])
    le = corr_err[ok] / corr[ok]

    def fit(c):
        return np.polyfit(x, np.log(c), 1, w=1.0 / le)

    if ok.sum() == 2:
        lc = np.log(corr[ok])
        p = -(lc[1] - lc[0]) / (x[1] - x[0])
        pe = math.hypot(le[0], le[1]) / abs(x[1] - x[0])
        amp = math.exp(lc[0] + p * x[0])
    else:
        coef, cov, _ = _wls(x, np.log(corr[ok]), le)
        p, pe, amp = -coef[0], math.sqrt(cov[0, 0]), math.exp(coef[1])
    if series is not None:
        sub = np.asarray(series, dtype=float)[:, ok]
        with np.errstate(invalid="ignore", divide="ignore"):
            pe = _block_jackknife(sub, lambda c: -fit(c)[0], n_blocks)
        if not math.isfinite(pe):
            raise FitError("jackknife sample below zero; raise noise_sigma")
    return CosineFit(float(p), float(pe), float(amp), ok, bool((~ok).any()))


@dataclass
class TiltedEstimate:
    value: float
    ess: float
    reliable: bool


def tilted_expectation(F, tilt, tau: float, min_ess: float = 100.0) -> TiltedEstimate:
    """``E[e^{tau a} F] / E[e^{tau a}]`` from samples ``F_i`` and ``a_i = (f~, phi_i)``."""
    F = np.asarray(F, dtype=float)
    a = np.asarray(tilt, dtype=float)
    lw = tau * a
    w = np.exp(lw - lw.max())
    val = float(np.sum(w * F) / np.sum(w))
    ess = float(np.sum(w) ** 2 / np.sum(w * w))
    return TiltedEstimate(val, ess, ess >= min_ess)


# ---------------------------------------------------------------------------
# Gaussian reformulation


def dense_cs(ns_side: int, s: float, m2: float, gamma: float) -> np.ndarray:
    """Dense ``C(s, m2) = (C(m2)^{-1} - s Delta)^{-1}`` with ``C(m2) = (-Delta + m2)^{-1} - gamma``.

    Raises
    ------
    DomainError
        If ``C(m2)`` or ``C(s, m2)`` is not positive definite.
    """
    Lm = laplacian_matrix(ns_side)
    n = Lm.shape[0]
    Cm = np.linalg.inv(Lm + m2 * np.eye(n)) - gamma * np.eye(n)
    ev = np.linalg.eigvalsh(Cm)
    if ev.min() <= 0:
        raise DomainError(
            f"C(m2) = (-Delta + m2)^-1 - gamma is not positive definite "
            f"(min eigenvalue {ev.min():.4g}); need gamma < 1/(8 + m2) here")
    Cs = np.linalg.inv(np.linalg.inv(Cm) + s * Lm)
    Cs = 0.5 * (Cs + Cs.T)
    if np.linalg.eigvalsh(Cs).min() <= 0:
        raise DomainError("C(s, m2) is not positive definite")
    return Cs


@dataclass
class RatioEstimate:
    ratio: float
    err: float
    prefactor: float
    mgf: float
    mgf_err: float
    n_samples: int
    ess: float


def gaussian_rhs_ratio(side: int, m2: float, s: float, gamma: float, beta: float, z: float,
                       f: np.ndarray | None = None, n_samples: int = 4_000_000, seed: int = 0,
                       chunk: int = 250_000) -> RatioEstimate:
    """Gaussian side of the reformulated moment generating function.

    Estimates ``E[e^{z (f~, phi)} Z_0(phi + gamma z f)] / E[Z_0(phi)]`` with
    ``phi ~ N(0, C(s, m2))``, ``f~ = (1 + s gamma Delta) f`` and
    ``Z_0(phi) = exp(s/2 (phi, -Delta phi) + sum_x U(phi_x))``, ``U = log rho``.
    Numerator and denominator share samples.  ``mgf`` multiplies the ratio
    by ``exp(gamma z^2 (f, f~) / 2)``.

    Raises
    ------
    DomainError
        Covariance not positive definite, or more than 16^2 sites.
    """
    if side * side > 256:
        raise DomainError("dense factorisation limited to 16^2 sites")
    C = dense_cs(side, s, m2, gamma)
    f = default_dipole(side) if f is None else np.asarray(f, dtype=float)
    fv = f.ravel()
    ftil = (f - s * gamma * laplacian_apply(f)).ravel()
    pref = math.exp(0.5 * gamma * z * z * float(fv @ ftil))
    if z == 0:
        return RatioEstimate(1.0, 0.0, 1.0, 1.0, 0.0, 0, float(n_samples))
    Lm = laplacian_matrix(side)
    chol = np.linalg.cholesky(C)
    rng = np.random.Generator(np.random.Philox(seed))
    num, den = [], []
    shift = gamma * z * fv
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        phi = rng.standard_normal((m, len(fv))) @ chol.T
        def logZ0(p):
            return 0.5 * s * np.einsum("si,ij,sj->s", p, Lm, p) + log_comb_density(p, beta, gamma).sum(axis=1)
        num.append(z * (phi @ ftil) + logZ0(phi + shift))
        den.append(logZ0(phi))
        done += m
    ln = np.concatenate(num)
    ld = np.concatenate(den)
    ref = max(ln.max(), ld.max())
    a = np.exp(ln - ref)
    b = np.exp(ld - ref)
    ma, mb = a.mean(), b.mean()
    ratio = ma / mb
    n = len(a)
    va, vb = a.var(ddof=1), b.var(ddof=1)
    cab = np.cov(a, b)[0, 1]
    var_r = (va / mb**2 - 2 * ma * cab / mb**3 + ma**2 * vb / mb**4) / n
    ess = float(b.sum() ** 2 / np.sum(b * b))
    err = math.sqrt(max(var_r, 0.0))
    return RatioEstimate(float(ratio), err, pref, float(pref * ratio), pref * err, n, ess)


# ---------------------------------------------------------------------------
# Gaussian free field control


def gff_samples(side: int, beta: float, n: int, seed: int = 0) -> np.ndarray:
    """Exact samples of the continuous analogue in height units (``sigma / 2 pi``).

    Covariance ``h^{-2} (-Delta)^{-1}`` without the zero mode.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    h = 2.0 * math.pi / math.sqrt(beta)
    p = 2 * np.pi * np.fft.fftfreq(side)
    lam = 4 * np.sin(p[:, None] / 2) ** 2 + 4 * np.sin(p[None, :] / 2) ** 2
    amp = np.zeros_like(lam)
    amp[lam > 0] = 1.0 / np.sqrt(lam[lam > 0])
    amp /= h
    out = np.empty((n, side, side))
    for i in range(n):
        w = rng.standard_normal((side, side))
        out[i] = np.fft.ifft2(np.fft.fft2(w) * amp).real
    return out


def measure_float(heights: np.ndarray, ys, h: float, etas=()) -> tuple[np.ndarray, np.ndarray]:
    """Translation/rotation averaged variance and cosine for real-valued heights."""
    ys = np.asarray(ys).reshape(-1, 2)
    var = np.empty(len(ys))
    cos = np.empty((len(etas), len(ys)))
    for i, (y1, y2) in enumerate(ys):
        d1 = heights - np.roll(heights, (-y1, -y2), axis=(0, 1))
        d2 = heights - np.roll(heights, (y2, -y1), axis=(0, 1))
        var[i] = 4 * math.pi**2 * 0.5 * (np.mean(d1**2) + np.mean(d2**2))
        for k, e in enumerate(etas):
            cos[k, i] = 0.5 * (np.mean(np.cos(e * h * d1)) + np.mean(np.cos(e * h * d2)))
    return var, cos


def gff_control(side: int, beta: float, y_list, n_samples: int = 400, seed: int = 0) -> VarianceFit:
    """Variance/stiffness pipeline on exact continuous samples (expects ``s_hat = 0``)."""
    h = 2.0 * math.pi / math.sqrt(beta)
    samples = gff_samples(side, beta, n_samples, seed)
    vals = np.array([measure_float(s, y_list, h)[0] for s in samples])
    r = np.linalg.norm(np.asarray(y_list, dtype=float), axis=1)
    err = vals.std(axis=0, ddof=1) / math.sqrt(n_samples)
    return estimate_variance_and_stiffness(r, vals.mean(axis=0), err, beta, side)


# ---------------------------------------------------------------------------
# decomposition of the log moment generating function


@dataclass
class MgfDecomposition:
    gaussian: np.ndarray
    residual: np.ndarray
    h1_sum: float
    h2: np.ndarray
    h2_err: np.ndarray
    alpha_hat: float
    alpha_err: float
    declined: bool


def mgf_decompose(y_list, log_mgf, log_mgf_err, z: float, side: int, s_hat: float, gamma: float,
                  f1: np.ndarray | None = None, f2: np.ndarray | None = None, n_tail: int = 2) -> MgfDecomposition:
    """Split ``log MGF(z, y)`` into Gaussian, one-point and coalescing parts.

    The Gaussian part is ``z^2 (f, frakC f) / 2`` with ``f = f1 + T_y f2``;
    the residual at the ``n_tail`` largest ``|y|`` estimates the
    ``y``-independent sum of one-point terms and the rest is the ``h2``
    profile, fitted by ``A |y|^{-alpha}``.
    """
    from .spectral import covariance_qform, frakc_kernel

    ys = np.asarray(y_list, dtype=int).reshape(-1, 2)
    if len(ys) < 5:
        raise FitError("need at least 5 displacements")
    lm = np.asarray(log_mgf, dtype=float)
    le = np.asarray(log_mgf_err, dtype=float)
    f1 = default_dipole(side) if f1 is None else f1
    f2 = default_dipole(side) if f2 is None else f2
    K = frakc_kernel(side, s_hat, gamma)
    gauss = np.array([0.5 * z * z * covariance_qform(K, f1 + np.roll(f2, tuple(y), axis=(0, 1))) for y in ys])
    res = lm - gauss
    r = np.linalg.norm(ys, axis=1)
    order = np.argsort(r)
    tail = order[-n_tail:]
    w = 1.0 / le[tail] ** 2
    h1 = float(np.sum(w * res[tail]) / np.sum(w))
    h1_err = float(1.0 / math.sqrt(np.sum(w)))
    h2 = res - h1
    h2_err = np.sqrt(le**2 + h1_err**2)
    head = order[:-n_tail]
    sig = np.abs(h2[head]) > 2 * h2_err[head]
    declined = sig.sum() < 2
    alpha, alpha_err = math.nan, math.nan
    if not declined:
        x = np.log(r[head][sig])
        yv = np.log(np.abs(h2[head][sig]))
        ev = h2_err[head][sig] / np.abs(h2[head][sig])
        if len(x) == 2:
            alpha = float(-(yv[1] - yv[0]) / (x[1] - x[0]))
            alpha_err = float(math.hypot(ev[0], ev[1]) / abs(x[1] - x[0]))
        else:
            coef, cov, _ = _wls(x, yv, ev)
            alpha, alpha_err = float(-coef[0]), float(math.sqrt(cov[0, 0]))
    return MgfDecomposition(gauss, res, h1, h2, h2_err, alpha, alpha_err, bool(declined))
