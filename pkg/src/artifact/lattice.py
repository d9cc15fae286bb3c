"""Periodic square lattice, discrete differential operators and scaled norms.

Fields are dense ``(side, side)`` float arrays.  Storage uses FFT ordering:
the site with window coordinate ``x`` lives at index ``x mod side``, so the
origin is always index ``(0, 0)`` and translation-invariant kernels can be
handed to ``numpy.fft`` without shifting.  :meth:`Torus.coords` recovers the
window coordinates (the box ``[-ell_N, side - ell_N - 1]^2``).
"""
from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError

E1 = (1, 0)
E2 = (0, 1)
DIRECTIONS = ((1, 0), (-1, 0), (0, 1), (0, -1))


def block_offset(L: int, j: int) -> int:
    """Offset ``ell_j(L)`` placing the origin inside the scale-``j`` block.

    ``(L^j - 1)/2`` for odd ``L`` and ``L (L^j - 1) / (2 (L - 1))`` for even ``L``.
    """
    if j < 0:
        raise DomainError("scale must be non-negative")
    Lj = L**j
    if L % 2:
        return (Lj - 1) // 2
    return L * (Lj - 1) // (2 * (L - 1))


@dataclass(frozen=True)
class Torus:
    """Discrete torus of side ``L**N`` with a distinguished origin.

    Parameters
    ----------
    L : int
        Block factor, at least 2.
    N : int
        Number of scales, at least 1.
    """

    L: int
    N: int

    def __post_init__(self):
        if self.L < 2 or self.N < 1:
            raise DomainError(f"need L >= 2 and N >= 1, got L={self.L}, N={self.N}")

    @classmethod
    def from_side(cls, side: int) -> "Torus":
        """Single-scale torus with the given side length."""
        return cls(int(side), 1)

    @property
    def side(self) -> int:
        return self.L**self.N

    @property
    def shape(self) -> tuple[int, int]:
        return (self.side, self.side)

    @property
    def n_sites(self) -> int:
        return self.side**2

    @property
    def ell(self) -> int:
        return block_offset(self.L, self.N)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def wrap(self, x) -> np.ndarray:
        """Window coordinate(s) of arbitrary integer coordinates."""
        x = np.asarray(x)
        return np.mod(x + self.ell, self.side) - self.ell

    def index(self, x) -> tuple:
        """Storage index of a site given in window (or any) coordinates."""
        x = np.asarray(x)
        return tuple(np.mod(x, self.side).T)

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Window coordinates ``(x1, x2)`` of every stored site."""
        c = self.wrap(np.arange(self.side))
        return np.meshgrid(c, c, indexing="ij")

    def delta(self, x=(0, 0)) -> np.ndarray:
        f = self.zeros()
        f[self.index(x)] = 1.0
        return f

    def dist(self, x, y, p=np.inf):
        """Torus distance, per-axis minimal wrap, in the ``l^p`` metric."""
        d = np.abs(np.asarray(x) - np.asarray(y)) % self.side
        d = np.minimum(d, self.side - d)
        return np.linalg.norm(d, ord=p, axis=-1)

    def sup_dist_from_origin(self) -> np.ndarray:
        """``dist_inf(0, x)`` for every stored site."""
        i = np.arange(self.side)
        d = np.minimum(i, self.side - i)
        return np.maximum.outer(d, d)


def laplacian_apply(f: np.ndarray, m2: float = 0.0) -> np.ndarray:
    """Apply ``-Delta + m2`` with periodic neighbours.

    ``-Delta f(x) = 4 f(x) - sum_{y ~ x} f(y)``; on a side-2 torus the two
    neighbours along an axis coincide and are counted twice.
    """
    f = np.asarray(f, dtype=float)
    out = (4.0 + m2) * f
    for ax in (0, 1):
        out -= np.roll(f, 1, axis=ax) + np.roll(f, -1, axis=ax)
    return out


def _shift(f: np.ndarray, mu) -> np.ndarray:
    # value at x + mu
    return np.roll(f, (-mu[0], -mu[1]), axis=(0, 1))


def grad_apply(f: np.ndarray, mu: Sequence = (), j: int = 0, L: int | None = None) -> np.ndarray:
    """Finite difference ``nabla^mu f`` with optional scale weight.

    ``nabla^e f(x) = f(x + e) - f(x)`` for a unit vector ``e`` (``-e`` allowed).
    Entries of ``mu`` are applied first to last.  With ``j > 0`` each
    derivative carries a factor ``L**j``, so order ``n`` carries ``L**(n j)``.
    """
    g = np.asarray(f, dtype=float)
    for e in mu:
        e = tuple(int(v) for v in e)
        if e not in DIRECTIONS:
            raise DomainError(f"not a unit direction: {e}")
        g = _shift(g, e) - g
    if j:
        if L is None:
            raise DomainError("scaled derivative needs L")
        g = g * float(L) ** (len(mu) * j)
    return g


def multi_indices(n: int):
    """All ``4**n`` ordered multi-indices of order ``n``."""
    return list(itertools.product(DIRECTIONS, repeat=n))


def inner_boundary(X: np.ndarray) -> np.ndarray:
    """Sites of ``X`` with at least one nearest neighbour outside ``X``."""
    X = np.asarray(X, dtype=bool)
    out = np.zeros_like(X)
    for mu in DIRECTIONS:
        out |= ~_shift(X, mu)
    return X & out


_KIND = re.compile(r"^(sup|L2_bulk|L2_boundary)_([0-9]+)$")


def scaled_norm(f: np.ndarray, X: np.ndarray, j: int, kind: str, L: int) -> float:
    """Scale-``j`` norms of a field on a site set.

    Parameters
    ----------
    f : ndarray
        Field on the torus.
    X : ndarray of bool
        Site mask, must be non-empty.
    j : int
        Scale; each derivative is weighted by ``L**j``.
    kind : str
        ``sup_n``: ``max_{x in X} max_mu |nabla_j^mu f(x)|`` over the ``4**n``
        multi-indices of order ``n``.
        ``L2_bulk_n``: square root of ``L^{-2j} sum_{x in X} sum_mu 2^{-n} |.|^2``.
        ``L2_boundary_n``: as above with ``L^{-j}`` over the inner boundary of ``X``.
        ``C2``: ``max(sup_0, sup_1, sup_2)``.
    L : int
        Block factor.

    Returns
    -------
    float
    """
    X = np.asarray(X, dtype=bool)
    if not X.any():
        raise DomainError("empty site set")
    if kind == "C2":
        return max(scaled_norm(f, X, j, f"sup_{n}", L) for n in range(3))
    m = _KIND.match(kind)
    if m is None:
        raise DomainError(f"unknown norm kind {kind!r}")
    name, n = m.group(1), int(m.group(2))
    if name == "L2_boundary":
        X = inner_boundary(X)
        if not X.any():
            return 0.0
    derivs = [grad_apply(f, mu, j, L)[X] for mu in multi_indices(n)]
    if name == "sup":
        return float(max(np.abs(d).max() for d in derivs))
    vol = float(L) ** (-2 * j if name == "L2_bulk" else -j)
    total = sum(float(np.sum(d**2)) for d in derivs)
    return float(np.sqrt(vol * 2.0**-n * total))
