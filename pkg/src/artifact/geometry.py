"""Hierarchical blocks, polymers and the small-set calculus.

A scale-``j`` block is an ``L^j x L^j`` square; the origin block is
``[-ell_j, L^j - ell_j - 1]^2`` and the others are its ``L^j Z^2``
translates.  Blocks are labelled by integer indices ``b``: block ``b`` covers
``b L^j - ell_j <= x < (b + 1) L^j - ell_j`` along each axis, so the block of
a site ``x`` is ``floor((x + ell_j) / L^j)``.  Because ``ell_{j+1} - ell_j``
is a multiple of ``L^j`` every ``(j+1)``-block is a union of ``L^2``
``j``-blocks.

Polymers live either on the torus of side ``L^N`` (block indices taken
modulo ``L^{N-j}``) or on the plane ``Z^2`` (``N=None``).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable

import numpy as np

from .errors import DomainError, ResourceError
from .lattice import Torus, block_offset, grad_apply, multi_indices, scaled_norm

log = logging.getLogger(__name__)

KING = tuple((a, b) for a in (-1, 0, 1) for b in (-1, 0, 1) if (a, b) != (0, 0))
SMALL_MAX = 4


def _parent_shift(L: int) -> int:
    # (ell_{j+1} - ell_j) / L^j, independent of j
    return L // 2 if L % 2 == 0 else (L - 1) // 2


@dataclass(frozen=True, order=True)
class Block:
    """A scale-``j`` block.

    Attributes
    ----------
    L, j : int
        Block factor and scale.
    index : tuple of int
        Block index ``(b1, b2)``.
    """

    L: int
    j: int
    index: tuple

    @property
    def side(self) -> int:
        return self.L**self.j

    @property
    def anchor(self) -> tuple[int, int]:
        """Lower-left corner in window coordinates."""
        ell = block_offset(self.L, self.j)
        return (self.index[0] * self.side - ell, self.index[1] * self.side - ell)

    def contains(self, x) -> bool:
        a = self.anchor
        return all(a[k] <= x[k] < a[k] + self.side for k in range(2))

    def sites(self) -> np.ndarray:
        """``(L^{2j}, 2)`` array of window coordinates."""
        a1, a2 = self.anchor
        r = np.arange(self.side)
        g1, g2 = np.meshgrid(a1 + r, a2 + r, indexing="ij")
        return np.stack([g1.ravel(), g2.ravel()], axis=1)


def block_index_of(x, L: int, j: int) -> np.ndarray:
    """Index of the scale-``j`` block containing site(s) ``x`` (plane labels)."""
    x = np.asarray(x)
    return np.floor_divide(x + block_offset(L, j), L**j)


@dataclass(frozen=True)
class Polymer:
    """Union of scale-``j`` blocks.

    Parameters
    ----------
    L, j : int
        Block factor and scale.
    blocks : frozenset of tuple
        Block indices.  On a torus they are reduced to the canonical range.
    N : int or None
        Torus exponent; ``None`` for the infinite plane.
    """

    L: int
    j: int
    blocks: frozenset = field(default_factory=frozenset)
    N: int | None = None

    def __post_init__(self):
        if self.L < 2 or self.j < 0:
            raise DomainError("need L >= 2 and j >= 0")
        if self.N is not None and self.j > self.N:
            raise DomainError(f"scale j={self.j} exceeds N={self.N}")
        canon = frozenset(self._canon(b) for b in self.blocks)
        object.__setattr__(self, "blocks", canon)

    # -- block index arithmetic ------------------------------------------------
    @property
    def n_blocks(self) -> int | None:
        """Blocks per axis on the torus, ``None`` on the plane."""
        return None if self.N is None else self.L ** (self.N - self.j)

    @property
    def _lo(self) -> int:
        # smallest canonical index: the blocks inside the window
        return -(block_offset(self.L, self.N) - block_offset(self.L, self.j)) // self.L**self.j

    def _canon(self, b) -> tuple:
        b = (int(b[0]), int(b[1]))
        n = self.n_blocks
        if n is None:
            return b
        lo = self._lo
        return (lo + (b[0] - lo) % n, lo + (b[1] - lo) % n)

    def _delta(self, a, b) -> tuple[int, int]:
        d = [abs(a[0] - b[0]), abs(a[1] - b[1])]
        n = self.n_blocks
        if n is not None:
            d = [min(v % n, n - v % n) for v in d]
        return d[0], d[1]

    def block_dist(self, a, b) -> int:
        """Sup distance between block indices (with wrap on the torus)."""
        return max(self._delta(a, b))

    def _new(self, blocks: Iterable, j: int | None = None) -> "Polymer":
        return Polymer(self.L, self.j if j is None else j, frozenset(blocks), self.N)

    # -- basic queries -----------------------------------------------------------
    @property
    def size(self) -> int:
        """``|X|_j``, the number of blocks."""
        return len(self.blocks)

    def __len__(self) -> int:
        return len(self.blocks)

    def __contains__(self, b) -> bool:
        return self._canon(b) in self.blocks

    def __or__(self, other: "Polymer") -> "Polymer":
        self._check_compatible(other)
        return self._new(self.blocks | other.blocks)

    def __and__(self, other: "Polymer") -> "Polymer":
        self._check_compatible(other)
        return self._new(self.blocks & other.blocks)

    def __le__(self, other: "Polymer") -> bool:
        self._check_compatible(other)
        return self.blocks <= other.blocks

    def _check_compatible(self, other):
        if (self.L, self.j, self.N) != (other.L, other.j, other.N):
            raise DomainError("polymers live on different scales or lattices")

    def block_list(self) -> list[Block]:
        return [Block(self.L, self.j, b) for b in sorted(self.blocks)]

    def site_count(self) -> int:
        return self.size * self.L ** (2 * self.j)

    def mask(self, torus: Torus | None = None) -> np.ndarray:
        """Boolean site mask on the torus (FFT storage ordering)."""
        if self.N is None and torus is None:
            raise DomainError("a plane polymer needs an explicit torus for a mask")
        torus = torus or Torus(self.L, self.N)
        x1, x2 = torus.coords()
        b1 = np.floor_divide(x1 + block_offset(self.L, self.j), self.L**self.j)
        b2 = np.floor_divide(x2 + block_offset(self.L, self.j), self.L**self.j)
        out = np.zeros(torus.shape, dtype=bool)
        for b in self.blocks:
            out |= (b1 == b[0]) & (b2 == b[1])
        return out

    # -- connectivity --------------------------------------------------------------
    def touches(self, a, b) -> bool:
        """Blocks at sup distance at most one (diagonal contact connects)."""
        return self.block_dist(a, b) <= 1

    def components(self) -> list["Polymer"]:
        """Connected components, ordered by their smallest block index."""
        left = set(self.blocks)
        out = []
        while left:
            seed = min(left)
            comp = {seed}
            stack = [seed]
            left.discard(seed)
            while stack:
                a = stack.pop()
                for d in KING:
                    b = self._canon((a[0] + d[0], a[1] + d[1]))
                    if b in left:
                        left.discard(b)
                        comp.add(b)
                        stack.append(b)
            out.append(self._new(comp))
        out.sort(key=lambda p: min(p.blocks))
        return out

    def is_connected(self) -> bool:
        return self.size > 0 and len(self.components()) == 1

    def is_small(self) -> bool:
        return 0 < self.size <= SMALL_MAX and self.is_connected()

    # -- small-set neighbourhood and closure ----------------------------------------
    def star(self) -> "Polymer":
        """``X*``: union of all small polymers that intersect ``X``.

        Built from the cached list of small shapes through the origin, so the
        result is an exhaustive union over small sets meeting ``X``.
        """
        out = set()
        for b in self.blocks:
            for shape in small_shapes_through_origin():
                for d in shape:
                    out.add(self._canon((b[0] + d[0], b[1] + d[1])))
        return self._new(out)

    def closure(self) -> "Polymer":
        """``X-bar``: smallest scale-``(j+1)`` polymer containing ``X``."""
        if self.N is not None and self.j >= self.N:
            raise DomainError("no coarser scale on this torus")
        m = _parent_shift(self.L)
        parents = frozenset(((b[0] + m) // self.L, (b[1] + m) // self.L) for b in self.blocks)
        return Polymer(self.L, self.j + 1, parents, self.N)

    def refine(self) -> "Polymer":
        """The same site set viewed as a scale-``(j-1)`` polymer."""
        if self.j == 0:
            raise DomainError("scale-0 blocks cannot be refined")
        m = _parent_shift(self.L)
        kids = set()
        for p in self.blocks:
            for a in range(self.L):
                for c in range(self.L):
                    kids.add((p[0] * self.L - m + a, p[1] * self.L - m + c))
        return Polymer(self.L, self.j - 1, frozenset(kids), self.N)


@lru_cache(maxsize=None)
def small_shapes_through_origin(max_size: int = SMALL_MAX) -> tuple:
    """All king-connected shapes of at most ``max_size`` cells containing ``(0, 0)``.

    Exhaustive growth enumeration; each shape is a frozenset of offsets.
    """
    shapes = {frozenset([(0, 0)])}
    frontier = set(shapes)
    for _ in range(max_size - 1):
        nxt = set()
        for s in frontier:
            for c in s:
                for d in KING:
                    n = (c[0] + d[0], c[1] + d[1])
                    if n not in s:
                        nxt.add(s | {n})
        shapes |= nxt
        frontier = nxt
    return tuple(sorted(shapes, key=lambda s: (len(s), sorted(s))))


def small_set_ops(X: Polymer) -> dict:
    """``is_small``, ``X*``, ``X-bar`` and ``|X|_j`` in one call."""
    empty = X.size == 0
    closure = Polymer(X.L, X.j + 1, frozenset(), X.N) if empty else X.closure()
    return dict(is_small=X.is_small(), star=X.star(), closure=closure, size=X.size)


def polymer_components(X: Polymer) -> list[Polymer]:
    return X.components()


def block_partition(j: int, L: int, N: int) -> list[Block]:
    """All scale-``j`` blocks of the torus of side ``L^N``, sorted by anchor."""
    if not (0 <= j <= N):
        raise DomainError(f"need 0 <= j <= N, got j={j}, N={N}")
    P = Polymer(L, j, frozenset(), N)
    lo, n = P._lo, P.n_blocks
    return [Block(L, j, (a, b)) for a in range(lo, lo + n) for b in range(lo, lo + n)]


def origin_block_mask(torus: Torus, j: int) -> np.ndarray:
    """Site mask of the scale-``j`` block containing the origin."""
    if j >= torus.N:
        return np.ones(torus.shape, dtype=bool)
    return Polymer(torus.L, j, frozenset([(0, 0)]), torus.N).mask(torus)


def origin_block_distance(L: int, j: int, N: int | None = None) -> float:
    """``dist_inf(0, complement of the origin block)``; infinite if the block is the torus."""
    if N is not None and j >= N:
        return math.inf
    ell = block_offset(L, j)
    return float(min(ell + 1, L**j - ell))


# ---------------------------------------------------------------------------
# coalescence scale


@dataclass
class Coalescence:
    """Coalescence data for a displacement ``y``.

    Attributes
    ----------
    j0y : int or float
        First scale with ``(B_0^j)*** `` meeting ``Q_y^j``; ``inf`` if a source
        vanishes or no scale qualifies.
    scales : list of dict
        Per scale ``j <= j0y``: ``B`` (indices of ``B_0 .. B_4``), ``P``, ``Q``.
    """

    y: tuple
    L: int
    j0y: float
    scales: list


def _q_blocks(y, L: int, j: int):
    ell = block_offset(L, j)
    b1 = tuple(int(v) for v in block_index_of((y[0] - ell, y[1] - ell), L, j))
    return [b1, (b1[0] + 1, b1[1]), (b1[0], b1[1] + 1), (b1[0] + 1, b1[1] + 1)]


def coalescence(y, L: int, f1_support=None, f2_support=None, N: int | None = None,
                j_max: int = 40) -> Coalescence:
    """Coalescence scale ``j0y`` and the block sets ``B_k^j``, ``P_y^j``, ``Q_y^j``.

    Parameters
    ----------
    y : pair of int
        Displacement of the second source.
    L : int
        Block factor.
    f1_support, f2_support : array_like of bool, optional
        Source supports; an explicitly empty support gives ``j0y = inf``.
    N : int, optional
        Torus exponent; ``None`` works on the plane.
    j_max : int
        Largest scale inspected on the plane.
    """
    y = (int(y[0]), int(y[1]))
    for s in (f1_support, f2_support):
        if s is not None and not np.any(s):
            return Coalescence(y, L, math.inf, [])
    top = j_max if N is None else N
    scales = []
    for j in range(top + 1):
        origin = Polymer(L, j, frozenset([(0, 0)]), N)
        q = _q_blocks(y, L, j)
        Q = origin._new(q)
        P = Q | origin
        star3 = origin.star().star().star()
        scales.append(dict(j=j, B=[(0, 0)] + [Q._canon(b) for b in q], P=P, Q=Q))
        if (star3 & Q).size > 0:
            return Coalescence(y, L, j, scales)
    return Coalescence(y, L, math.inf, scales)


# ---------------------------------------------------------------------------
# reblocking


def _cell_graph(X: Polymer):
    """Scale-``j`` cells of a ``(j+1)``-polymer with their neighbour bitmasks."""
    Y = X.refine()
    cells = sorted(Y.blocks)
    pos = {c: i for i, c in enumerate(cells)}
    nbr = []
    for c in cells:
        m = 0
        for d in KING:
            k = pos.get(Y._canon((c[0] + d[0], c[1] + d[1])))
            if k is not None and k != pos[c]:
                m |= 1 << k
        nbr.append(m)
    parent = []
    m = _parent_shift(X.L)
    for c in cells:
        parent.append(X._canon(((c[0] + m) // X.L, (c[1] + m) // X.L)))
    return Y, cells, nbr, parent


def _connected_masks(masks: np.ndarray, nbr: list) -> np.ndarray:
    """Vectorised flood fill: which bitmasks are connected (empty counts as not)."""
    masks = masks.astype(np.int64)
    reach = masks & -masks
    while True:
        grown = reach.copy()
        for i, nb in enumerate(nbr):
            grown |= np.where((reach >> i) & 1, nb, 0)
        grown &= masks
        if np.array_equal(grown, reach):
            break
        reach = grown
    return (reach == masks) & (masks != 0)


def _popcount(a: np.ndarray) -> np.ndarray:
    a = a.astype(np.uint64)
    out = np.zeros(a.shape, dtype=np.int64)
    while np.any(a):
        out += (a & np.uint64(1)).astype(np.int64)
        a = a >> np.uint64(1)
    return out


def _closure_masks(parent: list, X: Polymer) -> list[int]:
    return [sum(1 << i for i, p in enumerate(parent) if p == b) for b in sorted(X.blocks)]


def _enumerate_masks(X: Polymer, filt: str, max_cells: int):
    if filt not in ("all", "connected", "large"):
        raise DomainError(f"unknown filter {filt!r}")
    if X.j < 1:
        raise DomainError("reblocking needs a polymer of scale >= 1")
    Y, cells, nbr, parent = _cell_graph(X)
    n = len(cells)
    if n > max_cells:
        raise ResourceError(f"{n} cells exceed the enumeration budget of {max_cells}",
                            count=2**n)
    masks = np.arange(1, 2**n, dtype=np.int64)
    for bm in _closure_masks(parent, X):
        masks = masks[(masks & bm) != 0]
    if filt != "all":
        masks = masks[_connected_masks(masks, nbr)]
    if filt == "large":
        masks = masks[_popcount(masks) > SMALL_MAX]
    return Y, cells, masks


def reblock_enumerate(X: Polymer, filt: str = "connected", max_cells: int = 20) -> list[Polymer]:
    """All scale-``j`` polymers ``Y`` with ``closure(Y) = X``.

    Parameters
    ----------
    X : Polymer
        Scale-``(j+1)`` polymer.
    filt : {"all", "connected", "large"}
        ``large`` keeps connected ``Y`` that are not small.
    max_cells : int
        Budget on ``|X|_j``; exceeding it raises :class:`ResourceError`.

    Returns
    -------
    list of Polymer
        Deterministic order (by bitmask over lexicographically sorted cells).
    """
    Y, cells, masks = _enumerate_masks(X, filt, max_cells)
    out = []
    for m in masks.tolist():
        out.append(Y._new(c for i, c in enumerate(cells) if (m >> i) & 1))
    return out


def _component_signature(mask: int, nbr: list, iface: list) -> tuple | None:
    """Partition of the occupied interface cells by component, or ``None`` if
    some component misses the interface."""
    labels = {}
    left = mask
    comp = 0
    while left:
        seed = left & -left
        reach = seed
        while True:
            grown = reach
            r = reach
            while r:
                low = r & -r
                grown |= nbr[low.bit_length() - 1]
                r ^= low
            grown &= mask
            if grown == reach:
                break
            reach = grown
        hit = [i for i in iface if (reach >> i) & 1]
        if not hit:
            return None
        for i in hit:
            labels[i] = comp
        comp += 1
        left &= ~reach
    return tuple(sorted(labels.items()))


def _half_signatures(nbr: list, iface: list, ncells: int):
    """Histogram of sizes per interface signature over nonempty subsets."""
    table: dict = {}
    for m in range(1, 2**ncells):
        sig = _component_signature(m, nbr, iface)
        if sig is None:
            continue
        poly = table.setdefault(sig, np.zeros(ncells + 1, dtype=np.int64))
        poly[bin(m).count("1")] += 1
    return table


def reblock_size_counts(X: Polymer, filt: str = "large", max_cells: int = 20,
                        max_block_cells: int = 20) -> np.ndarray:
    """Number of ``Y`` with ``closure(Y) = X`` by ``|Y|_j``.

    Uses explicit enumeration when ``|X|_j <= max_cells``; a two-block ``X``
    beyond that is handled by splitting along the interface between the two
    blocks and combining component signatures of the halves.

    Returns
    -------
    ndarray of int
        ``counts[k]`` for ``k = 0 .. |X|_j``.
    """
    if filt not in ("all", "connected", "large"):
        raise DomainError(f"unknown filter {filt!r}")
    ncell = X.size * X.L**2
    if ncell <= max_cells:
        _, _, masks = _enumerate_masks(X, filt, max_cells)
        return np.bincount(_popcount(masks), minlength=ncell + 1)
    if X.size != 2 or X.L**2 > max_block_cells:
        raise ResourceError(f"|X|_j = {ncell} cells beyond exhaustive reach", count=2**ncell)
    if filt == "all":
        one = np.array([math.comb(X.L**2, k) for k in range(X.L**2 + 1)], dtype=np.int64)
        one[0] = 0
        return np.convolve(one, one)
    Y, cells, nbr, parent = _cell_graph(X)
    ba, bb = sorted(X.blocks)
    halves = []
    for b in (ba, bb):
        idx = [i for i, p in enumerate(parent) if p == b]
        halves.append(idx)
    # local graphs of each half and the cross edges
    tables = []
    local_maps = []
    for h, idx in enumerate(halves):
        other = set(halves[1 - h])
        loc = {g: k for k, g in enumerate(idx)}
        lnbr = [sum(1 << loc[t] for t in range(len(cells)) if (nbr[g] >> t) & 1 and t in loc)
                for g in idx]
        iface = [loc[g] for g in idx if any((nbr[g] >> t) & 1 for t in other)]
        tables.append(_half_signatures(lnbr, iface, len(idx)))
        local_maps.append(idx)
    cross = []
    for ka, ga in enumerate(local_maps[0]):
        for kb, gb in enumerate(local_maps[1]):
            if (nbr[ga] >> gb) & 1:
                cross.append((ka, kb))
    total = np.zeros(ncell + 1, dtype=np.int64)
    for sa, pa in tables[0].items():
        la = dict(sa)
        na = len(set(la.values()))
        for sb, pb in tables[1].items():
            lb = dict(sb)
            nb = len(set(lb.values()))
            parent_uf = list(range(na + nb))

            def find(u):
                while parent_uf[u] != u:
                    parent_uf[u] = parent_uf[parent_uf[u]]
                    u = parent_uf[u]
                return u

            for ka, kb in cross:
                if ka in la and kb in lb:
                    parent_uf[find(la[ka])] = find(na + lb[kb])
            if len({find(u) for u in range(na + nb)}) == 1:
                total += np.convolve(pa, pb)[: ncell + 1]
    if filt == "large":
        total[: SMALL_MAX + 1] = 0
    return total


def reblock_weighted_sum(X: Polymer, A: float, filt: str = "large", **kw) -> float:
    """``sum_{Y : closure(Y) = X} A^{-|Y|_j}`` over the filtered ``Y``."""
    counts = reblock_size_counts(X, filt, **kw)
    k = np.arange(len(counts))
    return float(np.sum(counts * float(A) ** (-k.astype(float))))


@dataclass
class ReblockFit:
    """Fitted constants of ``S_X(A) <= (C L^2 A^{-(1+eta)})^{|X|_{j+1}}``."""

    C: float
    eta: float
    L: int
    A_grid: tuple
    slopes: dict
    sums: dict

    def bound(self, size: int, A: float) -> float:
        return (self.C * self.L**2 * A ** (-(1.0 + self.eta))) ** size


def reblock_shapes(L: int) -> dict:
    """Connected one- and two-block scale-1 polymers used for the bound."""
    P = lambda bs: Polymer(L, 1, frozenset(bs))  # noqa: E731
    return {"single": P([(0, 0)]), "pair": P([(0, 0), (1, 0)]), "diagonal": P([(0, 0), (1, 1)])}


def fit_reblock_constants(L: int = 4, A_grid=(16, 32, 128, 256), shapes: dict | None = None) -> ReblockFit:
    """Fit ``eta`` and ``C`` for the large-set reblocking bound.

    ``1 + eta`` is the smallest per-block decay exponent, taken from the
    log-log slope of ``S_X(A)^{1/|X|}`` between the two largest ``A``; ``C``
    is then the smallest constant making the bound hold on ``A_grid``.
    """
    shapes = shapes or reblock_shapes(L)
    counts = {k: reblock_size_counts(X) for k, X in shapes.items()}
    sums, slopes = {}, {}
    la = np.log(np.asarray(A_grid, dtype=float))
    for k, X in shapes.items():
        c = counts[k]
        kk = np.arange(len(c))
        S = np.array([np.sum(c * float(A) ** (-kk.astype(float))) for A in A_grid])
        sums[k] = S
        per = np.log(S) / X.size
        slopes[k] = float(-(per[-1] - per[-2]) / (la[-1] - la[-2]))
    eta = min(slopes.values()) - 1.0
    C = 0.0
    for k, X in shapes.items():
        for A, S in zip(A_grid, sums[k]):
            C = max(C, S ** (1.0 / X.size) * A ** (1.0 + eta) / L**2)
    return ReblockFit(C, eta, L, tuple(A_grid), slopes, {k: v.tolist() for k, v in sums.items()})


# ---------------------------------------------------------------------------
# regulator


@dataclass(frozen=True)
class RegulatorParams:
    """Regulator constants; ``kappa`` defaults to ``c_kappa / log L``."""

    c_kappa: float = 0.01
    c2: float = 0.1
    c4: float = 1.0
    cw: float = 0.01
    kappa: float | None = None

    def kappa_for(self, L: int) -> float:
        return self.kappa if self.kappa is not None else self.c_kappa / math.log(L)

    def __post_init__(self):
        for name in ("c_kappa", "c2", "c4", "cw"):
            if getattr(self, name) <= 0:
                raise DomainError(f"regulator parameter {name} must be positive")


@dataclass
class RegulatorValue:
    G: float
    strongG: float
    log_G: float
    log_strongG: float
    bulk: float
    boundary: float
    W2: float
    w2: float


def _sup_derivative(phi: np.ndarray, n: int, j: int, L: int) -> np.ndarray:
    out = None
    for mu in multi_indices(n):
        d = np.abs(grad_apply(phi, mu, j, L))
        out = d if out is None else np.maximum(out, d)
    return out


def regulator_eval(X: Polymer, phi: np.ndarray, params: RegulatorParams | None = None,
                   torus: Torus | None = None) -> RegulatorValue:
    """Regulator ``G_j(X, phi)`` and strong regulator ``exp(c_w kappa w_j(X, phi)^2)``.

    ``log G = kappa (|grad_j phi|^2_{L2(X)} + c2 |grad_j phi|^2_{L2(dX)}
    + c4 sum_{B in X} sup_{B*} |grad_j^2 phi|^2)`` with ``dX`` the inner vertex
    boundary, and ``w_j^2 = sum_{B in X} max_{n=1,2} sup_{B*} |grad_j^n phi|^2``.
    """
    params = params or RegulatorParams()
    if X.N is None and torus is None:
        raise DomainError("regulator needs a torus")
    torus = torus or Torus(X.L, X.N)
    L, j = X.L, X.j
    kappa = params.kappa_for(L)
    if X.size == 0:
        return RegulatorValue(1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    mask = X.mask(torus)
    bulk = scaled_norm(phi, mask, j, "L2_bulk_1", L) ** 2
    boundary = scaled_norm(phi, mask, j, "L2_boundary_1", L) ** 2
    d1 = _sup_derivative(phi, 1, j, L)
    d2 = _sup_derivative(phi, 2, j, L)
    W2 = 0.0
    w2 = 0.0
    for b in X.blocks:
        star = X._new([b]).star().mask(torus)
        s1 = float(d1[star].max())
        s2 = float(d2[star].max())
        W2 += s2**2
        w2 += max(s1, s2) ** 2
    log_G = kappa * (bulk + params.c2 * boundary + params.c4 * W2)
    log_s = params.cw * kappa * w2
    return RegulatorValue(math.exp(log_G), math.exp(log_s), log_G, log_s, bulk, boundary, W2, w2)
