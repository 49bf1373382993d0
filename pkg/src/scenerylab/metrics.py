"""Entropies, divergences and Levy-Prokhorov distances on grid measures.

All logarithms are natural.  Levy-Prokhorov distances treat each cell as an
atom at its centre and use ``|.|`` in 1-D and the max metric in 2-D.

The LP distance of two finitely supported measures is computed exactly.  By
Strassen's theorem ``d_LP(mu, eta) <= eps`` iff some coupling puts mass at
least ``1 - eps`` on pairs at distance ``<= eps``.  Writing ``f(d)`` for the
mass left unmatched by a maximum flow through the pairs at distance ``<= d``,
``f`` is a non-increasing step function that only changes at the pairwise
distances ``d_0 < d_1 < ...``, and

    d_LP = min_k max(d_k, f(d_k)).

The minimum sits where ``f(d_k) <= d_k`` first holds, so a galloping search
over the candidate distances needs ``O(log K)`` flow computations.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numba import njit
from scipy.sparse import coo_matrix, csr_matrix
from scipy.sparse.csgraph import connected_components, maximum_flow

from .measure import DyadicMeasure, SupportError, _merge, magnify

# ---------------------------------------------------------------------------
# entropy and divergence


def _cells_at(mu: DyadicMeasure, level: int | None):
    if level is None:
        return mu.index, mu.mass
    if level > mu.level:
        raise ValueError(f"level {level} exceeds measure level {mu.level}")
    return _merge(mu.index >> (mu.level - level), mu.mass)


def _xlogx_sum(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def shannon_entropy(mu: DyadicMeasure, level: int | None = None) -> float:
    """``H(mu, D_level)`` in nats."""
    _, m = _cells_at(mu, level)
    return _xlogx_sum(m)


def _aligned(mu: DyadicMeasure, eta: DyadicMeasure, level: int | None):
    if mu.dim != eta.dim:
        raise ValueError("dimension mismatch")
    lvl = min(mu.level, eta.level) if level is None else level
    ia, ma = _cells_at(mu, lvl)
    ib, mb = _cells_at(eta, lvl)
    idx = np.concatenate([ia, ib])
    tag = np.concatenate([np.zeros(len(ma)), np.ones(len(mb))])
    if idx.ndim == 1:
        keys = idx
    else:
        lo = idx.min(axis=0)
        keys = (idx[:, 0] - lo[0]) * (idx[:, 1].max() - lo[1] + 1) + (idx[:, 1] - lo[1])
    uniq, inv = np.unique(keys, return_inverse=True)
    p = np.zeros(len(uniq))
    q = np.zeros(len(uniq))
    np.add.at(p, inv[tag == 0], ma)
    np.add.at(q, inv[tag == 1], mb)
    return p, q


def kl_divergence(mu: DyadicMeasure, eta: DyadicMeasure, level: int | None = None) -> float:
    """``D_KL(mu || eta) = sum mu(I) log(mu(I) / eta(I))``; ``inf`` if ``mu`` is not << ``eta``."""
    p, q = _aligned(mu, eta, level)
    return kl_vectors(p, q)


def kl_vectors(p, q) -> float:
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    pos = p > 0
    if np.any(q[pos] <= 0):
        return float("inf")
    return float((p[pos] * np.log(p[pos] / q[pos])).sum())


def partition_distance(mu: DyadicMeasure, eta: DyadicMeasure, level: int | None = None) -> float:
    """``sum_I |mu(I) - eta(I)|`` over level-``level`` cells."""
    p, q = _aligned(mu, eta, level)
    return float(np.abs(p - q).sum())


def entropy_chain_identity_check(eta: DyadicMeasure, n: int) -> float:
    """``|H(eta, D_n) - chain sum|`` where the chain sum adds conditional entropies level by level.

    The chain side is ``H(eta, D_0) - sum_{k<n} sum eta(I_{k+1}) log(eta(I_{k+1}) / eta(I_k))``;
    the first term vanishes when the box lies inside one unit cell.
    """
    if n > eta.level:
        raise ValueError(f"n = {n} exceeds level {eta.level}")
    lhs = _xlogx_sum(_merge(eta.index >> (eta.level - n), eta.mass)[1])
    idx, m = _merge(eta.index >> eta.level, eta.mass)
    rhs = _xlogx_sum(m)
    for k in range(n):
        child_idx, child = _merge(eta.index >> (eta.level - k - 1), eta.mass)
        parent_idx, parent = _merge(child_idx >> 1, child)
        # look up each child's parent mass
        if child_idx.ndim == 1:
            pos = np.searchsorted(parent_idx, child_idx >> 1)
        else:
            lo = parent_idx.min(axis=0)
            span = parent_idx[:, 1].max() - lo[1] + 1
            pkeys = (parent_idx[:, 0] - lo[0]) * span + (parent_idx[:, 1] - lo[1])
            c = child_idx >> 1
            pos = np.searchsorted(pkeys, (c[:, 0] - lo[0]) * span + (c[:, 1] - lo[1]))
        rhs -= float((child * np.log(child / parent[pos])).sum())
    return abs(lhs - rhs)


@dataclass
class GibbsResult:
    kl: float
    l1: float
    nonnegative: bool
    bound_ok: bool

    def __iter__(self):
        return iter((self.kl, self.l1, self.nonnegative and self.bound_ok))


def gibbs_check(p, q, slack: float = 1e-12) -> GibbsResult:
    """KL divergence, l1 distance, and the two inequalities relating them.

    Checks ``D_KL(p||q) >= 0`` and ``sum |p - q| < sqrt(2 eps #I)`` with
    ``eps = D_KL + slack``.  Unpacks as ``(kl, l1, ok)``.
    """
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    if p.shape != q.shape:
        raise ValueError("vectors must have the same length")
    kl = kl_vectors(p, q)
    l1 = float(np.abs(p - q).sum())
    if not np.isfinite(kl):
        return GibbsResult(kl, l1, True, False)
    nonneg = kl >= -slack
    bound = l1 < np.sqrt(2.0 * (kl + slack) * len(p))
    return GibbsResult(kl, l1, bool(nonneg), bool(bound))


# ---------------------------------------------------------------------------
# Levy-Prokhorov distance


@njit(cache=True)
def _greedy_unmatched(pa, wa, pb, wb, reach):
    """Unmatched mass of a maximum flow on a line with edges ``|pa - pb| <= reach``.

    ``pa`` and ``pb`` are sorted integer positions.  Each source serves the
    leftmost targets still in range first, which is optimal because the
    neighbourhoods are intervals ordered by both endpoints.
    """
    rem = wb.copy()
    j = 0
    nb = len(pb)
    left = 0.0
    for i in range(len(pa)):
        x = pa[i]
        need = wa[i]
        # targets left of the window or used up never serve later sources
        while j < nb and (pb[j] < x - reach or rem[j] <= 0.0):
            j += 1
        k = j
        while need > 0.0 and k < nb and pb[k] <= x + reach:
            if rem[k] > 0.0:
                take = need if need < rem[k] else rem[k]
                need -= take
                rem[k] -= take
            k += 1
        left += need
    return left


FLOW_SCALE = 1 << 30
ROUNDOFF = 1e-12


def _flow_unmatched(wa_int, wb_int, adjacency) -> int:
    """Unmatched integer mass of a bipartite max flow; ``adjacency`` is a boolean matrix."""
    na, nb = adjacency.shape
    src, snk = na + nb, na + nb + 1
    if hasattr(adjacency, "row"):
        ai, bj = adjacency.row, adjacency.col
    else:
        ai, bj = np.nonzero(adjacency)
    rows = np.concatenate([np.full(na, src), ai, na + np.arange(nb)])
    cols = np.concatenate([np.arange(na), na + bj, np.full(nb, snk)])
    caps = np.concatenate([wa_int, np.full(len(ai), FLOW_SCALE, dtype=np.int64), wb_int]).astype(np.int32)
    g = csr_matrix((caps, (rows, cols)), shape=(na + nb + 2, na + nb + 2))
    flow = maximum_flow(g, src, snk).flow_value
    return int(wa_int.sum()) - int(flow)


def _to_int(w):
    """Integer masses summing to exactly ``FLOW_SCALE`` (largest-remainder rounding)."""
    w = np.asarray(w, float)
    scaled = w / w.sum() * FLOW_SCALE
    out = np.floor(scaled).astype(np.int64)
    short = FLOW_SCALE - int(out.sum())
    if short > 0:
        out[np.argsort(out - scaled, kind="stable")[:short]] += 1
    return out


def _unmatched_at_zero(pa, wa, pb, wb) -> float:
    """Exact unmatched mass when only coincident atoms may be paired."""
    pa = np.asarray(pa).reshape(len(wa), -1)
    pb = np.asarray(pb).reshape(len(wb), -1)
    keys, inv = np.unique(np.concatenate([pa, pb]), axis=0, return_inverse=True)
    inv = inv.ravel()
    a = np.bincount(inv[: len(wa)], weights=wa, minlength=len(keys))
    b = np.bincount(inv[len(wa):], weights=wb, minlength=len(keys))
    return float(np.clip(a - b, 0.0, None).sum())


def lp_search(candidates: np.ndarray, unmatched: Callable[[int], float]) -> float:
    """``min_k max(d_k, f(k))`` for sorted ``candidates`` and non-increasing ``f``."""
    d = np.asarray(candidates, float)
    n = len(d)
    cache: dict[int, float] = {}

    def f(k):
        if k not in cache:
            v = unmatched(k)
            # round-off leftovers of a perfect matching count as zero
            cache[k] = 0.0 if v <= ROUNDOFF else v
        return cache[k]

    if f(0) <= d[0]:
        return float(d[0])
    lo, hi = 0, 1
    while hi < n - 1 and f(hi) > d[hi]:
        lo, hi = hi, min(2 * hi, n - 1)
    # f(lo) > d[lo]; the last candidate always matches everything
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if f(mid) <= d[mid]:
            hi = mid
        else:
            lo = mid
    if f(hi) > d[hi]:
        hi = n - 1
    return float(min(d[hi], f(hi - 1)))


def lp_distance_atoms(pa, wa, pb, wb, metric: str = "line") -> float:
    """LP distance between two weighted point sets.

    ``metric="line"`` takes 1-D positions; ``"max"`` takes ``(N, 2)`` positions.
    Both weight vectors must sum to 1.
    """
    pa = np.asarray(pa, float)
    pb = np.asarray(pb, float)
    wa = np.asarray(wa, float)
    wb = np.asarray(wb, float)
    if metric == "line":
        oa, ob = np.argsort(pa, kind="stable"), np.argsort(pb, kind="stable")
        pa, wa, pb, wb = pa[oa], wa[oa], pb[ob], wb[ob]
        dist = np.abs(pa[:, None] - pb[None, :])
    else:
        dist = np.abs(pa[:, None, :] - pb[None, :, :]).max(axis=2)
    cand = np.unique(np.concatenate([[0.0], dist.ravel()]))
    if metric == "line":
        # slack so that the greedy comparisons agree with the rounded distances
        return lp_search(cand, lambda k: _greedy_unmatched(pa, wa, pb, wb, cand[k] * (1 + 1e-12) + 1e-15))
    ia, ib = _to_int(wa), _to_int(wb)

    def unmatched(k):
        if k == 0:
            return _unmatched_at_zero(pa, wa, pb, wb)
        return _flow_unmatched(ia, ib, dist <= cand[k]) / FLOW_SCALE

    return lp_search(cand, unmatched)


def lp_distance(mu: DyadicMeasure, eta: DyadicMeasure) -> float:
    """Exact Levy-Prokhorov distance with atoms at cell centres.

    Both measures must share dimension and level.  In 1-D a greedy line
    matching replaces the general max-flow; 2-D uses the max metric and
    an integer max-flow with masses scaled by ``2^30``.
    """
    if mu.dim != eta.dim:
        raise ValueError("dimension mismatch")
    if mu.level != eta.level:
        raise ValueError(f"level mismatch {mu.level} vs {eta.level}")
    h = mu.cell_width
    if mu.dim == 1:
        pa, pb = mu.index, eta.index  # already sorted
        wa, wb = mu.mass, eta.mass
        span = max(pa.max(), pb.max()) - min(pa.min(), pb.min())
        cand = np.arange(span + 1)
        return lp_search(cand * h, lambda k: _greedy_unmatched(pa, wa, pb, wb, cand[k]))
    pa, pb = mu.index, eta.index
    ia, ib = _to_int(mu.mass), _to_int(eta.mass)
    span = int((np.maximum(pa.max(axis=0), pb.max(axis=0)) - np.minimum(pa.min(axis=0), pb.min(axis=0))).max())
    cand = np.arange(span + 1)
    order = np.argsort(pb[:, 0], kind="stable")
    pb_sorted = pb[order]
    ib_sorted = ib[order]

    def unmatched(k):
        if k == 0:
            return _unmatched_at_zero(pa, mu.mass, pb, eta.mass)
        return _flow_unmatched(ia, ib_sorted, _chebyshev_within(pa, pb_sorted, cand[k])) / FLOW_SCALE

    return lp_search(cand * h, unmatched)


def _chebyshev_within(pa, pb, reach):
    """Sparse-friendly boolean adjacency ``max |pa - pb| <= reach`` (``pb`` sorted by x)."""
    lo = np.searchsorted(pb[:, 0], pa[:, 0] - reach, side="left")
    hi = np.searchsorted(pb[:, 0], pa[:, 0] + reach, side="right")
    counts = hi - lo
    rows = np.repeat(np.arange(len(pa)), counts)
    cols = lo[rows] + (np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts))
    keep = np.abs(pa[rows, 1] - pb[cols, 1]) <= reach
    return coo_matrix((np.ones(keep.sum(), bool), (rows[keep], cols[keep])), shape=(len(pa), len(pb)))


# ---------------------------------------------------------------------------
# distributions over measures


class MeasureDistribution:
    """Weighted finite list of :class:`DyadicMeasure` atoms."""

    def __init__(self, atoms: Sequence[DyadicMeasure], weights=None):
        atoms = list(atoms)
        if not atoms:
            raise ValueError("empty distribution")
        w = np.full(len(atoms), 1.0 / len(atoms)) if weights is None else np.asarray(weights, float)
        if len(w) != len(atoms) or np.any(w <= 0):
            raise ValueError("weights must be positive, one per atom")
        self.atoms = atoms
        self.weights = w / w.sum()

    def __len__(self):
        return len(self.atoms)

    def __iter__(self):
        return iter(zip(self.weights, self.atoms))

    def __repr__(self):
        return f"MeasureDistribution({len(self)} atoms)"


def _digest(mu: DyadicMeasure) -> bytes:
    return hashlib.sha1(mu.content_key()).digest()


class GroundCache:
    """Memo of frame-to-frame LP distances keyed by content digests."""

    def __init__(self):
        self._d: dict[tuple[bytes, bytes], float] = {}

    def __call__(self, a: DyadicMeasure, b: DyadicMeasure) -> float:
        ka, kb = _digest(a), _digest(b)
        if ka == kb:
            return 0.0
        key = (ka, kb) if ka < kb else (kb, ka)
        if key not in self._d:
            self._d[key] = lp_distance(a, b)
        return self._d[key]

    def __len__(self):
        return len(self._d)


def _dedupe(P: MeasureDistribution):
    keys, atoms, weights = {}, [], []
    for w, a in P:
        k = _digest(a)
        if k in keys:
            weights[keys[k]] += w
        else:
            keys[k] = len(atoms)
            atoms.append(a)
            weights.append(w)
    return atoms, np.array(weights)


def meta_lp_distance(P: MeasureDistribution, Q: MeasureDistribution, ground: Callable | None = None) -> float:
    """LP distance between distributions of measures, with ``lp_distance`` as ground metric."""
    ground = GroundCache() if ground is None else ground
    pa, wa = _dedupe(P)
    qa, wb = _dedupe(Q)
    G = np.array([[ground(a, b) for b in qa] for a in pa])
    cand = np.unique(np.concatenate([[0.0], G.ravel()]))
    ia, ib = _to_int(wa), _to_int(wb)

    def unmatched(k):
        if k == 0:
            # zero ground distance is an equivalence: compare masses class by class
            zero = coo_matrix(G == 0)
            na = len(pa)
            graph = coo_matrix((np.ones(zero.nnz), (zero.row, na + zero.col)), shape=(na + len(qa),) * 2)
            _, label = connected_components(graph, directed=False)
            return _unmatched_at_zero(label[:na], wa, label[na:], wb)
        return _flow_unmatched(ia, ib, G <= cand[k]) / FLOW_SCALE

    return lp_search(cand, unmatched)


# ---------------------------------------------------------------------------
# annulus statistic


def _interval_mass(lo_edges, hi_edges, mass, a, b):
    """Mass of ``[a, b]`` under uniform-in-cell spreading (vectorized over ``a, b``)."""
    a = np.asarray(a, float)[..., None]
    b = np.asarray(b, float)[..., None]
    overlap = np.clip(np.minimum(hi_edges, b) - np.maximum(lo_edges, a), 0.0, None)
    return (overlap / (hi_edges - lo_edges) * mass).sum(axis=-1)


def annulus_mass_profile(mu, x, k, rho: float, r_grid=None, level: int | None = None) -> float:
    """``sup_r mu_{x,k}(B(0, r + rho) minus B(0, r - rho))`` over ``r`` in ``[rho, 1]``.

    Annuli use the max metric in 2-D; the grid defaults to half-cell steps of
    the magnified frame.
    """
    if not 0 < rho < 1:
        raise ValueError("rho must lie in (0, 1)")
    frame = magnify(mu, x, k, level=level)
    h = frame.cell_width
    if r_grid is None:
        r_grid = np.arange(rho, 1.0 + 1e-12, h / 2)
    r_grid = np.asarray(r_grid, float)
    lo = frame.index * h
    hi = lo + h
    outer, inner = r_grid + rho, np.maximum(r_grid - rho, 0.0)
    if frame.dim == 1:
        m_out = _interval_mass(lo, hi, frame.mass, -outer, outer)
        m_in = _interval_mass(lo, hi, frame.mass, -inner, inner)
    else:
        def square(s):
            ox = np.clip(np.minimum(hi[:, 0], s[:, None]) - np.maximum(lo[:, 0], -s[:, None]), 0, None) / h
            oy = np.clip(np.minimum(hi[:, 1], s[:, None]) - np.maximum(lo[:, 1], -s[:, None]), 0, None) / h
            return (ox * oy * frame.mass).sum(axis=1)

        m_out, m_in = square(outer), square(inner)
    return float(np.max(m_out - m_in))
