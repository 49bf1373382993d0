"""Sceneries, tangent decompositions and entropy certificates.

Scales are measured in base-2 units: the frame at scale ``t`` is the ball
``B(x, 2^-t)`` blown up to ``[-1, 1]^d``.  Frequencies ``alpha`` in the phase
diagnostic are in cycles per base-2 unit, so ``t0 * alpha`` is unit free.

Every function accepts either an :class:`IfsSystem` (frames are computed
symbolically at any real scale, at frame resolution ``level``) or a
:class:`DyadicMeasure` (integer scales only, frames coarsened to ``level``).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .ifs import DiagonalAffine, IfsSystem, Moebius, compose_word, stopping_cover
from .measure import (
    DyadicMeasure,
    MapMixture,
    SupportError,
    ResolutionError,
    _merge,
    magnify,
    mixture_apply,
    sample_points,
    symbolic_cells,
    unit_box,
)
from .metrics import (
    GroundCache,
    MeasureDistribution,
    _xlogx_sum,
    lp_distance,
    meta_lp_distance,
)

#: levels kept in reserve below the base level of a grid measure
GUARD = 2


@dataclass
class SceneryTrack:
    """Frames ``mu_{x,t}`` along a list of scales."""

    x: object
    scales: list
    frames: list
    level: int

    def distribution(self) -> MeasureDistribution:
        return MeasureDistribution(self.frames)


def frame(mu, x, t, level: int | None = None) -> DyadicMeasure:
    """One scenery frame at resolution ``level``."""
    if isinstance(mu, IfsSystem):
        if level is None:
            raise ValueError("frame level required for IFS input")
        return magnify(mu, x, t, level=level)
    f = magnify(mu, x, int(round(t)))
    return f if level is None or level >= f.level else f.coarsen(level)


def _grid_level(mu, scales, level):
    if isinstance(mu, IfsSystem):
        return level
    top = max(int(round(t)) for t in scales)
    if top > mu.level - GUARD:
        raise ResolutionError(f"scale {top} leaves fewer than {GUARD} levels of resolution at level {mu.level}")
    return mu.level - top if level is None else min(level, mu.level - top)


def scenery_track(mu, x, scales, level: int | None = None) -> SceneryTrack:
    scales = list(scales)
    lvl = _grid_level(mu, scales, level)
    frames = [frame(mu, x, t, lvl) for t in scales]
    return SceneryTrack(x, scales, frames, lvl)


def scenery_flow(mu, x, T: int, level: int | None = None, start: int = 1) -> MeasureDistribution:
    """Uniform empirical distribution of the frames at scales ``start .. T``."""
    if T < start:
        raise ValueError("T must be >= start")
    return scenery_track(mu, x, range(start, T + 1), level).distribution()


def t0_scenery(mu, x, t0: float, count: int, level: int | None = None) -> MeasureDistribution:
    """Frames at scales ``k t0``, ``k = 1..count`` (nearest integer scale for grid input)."""
    if t0 <= 0:
        raise ValueError("t0 must be positive")
    scales = [k * t0 for k in range(1, count + 1)]
    if not isinstance(mu, IfsSystem):
        scales = [int(round(s)) for s in scales]
    return scenery_track(mu, x, scales, level).distribution()


@dataclass
class UniformScaling:
    mean: float
    matrix: np.ndarray


def uniform_scaling_statistic(mu, points, T: int, level: int | None = None, ground=None,
                              tracks: list | None = None) -> UniformScaling:
    """Pairwise meta-LP distances between ``<mu>_{x,T}`` at the given points."""
    points = list(points)
    if len(points) < 2:
        raise ValueError("need at least two points")
    ground = GroundCache() if ground is None else ground
    if tracks is None:
        dists = [scenery_flow(mu, x, T, level) for x in points]
    else:
        dists = [MeasureDistribution(tr.frames[:T]) for tr in tracks]
    n = len(dists)
    M = np.zeros((n, n))
    for i, j in itertools.combinations(range(n), 2):
        M[i, j] = M[j, i] = meta_lp_distance(dists[i], dists[j], ground)
    mean = float(M[np.triu_indices(n, 1)].mean())
    return UniformScaling(mean, M)


def shift_invariance_diagnostic(mu, x, T: int, s: int, level: int | None = None, ground=None) -> float:
    """meta-LP distance between the frames on ``[1, T]`` and on ``[1 + s, T + s]``."""
    track = scenery_track(mu, x, range(1, T + s + 1), level)
    a = MeasureDistribution(track.frames[:T])
    b = MeasureDistribution(track.frames[s : T + s])
    return meta_lp_distance(a, b, ground)


# ---------------------------------------------------------------------------
# tangent decomposition


def _rescale_map(dim, x, t):
    s = 2.0**t
    if dim == 1:
        return Moebius(s, -s * float(x))
    x = np.asarray(x, float)
    return DiagonalAffine(s, s, -s * x[0], -s * x[1])


def _compose(g, f):
    if isinstance(g, Moebius):
        return Moebius.compose(g, f)
    return DiagonalAffine.compose(g, f)


@dataclass
class TangentDecomposition:
    mixture: MapMixture
    words: list
    ratio_min: float
    ratio_max: float
    frame: DyadicMeasure
    mixture_frame: DyadicMeasure
    constant: float


def tangent_decomposition(system: IfsSystem, x, t: float, level: int = 8) -> TangentDecomposition:
    """Mixture ``nu(x,t) ~ sum_{i in cover} mu[i] delta_{g o f_i}`` and its cellwise comparison.

    ``g(y) = 2^t (y - x)``.  The frame ``mu_{x,t}`` and ``(nu . mu)`` restricted to
    ``[-1,1]^d`` are computed symbolically at ``level``; the cellwise ratio of
    the two lies in ``[1/C, C]`` for a quasi-Bernoulli constant ``C`` (and is 1
    for Bernoulli weights).
    """
    words = stopping_cover(system, x, t)
    if not words:
        raise SupportError(f"empty stopping cover at x={x}, t={t}")
    g = _rescale_map(system.dim, x, t)
    atoms = [(system.word_mass(w), _compose(g, compose_word(system, w))) for w in words]
    nu = MapMixture(atoms)
    fr = magnify(system, x, t, level=level)
    mix = mixture_apply(nu, system, level=level, clip="silent")
    lo, hi = _ratio_range(fr, mix)
    return TangentDecomposition(nu, words, lo, hi, fr, mix, float(system.weights.declared_constant))


def _ratio_range(a: DyadicMeasure, b: DyadicMeasure):
    idx = np.concatenate([a.index, b.index])
    m = np.concatenate([a.mass, b.mass])
    tag = np.concatenate([np.zeros(len(a)), np.ones(len(b))])
    if idx.ndim == 1:
        keys = idx
    else:
        lo = idx.min(axis=0)
        keys = (idx[:, 0] - lo[0]) * (idx[:, 1].max() - lo[1] + 1) + (idx[:, 1] - lo[1])
    uniq, inv = np.unique(keys, return_inverse=True)
    pa = np.zeros(len(uniq))
    pb = np.zeros(len(uniq))
    np.add.at(pa, inv[tag == 0], m[tag == 0])
    np.add.at(pb, inv[tag == 1], m[tag == 1])
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(pb > 0, pa / np.where(pb > 0, pb, 1.0), np.inf)
    return float(r.min()), float(r.max())


# ---------------------------------------------------------------------------
# entropy certificate


def _conditional_tables(idx, mass, dim, n):
    """Per level ``k < n``: child keys, child masses and the parent mass of each child."""
    out = []
    for k in range(n):
        shift = n - k - 1
        cidx, cm = _merge(idx >> shift, mass)
        pidx, pm = _merge(cidx >> 1, cm)
        pos = _lookup(pidx, cidx >> 1)
        out.append((cidx, cm, pm[pos]))
    return out


def _keys(idx):
    if idx.ndim == 1:
        return idx
    return idx[:, 0] * (1 << 31) + idx[:, 1]


def _lookup(table_idx, query_idx):
    tk, qk = _keys(table_idx), _keys(query_idx)
    order = np.argsort(tk)
    pos = np.searchsorted(tk[order], qk)
    return order[pos]


@dataclass
class Prop31Report:
    condition1_mass: float
    condition1_per_atom: list
    condition2_margin: float
    kl_total: float
    scenery_gap: float
    scenery_gap_stderr: float
    decomposition_residual: float
    entropy: float
    entropy_term: float
    n: int
    alpha: float
    samples: int = 0
    rows: list = field(default_factory=list)


def _atom_box(system: IfsSystem, nu: MapMixture):
    if system.dim == 1:
        lo, hi = system.domain
        pts = [h(np.array([lo, hi])) for h in nu.maps]
        allp = np.concatenate(pts)
        return (float(math.floor(allp.min())), float(math.ceil(allp.max())))
    corners = np.array([[a, b] for a in (-1.0, 1.0) for b in (-1.0, 1.0)])
    allp = np.concatenate([h(corners) for h in nu.maps])
    return (
        (float(math.floor(allp[:, 0].min())), float(math.ceil(allp[:, 0].max()))),
        (float(math.floor(allp[:, 1].min())), float(math.ceil(allp[:, 1].max()))),
    )


def prop31_certificate(system: IfsSystem, nu: MapMixture, n: int, alpha: float, samples: int = 64,
                       seed: int = 0, frame_level: int = 4, box=None) -> Prop31Report:
    """Entropy/KL certificate for the mixture ``nu . mu`` at depth ``n``.

    Reports

    * ``condition1_mass``: ``nu``-average of the ``h_* mu`` mass of level-``n``
      cells whose mean conditional entropy ``(1/n) sum_{k<n} H(p_k)`` is ``>= alpha``;
    * ``condition2_margin``: ``H(nu . mu, D_n) / n - alpha``;
    * ``kl_total``: ``sum_h w_h sum_{k<n} int D_KL(p^h_k || q_k) d(h_* mu)``;
    * ``scenery_gap``: Monte Carlo mean over ``h ~ nu``, ``y ~ h_* mu`` of
      ``(1/n) sum_{k=1..n} d_LP((nu . mu)_{y,k}, (h_* mu)_{y,k})`` with frames
      at ``frame_level``, and its standard error;
    * ``decomposition_residual``: the gap between ``H(nu . mu, D_n)`` and the
      sum of the entropy and KL terms (plus the level-0 term), an identity.

    Here ``p^h_k(x)`` is the conditional law of ``h_* mu`` on the children of
    ``D_k(x)`` and ``q_k(x)`` the same for ``nu . mu``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    box = _atom_box(system, nu) if box is None else box
    N = n + frame_level
    atoms = []
    for w, h in nu:
        cells, mass, _ = symbolic_cells(system, N, box, outer=h)
        if mass.sum() <= 0:
            raise SupportError("mixture atom has no mass in the box")
        atoms.append((w, DyadicMeasure(cells, mass, N, box, normalize=True)))
    dim = system.dim
    # nu . mu without renormalization so a single unit atom is reproduced bit for bit
    idx = np.concatenate([a.index for _, a in atoms])
    m = np.concatenate([w * a.mass for w, a in atoms])
    cidx, cm = _merge(idx, m)
    tot = cm.sum()
    mix = DyadicMeasure(cidx, cm, N, box, normalize=abs(tot - 1.0) > 1e-12)

    shift = N - n
    mix_n_idx, mix_n = _merge(mix.index >> shift, mix.mass)
    H = _xlogx_sum(mix_n)
    root = _xlogx_sum(_merge(mix.index >> N, mix.mass)[1])
    q_tab = _conditional_tables(mix_n_idx, mix_n, dim, n)

    entropy_term = 0.0
    kl_total = 0.0
    cond1 = []
    for w, a in atoms:
        a_idx, a_m = _merge(a.index >> shift, a.mass)
        p_tab = _conditional_tables(a_idx, a_m, dim, n)
        avg = np.zeros(len(a_m))
        for k in range(n):
            cidx_k, cm_k, parent_k = p_tab[k]
            qidx_k, qm_k, qparent_k = q_tab[k]
            p = cm_k / parent_k
            pos = _lookup(qidx_k, cidx_k)
            q = qm_k[pos] / qparent_k[pos]
            # integrals over h_* mu of per-cell quantities reduce to sums over children
            entropy_term += w * float(-(cm_k * np.log(p)).sum())
            kl_total += w * float((cm_k * np.log(p / q)).sum())
            # per level-n cell: conditional entropy of its level-k ancestor
            ent_parent = _per_parent_entropy(cidx_k, p)
            anc = a_idx >> (n - k)
            pidx_k, _ = _merge(cidx_k >> 1, cm_k)
            avg += ent_parent[_lookup(pidx_k, anc)]
        avg /= n
        cond1.append(float(a_m[avg >= alpha].sum()))
    condition1 = float(np.dot(nu.weights, cond1))
    residual = abs(H - (root + entropy_term + kl_total))

    # Monte Carlo scenery gap
    rng_seed = int(seed)
    gaps = []
    rows = []
    choice = np.random.default_rng([rng_seed, 0]).choice(len(atoms), size=samples, p=nu.weights)
    for s, ai in enumerate(choice):
        w, a = atoms[ai]
        y = sample_points(a, 1, rng_seed, task=s + 1)[0]
        vals = []
        for k in range(1, n + 1):
            f_mix = magnify(mix, y, k).coarsen(frame_level)
            f_atom = magnify(a, y, k).coarsen(frame_level)
            vals.append(lp_distance(f_mix, f_atom))
        g = float(np.mean(vals))
        gaps.append(g)
        rows.append({"sample": s, "atom": int(ai), "gap": g})
    gaps = np.asarray(gaps)
    stderr = float(gaps.std(ddof=1) / np.sqrt(len(gaps))) if len(gaps) > 1 else 0.0
    return Prop31Report(
        condition1_mass=condition1,
        condition1_per_atom=cond1,
        condition2_margin=H / n - alpha,
        kl_total=kl_total,
        scenery_gap=float(gaps.mean()) if len(gaps) else 0.0,
        scenery_gap_stderr=stderr,
        decomposition_residual=residual,
        entropy=H,
        entropy_term=entropy_term,
        n=n,
        alpha=alpha,
        samples=samples,
        rows=rows,
    )


def _per_parent_entropy(child_idx, p):
    """Entropy of the child distribution of each parent, ordered like ``_merge(child_idx >> 1)``."""
    pidx, inv = np.unique(_keys(child_idx >> 1), return_inverse=True)
    return np.bincount(inv, weights=-p * np.log(p), minlength=len(pidx))


# ---------------------------------------------------------------------------
# spectral phase


def half_ball_mass(fr: DyadicMeasure) -> float:
    """Frame mass of ``B(0, 1/2)`` (max metric), spreading each cell uniformly."""
    h = fr.cell_width
    lo = fr.index * h
    ov = np.clip(np.minimum(lo + h, 0.5) - np.maximum(lo, -0.5), 0.0, None) / h
    if fr.dim == 2:
        ov = ov[:, 0] * ov[:, 1]
    return float((ov * fr.mass).sum())


def spectral_phase_diagnostic(mu, x, t0: float, alpha: float, count: int, level: int | None = None,
                              observable=half_ball_mass) -> float:
    """``|(1/count) sum_k e(k t0 alpha) g(mu_{x, k t0})|`` with ``e(s) = exp(2 pi i s)``."""
    dist = t0_scenery(mu, x, t0, count, level)
    ks = np.arange(1, count + 1)
    g = np.array([observable(f) for f in dist.atoms])
    phase = np.exp(2j * np.pi * ks * t0 * alpha)
    return float(abs((phase * g).mean()))
