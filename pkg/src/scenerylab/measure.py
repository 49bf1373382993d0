"""Sparse measures on dyadic grids and the transforms acting on them.

A :class:`DyadicMeasure` stores masses on the cells ``[j 2^-n, (j+1) 2^-n)``
(per axis) of an absolute dyadic grid of level ``n``, restricted to a bounding
box whose endpoints are multiples of ``2^-n``.  Indices are absolute, so two
measures of the same level can be compared cell by cell regardless of their
boxes.

Measures of iterated function systems are produced by pushing cylinder masses
down the word tree (:func:`discretize`).  The same engine, with an outer map
applied to every cylinder, gives exact magnifications of a self-conformal
measure at arbitrary real scales and pushforwards ``h_* mu`` without an
intermediate grid.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.signal import fftconvolve

from .ifs import (
    ConformalMap1D,
    DiagonalAffine,
    IfsSystem,
    Moebius,
    compose_word,
)

#: slack, in cell units, when deciding which cells an interval touches
EDGE = 1e-9
MASS_TOL = 1e-12


class SupportError(ValueError):
    """Raised when an operation needs positive mass where there is none."""


class ResolutionError(ValueError):
    """Raised when a magnification asks for more levels than the grid holds."""


def _as_box(box, dim):
    """Normalize to a tuple of per-axis ``(lo, hi)`` pairs."""
    arr = np.asarray(box, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.shape != (dim, 2):
        raise ValueError(f"box {box} does not have dimension {dim}")
    return tuple((float(a), float(b)) for a, b in arr)


class DyadicMeasure:
    """Probability measure on level-``level`` dyadic cells inside ``box``.

    Parameters
    ----------
    index : array of int, shape (N,) or (N, 2)
        Absolute cell indices.
    mass : array of float, shape (N,)
        Non-negative masses; duplicates are merged and zeros dropped.
    level : int
        Cell side is ``2**-level``.
    box : (lo, hi) or ((xlo, xhi), (ylo, yhi))
        Bounding box with endpoints on the level grid.
    normalize : bool
        Rescale masses to total 1 (otherwise the total must already be 1).
    """

    __slots__ = ("index", "mass", "level", "box", "dim")

    def __init__(self, index, mass, level: int, box, normalize: bool = False):
        index = np.asarray(index, dtype=np.int64)
        mass = np.asarray(mass, dtype=float)
        dim = 1 if index.ndim == 1 else index.shape[1]
        if dim not in (1, 2):
            raise ValueError("only dimensions 1 and 2 are supported")
        box = _as_box(box, dim)
        h = 2.0 ** (-level)
        for lo, hi in box:
            if not lo < hi:
                raise ValueError(f"empty box axis {(lo, hi)}")
            for e in (lo, hi):
                if abs(e / h - round(e / h)) > 1e-9:
                    raise ValueError(f"box endpoint {e} is not on the level-{level} grid")
        if np.any(mass < -MASS_TOL):
            raise ValueError("negative mass")
        mass = np.clip(mass, 0.0, None)
        keep = mass > 0
        index, mass = index[keep], mass[keep]
        index, mass = _merge(index, mass)
        lo_idx, hi_idx = _box_index_range(box, level)
        inside = np.all((index >= lo_idx) & (index < hi_idx), axis=-1) if dim == 2 else (index >= lo_idx[0]) & (index < hi_idx[0])
        if not np.all(inside):
            raise ValueError("cells outside the bounding box")
        total = mass.sum()
        if normalize:
            if total <= 0:
                raise SupportError("cannot normalize a zero measure")
            mass = mass / total
        elif abs(total - 1.0) > 1e-9:
            raise ValueError(f"total mass {total} is not 1")
        index.setflags(write=False)
        mass.setflags(write=False)
        self.index, self.mass, self.level, self.box, self.dim = index, mass, int(level), box, dim

    # -- constructors ---------------------------------------------------
    @classmethod
    def from_dense(cls, values, level: int, box, normalize: bool = True):
        """Masses given on every cell of ``box`` in grid order."""
        values = np.asarray(values, dtype=float)
        dim = values.ndim
        box = _as_box(box, dim)
        lo_idx, hi_idx = _box_index_range(box, level)
        if tuple(values.shape) != tuple(int(h - l) for l, h in zip(lo_idx, hi_idx)):
            raise ValueError(f"dense shape {values.shape} does not match the box at level {level}")
        nz = np.nonzero(values)
        if dim == 1:
            idx = nz[0] + lo_idx[0]
        else:
            idx = np.stack([nz[0] + lo_idx[0], nz[1] + lo_idx[1]], axis=1)
        return cls(idx, values[nz], level, box, normalize=normalize)

    @classmethod
    def lebesgue(cls, level: int, box=(0.0, 1.0)):
        dim = 2 if np.ndim(box) == 2 else 1
        box = _as_box(box, dim)
        lo_idx, hi_idx = _box_index_range(box, level)
        shape = tuple(int(h - l) for l, h in zip(lo_idx, hi_idx))
        return cls.from_dense(np.ones(shape), level, box)

    @classmethod
    def dirac(cls, point, level: int, box=(0.0, 1.0)):
        dim = 2 if np.ndim(box) == 2 else 1
        box = _as_box(box, dim)
        point = np.atleast_1d(np.asarray(point, dtype=float))
        idx = np.floor(point * 2.0**level + EDGE).astype(np.int64)
        return cls(idx[:1] if dim == 1 else idx[None, :], np.ones(1), level, box)

    # -- basic accessors ------------------------------------------------
    @property
    def cell_width(self) -> float:
        return 2.0 ** (-self.level)

    @property
    def total(self) -> float:
        return float(self.mass.sum())

    def __len__(self):
        return len(self.mass)

    def centers(self) -> np.ndarray:
        return (self.index + 0.5) * self.cell_width

    def index_range(self):
        return _box_index_range(self.box, self.level)

    def dense(self) -> np.ndarray:
        lo_idx, hi_idx = self.index_range()
        shape = tuple(int(h - l) for l, h in zip(lo_idx, hi_idx))
        out = np.zeros(shape)
        if self.dim == 1:
            out[self.index - lo_idx[0]] = self.mass
        else:
            out[self.index[:, 0] - lo_idx[0], self.index[:, 1] - lo_idx[1]] = self.mass
        return out

    def coarsen(self, level: int) -> "DyadicMeasure":
        if level > self.level:
            raise ValueError(f"cannot refine level {self.level} to {level}")
        if level == self.level:
            return self
        shift = self.level - level
        box = tuple((math.floor(lo * 2**level) / 2**level, math.ceil(hi * 2**level) / 2**level) for lo, hi in self.box)
        return DyadicMeasure(self.index >> shift, self.mass, level, box, normalize=True)

    def cell_vector(self, level: int | None = None):
        """``(index, mass)`` at ``level`` (coarsened)."""
        m = self if level is None else self.coarsen(level)
        return m.index, m.mass

    def marginal(self, axis: int) -> "DyadicMeasure":
        if self.dim != 2:
            raise ValueError("marginal needs a 2-D measure")
        return DyadicMeasure(self.index[:, axis], self.mass, self.level, self.box[axis], normalize=True)

    def mass_of_box(self, box) -> float:
        """Mass of the cells whose centres lie in the closed box."""
        box = _as_box(box, self.dim)
        c = self.centers()
        if self.dim == 1:
            (lo, hi), = box
            sel = (c >= lo) & (c <= hi)
        else:
            sel = np.ones(len(c), bool)
            for ax, (lo, hi) in enumerate(box):
                sel &= (c[:, ax] >= lo) & (c[:, ax] <= hi)
        return float(self.mass[sel].sum())

    def allclose(self, other: "DyadicMeasure", atol: float = 1e-12) -> bool:
        if self.dim != other.dim or self.level != other.level:
            return False
        idx = np.concatenate([self.index, other.index])
        m = np.concatenate([self.mass, -other.mass])
        _, diff = _merge(idx, m, drop_zero=False)
        return bool(np.all(np.abs(diff) <= atol))

    def content_key(self) -> bytes:
        return b"".join([
            np.int64(self.level).tobytes(),
            np.asarray(self.box, dtype=float).tobytes(),
            np.ascontiguousarray(self.index).tobytes(),
            np.ascontiguousarray(self.mass).tobytes(),
        ])

    def __repr__(self):
        return f"DyadicMeasure(dim={self.dim}, level={self.level}, box={self.box}, cells={len(self)})"


def _box_index_range(box, level):
    scale = 2.0**level
    lo = np.array([int(round(a * scale)) for a, _ in box], dtype=np.int64)
    hi = np.array([int(round(b * scale)) for _, b in box], dtype=np.int64)
    return lo, hi


def _merge(index, mass, drop_zero=True):
    """Sum masses over duplicate cells; return sorted arrays."""
    if len(mass) == 0:
        return index.reshape((0,) + index.shape[1:]), mass
    if index.ndim == 1:
        keys = index
        uniq, inv = np.unique(keys, return_inverse=True)
        out_idx = uniq
    else:
        lo = index.min(axis=0)
        span = index[:, 1].max() - lo[1] + 1
        keys = (index[:, 0] - lo[0]) * span + (index[:, 1] - lo[1])
        uniq, first, inv = np.unique(keys, return_index=True, return_inverse=True)
        out_idx = index[first]
    out_mass = np.bincount(inv.ravel(), weights=mass, minlength=len(uniq))
    if drop_zero:
        keep = out_mass > 0
        return out_idx[keep], out_mass[keep]
    return out_idx, out_mass


# ---------------------------------------------------------------------------
# interval deposits


def _interval_cells(lo, hi, h):
    """Cells touched by each closed interval ``[lo, hi]`` and the overlap fractions."""
    a = np.floor(lo / h + EDGE).astype(np.int64)
    b = np.ceil(hi / h - EDGE).astype(np.int64) - 1
    b = np.maximum(a, b)
    n = b - a + 1
    item = np.repeat(np.arange(len(lo)), n)
    start = np.cumsum(n) - n
    cell = a[item] + (np.arange(n.sum()) - np.repeat(start, n))
    width = (hi - lo)[item]
    left = np.maximum(lo[item], cell * h)
    right = np.minimum(hi[item], (cell + 1) * h)
    frac = np.where(width > 0, np.clip(right - left, 0.0, None) / np.where(width > 0, width, 1.0), 1.0)
    # renormalize per item so that edge slack never loses mass
    tot = np.bincount(item, weights=frac, minlength=len(lo))
    tot = np.where(tot > 0, tot, 1.0)
    frac = frac / tot[item]
    zero = np.bincount(item, weights=frac, minlength=len(lo)) == 0
    if np.any(zero):
        # degenerate slivers: put everything in the first cell
        firsts = start[zero]
        frac[firsts] = 1.0
    return item, cell, frac, n


def deposit_intervals(lo, hi, mass, h):
    """Spread each mass uniformly over its interval; returns ``(cell, mass)`` rows."""
    item, cell, frac, _ = _interval_cells(np.asarray(lo, float), np.asarray(hi, float), h)
    return cell, np.asarray(mass, float)[item] * frac


def deposit_rectangles(xlo, xhi, ylo, yhi, mass, h):
    """Spread each mass uniformly over its rectangle; returns ``(cells (M,2), mass)``."""
    xi, xc, xf, nx = _interval_cells(np.asarray(xlo, float), np.asarray(xhi, float), h)
    yi, yc, yf, ny = _interval_cells(np.asarray(ylo, float), np.asarray(yhi, float), h)
    xs = np.cumsum(nx) - nx
    ys = np.cumsum(ny) - ny
    per = nx * ny
    item = np.repeat(np.arange(len(nx)), per)
    k = np.arange(per.sum()) - np.repeat(np.cumsum(per) - per, per)
    px = xs[item] + k // ny[item]
    py = ys[item] + k % ny[item]
    cells = np.stack([xc[px], yc[py]], axis=1)
    return cells, np.asarray(mass, float)[item] * xf[px] * yf[py]


def _clip_to_box(cells, mass, box, level):
    lo, hi = _box_index_range(box, level)
    if cells.ndim == 1:
        keep = (cells >= lo[0]) & (cells < hi[0])
    else:
        keep = np.all((cells >= lo) & (cells < hi), axis=1)
    return cells[keep], mass[keep], float(mass[~keep].sum())


# ---------------------------------------------------------------------------
# symbolic cylinder engine


@dataclass
class CylinderReport:
    """Bookkeeping from a symbolic discretization."""

    split_mass: float = 0.0  # mass split by overlap rather than placed in a single cell
    budget_mass: float = 0.0  # part of split_mass forced by the word-length cap
    clipped_mass: float = 0.0  # mass falling outside the target box
    max_length: int = 0


def _outer_matrix(outer) -> np.ndarray:
    if outer is None:
        return np.eye(2)
    if isinstance(outer, Moebius):
        return outer.matrix
    return np.asarray(outer, dtype=float)


def _outer_diag(outer):
    if outer is None:
        return (1.0, 1.0, 0.0, 0.0)
    return tuple(float(v) for v in outer.coefficients)


MAX_LIVE_WORDS = 1 << 23


def symbolic_cells(system: IfsSystem, level: int, box, outer=None, word_cap: int | None = None,
                   split_width: float = 1e-3):
    """Cell masses of ``outer_* mu`` for the IFS measure ``mu``.

    Cylinder images are refined until each fits into one cell of the target
    grid.  A cylinder that still straddles a cell boundary after its image
    shrank below ``split_width`` cells, or whose word reached ``word_cap``,
    is split over the cells in proportion to overlap.  Cylinders whose image
    misses ``box`` are pruned and their mass reported as clipped.

    Returns ``(cells, masses, report)``; masses are not renormalized.
    """
    dim = system.dim
    box = _as_box(box, dim)
    h = 2.0 ** (-level)
    if word_cap is None:
        word_cap = 4 * max(level + 8, 8)
    weights = system.weights
    P = weights.transition
    k = system.size
    rep = CylinderReport()
    out_cells, out_mass = [], []

    if dim == 1:
        dlo, dhi = system.domain
        mats = np.stack([m.matrix for m in system.maps])
        M = np.einsum("ij,sjk->sik", _outer_matrix(outer), mats)
    else:
        coef = np.array([[float(c) for c in m.coefficients] for m in system.maps])
        orx, ory, oax, oay = _outer_diag(outer)
        state = np.stack([orx * coef[:, 0], ory * coef[:, 1], orx * coef[:, 2] + oax, ory * coef[:, 3] + oay], axis=1)
    w = weights.initial.astype(float).copy()
    last = np.arange(k)
    length = 1

    while len(w):
        rep.max_length = length
        if dim == 1:
            a, b, c, d = M[:, 0, 0], M[:, 0, 1], M[:, 1, 0], M[:, 1, 1]
            u = (a * dlo + b) / (c * dlo + d)
            v = (a * dhi + b) / (c * dhi + d)
            lo_img, hi_img = np.minimum(u, v), np.maximum(u, v)
            (blo, bhi), = box
            meets = (hi_img >= blo - EDGE * h) & (lo_img <= bhi + EDGE * h)
            ca = np.floor(lo_img / h + EDGE)
            cb = np.ceil(hi_img / h - EDGE) - 1
            fits = ca >= cb
            width = hi_img - lo_img
        else:
            rx, ry = np.abs(state[:, 0]), np.abs(state[:, 1])
            xlo, xhi = state[:, 2] - rx, state[:, 2] + rx
            ylo, yhi = state[:, 3] - ry, state[:, 3] + ry
            (bxl, bxh), (byl, byh) = box
            meets = (xhi >= bxl - EDGE * h) & (xlo <= bxh + EDGE * h) & (yhi >= byl - EDGE * h) & (ylo <= byh + EDGE * h)
            fx = np.floor(xlo / h + EDGE) >= np.ceil(xhi / h - EDGE) - 1
            fy = np.floor(ylo / h + EDGE) >= np.ceil(yhi / h - EDGE) - 1
            fits = fx & fy
            width = np.maximum(xhi - xlo, yhi - ylo)
        rep.clipped_mass += float(w[~meets].sum())
        capped = bool(length >= word_cap)
        small = width <= split_width * h
        place = meets & fits
        split = meets & ~fits & (small | capped)
        grow = meets & ~fits & ~small & (not capped)
        if np.any(place):
            if dim == 1:
                out_cells.append(np.floor(lo_img[place] / h + EDGE).astype(np.int64))
            else:
                out_cells.append(np.stack([np.floor(xlo[place] / h + EDGE), np.floor(ylo[place] / h + EDGE)], axis=1).astype(np.int64))
            out_mass.append(w[place])
        if np.any(split):
            rep.split_mass += float(w[split].sum())
            if capped:
                rep.budget_mass += float(w[split].sum())
            if dim == 1:
                cells, m = deposit_intervals(lo_img[split], hi_img[split], w[split], h)
            else:
                cells, m = deposit_rectangles(xlo[split], xhi[split], ylo[split], yhi[split], w[split], h)
            out_cells.append(cells)
            out_mass.append(m)
        if not np.any(grow):
            break
        n_live = int(grow.sum()) * k
        if n_live > MAX_LIVE_WORDS:
            raise MemoryError(f"{n_live} live cylinders exceed the refinement budget; lower the level")
        parent_w, parent_last = w[grow], last[grow]
        w = (parent_w[:, None] * P[parent_last]).ravel()
        last = np.tile(np.arange(k), len(parent_w))
        if dim == 1:
            Mg = M[grow]
            M = np.einsum("nij,sjk->nsik", Mg, mats).reshape(-1, 2, 2)
            M /= np.abs(M).max(axis=(1, 2), keepdims=True)
        else:
            sg = state[grow]
            state = np.stack([
                (sg[:, None, 0] * coef[None, :, 0]),
                (sg[:, None, 1] * coef[None, :, 1]),
                (sg[:, None, 0] * coef[None, :, 2] + sg[:, None, 2]),
                (sg[:, None, 1] * coef[None, :, 3] + sg[:, None, 3]),
            ], axis=2).reshape(-1, 4)
        length += 1

    if out_cells:
        cells = np.concatenate(out_cells)
        mass = np.concatenate(out_mass)
    else:
        cells = np.zeros((0,) if dim == 1 else (0, 2), dtype=np.int64)
        mass = np.zeros(0)
    cells, mass, clipped = _clip_to_box(cells, mass, box, level)
    rep.clipped_mass += clipped
    return cells, mass, rep


def default_box(system: IfsSystem):
    if system.dim == 2:
        return ((-1.0, 1.0), (-1.0, 1.0))
    lo, hi = system.domain
    return (math.floor(lo), math.ceil(hi))


def discretize(system: IfsSystem, depth: int, box=None, outer=None, word_cap: int | None = None,
               return_report: bool = False):
    """Level-``depth`` dyadic discretization of the IFS measure (or of ``outer_* mu``).

    Cylinder masses are pushed down the word tree until each image fits into
    one cell; the rest is split by overlap (see :func:`symbolic_cells`).  A
    warning reports the mass split because of the word-length budget
    ``word_cap`` (default ``4 * depth``).
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if box is None:
        box = default_box(system) if outer is None else ((-1.0, 1.0) if system.dim == 1 else ((-1.0, 1.0), (-1.0, 1.0)))
    cap = word_cap if word_cap is not None else 4 * depth
    cells, mass, rep = symbolic_cells(system, depth, box, outer=outer, word_cap=cap)
    if rep.budget_mass > 1e-9:
        warnings.warn(f"refinement budget reached; {rep.budget_mass:.3g} of the mass was split by overlap", RuntimeWarning)
    if mass.sum() <= 0:
        raise SupportError("no mass inside the target box")
    mu = DyadicMeasure(cells, mass, depth, box, normalize=True)
    return (mu, rep) if return_report else mu


# ---------------------------------------------------------------------------
# magnification


def _scaling_outer(dim, x, t):
    s = 2.0**t
    if dim == 1:
        return Moebius(s, -s * float(x))
    x = np.asarray(x, dtype=float)
    return DiagonalAffine(s, s, -s * x[0], -s * x[1])


def unit_box(dim):
    return (-1.0, 1.0) if dim == 1 else ((-1.0, 1.0), (-1.0, 1.0))


def magnify(mu, x, t, level: int | None = None) -> DyadicMeasure:
    """Blow-up ``mu_{x,t}``: ``mu`` restricted to ``B(x, 2^-t)``, rescaled to ``[-1,1]^d``.

    ``mu`` is a :class:`DyadicMeasure` (``t`` must be an integer ``k < level``;
    the result has level ``level - k``) or an :class:`IfsSystem`, in which case
    ``t`` may be any real and ``level`` is the frame resolution.
    """
    if isinstance(mu, IfsSystem):
        if level is None:
            raise ValueError("frame level required for symbolic magnification")
        cells, mass, _ = symbolic_cells(mu, level, unit_box(mu.dim), outer=_scaling_outer(mu.dim, x, t))
        if mass.sum() <= 0:
            raise SupportError(f"B({x}, 2^-{t}) carries no mass")
        return DyadicMeasure(cells, mass, level, unit_box(mu.dim), normalize=True)
    k = int(round(t))
    if abs(k - t) > 1e-12:
        raise ValueError("grid measures are magnified at integer scales only")
    if k >= mu.level:
        raise ResolutionError(f"scale {k} exhausts level {mu.level}")
    target = mu.level - k
    out = pushforward_map(mu, _scaling_outer(mu.dim, x, k), box=unit_box(mu.dim), level=target, clip="silent", normalize=False)
    if out is None:
        raise SupportError(f"B({x}, 2^-{k}) carries no mass")
    return out


def dyadic_magnify(mu: DyadicMeasure, x, k: int) -> DyadicMeasure:
    """Restriction to the level-``k`` cell containing ``x``, rescaled onto ``[0,1)^d``."""
    if k >= mu.level:
        raise ResolutionError(f"scale {k} exhausts level {mu.level}")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    corner = np.floor(x * 2.0**k + EDGE).astype(np.int64)
    shift = mu.level - k
    parent = mu.index >> shift
    if mu.dim == 1:
        sel = parent == corner[0]
        idx = mu.index[sel] - (corner[0] << shift)
        box = (0.0, 1.0)
    else:
        sel = np.all(parent == corner[None, :], axis=1)
        idx = mu.index[sel] - (corner[None, :] << shift)
        box = ((0.0, 1.0), (0.0, 1.0))
    if not np.any(sel) or mu.mass[sel].sum() <= 0:
        raise SupportError(f"the level-{k} cell at {x} carries no mass")
    return DyadicMeasure(idx, mu.mass[sel], mu.level - k, box, normalize=True)


def restrict_normalize(mu: DyadicMeasure, box) -> DyadicMeasure:
    """``mu_A``: restriction to the cells inside ``box``, renormalized."""
    box = _as_box(box, mu.dim)
    h = mu.cell_width
    left = mu.index * h
    right = (mu.index + 1) * h
    if mu.dim == 1:
        (lo, hi), = box
        sel = (left >= lo - EDGE * h) & (right <= hi + EDGE * h)
    else:
        sel = np.ones(len(mu), bool)
        for ax, (lo, hi) in enumerate(box):
            sel &= (left[:, ax] >= lo - EDGE * h) & (right[:, ax] <= hi + EDGE * h)
    if mu.mass[sel].sum() <= 0:
        raise SupportError(f"no mass in {box}")
    return DyadicMeasure(mu.index[sel], mu.mass[sel], mu.level, mu.box, normalize=True)


# ---------------------------------------------------------------------------
# pushforwards and mixtures


def _map_intervals(h, lo, hi):
    if isinstance(h, Moebius):
        u, v = h(lo), h(hi)
    else:
        u, v = np.asarray(h(lo), float), np.asarray(h(hi), float)
    return np.minimum(u, v), np.maximum(u, v)


def pushforward_map(mu: DyadicMeasure, h, box=None, level: int | None = None, clip: str = "warn",
                    normalize: bool = True):
    """``h_* mu`` with each cell's mass spread over the image of the cell.

    In 1-D ``h`` is a :class:`Moebius` map or any monotone callable; in 2-D a
    :class:`DiagonalAffine` map.  The target grid defaults to the source box
    and level.  Mass leaving the box is dropped and, with ``clip="warn"``,
    reported when above ``1e-9``.  The result is renormalized.
    """
    box = mu.box if box is None else _as_box(box, mu.dim)
    level = mu.level if level is None else level
    g = 2.0 ** (-level)
    w = mu.cell_width
    if mu.dim == 1:
        lo, hi = _map_intervals(h, mu.index * w, (mu.index + 1) * w)
        cells, mass = deposit_intervals(lo, hi, mu.mass, g)
    else:
        if not isinstance(h, DiagonalAffine):
            raise TypeError("2-D pushforwards take diagonal affine maps")
        (xlo, xhi), (ylo, yhi) = _diag_rects(h, mu.index * w, (mu.index + 1) * w)
        cells, mass = deposit_rectangles(xlo, xhi, ylo, yhi, mu.mass, g)
    cells, mass, clipped = _clip_to_box(cells, mass, box, level)
    if clip == "warn" and clipped > 1e-9:
        warnings.warn(f"pushforward clipped {clipped:.3g} of the mass outside {box}", RuntimeWarning)
    if mass.sum() <= 0:
        if normalize:
            raise SupportError("pushforward leaves no mass inside the box")
        return None
    return DyadicMeasure(cells, mass, level, box, normalize=True)


def _diag_rects(h: DiagonalAffine, lower, upper):
    rho, lam, ax, ay = (float(v) for v in h.coefficients)
    x1, x2 = rho * lower[:, 0] + ax, rho * upper[:, 0] + ax
    y1, y2 = lam * lower[:, 1] + ay, lam * upper[:, 1] + ay
    return (np.minimum(x1, x2), np.maximum(x1, x2)), (np.minimum(y1, y2), np.maximum(y1, y2))


class MapMixture:
    """Finitely supported distribution over maps, ``nu = sum w_h delta_h``."""

    def __init__(self, atoms: Sequence[tuple[float, object]], normalize: bool = True):
        atoms = [(float(w), h) for w, h in atoms]
        if not atoms:
            raise ValueError("empty mixture")
        if any(w <= 0 for w, _ in atoms):
            raise ValueError("mixture weights must be positive")
        total = sum(w for w, _ in atoms)
        if not normalize and abs(total - 1) > 1e-9:
            raise ValueError(f"mixture weights sum to {total}")
        self.weights = np.array([w / total for w, _ in atoms])
        self.maps = [h for _, h in atoms]

    @classmethod
    def identity(cls, dim: int = 1):
        return cls([(1.0, Moebius(1, 0) if dim == 1 else DiagonalAffine(1, 1, 0, 0))])

    def __len__(self):
        return len(self.maps)

    def __iter__(self):
        return iter(zip(self.weights, self.maps))

    def __repr__(self):
        return f"MapMixture({len(self)} atoms)"


def mixture_apply(nu: MapMixture, mu, box=None, level: int | None = None, clip: str = "warn") -> DyadicMeasure:
    """``nu . mu = sum_h w_h h_* mu``, renormalized.

    ``mu`` is a :class:`DyadicMeasure` (cellwise pushforwards) or an
    :class:`IfsSystem`, in which case each ``h_* mu`` is computed symbolically
    at ``level`` on ``box`` (default ``[-1,1]^d``).
    """
    if isinstance(mu, IfsSystem):
        if level is None:
            raise ValueError("level required for symbolic mixtures")
        box = unit_box(mu.dim) if box is None else box
        cells, masses = [], []
        for w, h in nu:
            c, m, rep = symbolic_cells(mu, level, box, outer=h)
            if clip == "warn" and rep.clipped_mass > 1e-9:
                warnings.warn(f"mixture atom clipped {rep.clipped_mass:.3g} of its mass", RuntimeWarning)
            cells.append(c)
            masses.append(w * m)
        mass = np.concatenate(masses)
        if mass.sum() <= 0:
            raise SupportError("mixture leaves no mass inside the box")
        return DyadicMeasure(np.concatenate(cells), mass, level, box, normalize=True)
    parts = []
    for w, h in nu:
        out = pushforward_map(mu, h, box=box, level=level, clip=clip, normalize=False)
        if out is not None:
            parts.append((w, out))
    if not parts:
        raise SupportError("mixture leaves no mass inside the box")
    ref = parts[0][1]
    idx = np.concatenate([p.index for _, p in parts])
    mass = np.concatenate([w * p.mass for w, p in parts])
    return DyadicMeasure(idx, mass, ref.level, ref.box, normalize=True)


# ---------------------------------------------------------------------------
# convolution, products, projections


def convolve(mu: DyadicMeasure, eta: DyadicMeasure) -> DyadicMeasure:
    """Law of ``X + Y`` for independent ``X ~ mu``, ``Y ~ eta``.

    Cell ``i`` convolved with cell ``j`` lands in cell ``i + j`` (sum of left
    corners), so ``mu * delta_0 = mu`` exactly on the grid.
    """
    if mu.dim != 1 or eta.dim != 1:
        raise ValueError("convolution is implemented for 1-D measures")
    if mu.level != eta.level:
        raise ValueError(f"level mismatch {mu.level} vs {eta.level}")
    a, b = mu.dense(), eta.dense()
    if len(a) * len(b) <= 1 << 22:
        c = np.convolve(a, b)
    else:
        c = fftconvolve(a, b)
        # round-off of the FFT route
        c[c < 1e-15] = 0.0
    (alo, ahi), = mu.box
    (blo, bhi), = eta.box
    # the sum box has one more cell than the convolution output
    full = np.zeros(len(a) + len(b))
    full[: len(c)] = c
    return DyadicMeasure.from_dense(full, mu.level, (alo + blo, ahi + bhi))


def product(mu: DyadicMeasure, eta: DyadicMeasure) -> DyadicMeasure:
    """Product measure on the grid ``mu.box x eta.box``."""
    if mu.dim != 1 or eta.dim != 1:
        raise ValueError("product takes two 1-D measures")
    if mu.level != eta.level:
        raise ValueError(f"level mismatch {mu.level} vs {eta.level}")
    ii, jj = np.meshgrid(np.arange(len(mu)), np.arange(len(eta)), indexing="ij")
    idx = np.stack([mu.index[ii.ravel()], eta.index[jj.ravel()]], axis=1)
    mass = mu.mass[ii.ravel()] * eta.mass[jj.ravel()]
    return DyadicMeasure(idx, mass, mu.level, (mu.box[0], eta.box[0]), normalize=True)


def projection_box(box, theta: float):
    c, s = _direction(theta)
    corners = [x * c + y * s for x in box[0] for y in box[1]]
    return (float(math.floor(min(corners) + 1e-12)), float(math.ceil(max(corners) - 1e-12)))


def _direction(theta):
    c, s = math.cos(theta), math.sin(theta)
    if abs(c) < 1e-15:
        c = 0.0
    if abs(s) < 1e-15:
        s = 0.0
    return c, s


def project(mu: DyadicMeasure, theta: float, box=None) -> DyadicMeasure:
    """Orthogonal projection onto the line at angle ``theta``.

    Each cell's mass is spread uniformly over ``center +- (h/2)(|cos| + |sin|)``
    on the 1-D grid of the same level.
    """
    if mu.dim != 2:
        raise ValueError("projection takes a 2-D measure")
    if not 0 <= theta < math.pi:
        raise ValueError("theta must lie in [0, pi)")
    c, s = _direction(theta)
    h = mu.cell_width
    centers = mu.centers()
    p = centers[:, 0] * c + centers[:, 1] * s
    half = 0.5 * h * (abs(c) + abs(s))
    box = projection_box(mu.box, theta) if box is None else box
    cells, mass = deposit_intervals(p - half, p + half, mu.mass, h)
    cells, mass, _ = _clip_to_box(cells, mass, _as_box(box, 1), mu.level)
    return DyadicMeasure(cells, mass, mu.level, box, normalize=True)


def disintegrate(mu: DyadicMeasure, x_cell: int) -> DyadicMeasure:
    """Normalized column measure ``mu_x`` above the x-cell with index ``x_cell``."""
    if mu.dim != 2:
        raise ValueError("disintegration takes a 2-D measure")
    sel = mu.index[:, 0] == int(x_cell)
    if mu.mass[sel].sum() <= 0:
        raise SupportError(f"column {x_cell} carries no mass")
    return DyadicMeasure(mu.index[sel, 1], mu.mass[sel], mu.level, mu.box[1], normalize=True)


# ---------------------------------------------------------------------------
# sampling


def max_contraction(system: IfsSystem) -> float:
    if system.dim == 2:
        return max(max(float(m.rho), float(m.lam)) for m in system.maps)
    lo, hi = system.domain
    return max(float(np.max(np.abs(m.derivative([lo, hi])))) for m in system.maps)


def sample_words(system: IfsSystem, count: int, length: int, rng) -> np.ndarray:
    """Random words drawn from the weight model, shape ``(count, length)``."""
    k = system.size
    words = np.empty((count, length), dtype=np.int64)
    init_cdf = np.cumsum(system.weights.initial)
    P_cdf = np.cumsum(system.weights.transition, axis=1)
    u = rng.random((count, length))
    words[:, 0] = np.minimum(np.searchsorted(init_cdf, u[:, 0], side="right"), k - 1)
    for j in range(1, length):
        cdf = P_cdf[words[:, j - 1]]
        words[:, j] = np.minimum((u[:, j, None] >= cdf).sum(axis=1), k - 1)
    return words


def word_length_for_bits(system: IfsSystem, bits: int) -> int:
    r = max_contraction(system)
    return max(1, math.ceil((bits + 2) / -math.log2(r)))


def project_words(system: IfsSystem, words: np.ndarray) -> np.ndarray:
    """Floating-point ``f_word(base)`` for each row, evaluated innermost first."""
    n, L = words.shape
    if system.dim == 1:
        coef = np.array([[float(c) for c in m.coefficients] for m in system.maps])
        x = np.full(n, float(system.domain[0]))
        for j in range(L - 1, -1, -1):
            a, b, c, d = coef[words[:, j]].T
            x = (a * x + b) / (c * x + d)
        return x
    coef = np.array([[float(c) for c in m.coefficients] for m in system.maps])
    pts = np.zeros((n, 2))
    for j in range(L - 1, -1, -1):
        rho, lam, ax, ay = coef[words[:, j]].T
        pts = np.stack([rho * pts[:, 0] + ax, lam * pts[:, 1] + ay], axis=1)
    return pts


def project_word_exact(system: IfsSystem, word) -> Fraction:
    """Exact rational ``f_word(lo)`` for a 1-D system (coefficients converted exactly)."""
    if system.dim != 1:
        raise ValueError("exact projection is implemented for 1-D systems")
    coef = [tuple(Fraction(c) for c in m.coefficients) for m in system.maps]
    x = Fraction(system.domain[0])
    for s in reversed(list(word)):
        a, b, c, d = coef[int(s)]
        x = (a * x + b) / (c * x + d)
    return x


def sample_points(source, count: int, seed: int, precision_bits: int | None = None, task: int = 0):
    """Seeded i.i.d. samples from a grid measure or an IFS measure.

    Grid measures are sampled cellwise and uniformly within the cell.  IFS
    measures are sampled symbolically: random words from the weight model,
    projected through the maps.  With ``precision_bits`` (1-D systems) the
    points are returned as exact fractions within ``2^-precision_bits`` of a
    point of the attractor.  The generator is keyed by ``(seed, task)``.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng([int(seed), int(task)])
    if isinstance(source, DyadicMeasure):
        cells = rng.choice(len(source), size=count, p=source.mass / source.mass.sum())
        off = rng.random((count, source.dim))
        pts = (source.index[cells].reshape(count, -1) + off) * source.cell_width
        return pts[:, 0] if source.dim == 1 else pts
    if precision_bits is None:
        L = word_length_for_bits(source, 60)
        return project_words(source, sample_words(source, count, L, rng))
    L = word_length_for_bits(source, precision_bits + 8)
    words = sample_words(source, count, L, rng)
    return [project_word_exact(source, w) for w in words]



def ifs_ball_mass(system: IfsSystem, x, t: float, rel_width: float = 1e-9, word_cap: int = 200) -> float:
    """``mu(B(x, 2^-t))`` for the IFS measure, closed ball, max metric in 2-D.

    Cylinders inside the ball count fully, disjoint ones not at all; those
    on the boundary are refined until narrower than ``rel_width * 2^-t`` and
    then counted by overlap.
    """
    r = 2.0 ** (-t)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    P = system.weights.transition
    k = system.size
    total = 0.0
    w = system.weights.initial.astype(float).copy()
    last = np.arange(k)
    if system.dim == 1:
        dlo, dhi = system.domain
        mats = np.stack([m.matrix for m in system.maps])
        M = mats.copy()
    else:
        coef = np.array([[float(c) for c in m.coefficients] for m in system.maps])
        state = coef.copy()
    for length in range(1, word_cap + 1):
        if system.dim == 1:
            a, b, c, d = M[:, 0, 0], M[:, 0, 1], M[:, 1, 0], M[:, 1, 1]
            u = (a * dlo + b) / (c * dlo + d)
            v = (a * dhi + b) / (c * dhi + d)
            boxes = [(np.minimum(u, v), np.maximum(u, v))]
        else:
            boxes = [(state[:, 2] - state[:, 0], state[:, 2] + state[:, 0]),
                     (state[:, 3] - state[:, 1], state[:, 3] + state[:, 1])]
        inside = np.ones(len(w), bool)
        disjoint = np.zeros(len(w), bool)
        frac = np.ones(len(w))
        width = np.zeros(len(w))
        for (lo, hi), xi in zip(boxes, x):
            slack = 1e-12 * r
            inside &= (lo >= xi - r - slack) & (hi <= xi + r + slack)
            disjoint |= (hi < xi - r - slack) | (lo > xi + r + slack)
            span = hi - lo
            ov = np.clip(np.minimum(hi, xi + r) - np.maximum(lo, xi - r), 0.0, None)
            frac *= np.where(span > 0, ov / np.where(span > 0, span, 1.0), 1.0)
            width = np.maximum(width, span)
        total += float(w[inside].sum())
        edge = ~inside & ~disjoint
        done = edge & ((width <= rel_width * r) | (length == word_cap))
        total += float((w[done] * frac[done]).sum())
        grow = edge & ~done
        if not np.any(grow):
            break
        if int(grow.sum()) * k > MAX_LIVE_WORDS:
            raise MemoryError("ball boundary refinement exceeded the budget")
        w = (w[grow][:, None] * P[last[grow]]).ravel()
        n_par = int(grow.sum())
        last = np.tile(np.arange(k), n_par)
        if system.dim == 1:
            M = np.einsum("nij,sjk->nsik", M[grow], mats).reshape(-1, 2, 2)
            M /= np.abs(M).max(axis=(1, 2), keepdims=True)
        else:
            sg = state[grow]
            state = np.stack([
                sg[:, None, 0] * coef[None, :, 0],
                sg[:, None, 1] * coef[None, :, 1],
                sg[:, None, 0] * coef[None, :, 2] + sg[:, None, 2],
                sg[:, None, 1] * coef[None, :, 3] + sg[:, None, 3],
            ], axis=2).reshape(-1, 4)
    return total
