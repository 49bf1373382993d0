"""Iterated function systems: symbolic words, map algebra, weight models.

One-dimensional systems are built from Moebius maps ``x -> (ax + b)/(cx + d)``
acting on a compact interval (``[0, 1]`` by default); affine maps are the
special case ``c = 0``.  Two-dimensional systems are diagonal affine maps of
``[-1, 1]^2``.  Coefficients may be given as :class:`fractions.Fraction` so that
high-precision code paths (orbit arithmetic, exact projections) see the exact
rational values instead of their binary approximations.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Real
from typing import Iterable, Sequence, Union

import numpy as np

Word = tuple[int, ...]

#: relative slack used when comparing diameters against scale thresholds
REL_TOL = 1e-12


def as_number(value) -> Real:
    """Parse ``"1/3"``-style strings into exact fractions; pass numbers through."""
    if isinstance(value, str):
        value = value.strip()
        if "/" in value or value.lstrip("+-").isdigit():
            return Fraction(value)
        return float(value)
    if isinstance(value, (int, Fraction)):
        return Fraction(value)
    if isinstance(value, float):
        return value
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.integer):
        return Fraction(int(value))
    raise TypeError(f"not a real number: {value!r}")


def parse_word(word: Union[str, Iterable[int]]) -> Word:
    if isinstance(word, str):
        return tuple(int(ch) for ch in word)
    return tuple(int(s) for s in word)


# ---------------------------------------------------------------------------
# one-dimensional maps


@dataclass(frozen=True)
class Moebius:
    """Real Moebius transformation ``x -> (a x + b) / (c x + d)``.

    No contraction or domain checks; use :class:`ConformalMap1D` for IFS maps.
    """

    a: Real
    b: Real
    c: Real = 0
    d: Real = 1

    def __post_init__(self):
        for name in "abcd":
            object.__setattr__(self, name, as_number(getattr(self, name)))
        if self.a * self.d - self.b * self.c == 0:
            raise ValueError("degenerate Moebius map: ad - bc = 0")
        a, b, c, d = self.a, self.b, self.c, self.d
        if d != 0 and d != 1:
            a, b, c, d = a / d, b / d, c / d, d / d
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", d)

    @classmethod
    def affine(cls, ratio, offset=0):
        return cls(ratio, offset, 0, 1)

    @property
    def is_affine(self) -> bool:
        return self.c == 0

    @property
    def coefficients(self) -> tuple:
        return (self.a, self.b, self.c, self.d)

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[float(self.a), float(self.b)], [float(self.c), float(self.d)]])

    @property
    def determinant(self) -> Real:
        return self.a * self.d - self.b * self.c

    def __call__(self, x):
        a, b, c, d = (float(v) for v in self.coefficients)
        return (a * np.asarray(x, dtype=float) + b) / (c * np.asarray(x, dtype=float) + d)

    def derivative(self, x):
        a, b, c, d = self.coefficients
        det = float(a * d - b * c)  # exact before rounding; float cancels badly for long words
        x = np.asarray(x, dtype=float)
        return det / (float(c) * x + float(d)) ** 2

    def exact(self, x):
        """Evaluate with whatever number type ``x`` carries (Fraction, mpf, int)."""
        a, b, c, d = self.coefficients
        return (a * x + b) / (c * x + d)

    def compose(self, other: "Moebius") -> "Moebius":
        """Return ``self o other``."""
        a1, b1, c1, d1 = self.coefficients
        a2, b2, c2, d2 = other.coefficients
        return Moebius(a1 * a2 + b1 * c2, a1 * b2 + b1 * d2, c1 * a2 + d1 * c2, c1 * b2 + d1 * d2)

    def inverse(self) -> "Moebius":
        a, b, c, d = self.coefficients
        return Moebius(d, -b, -c, a)

    def image(self, lo: float, hi: float) -> tuple[float, float]:
        u, v = self(lo), self(hi)
        return (float(min(u, v)), float(max(u, v)))

    def pole(self):
        return None if self.c == 0 else -float(self.d) / float(self.c)


@dataclass(frozen=True)
class ConformalMap1D(Moebius):
    """Contracting Moebius map of a compact interval into itself.

    ``holder`` records the assumed Hoelder exponent of the derivative; it is
    metadata only.
    """

    domain: tuple = (0.0, 1.0)
    holder: float = 1.0

    def __post_init__(self):
        super().__post_init__()
        lo, hi = (float(v) for v in self.domain)
        if not lo < hi:
            raise ValueError(f"empty domain {self.domain}")
        object.__setattr__(self, "domain", (lo, hi))
        pole = self.pole()
        if pole is not None and lo <= pole <= hi:
            raise ValueError(f"pole {pole} inside domain {self.domain}")
        # |f'| is monotone between poles, so the endpoints bound it
        dmax = float(np.max(np.abs(self.derivative([lo, hi]))))
        if dmax >= 1.0:
            raise ValueError(f"map is not a contraction on {self.domain}: max |f'| = {dmax}")
        ilo, ihi = self.image(lo, hi)
        slack = 1e-12 * (hi - lo)
        if ilo < lo - slack or ihi > hi + slack:
            raise ValueError(f"image [{ilo}, {ihi}] escapes domain {self.domain}")

    @classmethod
    def affine(cls, ratio, offset=0, domain=(0.0, 1.0), holder=1.0):
        return cls(ratio, offset, 0, 1, domain=domain, holder=holder)

    @classmethod
    def moebius(cls, a, b, c, d, domain=(0.0, 1.0), holder=1.0):
        return cls(a, b, c, d, domain=domain, holder=holder)

    @property
    def variant(self) -> str:
        return "affine" if self.is_affine else "moebius"

    def compose(self, other: "Moebius") -> "ConformalMap1D":
        m = Moebius.compose(self, other)
        return ConformalMap1D(*m.coefficients, domain=self.domain, holder=self.holder)

    def diameter(self) -> float:
        lo, hi = self.image(*self.domain)
        return hi - lo


# ---------------------------------------------------------------------------
# two-dimensional diagonal maps


@dataclass(frozen=True)
class DiagonalAffine:
    """``(x, y) -> (rho x + ax, lam y + ay)`` without validation."""

    rho: Real
    lam: Real
    ax: Real = 0
    ay: Real = 0

    def __post_init__(self):
        for name in ("rho", "lam", "ax", "ay"):
            object.__setattr__(self, name, as_number(getattr(self, name)))
        if self.rho == 0 or self.lam == 0:
            raise ValueError("singular diagonal map")

    @property
    def coefficients(self) -> tuple:
        return (self.rho, self.lam, self.ax, self.ay)

    def __call__(self, pts):
        pts = np.asarray(pts, dtype=float)
        out = np.empty_like(pts)
        out[..., 0] = float(self.rho) * pts[..., 0] + float(self.ax)
        out[..., 1] = float(self.lam) * pts[..., 1] + float(self.ay)
        return out

    def compose(self, other: "DiagonalAffine") -> "DiagonalAffine":
        return DiagonalAffine(
            self.rho * other.rho,
            self.lam * other.lam,
            self.rho * other.ax + self.ax,
            self.lam * other.ay + self.ay,
        )

    def inverse(self) -> "DiagonalAffine":
        return DiagonalAffine(1 / self.rho, 1 / self.lam, -self.ax / self.rho, -self.ay / self.lam)

    def image(self, box) -> tuple[tuple[float, float], tuple[float, float]]:
        (x0, x1), (y0, y1) = box
        xs = sorted((float(self.rho) * x0 + float(self.ax), float(self.rho) * x1 + float(self.ax)))
        ys = sorted((float(self.lam) * y0 + float(self.ay), float(self.lam) * y1 + float(self.ay)))
        return (tuple(xs), tuple(ys))


UNIT_SQUARE = ((-1.0, 1.0), (-1.0, 1.0))


@dataclass(frozen=True)
class DiagonalAffineMap2D(DiagonalAffine):
    """Diagonal contraction of ``[-1, 1]^2`` into itself."""

    def __post_init__(self):
        super().__post_init__()
        if not (0 < self.rho < 1 and 0 < self.lam < 1):
            raise ValueError(f"need 0 < rho, lam < 1, got {self.rho}, {self.lam}")
        (x0, x1), (y0, y1) = self.image(UNIT_SQUARE)
        if x0 < -1 - 1e-12 or x1 > 1 + 1e-12 or y0 < -1 - 1e-12 or y1 > 1 + 1e-12:
            raise ValueError("image of [-1,1]^2 escapes the square")

    @property
    def domain(self):
        return UNIT_SQUARE

    def compose(self, other: "DiagonalAffine") -> "DiagonalAffineMap2D":
        m = DiagonalAffine.compose(self, other)
        return DiagonalAffineMap2D(*m.coefficients)

    def diameter(self) -> float:
        # max metric
        return 2.0 * max(float(self.rho), float(self.lam))


# ---------------------------------------------------------------------------
# weight models


class Bernoulli:
    """Product weights ``p_i1 ... p_in``."""

    def __init__(self, probabilities: Sequence):
        p = np.asarray([float(as_number(v)) for v in probabilities])
        if np.any(p <= 0):
            raise ValueError("Bernoulli weights must be strictly positive")
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"weights sum to {p.sum()}, not 1")
        self.p = p / p.sum()
        self.declared_constant = 1.0

    @property
    def size(self) -> int:
        return len(self.p)

    @property
    def initial(self) -> np.ndarray:
        return self.p

    @property
    def transition(self) -> np.ndarray:
        return np.tile(self.p, (len(self.p), 1))

    def mass(self, word) -> float:
        return float(np.prod(self.p[list(parse_word(word))])) if len(word) else 1.0

    def key(self) -> tuple:
        return ("bernoulli", tuple(self.p.tolist()))

    def __repr__(self):
        return f"Bernoulli({self.p.tolist()})"


class MarkovWeights:
    """1-step Markov word weights ``pi_i1 P_i1i2 ... P_i(n-1)in``.

    Quasi-Bernoulli with constant ``max_ab max(P_ab / pi_b, pi_b / P_ab)``;
    the declared constant is checked against that value.
    """

    def __init__(self, initial: Sequence, transition, declared_constant: float | None = None):
        pi = np.asarray([float(as_number(v)) for v in initial])
        P = np.asarray([[float(as_number(v)) for v in row] for row in transition])
        if P.shape != (len(pi), len(pi)):
            raise ValueError("transition matrix shape does not match the initial vector")
        if np.any(pi <= 0) or np.any(P <= 0):
            raise ValueError("Markov weights must be strictly positive")
        if abs(pi.sum() - 1) > 1e-9 or np.any(np.abs(P.sum(axis=1) - 1) > 1e-9):
            raise ValueError("initial vector and transition rows must sum to 1")
        self.pi = pi / pi.sum()
        self.P = P / P.sum(axis=1, keepdims=True)
        ratio = self.P / self.pi[None, :]
        exact = float(max(ratio.max(), (1 / ratio).max()))
        if declared_constant is not None and declared_constant < exact - 1e-9:
            raise ValueError(f"declared constant {declared_constant} is below the true constant {exact}")
        self.declared_constant = exact if declared_constant is None else float(declared_constant)

    @property
    def size(self) -> int:
        return len(self.pi)

    @property
    def initial(self) -> np.ndarray:
        return self.pi

    @property
    def transition(self) -> np.ndarray:
        return self.P

    def mass(self, word) -> float:
        word = parse_word(word)
        if not word:
            return 1.0
        m = self.pi[word[0]]
        for s, t in zip(word, word[1:]):
            m *= self.P[s, t]
        return float(m)

    def key(self) -> tuple:
        return ("markov", tuple(self.pi.tolist()), tuple(map(tuple, self.P.tolist())))

    def __repr__(self):
        return f"MarkovWeights(pi={self.pi.tolist()}, P={self.P.tolist()})"


# ---------------------------------------------------------------------------
# systems


@dataclass(frozen=True)
class IfsSystem:
    maps: tuple
    weights: object = None
    name: str = ""

    def __post_init__(self):
        maps = tuple(self.maps)
        if not maps:
            raise ValueError("an IFS needs at least one map")
        kinds = {type(m) for m in maps}
        if len(kinds) != 1 or not (kinds <= {ConformalMap1D} or kinds <= {DiagonalAffineMap2D}):
            raise TypeError("maps must all be ConformalMap1D or all DiagonalAffineMap2D")
        if isinstance(maps[0], ConformalMap1D) and len({m.domain for m in maps}) != 1:
            raise ValueError("1-D maps must share a domain")
        object.__setattr__(self, "maps", maps)
        w = self.weights
        if w is None:
            w = Bernoulli([Fraction(1, len(maps))] * len(maps))
        elif not isinstance(w, (Bernoulli, MarkovWeights)):
            w = Bernoulli(w)
        if w.size != len(maps):
            raise ValueError(f"{w.size} weights for {len(maps)} maps")
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return 1 if isinstance(self.maps[0], ConformalMap1D) else 2

    @property
    def size(self) -> int:
        return len(self.maps)

    @property
    def domain(self):
        return self.maps[0].domain

    @property
    def is_affine(self) -> bool:
        return self.dim == 2 or all(m.is_affine for m in self.maps)

    @property
    def is_bernoulli(self) -> bool:
        return isinstance(self.weights, Bernoulli)

    def key(self) -> tuple:
        """Hashable description used for cache keys."""
        return (
            self.dim,
            tuple((type(m).__name__,) + tuple(str(c) for c in m.coefficients) for m in self.maps),
            str(self.domain),
            self.weights.key(),
        )

    def word_mass(self, word) -> float:
        return self.weights.mass(word)


def similarity_system(ratio, offsets, weights=None, domain=(0.0, 1.0), name="") -> IfsSystem:
    """Homogeneous affine system ``x -> ratio * x + offset``."""
    maps = tuple(ConformalMap1D.affine(ratio, a, domain=domain) for a in offsets)
    return IfsSystem(maps, weights, name=name)


def cantor_system(weights=None) -> IfsSystem:
    """Middle-thirds Cantor system ``{x/3, x/3 + 2/3}`` with exact coefficients."""
    return similarity_system(Fraction(1, 3), [0, Fraction(2, 3)], weights, name="cantor")


# ---------------------------------------------------------------------------
# operations


def compose_word(system: IfsSystem, word) -> ConformalMap1D | DiagonalAffineMap2D:
    """Left-to-right composition ``f_i1 o ... o f_in``."""
    word = parse_word(word)
    if not word:
        raise ValueError("the empty word (identity) is not a contraction of the domain")
    for s in word:
        if not 0 <= s < system.size:
            raise IndexError(f"symbol {s} outside alphabet of size {system.size}")
    f = system.maps[word[0]]
    for s in word[1:]:
        f = f.compose(system.maps[s])
    return f


def fixed_point_and_ratio(f, tol: float = 1e-12):
    """Fixed point ``p`` of a contraction and its asymptotic ratio ``f'(p)``.

    For diagonal 2-D maps the ratio is the pair ``(rho, lam)``.
    """
    if isinstance(f, DiagonalAffine):
        p = (float(f.ax) / (1 - float(f.rho)), float(f.ay) / (1 - float(f.lam)))
        if not all(-1 - tol <= v <= 1 + tol for v in p):
            raise ValueError(f"fixed point {p} outside [-1,1]^2")
        return np.array(p), (float(f.rho), float(f.lam))

    lo, hi = getattr(f, "domain", (-np.inf, np.inf))
    a, b, c, d = (float(v) for v in f.coefficients)
    if c == 0:
        p = b / (d - a)
    else:
        # c p^2 + (d - a) p - b = 0
        roots = np.roots([c, d - a, -b])
        roots = roots[np.abs(roots.imag) < 1e-9].real
        inside = [r for r in roots if lo - 1e-9 <= r <= hi + 1e-9]
        if not inside:
            raise ValueError(f"no fixed point of {f} inside {f.domain}")
        p = float(min(inside, key=lambda r: abs(float(f(r)) - r)))
        for _ in range(200):
            q = float(f(p))
            if abs(q - p) <= tol:
                p = q
                break
            p = q
    if not lo - 1e-9 <= p <= hi + 1e-9:
        raise ValueError(f"fixed point {p} outside domain {(lo, hi)}")
    return p, float(f.derivative(p))


def canonical_project(system: IfsSystem, prefix):
    """``f_prefix(0)`` and the error bound ``diam f_prefix(domain)``."""
    prefix = parse_word(prefix)
    if not prefix:
        raise ValueError("prefix must be non-empty")
    f = compose_word(system, prefix)
    if system.dim == 1:
        return float(f(0.0)), f.diameter()
    return f(np.zeros(2)), f.diameter()


def _image_box(system: IfsSystem, f):
    if system.dim == 1:
        return (f.image(*system.domain),)
    return f.image(system.domain)


def _meets_ball(box, x, r) -> bool:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return all(lo <= xi + r and hi >= xi - r for (lo, hi), xi in zip(box, x))


def stopping_cover(system: IfsSystem, x, t: float) -> list[Word]:
    """Words with ``diam f_i(D) <= 2^-t < diam f_{i-}(D)`` whose image meets ``B(x, 2^-t)``.

    ``D`` is the system domain.  The sandwich condition on the parent is vacuous
    for single symbols.  Balls use the max metric in 2-D.
    """
    r = 2.0 ** (-t)
    out: list[Word] = []
    stack: list[tuple[Word, object]] = [((s,), system.maps[s]) for s in reversed(range(system.size))]
    while stack:
        word, f = stack.pop()
        if not _meets_ball(_image_box(system, f), x, r):
            continue
        if f.diameter() <= r * (1 + REL_TOL):
            out.append(word)
            continue
        for s in reversed(range(system.size)):
            stack.append((word + (s,), f.compose(system.maps[s])))
    return out


# ---- arithmetic independence ------------------------------------------------


@dataclass
class GapResult:
    gap: float
    pair: tuple
    shrank: bool | None = None
    doubled_gap: float | None = None
    bounds: tuple = ()


ZERO_TOL = 1e-9


def _affine_log_ratios(values: np.ndarray, max_len: int):
    """All sums of ``1..max_len`` entries of ``values`` (with repetition), deduplicated.

    Returns the sums and, for each, a representative list of indices into ``values``.
    """
    uniq, first = np.unique(np.round(values, 13), return_index=True)
    uniq_vals = values[first]
    level = {0.0: ()}
    sums: dict[float, tuple] = {}
    for _ in range(max_len):
        nxt: dict[float, tuple] = {}
        for s, rep in level.items():
            for v, idx in zip(uniq_vals, first):
                key = round(s + v, 11)
                if key not in nxt:
                    nxt[key] = rep + (int(idx),)
        level = nxt
        for key, rep in nxt.items():
            sums.setdefault(key, rep)
    reps = list(sums.values())
    # exact sums from the representatives, not the rounded keys
    exact = np.array([math.fsum(values[list(rep)]) for rep in reps])
    return exact, reps


MAX_ENUMERATED_WORDS = 1 << 21


def _moebius_word_log_ratios(system: IfsSystem, max_len: int):
    total = sum(system.size**k for k in range(1, max_len + 1))
    if total > MAX_ENUMERATED_WORDS:
        raise ValueError(f"{total} words exceed the enumeration budget")
    mats = np.stack([m.matrix for m in system.maps])
    vals, reps = [], []
    cur = mats
    cur_words = [(s,) for s in range(system.size)]
    for length in range(1, max_len + 1):
        vals.append(np.log(_moebius_ratios(cur)))
        reps.extend(cur_words)
        if length == max_len:
            break
        cur = np.einsum("nij,sjk->nsik", cur, mats).reshape(-1, 2, 2)
        cur = cur / np.abs(cur).max(axis=(1, 2), keepdims=True)
        cur_words = [w + (s,) for w in cur_words for s in range(system.size)]
    return np.concatenate(vals), reps


def _moebius_ratios(mats: np.ndarray) -> np.ndarray:
    """``f'(p)`` at the attracting fixed point for a batch of 2x2 Moebius matrices."""
    a, b, c, d = mats[:, 0, 0], mats[:, 0, 1], mats[:, 1, 0], mats[:, 1, 1]
    det = a * d - b * c
    tr = a + d
    # (p, 1) is an eigenvector with eigenvalue cp + d, so f'(p) = det / (cp + d)^2;
    # at the attracting point cp + d is the dominant eigenvalue, giving mu_2 / mu_1
    disc = np.sqrt(np.maximum(tr * tr - 4 * det, 0.0))
    mu1 = (tr + np.sign(tr) * disc) / 2
    mu1 = np.where(mu1 == 0, 1e-300, mu1)
    mu2 = det / mu1
    return np.abs(mu2 / mu1)


def _log_ratio_set(system: IfsSystem, max_len: int, axis: int = 0):
    if system.dim == 2:
        vals = np.array([math.log(float(m.rho if axis == 0 else m.lam)) for m in system.maps])
        keys, reps = _affine_log_ratios(vals, max_len)
        return keys, reps
    if system.is_affine:
        vals = np.array([math.log(abs(float(m.a))) for m in system.maps])
        return _affine_log_ratios(vals, max_len)
    return _moebius_word_log_ratios(system, max_len)


def _nearest_nonzero(diffs_from: np.ndarray, targets: np.ndarray):
    """For each value in ``diffs_from`` find ``min |v - t|`` over ``targets`` ignoring near-zeros."""
    order = np.argsort(targets)
    st = targets[order]
    best = (np.inf, None, None)
    pos = np.searchsorted(st, diffs_from)
    for off in (-2, -1, 0, 1):
        idx = np.clip(pos + off, 0, len(st) - 1)
        gaps = np.abs(diffs_from - st[idx])
        gaps = np.where(gaps < ZERO_TOL, np.inf, gaps)
        k = int(np.argmin(gaps))
        if gaps[k] < best[0]:
            best = (float(gaps[k]), k, int(order[idx[k]]))
    return best


def _gap_once(mode, A, B, word_bound, multiplier_bound):
    if mode == "ifs-vs-beta":
        vals, reps = _log_ratio_set(A, word_bound)
        logb = math.log(float(B))
        targets = -logb * np.arange(1, multiplier_bound + 1)
        gap, i, j = _nearest_nonzero(vals, targets)
        return gap, (reps[i] if i is not None else None, j + 1 if j is not None else None)
    if mode == "ifs-vs-ifs":
        va, ra = _log_ratio_set(A, word_bound)
        vb, rb = _log_ratio_set(B, multiplier_bound)
        gap, i, j = _nearest_nonzero(va, vb)
        return gap, (ra[i] if i is not None else None, rb[j] if j is not None else None)
    if mode == "eigenvalues":
        vy, ry = _log_ratio_set(A, word_bound, axis=1)
        vx, rx = _log_ratio_set(A, multiplier_bound, axis=0)
        gap, i, j = _nearest_nonzero(vy, vx)
        return gap, (ry[i] if i is not None else None, rx[j] if j is not None else None)
    raise ValueError(f"unknown mode {mode!r}")


def arithmetic_independence_gap(mode: str, A: IfsSystem, B=None, word_bound: int = 8,
                                multiplier_bound: int = 8, check_doubling: bool = True) -> GapResult:
    """Smallest non-zero value of the independence sets over a bounded search.

    Modes:

    ``ifs-vs-beta``
        ``|log lambda(f_i) + n log beta|`` with ``|i| <= word_bound`` and
        ``1 <= n <= multiplier_bound``; ``B`` is ``beta``.
    ``ifs-vs-ifs``
        ``|log lambda(f_i) - log lambda(g_j)|`` with ``|i| <= word_bound`` in ``A`` and
        ``|j| <= multiplier_bound`` in ``B``.
    ``eigenvalues``
        ``|log lam_i - log rho_j|`` for a diagonal system ``A``, ``|i| <= word_bound``,
        ``|j| <= multiplier_bound``.

    Values below ``1e-9`` count as exact zeros and are excluded.  With
    ``check_doubling`` the search is repeated with both bounds doubled and
    ``shrank`` reports whether the gap decreased.  The pair identifies the
    achieving words as symbol tuples (representatives for affine systems).
    """
    if word_bound < 1 or multiplier_bound < 1:
        raise ValueError("bounds must be >= 1")
    gap, pair = _gap_once(mode, A, B, word_bound, multiplier_bound)
    res = GapResult(gap, pair, bounds=(word_bound, multiplier_bound))
    if check_doubling:
        try:
            g2, _ = _gap_once(mode, A, B, 2 * word_bound, 2 * multiplier_bound)
        except ValueError:
            return res
        res.doubled_gap = g2
        res.shrank = bool(g2 < gap * (1 - 1e-9))
    return res


def quasi_bernoulli_constant(system: IfsSystem, max_word_length: int) -> float:
    """``max mu[ij] / (mu[i] mu[j])`` and its inverse over ``|i|, |j| <= max_word_length``."""
    k = system.size
    words = [w for n in range(1, max_word_length + 1) for w in itertools.product(range(k), repeat=n)]
    mass = {w: system.word_mass(w) for w in words}
    best = 1.0
    for i in words:
        mi = mass[i]
        for j in words:
            mij = system.word_mass(i + j)
            prod = mi * mass[j]
            if mij <= 0 or prod <= 0:
                raise ValueError(f"degenerate weights on {i}, {j}")
            best = max(best, mij / prod, prod / mij)
    return best


def rectangular_ssc_check(system: IfsSystem):
    """Pairwise disjointness of the closed image rectangles ``f_i([-1,1]^2)``."""
    if system.dim != 2:
        raise TypeError("rectangular separation is defined for diagonal 2-D systems")
    rects = [m.image(UNIT_SQUARE) for m in system.maps]
    for i, j in itertools.combinations(range(len(rects)), 2):
        (ax0, ax1), (ay0, ay1) = rects[i]
        (bx0, bx1), (by0, by1) = rects[j]
        if ax0 <= bx1 and bx0 <= ax1 and ay0 <= by1 and by0 <= ay1:
            return False, (i, j)
    return True, None
