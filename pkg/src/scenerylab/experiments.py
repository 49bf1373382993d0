"""Desk-scale experiments: dimensions, convolutions, orbits of ``x -> beta x mod 1``, projections.

Every experiment returns an :class:`ExperimentReport` whose rows carry the
scale or point they were computed at and whose summary holds the verdicts.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from .beta import (
    ParryMeasure,
    PrecisionError,
    beta_orbit,
    discrepancy,
    is_integer_beta,
    orbit_digits,
    parse_beta,
    required_bits,
    to_fixed,
)
from .ifs import (
    UNIT_SQUARE,
    DiagonalAffine,
    IfsSystem,
    arithmetic_independence_gap,
    rectangular_ssc_check,
)
from .measure import (
    DyadicMeasure,
    SupportError,
    convolve,
    discretize,
    ifs_ball_mass,
    product,
    project,
    sample_points,
    symbolic_cells,
)
from .metrics import MeasureDistribution, lp_distance, shannon_entropy

LOG2 = math.log(2.0)


class SeparationError(ValueError):
    """The rectangular strong separation condition fails; ``witness`` is the overlapping pair."""

    def __init__(self, witness):
        super().__init__(f"image rectangles of maps {witness[0]} and {witness[1]} intersect")
        self.witness = witness


@dataclass
class ExperimentReport:
    name: str
    config: dict
    seed: int | None
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# dimension estimates


@dataclass
class DimensionEstimate:
    slope: float
    rows: list

    def __float__(self):
        return self.slope


def entropy_dimension(mu: DyadicMeasure, n_list=None) -> DimensionEstimate:
    """Least-squares slope of ``H(mu, D_n)`` against ``n log 2``.

    ``n_list`` defaults to the upper half of the available levels.  Each row
    also reports the single-level ratio ``H / (n log 2)``.
    """
    if n_list is None:
        n_list = range(max(1, mu.level // 2), mu.level + 1)
    n = np.array(sorted(set(int(k) for k in n_list)))
    if n.max() > mu.level:
        raise ValueError(f"level {n.max()} exceeds the measure level {mu.level}")
    H = np.array([shannon_entropy(mu, int(k)) for k in n])
    x = n * LOG2
    slope = float(np.polyfit(x, H, 1)[0]) if len(n) > 1 else float(H[0] / x[0])
    rows = [{"n": int(k), "entropy": float(h), "ratio": float(h / (k * LOG2))} for k, h in zip(n, H)]
    return DimensionEstimate(slope, rows)


def _grid_ball_mass(mu: DyadicMeasure, x: float, r: float) -> float:
    """Mass of ``[x - r, x + r]`` with mass spread uniformly inside each cell."""
    h = mu.cell_width
    lo = mu.index * h
    ov = np.clip(np.minimum(lo + h, x + r) - np.maximum(lo, x - r), 0.0, h)
    return float((mu.mass * ov / h).sum())


def local_dimension(mu, x, scales) -> DimensionEstimate:
    """Slope of ``log mu(B(x, 2^-t))`` against ``-t log 2`` over ``scales``.

    IFS measures are evaluated symbolically at any real ``t``; grid measures
    (1-D) spread each cell's mass uniformly.
    """
    t = np.asarray(scales, float)
    if isinstance(mu, IfsSystem):
        masses = np.array([ifs_ball_mass(mu, x, s) for s in t])
    else:
        if mu.dim != 1:
            raise ValueError("grid local dimension is implemented in 1-D")
        masses = np.array([_grid_ball_mass(mu, float(x), 2.0 ** (-s)) for s in t])
    if np.any(masses <= 0):
        bad = float(t[np.argmax(masses <= 0)])
        raise SupportError(f"B({x}, 2^-{bad}) carries no mass")
    lx, ly = -t * LOG2, np.log(masses)
    slope = float(np.polyfit(lx, ly, 1)[0]) if len(t) > 1 else float(ly[0] / lx[0])
    rows = [{"scale": float(s), "ball_mass": float(m)} for s, m in zip(t, masses)]
    return DimensionEstimate(slope, rows)


# ---------------------------------------------------------------------------
# convolutions


def dissonance_experiment(A: IfsSystem, B: IfsSystem, depth: int, word_bound: int = 8,
                          multiplier_bound: int = 8, tolerance: float = 0.03,
                          discretizer=discretize) -> ExperimentReport:
    """Entropy dimensions of ``mu``, ``nu`` and ``mu * nu`` against ``min(1, dim mu + dim nu)``.

    ``discretizer(system, depth)`` may be replaced, e.g. by a caching version.
    """
    if A.dim != 1 or B.dim != 1:
        raise ValueError("dissonance needs two 1-D systems")
    mu = discretizer(A, depth)
    nu = discretizer(B, depth)
    conv = convolve(mu, nu)
    dA, dB, dC = entropy_dimension(mu), entropy_dimension(nu), entropy_dimension(conv)
    gap = arithmetic_independence_gap("ifs-vs-ifs", A, B, word_bound, multiplier_bound)
    predicted = min(1.0, dA.slope + dB.slope)
    rows = []
    for label, est in (("mu", dA), ("nu", dB), ("convolution", dC)):
        rows += [{"measure": label, "depth": depth, **r} for r in est.rows]
    summary = {
        "dim_mu": dA.slope,
        "dim_nu": dB.slope,
        "dim_convolution": dC.slope,
        "predicted": predicted,
        "deficit": predicted - dC.slope,
        "tolerance": tolerance,
        "dissonant": bool(dC.slope >= predicted - tolerance),
        "independence_gap": gap.gap,
        "gap_shrank": gap.shrank,
    }
    return ExperimentReport("dissonance", {"depth": depth, "word_bound": word_bound,
                                           "multiplier_bound": multiplier_bound}, None, rows, summary)


# ---------------------------------------------------------------------------
# normality


def _apply_exact(h, x: Fraction) -> Fraction:
    a, b, c, d = (Fraction(v) for v in h.coefficients)
    return (a * x + b) / (c * x + d)


def normality_experiment(system: IfsSystem, h=None, beta=2, point_count: int = 20, orbit_length: int = 2000,
                         precision_bits: int = 4096, seed: int = 0, checkpoints=None, word_bound: int = 12,
                         multiplier_bound: int = 19) -> ExperimentReport:
    """Discrepancy of ``beta``-orbits started at ``h``-images of points of ``mu``.

    Points are sampled symbolically as exact fractions, mapped through ``h``
    (a Moebius map, identity by default) and iterated in fixed point.  The
    reference law is Lebesgue for integer ``beta`` and the Parry measure
    otherwise.  Each checkpoint row holds the star and extreme discrepancy of
    the orbit prefix; ``improved`` compares the last checkpoint with the first.
    """
    need = required_bits(beta, orbit_length)
    if precision_bits < need:
        raise PrecisionError(need, precision_bits)
    if checkpoints is None:
        checkpoints = (max(1, orbit_length // 10), orbit_length)
    checkpoints = sorted(set(int(c) for c in checkpoints))
    integer = is_integer_beta(beta)
    cdf = None if integer else ParryMeasure(beta).cdf
    points = sample_points(system, point_count, seed, precision_bits=precision_bits)
    rows, improved, final = [], [], []
    for i, x in enumerate(points):
        y = x if h is None else _apply_exact(h, x)
        X = to_fixed(y, precision_bits)
        orbit = beta_orbit(X, beta, orbit_length, precision_bits)
        per = []
        for c in checkpoints:
            D = discrepancy(orbit[:c], cdf)
            per.append(D)
            rows.append({"point": i, "start": orbit_digits(X, precision_bits), "orbit_length": c,
                         "star": D.star, "extreme": D.extreme, "seed": seed})
        improved.append(per[-1].extreme < per[0].extreme)
        final.append(per[-1].extreme)
    gap = arithmetic_independence_gap("ifs-vs-beta", system, float(parse_beta(beta, 64)), word_bound,
                                      multiplier_bound)
    summary = {
        "reference": "lebesgue" if integer else "parry",
        "improved_fraction": float(np.mean(improved)),
        "min_final_discrepancy": float(np.min(final)),
        "max_final_discrepancy": float(np.max(final)),
        "independence_gap": gap.gap,
        "gap_shrank": gap.shrank,
        "nonlinearity": "assumed",
    }
    config = {"beta": str(beta), "point_count": point_count, "orbit_length": orbit_length,
              "precision_bits": precision_bits, "checkpoints": checkpoints}
    return ExperimentReport("normality", config, seed, rows, summary)


# ---------------------------------------------------------------------------
# diagonal self-affine systems


@dataclass
class LyapunovSpectrum:
    chi_x: float
    chi_y: float
    simple: bool
    major_axis: str | None

    def __iter__(self):
        return iter((self.chi_x, self.chi_y, self.simple))


def lyapunov_spectrum(system: IfsSystem) -> LyapunovSpectrum:
    """Weighted contraction exponents of a Bernoulli diagonal system.

    ``major_axis`` names the more strongly contracted coordinate.
    """
    if system.dim != 2:
        raise ValueError("Lyapunov exponents are defined for diagonal 2-D systems")
    if not system.is_bernoulli:
        raise ValueError("Bernoulli weights required")
    p = system.weights.initial
    chi_x = -float(sum(w * math.log(float(m.rho)) for w, m in zip(p, system.maps)))
    chi_y = -float(sum(w * math.log(float(m.lam)) for w, m in zip(p, system.maps)))
    simple = abs(chi_x - chi_y) > 1e-9
    major = ("y" if chi_y > chi_x else "x") if simple else None
    return LyapunovSpectrum(chi_x, chi_y, simple, major)


def strip_measure(system: IfsSystem, x0: float, r: float, level: int) -> DyadicMeasure:
    """``mu`` restricted to the vertical strip ``|x - x0| <= 2^-r``, x rescaled onto ``[-1, 1]``.

    ``x0`` is snapped to the grid of spacing ``2^-(level + r)`` so that frame
    cells pull back to dyadic cells; the shift is below one frame cell.
    """
    s = 2.0**r
    grid = 2.0 ** (level + r)
    x0 = round(x0 * grid) / grid
    cells, mass, _ = symbolic_cells(system, level, UNIT_SQUARE, outer=DiagonalAffine(s, 1.0, -s * x0, 0.0))
    if mass.sum() <= 0:
        raise SupportError(f"strip at x={x0}, r={r} carries no mass")
    return DyadicMeasure(cells, mass, level, UNIT_SQUARE, normalize=True)


def product_structure_distance(system: IfsSystem, x0: float, r: float, level: int = 10,
                               fiber_scale: float | None = None) -> float:
    """LP distance between a strip of ``mu`` and the product of its x-marginal with the fiber at ``x0``.

    The fiber measure is the y-marginal of a strip of width ``2^-fiber_scale``,
    by default a few levels narrower than one frame cell.
    """
    if fiber_scale is None:
        fiber_scale = level + 4
    strip = strip_measure(system, x0, r, level)
    fiber = strip_measure(system, x0, fiber_scale, level).marginal(1)
    return lp_distance(strip, product(strip.marginal(0), fiber))


def projection_experiment(system: IfsSystem, thetas, depth: int, radii=(2, 4, 6), point_count: int = 8,
                          seed: int = 0, strip_level: int = 10, tolerance: float = 0.05,
                          word_bound: int = 8, multiplier_bound: int = 8,
                          discretizer=discretize) -> ExperimentReport:
    """Projected entropy dimensions and the strip product-structure check.

    Refuses systems failing the rectangular separation check.  Angles
    ``0`` and ``pi/2`` are reported but excluded from the verdict.
    """
    ok, witness = rectangular_ssc_check(system)
    if not ok:
        raise SeparationError(witness)
    gap = arithmetic_independence_gap("eigenvalues", system, None, word_bound, multiplier_bound)
    mu = discretizer(system, depth)
    dim_mu = entropy_dimension(mu).slope
    target = min(1.0, dim_mu)
    rows, verdicts = [], []
    for theta in thetas:
        d = entropy_dimension(project(mu, float(theta))).slope
        principal = min(abs(theta), abs(theta - math.pi / 2)) < 1e-12
        ok_theta = abs(d - target) < tolerance
        if not principal:
            verdicts.append(ok_theta)
        rows.append({"kind": "projection", "theta": float(theta), "depth": depth, "dim": d,
                     "principal": principal, "within_tolerance": bool(ok_theta)})
    pts = sample_points(system, point_count, seed)
    table = np.zeros((len(radii), len(pts)))
    for a, r in enumerate(radii):
        for i, p in enumerate(pts):
            table[a, i] = product_structure_distance(system, float(p[0]), r, strip_level)
            rows.append({"kind": "product_structure", "point": i, "x": float(p[0]), "r": r,
                         "distance": float(table[a, i]), "seed": seed})
    means = [float(v) for v in table.mean(axis=1)]
    per_point = np.all(np.diff(table, axis=0) < 0, axis=0) if len(radii) > 1 else np.ones(len(pts), bool)
    spectrum = lyapunov_spectrum(system) if system.is_bernoulli else None
    summary = {
        "dim_mu": dim_mu,
        "target": target,
        "projections_ok": bool(all(verdicts)) if verdicts else None,
        "product_distance_means": means,
        "product_distance_decreasing": bool(all(b < a for a, b in zip(means, means[1:]))),
        "points_decreasing_fraction": float(per_point.mean()),
        "eigenvalue_gap": gap.gap,
        "gap_shrank": gap.shrank,
        "lyapunov": None if spectrum is None else asdict(spectrum),
    }
    config = {"thetas": [float(t) for t in thetas], "depth": depth, "radii": list(radii),
              "point_count": point_count, "strip_level": strip_level, "tolerance": tolerance}
    return ExperimentReport("projection", config, seed, rows, summary)


def expected_projected_dimension(P: MeasureDistribution, theta: float) -> float:
    """``sum_mu P(mu) dim pi_theta mu`` with entropy dimensions of the projected atoms."""
    return float(sum(w * entropy_dimension(project(mu, theta)).slope for mu, w in zip(P.atoms, P.weights)))
