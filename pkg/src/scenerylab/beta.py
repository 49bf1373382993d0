"""The beta-transformation ``x -> beta x mod 1``: invariant density, exact orbits, discrepancy.

Orbits are run on fixed-point integers ``X = floor(x 2^P)``.  For integer
``beta`` the step ``X -> beta X mod 2^P`` is exact and loses ``log2 beta``
significant bits per iteration; for other ``beta`` the multiplier is the
rounded fixed-point value of ``beta``.  The precision budget ``P`` must cover
the orbit length plus 64 guard bits.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass
from fractions import Fraction

import mpmath
import numpy as np

GUARD_BITS = 64


class PrecisionError(ValueError):
    """The precision budget cannot carry the requested orbit."""

    def __init__(self, required_bits: int, available_bits: int):
        super().__init__(f"orbit needs {required_bits} bits of precision, {available_bits} given")
        self.required_bits = required_bits
        self.available_bits = available_bits


def parse_beta(beta, prec_bits: int = 256):
    """``beta`` as an mpmath number; strings such as ``"(1+sqrt(5))/2"`` are evaluated at ``prec_bits``."""
    with mpmath.workprec(prec_bits):
        if isinstance(beta, str):
            text = beta.strip().lower()
            if text in ("golden", "phi"):
                return (1 + mpmath.sqrt(5)) / 2
            return mpmath.mpf(_evaluate(ast.parse(text, mode="eval").body))
        if isinstance(beta, Fraction):
            return mpmath.mpf(beta.numerator) / beta.denominator
        return mpmath.mpf(beta)


_FUNCS = {"sqrt": mpmath.sqrt, "log": mpmath.log, "exp": mpmath.exp}
_BINOPS = {ast.Add: lambda a, b: a + b, ast.Sub: lambda a, b: a - b, ast.Mult: lambda a, b: a * b,
           ast.Div: lambda a, b: a / b, ast.Pow: lambda a, b: a**b}


def _evaluate(node):
    """Arithmetic expressions with ``sqrt``, ``log``, ``exp`` and ``pi`` only."""
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return mpmath.mpf(node.value) if isinstance(node.value, int) else mpmath.mpf(repr(node.value))
    if isinstance(node, ast.Name) and node.id == "pi":
        return +mpmath.pi
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_evaluate(node.left), _evaluate(node.right))
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _evaluate(node.operand)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS and len(node.args) == 1:
        return _FUNCS[node.func.id](_evaluate(node.args[0]))
    raise ValueError(f"unsupported expression for beta: {ast.dump(node)}")


def is_integer_beta(beta) -> bool:
    b = parse_beta(beta, 128)
    return abs(b - mpmath.nint(b)) < mpmath.mpf(2) ** -100


def required_bits(beta, orbit_length: int) -> int:
    return int(math.ceil(orbit_length * math.log2(float(parse_beta(beta, 64))))) + GUARD_BITS


# ---------------------------------------------------------------------------
# Parry measure


class ParryMeasure:
    """Invariant density of the beta-transformation, truncated to ``N`` terms.

    ``density(x) = (1/Z) sum_{n < N, x < T^n 1} beta^-n`` where the normalizing
    constant ``Z = sum_{n < N} beta^-n T^n(1)`` is the exact integral of the
    truncated sum.  ``truncation_error = beta^-N / (1 - 1/beta)``.
    """

    def __init__(self, beta, truncation: int = 64, prec_bits: int | None = None):
        if truncation < 1:
            raise ValueError("truncation must be >= 1")
        b = parse_beta(beta, 64)
        if not b > 1:
            raise ValueError("beta must exceed 1")
        prec = prec_bits or int(truncation * math.log2(float(b))) + 128
        with mpmath.workprec(prec):
            B = parse_beta(beta, prec)
            snap = mpmath.mpf(2) ** (-(prec - 64))
            orbit = []
            y = mpmath.mpf(1)
            for _ in range(truncation):
                orbit.append(y)
                z = B * y
                n = mpmath.nint(z)
                # values within round-off of an integer are that integer
                z = n if abs(z - n) < snap else z
                y = z - mpmath.floor(z)
                if y == 0:
                    break
            self.orbit = np.array([float(v) for v in orbit])
            self.beta = float(B)
            self._weights = np.array([float(B ** (-n)) for n in range(len(orbit))])
            self.Z = float(mpmath.fsum(B ** (-n) * v for n, v in enumerate(orbit)))
        self.truncation = truncation
        self.truncation_error = float(self.beta ** (-truncation) / (1 - 1 / self.beta))

    def density(self, x):
        x = np.asarray(x, float)
        mask = x[..., None] < self.orbit
        return (mask * self._weights).sum(axis=-1) / self.Z

    def cdf(self, x):
        x = np.clip(np.asarray(x, float), 0.0, 1.0)
        return (np.minimum(x[..., None], self.orbit) * self._weights).sum(axis=-1) / self.Z

    def transfer(self, x):
        """``(L h)(x) = sum_j h((x + j) / beta) / beta`` over preimages in ``[0, 1)``."""
        x = np.asarray(x, float)
        out = np.zeros_like(x)
        for j in range(int(math.ceil(self.beta))):
            y = (x + j) / self.beta
            ok = y < 1
            out += np.where(ok, self.density(np.where(ok, y, 0.0)), 0.0) / self.beta
        return out


def parry_density(beta, x, truncation: int = 64) -> float:
    """Normalized invariant density of ``x -> beta x mod 1`` at ``x``."""
    return ParryMeasure(beta, truncation).density(x)


# ---------------------------------------------------------------------------
# orbits


def to_fixed(x: Fraction, bits: int) -> int:
    """``floor(x 2^bits)`` for ``x`` in ``[0, 1]`` (1 maps to the largest value)."""
    X = (x.numerator << bits) // x.denominator
    return min(max(X, 0), (1 << bits) - 1)


def beta_orbit(X0: int, beta, length: int, bits: int) -> np.ndarray:
    """First ``length`` orbit points (as floats) of ``X0 / 2^bits`` under ``x -> beta x mod 1``."""
    need = required_bits(beta, length)
    if bits < need:
        raise PrecisionError(need, bits)
    mask = (1 << bits) - 1
    out = np.empty(length)
    X = X0
    drop = max(bits - 53, 0)
    if is_integer_beta(beta):
        b = int(mpmath.nint(parse_beta(beta, 64)))
        for n in range(length):
            out[n] = (X >> drop) / 2.0 ** (bits - drop)
            X = (X * b) & mask
    else:
        with mpmath.workprec(bits + GUARD_BITS):
            B = int(mpmath.nint(parse_beta(beta, bits + GUARD_BITS) * mpmath.mpf(2) ** bits))
        for n in range(length):
            out[n] = (X >> drop) / 2.0 ** (bits - drop)
            X = ((X * B) >> bits) & mask
    return out


def orbit_digits(X: int, bits: int, digits: int = 12) -> str:
    """Decimal rendering of ``X / 2^bits`` to ``digits`` places."""
    scaled = (X * 10**digits) >> bits
    return f"0.{scaled:0{digits}d}"


# ---------------------------------------------------------------------------
# discrepancy


@dataclass
class Discrepancy:
    star: float
    extreme: float


def discrepancy(points, cdf=None) -> Discrepancy:
    """Star and extreme (interval) discrepancy of ``points`` against a continuous law.

    With ``D+ = max(i/N - F(x_(i)))`` and ``D- = max(F(x_(i)) - (i-1)/N)``, the star
    discrepancy is ``max(D+, D-)`` and the extreme discrepancy, the sup over
    all intervals, is ``D+ + D-``.
    """
    x = np.sort(np.asarray(points, float))
    n = len(x)
    if n == 0:
        raise ValueError("no points")
    F = x if cdf is None else np.asarray(cdf(x), float)
    i = np.arange(1, n + 1)
    dplus = float(np.max(i / n - F))
    dminus = float(np.max(F - (i - 1) / n))
    dplus, dminus = max(dplus, 0.0), max(dminus, 0.0)
    return Discrepancy(max(dplus, dminus), dplus + dminus)
