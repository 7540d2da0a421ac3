"""Exact scalars of the form sum of c * e^(h/2) and certified comparisons.

Squared lengths and covolumes along the diagonal flow are Laurent
polynomials in e with rational coefficients.  Since e is transcendental,
such a value is zero iff every coefficient is zero, and a nonzero value
has a sign that interval arithmetic can certify at some finite precision.
That is what makes threshold comparisons like "is this vector 1/M-short
at step n" decidable instead of a floating-point guess.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Union

import mpmath

__all__ = [
    "Cmp",
    "ExpSum",
    "ExactScale",
    "PrecisionConfig",
    "PrecisionError",
    "Threshold",
    "parse_scale",
    "DEFAULT_PRECISION",
]


class PrecisionError(ArithmeticError):
    """A comparison could not be certified at the configured precision."""


class Cmp:
    """Outcome of a threshold comparison."""

    LT = -1
    EQ = 0
    GT = 1
    UNCERTAIN = 2


@dataclass(frozen=True)
class PrecisionConfig:
    """Working precision and comparison policy.

    tolerance is the relative band around a threshold inside which an
    inexact comparison is reported as uncertain instead of resolved.
    """

    mantissa_bits: int = 128
    tolerance: float = 2.0 ** -40
    policy: str = "flag-uncertain"  # or "strict"

    def __post_init__(self):
        if self.mantissa_bits < 64:
            raise ValueError("mantissa_bits must be >= 64")
        if not self.tolerance > 2.0 ** (3 - self.mantissa_bits):
            raise ValueError("tolerance must exceed 2^(3 - mantissa_bits)")
        if self.policy not in ("flag-uncertain", "strict"):
            raise ValueError(f"unknown comparison policy {self.policy!r}")


DEFAULT_PRECISION = PrecisionConfig()

_MAX_SIGN_BITS = 8192


def _ln_fraction(c: Fraction) -> float:
    """Natural log of |c| for a nonzero rational, overflow-safe."""
    return (math.log2(abs(c.numerator)) - math.log2(c.denominator)) * math.log(2.0)


class ExpSum:
    """Exact finite sum of terms c_h * e^(h/2) with rational c_h.

    Immutable value type; supports ring operations and certified sign.
    """

    __slots__ = ("terms",)

    def __init__(self, terms: dict[int, Fraction] | None = None):
        clean: dict[int, Fraction] = {}
        if terms:
            for h, c in terms.items():
                c = Fraction(c)
                if c:
                    clean[int(h)] = c
        object.__setattr__(self, "terms", clean)

    def __setattr__(self, *a):  # pragma: no cover
        raise AttributeError("ExpSum is immutable")

    @classmethod
    def rational(cls, c) -> "ExpSum":
        return cls({0: Fraction(c)})

    @classmethod
    def single(cls, coeff, half_exponent: int) -> "ExpSum":
        """coeff * e^(half_exponent / 2)."""
        return cls({half_exponent: Fraction(coeff)})

    @classmethod
    def of_terms(cls, *terms) -> "ExpSum":
        """Sum of (coeff, half_exponent) pairs; colliding exponents add."""
        acc: dict[int, Fraction] = {}
        for coeff, half in terms:
            h = int(half)
            acc[h] = acc.get(h, Fraction(0)) + Fraction(coeff)
        return cls(acc)

    def is_zero(self) -> bool:
        return not self.terms

    def __bool__(self) -> bool:
        return bool(self.terms)

    def __eq__(self, other) -> bool:
        if isinstance(other, ExpSum):
            return self.terms == other.terms
        return NotImplemented

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def __add__(self, other: "ExpSum") -> "ExpSum":
        out = dict(self.terms)
        for h, c in other.terms.items():
            out[h] = out.get(h, Fraction(0)) + c
        return ExpSum(out)

    def __sub__(self, other: "ExpSum") -> "ExpSum":
        out = dict(self.terms)
        for h, c in other.terms.items():
            out[h] = out.get(h, Fraction(0)) - c
        return ExpSum(out)

    def __neg__(self) -> "ExpSum":
        return ExpSum({h: -c for h, c in self.terms.items()})

    def __mul__(self, other: Union["ExpSum", Fraction, int]) -> "ExpSum":
        if isinstance(other, ExpSum):
            out: dict[int, Fraction] = {}
            for h1, c1 in self.terms.items():
                for h2, c2 in other.terms.items():
                    h = h1 + h2
                    out[h] = out.get(h, Fraction(0)) + c1 * c2
            return ExpSum(out)
        return ExpSum({h: c * Fraction(other) for h, c in self.terms.items()})

    __rmul__ = __mul__

    def shift(self, half_exponent: int) -> "ExpSum":
        """Multiply by e^(half_exponent / 2)."""
        return ExpSum({h + half_exponent: c for h, c in self.terms.items()})

    def scale(self, c) -> "ExpSum":
        return self * Fraction(c)

    # -- evaluation ------------------------------------------------------

    def to_float(self) -> float:
        """Double evaluation, normalized so huge exponents do not overflow."""
        if not self.terms:
            return 0.0
        logs = {h: _ln_fraction(c) + 0.5 * h for h, c in self.terms.items()}
        top = max(logs.values())
        total = 0.0
        for h, c in self.terms.items():
            total += math.copysign(math.exp(logs[h] - top), c)
        if total == 0.0:
            return 0.0
        lt = top + math.log(abs(total))
        if lt > 709.0:
            return math.copysign(math.inf, total)
        if lt < -745.0:
            return math.copysign(0.0, total)
        return math.copysign(math.exp(lt), total)

    def to_mpf(self, bits: int = 128):
        with mpmath.workprec(bits):
            total = mpmath.mpf(0)
            for h, c in self.terms.items():
                t = mpmath.mpf(c.numerator) / c.denominator
                total += t * mpmath.exp(mpmath.mpf(h) / 2)
            return +total

    def sign(self) -> int:
        """Certified sign: -1, 0, +1.  Exact zero iff no terms."""
        if not self.terms:
            return 0
        if len(self.terms) == 1:
            return 1 if next(iter(self.terms.values())) > 0 else -1
        # Fast path: float64 with a conservative error envelope.
        logs = []
        for h, c in self.terms.items():
            logs.append((_ln_fraction(c) + 0.5 * h, 1 if c > 0 else -1))
        top = max(lg for lg, _ in logs)
        total = 0.0
        absum = 0.0
        for lg, sg in logs:
            t = math.exp(lg - top)
            total += sg * t
            absum += t
        # float64 round-off ~ eps per op; 2^-40 envelope is generous.
        if abs(total) > absum * 2.0 ** -40:
            return 1 if total > 0 else -1
        # Certified path: interval arithmetic, escalating precision.
        bits = 128
        while bits <= _MAX_SIGN_BITS:
            iv = mpmath.iv
            old = iv.prec
            try:
                iv.prec = bits
                acc = iv.mpf(0)
                for h, c in self.terms.items():
                    t = iv.mpf(c.numerator) / iv.mpf(c.denominator)
                    acc += t * iv.exp(iv.mpf(h) / 2)
                if acc.a > 0:
                    return 1
                if acc.b < 0:
                    return -1
            finally:
                iv.prec = old
            bits *= 2
        raise PrecisionError(
            "sign of nonzero exponential sum not certified at "
            f"{_MAX_SIGN_BITS} bits; increase mantissa bits"
        )

    def cmp(self, other: "ExpSum") -> int:
        return (self - other).sign()

    def __repr__(self):
        if not self.terms:
            return "ExpSum(0)"
        bits = []
        for h in sorted(self.terms):
            c = self.terms[h]
            if h == 0:
                bits.append(f"{c}")
            elif h % 2 == 0:
                bits.append(f"{c}*e^{h // 2}")
            else:
                bits.append(f"{c}*e^({h}/2)")
        return "ExpSum(" + " + ".join(bits) + ")"


@dataclass(frozen=True)
class ExactScale:
    """Exact positive scale c * e^(half/2), c a positive rational.

    Covers every threshold the experiments use: plain rationals and
    rational multiples of half-integer powers of e.
    """

    coeff: Fraction
    half: int = 0

    def __post_init__(self):
        object.__setattr__(self, "coeff", Fraction(self.coeff))
        if self.coeff <= 0:
            raise ValueError("scale must be positive")

    def as_expsum(self) -> ExpSum:
        return ExpSum.single(self.coeff, self.half)

    def sq(self) -> ExpSum:
        return ExpSum.single(self.coeff * self.coeff, 2 * self.half)

    def inv_sq(self) -> ExpSum:
        return ExpSum.single(1 / (self.coeff * self.coeff), -2 * self.half)

    def __float__(self) -> float:
        return self.as_expsum().to_float()

    def cmp_rational(self, q) -> int:
        return (self.as_expsum() - ExpSum.rational(q)).sign()

    def __repr__(self):
        if self.half == 0:
            return f"ExactScale({self.coeff})"
        return f"ExactScale({self.coeff}*e^({self.half}/2))"


_SCALE_RE = re.compile(
    r"""^\s*
    (?:(?P<coeff>[+-]?\d+(?:\.\d+)?(?:/\d+)?)\s*\*?\s*)?
    (?:e\s*(?:\^|\*\*)?\s*(?P<exp>[+-]?\d+(?:\.5)?(?:/2)?))?
    \s*$""",
    re.VERBOSE | re.IGNORECASE,
)


def parse_scale(text: str | float | int | Fraction | ExactScale) -> ExactScale:
    """Parse an exact scale: "2", "5/2", "0.25", "e3", "e^-2", "3*e^1.5".

    Exponents must be integers or half-integers.  Floats are accepted and
    converted to the exact rational they denote.
    """
    if isinstance(text, ExactScale):
        return text
    if isinstance(text, (int, Fraction)):
        return ExactScale(Fraction(text))
    if isinstance(text, float):
        return ExactScale(Fraction(text))
    m = _SCALE_RE.match(text)
    if not m or (m.group("coeff") is None and m.group("exp") is None):
        raise ValueError(f"cannot parse scale {text!r}")
    coeff = Fraction(1)
    if m.group("coeff"):
        coeff = Fraction(m.group("coeff"))
    half = 0
    if m.group("exp") is not None:
        e = m.group("exp")
        if e.endswith("/2"):
            half = int(e[:-2])
        elif e.endswith(".5") or e.endswith(".5-"):
            half = int(2 * Fraction(e))
        else:
            half = 2 * int(e)
    return ExactScale(coeff, half)


class Threshold:
    """A squared comparison threshold, exact when possible.

    Exact thresholds ("M = e^5") give trichotomous comparisons; float
    thresholds fall back to tolerance-banded comparisons under the
    configured policy.
    """

    __slots__ = ("sq_exact", "sq_float", "config")

    def __init__(self, scale, config: PrecisionConfig = DEFAULT_PRECISION):
        self.config = config
        if isinstance(scale, ExpSum):
            # already a squared value
            self.sq_exact = scale
            self.sq_float = scale.to_float()
        elif isinstance(scale, (ExactScale, str, int, Fraction)):
            s = parse_scale(scale)
            self.sq_exact = s.sq()
            self.sq_float = self.sq_exact.to_float()
        elif isinstance(scale, float):
            self.sq_exact = None
            self.sq_float = scale * scale
        else:
            raise TypeError(f"unsupported threshold {scale!r}")

    @classmethod
    def from_sq(cls, sq, config: PrecisionConfig = DEFAULT_PRECISION) -> "Threshold":
        t = cls.__new__(cls)
        t.config = config
        if isinstance(sq, ExpSum):
            t.sq_exact = sq
            t.sq_float = sq.to_float()
        else:
            t.sq_exact = None
            t.sq_float = float(sq)
        return t

    def cmp_sq(self, sq: ExpSum | float) -> int:
        """Compare a squared size against the squared threshold.

        Returns Cmp.LT/EQ/GT, or Cmp.UNCERTAIN when only an inexact
        comparison is possible and it lands inside the tolerance band.
        """
        if self.sq_exact is not None and isinstance(sq, ExpSum):
            return (sq - self.sq_exact).sign()
        v = sq.to_float() if isinstance(sq, ExpSum) else float(sq)
        band = self.config.tolerance * abs(self.sq_float)
        if abs(v - self.sq_float) <= band:
            return Cmp.EQ if self.config.policy == "strict" else Cmp.UNCERTAIN
        return Cmp.LT if v < self.sq_float else Cmp.GT

    def is_short_sq(self, sq: ExpSum | float) -> bool | None:
        """sq <= threshold^2; None when uncertain."""
        c = self.cmp_sq(sq)
        if c == Cmp.UNCERTAIN:
            return None
        return c <= 0
