"""The diagonal flow on lattices, vectors and wedges.

One flow step multiplies ambient vectors by diag(e^(1/2), e^(1/2), e^(-1))
and wedge coordinates by diag(e^(-1/2), e^(-1/2), e).  Flowed lattices
stay in (exact basis, integer time) form, so orbits never accumulate
rounding; squared sizes along an orbit are the two-term curves
A e^(s n) + B e^(t n), whose sub-level sets on any window are integer
intervals found here by certified bisection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath

from .lattice import HeightReport, UnimodularLattice, height_at, _height_threshold
from .scalars import (
    Cmp,
    DEFAULT_PRECISION,
    ExpSum,
    PrecisionConfig,
    Threshold,
)

__all__ = [
    "VECTOR_EXPONENTS",
    "WEDGE_EXPONENTS",
    "FlowedLattice",
    "LogLengthCurve",
    "TrajectoryProfile",
    "flow_vector",
    "flow_wedge",
    "flow_lattice",
    "short_interval",
    "height_profile",
]

# Per-step exponents of the flow on ambient coordinates.
VECTOR_EXPONENTS = (Fraction(1, 2), Fraction(1, 2), Fraction(-1))
WEDGE_EXPONENTS = (Fraction(-1, 2), Fraction(-1, 2), Fraction(1))

assert sum(VECTOR_EXPONENTS) == 0 and sum(WEDGE_EXPONENTS) == 0


def _scaled(v, exponents, n: int, bits: int) -> tuple[float, float, float]:
    with mpmath.workprec(bits):
        out = []
        for vi, e in zip(v, exponents):
            vi = Fraction(vi)
            x = mpmath.mpf(vi.numerator) / vi.denominator
            out.append(float(x * mpmath.exp(mpmath.mpf(e.numerator * n) / e.denominator)))
    return tuple(out)


def flow_vector(v, n: int, config: PrecisionConfig = DEFAULT_PRECISION):
    """Ambient triple after n flow steps: (v1 e^(n/2), v2 e^(n/2), v3 e^(-n))."""
    return _scaled(v, VECTOR_EXPONENTS, n, config.mantissa_bits)


def flow_wedge(w, n: int, config: PrecisionConfig = DEFAULT_PRECISION):
    """Wedge triple after n flow steps: (a e^(-n/2), b e^(-n/2), c e^n)."""
    return _scaled(w, WEDGE_EXPONENTS, n, config.mantissa_bits)


@dataclass(frozen=True)
class FlowedLattice:
    """T^time of a base lattice, kept in exact symbolic form.

    The rational core is retained with the integer time; numeric bases
    exist only on demand.  Composing flows adds times exactly, and the
    basis determinant is untouched because the exponents sum to zero.
    """

    base: UnimodularLattice
    time: int = 0

    def numeric_basis(self, config: PrecisionConfig = DEFAULT_PRECISION):
        return tuple(
            flow_vector(row, self.time, config) for row in self.base.basis
        )

    def height(self, config: PrecisionConfig = DEFAULT_PRECISION) -> HeightReport:
        return height_at(self.base, self.time, config)


def flow_lattice(x, n: int) -> FlowedLattice:
    """T^n acting on a lattice or an already-flowed lattice (exact cocycle)."""
    if isinstance(x, FlowedLattice):
        return FlowedLattice(x.base, x.time + n)
    if isinstance(x, UnimodularLattice):
        return FlowedLattice(x, n)
    raise TypeError(f"cannot flow {x!r}")


@dataclass(frozen=True)
class LogLengthCurve:
    """Squared size along the flow: a e^(s n) + b e^(t n), a, b >= 0.

    s = 1, t = -2 for vector lengths; s = -1, t = 2 for plane covolumes.
    Convex in n, so sub-level sets over the integers are intervals.
    """

    a: Fraction
    b: Fraction
    s: int = 1
    t: int = -2

    def __post_init__(self):
        object.__setattr__(self, "a", Fraction(self.a))
        object.__setattr__(self, "b", Fraction(self.b))
        if self.a < 0 or self.b < 0:
            raise ValueError("curve coefficients must be nonnegative")

    @classmethod
    def for_vector(cls, ambient) -> "LogLengthCurve":
        v1, v2, v3 = (Fraction(v) for v in ambient)
        return cls(v1 * v1 + v2 * v2, v3 * v3, 1, -2)

    @classmethod
    def for_wedge(cls, wedge) -> "LogLengthCurve":
        a, b, c = (Fraction(v) for v in wedge)
        return cls(a * a + b * b, c * c, -1, 2)

    def sq_expsum(self, n: int) -> ExpSum:
        return ExpSum.of_terms((self.a, 2 * self.s * n), (self.b, 2 * self.t * n))

    def sq_float(self, n: int) -> float:
        return self.sq_expsum(n).to_float()

    def size_float(self, n: int, bits: int = 80) -> float:
        return float(mpmath.sqrt(self.sq_expsum(n).to_mpf(bits)))

    def real_minimizer(self) -> float:
        """Real n minimizing the curve; +-inf for one-term curves."""
        if self.a == 0 and self.b == 0:
            raise ValueError("degenerate zero curve")
        if self.a == 0:
            return math.inf if self.t < 0 else -math.inf
        if self.b == 0:
            return math.inf if self.s < 0 else -math.inf
        # A s e^(s n) + B t e^(t n) = 0
        lhs = -Fraction(self.b * self.t, self.a * self.s)
        return math.log(float(lhs)) / (self.s - self.t)


def short_interval(
    curve: LogLengthCurve,
    eps,
    window: tuple[int, int],
    config: PrecisionConfig = DEFAULT_PRECISION,
):
    """{n in [window] : size(n) <= eps} as an integer interval, or None.

    Certified by bisecting each monotone side of the curve minimum with
    exact comparisons; uncertain comparisons against an inexact eps
    resolve as short.
    """
    if curve.a == 0 and curve.b == 0:
        raise ValueError("degenerate zero curve")
    n0, n1 = int(window[0]), int(window[1])
    if n0 > n1:
        raise ValueError("empty window")
    thr = eps if isinstance(eps, Threshold) else Threshold(eps, config)

    def is_short(n: int) -> bool:
        return thr.cmp_sq(curve.sq_expsum(n)) != Cmp.GT

    nstar = curve.real_minimizer()
    if nstar == math.inf:
        pivots = [n1]
    elif nstar == -math.inf:
        pivots = [n0]
    else:
        lo = min(max(math.floor(nstar), n0), n1)
        pivots = sorted({lo, min(lo + 1, n1)})
    pivot = None
    for p in pivots:
        if is_short(p):
            pivot = p
            break
    if pivot is None:
        return None
    # expand left: smallest n in [n0, pivot] with is_short(n)
    lo, hi = n0, pivot
    if is_short(n0):
        left = n0
    else:
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if is_short(mid):
                hi = mid
            else:
                lo = mid
        left = hi
    # expand right: largest n in [pivot, n1] with is_short(n)
    lo, hi = pivot, n1
    if is_short(n1):
        right = n1
    else:
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if is_short(mid):
                lo = mid
            else:
                hi = mid
        right = lo
    return (left, right)


@dataclass
class TrajectoryProfile:
    """Per-step heights over a window and the set above a threshold.

    above holds the certified {n : ht(T^n x) >= M}; steps whose
    comparison could not be certified (inexact M inside the tolerance
    band) are listed separately in uncertain and belong to neither side.
    """

    window: tuple[int, int]
    m_text: str
    heights: list[float] = field(default_factory=list)
    lambda1: list[float] = field(default_factory=list)
    covolume: list[float] = field(default_factory=list)
    above: list[int] = field(default_factory=list)
    uncertain: list[int] = field(default_factory=list)

    @property
    def steps(self) -> range:
        return range(self.window[0], self.window[1] + 1)

    def status(self, n: int) -> str:
        if n in set(self.above):
            return "1"
        if n in set(self.uncertain):
            return "uncertain"
        return "0"


def height_profile(
    x,
    window: tuple[int, int],
    m,
    config: PrecisionConfig = DEFAULT_PRECISION,
) -> TrajectoryProfile:
    """Heights of T^n(x) for n in the window, with V_x = {n : ht >= m}."""
    if isinstance(x, FlowedLattice):
        base, shift = x.base, x.time
    else:
        base, shift = x, 0
    n0, n1 = int(window[0]), int(window[1])
    if n0 > n1:
        raise ValueError("empty window")
    thr = _height_threshold(m, config)
    prof = TrajectoryProfile(window=(n0, n1), m_text=str(m))
    primal = base.primal_engine()
    dual = base.dual_engine()
    above = set()
    uncertain = set()
    for n in range(n0, n1 + 1):
        k = n + shift
        vline = primal.shortest(k)
        pline = dual.shortest(k)
        lam_sq = vline.sq_expsum(k)
        cov_sq = pline.sq_expsum(k)
        lam_f = lam_sq.to_float()
        cov_f = cov_sq.to_float()
        prof.lambda1.append(math.sqrt(lam_f))
        prof.covolume.append(math.sqrt(cov_f))
        min_sq = lam_sq if lam_f <= cov_f * (1 + 1e-9) else cov_sq
        if abs(lam_f - cov_f) <= 1e-9 * max(lam_f, cov_f):
            min_sq = lam_sq if (lam_sq - cov_sq).sign() <= 0 else cov_sq
        prof.heights.append(1.0 / math.sqrt(min_sq.to_float()))
        c = thr.cmp_sq(min_sq)
        if c == Cmp.UNCERTAIN:
            uncertain.add(n)
        elif c != Cmp.GT:  # min size <= 1/m, i.e. ht >= m
            above.add(n)
    prof.above = sorted(above)
    prof.uncertain = sorted(uncertain)
    return prof
