"""Unimodular 3-lattices: exact bases, duals, shortest vectors and planes.

A lattice is the integer row span of an exact rational basis with
|det| = 1.  The height of a lattice is the inverse of the minimum of its
shortest nonzero vector length and its smallest rational-plane covolume;
for unimodular lattices the latter equals the shortest dual vector
length, which is how it is computed here (pairwise wedge enumeration
stays around as a test oracle).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import mpmath

from . import svp
from .scalars import (
    Cmp,
    DEFAULT_PRECISION,
    ExpSum,
    PrecisionConfig,
    Threshold,
    parse_scale,
)

__all__ = [
    "UnimodularLattice",
    "LatticeVector",
    "PlaneWedge",
    "HeightReport",
    "LatticeParseError",
    "UnimodularityError",
    "covolume",
    "dual_lattice",
    "shortest_vector",
    "shortest_plane",
    "height",
    "height_at",
    "in_compact_part",
    "parse_lattice_text",
    "format_lattice_text",
    "plane_through",
]


class UnimodularityError(ValueError):
    """Basis determinant is not +-1."""


class LatticeParseError(ValueError):
    def __init__(self, msg: str, line: int, token: int):
        super().__init__(f"line {line}, token {token}: {msg}")
        self.line = line
        self.token = token


def covolume(basis) -> Fraction:
    """|det| of a 3x3 rational basis, exactly."""
    return abs(svp.mat_det(svp.mat_fractions(basis)))


@dataclass(frozen=True)
class UnimodularLattice:
    """Integer row span of an exact rational basis with |det| = 1."""

    basis: svp.Mat3

    def __post_init__(self):
        b = svp.mat_fractions(self.basis)
        object.__setattr__(self, "basis", b)
        d = svp.mat_det(b)
        if d == 0:
            raise UnimodularityError("basis rows are linearly dependent")
        if abs(d) != 1:
            raise UnimodularityError(f"|det| = {abs(d)}, expected 1")

    @property
    def det(self) -> Fraction:
        return svp.mat_det(self.basis)

    def vector(self, coeffs) -> "LatticeVector":
        return LatticeVector.of(self, coeffs)

    def primal_engine(self) -> svp.FlowGram:
        return svp.primal_engine(self.basis)

    def dual_engine(self) -> svp.FlowGram:
        return svp.dual_engine(self.basis)

    def __repr__(self):
        rows = "; ".join(
            " ".join(str(x) for x in row) for row in self.basis
        )
        return f"UnimodularLattice([{rows}])"


def dual_lattice(x: UnimodularLattice) -> UnimodularLattice:
    """Lattice with basis (B^T)^-1; dual of the dual is the original."""
    return UnimodularLattice(svp.mat_inverse_transpose(x.basis))


@dataclass(frozen=True)
class LatticeVector:
    """A lattice element: integer coefficients and exact ambient coords."""

    coeffs: tuple[int, int, int]
    ambient: tuple[Fraction, Fraction, Fraction]

    @classmethod
    def of(cls, x: UnimodularLattice, coeffs) -> "LatticeVector":
        c = tuple(int(v) for v in coeffs)
        return cls(c, svp.row_times_mat(c, x.basis))

    @property
    def primitive(self) -> bool:
        g = math.gcd(math.gcd(abs(self.coeffs[0]), abs(self.coeffs[1])), abs(self.coeffs[2]))
        return g == 1

    def sq_length(self) -> Fraction:
        return sum(c * c for c in self.ambient)

    def sq_curve(self) -> tuple[Fraction, Fraction]:
        """(A, B) with flowed squared length A e^n + B e^(-2n)."""
        a1, a2, a3 = self.ambient
        return a1 * a1 + a2 * a2, a3 * a3


@dataclass(frozen=True)
class PlaneWedge:
    """A rational plane: wedge coordinates and the dual direction.

    wedge = u ^ v for generators u, v of the plane section of the
    lattice; it equals +-det(B) times the ambient dual vector with the
    given primitive dual coefficients, and its length is the covolume.
    """

    wedge: tuple[Fraction, Fraction, Fraction]
    dual_coeffs: tuple[int, int, int]

    @classmethod
    def from_dual_coeffs(cls, x: UnimodularLattice, d) -> "PlaneWedge":
        dc = svp.primitive_part(tuple(int(v) for v in d))
        dual_basis = svp.mat_inverse_transpose(x.basis)
        amb = svp.row_times_mat(dc, dual_basis)
        det = svp.mat_det(x.basis)
        return cls(tuple(det * a for a in amb), dc)

    def covolume_sq(self) -> Fraction:
        return sum(a * a for a in self.wedge)

    def sq_curve(self) -> tuple[Fraction, Fraction]:
        """(A, B) with flowed squared covolume A e^(-n) + B e^(2n)."""
        a, b, c = self.wedge
        return a * a + b * b, c * c

    def contains(self, v: LatticeVector) -> bool:
        return sum(w * a for w, a in zip(self.wedge, v.ambient)) == 0


def wedge_product(u, v):
    """Cross product of two ambient triples, exactly."""
    return (
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    )


def plane_through(x: UnimodularLattice, v1: LatticeVector, v2: LatticeVector) -> PlaneWedge:
    """The rational plane spanned by two independent lattice vectors."""
    d = wedge_product(v1.coeffs, v2.coeffs)
    if d == (0, 0, 0):
        raise ValueError("vectors are collinear")
    return PlaneWedge.from_dual_coeffs(x, d)


@dataclass(frozen=True)
class HeightReport:
    """Height of a lattice with certified witnesses.

    lambda1 and min_plane_covolume are reported at the configured
    precision; their squares are available exactly for downstream
    comparisons.  Both minima are certified by full enumeration inside
    the radius used by the search.
    """

    lambda1: float
    min_plane_covolume: float
    height: float
    vector_witness: LatticeVector
    plane_witness: PlaneWedge
    lambda1_sq: ExpSum
    min_plane_covolume_sq: ExpSum
    time: int = 0


def _sqrt_float(sq: ExpSum, bits: int) -> float:
    return float(mpmath.sqrt(sq.to_mpf(bits)))


def height_at(
    x: UnimodularLattice, n: int = 0, config: PrecisionConfig = DEFAULT_PRECISION
) -> HeightReport:
    """HeightReport of T^n(x); n = 0 is the lattice itself."""
    vline = x.primal_engine().shortest(n)
    pline = x.dual_engine().shortest(n)
    lam_sq = vline.sq_expsum(n)
    cov_sq = pline.sq_expsum(n)
    lam = _sqrt_float(lam_sq, config.mantissa_bits)
    cov = _sqrt_float(cov_sq, config.mantissa_bits)
    min_sq = lam_sq if (lam_sq - cov_sq).sign() <= 0 else cov_sq
    ht = float(1 / mpmath.sqrt(min_sq.to_mpf(config.mantissa_bits)))
    return HeightReport(
        lambda1=lam,
        min_plane_covolume=cov,
        height=ht,
        vector_witness=LatticeVector.of(x, vline.coeffs),
        plane_witness=PlaneWedge.from_dual_coeffs(x, pline.coeffs),
        lambda1_sq=lam_sq,
        min_plane_covolume_sq=cov_sq,
        time=n,
    )


def height(x: UnimodularLattice, config: PrecisionConfig = DEFAULT_PRECISION) -> HeightReport:
    return height_at(x, 0, config)


def shortest_vector(
    x: UnimodularLattice, config: PrecisionConfig = DEFAULT_PRECISION
) -> tuple[LatticeVector, float]:
    line = x.primal_engine().shortest(0)
    return LatticeVector.of(x, line.coeffs), _sqrt_float(line.sq_expsum(0), config.mantissa_bits)


def shortest_plane(
    x: UnimodularLattice, config: PrecisionConfig = DEFAULT_PRECISION
) -> tuple[PlaneWedge, float]:
    line = x.dual_engine().shortest(0)
    return (
        PlaneWedge.from_dual_coeffs(x, line.coeffs),
        _sqrt_float(line.sq_expsum(0), config.mantissa_bits),
    )


def in_compact_part(x, m, config: PrecisionConfig = DEFAULT_PRECISION) -> str:
    """Classify ht(x) against m: 'below', 'above', or 'boundary-uncertain'.

    x may be an UnimodularLattice or anything with .base/.time (a flowed
    lattice).  Exact ties ht == m are reported boundary-uncertain under
    the flag-uncertain policy and resolved as below (ht <= m) under
    strict; certified non-ties always resolve even inside the tolerance
    band when the threshold is exact.
    """
    base, n = _resolve(x)
    thr = _height_threshold(m, config)
    rep = height_at(base, n, config)
    min_sq = (
        rep.lambda1_sq
        if (rep.lambda1_sq - rep.min_plane_covolume_sq).sign() <= 0
        else rep.min_plane_covolume_sq
    )
    c = thr.cmp_sq(min_sq)  # min size vs 1/m  <=>  ht vs m, reversed
    if c == Cmp.UNCERTAIN:
        return "boundary-uncertain"
    if c == Cmp.EQ:
        return "below" if config.policy == "strict" else "boundary-uncertain"
    return "above" if c == Cmp.LT else "below"


def _resolve(x) -> tuple[UnimodularLattice, int]:
    if isinstance(x, UnimodularLattice):
        return x, 0
    base = getattr(x, "base", None)
    n = getattr(x, "time", None)
    if isinstance(base, UnimodularLattice) and n is not None:
        return base, int(n)
    raise TypeError(f"expected a lattice or flowed lattice, got {x!r}")


def _height_threshold(m, config: PrecisionConfig) -> Threshold:
    """Threshold at 1/m for comparing sizes (ht >= m iff min size <= 1/m)."""
    if isinstance(m, float):
        if m < 1:
            raise ValueError("height threshold must be >= 1")
        t = Threshold.__new__(Threshold)
        t.config = config
        t.sq_exact = None
        t.sq_float = 1.0 / (m * m)
        return t
    s = parse_scale(m)
    if s.cmp_rational(1) < 0:
        raise ValueError("height threshold must be >= 1")
    return Threshold.from_sq(s.inv_sq(), config)


# -- text format -----------------------------------------------------------


def parse_lattice_text(text: str) -> UnimodularLattice:
    """Three lines of three rationals 'p/q'; validates |det| = 1 exactly."""
    rows = []
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if len(lines) != 3:
        raise LatticeParseError(
            f"expected 3 rows, found {len(lines)}", line=len(lines), token=0
        )
    for i, ln in enumerate(lines, start=1):
        toks = ln.split()
        if len(toks) != 3:
            raise LatticeParseError(
                f"expected 3 entries, found {len(toks)}", line=i, token=len(toks)
            )
        row = []
        for j, tok in enumerate(toks, start=1):
            try:
                row.append(Fraction(tok))
            except (ValueError, ZeroDivisionError):
                raise LatticeParseError(
                    f"invalid rational {tok!r}", line=i, token=j
                ) from None
        rows.append(tuple(row))
    return UnimodularLattice(tuple(rows))


def format_lattice_text(x: UnimodularLattice) -> str:
    return "\n".join(" ".join(str(v) for v in row) for row in x.basis) + "\n"


IDENTITY = UnimodularLattice(((1, 0, 0), (0, 1, 0), (0, 0, 1)))
