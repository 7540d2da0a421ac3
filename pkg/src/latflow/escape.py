"""Singular pairs, divergence-on-average proxies, and mass statistics.

The lattice attached to r = (r1, r2) has basis rows (1,0,0), (0,1,0),
(r1, r2, 1).  For rational r with common denominator q the integer
combination q*row3 - p1*row1 - p2*row2 equals (0, 0, q), which the flow
contracts by e^-n per step, so the orbit's height grows without bound
and the time-average mass above any height threshold tends to one.
Everything reported here is a finite-horizon statement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import mpmath

from .flow import TrajectoryProfile, height_profile
from .lattice import UnimodularLattice
from .scalars import DEFAULT_PRECISION, PrecisionConfig, parse_scale
from .svp import mat_det

__all__ = [
    "SingularCandidate",
    "MassReport",
    "KappaReport",
    "singular_lattice",
    "dirichlet_witness",
    "divergence_on_average_stat",
    "empirical_mass",
    "kappa_census",
    "cubic_control_lattice",
    "unstable_box_sample",
]


@dataclass(frozen=True)
class SingularCandidate:
    """Coset representative with unit upper block and bottom row (r1, r2, 1).

    input_radius tags finite-precision inputs: 0 means the rationals are
    the intended values; positive means they stand for reals known only
    to that radius, and derived statistics are finite-precision proxies.
    """

    r1: Fraction
    r2: Fraction
    lattice: UnimodularLattice
    input_radius: float = 0.0


def _as_fraction(r) -> tuple[Fraction, float]:
    if isinstance(r, float):
        return Fraction(r), math.ulp(abs(r))
    return Fraction(r), 0.0


def singular_lattice(r1, r2) -> SingularCandidate:
    f1, e1 = _as_fraction(r1)
    f2, e2 = _as_fraction(r2)
    lat = UnimodularLattice(((1, 0, 0), (0, 1, 0), (f1, f2, 1)))
    return SingularCandidate(f1, f2, lat, max(e1, e2))


def dirichlet_witness(r1, r2, n_max: int, delta):
    """Best simultaneous approximation with denominator 0 < q < N.

    Exhausts q, takes the nearest integer vector p, and returns
    (q, p1, p2, error) when the sup-norm error satisfies
    err < delta / sqrt(N); otherwise None.  Exact for rational inputs.
    """
    if n_max < 2:
        raise ValueError("need N >= 2")
    delta = Fraction(delta)
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    f1, _ = _as_fraction(r1)
    f2, _ = _as_fraction(r2)
    best = None
    for q in range(1, n_max):
        p1 = round(q * f1)
        p2 = round(q * f2)
        err = max(abs(q * f1 - p1), abs(q * f2 - p2))
        if best is None or err < best[3]:
            best = (q, p1, p2, err)
    q, p1, p2, err = best
    # err < delta / sqrt(N)  <=>  err^2 N < delta^2, exactly
    if err * err * n_max < delta * delta:
        return best
    return None


@dataclass
class MassReport:
    """Fraction of flow steps spent at or above height M.

    mass_above is exact (a Fraction of counted steps); uncertain steps
    are excluded from the count and reported.
    """

    n_steps: int
    m_text: str
    mass_above: Fraction
    flagged: bool
    first_exit: int | None
    uncertain: int = 0
    per_point: list | None = None

    def to_dict(self) -> dict:
        d = {
            "N": self.n_steps,
            "M": self.m_text,
            "massAbove": float(self.mass_above),
            "massAboveExact": f"{self.mass_above}",
            "flagged": self.flagged,
            "firstExitTime": self.first_exit,
            "uncertainSteps": self.uncertain,
        }
        if self.per_point is not None:
            d["perPoint"] = self.per_point
        return d


def divergence_on_average_stat(
    x,
    n_steps: int,
    m,
    config: PrecisionConfig = DEFAULT_PRECISION,
    eps_flag: float = 0.05,
    keep_profile: bool = False,
):
    """Share of [0, N) spent in X_{>=M}; the divergence-on-average proxy.

    The flag fires when mass_above >= 1 - eps_flag: a finite-horizon
    stand-in for the weak-* statement, never a verdict about the limit.
    """
    if n_steps < 1:
        raise ValueError("need N >= 1")
    lat = x.lattice if isinstance(x, SingularCandidate) else x
    prof = height_profile(lat, (0, n_steps - 1), m, config)
    mass = Fraction(len(prof.above), n_steps)
    rep = MassReport(
        n_steps=n_steps,
        m_text=str(m),
        mass_above=mass,
        flagged=mass >= 1 - Fraction(eps_flag).limit_denominator(10**6),
        first_exit=prof.above[0] if prof.above else None,
        uncertain=len(prof.uncertain),
    )
    return (rep, prof) if keep_profile else rep


def empirical_mass(
    weighted_sample,
    n_steps: int,
    m,
    config: PrecisionConfig = DEFAULT_PRECISION,
    threads: int = 1,
) -> MassReport:
    """Mass above M for a finite weighted sample: the time average of the
    sample measure pushed through the flow.

    weighted_sample is an iterable of (lattice, weight); weights must sum
    to 1 exactly (Fractions) or within 1e-9 (floats).
    """
    items = [(x, Fraction(w)) for x, w in weighted_sample]
    total = sum(w for _, w in items)
    if abs(float(total) - 1.0) > 1e-9:
        raise ValueError(f"weights sum to {float(total)}, expected 1")

    def one(x):
        return divergence_on_average_stat(x, n_steps, m, config)

    if threads > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=threads) as ex:
            reps = list(ex.map(one, [x for x, _ in items], chunksize=8))
    else:
        reps = [one(x) for x, _ in items]
    mass = sum(w * r.mass_above for (_, w), r in zip(items, reps)) / total
    exits = [r.first_exit for r in reps if r.first_exit is not None]
    return MassReport(
        n_steps=n_steps,
        m_text=str(m),
        mass_above=mass,
        flagged=False,
        first_exit=min(exits) if exits else None,
        uncertain=sum(r.uncertain for r in reps),
        per_point=[float(r.mass_above) for r in reps],
    )


@dataclass
class KappaReport:
    n_steps: int
    m_text: str
    kappa: float
    fraction: Fraction
    decay_exponent: float
    sample_size: int

    def to_dict(self) -> dict:
        return {
            "N": self.n_steps,
            "M": self.m_text,
            "kappa": self.kappa,
            "fraction": float(self.fraction),
            "decayExponent": self.decay_exponent,
            "sampleSize": self.sample_size,
        }


def kappa_census(
    sample,
    n_steps: int,
    m,
    kappa: float,
    d: float = 2.0,
    delta: float = 0.1,
    config: PrecisionConfig = DEFAULT_PRECISION,
    threads: int = 1,
) -> KappaReport:
    """Fraction of sampled lattices whose above-M time set exceeds
    kappa N steps, with the theoretical decay exponent
    (6 - 2 kappa - 3 d + 3 delta)/2 reported for comparison."""
    if not 0 <= kappa < 1:
        raise ValueError("kappa must lie in [0, 1)")
    kap = Fraction(kappa).limit_denominator(10**6)

    def one(x):
        lat = x.lattice if isinstance(x, SingularCandidate) else x
        prof = height_profile(lat, (0, n_steps - 1), m, config)
        return Fraction(len(prof.above)) > kap * n_steps

    if threads > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=threads) as ex:
            hits = sum(ex.map(one, sample, chunksize=8))
        size = len(sample)
    else:
        hits = 0
        size = 0
        for x in sample:
            hits += one(x)
            size += 1
    return KappaReport(
        n_steps=n_steps,
        m_text=str(m),
        kappa=float(kappa),
        fraction=Fraction(hits, max(size, 1)),
        decay_exponent=(6 - 2 * float(kappa) - 3 * d + 3 * delta) / 2,
        sample_size=size,
    )


def _mpf_to_fraction(x) -> Fraction:
    man, exp = mpmath.libmp.to_man_exp(x._mpf_)
    man = int(man)
    exp = int(exp)
    if exp >= 0:
        return Fraction(man * 2**exp)
    return Fraction(man, 2**-exp)


def cubic_control_lattice(bits: int = 128) -> UnimodularLattice:
    """Bounded-orbit control: scaled ring lattice of 2 cos(2 pi / 7).

    Rows are the power basis (1, z, z^2) under the three real embeddings
    z_k = 2 cos(2 pi k / 7), scaled by 7^(-1/3) to covolume 1, rounded to
    the requested precision, and then one row is rescaled exactly so the
    determinant is exactly 1.  The true lattice has a compact full-
    diagonal orbit, so heights along the flow stay bounded until the
    rounding error surfaces (far beyond the horizon at 128 bits).
    """
    with mpmath.workprec(bits + 16):
        zs = [2 * mpmath.cos(2 * mpmath.pi * k / 7) for k in (1, 2, 3)]
        scale = mpmath.mpf(7) ** (Fraction(-1, 3))
        rows = []
        for p in range(3):
            rows.append(tuple(_mpf_to_fraction(scale * z**p) for z in zs))
    det = mat_det(tuple(rows))
    rows[0] = tuple(v / det for v in rows[0])
    return UnimodularLattice(tuple(rows))


def unstable_box_sample(base: UnimodularLattice, count: int, seed: int, width: float = 1.0):
    """Lattices base * u(t) for t uniform in the unstable box of the
    given width: the Monte-Carlo stand-in for a measure supported on an
    unstable orbit piece."""
    import random

    rng = random.Random(seed)
    out = []
    for _ in range(count):
        t1 = Fraction(rng.uniform(-width / 2, width / 2)).limit_denominator(2**32)
        t2 = Fraction(rng.uniform(-width / 2, width / 2)).limit_denominator(2**32)
        u = ((1, 0, 0), (0, 1, 0), (t1, t2, 1))
        basis = tuple(
            tuple(
                sum(base.basis[i][k] * u[k][j] for k in range(3)) for j in range(3)
            )
            for i in range(3)
        )
        out.append(UnimodularLattice(basis))
    return out
