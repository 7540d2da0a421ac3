"""Seeded generators for random unimodular rational lattices and matrices."""

from __future__ import annotations

import random
from fractions import Fraction

from .lattice import UnimodularLattice

__all__ = [
    "random_unimodular",
    "random_lattices",
    "two_short_vector_lattice",
    "two_short_plane_lattice",
]


def _random_shear(rng: random.Random):
    i, j = rng.sample(range(3), 2)
    k = rng.choice((-2, -1, 1, 2))
    m = [[Fraction(int(r == c)) for c in range(3)] for r in range(3)]
    m[i][j] = Fraction(k)
    return m


def _random_diag(rng: random.Random):
    p = Fraction(rng.randint(1, 4), rng.randint(1, 4))
    q = Fraction(rng.randint(1, 4), rng.randint(1, 4))
    return [
        [p, Fraction(0), Fraction(0)],
        [Fraction(0), q, Fraction(0)],
        [Fraction(0), Fraction(0), 1 / (p * q)],
    ]


def _matmul(a, b):
    return [
        [sum(a[i][k] * b[k][j] for k in range(3)) for j in range(3)]
        for i in range(3)
    ]


def random_unimodular(rng: random.Random, shears: int = 5) -> UnimodularLattice:
    """Random rational basis with det exactly 1: shears mixed with
    rational diagonals.  Stays tame enough for brute-force oracles."""
    m = _random_diag(rng)
    for _ in range(shears):
        m = _matmul(m, _random_shear(rng))
        if rng.random() < 0.3:
            m = _matmul(m, _random_diag(rng))
    return UnimodularLattice(tuple(tuple(row) for row in m))


def random_lattices(count: int, seed: int, shears: int = 5):
    rng = random.Random(seed)
    return [random_unimodular(rng, shears) for _ in range(count)]


def two_short_vector_lattice(
    eps1: Fraction, eps2: Fraction, rng: random.Random | None = None
) -> UnimodularLattice:
    """A lattice whose first two rows are independent vectors of lengths
    exactly eps1 and eps2 (rational rotation keeps lengths exact); the
    plane they span has covolume eps1 * eps2 * (1-k^2)/(1+k^2) <=
    eps1 * eps2."""
    eps1, eps2 = Fraction(eps1), Fraction(eps2)
    if not (0 < eps1 < 1 and 0 < eps2 < 1):
        raise ValueError("short lengths must lie in (0, 1)")
    k = Fraction(0)
    tilt1 = tilt2 = Fraction(0)
    if rng is not None:
        k = Fraction(rng.randint(-2, 2), 7)
        tilt1 = Fraction(rng.randint(-3, 3), 5)
        tilt2 = Fraction(rng.randint(-3, 3), 5)
    den = 1 + k * k
    shift = eps2 * 2 * k / den
    h = eps2 * (1 - k * k) / den
    basis = (
        (eps1, Fraction(0), Fraction(0)),
        (shift, h, Fraction(0)),
        (tilt1, tilt2, 1 / (eps1 * h)),
    )
    return UnimodularLattice(basis)


def two_short_plane_lattice(
    eps1: Fraction, eps2: Fraction, rng: random.Random | None = None
) -> UnimodularLattice:
    """A lattice with two rational planes of covolumes eps1, eps2: the
    dual of a two-short-vector lattice."""
    from .lattice import dual_lattice

    return dual_lattice(two_short_vector_lattice(eps1, eps2, rng))
