"""Labeled marked times along high-height excursions.

The orbit's time window decomposes into maximal runs where the height
strictly exceeds M.  Each run is walked by an alternating chain of
witnesses: the unique short vector or plane at the run start (whichever
stays short longer, vectors on ties), then the unique short object of
the other kind each time the current one stops being short.  Marks are
the first and last shortness times of each witness, giving the four
lists (L, L', P, P') whose structure (noninclusion, separation,
bounded census) is what makes excursions combinatorially countable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath

from .flow import LogLengthCurve, short_interval
from .lattice import LatticeVector, PlaneWedge, UnimodularLattice, _height_threshold
from .scalars import (
    Cmp,
    DEFAULT_PRECISION,
    ExpSum,
    PrecisionConfig,
    PrecisionError,
    Threshold,
    parse_scale,
)
from .svp import FlowGram, ShortLine

__all__ = [
    "MarkingError",
    "MinkowskiViolation",
    "Mark",
    "MarkingSet",
    "ShortWitness",
    "unique_short_witness",
    "extract_marking",
    "verify_noninclusion",
    "verify_separation",
    "marking_family_census",
    "floor_log",
]


class MarkingError(RuntimeError):
    """The marking construction hit a state the theory forbids."""


class MinkowskiViolation(MarkingError):
    """Two independent short vectors without the forced short plane
    (or dually); indicates an arithmetic bug, not a math possibility."""


def floor_log(m) -> int:
    """floor(log m) for an exact scale, certified at integer boundaries."""
    s = parse_scale(m)
    if s.coeff == 1 and s.half % 2 == 0:
        return s.half // 2
    with mpmath.workprec(160):
        ln = mpmath.log(mpmath.mpf(s.coeff.numerator) / s.coeff.denominator)
        ln += mpmath.mpf(s.half) / 2
        fl = int(mpmath.floor(ln))
        if ln - fl < mpmath.mpf(2) ** -120:
            # e^fl == m would need coeff e^(half/2) with rational coeff = 1
            raise PrecisionError("floor(log M) too close to an integer")
    return fl


@dataclass(frozen=True)
class Mark:
    """One marked interval: witness kind, first and last shortness times."""

    kind: str  # "vector" | "plane"
    first: int
    last: int
    coeffs: tuple[int, int, int]  # vector coeffs, or dual coeffs for planes


@dataclass
class MarkingSet:
    window: tuple[int, int]
    m_text: str
    marks: list[Mark] = field(default_factory=list)

    @property
    def vec_marks(self) -> list[Mark]:
        return [m for m in self.marks if m.kind == "vector"]

    @property
    def plane_marks(self) -> list[Mark]:
        return [m for m in self.marks if m.kind == "plane"]

    @property
    def l_list(self) -> tuple[int, ...]:
        return tuple(m.first for m in self.vec_marks)

    @property
    def l_prime(self) -> tuple[int, ...]:
        return tuple(m.last for m in self.vec_marks)

    @property
    def p_list(self) -> tuple[int, ...]:
        return tuple(m.first for m in self.plane_marks)

    @property
    def p_prime(self) -> tuple[int, ...]:
        return tuple(m.last for m in self.plane_marks)

    def key(self) -> tuple:
        """Canonical census key: the four time lists, witnesses excluded."""
        return (self.l_list, self.l_prime, self.p_list, self.p_prime)

    def is_empty(self) -> bool:
        return not self.marks

    def to_dict(self) -> dict:
        return {
            "window": list(self.window),
            "M": self.m_text,
            "L": list(self.l_list),
            "L'": list(self.l_prime),
            "P": list(self.p_list),
            "P'": list(self.p_prime),
            "witnesses": [
                {"time": m.first, "kind": m.kind, "coeffs": list(m.coeffs)}
                for m in self.marks
            ],
        }


@dataclass
class ShortWitness:
    """Short objects at a single step: counts, witnesses, persistences.

    persistence is the last time the object stays short (math.inf when
    it never grows back, e.g. a vector with no expanding component).
    """

    kind: str  # "vector" | "plane" | "both" | "none"
    vector: LatticeVector | None
    plane: PlaneWedge | None
    vector_persistence: float | int | None
    plane_persistence: float | int | None
    vector_lines: int
    plane_lines: int


def _persistence_end(line: ShortLine, thr: Threshold, start: int, horizon: int):
    """Last n in [start, horizon] with the line short; inf if short
    through the horizon and the curve has no growing term."""
    curve = LogLengthCurve(line.a, line.b, line.s, line.t)
    iv = short_interval(curve, thr, (start, horizon))
    if iv is None:
        return None
    grows_forever = (curve.s > 0 and curve.a > 0) or (curve.t > 0 and curve.b > 0)
    if iv[1] == horizon and not grows_forever:
        return math.inf
    return iv[1]


def unique_short_witness(
    x: UnimodularLattice,
    n: int,
    m,
    config: PrecisionConfig = DEFAULT_PRECISION,
    horizon: int | None = None,
) -> ShortWitness:
    """All 1/M-short primitive vectors and planes of T^n(x).

    Asserts uniqueness (at most one line of each kind) when the step
    before sits strictly below height M, the situation where theory
    forces it.  Two independent short vectors without a 1/M^2-short
    plane raise MinkowskiViolation: that combination is impossible for
    a unimodular lattice, so hitting it means broken arithmetic.
    """
    scale = parse_scale(m)
    if scale.cmp_rational(_E_FLOOR) < 0:
        raise ValueError("threshold must be at least e")
    thr = Threshold.from_sq(scale.inv_sq(), config)
    thr_sq2 = Threshold.from_sq(scale.inv_sq() * scale.inv_sq(), config)
    if horizon is None:
        horizon = n + 10 * max(64, floor_log(scale) + 1)

    primal = x.primal_engine()
    dual = x.dual_engine()
    vline = primal.shortest(n)
    pline = dual.shortest(n)
    v_short = thr.cmp_sq(vline.sq_expsum(n)) != Cmp.GT
    p_short = thr.cmp_sq(pline.sq_expsum(n)) != Cmp.GT

    v_lines = 0
    p_lines = 0
    if v_short:
        v_lines = 1
        more, _ = primal.has_independent_short(n, thr)
        if more:
            v_lines = 2
            if thr_sq2.cmp_sq(pline.sq_expsum(n)) == Cmp.GT:
                raise MinkowskiViolation(
                    "two independent short vectors but no M^-2-short plane"
                )
    if p_short:
        p_lines = 1
        more, _ = dual.has_independent_short(n, thr)
        if more:
            p_lines = 2
            if thr_sq2.cmp_sq(vline.sq_expsum(n)) == Cmp.GT:
                raise MinkowskiViolation(
                    "two independent short planes but no M^-2-short vector"
                )

    # uniqueness is forced when the previous step is strictly below M
    prev_vs = primal.shortest(n - 1)
    prev_ps = dual.shortest(n - 1)
    prev_below = (
        thr.cmp_sq(prev_vs.sq_expsum(n - 1)) == Cmp.GT
        and thr.cmp_sq(prev_ps.sq_expsum(n - 1)) == Cmp.GT
    )
    if prev_below and (v_lines > 1 or p_lines > 1):
        raise MarkingError(
            f"multiple independent short lines at an excursion start (n={n})"
        )

    kind = {(True, True): "both", (True, False): "vector",
            (False, True): "plane", (False, False): "none"}[(v_short, p_short)]
    return ShortWitness(
        kind=kind,
        vector=LatticeVector.of(x, vline.coeffs) if v_short else None,
        plane=PlaneWedge.from_dual_coeffs(x, pline.coeffs) if p_short else None,
        vector_persistence=_persistence_end(vline, thr, n, horizon) if v_short else None,
        plane_persistence=_persistence_end(pline, thr, n, horizon) if p_short else None,
        vector_lines=v_lines,
        plane_lines=p_lines,
    )


_E_FLOOR = Fraction(271828182845904523536, 10**20)  # e, rounded down


def _require_m_at_least_e(m):
    s = parse_scale(m)
    if s.cmp_rational(_E_FLOOR) < 0:
        raise ValueError("marking requires M >= e")
    return s


def extract_marking(
    x: UnimodularLattice,
    window: tuple[int, int],
    m,
    config: PrecisionConfig = DEFAULT_PRECISION,
    check_growth: bool = True,
) -> MarkingSet:
    """The labeled marked times of the orbit of x on the window.

    Decomposes {n : ht(T^n x) > M} into maximal runs and walks each run
    with the alternating witness chain.  Marks are the first and last
    shortness times of each witness inside the window (a first-short
    time may precede the run start when the run opens at an exact
    height tie or at the window edge; it is clamped to the window).
    Uncertain height comparisons abort with PrecisionError; witness
    uniqueness violations abort with MarkingError.
    """
    scale = _require_m_at_least_e(m)
    thr = Threshold.from_sq(scale.inv_sq(), config)
    n0, n1 = int(window[0]), int(window[1])
    if n0 > n1:
        raise ValueError("empty window")

    primal = x.primal_engine()
    dual = x.dual_engine()
    vlines: dict[int, ShortLine] = {}
    plines: dict[int, ShortLine] = {}
    strict_above: list[bool] = []
    for n in range(n0, n1 + 1):
        vlines[n] = primal.shortest(n)
        plines[n] = dual.shortest(n)
        cv = thr.cmp_sq(vlines[n].sq_expsum(n))
        cp = thr.cmp_sq(plines[n].sq_expsum(n))
        if Cmp.UNCERTAIN in (cv, cp):
            raise PrecisionError(
                f"height comparison uncertain at step {n}; increase mantissa bits"
            )
        strict_above.append(cv == Cmp.LT or cp == Cmp.LT)

    marking = MarkingSet(window=(n0, n1), m_text=str(m))
    runs = _runs(strict_above, n0)
    for a, b in runs:
        _walk_run(
            marking, x, primal, dual, vlines, plines, a, b, (n0, n1), thr, scale,
            check_growth,
        )
    _assert_order(marking)
    return marking


def _runs(flags: list[bool], n0: int) -> list[tuple[int, int]]:
    runs = []
    start = None
    for i, f in enumerate(flags):
        if f and start is None:
            start = i
        elif not f and start is not None:
            runs.append((start + n0, i - 1 + n0))
            start = None
    if start is not None:
        runs.append((start + n0, len(flags) - 1 + n0))
    return runs


def _short_at(line: ShortLine, n: int, thr: Threshold) -> bool:
    return thr.cmp_sq(line.sq_expsum(n)) != Cmp.GT


def _last_short_in(line: ShortLine, lo: int, hi: int, thr: Threshold) -> int:
    curve = LogLengthCurve(line.a, line.b, line.s, line.t)
    iv = short_interval(curve, thr, (lo, hi))
    assert iv is not None and iv[0] == lo, "witness not short at its anchor"
    return iv[1]


def _walk_run(
    marking: MarkingSet,
    x: UnimodularLattice,
    primal: FlowGram,
    dual: FlowGram,
    vlines: dict[int, ShortLine],
    plines: dict[int, ShortLine],
    a: int,
    b: int,
    window: tuple[int, int],
    thr: Threshold,
    scale,
    check_growth: bool,
):
    # choose the first witness at the run start
    cand = []
    if _short_at(vlines[a], a, thr):
        cand.append(("vector", vlines[a], primal))
    if _short_at(plines[a], a, thr):
        cand.append(("plane", plines[a], dual))
    if not cand:
        raise MarkingError(f"no short object at excursion start {a}")
    interior = a > window[0]
    for kind, line, eng in cand:
        more, _ = eng.has_independent_short(a, thr)
        if more and interior:
            raise MarkingError(
                f"two independent short {kind}s at excursion start {a}"
            )
    if len(cand) == 2:
        pv = _last_short_in(vlines[a], a, b, thr)
        pp = _last_short_in(plines[a], a, b, thr)
        kind, line, eng = cand[0] if pv >= pp else cand[1]
    else:
        kind, line, eng = cand[0]

    guard = 2 * (b - a) + 4
    while True:
        guard -= 1
        if guard < 0:
            raise MarkingError("witness alternation did not terminate")
        curve = LogLengthCurve(line.a, line.b, line.s, line.t)
        iv = short_interval(curve, thr, window)
        assert iv is not None, "witness lost its shortness interval"
        first = iv[0]
        last = min(iv[1], b)
        if check_growth:
            _check_growth_gaps(curve, iv, window, scale, thr)
        _push_mark(marking, Mark(kind, first, last, line.coeffs))
        if last >= b:
            return
        t = last + 1
        nkind = "plane" if kind == "vector" else "vector"
        nline = (plines if nkind == "plane" else vlines)[t]
        neng = dual if nkind == "plane" else primal
        if not _short_at(nline, t, thr):
            raise MarkingError(
                f"no short {nkind} at alternation time {t} (run [{a},{b}])"
            )
        more, _ = neng.has_independent_short(t, thr)
        if more:
            raise MarkingError(
                f"short {nkind} at alternation time {t} is not unique"
            )
        kind, line, eng = nkind, nline, neng


def _push_mark(marking: MarkingSet, mark: Mark):
    """Append a mark; an exact-tie split excursion can re-select the
    previous witness, in which case its interval extends instead."""
    for prev in reversed(marking.marks):
        if prev.kind == mark.kind:
            if prev.coeffs == mark.coeffs and prev.first == mark.first:
                marking.marks.remove(prev)
                marking.marks.append(
                    Mark(mark.kind, prev.first, max(prev.last, mark.last), mark.coeffs)
                )
                return
            break
    marking.marks.append(mark)


def _check_growth_gaps(curve, iv, window, scale, thr):
    """Flow speed limits on the witness curve.

    size^2 changes per step by a factor between e^(2 min(s,t)) and
    e^(2 max(s,t)), so going from size >= 1 down to <= 1/M needs
    |min(s,t)| g >= 2 log M steps and back up needs max(s,t) g >= 2 log M
    (the vector case is the familiar log M down, 2 log M up).
    """
    one = Threshold(1)
    big = short_interval(curve, one, window)
    if big is None:
        return
    m_sq = scale.sq()
    shrink_rate = -min(curve.s, curve.t)
    grow_rate = max(curve.s, curve.t)
    if big[0] - 1 >= window[0] and big[0] - 1 < iv[0]:
        # size > 1 at big[0]-1, short at iv[0]
        gap = iv[0] - (big[0] - 1)
        if (ExpSum.single(1, 2 * shrink_rate * gap) - m_sq).sign() < 0:
            raise MarkingError("witness shrank faster than the flow allows")
    if big[1] + 1 <= window[1] and big[1] + 1 > iv[1]:
        gap = (big[1] + 1) - iv[1]
        if (ExpSum.single(1, 2 * grow_rate * gap) - m_sq).sign() < 0:
            raise MarkingError("witness grew faster than the flow allows")


def _assert_order(marking: MarkingSet):
    for seq in (marking.l_list, marking.l_prime, marking.p_list, marking.p_prime):
        if any(seq[i] > seq[i + 1] for i in range(len(seq) - 1)):
            raise MarkingError(f"marked times out of order: {seq}")


def verify_noninclusion(marking: MarkingSet):
    """No marked interval contains another (across both labels).

    Returns (True, None) or (False, (q, r, r', q')) with the offending
    pair of marked intervals.
    """
    intervals = [(m.first, m.last) for m in marking.marks]
    for i, (q, qp) in enumerate(intervals):
        for j, (r, rp) in enumerate(intervals):
            if i == j:
                continue
            if q <= r and rp <= qp:
                return False, (q, r, rp, qp)
    return True, None


def verify_separation(marking: MarkingSet, m):
    """Consecutive marks of one label differ by more than floor(log M),
    in both the plain and the primed lists."""
    gap = floor_log(m)
    for seq in (marking.l_list, marking.l_prime, marking.p_list, marking.p_prime):
        for i in range(len(seq) - 1):
            if seq[i + 1] - seq[i] <= gap:
                return False, (seq[i], seq[i + 1], gap)
    return True, None


def marking_family_census(
    samples,
    n_steps: int,
    m,
    config: PrecisionConfig = DEFAULT_PRECISION,
    threads: int = 1,
):
    """Distinct marking configurations over a sample of lattices.

    Returns (distinct_count, bound, keys) where bound is the counting
    estimate e^(10 N log(floor log M) / floor log M); it is astronomically
    loose and guards canonicalization bugs, not tightness.
    """
    scale = parse_scale(m)
    if scale.cmp_rational(_E4_FLOOR) < 0:
        raise ValueError("census requires M >= e^4")
    flog = floor_log(scale)
    window = (0, n_steps - 1)
    keys = set()

    def one(x):
        return extract_marking(x, window, scale, config).key()

    if threads > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=threads) as ex:
            for k in ex.map(one, samples, chunksize=64):
                keys.add(k)
    else:
        for x in samples:
            keys.add(one(x))
    bound = math.exp(10 * n_steps * math.log(flog) / flog)
    return len(keys), bound, keys


_E4_FLOOR = Fraction(545981500331442390781, 10**19)  # e^4, rounded down
