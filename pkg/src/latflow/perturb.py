"""Restrictions on unstable perturbations compatible with persistent shortness.

A perturbation g near the identity factors as a lower-unipotent unstable
part (coordinates t1, t2 in the bottom row) times a matrix with zero
(3,1),(3,2) entries.  When a vector (or plane) and its g-image both stay
1/M-short for S steps, the unstable coordinates are pinned to a small
ball (or strip); the grid-cover counters turn those constraints into
square counts against e^(3 S' - S)-type envelopes.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from fractions import Fraction

from .flow import LogLengthCurve, short_interval
from .scalars import ExpSum, Threshold, parse_scale

__all__ = [
    "UnstableFactorization",
    "RestrictionReport",
    "GridCoverReport",
    "factor_unstable",
    "sample_perturbations",
    "persistent_short_vector",
    "persistent_short_wedge",
    "check_vector_restriction",
    "check_plane_restriction",
    "square_cover_count",
    "forward_conjugation_check",
]


@dataclass(frozen=True)
class UnstableFactorization:
    """g = [[1,0,0],[0,1,0],[-t1,-t2,1]] . h with h31 = h32 = 0."""

    t1: float
    t2: float
    h: tuple[tuple[float, ...], ...]
    g: tuple[tuple[float, ...], ...]

    def residual(self) -> float:
        l = ((1, 0, 0), (0, 1, 0), (-self.t1, -self.t2, 1))
        r = 0.0
        for i in range(3):
            for j in range(3):
                lh = sum(l[i][k] * self.h[k][j] for k in range(3))
                r = max(r, abs(lh - self.g[i][j]))
        return r


def factor_unstable(g) -> UnstableFactorization:
    """Split off the unstable coordinates of a matrix near the identity.

    Solves the 2x2 system forcing zeros at (3,1), (3,2); the top-left
    2x2 block must be invertible (true near the identity).
    """
    g = tuple(tuple(float(v) for v in row) for row in g)
    det = g[0][0] * g[1][1] - g[1][0] * g[0][1]
    if abs(det) < 1e-12:
        raise ValueError("top 2x2 block is singular; perturbation too large")
    # t1 g[0] + t2 g[1] = -g[2] in the first two columns
    t1 = (-g[2][0] * g[1][1] + g[2][1] * g[1][0]) / det
    t2 = (-g[2][1] * g[0][0] + g[2][0] * g[0][1]) / det
    h3 = (0.0, 0.0, g[2][2] + t1 * g[0][2] + t2 * g[1][2])
    h = (g[0], g[1], h3)
    return UnstableFactorization(t1, t2, h, g)


def sample_perturbations(eta: float, count: int, seed: int):
    """Uniform max-norm samples on the 8 free coordinates around the
    identity; the (3,3) entry solves det = 1."""
    rng = random.Random(seed)
    out = []
    for _ in range(count):
        d = [[rng.uniform(-eta, eta) for _ in range(3)] for _ in range(3)]
        g = [[float(i == j) + d[i][j] for j in range(3)] for i in range(3)]
        c31 = g[0][1] * g[1][2] - g[0][2] * g[1][1]
        c32 = -(g[0][0] * g[1][2] - g[0][2] * g[1][0])
        c33 = g[0][0] * g[1][1] - g[0][1] * g[1][0]
        g[2][2] = (1.0 - g[2][0] * c31 - g[2][1] * c32) / c33
        out.append(tuple(tuple(row) for row in g))
    return out


def _vec_mat(v, g):
    return tuple(
        v[0] * g[0][j] + v[1] * g[1][j] + v[2] * g[2][j] for j in range(3)
    )


def _cofactor_t(g):
    """cof(g): for det 1, wedge coordinates transform by w -> w cof(g)."""
    return tuple(
        tuple(
            g[(i + 1) % 3][(j + 1) % 3] * g[(i + 2) % 3][(j + 2) % 3]
            - g[(i + 1) % 3][(j + 2) % 3] * g[(i + 2) % 3][(j + 1) % 3]
            for j in range(3)
        )
        for i in range(3)
    )


def persistent_short_vector(m, s_steps: int, rng: random.Random | None = None):
    """A rational vector of size >= 1/M whose flow stays 1/M-short on
    [1, S], with sampling room for nearby perturbations.

    Verified exactly against the threshold before returning.
    """
    scale = parse_scale(m)
    thr = Threshold.from_sq(scale.inv_sq())
    inv_m = 1 / float(scale)
    rho = 0.4 if rng is None else rng.uniform(0.05, 0.45)
    phi = 0.0 if rng is None else rng.uniform(0, 2 * math.pi)
    for shrink in (1.0, 0.5, 0.25):
        v3 = Fraction(round(1.04 * inv_m * 2**48), 2**48)
        planar = math.sqrt(rho * shrink) * math.exp(-s_steps / 2.0) * inv_m
        v1 = Fraction(round(planar * math.cos(phi) * 2**48), 2**48)
        v2 = Fraction(round(planar * math.sin(phi) * 2**48), 2**48)
        v = (v1, v2, v3)
        curve = LogLengthCurve.for_vector(v)
        sq0 = curve.sq_expsum(0)
        if (sq0 - scale.inv_sq()).sign() < 0:
            continue
        if short_interval(curve, thr, (1, s_steps)) == (1, s_steps):
            return v
    raise RuntimeError("could not construct a persistently short vector")


def persistent_short_wedge(m, s_steps: int, rng: random.Random | None = None):
    """Wedge coordinates of a plane with covolume >= 1/M staying
    1/M-short on [1, S]."""
    scale = parse_scale(m)
    thr = Threshold.from_sq(scale.inv_sq())
    inv_m = 1 / float(scale)
    rho = 0.4 if rng is None else rng.uniform(0.05, 0.45)
    phi = 0.0 if rng is None else rng.uniform(0, 2 * math.pi)
    for shrink in (1.0, 0.5, 0.25):
        planar = 1.04 * inv_m
        a = Fraction(round(planar * math.cos(phi) * 2**48), 2**48)
        b = Fraction(round(planar * math.sin(phi) * 2**48), 2**48)
        c = Fraction(round(math.sqrt(rho * shrink) * math.exp(-s_steps) * inv_m * 2**48), 2**48)
        w = (a, b, c)
        curve = LogLengthCurve.for_wedge(w)
        if (curve.sq_expsum(0) - scale.inv_sq()).sign() < 0:
            continue
        if short_interval(curve, thr, (1, s_steps)) == (1, s_steps):
            return w
    raise RuntimeError("could not construct a persistently short plane")


@dataclass
class RestrictionReport:
    lemma: str
    s: int
    s2: int | None
    samples: int
    skipped: int
    violations: int
    max_ratio: float
    seed: int
    eta: float
    bound: float
    c_value: float | None = None

    def to_dict(self) -> dict:
        d = {
            "lemma": self.lemma,
            "S": self.s,
            "S'": self.s2,
            "samples": self.samples,
            "skipped": self.skipped,
            "violations": self.violations,
            "maxRatio": self.max_ratio,
            "seed": self.seed,
            "eta": self.eta,
            "bound": self.bound,
        }
        if self.c_value is not None:
            d["C"] = self.c_value
        return d


def _stays_short_float(sq_at, inv_m_sq: float, s_steps: int) -> bool:
    return all(sq_at(k) <= inv_m_sq for k in range(1, s_steps + 1))


def check_vector_restriction(
    v, m, s_steps: int, g_samples=None, eta: float = 1e-2, seed: int = 0
) -> RestrictionReport:
    """Unstable coordinates of behavior-preserving perturbations of a
    persistently short vector stay in the ball t1^2 + t2^2 <= 8 e^-S.

    Samples failing the behavioral precondition (the perturbed vector
    must itself be >= 1/M and stay short on [1, S]) are skipped and
    counted, not asserted against.
    """
    scale = parse_scale(m)
    inv_m = 1 / float(scale)
    inv_m_sq = inv_m * inv_m
    vf = tuple(float(c) for c in v)
    # the lemma's precondition consequence for v itself, checked exactly
    planar = Fraction(v[0]) ** 2 + Fraction(v[1]) ** 2
    lhs = ExpSum.single(planar, 2 * s_steps) - ExpSum.rational(2 * Fraction(v[2]) ** 2)
    if lhs.sign() >= 0:
        raise ValueError("vector violates (v1^2+v2^2)/v3^2 < 2 e^-S")
    if g_samples is None:
        raise ValueError("need perturbation samples or a count")
    if isinstance(g_samples, int):
        count = g_samples
        g_samples = sample_perturbations(eta, count, seed)
    bound = 8.0 * math.exp(-s_steps)
    skipped = violations = used = 0
    max_ratio = 0.0
    for g in g_samples:
        u = _vec_mat(vf, g)
        # rescaled-metric sanity: |v - v g| <= |v| * d(1, g)
        dfro = math.sqrt(
            sum((g[i][j] - (i == j)) ** 2 for i in range(3) for j in range(3))
        )
        dv = math.sqrt(sum((a - b) ** 2 for a, b in zip(u, vf)))
        nv = math.sqrt(sum(a * a for a in vf))
        assert dv <= nv * dfro * (1 + 1e-9), "metric rescaling convention broken"
        u_sq0 = sum(a * a for a in u)
        if u_sq0 < inv_m_sq:
            skipped += 1
            continue
        pl = u[0] * u[0] + u[1] * u[1]
        zz = u[2] * u[2]
        if not _stays_short_float(
            lambda k: pl * math.exp(k) + zz * math.exp(-2 * k), inv_m_sq, s_steps
        ):
            skipped += 1
            continue
        used += 1
        f = factor_unstable(g)
        tt = f.t1 * f.t1 + f.t2 * f.t2
        ratio = tt / bound
        max_ratio = max(max_ratio, ratio)
        if tt > bound * (1 + 1e-12):
            violations += 1
    return RestrictionReport(
        lemma="vector-ball",
        s=s_steps,
        s2=None,
        samples=used,
        skipped=skipped,
        violations=violations,
        max_ratio=max_ratio,
        seed=seed,
        eta=eta,
        bound=bound,
    )


def check_plane_restriction(
    w, m, s_steps: int, g_samples=None, c: float = 16.0, eta: float = 1e-2, seed: int = 0
) -> RestrictionReport:
    """Behavior-preserving perturbations of a persistently short plane
    confine (a t1 + b t2)^2 / (a^2 + b^2) to C e^-2S; reports the
    empirical maximum as a C estimate."""
    scale = parse_scale(m)
    inv_m = 1 / float(scale)
    inv_m_sq = inv_m * inv_m
    wf = tuple(float(x) for x in w)
    a0, b0 = wf[0], wf[1]
    if g_samples is None:
        raise ValueError("need perturbation samples or a count")
    if isinstance(g_samples, int):
        g_samples = sample_perturbations(eta, g_samples, seed)
    bound = c * math.exp(-2 * s_steps)
    skipped = violations = used = 0
    max_ratio = 0.0
    for g in g_samples:
        w2 = _vec_mat(wf, _cofactor_t(g))
        sq0 = sum(x * x for x in w2)
        if sq0 < inv_m_sq:
            skipped += 1
            continue
        pl = w2[0] * w2[0] + w2[1] * w2[1]
        zz = w2[2] * w2[2]
        if not _stays_short_float(
            lambda k: pl * math.exp(-k) + zz * math.exp(2 * k), inv_m_sq, s_steps
        ):
            skipped += 1
            continue
        used += 1
        f = factor_unstable(g)
        strip = (a0 * f.t1 + b0 * f.t2) ** 2 / (a0 * a0 + b0 * b0)
        ratio = strip / bound
        max_ratio = max(max_ratio, ratio)
        if strip > bound * (1 + 1e-12):
            violations += 1
    return RestrictionReport(
        lemma="plane-strip",
        s=s_steps,
        s2=None,
        samples=used,
        skipped=skipped,
        violations=violations,
        max_ratio=max_ratio,
        seed=seed,
        eta=eta,
        bound=bound,
        c_value=c,
    )


@dataclass
class GridCoverReport:
    kind: str
    s: float
    s2: float
    eta: float
    c: float
    square_side: float
    count: int
    bound: float

    @property
    def ratio(self) -> float:
        return self.count / self.bound

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "S": self.s,
            "S'": self.s2,
            "eta": self.eta,
            "C": self.c,
            "squareSide": self.square_side,
            "intersectCount": self.count,
            "bound": self.bound,
            "ratio": self.ratio,
        }


def _grid_meta(s2: float, eta: float):
    side = 0.5 * eta * math.exp(-1.5 * s2)
    k = math.ceil(2 * eta / side)
    return side, k


def _rows_within(limit: float, side: float, k: int) -> int:
    """Number of grid indices i in [-k, k) whose square [i s, (i+1) s]
    comes within `limit` of 0: nearest-point offsets are m * side with
    m = max(i, -i-1), each m < k appearing exactly twice."""
    if limit < 0:
        return 0
    m_hi = min(int(limit / side) + 2, k - 1)
    while m_hi >= 0:
        x = m_hi * side
        if x * x <= limit * limit:
            break
        m_hi -= 1
    return 2 * (m_hi + 1) if m_hi >= 0 else 0


def square_cover_count(kind: str, s: float, s2: float, eta: float, c: float = 16.0) -> GridCoverReport:
    """Exact count of grid squares meeting the perturbation region.

    Squares have side eta/2 * e^(-3 s2/2) and tile [-2 eta, 2 eta]^2
    anchored at the origin (a vanishing ball meets exactly the 4 squares
    at the origin).  kind='ball' is t1^2+t2^2 <= 8 e^-S; kind='strip' is
    the axis-aligned worst case |t2| <= sqrt(C) e^-S.  The bound field
    carries the counting estimate max{1, e^(3S'-S)} resp.
    max{e^(3S'/2), e^(3S'-S)}.
    """
    side, k = _grid_meta(s2, eta)
    if kind == "ball":
        r = math.sqrt(8.0) * math.exp(-0.5 * s)
        rr = r * r
        count = 0
        mj = 0
        while mj < k:
            y = mj * side
            if y * y > rr:
                break
            # columns whose nearest x-offset mi*side keeps the square in the disk
            mi = min(int(math.sqrt(max(rr - y * y, 0.0)) / side) + 2, k - 1)
            while mi >= 0:
                x = mi * side
                if x * x + y * y <= rr:
                    break
                mi -= 1
            if mi >= 0:
                count += 4 * (mi + 1)
            mj += 1
        bound = max(1.0, math.exp(3 * s2 - s))
    elif kind == "strip":
        w = math.sqrt(c) * math.exp(-s)
        rows = _rows_within(w, side, k)
        count = rows * 2 * k
        bound = max(math.exp(1.5 * s2), math.exp(3 * s2 - s))
    else:
        raise ValueError(f"unknown cover kind {kind!r}")
    return GridCoverReport(
        kind=kind, s=s, s2=s2, eta=eta, c=c, square_side=side, count=count, bound=bound
    )


def forward_conjugation_check(t1: float, t2: float, n: int, eta: float) -> bool:
    """Conjugating the time-n contraction of an unstable element back by
    k < n steps keeps it inside the original unstable box."""
    if not (abs(t1) < eta and abs(t2) < eta):
        raise ValueError("element outside the unstable box")
    for k in range(n):
        f = math.exp(-1.5 * (n - k))
        if not (abs(t1) * f < eta and abs(t2) * f < eta):
            return False
    return True
