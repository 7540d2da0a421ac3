"""Independent brute-force oracles.

Everything here recomputes results by a different route than the
production code: box enumeration instead of pruned search, textbook LLL
instead of incremental greedy reduction, per-step linear scans instead
of closed-form curve intervals, full rasterization instead of row
counting.  Exact threshold decisions still go through the shared exact
scalar layer, so oracle and production can only disagree if the lattice
logic itself disagrees.
"""

from __future__ import annotations

import math
from fractions import Fraction

import mpmath
import numpy as np

from .lattice import UnimodularLattice
from .scalars import Cmp, ExpSum, Threshold
from .svp import mat_inverse_transpose, primitive_part

__all__ = [
    "oracle_shortest_vector",
    "oracle_min_plane_pairwise",
    "oracle_short_interval",
    "OracleBasis",
    "oracle_cover_count",
]


def _lll_float(basis: np.ndarray, delta: float = 0.99):
    """Textbook LLL on float rows; returns (reduced rows, int transform)."""
    b = basis.astype(float).copy()
    u = [[int(i == j) for j in range(3)] for i in range(3)]

    def gso(b):
        bs = b.copy()
        mu = np.zeros((3, 3))
        for i in range(1, 3):
            for j in range(i):
                mu[i, j] = b[i] @ bs[j] / (bs[j] @ bs[j])
                bs[i] = bs[i] - mu[i, j] * bs[j]
        return bs, mu

    k = 1
    for _ in range(300):
        if k >= 3:
            break
        bs, mu = gso(b)
        for j in range(k - 1, -1, -1):
            q = round(mu[k, j])
            if q:
                b[k] -= q * b[j]
                u[k] = [u[k][c] - q * u[j][c] for c in range(3)]
                bs, mu = gso(b)
        if bs[k] @ bs[k] >= (delta - mu[k, k - 1] ** 2) * (bs[k - 1] @ bs[k - 1]):
            k += 1
        else:
            b[[k - 1, k]] = b[[k, k - 1]]
            u[k - 1], u[k] = u[k], u[k - 1]
            k = max(k - 1, 1)
    return b, u


def _certified_box(b: np.ndarray, radius_sq: float):
    """Coefficient ranges guaranteed to contain every vector with
    squared length <= radius_sq over the reduced rows b."""
    bs = b.copy()
    mu = np.zeros((3, 3))
    for i in range(1, 3):
        for j in range(i):
            mu[i, j] = b[i] @ bs[j] / (bs[j] @ bs[j])
            bs[i] = bs[i] - mu[i, j] * bs[j]
    d = [bs[i] @ bs[i] for i in range(3)]
    lam = math.sqrt(radius_sq * (1 + 1e-9))
    c3 = math.floor(lam / math.sqrt(d[2]) + 1e-9)
    c2 = math.floor(lam / math.sqrt(d[1]) + abs(mu[2, 1]) * c3 + 1e-9)
    c1 = math.floor(
        lam / math.sqrt(d[0]) + abs(mu[1, 0]) * c2 + abs(mu[2, 0]) * c3 + 1e-9
    )
    return c1, c2, c3


def _box_coeffs(c1: int, c2: int, c3: int) -> np.ndarray:
    g = np.mgrid[-c1 : c1 + 1, -c2 : c2 + 1, -c3 : c3 + 1]
    cs = g.reshape(3, -1).T
    return cs[np.any(cs != 0, axis=1)]


def oracle_shortest_vector(x: UnimodularLattice):
    """Shortest vector by exhaustive enumeration of a certified box.

    Returns (coeffs, squared length as an exact Fraction).
    """
    bf = np.array([[float(v) for v in row] for row in x.basis])
    red, u = _lll_float(bf)
    r2 = float(min(np.sum(red * red, axis=1)))
    box = _certified_box(red, r2)
    cs = _box_coeffs(*box)
    vecs = cs @ red
    sq = np.sum(vecs * vecs, axis=1)
    cutoff = sq.min() * (1 + 1e-9)
    best_sq = None
    best_c = None
    for idx in np.nonzero(sq <= cutoff)[0]:
        c_red = cs[idx]
        c = tuple(
            int(c_red[0] * u[0][j] + c_red[1] * u[1][j] + c_red[2] * u[2][j])
            for j in range(3)
        )
        amb = [
            sum(Fraction(c[i]) * x.basis[i][j] for i in range(3)) for j in range(3)
        ]
        s = sum(a * a for a in amb)
        if best_sq is None or s < best_sq or (s == best_sq and c < best_c):
            best_sq, best_c = s, primitive_part(c)
    return best_c, best_sq


def oracle_min_plane_pairwise(x: UnimodularLattice):
    """Smallest plane covolume by enumerating primitive vector pairs.

    Every plane of covolume below the reduced-basis bound has a reduced
    generating pair inside the search radius, so the pairwise wedge
    minimum is certified.  Returns (dual coeffs, covolume^2 Fraction).
    """
    bf = np.array([[float(v) for v in row] for row in x.basis])
    red, u = _lll_float(bf)
    _, lam1_sq = oracle_shortest_vector(x)
    w = np.cross(red[0], red[1])
    cov_ub_sq = float(w @ w) * (1 + 1e-9)
    radius_sq = (4.0 / 3.0) * cov_ub_sq / float(lam1_sq) * (1 + 1e-9)
    box = _certified_box(red, radius_sq)
    cs = _box_coeffs(*box)
    vecs = cs @ red
    keep = np.sum(vecs * vecs, axis=1) <= radius_sq
    cs = cs[keep]
    vecs = vecs[keep]
    # one representative per +- pair
    sign_keep = []
    for i, c in enumerate(cs):
        nz = c[np.nonzero(c)[0][0]]
        if nz > 0:
            sign_keep.append(i)
    cs = cs[sign_keep]
    vecs = vecs[sign_keep]
    n = len(cs)
    best = None  # (cov_sq Fraction, dual coeffs)
    best_f = math.inf
    um = np.array(u)
    for i in range(n):
        ws = np.cross(vecs[i], vecs[i + 1 :])
        norms = np.sum(ws * ws, axis=1)
        nz = norms > 0
        if not np.any(nz):
            continue
        jrel = np.nonzero(nz)[0]
        for j in jrel[np.argsort(norms[jrel])[: 8]]:
            nf = norms[j]
            if nf > best_f * (1 + 1e-9) and best is not None:
                continue
            ci = cs[i] @ um
            cj = cs[i + 1 + j] @ um
            d = (
                ci[1] * cj[2] - ci[2] * cj[1],
                ci[2] * cj[0] - ci[0] * cj[2],
                ci[0] * cj[1] - ci[1] * cj[0],
            )
            if not any(d):
                continue  # integer-parallel pair; float cross was noise
            d = primitive_part(tuple(int(v) for v in d))
            dual = mat_inverse_transpose(x.basis)
            amb = [
                sum(Fraction(d[i2]) * dual[i2][j2] for i2 in range(3))
                for j2 in range(3)
            ]
            cov_sq = sum(a * a for a in amb)
            if best is None or cov_sq < best[0] or (cov_sq == best[0] and d < best[1]):
                best = (cov_sq, d)
                best_f = float(cov_sq)
    return best[1], best[0]


def oracle_short_interval(curve, eps, window: tuple[int, int]):
    """Linear scan of {n in window : size(n) <= eps}; checks the result
    is a contiguous interval."""
    thr = eps if isinstance(eps, Threshold) else Threshold(eps)
    hits = [
        n
        for n in range(window[0], window[1] + 1)
        if thr.cmp_sq(curve.sq_expsum(n)) != Cmp.GT
    ]
    if not hits:
        return None
    assert hits == list(range(hits[0], hits[-1] + 1)), "sub-level set not an interval"
    return (hits[0], hits[-1])


class OracleBasis:
    """Fresh per-step reduction with mpf mirrors, for the prose replay.

    Independent of the production engine: textbook LLL over mpf values
    re-rounded from exact Gram parts, rectangular certified boxes, and
    no curve reasoning.  Exact decisions go through ExpSum signs.
    """

    def __init__(self, x: UnimodularLattice, dual: bool = False, bits: int = 212):
        basis = mat_inverse_transpose(x.basis) if dual else x.basis
        self.s, self.t = (-1, 2) if dual else (1, -2)
        self.bits = bits
        self.p0 = tuple(
            tuple(
                basis[i][0] * basis[j][0] + basis[i][1] * basis[j][1]
                for j in range(3)
            )
            for i in range(3)
        )
        self.q0 = tuple(
            tuple(basis[i][2] * basis[j][2] for j in range(3)) for i in range(3)
        )
        self.u = [[int(i == j) for j in range(3)] for i in range(3)]
        self._exact()

    def _exact(self):
        def bil(m, a, b):
            return sum(
                a[i] * sum(m[i][j] * b[j] for j in range(3)) for i in range(3)
            )

        u = self.u
        self.pu = [[bil(self.p0, u[i], u[j]) for j in range(3)] for i in range(3)]
        self.qu = [[bil(self.q0, u[i], u[j]) for j in range(3)] for i in range(3)]

    def _gram(self, n: int):
        with mpmath.workprec(self.bits):
            es = mpmath.exp(self.s * n)
            et = mpmath.exp(self.t * n)

            def conv(fr):
                return mpmath.mpf(fr.numerator) / fr.denominator

            return [
                [conv(self.pu[i][j]) * es + conv(self.qu[i][j]) * et for j in range(3)]
                for i in range(3)
            ]

    def curve(self, c_orig) -> tuple[Fraction, Fraction]:
        def q(m):
            return sum(
                c_orig[i] * sum(m[i][j] * c_orig[j] for j in range(3))
                for i in range(3)
            )

        return q(self.p0), q(self.q0)

    def sq_expsum(self, c_orig, n: int) -> ExpSum:
        a, b = self.curve(c_orig)
        return ExpSum.of_terms((a, 2 * self.s * n), (b, 2 * self.t * n))

    def to_orig(self, c):
        u = self.u
        return tuple(
            int(c[0] * u[0][j] + c[1] * u[1][j] + c[2] * u[2][j]) for j in range(3)
        )

    @staticmethod
    def _half_round(mu):
        # floor(mu + 1/2): ties resolve downward, so mu = +-1/2 cannot
        # oscillate the size reduction forever
        return int(mpmath.floor(mu + mpmath.mpf(1) / 2))

    def _gso(self, g):
        d1 = g[0][0]
        mu21 = g[1][0] / d1
        d2 = g[1][1] - mu21 * mu21 * d1
        mu31 = g[2][0] / d1
        mu32 = (g[2][1] - mu31 * mu21 * d1) / d2
        d3 = g[2][2] - mu31 * mu31 * d1 - mu32 * mu32 * d2
        return d1, d2, d3, mu21, mu31, mu32

    def _size_reduce(self, g, i: int, j: int, mu) -> bool:
        """u_i -= round(mu) u_j if that strictly shrinks row i.

        The strictness guard keeps mu = +-1/2 ties (where the norm is
        unchanged and mpf noise flips the rounding) from oscillating.
        """
        q = self._half_round(mu)
        if not q:
            return False
        new_sq = g[i][i] - 2 * q * g[i][j] + q * q * g[j][j]
        if not new_sq < g[i][i] * (1 - mpmath.mpf(2) ** -60):
            return False
        self.u[i] = [self.u[i][c] - q * self.u[j][c] for c in range(3)]
        self._exact()
        return True

    def lll(self, n: int, delta: float = 0.99):
        with mpmath.workprec(self.bits):
            for _ in range(600):
                g = self._gram(n)
                d1, d2, d3, mu21, mu31, mu32 = self._gso(g)
                if self._size_reduce(g, 1, 0, g[1][0] / g[0][0]):
                    continue
                if self._size_reduce(g, 2, 1, g[2][1] / g[1][1]):
                    continue
                if self._size_reduce(g, 2, 0, g[2][0] / g[0][0]):
                    continue
                if d2 < (delta - mu21 * mu21) * d1:
                    self.u[0], self.u[1] = self.u[1], self.u[0]
                    self._exact()
                    continue
                if d3 < (delta - mu32 * mu32) * d2:
                    self.u[1], self.u[2] = self.u[2], self.u[1]
                    self._exact()
                    continue
                break
            else:
                raise RuntimeError("oracle reduction did not settle")

    def shortest(self, n: int):
        """(orig coeffs, exact squared-size ExpSum at n) of a certified
        shortest vector."""
        self.lll(n)
        with mpmath.workprec(self.bits):
            g = self._gram(n)
            d1, d2, d3, mu21, mu31, mu32 = self._gso(g)
            lam = mpmath.sqrt(min(g[i][i] for i in range(3))) * (1 + mpmath.mpf(2) ** -40)
            c3 = int(mpmath.floor(lam / mpmath.sqrt(d3)))
            c2 = int(mpmath.floor(lam / mpmath.sqrt(d2) + abs(mu32) * c3))
            c1 = int(
                mpmath.floor(
                    lam / mpmath.sqrt(d1) + abs(mu21) * c2 + abs(mu31) * c3
                )
            )
        best = None
        best_sq = None
        for a in range(-c1, c1 + 1):
            for b in range(-c2, c2 + 1):
                for c in range(-c3, c3 + 1):
                    if (a, b, c) <= (0, 0, 0):
                        continue
                    co = primitive_part(self.to_orig((a, b, c)))
                    sq = self.sq_expsum(co, n)
                    if best is None or (sq - best_sq).sign() < 0:
                        best, best_sq = co, sq
        return best, best_sq

    def independent_short(self, n: int, thr: Threshold, b1_orig):
        """A short line independent of b1, or None (certified).

        Works through the lattice projected off b1, lifting candidate
        classes back and minimizing over the b1-component.
        """
        self.lll(n)
        with mpmath.workprec(self.bits):
            g = self._gram(n)
            d1, d2, d3, mu21, mu31, mu32 = self._gso(g)
            # 2D Gauss bound on the projected lattice
            a2, b2c, c2c = d2, mu32 * d2, d3 + mu32 * mu32 * d2
            for _ in range(80):
                if a2 > c2c:
                    a2, c2c = c2c, a2
                k = self._half_round(b2c / a2)
                if k == 0:
                    break
                c2c = c2c - 2 * k * b2c + k * k * a2
                b2c = b2c - k * a2
            tf = mpmath.mpf(thr.sq_float)
            if min(a2, c2c) > tf * (1 + mpmath.mpf(2) ** -30):
                return None
            # candidate projected classes within the threshold
            w3 = int(mpmath.floor(mpmath.sqrt(tf / d3) * (1 + mpmath.mpf(2) ** -30))) + 1
            w2 = int(
                mpmath.floor(mpmath.sqrt(tf / d2) + abs(mu32) * w3)
            ) + 1
        for cc3 in range(0, w3 + 1):
            for cc2 in range(-w2, w2 + 1):
                if cc3 == 0 and cc2 <= 0:
                    continue
                # best integer b1-component
                with mpmath.workprec(self.bits):
                    ctr = -(mu21 * cc2 + mu31 * cc3)
                    k0 = self._half_round(ctr)
                for k in (k0 - 1, k0, k0 + 1):
                    co = primitive_part(self.to_orig((k, cc2, cc3)))
                    if co == b1_orig:
                        continue
                    if thr.cmp_sq(self.sq_expsum(co, n)) != Cmp.GT:
                        return co
        return None


def oracle_cover_count(kind: str, s: float, s2: float, eta: float, c: float) -> int:
    """Exhaustive rasterization of the grid-cover count.

    Counts squares of side eta/2 * e^(-3 s2 / 2), in the grid anchored at
    the origin and tiling [-2 eta, 2 eta]^2, that meet the ball of radius
    sqrt(8) e^(-s/2) (kind='ball') or the horizontal strip of half-width
    sqrt(c) e^(-s) (kind='strip').  The nearest corner of the square with
    index i sits at offset max(i, -i-1) * side, evaluated with the same
    float expressions as the production counter so boundary squares
    cannot disagree by rounding.
    """
    side = 0.5 * eta * math.exp(-1.5 * s2)
    k = math.ceil(2 * eta / side)
    if 4 * k * k > 4e8:
        raise MemoryError("rasterization grid too large; use the row counter")
    idx = np.arange(-k, k)
    near = np.maximum(idx, -idx - 1) * side  # distance of square i from 0
    count = 0
    if kind == "ball":
        r = math.sqrt(8.0) * math.exp(-0.5 * s)
        rr = r * r
        nn = near * near
        for i in range(len(idx)):
            dx2 = near[i] * near[i]
            if dx2 > rr:
                continue
            count += int(np.count_nonzero(dx2 + nn <= rr))
    elif kind == "strip":
        w = math.sqrt(c) * math.exp(-s)
        rows = int(np.count_nonzero(near * near <= w * w))
        count = rows * len(idx)
    else:
        raise ValueError(f"unknown cover kind {kind!r}")
    return count


def oracle_marking(x: UnimodularLattice, window, m, config=None):
    """Prose replay of the marked-times construction, no closed forms.

    Recomputes shortest vectors and planes at every step with the
    independent OracleBasis machinery and finds first/last shortness
    times by stepwise scans instead of curve intervals.
    """
    from .marking import Mark, MarkingError, MarkingSet
    from .scalars import DEFAULT_PRECISION, PrecisionError, parse_scale

    if config is None:
        config = DEFAULT_PRECISION
    scale = parse_scale(m)
    thr = Threshold.from_sq(scale.inv_sq(), config)
    n0, n1 = int(window[0]), int(window[1])
    ob = OracleBasis(x)
    obd = OracleBasis(x, dual=True)
    vrep: dict[int, tuple] = {}
    prep: dict[int, tuple] = {}
    above = []
    for n in range(n0, n1 + 1):
        cv, sqv = ob.shortest(n)
        cp, sqp = obd.shortest(n)
        vrep[n] = cv
        prep[n] = cp
        av = thr.cmp_sq(sqv)
        ap = thr.cmp_sq(sqp)
        if Cmp.UNCERTAIN in (av, ap):
            raise PrecisionError(f"oracle: uncertain height at step {n}")
        above.append(av == Cmp.LT or ap == Cmp.LT)

    def short(basis_obj, coeffs, k: int) -> bool:
        return thr.cmp_sq(basis_obj.sq_expsum(coeffs, k)) != Cmp.GT

    def scan_back(basis_obj, coeffs, anchor: int) -> int:
        k = anchor
        while k - 1 >= n0 and short(basis_obj, coeffs, k - 1):
            k -= 1
        return k

    def scan_fwd(basis_obj, coeffs, anchor: int, stop: int) -> int:
        k = anchor
        while k + 1 <= stop and short(basis_obj, coeffs, k + 1):
            k += 1
        return k

    marking = MarkingSet(window=(n0, n1), m_text=str(m))

    def push(kind, first, last, coeffs):
        for prev in reversed(marking.marks):
            if prev.kind == kind:
                if prev.coeffs == coeffs and prev.first == first:
                    marking.marks.remove(prev)
                    marking.marks.append(
                        Mark(kind, first, max(prev.last, last), coeffs)
                    )
                    return
                break
        marking.marks.append(Mark(kind, first, last, coeffs))

    # maximal runs of strictly-above steps
    runs = []
    start = None
    for i, f in enumerate(above):
        if f and start is None:
            start = i
        elif not f and start is not None:
            runs.append((start + n0, i - 1 + n0))
            start = None
    if start is not None:
        runs.append((start + n0, n1))

    for a, b in runs:
        cand = []
        if short(ob, vrep[a], a):
            cand.append(("vector", ob, vrep[a]))
        if short(obd, prep[a], a):
            cand.append(("plane", obd, prep[a]))
        if not cand:
            raise MarkingError(f"oracle: nothing short at run start {a}")
        if a > n0:
            for kind, basis_obj, coeffs in cand:
                if basis_obj.independent_short(a, thr, coeffs) is not None:
                    raise MarkingError(
                        f"oracle: multiple short {kind}s at run start {a}"
                    )
        if len(cand) == 2:
            pv = scan_fwd(ob, cand[0][2], a, b)
            pp = scan_fwd(obd, cand[1][2], a, b)
            kind, basis_obj, coeffs = cand[0] if pv >= pp else cand[1]
        else:
            kind, basis_obj, coeffs = cand[0]

        anchor = a
        guard = 2 * (b - a) + 4
        while True:
            guard -= 1
            if guard < 0:
                raise MarkingError("oracle: alternation did not terminate")
            first = scan_back(basis_obj, coeffs, anchor)
            last = scan_fwd(basis_obj, coeffs, anchor, b)
            push(kind, first, last, coeffs)
            if last >= b:
                break
            t = last + 1
            kind = "plane" if kind == "vector" else "vector"
            basis_obj = obd if kind == "plane" else ob
            coeffs = (prep if kind == "plane" else vrep)[t]
            if not short(basis_obj, coeffs, t):
                raise MarkingError(f"oracle: no short {kind} at alternation {t}")
            if basis_obj.independent_short(t, thr, coeffs) is not None:
                raise MarkingError(f"oracle: short {kind} at {t} not unique")
            anchor = t
    return marking
