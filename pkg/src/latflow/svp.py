"""Certified shortest-vector machinery for 3D lattices along the flow.

The Gram matrix of a flowed basis splits as G(n) = P e^(s n) + Q e^(t n)
with exact rational P, Q ((s,t) = (1,-2) for vectors, (-1,2) for wedge
coordinates).  All search decisions run on float mirrors that are
rounded once from exact values, so nothing accumulates over an orbit;
near-threshold decisions are replayed on the exact two-term curves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .scalars import Cmp, ExpSum, Threshold

Mat3 = tuple[tuple[Fraction, ...], ...]

_IDENT = ((1, 0, 0), (0, 1, 0), (0, 0, 1))
# Relative slack for float-vs-exact handoff in enumeration radii.
_SLACK = 1e-6
_MAX_NODES = 500_000


class EnumerationBudgetError(RuntimeError):
    """Complete enumeration would exceed the node budget."""


def mat_fractions(rows) -> Mat3:
    return tuple(tuple(Fraction(x) for x in row) for row in rows)


def mat_det(m: Mat3) -> Fraction:
    return (
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    )


def mat_inverse_transpose(m: Mat3) -> Mat3:
    """Exact (m^T)^-1 via the adjugate."""
    det = mat_det(m)
    if det == 0:
        raise ValueError("matrix is singular")
    cof = [
        [
            m[(i + 1) % 3][(j + 1) % 3] * m[(i + 2) % 3][(j + 2) % 3]
            - m[(i + 1) % 3][(j + 2) % 3] * m[(i + 2) % 3][(j + 1) % 3]
            for j in range(3)
        ]
        for i in range(3)
    ]
    # inverse = adj/det = cof^T/det, so inverse transpose = cof/det
    return tuple(tuple(c / det for c in row) for row in cof)


def row_times_mat(c, m: Mat3):
    return tuple(
        c[0] * m[0][j] + c[1] * m[1][j] + c[2] * m[2][j] for j in range(3)
    )


def canonical_sign(c):
    """Flip sign so the first nonzero coefficient is positive."""
    for x in c:
        if x:
            return tuple(t for t in c) if x > 0 else tuple(-t for t in c)
    return tuple(c)


def primitive_part(c):
    g = math.gcd(math.gcd(abs(c[0]), abs(c[1])), abs(c[2]))
    if g <= 1:
        return canonical_sign(c)
    return canonical_sign(tuple(x // g for x in c))


@dataclass(frozen=True)
class ShortLine:
    """A primitive lattice direction with its exact squared-size curve.

    coeffs are in the original basis frame; the squared size at step n is
    a * e^(s n) + b * e^(t n).
    """

    coeffs: tuple[int, int, int]
    a: Fraction
    b: Fraction
    s: int
    t: int

    def sq_expsum(self, n: int) -> ExpSum:
        return ExpSum.of_terms((self.a, 2 * self.s * n), (self.b, 2 * self.t * n))

    def sq_float(self, n: int) -> float:
        return self.sq_expsum(n).to_float()


def _quad_form(m: Mat3, c) -> Fraction:
    acc = Fraction(0)
    for i in range(3):
        ci = c[i]
        if not ci:
            continue
        row = m[i]
        acc += ci * (row[0] * c[0] + row[1] * c[1] + row[2] * c[2])
    return acc


class FlowGram:
    """Reduction/enumeration state for one lattice under the flow.

    Holds the exact Gram parts of the current (unimodularly transformed)
    basis and a float mirror refreshed from them.  The transform persists
    between steps, so walking an orbit re-reduces incrementally.
    """

    def __init__(self, p0: Mat3, q0: Mat3, s: int, t: int):
        self.p0 = p0
        self.q0 = q0
        self.s = s
        self.t = t
        self.u = [list(r) for r in _IDENT]
        self._refresh()

    def _refresh(self):
        u = self.u
        pu = [[Fraction(0)] * 3 for _ in range(3)]
        qu = [[Fraction(0)] * 3 for _ in range(3)]
        for i in range(3):
            for j in range(i + 1):
                pij = _quad_bilinear(self.p0, u[i], u[j])
                qij = _quad_bilinear(self.q0, u[i], u[j])
                pu[i][j] = pu[j][i] = pij
                qu[i][j] = qu[j][i] = qij
        self.pu = pu
        self.qu = qu
        self.puf = [[float(x) for x in row] for row in pu]
        self.quf = [[float(x) for x in row] for row in qu]

    # -- frames ----------------------------------------------------------

    def to_original(self, c_cur) -> tuple[int, int, int]:
        u = self.u
        return tuple(
            c_cur[0] * u[0][j] + c_cur[1] * u[1][j] + c_cur[2] * u[2][j]
            for j in range(3)
        )

    def curve_of(self, c_orig) -> tuple[Fraction, Fraction]:
        return _quad_form(self.p0, c_orig), _quad_form(self.q0, c_orig)

    def line_of(self, c_cur) -> ShortLine:
        c = primitive_part(self.to_original(c_cur))
        a, b = self.curve_of(c)
        return ShortLine(c, a, b, self.s, self.t)

    def sq_expsum_orig(self, c_orig, n: int) -> ExpSum:
        a, b = self.curve_of(c_orig)
        return ExpSum.of_terms((a, 2 * self.s * n), (b, 2 * self.t * n))

    # -- float evaluation --------------------------------------------------

    def gram_float(self, n: int):
        es = self.s * n
        et = self.t * n
        if abs(es) > 640 or abs(et) > 640:
            raise ValueError(f"flow step {n} exceeds float evaluation range")
        fs = math.exp(es)
        ft = math.exp(et)
        p, q = self.puf, self.quf
        return [
            [p[i][j] * fs + q[i][j] * ft for j in range(3)] for i in range(3)
        ]

    # -- reduction ---------------------------------------------------------

    def reduce(self, n: int):
        """Greedy (Minkowski-style) reduction of the basis at step n.

        The float Gram is re-rounded from the exact parts after every
        transform: reduction steps in a deep cusp excursion use huge
        multipliers, and incremental float updates would cancel away all
        precision there.
        """
        for _ in range(150):
            g = self.gram_float(n)
            if g[0][0] <= 0 or g[1][1] <= 0 or g[2][2] <= 0:
                raise ArithmeticError("degenerate Gram matrix")
            order = sorted(range(3), key=lambda i: g[i][i])
            if order != [0, 1, 2]:
                self.u = [self.u[i] for i in order]
                self._refresh()
                continue
            op = self._pair_op(g) or self._third_op(g)
            if op is None:
                break
            i, ks = op
            ui = self.u[i]
            self.u[i] = [
                ui[c] - ks[0] * self.u[0][c] - ks[1] * self.u[1][c]
                for c in range(3)
            ]
            self._refresh()
        else:
            raise RuntimeError("basis reduction did not settle")

    def _pair_op(self, g):
        k = round(g[1][0] / g[0][0])
        if k:
            new_sq = g[1][1] - 2 * k * g[1][0] + k * k * g[0][0]
            if new_sq < g[1][1] * (1 - 1e-13):
                return 1, (k, 0)
        return None

    def _third_op(self, g):
        g00, g01, g11 = g[0][0], g[1][0], g[1][1]
        det = g00 * g11 - g01 * g01
        if det <= 0:
            raise ArithmeticError("degenerate Gram matrix")
        x1 = (g[2][0] * g11 - g[2][1] * g01) / det
        x2 = (g[2][1] * g00 - g[2][0] * g01) / det
        best_sq = g[2][2]
        best = None
        for k1 in (math.floor(x1), math.ceil(x1)):
            for k2 in (math.floor(x2), math.ceil(x2)):
                for d1 in (0, -1, 1):
                    for d2 in (0, -1, 1):
                        a, b = k1 + d1, k2 + d2
                        if a == 0 and b == 0:
                            continue
                        sq = (
                            g[2][2]
                            - 2 * a * g[2][0]
                            - 2 * b * g[2][1]
                            + a * a * g00
                            + 2 * a * b * g01
                            + b * b * g11
                        )
                        if sq < best_sq * (1 - 1e-13):
                            best_sq = sq
                            best = (a, b)
        if best is not None:
            return 2, best
        return None

    # -- enumeration -------------------------------------------------------

    def _gs(self, g):
        d1 = g[0][0]
        mu21 = g[1][0] / d1
        d2 = g[1][1] - mu21 * mu21 * d1
        mu31 = g[2][0] / d1
        mu32 = (g[2][1] - mu31 * mu21 * d1) / d2
        d3 = g[2][2] - mu31 * mu31 * d1 - mu32 * mu32 * d2
        return d1, d2, d3, mu21, mu31, mu32

    def enumerate_sq(self, n: int, r2: float, max_nodes: int = _MAX_NODES):
        """Yield (c_cur, sq_float) over primitive c with sq <= r2 (inflated).

        The basis must be reduced at n.  One representative per +/- pair;
        pure multiples of the first basis vector collapse to it.  Raises
        EnumerationBudgetError when the node budget runs out.
        """
        g = self.gram_float(n)
        d1, d2, d3, mu21, mu31, mu32 = self._gs(g)
        if min(d1, d2, d3) <= 0:
            raise ArithmeticError("degenerate Gram matrix")
        bound = r2 * (1 + _SLACK)
        nodes = 0
        z3 = math.floor(math.sqrt(bound / d3)) if bound > 0 else -1
        for c3 in range(0, z3 + 1):
            rem2 = bound - d3 * c3 * c3
            if rem2 < 0:
                break
            w2 = math.sqrt(rem2 / d2)
            ctr2 = -mu32 * c3
            lo2 = math.ceil(ctr2 - w2)
            hi2 = math.floor(ctr2 + w2)
            for c2 in range(lo2, hi2 + 1):
                if c3 == 0 and c2 < 0:
                    continue
                if c3 == 0 and c2 == 0:
                    # the b1 line itself; skip higher multiples
                    sq = g[0][0]
                    if sq <= bound:
                        yield (1, 0, 0), sq
                    continue
                off2 = c2 - ctr2
                rem1 = rem2 - d2 * off2 * off2
                if rem1 < 0:
                    continue
                w1 = math.sqrt(rem1 / d1)
                ctr1 = -mu21 * c2 - mu31 * c3
                lo1 = math.ceil(ctr1 - w1)
                hi1 = math.floor(ctr1 + w1)
                for c1 in range(lo1, hi1 + 1):
                    nodes += 1
                    if nodes > max_nodes:
                        raise EnumerationBudgetError(
                            f"enumeration exceeded {max_nodes} nodes"
                        )
                    if math.gcd(math.gcd(abs(c1), abs(c2)), abs(c3)) > 1:
                        continue
                    off1 = c1 - ctr1
                    sq = d1 * off1 * off1 + d2 * off2 * off2 + d3 * c3 * c3
                    if sq <= bound:
                        yield (c1, c2, c3), sq

    def shortest(self, n: int) -> ShortLine:
        """Certified shortest nonzero vector at step n."""
        self.reduce(n)
        g = self.gram_float(n)
        r2 = g[0][0]
        cands = list(self.enumerate_sq(n, r2))
        best_sq = min(sq for _, sq in cands)
        close = [c for c, sq in cands if sq <= best_sq * (1 + 1e-9)]
        if len(close) == 1:
            return self.line_of(close[0])
        # exact tie-break among near-minimal candidates
        lines = {}
        for c in close:
            ln = self.line_of(c)
            lines[ln.coeffs] = ln
        ordered = sorted(lines.values(), key=lambda l: l.coeffs)
        best = ordered[0]
        for ln in ordered[1:]:
            if (ln.sq_expsum(n) - best.sq_expsum(n)).sign() < 0:
                best = ln
        return best

    def _lambda_perp_sq(self, g) -> float:
        """Lower bound for the norm of any vector independent of b1:
        lambda_1 of the lattice projected off b1 (2D Gauss reduction)."""
        d1, d2, d3, _, _, mu32 = self._gs(g)
        # projected 2D Gram
        a = d2
        b = mu32 * d2
        c = d3 + mu32 * mu32 * d2
        for _ in range(60):
            if a > c:
                a, c = c, a
            k = round(b / a)
            if k == 0:
                break
            c = c - 2 * k * b + k * k * a
            b = b - k * a
        return min(a, c)

    def short_lines(
        self, n: int, thr: Threshold, cap: int = 8
    ) -> tuple[list[ShortLine], bool]:
        """Independent primitive lines with size <= threshold at step n.

        Returns (lines, complete).  Stops after cap distinct lines, in
        which case complete is False; short directions in a deep cusp
        excursion can be too numerous to list.
        """
        self.reduce(n)
        g = self.gram_float(n)
        tf = thr.sq_float
        out: dict[tuple, ShortLine] = {}

        def consider(c_cur, sq_f) -> bool:
            ln = self.line_of(c_cur)
            if sq_f > tf * (1 - _SLACK) or thr.sq_exact is None:
                if thr.cmp_sq(ln.sq_expsum(n)) == Cmp.GT:
                    return False
            out.setdefault(ln.coeffs, ln)
            return True

        if g[0][0] <= tf * (1 + _SLACK):
            consider((1, 0, 0), g[0][0])
        if self._lambda_perp_sq(g) <= tf * (1 + _SLACK):
            for c_cur, sq_f in self.enumerate_sq(n, tf):
                if c_cur == (1, 0, 0):
                    continue
                consider(c_cur, sq_f)
                if len(out) >= cap:
                    return sorted(out.values(), key=lambda l: l.coeffs), False
        return sorted(out.values(), key=lambda l: l.coeffs), True

    def has_independent_short(self, n: int, thr: Threshold):
        """Is there a short vector independent of the current shortest?

        Returns (answer, witness ShortLine or None).  Certified via the
        projected-lattice bound; cheap when the answer is no.
        """
        self.reduce(n)
        g = self.gram_float(n)
        tf = thr.sq_float
        if self._lambda_perp_sq(g) > tf * (1 + _SLACK):
            return False, None
        for c_cur, sq_f in self.enumerate_sq(n, tf):
            if c_cur[1] == 0 and c_cur[2] == 0:
                continue
            ln = self.line_of(c_cur)
            if thr.cmp_sq(ln.sq_expsum(n)) != Cmp.GT:
                return True, ln
        return False, None


def _quad_bilinear(m: Mat3, a, b) -> Fraction:
    acc = Fraction(0)
    for i in range(3):
        ai = a[i]
        if not ai:
            continue
        row = m[i]
        acc += ai * (row[0] * b[0] + row[1] * b[1] + row[2] * b[2])
    return acc


def primal_gram_parts(basis: Mat3) -> tuple[Mat3, Mat3]:
    """P, Q with Gram(n) = P e^n + Q e^(-2n) for the flowed basis."""
    p = tuple(
        tuple(
            basis[i][0] * basis[j][0] + basis[i][1] * basis[j][1]
            for j in range(3)
        )
        for i in range(3)
    )
    q = tuple(tuple(basis[i][2] * basis[j][2] for j in range(3)) for i in range(3))
    return p, q


def primal_engine(basis: Mat3) -> FlowGram:
    p, q = primal_gram_parts(basis)
    return FlowGram(p, q, 1, -2)


def dual_engine(basis: Mat3) -> FlowGram:
    """Engine for the dual basis, whose vectors scale by (e^-n/2, e^-n/2, e^n).

    Shortest dual vectors are exactly the minimal plane covolumes of a
    unimodular lattice.
    """
    d = mat_inverse_transpose(basis)
    p = tuple(
        tuple(d[i][0] * d[j][0] + d[i][1] * d[j][1] for j in range(3))
        for i in range(3)
    )
    q = tuple(tuple(d[i][2] * d[j][2] for j in range(3)) for i in range(3))
    return FlowGram(p, q, -1, 2)
