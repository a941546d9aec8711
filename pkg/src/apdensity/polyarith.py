"""Exact polynomial arithmetic in the binomial basis.

A polynomial is stored as the coefficients ``(a_0, ..., a_k)`` of
``P(n) = sum_i a_i * C(n, i)``.  In this basis ``P`` maps the integers to the
integers exactly when every ``a_i`` is an integer, so "integer part" and
"small part" of a polynomial are read off coefficient by coefficient.

Floats are snapped on ingestion to dyadic rationals with denominator at most
``2**53``; everything downstream is exact ``Fraction`` arithmetic.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import BoundViolation, ConfigInvalid, DiameterTooLarge

DYADIC_BITS = 53
_DYADIC_SCALE = 1 << DYADIC_BITS

# exhaustive diameter checks up to this many points, sampling beyond
MAX_EXHAUSTIVE = 20_000


def snap(x) -> Fraction:
    """Exact rational embedding of ``x`` (dyadic for floats)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, str):
        return Fraction(x.strip())
    fr = Fraction(float(x))
    if fr.denominator > _DYADIC_SCALE:
        fr = Fraction(round(fr * _DYADIC_SCALE), _DYADIC_SCALE)
    return fr


def binom(x: int, i: int) -> int:
    """Generalised binomial coefficient ``C(x, i)`` for any integer ``x``."""
    if i < 0:
        return 0
    if x >= 0:
        return math.comb(x, i)
    return (-1) ** i * math.comb(i - x - 1, i)


def frac(x):
    """Fractional part ``{x}`` in ``[0, 1)``; exact for rationals."""
    if isinstance(x, (Fraction, int)):
        return x - math.floor(x)
    r = float(x) - math.floor(x)
    return 0.0 if r >= 1.0 else r


def frac_norm(x):
    """``||x||_{R/Z}``, the distance from ``x`` to the nearest integer."""
    r = frac(x)
    return min(r, 1 - r)


def nearest_int(x: Fraction) -> int:
    return math.floor(x + Fraction(1, 2))


def forward_differences(values: Sequence[Fraction]) -> list[Fraction]:
    """Binomial-basis coefficients of the polynomial interpolating ``values``
    at ``n = 0, 1, ..., len(values) - 1``."""
    row = [Fraction(v) for v in values]
    out = []
    while row:
        out.append(row[0])
        row = [b - a for a, b in zip(row, row[1:])]
    return out


def _falling_monomial(i: int) -> list[Fraction]:
    # monomial coefficients of C(n, i) = n(n-1)...(n-i+1)/i!
    poly = [Fraction(1)]
    for j in range(i):
        nxt = [Fraction(0)] * (len(poly) + 1)
        for d, c in enumerate(poly):
            nxt[d + 1] += c
            nxt[d] -= j * c
        poly = nxt
    fact = math.factorial(i)
    return [c / fact for c in poly]


@dataclass(frozen=True)
class RationalPoly:
    """Polynomial ``sum_i coeffs[i] * C(n, i)`` with exact rational coefficients.

    ``degree`` is the declared degree ``len(coeffs) - 1``; the leading
    coefficient may be zero (rebasing and stripping keep the declared degree).
    ``true_degree`` ignores trailing zeros.
    """

    coeffs: tuple

    def __post_init__(self):
        cs = tuple(snap(c) for c in self.coeffs)
        object.__setattr__(self, "coeffs", cs or (Fraction(0),))

    # -- constructors -------------------------------------------------
    @classmethod
    def zero(cls, degree: int = 0) -> "RationalPoly":
        return cls((0,) * (degree + 1))

    @classmethod
    def constant(cls, c) -> "RationalPoly":
        return cls((c,))

    @classmethod
    def from_values(cls, values: Sequence) -> "RationalPoly":
        """Interpolate values given at ``n = 0, ..., k``."""
        return cls(forward_differences([snap(v) for v in values]))

    @classmethod
    def from_monomial(cls, coeffs: Sequence) -> "RationalPoly":
        cs = [snap(c) for c in coeffs] or [Fraction(0)]
        vals = [sum(c * n**d for d, c in enumerate(cs)) for n in range(len(cs))]
        return cls(forward_differences(vals))

    @classmethod
    def monomial_power(cls, k: int) -> "RationalPoly":
        """The polynomial ``n**k``."""
        return cls.from_monomial([0] * k + [1])

    # -- basic properties ---------------------------------------------
    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def true_degree(self) -> int:
        for i in range(len(self.coeffs) - 1, 0, -1):
            if self.coeffs[i]:
                return i
        return 0

    def is_zero(self) -> bool:
        return not any(self.coeffs)

    def coeff(self, i: int) -> Fraction:
        return self.coeffs[i] if 0 <= i < len(self.coeffs) else Fraction(0)

    @property
    def denominator(self) -> int:
        q = 1
        for c in self.coeffs:
            q = math.lcm(q, c.denominator)
        return q

    def has_integer_coeffs(self) -> bool:
        return all(c.denominator == 1 for c in self.coeffs)

    def padded(self, degree: int) -> "RationalPoly":
        if degree < self.degree:
            raise ValueError("cannot pad to a smaller degree")
        return RationalPoly(self.coeffs + (Fraction(0),) * (degree - self.degree))

    def trimmed(self) -> "RationalPoly":
        return RationalPoly(self.coeffs[: self.true_degree + 1])

    # -- evaluation ---------------------------------------------------
    def __call__(self, n: int) -> Fraction:
        n = int(n)
        return sum((c * binom(n, i) for i, c in enumerate(self.coeffs) if c), Fraction(0))

    def to_monomial(self) -> list[Fraction]:
        out = [Fraction(0)] * len(self.coeffs)
        for i, c in enumerate(self.coeffs):
            if c:
                for d, m in enumerate(_falling_monomial(i)):
                    out[d] += c * m
        return out

    def values_mod1(self, ns: Iterable[int]) -> np.ndarray:
        """``{P(n)}`` for each ``n`` as floats, reduced exactly before rounding."""
        q = self.denominator
        nums = [(i, int(c * q)) for i, c in enumerate(self.coeffs) if c]
        out = []
        for n in ns:
            n = int(n)
            r = sum(a * binom(n, i) for i, a in nums) % q
            out.append(r / q)
        return np.asarray(out, dtype=float)

    def values(self, ns: Iterable[int]) -> list[Fraction]:
        return [self(n) for n in ns]

    # -- arithmetic ---------------------------------------------------
    def _aligned(self, other: "RationalPoly"):
        d = max(self.degree, other.degree)
        return self.padded(d).coeffs, other.padded(d).coeffs

    def __add__(self, other):
        if not isinstance(other, RationalPoly):
            other = RationalPoly.constant(other)
        a, b = self._aligned(other)
        return RationalPoly(tuple(x + y for x, y in zip(a, b)))

    __radd__ = __add__

    def __neg__(self):
        return RationalPoly(tuple(-c for c in self.coeffs))

    def __sub__(self, other):
        if not isinstance(other, RationalPoly):
            other = RationalPoly.constant(other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, RationalPoly):
            s = snap(other)
            return RationalPoly(tuple(c * s for c in self.coeffs))
        d = self.degree + other.degree
        return RationalPoly.from_values([self(n) * other(n) for n in range(d + 1)])

    __rmul__ = __mul__

    def mod1(self) -> "RationalPoly":
        """Same function modulo 1, with every coefficient reduced to ``[0, 1)``."""
        return RationalPoly(tuple(frac(c) for c in self.coeffs))

    def rebase(self, a: int, b: int) -> "RationalPoly":
        return rebase(self, a, b)

    # -- I/O ----------------------------------------------------------
    def to_record(self, basis: str = "binomial") -> dict:
        cs = self.coeffs if basis == "binomial" else tuple(self.to_monomial())
        return {"basis": basis, "coeffs": [f"{c.numerator}/{c.denominator}" for c in cs]}

    @classmethod
    def from_record(cls, rec: dict) -> "RationalPoly":
        basis = rec.get("basis", "binomial")
        if "coeffs" not in rec:
            raise ConfigInvalid("polynomial record needs 'coeffs'", field="coeffs")
        try:
            cs = [snap(c) for c in rec["coeffs"]]
        except (ValueError, ZeroDivisionError, TypeError) as exc:
            raise ConfigInvalid(f"bad coefficient: {exc}", field="coeffs") from None
        if basis == "binomial":
            return cls(cs)
        if basis == "monomial":
            return cls.from_monomial(cs)
        raise ConfigInvalid(f"unknown basis {basis!r}", field="basis")

    def __str__(self):
        terms = [f"{c}*C(n,{i})" for i, c in enumerate(self.coeffs) if c]
        return " + ".join(terms) or "0"


def eval_mod1(P: RationalPoly, n: int) -> float:
    """``{P(n)}`` in ``[0, 1)``; the reduction is exact, only the result is rounded."""
    return float(frac(P(n)))


def smoothness_norm(P: RationalPoly, N: int) -> Fraction:
    """``max_{1<=i<=k} N**i * ||a_i||_{R/Z}``; the constant term does not count."""
    if N <= 1 or P.degree == 0:
        return Fraction(0)
    return max(Fraction(N) ** i * frac_norm(c) for i, c in enumerate(P.coeffs) if i >= 1)


def rebase(P: RationalPoly, a: int, b: int) -> RationalPoly:
    """Return ``Q`` with ``Q(n) = P(a*n + b)``, same declared degree."""
    if a < 1:
        raise ValueError("step must be positive")
    return RationalPoly.from_values([P(a * n + b) for n in range(P.degree + 1)])


def circular_diameter(x) -> float:
    """``max_{i,j} ||x_i - x_j||_{R/Z}`` in ``O(n log n)``."""
    x = np.sort(np.mod(np.asarray(x, dtype=float), 1.0))
    if x.size < 2:
        return 0.0
    idx = np.searchsorted(x, np.mod(x + 0.5, 1.0))
    best = 0.0
    for off in (-1, 0):
        j = np.mod(idx + off, x.size)
        d = np.abs(x[j] - x)
        best = max(best, float(np.minimum(d, 1.0 - d).max()))
    return best


def diameter_mod1(P: RationalPoly, ns) -> float:
    return circular_diameter(P.values_mod1(ns))


def _check_points(N: int, rng=None) -> np.ndarray:
    if N <= MAX_EXHAUSTIVE:
        return np.arange(1, N + 1)
    rng = np.random.default_rng(0) if rng is None else rng
    pts = rng.integers(1, N + 1, size=4096)
    return np.unique(np.concatenate([pts, [1, N]]))


def lemma_constant(k: int) -> int:
    """Default multiplier for the coefficient audit in :func:`split_small_int`.

    A Chebyshev-type extremal polynomial of degree ``k`` on ``[N]`` with range
    ``eps`` has ``N**r * |a_r|`` of order ``k! * 4**k * eps``; ``(4k)**k`` sits
    comfortably above that for the degrees used here.
    """
    return (4 * max(k, 1)) ** max(k, 1)


@dataclass(frozen=True)
class SmallIntSplit:
    small: RationalPoly
    integer: RationalPoly
    diameter: float
    scaled_coefficients: tuple  # N**r * |small_r| for r = 1..k
    realized_bound: Fraction  # max of scaled_coefficients
    constant_term: Fraction


def split_small_int(P: RationalPoly, N: int, tol, *, bound_factor="auto", rng=None) -> SmallIntSplit:
    """Write ``P = P_small + P_int`` with ``P_int`` integer valued and ``P_small``
    having small binomial coefficients on ``[N]``.

    ``P_int`` takes the nearest integer to every coefficient (so the small
    constant term lies in ``[-1/2, 1/2]``).  The precondition
    ``||P(n) - P(n')|| <= tol`` on ``[N]`` is checked on all points (or a seeded
    sample for large ``N``).  ``bound_factor`` scales the coefficient audit:
    ``"auto"`` uses :func:`lemma_constant`, ``None`` skips it.
    """
    N = max(int(N), 1)
    diam = diameter_mod1(P, _check_points(N, rng))
    if diam > float(tol) + 1e-12:
        raise DiameterTooLarge(f"measured diameter {diam:.3g} exceeds tol {float(tol):.3g}")
    ints = tuple(nearest_int(c) for c in P.coeffs)
    P_int = RationalPoly(ints)
    P_small = P - P_int
    scaled = tuple(Fraction(N) ** r * abs(c) for r, c in enumerate(P_small.coeffs) if r >= 1)
    realized = max(scaled, default=Fraction(0))
    if bound_factor is not None and N > 1:
        factor = lemma_constant(P.degree) if bound_factor == "auto" else bound_factor
        if realized > snap(factor) * snap(tol):
            raise BoundViolation(
                f"scaled small coefficients reach {float(realized):.3g} > {float(factor)} * tol"
            )
    return SmallIntSplit(P_small, P_int, diam, scaled, realized, P_small.coeffs[0])


def small_int_ratio(P: RationalPoly, N: int, eps) -> Fraction:
    """``||P||_{C^inf[N]} / eps`` after checking the near-constancy hypothesis."""
    diam = diameter_mod1(P, np.arange(1, N + 1))
    if diam > float(eps) + 1e-12:
        raise DiameterTooLarge(f"diameter {diam:.3g} > eps")
    return smoothness_norm(P, N) / snap(eps)


def check_small_int_lemma(k: int, N: int, eps: float, trials: int, seed: int = 0) -> dict:
    """Measure ``||P||_{C^inf[N]} / eps`` over random ``P`` that are
    ``eps``-close to constant mod 1 on ``[N]``.

    Each sample plants a random small polynomial rescaled so that its real
    range on ``[N]`` is a random fraction of ``eps``, then adds random integer
    binomial coefficients.  Nothing is asserted about the constant; the report
    carries the empirical maximum.
    """
    if N < 2 or not 0 < eps < 0.25:
        raise ConfigInvalid("need N >= 2 and 0 < eps < 1/4")
    rng = np.random.default_rng(seed)
    ns = np.arange(1, N + 1)
    ratios, diam_ratios = [], []
    for _ in range(trials):
        small = [snap(rng.uniform(-0.5, 0.5))]
        small += [snap(rng.uniform(-1, 1) / N**r) for r in range(1, k + 1)]
        base = RationalPoly(small)
        vals = [float(v) for v in base.values(ns)]
        spread = max(vals) - min(vals)
        if spread == 0:
            continue
        scale = snap(eps * rng.uniform(0.05, 1.0) / spread)
        planted = RationalPoly((base.coeffs[0],) + tuple(c * scale for c in base.coeffs[1:]))
        P = planted + RationalPoly([int(v) for v in rng.integers(-5, 6, size=k + 1)])
        diam = diameter_mod1(P, ns)
        norm = smoothness_norm(P, N)
        ratios.append(float(norm) / eps)
        if diam > 0:
            diam_ratios.append(float(norm) / diam)
    return {
        "k": k,
        "N": N,
        "eps": eps,
        "trials": len(ratios),
        "max_ratio": max(ratios, default=0.0),
        "mean_ratio": float(np.mean(ratios)) if ratios else 0.0,
        "max_ratio_vs_measured_diameter": max(diam_ratios, default=0.0),
    }


def load_polys(path) -> list[RationalPoly]:
    """Read a polynomial file: one record or ``{"polys": [records]}``."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigInvalid(f"no such file: {path}", field="polys") from None
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"not valid JSON: {exc}", field="polys") from None
    if isinstance(data, dict) and "polys" in data:
        data = data["polys"]
    if isinstance(data, dict):
        data = [data]
    return [RationalPoly.from_record(rec) for rec in data]


def dump_polys(polys: Sequence[RationalPoly], basis: str = "binomial") -> str:
    return json.dumps({"polys": [p.to_record(basis) for p in polys]}, indent=2)


@dataclass(frozen=True)
class Progression:
    """``{start + step*n : n = 1, ..., length}``, contained in ``[1, N]``.

    Progressions are 1-indexed, so ``start`` itself is not an element; the
    first element is ``start + step``.
    """

    start: int
    step: int
    length: int
    N: int

    def __post_init__(self):
        if self.step < 1 or self.length < 1:
            raise ValueError(f"bad progression {self}")
        if self.first < 1 or self.last > self.N:
            raise ValueError(f"progression {self} leaves [1, {self.N}]")

    @classmethod
    def interval(cls, N: int) -> "Progression":
        return cls(0, 1, N, N)

    @property
    def first(self) -> int:
        return self.start + self.step

    @property
    def last(self) -> int:
        return self.start + self.step * self.length

    def elements(self) -> np.ndarray:
        return self.start + self.step * np.arange(1, self.length + 1, dtype=np.int64)

    def __len__(self):
        return self.length

    def compose(self, sub: "Progression") -> "Progression":
        """Map ``sub`` (a progression inside ``[self.length]``) into ``[N]``."""
        if sub.N != self.length:
            raise ValueError("sub-progression must live in [len(self)]")
        return Progression(self.start + self.step * sub.start, self.step * sub.step, sub.length, self.N)

    def to_record(self) -> dict:
        return {"first": self.first, "step": self.step, "length": self.length}
