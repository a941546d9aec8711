"""Small fractional parts of ``alpha_i * n**k`` and the recursive splitting of
``[N]`` into progressions on which given polynomials are nearly constant mod 1.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from sympy import ZZ
from sympy.polys.matrices import DomainMatrix

from .errors import BudgetExhausted, SearchFailed
from .polyarith import (
    Progression,
    RationalPoly,
    circular_diameter,
    frac_norm,
    nearest_int,
    snap,
)

# Candidate windows fully scanned by the lattice method.  Up to this size the
# accelerated search is an exact (vectorised) scan, so its slack is 1.
LATTICE_WINDOW = 1 << 20
LATTICE_SLACK = 1.0
SMALL_N_CUTOFF = 16
_BLOCK = 1 << 18


def common_modulus(alphas: Sequence) -> tuple[list[int], int]:
    """Write every ``alpha_i`` as ``nums[i] / Q`` with one common ``Q``."""
    fr = [snap(a) for a in alphas]
    Q = 1
    for a in fr:
        Q = math.lcm(Q, a.denominator)
    return [int(a * Q) % Q for a in fr], Q


def frac_power_max(alphas: Sequence, k: int, n: int) -> Fraction:
    """``max_i ||alpha_i * n**k||_{R/Z}``, exactly."""
    return max((frac_norm(snap(a) * n**k) for a in alphas), default=Fraction(0))


@dataclass(frozen=True)
class SchmidtWitness:
    alphas: tuple
    k: int
    n: int
    achieved: Fraction
    method: str

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(snap(a) for a in self.alphas))
        if frac_power_max(self.alphas, self.k, self.n) != self.achieved:
            raise ValueError(f"witness n={self.n} does not achieve {self.achieved}")

    def to_record(self) -> dict:
        return {
            "n": self.n,
            "achieved": f"{self.achieved.numerator}/{self.achieved.denominator}",
            "achieved_float": float(self.achieved),
            "method": self.method,
            "k": self.k,
        }


def min_frac_power(alphas: Sequence, k: int, N: int) -> SchmidtWitness:
    """Brute-force ``argmin_{1<=n<=N} max_i ||alpha_i n**k||``; the smallest
    minimiser wins.  This is the reference oracle for the faster search."""
    if N < 1 or k < 1 or len(alphas) < 1:
        raise ValueError("need N >= 1, k >= 1 and at least one alpha")
    nums, Q = common_modulus(alphas)
    best_n, best = 1, Q
    for n in range(1, N + 1):
        worst = 0
        for p in nums:
            r = p * pow(n, k, Q) % Q
            r = min(r, Q - r)
            if r > worst:
                worst = r
                if worst >= best:
                    break
        if worst < best:
            best_n, best = n, worst
            if best == 0:
                break
    return SchmidtWitness(tuple(alphas), k, best_n, Fraction(best, Q), "brute")


def _scan_values(nums: Sequence[int], Q: int, k: int, lo: int, hi: int) -> np.ndarray:
    """Numerators of ``max_i ||nums_i n**k / Q||`` for ``n = lo..hi`` (exact)."""
    n = np.arange(lo, hi + 1, dtype=np.uint64)
    if Q & (Q - 1) == 0 and Q <= 1 << 62:
        # Q divides 2**64, so wrapping uint64 products are exact mod Q
        mask = np.uint64(Q - 1)
        pw = np.ones_like(n)
        for _ in range(k):
            pw = pw * n
        worst = np.zeros_like(n)
        for p in nums:
            r = (pw * np.uint64(p)) & mask
            worst = np.maximum(worst, np.minimum(r, np.uint64(Q) - r))
        return worst
    if Q < 1 << 31:
        x = n.astype(np.int64) % Q
        pw = np.ones_like(x)
        for _ in range(k):
            pw = pw * x % Q
        worst = np.zeros_like(x)
        for p in nums:
            r = pw * (p % Q) % Q
            worst = np.maximum(worst, np.minimum(r, Q - r))
        return worst
    out = np.empty(hi - lo + 1, dtype=object)
    for j, m in enumerate(range(lo, hi + 1)):
        pw = pow(m, k, Q)
        out[j] = max(min(p * pw % Q, Q - p * pw % Q) for p in nums)
    return out


def _scan_min(nums, Q, k, lo, hi) -> tuple[int, int]:
    best_n, best = lo, None
    for a in range(lo, hi + 1, _BLOCK):
        b = min(hi, a + _BLOCK - 1)
        vals = _scan_values(nums, Q, k, a, b)
        j = int(np.argmin(vals))
        v = int(vals[j])
        if best is None or v < best:
            best_n, best = a + j, v
        if best == 0:
            break
    return best_n, best


def _lattice_candidates(nums: Sequence[int], Q: int, N: int, scales: int = 8) -> set[int]:
    """Denominators ``n <= N`` with all ``n * nums_i / Q`` near integers, from
    LLL-reduced simultaneous-approximation lattices at several scales."""
    d = len(nums)
    out: set[int] = set()
    if Q <= N:
        out.add(Q)
    for j in range(scales):
        M = N // 4**j
        if M < 2:
            break
        c = max(1, round(Q * float(M) ** (-(1.0 + 1.0 / d))))
        rows = [[c] + [p % Q for p in nums]]
        rows += [[0] * (i + 1) + [Q] + [0] * (d - i - 1) for i in range(d)]
        basis = DomainMatrix([[ZZ(v) for v in r] for r in rows], (d + 1, d + 1), ZZ).lll()
        vecs = [[int(v) for v in row] for row in basis.to_Matrix().tolist()]
        combos = list(vecs)
        if d <= 4:
            for u, w in itertools.combinations(vecs, 2):
                combos.append([a + b for a, b in zip(u, w)])
                combos.append([a - b for a, b in zip(u, w)])
        for v in combos:
            n = abs(v[0]) // c
            if 1 <= n <= N:
                out.add(n)
    return out


def min_frac_lattice(alphas: Sequence, k: int, N: int, *, window: int = LATTICE_WINDOW) -> SchmidtWitness:
    """Accelerated search for a small ``max_i ||alpha_i n**k||`` with ``n <= N``.

    ``[1, min(N, window)]`` is scanned exactly with vectorised modular
    arithmetic (so for ``N <= window`` the result equals :func:`min_frac_power`).
    Beyond the window, candidates come from LLL reduction of the simultaneous
    approximation lattice of the ``alpha_i``; for ``k >= 2`` each such
    denominator ``q`` also seeds a scan over multiples ``q*m``.
    """
    if N < 1 or k < 1 or len(alphas) < 1:
        raise ValueError("need N >= 1, k >= 1 and at least one alpha")
    nums, Q = common_modulus(alphas)
    best_n, best = _scan_min(nums, Q, k, 1, min(N, window))
    if N > window and best > 0:
        cands = _lattice_candidates(nums, Q, N)
        extra = set(cands)
        if k >= 2:
            for q in sorted(cands)[:16]:
                top = min(N // q, window // 16)
                if top >= 1:
                    sub = [p * pow(q, k, Q) % Q for p in nums]
                    m, _ = _scan_min(sub, Q, k, 1, top)
                    extra.add(q * m)
        for n in sorted(extra):
            v = max(min(p * pow(n, k, Q) % Q, Q - p * pow(n, k, Q) % Q) for p in nums)
            if v < best or (v == best and n < best_n):
                best_n, best = n, v
    if 2 * best >= Q:
        raise SearchFailed("no n beats the trivial bound 1/2")
    return SchmidtWitness(tuple(alphas), k, best_n, Fraction(best, Q), "lattice")


def prefix_minima(alphas: Sequence, k: int, N_grid: Sequence[int]) -> list[Fraction]:
    """``min_{n <= N} max_i ||alpha_i n**k||`` for every ``N`` in the grid."""
    nums, Q = common_modulus(alphas)
    grid = sorted(int(x) for x in N_grid)
    out, running, lo = [], None, 1
    for N in grid:
        if N >= lo:
            for a in range(lo, N + 1, _BLOCK):
                b = min(N, a + _BLOCK - 1)
                v = int(np.min(_scan_values(nums, Q, k, a, b)))
                running = v if running is None else min(running, v)
            lo = N + 1
        out.append(Fraction(running, Q))
    return out


def scaling_experiment(k: int, d: int, N_grid: Sequence[int], trials: int, seed: int = 0,
                       alphas: Sequence | None = None) -> dict:
    """Tabulate Schmidt minima over ``N_grid`` for random ``alpha`` and fit the
    log-log slope of their geometric mean.

    Only monotone non-increase in ``N`` is asserted; the slope is reported.
    ``alphas`` fixes the vector instead of sampling (then ``trials`` is 1).
    """
    grid = sorted(int(x) for x in N_grid)
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("N_grid must be strictly increasing")
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(1 if alphas is not None else trials):
        al = list(alphas) if alphas is not None else [snap(x) for x in rng.random(d)]
        vals = prefix_minima(al, k, grid)
        assert all(b <= a for a, b in zip(vals, vals[1:])), "prefix minima must not increase"
        rows.append([float(v) for v in vals])
    arr = np.asarray(rows)
    positive = arr[(arr > 0).all(axis=1)]
    slope = None
    geo = None
    if len(positive) and len(grid) >= 2:
        logs = np.log(positive).mean(axis=0)
        geo = np.exp(logs).tolist()
        slope = float(np.polyfit(np.log(grid), logs, 1)[0])
    return {
        "k": k,
        "d": d,
        "N_grid": grid,
        "values": arr.tolist(),
        "geometric_mean": geo,
        "fitted_slope": slope,
        "trials_used_in_fit": int(len(positive)),
        "monotone": True,
        "csv": "N," + ",".join(f"trial{i}" for i in range(len(rows))) + "\n"
        + "".join(f"{N}," + ",".join(f"{r[j]:.15g}" for r in rows) + "\n" for j, N in enumerate(grid)),
    }


# ---------------------------------------------------------------------------
# Decomposition of [N]
# ---------------------------------------------------------------------------


def check_partition(parts: Sequence[Progression], N: int) -> bool:
    """Do ``parts`` cover every point of ``[N]`` exactly once?"""
    hits = np.zeros(N + 1, dtype=np.int64)
    for p in parts:
        if p.N != N:
            return False
        np.add.at(hits, p.elements(), 1)
    return bool(hits[0] == 0 and (hits[1:] == 1).all())


@dataclass
class Decomposition:
    """Disjoint progressions covering ``[N]`` with per-polynomial certificates.

    ``part_certificates[j][i]`` bounds the mod-1 diameter of polynomial ``i`` on
    part ``j``; ``certified_diameter[i]`` is its maximum over parts.
    """

    N: int
    parts: list
    part_certificates: list
    certified_diameter: tuple = ()
    min_length: int = 0
    measured_diameter: tuple | None = None
    part_measured: list | None = None
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        d = len(self.part_certificates[0]) if self.part_certificates else 0
        self.certified_diameter = tuple(
            float(max((c[i] for c in self.part_certificates), default=0)) for i in range(d)
        )
        self.min_length = min((p.length for p in self.parts), default=0)

    @property
    def L(self) -> int:
        return len(self.parts)

    def is_partition(self) -> bool:
        return check_partition(self.parts, self.N)

    def measure(self, polys: Sequence[RationalPoly]) -> tuple:
        """Exhaustive mod-1 diameters of each polynomial on each part."""
        per_part = []
        for part in self.parts:
            els = part.elements()
            per_part.append(tuple(circular_diameter(P.values_mod1(els)) for P in polys))
        self.part_measured = per_part
        self.measured_diameter = tuple(
            max((m[i] for m in per_part), default=0.0) for i in range(len(polys))
        )
        return self.measured_diameter

    def certificates_hold(self, tol: float = 1e-12) -> bool:
        if self.part_measured is None:
            raise ValueError("call measure() first")
        return all(
            m <= float(c) + tol
            for ms, cs in zip(self.part_measured, self.part_certificates)
            for m, c in zip(ms, cs)
        )

    def to_record(self) -> dict:
        rec = {
            "N": self.N,
            "L": self.L,
            "min_length": self.min_length,
            "parts": [[p.first, p.step, p.length] for p in self.parts],
            "certified_diameter": [float(x) for x in self.certified_diameter],
        }
        if self.measured_diameter is not None:
            rec["measured_diameter"] = [float(x) for x in self.measured_diameter]
        rec.update(self.stats)
        return rec


def _chunk_length(tau: Fraction, k: int, cap: int) -> int:
    # largest L with L**(2k) * tau <= 1, clamped to [1, cap]
    if tau == 0:
        return cap
    L = max(1, int(float(tau) ** (-1.0 / (2 * k))))
    while (L + 1) ** (2 * k) * tau <= 1:
        L += 1
    while L > 1 and L ** (2 * k) * tau > 1:
        L -= 1
    return max(1, min(L, cap))


def _step_search(leads, k, Dmax):
    if Dmax <= LATTICE_WINDOW:
        return min_frac_power(leads, k, Dmax)
    return min_frac_lattice(leads, k, Dmax)


def _decompose_local(polys, length, depth, budget, cutoff, stats):
    polys = [p.mod1() for p in polys]
    d = len(polys)
    zeros = [Fraction(0)] * d
    k = max(p.true_degree for p in polys)
    if k == 0:
        return [(Progression.interval(length), zeros)]
    if length < cutoff:
        return [(Progression(i - 1, 1, 1, length), list(zeros)) for i in range(1, length + 1)]
    if depth >= budget:
        raise BudgetExhausted(f"recursion depth {depth} reached budget {budget}")
    fact = math.factorial(k)
    leads = [p.coeff(k) / fact for p in polys]
    w = _step_search(leads, k, math.isqrt(length))
    D, tau = w.n, w.achieved
    stats.setdefault("steps", []).append({"depth": depth, "D": D, "tau": float(tau)})
    lead_vals = [lead * D**k for lead in leads]
    deltas = [abs(v - nearest_int(v)) for v in lead_vals]
    power = RationalPoly.monomial_power(k)
    strip = [power * v for v in lead_vals]
    pieces = []
    for s in range(1, D + 1):
        if s > length:
            break
        m = (length - s) // D + 1
        L = _chunk_length(tau, k, m)
        count = -(-m // L)
        base, extra = divmod(m, count)
        offset = 0
        for c in range(count):
            size = base + (1 if c < extra else 0)
            start = s + D * offset - D
            chunk = Progression(start, D, size, length)
            rem = [(p.rebase(D, start) - st).trimmed() for p, st in zip(polys, strip)]
            for sub, certs in _decompose_local(rem, size, depth + 1, budget, cutoff, stats):
                lo, hi = sub.first, sub.last
                grow = hi**k - lo**k
                new = [min(Fraction(1, 2), cert + dl * grow) for cert, dl in zip(certs, deltas)]
                pieces.append((chunk.compose(sub), new))
            offset += size
    return pieces


def decompose_interval(polys: Sequence[RationalPoly], N: int, depth_budget: int | None = None,
                       *, cutoff: int = SMALL_N_CUTOFF, measure: bool = False) -> Decomposition:
    """Split ``[N]`` into progressions on which every polynomial is nearly
    constant mod 1.

    At each level the leading monomial coefficients ``a_k / k!`` drive a
    Schmidt search for a step ``D <= sqrt(N)``; the realised value ``tau``
    sets the chunk length ``floor(tau**(-1/(2k)))``; each chunk is rebased, its
    (now slowly varying) leading monomial is stripped and the degree ``k - 1``
    remainders are decomposed recursively.  Certificates add, along the way,
    the exact variation bound ``||lead*D**k|| * (hi**k - lo**k)`` of every
    stripped term.
    """
    polys = [p if isinstance(p, RationalPoly) else RationalPoly(p) for p in polys]
    if N < 1:
        raise ValueError("N must be positive")
    if depth_budget is None:
        depth_budget = max((p.true_degree for p in polys), default=0)
    stats: dict = {}
    if N == 1:
        pieces = [(Progression.interval(1), [Fraction(0)] * len(polys))]
    else:
        pieces = _decompose_local(polys, N, 0, depth_budget, cutoff, stats)
    dec = Decomposition(N, [p for p, _ in pieces], [tuple(c) for _, c in pieces])
    dec.stats = {"schmidt_steps": len(stats.get("steps", []))}
    if measure:
        dec.measure(polys)
    return dec
