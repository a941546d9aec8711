"""Catalog nilmanifolds, polynomial sequences on them, and the splitting of
``[N]`` into progressions on which nilsequence orbits barely move.

Two groups are supported: ``R^d / Z^d`` with the filtration ``G_1 = ... = G_k``
and the Heisenberg group of unipotent upper-triangular 3x3 matrices with its
lower central series.  Heisenberg points are stored as the matrix entries
``(a, b, c) = (E12, E23, E13)``; these are coordinates of the second kind, so a
point lies in the lattice exactly when all three are integers.

The group laws are written once and work on any ring-like coordinates, so
the same code multiplies exact points and whole polynomial sequences.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import ConfigInvalid, DepthExceeded, GroupMismatch, SubgroupViolation
from .polyarith import Progression, RationalPoly, split_small_int
from .schmidt import Decomposition, decompose_interval

MAX_TORUS_DIM = 8
# parts longer than this get their diameter measured on an evenly spaced sample
MEASURE_EXHAUSTIVE = 4096
_WINDOW = np.arange(-2, 3)


@dataclass(frozen=True)
class NilCatalogEntry:
    """A catalog group with a filtration.

    ``markers[i-1]`` is ``dim G_i``; ``G_i`` is spanned by the last
    ``markers[i-1]`` basis vectors.  ``brackets`` maps an index pair ``(i, j)``
    with ``i < j`` to the coefficient vector of ``[X_i, X_j]``.
    """

    name: str
    dim: int
    markers: tuple
    labels: tuple
    brackets: dict = field(default_factory=dict, compare=False)
    complexity: float = 1.0

    def __post_init__(self):
        m = self.markers
        if not m or m[0] != self.dim or any(b > a for a, b in zip(m, m[1:])) or m[-1] < 0:
            raise ValueError(f"bad filtration markers {m} for dimension {self.dim}")
        for (i, j), vec in self.brackets.items():
            need = self.level(i) + self.level(j)
            for r, coef in enumerate(vec):
                if coef and self.level(r) < need:
                    raise ValueError(f"[X_{i}, X_{j}] leaves G_{need}")

    @property
    def degree(self) -> int:
        return len(self.markers)

    def marker(self, t: int) -> int:
        return self.markers[t - 1] if 1 <= t <= self.degree else (self.dim if t < 1 else 0)

    def level(self, j: int) -> int:
        """Largest ``t`` with basis vector ``j`` in ``G_t``."""
        return max(t for t in range(1, self.degree + 1) if j >= self.dim - self.marker(t))

    def horizontal(self, t: int) -> range:
        """Coordinates of ``G_t`` that die in the next strictly smaller subgroup."""
        top = max(i for i in range(t, self.degree + 1) if self.marker(i) == self.marker(t))
        return range(self.dim - self.marker(t), self.dim - self.marker(top + 1))

    def next_level(self, t: int) -> int:
        return max(i for i in range(t, self.degree + 1) if self.marker(i) == self.marker(t)) + 1

    @property
    def exponents(self) -> np.ndarray:
        return np.array([1.0 / self.level(j) for j in range(self.dim)])

    @property
    def is_abelian(self) -> bool:
        return not any(any(v) for v in self.brackets.values())

    # -- group law on arbitrary coordinate types ------------------------
    def mul(self, x, y):
        if self.name == "heisenberg":
            return (x[0] + y[0], x[1] + y[1], x[2] + y[2] + x[0] * y[1])
        return tuple(a + b for a, b in zip(x, y))

    def inv(self, x):
        if self.name == "heisenberg":
            return (-x[0], -x[1], -x[2] + x[0] * x[1])
        return tuple(-a for a in x)

    def exp(self, v):
        """Coordinates of ``exp(sum_j v_j X_j)``."""
        if self.name == "heisenberg":
            return (v[0], v[1], v[2] + v[0] * v[1] * Fraction(1, 2))
        return tuple(v)

    def fundamental_rep(self, x) -> tuple:
        """Representative of ``x * Gamma`` with every coordinate in ``[0, 1)``."""
        if self.name == "heisenberg":
            a, b, c = x
            fa, fb = math.floor(a), math.floor(b)
            # right-multiplying by (p, q, r) adds a*q to c
            return (a - fa, b - fb, _frac(c - a * fb))
        return tuple(_frac(v) for v in x)

    def to_record(self) -> dict:
        return {"group": self.name if self.name == "heisenberg" else f"torus:{self.dim}",
                "degree": self.degree}


def _frac(x):
    return x - math.floor(x)


def torus(d: int, degree: int = 1) -> NilCatalogEntry:
    if not 1 <= d <= MAX_TORUS_DIM:
        raise ConfigInvalid(f"torus dimension must be in [1, {MAX_TORUS_DIM}]", field="group")
    if degree < 1:
        raise ConfigInvalid("filtration degree must be positive", field="degree")
    return NilCatalogEntry(f"torus:{d}", d, (d,) * degree, tuple(f"X{i + 1}" for i in range(d)))


def heisenberg() -> NilCatalogEntry:
    # basis order (E12, E23, E13); [E12, E23] = E13 spans G_2
    return NilCatalogEntry("heisenberg", 3, (3, 1), ("X", "Y", "Z"), {(0, 1): (0, 0, 1)})


def group_from_name(name: str, degree: int | None = None) -> NilCatalogEntry:
    name = str(name).strip().lower()
    if name == "heisenberg":
        if degree not in (None, 2):
            raise ConfigInvalid("the Heisenberg entry has degree 2", field="degree")
        return heisenberg()
    if name.startswith("torus:"):
        try:
            d = int(name.split(":", 1)[1])
        except ValueError:
            raise ConfigInvalid(f"bad torus spec {name!r}", field="group") from None
        return torus(d, degree or 1)
    raise ConfigInvalid(f"unknown group {name!r}", field="group")


@dataclass(frozen=True)
class NilPoint:
    group: NilCatalogEntry
    coords: tuple

    def __post_init__(self):
        if len(self.coords) != self.group.dim:
            raise ValueError("coordinate count does not match the group")

    @classmethod
    def identity(cls, group: NilCatalogEntry) -> "NilPoint":
        return cls(group, (Fraction(0),) * group.dim)

    def __mul__(self, other: "NilPoint") -> "NilPoint":
        return nil_mul(self, other)

    def inverse(self) -> "NilPoint":
        return NilPoint(self.group, self.group.inv(self.coords))

    def in_lattice(self) -> bool:
        return all(Fraction(c).denominator == 1 for c in self.coords)

    def rep(self) -> tuple:
        return self.group.fundamental_rep(self.coords)


def nil_mul(x: NilPoint, y: NilPoint) -> NilPoint:
    if x.group != y.group:
        raise GroupMismatch(f"{x.group.name} vs {y.group.name}")
    return NilPoint(x.group, x.group.mul(x.coords, y.coords))


@dataclass(frozen=True)
class NilPolySeq:
    """``n -> g(n)`` with polynomial coordinates, living in ``G_level``.

    A coordinate at filtration level ``l`` has degree at most ``l``, and
    coordinates outside ``G_level`` vanish.
    """

    group: NilCatalogEntry
    polys: tuple
    level: int = 1

    def __post_init__(self):
        ps = tuple(p if isinstance(p, RationalPoly) else RationalPoly(p) for p in self.polys)
        object.__setattr__(self, "polys", ps)
        G = self.group
        if len(ps) != G.dim:
            raise ValueError(f"{G.name} needs {G.dim} coordinate polynomials")
        for j, p in enumerate(ps):
            if p.true_degree > G.level(j):
                raise ValueError(f"coordinate {G.labels[j]} has degree {p.true_degree} > level {G.level(j)}")
            if j < G.dim - G.marker(self.level) and not p.is_zero():
                raise SubgroupViolation(f"coordinate {G.labels[j]} must vanish in G_{self.level}")

    @classmethod
    def identity(cls, group: NilCatalogEntry) -> "NilPolySeq":
        return cls(group, tuple(RationalPoly.zero() for _ in range(group.dim)), group.degree + 1)

    @property
    def done(self) -> bool:
        return self.level > self.group.degree

    def __call__(self, n: int) -> NilPoint:
        return NilPoint(self.group, tuple(p(n) for p in self.polys))

    def rebase(self, a: int, b: int) -> "NilPolySeq":
        return NilPolySeq(self.group, tuple(p.rebase(a, b).trimmed() for p in self.polys), self.level)

    def rebase_to(self, prog: Progression) -> "NilPolySeq":
        return self.rebase(prog.step, prog.start)

    def to_record(self) -> dict:
        rec = self.group.to_record()
        rec["coords"] = [p.to_record() for p in self.polys]
        return rec


def _seq_mul(G, x: Sequence[RationalPoly], y: Sequence[RationalPoly]) -> list[RationalPoly]:
    return [p.trimmed() for p in G.mul(tuple(x), tuple(y))]


def load_seqs(path) -> list[NilPolySeq]:
    """Read ``{"seqs": [{"group": ..., "coords": [poly records]}, ...]}``."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigInvalid(f"no such file: {path}", field="seqs") from None
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"not valid JSON: {exc}", field="seqs") from None
    if isinstance(data, dict):
        data = data.get("seqs", [data])
    out = []
    for rec in data:
        if "group" not in rec or "coords" not in rec:
            raise ConfigInvalid("each sequence needs 'group' and 'coords'", field="seqs")
        G = group_from_name(rec["group"], rec.get("degree"))
        try:
            out.append(NilPolySeq(G, tuple(RationalPoly.from_record(c) for c in rec["coords"])))
        except ValueError as exc:
            raise ConfigInvalid(str(exc), field="coords") from None
    return out


# ---------------------------------------------------------------------------
# Surrogate quotient metric
# ---------------------------------------------------------------------------


def _reps_array(G: NilCatalogEntry, points) -> np.ndarray:
    return np.array([[float(c) for c in G.fundamental_rep(p)] for p in points], dtype=float).reshape(-1, G.dim)


def _pair_metric(G: NilCatalogEntry, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Metric between rows of fundamental representatives ``X`` and ``Y``
    (broadcasting).  Horizontal shifts range over ``[-2, 2]``; the central
    shift is optimised in closed form."""
    if G.name != "heisenberg":
        d = np.abs(X - Y) % 1.0
        d = np.minimum(d, 1.0 - d)
        return (d ** G.exponents).max(axis=-1)
    xa, xb, xc = X[..., 0], X[..., 1], X[..., 2]
    ya, yb, yc = Y[..., 0], Y[..., 1], Y[..., 2]
    best = np.full(np.broadcast(xa, ya).shape, np.inf)
    for p in _WINDOW:
        u = xa + p - ya
        for q in _WINDOW:
            v = xb + q - yb
            w0 = xc + xa * q - yc + ya * yb - (xa + p) * yb
            s = w0 - u * v / 2.0
            central = np.abs(s - np.round(s)) + np.abs(u * v) / 2.0
            val = np.maximum(np.maximum(np.abs(u), np.abs(v)), np.sqrt(central))
            np.minimum(best, val, out=best)
    return best


def nil_metric(x: NilPoint, y: NilPoint) -> float:
    """Distance between ``x*Gamma`` and ``y*Gamma``.

    The minimum over lattice shifts ``gamma`` of ``|x~ gamma y~^-1|``, where
    ``x~, y~`` are fundamental representatives and ``|z|`` is a homogeneous
    norm weighting a level-``l`` coordinate by the power ``1/l``.  For the
    Heisenberg group the central part of ``|z|`` is ``max(|w|, |w - uv|)`` so
    that ``|z^-1| = |z|`` and the metric is symmetric.
    """
    if x.group != y.group:
        raise GroupMismatch(f"{x.group.name} vs {y.group.name}")
    G = x.group
    return float(_pair_metric(G, _reps_array(G, [x.coords]), _reps_array(G, [y.coords]))[0])


def metric_diameter(G: NilCatalogEntry, reps: np.ndarray, block: int = 512) -> float:
    """Pairwise diameter of a point cloud of fundamental representatives."""
    n = len(reps)
    if n < 2:
        return 0.0
    uniq = np.unique(reps, axis=0)
    if len(uniq) == 1:
        return 0.0
    best = 0.0
    for i in range(0, len(uniq), block):
        blk = uniq[i:i + block]
        val = _pair_metric(G, blk[:, None, :], uniq[None, i:, :])
        best = max(best, float(val.max()))
    return best


# ---------------------------------------------------------------------------
# Reduction to a subgroup and the full decomposition
# ---------------------------------------------------------------------------


def project_mod_level(g: NilPolySeq, t: int) -> list[RationalPoly]:
    """Coordinate polynomials that survive in ``G / G_{t+1}``."""
    G = g.group
    if not 1 <= t <= G.degree:
        raise ValueError(f"level must be in [1, {G.degree}]")
    return list(g.polys[: G.dim - G.marker(t + 1)])


@dataclass
class Reduction:
    eps: NilPolySeq
    gam: NilPolySeq
    g_prime: NilPolySeq
    points_checked: int


def reduce_to_subgroup(g: NilPolySeq, splits: Sequence, prog: Progression, *, verify: bool = True) -> Reduction:
    """Factor ``g(a n + b) = eps(n) * g'(n) * gamma(n)`` on ``prog``.

    ``splits`` hold the small/integer splits of the rebased horizontal
    coordinates at ``g.level``.  ``eps`` exponentiates the small parts,
    ``gamma`` is the lattice-valued point with the integer parts as
    coordinates, and ``g' = eps^-1 * g(a n + b) * gamma^-1`` then lies in the
    next subgroup of the filtration.  With ``verify`` the factorisation, the
    lattice membership of ``gamma`` and the vanishing of the horizontal
    coordinates of ``g'`` are checked exactly at every point of ``prog``.
    """
    G = g.group
    hor = list(G.horizontal(g.level))
    if len(splits) != len(hor):
        raise ValueError(f"expected {len(hor)} splits, got {len(splits)}")
    g_r = g.rebase_to(prog)
    zero = RationalPoly.zero()
    small = [zero] * G.dim
    ints = [zero] * G.dim
    for j, sp in zip(hor, splits):
        if sp.small + sp.integer != g_r.polys[j]:
            raise SubgroupViolation(f"split does not reconstruct coordinate {G.labels[j]}")
        if not sp.integer.has_integer_coeffs():
            raise SubgroupViolation("integer part has non-integer coefficients")
        small[j], ints[j] = sp.small.trimmed(), sp.integer.trimmed()
    eps_c = [p.trimmed() for p in G.exp(tuple(small))]
    gam_c = list(ints)
    gp = _seq_mul(G, _seq_mul(G, G.inv(tuple(eps_c)), g_r.polys), G.inv(tuple(gam_c)))
    nxt = G.next_level(g.level)
    for j in hor:
        if not gp[j].is_zero():
            raise SubgroupViolation(f"g' keeps a horizontal coordinate {G.labels[j]}: {gp[j]}")
    eps = NilPolySeq(G, tuple(eps_c), g.level)
    gam = NilPolySeq(G, tuple(gam_c), g.level)
    g_prime = NilPolySeq(G, tuple(gp), nxt)
    checked = 0
    if verify:
        for n in range(1, prog.length + 1):
            e, h, c = eps(n), g_prime(n), gam(n)
            if not c.in_lattice():
                raise SubgroupViolation(f"gamma({n}) is not a lattice point")
            if any(h.coords[j] for j in hor):
                raise SubgroupViolation(f"g'({n}) leaves the subgroup")
            if (e * h * c).coords != g_r(n).coords:
                raise SubgroupViolation(f"factorisation fails at n={n}")
            checked += 1
    return Reduction(eps, gam, g_prime, checked)


@dataclass
class _State:
    g: NilPolySeq
    eps: list  # accumulated small factors, in the job's local coordinates


def _certificate(G: NilCatalogEntry, E: np.ndarray) -> float:
    """Bound on the metric diameter of ``{E(m) Gamma}`` from coordinate ranges."""
    rng = E.max(axis=0) - E.min(axis=0) if len(E) else np.zeros(G.dim)
    if G.name == "heisenberg":
        da, db, dc = rng
        mb = float(np.abs(E[:, 1]).max())
        val = max(da, db, math.sqrt(dc + da * mb + da * db))
    else:
        val = float((rng ** G.exponents).max())
    if val == 0:
        return 0.0
    # tiny guard for float rounding of exact ranges
    return min(1.0, val * (1 + 1e-12) + 1e-15)


@dataclass
class NilDecomposition(Decomposition):
    reductions: int = 0
    points_verified: int = 0
    passes: int = 0
    sampled_parts: int = 0
    log: list | None = None

    def to_record(self) -> dict:
        rec = super().to_record()
        rec.update({
            "reductions": self.reductions,
            "points_verified": self.points_verified,
            "passes": self.passes,
            "sampled_parts": self.sampled_parts,
            "metric": "surrogate",
        })
        return rec


def _final_part(prog, states, seqs, measure):
    certs, measured, sampled = [], [], False
    ms = np.arange(1, prog.length + 1)
    xs = prog.elements()
    for st, g in zip(states, seqs):
        G = g.group
        if st.eps:
            acc = list(st.eps[0].polys)
            for e in st.eps[1:]:
                acc = _seq_mul(G, acc, e.polys)
            E_vals = np.array([[float(p(m)) for p in acc] for m in ms])
        else:
            E_vals = np.zeros((prog.length, G.dim))
        certs.append(_certificate(G, E_vals) if prog.length > 1 else 0.0)
        if measure:
            pts = xs
            if len(xs) > MEASURE_EXHAUSTIVE:
                pts = xs[np.linspace(0, len(xs) - 1, MEASURE_EXHAUSTIVE).astype(int)]
                sampled = True
            reps = _reps_array(G, [g(int(x)).coords for x in pts])
            measured.append(metric_diameter(G, reps))
    return certs, measured, sampled


def decompose_nil(seqs: Sequence[NilPolySeq], N: int, *, measure: bool = True, verify: bool = True,
                  keep_log: bool = False) -> NilDecomposition:
    """Split ``[N]`` into progressions on which every ``g(n) Gamma`` is nearly
    constant.

    Works by induction on the filtration level.  At each pass the horizontal
    coordinates of every sequence are decomposed together with
    :func:`decompose_interval`; parts of length at most ``sqrt(len/L)`` are
    broken into singletons, and on each remaining part the sequences are
    split into small and integer pieces and reduced to the next subgroup.
    When every sequence reaches the trivial group the part is final: there
    ``g(x) Gamma = E(m) Gamma`` for the product ``E`` of the small factors,
    whose coordinate ranges give the certificate.
    """
    seqs = list(seqs)
    if N < 1:
        raise ValueError("N must be positive")
    max_passes = max((g.group.degree for g in seqs), default=0) + 1
    jobs = [(Progression.interval(N), [_State(g, []) for g in seqs], 0)]
    parts, certs, measured = [], [], []
    stats = {"reductions": 0, "points": 0, "passes": 0, "sampled": 0}
    log = [] if keep_log else None
    zero_c = [0.0] * len(seqs)
    while jobs:
        prog, states, depth = jobs.pop(0)
        stats["passes"] = max(stats["passes"], depth)
        active = [i for i, st in enumerate(states) if not st.g.done]
        if not active or prog.length == 1:
            if prog.length == 1:
                parts.append(prog)
                certs.append(list(zero_c))
                measured.append(list(zero_c))
                continue
            c, m, sampled = _final_part(prog, states, seqs, measure)
            stats["sampled"] += sampled
            parts.append(prog)
            certs.append(c)
            measured.append(m)
            continue
        if depth >= max_passes:
            raise DepthExceeded(f"induction needed more than {max_passes} passes")
        slots = []
        for i in active:
            g = states[i].g
            for j in g.group.horizontal(g.level):
                slots.append((i, j))
        polys = [states[i].g.polys[j] for i, j in slots]
        dec = decompose_interval(polys, prog.length)
        short = math.sqrt(prog.length / dec.L)
        for part, pc in zip(dec.parts, dec.part_certificates):
            if part.length <= short:
                for x in part.elements():
                    parts.append(Progression(prog.start + prog.step * (int(x) - 1), prog.step, 1, N))
                    certs.append(list(zero_c))
                    measured.append(list(zero_c))
                continue
            tol = {s: pc[n] for n, s in enumerate(slots)}
            new_states = []
            for i, st in enumerate(states):
                eps = [e.rebase_to(part) for e in st.eps]
                if i not in active:
                    new_states.append(_State(st.g.rebase_to(part), eps))
                    continue
                g = st.g
                g_r = g.rebase_to(part)
                splits = [
                    split_small_int(g_r.polys[j], part.length, tol[(i, j)], bound_factor=None)
                    for j in g.group.horizontal(g.level)
                ]
                red = reduce_to_subgroup(g, splits, part, verify=verify)
                stats["reductions"] += 1
                stats["points"] += red.points_checked
                if log is not None:
                    log.append({"seq": i, "progression": prog.compose(part), "g": g, "local": part,
                                "eps": red.eps, "gam": red.gam, "g_prime": red.g_prime})
                new_states.append(_State(red.g_prime, eps + [red.eps]))
            jobs.append((prog.compose(part), new_states, depth + 1))
    order = sorted(range(len(parts)), key=lambda j: (parts[j].first, parts[j].step))
    out = NilDecomposition(N, [parts[j] for j in order], [tuple(certs[j]) for j in order])
    out.reductions = stats["reductions"]
    out.points_verified = stats["points"]
    out.passes = stats["passes"]
    out.sampled_parts = stats["sampled"]
    out.log = log
    if measure:
        out.part_measured = [tuple(measured[j]) for j in order]
        out.measured_diameter = tuple(
            max((m[i] for m in out.part_measured), default=0.0) for i in range(len(seqs))
        )
    return out
