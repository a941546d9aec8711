"""Finite partitions of ``[N]``: induced factors, joins, conditional
expectations, and regular cut selection."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import AmbientMismatch, ShiftNotFound
from .gowers import GridFunction

DEFAULT_C = 4.0
DEFAULT_TRIALS = 64
DEFAULT_SEED = 0


def _canonical(labels: np.ndarray) -> np.ndarray:
    # relabel parts 0, 1, 2, ... in order of first occurrence
    _, first, inv = np.unique(labels, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    return order[inv.reshape(-1)].astype(np.int64)


class Factor:
    """Partition of ``[N]``; ``labels[i]`` is the part of the point ``i + 1``."""

    __slots__ = ("labels", "provenance")

    def __init__(self, labels, provenance: Sequence = ()):
        lab = np.asarray(labels)
        if lab.ndim != 1 or lab.size == 0:
            raise ValueError("labels must be a non-empty 1-d array")
        self.labels = _canonical(lab)
        self.provenance = tuple(provenance)

    @classmethod
    def trivial(cls, N: int) -> "Factor":
        return cls(np.zeros(N, dtype=np.int64), (("trivial",),))

    @classmethod
    def singletons(cls, N: int) -> "Factor":
        return cls(np.arange(N), (("singletons",),))

    @classmethod
    def from_parts(cls, parts: Sequence[Sequence[int]], N: int) -> "Factor":
        lab = np.full(N, -1, dtype=np.int64)
        for j, part in enumerate(parts):
            for x in part:
                if lab[int(x) - 1] != -1:
                    raise ValueError(f"point {x} lies in two parts")
                lab[int(x) - 1] = j
        if (lab < 0).any():
            raise ValueError("parts do not cover [N]")
        return cls(lab)

    @property
    def N(self) -> int:
        return int(self.labels.size)

    @property
    def size(self) -> int:
        return int(self.labels.max()) + 1

    def parts(self) -> list[np.ndarray]:
        """Parts as sorted arrays of points of ``[N]``."""
        order = np.argsort(self.labels, kind="stable")
        bounds = np.cumsum(np.bincount(self.labels))[:-1]
        return [p + 1 for p in np.split(order, bounds)]

    def part_of(self, x: int) -> np.ndarray:
        return np.flatnonzero(self.labels == self.labels[x - 1]) + 1

    def refines(self, other: "Factor") -> bool:
        """Is every part of ``self`` inside a single part of ``other``?"""
        _check_same(self, other)
        pairs = np.unique(np.stack([self.labels, other.labels]), axis=1)
        return pairs.shape[1] == self.size

    def __eq__(self, other):
        return isinstance(other, Factor) and np.array_equal(self.labels, other.labels)

    def __hash__(self):
        return hash(self.labels.tobytes())

    def __repr__(self):
        return f"Factor(N={self.N}, parts={self.size})"

    def to_record(self) -> dict:
        return {"N": self.N, "parts": [p.tolist() for p in self.parts()]}


def _check_same(*items):
    Ns = {x.N for x in items}
    if len(Ns) != 1:
        raise AmbientMismatch(f"different ambient sizes {sorted(Ns)}")


def _real_values(g) -> list:
    if isinstance(g, GridFunction):
        g = g.values
    return list(g)


def induced_factor(g, K: int, *, tag=None) -> Factor:
    """Level sets of ``floor(K * g)``: the factor of ``g`` at resolution ``1/K``."""
    if K < 1:
        raise ValueError("K must be at least 1")
    vals = _real_values(g)
    if all(isinstance(v, (int, Fraction, np.integer)) for v in vals):
        bins = np.array([math.floor(Fraction(v) * K) for v in vals], dtype=object)
    else:
        bins = np.floor(np.asarray(vals, dtype=float) * K).astype(np.int64)
    return Factor(bins, ((tag, K),))


def join(factors: Sequence[Factor]) -> Factor:
    """Common refinement ``{B_1 & ... & B_d}`` with empty intersections dropped."""
    factors = list(factors)
    if not factors:
        raise ValueError("need at least one factor")
    _check_same(*factors)
    stack = np.stack([f.labels for f in factors], axis=1)
    _, inv = np.unique(stack, axis=0, return_inverse=True)
    prov = tuple(p for f in factors for p in f.provenance)
    return Factor(inv.reshape(-1), prov)


def _values_of(f) -> np.ndarray:
    return f.values if isinstance(f, GridFunction) else np.asarray(f)


def project(f: GridFunction, B: Factor) -> GridFunction:
    """Conditional expectation: replace ``f`` by its average on each part."""
    vals = _values_of(f)
    if vals.size != B.N:
        raise AmbientMismatch(f"function on [{vals.size}] vs factor on [{B.N}]")
    counts = np.bincount(B.labels)
    if vals.dtype == object or np.issubdtype(vals.dtype, np.integer):
        sums = [Fraction(0)] * B.size
        for lab, v in zip(B.labels.tolist(), vals.tolist()):
            sums[lab] += v
        means = [s / int(c) for s, c in zip(sums, counts)]
        out = np.empty(B.N, dtype=object)
        for i, lab in enumerate(B.labels.tolist()):
            out[i] = means[lab]
        return GridFunction(out, "interval")
    if np.iscomplexobj(vals):
        re = np.bincount(B.labels, weights=vals.real) / counts
        im = np.bincount(B.labels, weights=vals.imag) / counts
        return GridFunction((re + 1j * im)[B.labels], "interval")
    means = np.bincount(B.labels, weights=vals.astype(float)) / counts
    return GridFunction(means[B.labels], "interval")


def mean_square(f) -> Fraction | float:
    """``E |f|^2``; exact for rational data."""
    vals = _values_of(f)
    if vals.dtype == object or np.issubdtype(vals.dtype, np.integer):
        return sum((Fraction(v) ** 2 for v in vals.tolist()), Fraction(0)) / vals.size
    return float(np.mean(np.abs(vals) ** 2))


def inner(f, g):
    """``E f * conj(g)``; exact for rational data."""
    a, b = _values_of(f), _values_of(g)
    if all(v.dtype == object or np.issubdtype(v.dtype, np.integer) for v in (a, b)):
        return sum((Fraction(x) * Fraction(y) for x, y in zip(a.tolist(), b.tolist())), Fraction(0)) / a.size
    return complex(np.mean(a * np.conj(b)))


def energy(f: GridFunction, B: Factor):
    """``||Pi_B f||^2`` in the averaged ``L^2[N]`` norm."""
    return mean_square(project(f, B))


@dataclass(frozen=True)
class RegularityReport:
    constant: float
    radius: float  # the radius attaining the maximum
    radii_tested: int
    r_min: float
    floor_binds: bool

    def to_record(self) -> dict:
        return dict(self.__dict__)


def regularity(g, K: int, t: float = 0.0) -> RegularityReport:
    """``sup_r (1/2r) P_x[ ||K g(x) - t|| <= r ]`` over the realised distances
    and ``1/2``, with radii floored at ``1/(4NK)`` to keep atoms finite."""
    vals = np.asarray([float(v) for v in _real_values(g)])
    N = vals.size
    y = K * vals - t
    dist = np.abs(y - np.round(y))
    r_min = 1.0 / (4 * N * K)
    radii = np.unique(np.concatenate([dist, [0.5]]))
    floor_binds = bool(radii[0] < r_min)
    radii = np.unique(np.maximum(radii, r_min))
    counts = np.searchsorted(np.sort(dist), radii, side="right")
    ratios = counts / (2 * radii * N)
    j = int(np.argmax(ratios))
    return RegularityReport(float(ratios[j]), float(radii[j]), int(radii.size), r_min, floor_binds)


@dataclass(frozen=True)
class ShiftChoice:
    t: float
    trials: int
    report: RegularityReport


def select_shift(g, K: int, C: float = DEFAULT_C, *, trials: int = DEFAULT_TRIALS,
                 seed: int | None = DEFAULT_SEED) -> ShiftChoice:
    """Random ``t in [0, 1/K)`` whose cut family for ``g - t`` is ``C``-regular.

    The first sampled ``t`` with ``regularity(g, K, K t) <= C`` wins; the draw
    is seeded, so the result is deterministic.
    """
    rng = np.random.default_rng(seed)
    for i in range(1, trials + 1):
        t = float(rng.random()) / K
        rep = regularity(g, K, K * t)
        if rep.constant <= C:
            return ShiftChoice(t, i, rep)
    raise ShiftNotFound(f"no C={C}-regular shift in {trials} trials at K={K}")
