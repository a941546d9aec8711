"""Gowers uniformity norms and the progression-counting operator."""

from __future__ import annotations

import json
import os
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import BadExtension, ConfigInvalid, Infeasible

# largest N for direct U^3, U^4, ... sums (env override for big jobs)
DIRECT_MAX_N = int(os.environ.get("APDENSITY_DIRECT_MAX_N", "128"))
# the direct U^2 sum is only quadratic, so it gets its own cap
DIRECT_U2_MAX_N = int(os.environ.get("APDENSITY_DIRECT_U2_MAX_N", "2048"))
# cap on N**s for the transform route
FOURIER_BUDGET = float(os.environ.get("APDENSITY_FOURIER_BUDGET", str(2.0**34)))
BOUND_TOL = 1e-12


class GridFunction:
    """Finite function on ``[N] = {1..N}`` (``values[i]`` is ``f(i+1)``) or on
    ``Z/NZ`` (``values[i]`` is ``f(i)``).

    Integer and ``Fraction`` data are kept exact; anything else becomes a
    complex or float array.
    """

    __slots__ = ("values", "domain", "bounded", "name")

    def __init__(self, values, domain: str = "interval", bounded: bool = False, name: str | None = None):
        if domain not in ("interval", "cyclic"):
            raise ValueError(f"unknown domain {domain!r}")
        arr = _as_array(values)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("values must be a non-empty 1-d sequence")
        if bounded and np.abs(arr.astype(complex)).max() > 1 + BOUND_TOL:
            raise ValueError("function flagged 1-bounded exceeds 1 in modulus")
        self.values = arr
        self.domain = domain
        self.bounded = bounded
        self.name = name

    @property
    def N(self) -> int:
        return int(self.values.size)

    @property
    def exact(self) -> bool:
        return self.values.dtype == object or np.issubdtype(self.values.dtype, np.integer)

    @classmethod
    def indicator(cls, members, N: int, domain: str = "interval") -> "GridFunction":
        vals = np.zeros(N, dtype=np.int64)
        off = 1 if domain == "interval" else 0
        for a in members:
            if not off <= int(a) < N + off:
                raise ValueError(f"{a} outside the domain")
            vals[int(a) - off] = 1
        return cls(vals, domain, bounded=True)

    @classmethod
    def constant(cls, c, N: int, domain: str = "interval") -> "GridFunction":
        return cls([c] * N, domain, bounded=abs(complex(c)) <= 1)

    def complex_values(self) -> np.ndarray:
        return self.values.astype(complex)

    def with_values(self, values) -> "GridFunction":
        return GridFunction(values, self.domain, False, self.name)

    def mean(self):
        if self.exact:
            return sum((Fraction(v) for v in self.values.tolist()), Fraction(0)) / self.N
        return self.values.mean()

    def l1(self) -> float:
        return float(np.abs(self.complex_values()).mean())

    def sup(self) -> float:
        return float(np.abs(self.complex_values()).max())

    def __repr__(self):
        return f"GridFunction(N={self.N}, domain={self.domain!r})"


def _as_array(values) -> np.ndarray:
    if isinstance(values, np.ndarray):
        if values.dtype == bool:
            return values.astype(np.int64)
        return values
    vals = list(values)
    if all(isinstance(v, (bool, int, np.integer)) for v in vals):
        return np.asarray([int(v) for v in vals], dtype=np.int64)
    if any(isinstance(v, Fraction) for v in vals) and all(isinstance(v, (int, Fraction, np.integer)) for v in vals):
        return np.asarray([Fraction(v) for v in vals], dtype=object)
    arr = np.asarray(vals)
    if np.iscomplexobj(arr):
        return arr.astype(complex)
    return arr.astype(float)


def load_function(path) -> GridFunction:
    """``{"values": [...]}``, a list of ``[re, im]`` pairs, or ``{"set": [...], "n": N}``."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigInvalid(f"no such file: {path}", field="f") from None
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"not valid JSON: {exc}", field="f") from None
    domain = "interval"
    if isinstance(data, dict):
        domain = data.get("domain", "interval")
        if "set" in data:
            if "n" not in data:
                raise ConfigInvalid("set shorthand needs 'n'", field="n")
            try:
                return GridFunction.indicator(data["set"], int(data["n"]), domain)
            except ValueError as exc:
                raise ConfigInvalid(str(exc), field="set") from None
        if "values" not in data:
            raise ConfigInvalid("function file needs 'values' or 'set'", field="values")
        data = data["values"]
    if not isinstance(data, list) or not data:
        raise ConfigInvalid("values must be a non-empty list", field="values")
    if all(isinstance(v, list) and len(v) == 2 for v in data):
        data = [complex(a, b) for a, b in data]
    try:
        return GridFunction(data, domain)
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(str(exc), field="values") from None


# ---------------------------------------------------------------------------
# Norms
# ---------------------------------------------------------------------------


def _derivatives(v: np.ndarray) -> np.ndarray:
    """Rows ``h``: the multiplicative derivative ``x -> v(x+h) * conj(v(x))``."""
    return _shifts(v) * np.conj(v)[None, :]


def _shifts(v: np.ndarray) -> np.ndarray:
    # row h is x -> v(x + h mod N), as a view into the doubled array
    return np.lib.stride_tricks.sliding_window_view(np.concatenate([v, v]), v.size)[: v.size]


def _direct_power(v: np.ndarray, s: int) -> float:
    # E_{h_1..h_s, x} of the s-fold derivative; the innermost average over
    # (h_s, x) collapses to |E g|^2
    if s == 1:
        return float(abs(v.mean()) ** 2)
    if s == 2:
        return float((np.abs(_shifts(v) @ np.conj(v) / v.size) ** 2).mean())
    rows = _derivatives(v)
    return float(np.mean([_direct_power(r, s - 1) for r in rows]))


def _fourier_power(v: np.ndarray, s: int) -> float:
    # innermost U^2 via sum |hat g|^4, batched across the last free shift
    if s == 1:
        return float(abs(v.mean()) ** 2)
    if s == 2:
        return float((np.abs(np.fft.fft(v) / v.size) ** 4).sum())
    if s == 3:
        hat = np.fft.fft(_derivatives(v), axis=1) / v.size
        return float((np.abs(hat) ** 4).sum(axis=1).mean())
    N = v.size
    return float(np.mean([_fourier_power(v[(np.arange(N) + h) % N] * np.conj(v), s - 1) for h in range(N)]))


def gowers_power_cyclic(values: np.ndarray, s: int, method: str = "auto") -> float:
    """``||f||_{U^s(Z/NZ)} ** (2**s)``."""
    v = np.asarray(values, dtype=complex)
    N = v.size
    if s < 1:
        raise ValueError("s must be at least 1")
    if method == "auto":
        method = "direct" if (s == 1 or N <= DIRECT_MAX_N) else "fourier"
    if method == "direct":
        cap = DIRECT_U2_MAX_N if s == 2 else DIRECT_MAX_N
        if s > 1 and N > cap:
            raise Infeasible(f"direct U^{s} sum needs N <= {cap}, got N={N}")
        return _direct_power(v, s)
    if method == "fourier":
        if float(N) ** s > FOURIER_BUDGET:
            raise Infeasible(f"U^{s} at N={N} exceeds the transform budget")
        return _fourier_power(v, s)
    raise ValueError(f"unknown method {method!r}")


def _root(power: float, s: int) -> float:
    return max(power, 0.0) ** (1.0 / 2**s)


def gowers_norm_cyclic(f: GridFunction, s: int, method: str = "auto") -> float:
    """``(E_{x,h_1..h_s} Delta_{h_1..h_s} f(x)) ** (1/2**s)`` on ``Z/NZ``.

    ``"direct"`` sums over derivatives (cost about ``N**s``), ``"fourier"``
    evaluates the innermost ``U^2`` layer as ``sum |hat f|**4``.
    """
    return _root(gowers_power_cyclic(f.complex_values(), s, method), s)


def fourier_u2_power(f: GridFunction) -> float:
    """``sum_xi |hat f(xi)|**4`` with ``hat f(xi) = E_x f(x) e(-x xi/N)``."""
    v = f.complex_values()
    return float((np.abs(np.fft.fft(v) / v.size) ** 4).sum())


def extend(f: GridFunction, Ntilde: int) -> np.ndarray:
    """Zero extension of a function on ``[N]`` to ``Z/Ntilde Z`` (``n -> n mod Ntilde``)."""
    out = np.zeros(Ntilde, dtype=complex)
    out[1:f.N + 1] = f.complex_values()
    return out


def gowers_norm_interval(f: GridFunction, s: int, Ntilde: int | None = None, method: str = "auto") -> float:
    """``||f||_{U^s[N]}``: the norm of the zero extension to ``Z/Ntilde Z``
    divided by that of the indicator of ``[N]``; needs ``Ntilde >= 2**s N``."""
    N = f.N
    if Ntilde is None:
        Ntilde = 2**s * N
    if Ntilde < 2**s * N:
        raise BadExtension(f"Ntilde={Ntilde} < 2^{s} * N = {2**s * N}")
    ones = np.zeros(Ntilde, dtype=complex)
    ones[1:N + 1] = 1
    num = gowers_power_cyclic(extend(f, Ntilde), s, method)
    den = gowers_power_cyclic(ones, s, method)
    return _root(num / den, s)


# ---------------------------------------------------------------------------
# Counting operator
# ---------------------------------------------------------------------------


def _padded(f: GridFunction, length: int) -> np.ndarray:
    dtype = object if f.values.dtype == object else f.values.dtype
    out = np.zeros(length, dtype=dtype)
    if dtype == object:
        out[:] = Fraction(0)
    out[1:f.N + 1] = f.values
    return out


def ap_operator(fs: Sequence[GridFunction]):
    """``E_{x,y in {0..N}} prod_j f_j(x + (j-1) y)`` with every ``f_j`` zero
    outside ``[N]``.

    Integer or rational inputs give an exact ``Fraction``.  Real inputs give a
    float; complex inputs a complex number.
    """
    fs = list(fs)
    if len(fs) < 1:
        raise ValueError("need at least one function")
    N = fs[0].N
    if any(f.N != N for f in fs):
        raise ValueError("all functions must live on the same [N]")
    k = len(fs)
    exact = all(f.exact for f in fs)
    length = (k - 1) * N + N + 2
    if exact:
        obj = any(f.values.dtype == object for f in fs)
        arrs = [_padded(f, length).astype(object) if obj else _padded(f, length) for f in fs]
    else:
        arrs = [_padded(f, length).astype(complex) for f in fs]
    x = np.arange(N + 1)
    total = Fraction(0) if exact else 0j
    for y in range(N + 1):
        prod = arrs[0][x]
        for j in range(1, k):
            prod = prod * arrs[j][x + j * y]
        s = prod.sum()
        total += int(s) if exact and not isinstance(s, Fraction) else s
    if exact:
        return Fraction(total) / (N + 1) ** 2
    val = total / (N + 1) ** 2
    if all(np.isrealobj(f.values) for f in fs):
        assert abs(val.imag) < 1e-12, "real inputs produced an imaginary count"
        return float(val.real)
    return complex(val)


def von_neumann_check(fs: Sequence[GridFunction], k: int | None = None) -> dict:
    """Compare ``|Lambda_k|`` with the exact ``L^1`` bound and the ``U^{k-1}`` bound.

    The ``L^1`` inequality ``|Lambda| <= N/(N+1) * min_i ||f_i||_1 prod_{j!=i} ||f_j||_inf``
    (``L^1`` averaged over ``[N]``; the ``N/(N+1)`` comes from averaging ``x, y``
    over ``{0..N}``) is asserted.  The ``U^{k-1}`` ratio is only recorded.
    """
    fs = list(fs)
    k = len(fs) if k is None else k
    if k != len(fs):
        raise ValueError("k must equal the number of functions")
    N = fs[0].N
    lam = ap_operator(fs)
    mag = abs(complex(lam))
    sups = [f.sup() for f in fs]
    l1s = [f.l1() for f in fs]

    def others(i):
        return float(np.prod([s for j, s in enumerate(sups) if j != i]))

    l1_bound = N / (N + 1) * min(l1s[i] * others(i) for i in range(k))
    assert mag <= l1_bound + 1e-12, f"L1 counting bound violated: {mag} > {l1_bound}"
    u_norms = [gowers_norm_interval(f, k - 1, method="fourier" if k > 2 else "auto") for f in fs]
    u_bound = min(u_norms[i] * others(i) for i in range(k))
    return {
        "k": k,
        "N": N,
        "lambda": mag,
        "l1_bound": l1_bound,
        "l1_ok": True,
        "u_bound": u_bound,
        "u_ratio": mag / u_bound if u_bound > 0 else (0.0 if mag == 0 else float("inf")),
    }
