"""Test-set constructors and 3-term progression counting."""

from __future__ import annotations

import itertools

import numpy as np

from .errors import ParamOutOfRange

MAX_CERTIFY_N = 100_000


def count_3aps(A, N: int) -> int:
    """Number of non-trivial 3-term progressions ``a < b < c`` in ``A``, exact.

    Counts pairs ``(a, c)`` with ``a + c = 2b`` through an integer
    convolution of the indicator, then removes the ``a = b = c`` terms and
    halves for the symmetry ``a <-> c``.
    """
    ind = np.zeros(N + 1, dtype=np.int64)
    for a in A:
        ind[int(a)] = 1
    if N <= 20_000:
        conv = np.convolve(ind, ind)
    else:
        size = 1 << int(np.ceil(np.log2(2 * N + 2)))
        spec = np.fft.rfft(ind, size)
        conv = np.rint(np.fft.irfft(spec * spec, size)[: 2 * N + 1]).astype(np.int64)
    members = np.flatnonzero(ind)
    total = int(conv[2 * members].sum()) - len(members)
    return total // 2


def is_3ap_free(A, N: int) -> bool:
    return count_3aps(A, N) == 0


def salem_spencer(base: int = 3, digits: int = 7) -> tuple[list[int], int]:
    """Shifted digit set ``{1 + sum_i d_i base**i : 0 <= d_i <= (base-1)//2}``
    inside ``[base**digits]``.  Digit sums never carry, so the set is 3-AP free."""
    if base < 3 or digits < 1 or base**digits > 10**8:
        raise ParamOutOfRange("need base >= 3, digits >= 1 and base**digits <= 1e8", field="base")
    top = (base - 1) // 2
    out = sorted(
        1 + sum(d * base**i for i, d in enumerate(ds))
        for ds in itertools.product(range(top + 1), repeat=digits)
    )
    return out, base**digits


def behrend(d: int, n: int) -> tuple[list[int], int]:
    """Behrend's sphere construction: ``n`` base-``(2d-1)`` digits in
    ``[0, d-1]`` with the most popular value of the digit square sum."""
    if d < 2 or n < 1 or (2 * d - 1) ** n > 10**7:
        raise ParamOutOfRange("need d >= 2, n >= 1 and (2d-1)**n <= 1e7", field="d")
    base = 2 * d - 1
    shells: dict[int, list[int]] = {}
    for ds in itertools.product(range(d), repeat=n):
        value = 1 + sum(x * base**i for i, x in enumerate(ds))
        shells.setdefault(sum(x * x for x in ds), []).append(value)
    best = max(sorted(shells), key=lambda s: len(shells[s]))
    return sorted(shells[best]), base**n


def random_set(N: int, density: float, seed: int = 0) -> tuple[list[int], int]:
    if N < 1 or not 0 <= density <= 1:
        raise ParamOutOfRange("need N >= 1 and density in [0, 1]", field="density")
    rng = np.random.default_rng(seed)
    return (np.flatnonzero(rng.random(N) < density) + 1).tolist(), N


def interval(N: int) -> tuple[list[int], int]:
    if N < 1:
        raise ParamOutOfRange("need N >= 1", field="N")
    return list(range(1, N + 1)), N


def make_set(kind: str, **params) -> dict:
    """Build a set record ``{"kind", "params", "n", "set", "ap_free"}``.

    ``ap_free`` is the exhaustive 3-AP check for ``n <= 1e5`` (else ``None``).
    Salem-Spencer and Behrend outputs must pass it.
    """
    makers = {
        "salem-spencer": lambda p: salem_spencer(int(p.get("base", 3)), int(p.get("digits", 7))),
        "behrend": lambda p: behrend(int(p.get("d", 3)), int(p.get("n", 4))),
        "random": lambda p: random_set(int(p["N"]), float(p.get("density", 0.5)), int(p.get("seed", 0))),
        "interval": lambda p: interval(int(p["N"])),
    }
    key = kind.replace("_", "-")
    if key not in makers:
        raise ParamOutOfRange(f"unknown set kind {kind!r}", field="kind")
    try:
        members, N = makers[key](params)
    except KeyError as exc:
        raise ParamOutOfRange(f"missing parameter {exc}", field=str(exc.args[0])) from None
    free = is_3ap_free(members, N) if N <= MAX_CERTIFY_N else None
    if key in ("salem-spencer", "behrend") and free is False:
        raise AssertionError(f"{key} construction produced a 3-AP")
    return {"kind": key, "params": params, "n": N, "set": members, "ap_free": free}

