"""Density-increment engine for 3-term progressions.

The pieces are a Fourier inverse oracle for the ``U^2`` norm, the
energy-increment construction of a factor from oracle output, the
trichotomy step (few progressions / stable count / denser progression) and
the outer loop that rescales to the progression found and repeats.

Every inequality of the argument is evaluated at the realised parameters and
logged.  At desk scale several of them fail; by default such failures are
recorded and the step carries on, and ``strict=True`` turns them into a
``ChainBroken`` outcome instead.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from . import gowers
from .factors import Factor, induced_factor, join, mean_square, project, select_shift
from .gowers import GridFunction, ap_operator, gowers_norm_interval
from .nilmanifold import NilPolySeq, decompose_nil, torus
from .polyarith import Progression, RationalPoly, snap

# one place for every tunable constant of the engine
DEFAULTS = {
    "c": 0.05,
    "K": 64,
    "C": 4.0,
    "shift_trials": 64,
    "max_iter": 2,
    "small_n": 32,
    "extension": 4,
    "min_gain": 1e-15,
    "max_steps": 16,
    "seed": 0,
}


@dataclass(frozen=True)
class Generator:
    """A real nilsequence ``n -> F(g(n) Gamma)`` on the circle, with
    ``g(n) = phase + theta * n`` and ``F`` one of ``cos(2 pi x)``, ``sin(2 pi x)``."""

    seq: NilPolySeq
    func: str

    @classmethod
    def circle(cls, theta, phase, func: str = "cos") -> "Generator":
        poly = RationalPoly([snap(phase) % 1, snap(theta)])
        return cls(NilPolySeq(torus(1), (poly,)), func)

    @property
    def theta(self) -> Fraction:
        return self.seq.polys[0].coeff(1)

    @property
    def phase(self) -> Fraction:
        return self.seq.polys[0].coeff(0)

    def values(self, N: int) -> np.ndarray:
        x = self.seq.polys[0].values_mod1(range(1, N + 1))
        return np.cos(2 * np.pi * x) if self.func == "cos" else np.sin(2 * np.pi * x)

    def to_record(self) -> dict:
        return {"F": self.func, "theta": str(self.theta), "phase": float(self.phase)}


@dataclass
class OracleResult:
    found: bool
    correlation: float
    threshold: float
    frequency: int | None = None
    theta: Fraction | None = None
    generators: tuple = ()
    generator_correlations: tuple = ()

    def to_record(self) -> dict:
        return {
            "found": self.found,
            "correlation": self.correlation,
            "threshold": self.threshold,
            "theta": None if self.theta is None else str(self.theta),
            "generators": [g.to_record() for g in self.generators],
            "generator_correlations": list(self.generator_correlations),
        }


class FourierOracle:
    """The ``U^2`` inverse theorem made concrete: the largest Fourier
    coefficient of the zero extension to ``Z/(ext*N)Z``.

    A frequency is accepted when ``|E_n f(n) e(-theta n)| >= delta**2 / 2``;
    the correlation is recomputed by direct summation, never read off the
    transform.
    """

    def __init__(self, extension: int = DEFAULTS["extension"]):
        self.extension = extension

    def __call__(self, f: GridFunction, delta: float) -> OracleResult:
        v = f.complex_values()
        N = v.size
        M = self.extension * N
        hat = np.fft.fft(gowers.extend(f, M)) / N
        xi = int(np.argmax(np.abs(hat)))
        n = np.arange(1, N + 1)
        phases = (xi * n) % M / M
        c = complex((v * np.exp(-2j * np.pi * phases)).mean())
        threshold = delta**2 / 2
        if abs(c) < threshold:
            return OracleResult(False, abs(c), threshold, xi, Fraction(xi, M))
        phi = (cmath.phase(c) / (2 * math.pi)) % 1.0
        funcs = ("cos",) if np.isrealobj(f.values) else ("cos", "sin")
        gens = tuple(Generator.circle(Fraction(xi, M), phi, fn) for fn in funcs)
        corr = tuple(float(abs(np.mean(v * g.values(N)))) for g in gens)
        return OracleResult(True, abs(c), threshold, xi, Fraction(xi, M), gens, corr)


class Status:
    CONVERGED = "Converged"
    ORACLE_EXHAUSTED = "OracleExhausted"
    BUDGET_EXCEEDED = "BudgetExceeded"
    STALLED = "Stalled"


@dataclass
class FactorRun:
    factor: Factor
    status: str
    iterations: list
    generators: list
    energies: list

    @property
    def joins(self) -> int:
        return len(self.energies) - 1

    def to_record(self) -> dict:
        return {
            "status": self.status,
            "parts": self.factor.size,
            "energies": [float(e) for e in self.energies],
            "iterations": self.iterations,
            "generators": [g.to_record() for g in self.generators],
        }


def _as_float(x) -> float:
    return float(x.real) if isinstance(x, complex) else float(x)


def build_factor(f: GridFunction, eta: float, oracle: Callable | None = None, K: int = DEFAULTS["K"],
                 C: float = DEFAULTS["C"], *, k: int = 3, max_iter: int = DEFAULTS["max_iter"],
                 seed: int = DEFAULTS["seed"], shift_trials: int = DEFAULTS["shift_trials"],
                 min_gain: float = DEFAULTS["min_gain"]) -> FactorRun:
    """Refine the trivial factor by oracle nilsequences until
    ``||f - Pi_B f||_{U^{k-1}[N]} <= eta``.

    Each round asks the oracle for a nilsequence ``F(g(n))`` correlating with
    the residual, picks a shift ``t`` making the cuts of ``F - t`` at
    resolution ``1/K`` ``C``-regular, and joins that factor in.  The run
    ends ``Converged``, ``OracleExhausted`` (nothing found while the norm is
    still large), ``BudgetExceeded`` (``max_iter`` joins) or ``Stalled`` (a
    join that would not raise the energy by more than ``min_gain`` is undone).
    Energies are exact for integer/rational ``f`` and the Pythagorean identity
    ``gain = ||Pi_{i+1} f - Pi_i f||^2`` is logged each round.
    """
    N = f.N
    if oracle is None:
        oracle = FourierOracle() if k == 3 else None
    B = Factor.trivial(N)
    proj = project(f, B)
    energies = [mean_square(proj)]
    iterations, gens = [], []
    status = Status.BUDGET_EXCEEDED
    for i in range(max_iter + 1):
        resid = GridFunction(f.complex_values() - proj.complex_values()
                             if np.iscomplexobj(f.values) else
                             f.values.astype(float) - proj.values.astype(float))
        norm = gowers_norm_interval(resid, k - 1, method="fourier" if k > 2 else "auto")
        rec = {"i": i, "residual_norm": norm, "parts": B.size, "energy": _as_float(energies[-1])}
        iterations.append(rec)
        if norm <= eta:
            status = Status.CONVERGED
            break
        if i == max_iter:
            status = Status.BUDGET_EXCEEDED
            break
        res = oracle(resid, norm) if oracle is not None else OracleResult(False, 0.0, 0.0)
        rec["oracle"] = res.to_record()
        if not res.found:
            status = Status.ORACLE_EXHAUSTED
            break
        new = [B]
        shifts = []
        for j, gen in enumerate(res.generators):
            vals = gen.values(N)
            choice = select_shift(vals, K, C, trials=shift_trials, seed=seed + 1000 * i + j)
            shifts.append({"t": choice.t, "trials": choice.trials, "regularity": choice.report.constant})
            new.append(induced_factor(vals - choice.t, K, tag=("h", i, j, choice.t)))
        B_new = join(new)
        proj_new = project(f, B_new)
        e_new = mean_square(proj_new)
        gain = e_new - energies[-1]
        pyth = mean_square(proj_new.with_values(proj_new.values - proj.values))
        rec.update({"shifts": shifts, "gain": _as_float(gain), "pythagoras": _as_float(pyth),
                    "pythagoras_gap": abs(_as_float(gain) - _as_float(pyth))})
        if gain <= min_gain:
            status = Status.STALLED
            rec["reverted"] = True
            break
        B, proj = B_new, proj_new
        energies.append(e_new)
        gens.extend(res.generators)
    return FactorRun(B, status, iterations, gens, energies)


# ---------------------------------------------------------------------------
# Trichotomy
# ---------------------------------------------------------------------------


class Outcome:
    SMALL_N = "SmallN"
    COUNT_STABLE = "CountStable"
    DENSITY_INCREMENT = "DensityIncrement"
    CHAIN_BROKEN = "ChainBroken"


@dataclass
class IncrementOutcome:
    kind: str
    N: int
    delta: Fraction
    c: float
    c_prime: float = 0.0
    count_gap: float | None = None
    threshold: float | None = None
    progression: Progression | None = None
    new_density: Fraction | None = None
    step: str | None = None
    checks: list = field(default_factory=list)
    log: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        rec = {
            "kind": self.kind,
            "N": self.N,
            "delta": float(self.delta),
            "delta_exact": str(self.delta),
            "c": self.c,
            "c_prime": self.c_prime,
            "count_gap": self.count_gap,
            "threshold": self.threshold,
            "checks": self.checks,
        }
        if self.progression is not None:
            rec["progression"] = self.progression.to_record()
            rec["new_density"] = float(self.new_density)
            rec["new_density_exact"] = str(self.new_density)
        if self.step is not None:
            rec["step"] = self.step
        rec.update(self.log)
        return rec


def _check(checks: list, name: str, lhs: float, rhs: float, op: str = "<=", tol: float = 1e-12) -> bool:
    ok = lhs <= rhs + tol if op == "<=" else lhs >= rhs - tol
    checks.append({"id": name, "lhs": float(lhs), "op": op, "rhs": float(rhs), "holds": bool(ok)})
    return ok


def _l1(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.abs(a - b).mean())


def trichotomy_step(f: GridFunction, c: float = DEFAULTS["c"], oracle: Callable | None = None, *, k: int = 3,
                    K: int = DEFAULTS["K"], C: float = DEFAULTS["C"], small_n: int = DEFAULTS["small_n"],
                    max_iter: int = DEFAULTS["max_iter"], seed: int = DEFAULTS["seed"],
                    strict: bool = False) -> IncrementOutcome:
    """One step for ``f: [N] -> [0, 1]`` of mean ``delta``.

    Returns ``SmallN`` below the cutoff, ``CountStable`` when
    ``|Lambda_k(f) - Lambda_k(delta 1_[N])| <= c delta**k``, and otherwise
    looks for a progression on which ``f`` has density at least
    ``(1 + c'/2) delta`` with ``c' = min(c, 1)/(10k)**5``: it builds a factor,
    takes the set ``Omega'`` where the projection exceeds ``(1 + c') delta``,
    decomposes ``[N]`` along the factor's generating nilsequences and keeps
    the longest dense progression lying inside ``Omega'``.
    """
    N = f.N
    delta = f.mean()
    vals = f.values
    out = IncrementOutcome(Outcome.SMALL_N, N, delta, c)
    if N < small_n:
        out.threshold = small_n
        return out
    dk = float(delta) ** k
    lam_f = ap_operator([f] * k)
    lam_delta = Fraction(delta) ** k * ap_operator([GridFunction(np.ones(N, dtype=np.int64))] * k) \
        if f.exact else float(delta) ** k * ap_operator([GridFunction(np.ones(N))] * k)
    gap = abs(lam_f - lam_delta)
    out.count_gap, out.threshold = float(gap), c * dk
    out.log["lambda_f"] = float(lam_f)
    out.log["lambda_delta"] = float(lam_delta)
    if gap <= c * dk:
        out.kind = Outcome.COUNT_STABLE
        return out

    checks = out.checks
    c_prime = min(c, 1.0) / (10 * k) ** 5
    out.c_prime = c_prime
    eta = c * dk / (8 * k * 2**k)
    run = build_factor(f, eta, oracle, K, C, k=k, max_iter=max_iter, seed=seed)
    out.log["factor"] = run.to_record()
    out.log["eta"] = eta
    B = run.factor
    fv = vals.astype(float)
    pf = project(f, B).values.astype(float)
    ones = np.ones(N)
    resid_norm = run.iterations[-1]["residual_norm"]
    _check(checks, "factor_approximation", resid_norm, eta)
    lam_pf = ap_operator([GridFunction(pf)] * k)
    _check(checks, "telescoping", abs(float(lam_f) - lam_pf), c * dk / 2)
    _check(checks, "factor_increment", abs(lam_pf - float(lam_delta)), c * dk / 2, ">=")

    level = (1 + c_prime) * float(delta)
    g = np.minimum(pf, level)
    omega = pf > level
    p_omega = float(omega.mean())
    lam_g = ap_operator([GridFunction(g)] * k)
    d1 = float(delta) * ones
    _check(checks, "truncation_count", abs(lam_pf - lam_g), k * _l1(pf, g))
    _check(checks, "truncation_measure", k * _l1(pf, g), k * p_omega)
    _check(checks, "constant_count", abs(float(lam_delta) - lam_g),
           k * (1 + c_prime) ** (k - 1) * float(delta) ** (k - 1) * _l1(d1, g))
    _check(checks, "triangle", _l1(g, d1), p_omega + _l1(d1, pf))
    _check(checks, "omega_measure", p_omega, c * dk / (20 * k), ">=")
    out.log["omega_measure"] = p_omega

    def broken(step):
        out.kind, out.step = Outcome.CHAIN_BROKEN, step
        return out

    if strict and not all(ch["holds"] for ch in checks):
        return broken(next(ch["id"] for ch in checks if not ch["holds"]))
    if not omega.any():
        return broken("omega_empty")

    seqs = [gen.seq for gen in run.generators]
    if seqs:
        dec = decompose_nil(seqs, N, measure=False)
        parts = dec.parts
    else:
        parts = [Progression.interval(N)]
    L = len(parts)
    N_prime = c * c_prime * float(delta) ** (k + 1) / (400 * k) * N / L
    contained, improper = [], 0
    for part in parts:
        inside = omega[part.elements() - 1]
        if inside.all() and part.length >= N_prime:
            contained.append(part)
        elif inside.any():
            improper += part.length
    omega_star = sum(p.length for p in contained)
    out.log.update({"parts": L, "N_prime": N_prime, "contained": len(contained),
                    "omega_star_measure": omega_star / N})
    _check(checks, "improper_measure", improper / N, c * c_prime * float(delta) ** (k + 1) / (200 * k))
    if omega_star:
        mask = np.zeros(N, dtype=bool)
        for p in contained:
            mask[p.elements() - 1] = True
        _check(checks, "omega_star_density", float(fv[mask].mean()), (1 + c_prime / 2) * float(delta), ">=")
    if strict and not all(ch["holds"] for ch in checks):
        return broken(next(ch["id"] for ch in checks if not ch["holds"]))

    target = (1 + Fraction(c_prime) / 2) * Fraction(delta)
    best = None
    for p in contained:
        dens = _density(vals, p)
        if dens >= target:
            key = (-p.length, -dens, p.first)
            if best is None or key < best[0]:
                best = (key, p, dens)
    if best is None:
        return broken("no_dense_progression")
    out.kind = Outcome.DENSITY_INCREMENT
    out.progression, out.new_density = best[1], best[2]
    return out


def _density(vals: np.ndarray, p: Progression):
    sel = vals[p.elements() - 1]
    if vals.dtype == object or np.issubdtype(vals.dtype, np.integer):
        return sum((Fraction(v) for v in sel.tolist()), Fraction(0)) / p.length
    return Fraction(float(sel.mean()))


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------


@dataclass
class RunTrace:
    records: list
    c_prime: float
    final: str

    @property
    def increments(self) -> int:
        return sum(r["outcome"] == Outcome.DENSITY_INCREMENT for r in self.records)

    def verify(self, sets: Sequence[Sequence[int]]) -> bool:
        """Recheck every record against the sets it was computed from."""
        if len(sets) != len(self.records):
            return False
        for rec, A in zip(self.records, sets):
            if Fraction(len(A), rec["N"]) != Fraction(rec["delta_exact"]):
                return False
        for i, rec in enumerate(self.records):
            if rec["outcome"] != Outcome.DENSITY_INCREMENT:
                if i != len(self.records) - 1:
                    return False
                continue
            p = rec["progression"]
            members = set(sets[i])
            els = [p["first"] + p["step"] * j for j in range(p["length"])]
            if els[-1] > rec["N"] or els[0] < 1:
                return False
            dens = Fraction(sum(x in members for x in els), p["length"])
            if dens != Fraction(rec["new_density_exact"]):
                return False
            if dens < (1 + Fraction(self.c_prime) / 2) * Fraction(rec["delta_exact"]):
                return False
            nxt = self.records[i + 1] if i + 1 < len(self.records) else None
            if nxt is not None and (nxt["N"] != p["length"] or Fraction(nxt["delta_exact"]) != dens):
                return False
        return True

    def to_record(self) -> dict:
        return {"c_prime": self.c_prime, "final": self.final, "increments": self.increments,
                "records": self.records}


def density_increment_driver(A: Sequence[int], N: int, k: int = 3, c: float = DEFAULTS["c"],
                             oracle: Callable | None = None, *, max_steps: int = DEFAULTS["max_steps"],
                             return_sets: bool = False, **step_kw):
    """Iterate :func:`trichotomy_step`, each time passing to ``A`` restricted to
    the progression found, relabelled as ``[length]`` (the ``j``-th element
    becomes ``j``).  Stops at the first outcome that is not an increment."""
    A = sorted({int(a) for a in A})
    if not A:
        raise ValueError("A must be non-empty")
    if A[0] < 1 or A[-1] > N:
        raise ValueError("A must lie in [N]")
    records, sets = [], []
    c_prime = min(c, 1.0) / (10 * k) ** 5
    final = "StepBudget"
    for i in range(max_steps):
        f = GridFunction.indicator(A, N)
        out = trichotomy_step(f, c, oracle, k=k, **step_kw)
        rec = out.to_record()
        rec.update({"i": i, "outcome": out.kind, "N": N, "size": len(A)})
        rec.pop("kind")
        factor = rec.get("factor")
        rec["factor_parts"] = factor["parts"] if factor else 1
        rec["energy"] = factor["energies"][-1] if factor else float(out.delta) ** 2
        records.append(rec)
        sets.append(list(A))
        if out.kind != Outcome.DENSITY_INCREMENT:
            final = out.kind
            break
        p = out.progression
        members = set(A)
        A = [j for j in range(1, p.length + 1) if p.start + p.step * j in members]
        N = p.length
    trace = RunTrace(records, c_prime, final)
    return (trace, sets) if return_sets else trace
