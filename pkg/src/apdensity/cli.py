"""Command-line front end: ``apdensity <group> <command> [options]``.

Reports are JSON with sorted keys; exact rationals appear as ``"p/q"``
strings and floats are rounded to 15 significant digits, so identical
inputs and seeds give byte-identical output.  Exit status is 0 for any
completed run (negative scientific findings included), 2 for invalid
configuration and 3 when an internal consistency check fails.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import shlex
import sys
from fractions import Fraction

import numpy as np

from . import __version__
from .errors import ApDensityError, ConfigInvalid, InvariantViolation, SubgroupViolation

EXIT_OK, EXIT_CONFIG, EXIT_INTERNAL = 0, 2, 3
# ambient size cap for every command; override with APDENSITY_MAX_N
MAX_N = int(os.environ.get("APDENSITY_MAX_N", str(10**7)))


# ---------------------------------------------------------------------------
# report plumbing
# ---------------------------------------------------------------------------


def clean(obj):
    """Make ``obj`` JSON-ready with deterministic float formatting."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, Fraction):
        return f"{obj.numerator}/{obj.denominator}"
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if x != x or x in (float("inf"), float("-inf")):
            return str(x)
        return float(f"{x:.15g}")
    if isinstance(obj, complex):
        return [clean(obj.real), clean(obj.imag)]
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "to_record"):
        return clean(obj.to_record())
    return str(obj)


def _versions() -> dict:
    import sympy

    return {"apdensity": __version__, "numpy": np.__version__, "sympy": sympy.__version__}


def _config(args) -> dict:
    skip = {"func", "out", "csv", "trace"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def render(report: dict, args) -> str:
    cfg = clean(_config(args))
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    full = dict(report)
    full["config"] = cfg
    full["config_hash"] = hashlib.sha256(blob.encode()).hexdigest()
    full["versions"] = _versions()
    return json.dumps(clean(full), sort_keys=True, indent=2) + "\n"


def _write(path, text):
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise ConfigInvalid(f"cannot write {path}: {exc}", field="out") from None


def _emit(report: dict, args, *, line: str | None = None):
    text = render(report, args)
    if getattr(args, "out", None):
        _write(args.out, text)
        if line is not None:
            print(line)
    elif line is not None:
        print(line)
    else:
        sys.stdout.write(text)


def _check_n(n: int, name: str = "n") -> int:
    if n < 1:
        raise ConfigInvalid("must be positive", field=name)
    if n > MAX_N:
        raise ConfigInvalid(f"exceeds the cap {MAX_N} (set APDENSITY_MAX_N)", field=name)
    return n


def _load_json(path, field):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigInvalid(f"no such file: {path}", field=field) from None
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"not valid JSON: {exc}", field=field) from None


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_schmidt_search(args):
    from .polyarith import snap
    from .schmidt import min_frac_lattice, min_frac_power

    data = _load_json(args.alphas, "alphas")
    if isinstance(data, dict):
        data = data.get("alphas")
    if not isinstance(data, list) or not data:
        raise ConfigInvalid("expected a non-empty list of alphas", field="alphas")
    try:
        alphas = [snap(a) for a in data]
    except (ValueError, TypeError, ZeroDivisionError) as exc:
        raise ConfigInvalid(str(exc), field="alphas") from None
    if args.k < 1:
        raise ConfigInvalid("must be at least 1", field="k")
    N = _check_n(args.n)
    search = min_frac_power if args.method == "brute" else min_frac_lattice
    w = search(alphas, args.k, N)
    _emit({"command": "schmidt search", "witness": w.to_record(), "N": N}, args)


def cmd_schmidt_decompose(args):
    from .polyarith import load_polys
    from .schmidt import decompose_interval

    polys = load_polys(args.polys)
    N = _check_n(args.n)
    dec = decompose_interval(polys, N, args.depth_budget, measure=True)
    rec = dec.to_record()
    rec["valid_partition"] = dec.is_partition()
    rec["certificates_hold"] = dec.certificates_hold()
    if not (rec["valid_partition"] and rec["certificates_hold"]):
        raise InvariantViolation("decomposition failed its own validation")
    if args.csv:
        rows = "first,step,length," + ",".join(f"measured{i},certified{i}" for i in range(len(polys))) + "\n"
        for p, m, c in zip(dec.parts, dec.part_measured, dec.part_certificates):
            rows += f"{p.first},{p.step},{p.length}," + ",".join(
                f"{a:.15g},{float(b):.15g}" for a, b in zip(m, c)) + "\n"
        _write(args.csv, rows)
    _emit({"command": "schmidt decompose", "decomposition": rec}, args)


def cmd_schmidt_scaling(args):
    from .schmidt import scaling_experiment

    try:
        grid = [int(x) for x in args.grid.split(",")]
    except ValueError:
        raise ConfigInvalid("grid must be comma-separated integers", field="grid") from None
    for n in grid:
        _check_n(n, "grid")
    try:
        rep = scaling_experiment(args.k, args.d, grid, args.trials, seed=args.seed)
    except ValueError as exc:
        raise ConfigInvalid(str(exc), field="grid") from None
    csv = rep.pop("csv")
    if args.csv:
        _write(args.csv, csv)
    _emit({"command": "schmidt scaling", "scaling": rep}, args)


def cmd_poly_smallint(args):
    from .polyarith import check_small_int_lemma

    rep = check_small_int_lemma(args.k, _check_n(args.n), args.eps, args.trials, seed=args.seed)
    _emit({"command": "poly smallint", "report": rep}, args)


def cmd_nil_decompose(args):
    from .nilmanifold import decompose_nil, load_seqs

    seqs = load_seqs(args.seqs)
    N = _check_n(args.n)
    dec = decompose_nil(seqs, N)
    rec = dec.to_record()
    rec["valid_partition"] = dec.is_partition()
    rec["certificates_hold"] = dec.certificates_hold()
    if not (rec["valid_partition"] and rec["certificates_hold"]):
        raise InvariantViolation("decomposition failed its own validation")
    _emit({"command": "nil decompose", "decomposition": rec}, args)


def cmd_gowers_norm(args):
    from .gowers import gowers_norm_cyclic, gowers_norm_interval, load_function

    f = load_function(args.f)
    _check_n(f.N, "f")
    if args.s < 1:
        raise ConfigInvalid("must be at least 1", field="s")
    if f.domain == "cyclic":
        value = gowers_norm_cyclic(f, args.s, args.method)
    else:
        value = gowers_norm_interval(f, args.s, args.ntilde, args.method)
    value = clean(value)
    _emit({"command": "gowers norm", "value": value, "N": f.N, "domain": f.domain}, args, line=repr(value))


def cmd_gowers_apcount(args):
    from .gowers import ap_operator, load_function

    f = load_function(args.f)
    _check_n(f.N, "f")
    if args.k < 1:
        raise ConfigInvalid("must be at least 1", field="k")
    lam = ap_operator([f] * args.k)
    shown = str(lam) if isinstance(lam, Fraction) else repr(clean(lam))
    _emit({"command": "gowers apcount", "value": lam, "value_float": complex(lam).real, "N": f.N, "k": args.k},
          args, line=shown)


def cmd_factor_build(args):
    from .factors import induced_factor, regularity, select_shift
    from .gowers import load_function

    g = load_function(args.g)
    if np.iscomplexobj(g.values):
        raise ConfigInvalid("generator must be real-valued", field="g")
    if args.k < 1:
        raise ConfigInvalid("resolution must be at least 1", field="k")
    vals = g.values
    shift = 0.0
    rep = {"command": "factor build", "K": args.k}
    if args.auto_shift:
        choice = select_shift(vals, args.k, args.c, seed=args.seed)
        shift = choice.t
        rep["shift"] = {"t": choice.t, "trials": choice.trials}
        vals = vals.astype(float) - shift
    B = induced_factor(vals, args.k)
    rep["regularity"] = regularity(g.values, args.k, args.k * shift).to_record()
    rep["factor"] = B.to_record()
    _emit(rep, args)


def _parse_set_file(path):
    from .sets import make_set

    try:
        with open(path) as fh:
            text = fh.read()
    except FileNotFoundError:
        raise ConfigInvalid(f"no such file: {path}", field="set") from None
    stripped = text.strip()
    if stripped[:1] in "[{":
        try:
            data = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"not valid JSON: {exc}", field="set") from None
        if isinstance(data, list):
            if not data:
                raise ConfigInvalid("empty set", field="set")
            return sorted(int(a) for a in data), max(int(a) for a in data)
        if "set" not in data:
            raise ConfigInvalid("set file needs 'set'", field="set")
        members = sorted(int(a) for a in data["set"])
        return members, int(data.get("n", max(members)))
    # constructor shorthand, e.g. "salem-spencer --base 3 --digits 7"
    tokens = shlex.split(stripped)
    parser = _make_set_parser(argparse.ArgumentParser(prog="set", add_help=False, exit_on_error=False))
    try:
        ns = parser.parse_args(tokens)
    except (argparse.ArgumentError, SystemExit):
        raise ConfigInvalid(f"cannot parse set shorthand {stripped!r}", field="set") from None
    rec = make_set(ns.kind, **_set_params(ns))
    return rec["set"], rec["n"]


def cmd_increment_run(args):
    from .increment import density_increment_driver

    if args.k != 3:
        raise ConfigInvalid("only k = 3 has a built-in inverse oracle", field="k")
    if not 0 < args.c <= 1:
        raise ConfigInvalid("c must lie in (0, 1]", field="c")
    A, N = _parse_set_file(args.set)
    _check_n(N)
    if not A or A[0] < 1 or A[-1] > N:
        raise ConfigInvalid("set must be a non-empty subset of [n]", field="set")
    trace, sets = density_increment_driver(A, N, args.k, args.c, max_iter=args.max_iter, seed=args.seed,
                                           return_sets=True)
    rec = trace.to_record()
    rec["verified"] = trace.verify(sets)
    if not rec["verified"]:
        raise InvariantViolation("trace failed its own recheck")
    if args.trace:
        lines = [json.dumps(clean(r), sort_keys=True) for r in trace.records]
        _write(args.trace, "\n".join(lines) + "\n")
    _emit({"command": "increment run", "trace": rec, "initial_size": len(A), "N": N}, args)


def _set_params(ns) -> dict:
    keys = {
        "salem-spencer": ("base", "digits"),
        "behrend": ("d", "n"),
        "random": ("N", "density", "seed"),
        "interval": ("N",),
    }[ns.kind.replace("_", "-")]
    out = {}
    for key in keys:
        val = getattr(ns, key, None)
        if val is not None:
            out[key] = val
    return out


def cmd_make_set(args):
    from .sets import make_set

    rec = make_set(args.kind, **_set_params(args))
    _check_n(rec["n"])
    _emit({"command": "make-set", **rec}, args)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _make_set_parser(p):
    p.add_argument("kind", choices=["salem-spencer", "behrend", "random", "interval"])
    p.add_argument("--base", type=int)
    p.add_argument("--digits", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--N", type=int)
    p.add_argument("--density", type=float)
    p.add_argument("--seed", type=int)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="apdensity", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    groups = parser.add_subparsers(dest="group", required=True)

    def leaf(sub, name, func, **kw):
        p = sub.add_parser(name, **kw)
        p.add_argument("--out", help="write the JSON report here")
        p.add_argument("--threads", type=int, default=1, help="recorded; results do not depend on it")
        p.set_defaults(func=func)
        return p

    sch = groups.add_parser("schmidt").add_subparsers(dest="command", required=True)
    p = leaf(sch, "search", cmd_schmidt_search)
    p.add_argument("--alphas", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--method", choices=["brute", "lattice"], default="brute")
    p = leaf(sch, "decompose", cmd_schmidt_decompose)
    p.add_argument("--polys", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--depth-budget", type=int)
    p.add_argument("--csv")
    p = leaf(sch, "scaling", cmd_schmidt_scaling)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--grid", required=True, help="comma-separated N values")
    p.add_argument("--trials", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv")

    poly = groups.add_parser("poly").add_subparsers(dest="command", required=True)
    p = leaf(poly, "smallint", cmd_poly_smallint)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)

    nil = groups.add_parser("nil").add_subparsers(dest="command", required=True)
    p = leaf(nil, "decompose", cmd_nil_decompose)
    p.add_argument("--seqs", required=True)
    p.add_argument("--n", type=int, required=True)

    gw = groups.add_parser("gowers").add_subparsers(dest="command", required=True)
    p = leaf(gw, "norm", cmd_gowers_norm)
    p.add_argument("--f", required=True)
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--ntilde", type=int)
    p.add_argument("--method", choices=["auto", "direct", "fourier"], default="auto")
    p = leaf(gw, "apcount", cmd_gowers_apcount)
    p.add_argument("--f", required=True)
    p.add_argument("--k", type=int, required=True)

    fac = groups.add_parser("factor").add_subparsers(dest="command", required=True)
    p = leaf(fac, "build", cmd_factor_build)
    p.add_argument("--g", required=True)
    p.add_argument("--k", type=int, required=True, help="resolution K")
    p.add_argument("--auto-shift", action="store_true")
    p.add_argument("--c", type=float, default=4.0)
    p.add_argument("--seed", type=int, default=0)

    inc = groups.add_parser("increment").add_subparsers(dest="command", required=True)
    p = leaf(inc, "run", cmd_increment_run)
    p.add_argument("--set", required=True)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--c", type=float, default=0.05)
    p.add_argument("--max-iter", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace")

    p = groups.add_parser("make-set")
    _make_set_parser(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_make_set)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except ConfigInvalid as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InvariantViolation, SubgroupViolation, AssertionError) as exc:
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except ApDensityError as exc:
        _emit({"command": f"{args.group} {getattr(args, 'command', '')}".strip(),
               "status": "error", "error": type(exc).__name__, "message": str(exc)}, args)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
