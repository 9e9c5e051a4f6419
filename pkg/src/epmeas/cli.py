"""Command-line interface.

Exit codes: 0 on success, 2 on usage errors, 1 on numerical or enumeration
errors (a JSON diagnostic is written to stderr).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from typing import List, Optional

import numpy as np

from . import __version__
from .assumptions import certificate_bundle, estimate_C_constants
from .entropic import ep_bounds, ep_monte_carlo, pressure_curve
from .fluctuation import ldp_empirical, rate_function
from .formats import SourceError, dumps, load_source, parse_grid, parse_range, process_to_json
from .hypotest import chernoff_exponent, hoeffding_psi, stein_exponent
from .instrument import validate
from .operators import spectral_report
from .pathspace import DEFAULT_CAP, iter_trajectories
from .runner import ConfigError, run


class UsageError(Exception):
    pass


def _emit(text: str, path: Optional[str]) -> None:
    if path:
        d = os.path.dirname(os.path.abspath(path))
        os.makedirs(d, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _constants(p, args):
    if getattr(args, "no_lower", False):
        return None
    return estimate_C_constants(p, args.tau_max, args.word_len_max)


def cmd_validate(args, p):
    rep = validate(p.instrument, args.tol)
    spec = spectral_report(p.instrument.total)
    out = {"validation": rep.to_dict(), "lambda0": p.lambda0, "dim": p.dim, "alphabet": list(p.alphabet),
           "spectral": {"spectral_radius": spec.spectral_radius, "eigenvalue_one_simple": spec.eigenvalue_one_simple,
                        "peripheral_count": spec.peripheral_count, "gap": spec.gap}}
    _emit(dumps(out), args.output)
    return 0 if rep.valid else 1


def cmd_reverse(args, p):
    _emit(dumps(process_to_json(p.reversal)), args.output)
    return 0


def cmd_ep(args, p):
    Ts = parse_range(args.T)
    b = ep_bounds(p, max(Ts), args.cap)
    out = {"bounds": b.to_dict()}
    if args.mc_n:
        out["monte_carlo"] = ep_monte_carlo(p, args.mc_T, args.mc_n, args.seed).to_dict()
    _emit(dumps(out), args.output)
    return 0


def cmd_pressure(args, p):
    curve = pressure_curve(p, parse_grid(args.alpha), parse_range(args.T), _constants(p, args), args.cap)
    if args.json:
        _emit(dumps(curve.summary()), args.output)
    else:
        _emit(curve.to_csv(), args.output)
    return 0


def cmd_ldp(args, p):
    Ts = parse_range(args.T)
    curve = pressure_curve(p, parse_grid(args.alpha), Ts, _constants(p, args), args.cap)
    rate = rate_function(curve, parse_grid(args.s_grid) if args.s_grid else None,
                         allow_uncertified=args.no_lower)
    lo, hi = (float(x) for x in args.interval.split(","))
    comp = ldp_empirical(p, (lo, hi), Ts, rate, args.cap)
    if args.json:
        _emit(dumps({"comparison": comp.to_dict(), "rate_function": {"s": rate.s_grid, "I": rate.I}}), args.output)
    else:
        _emit(comp.to_csv(), args.output)
    return 0


def cmd_hypotest(args, p):
    Ts = parse_range(args.T)
    consts = _constants(p, args)
    curve = pressure_curve(p, parse_grid(args.alpha), Ts, consts, args.cap)
    ch = chernoff_exponent(p, Ts, curve, certified_C=consts is not None and consts.status != "inconclusive",
                           cap=args.cap)
    st = stein_exponent(p, Ts, args.epsilon, (curve.ep_lower, curve.ep_lower), args.cap)
    hf = hoeffding_psi(curve, parse_grid(args.s_grid), process=p, allow_uncertified=args.no_lower, cap=args.cap)
    out = {"cT": {str(T): v for T, v in zip(ch.T_values, ch.values)}, "chernoff": ch.to_dict(),
           "stein": st.to_dict(),
           "hoeffding": {"s": hf.s_grid, "psi": hf.psi, "monotone": hf.monotone, "concave": hf.concave}}
    _emit(dumps(out), args.output)
    if args.csv_dir:
        os.makedirs(args.csv_dir, exist_ok=True)
        _emit(ch.to_csv(), os.path.join(args.csv_dir, "chernoff.csv"))
        _emit(st.to_csv(), os.path.join(args.csv_dir, "stein.csv"))
        _emit(hf.to_csv(), os.path.join(args.csv_dir, "hoeffding.csv"))
    return 0


def cmd_assumptions(args, p):
    out = certificate_bundle(p, T_max=args.T_max, tau_max=args.tau_max, word_len_max=args.word_len_max,
                             rng_seed=args.seed, cap=args.cap)
    _emit(dumps(out), args.output)
    return 0


def cmd_sample(args, p):
    fh = open(args.output, "w") if args.output else sys.stdout
    try:
        for tr in iter_trajectories(p, args.T, args.n, args.seed):
            fh.write(tr.to_json() + "\n")
    finally:
        if args.output:
            fh.close()
    return 0


def cmd_run(args, _p):
    manifest = run(args.config, args.out)
    sys.stdout.write(dumps({"status": manifest["status"], "errors": manifest["errors"], "out": args.out}))
    return 0 if all(v == "ok" for v in manifest["status"].values()) else 1


COMMANDS = {
    "validate": cmd_validate,
    "reverse": cmd_reverse,
    "ep": cmd_ep,
    "pressure": cmd_pressure,
    "ldp": cmd_ldp,
    "hypotest": cmd_hypotest,
    "assumptions": cmd_assumptions,
    "sample": cmd_sample,
    "run": cmd_run,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="random seed")
    common.add_argument("--cap", type=int, default=DEFAULT_CAP, help="enumeration cap on l**T")
    common.add_argument("--tol", type=float, default=1e-10, help="validation tolerance")
    common.add_argument("-o", "--output", default=None, help="output file (default stdout)")

    consts = argparse.ArgumentParser(add_help=False)
    consts.add_argument("--tau-max", type=int, default=2)
    consts.add_argument("--word-len-max", type=int, default=3)
    consts.add_argument("--no-lower", action="store_true", help="skip gluing constants and lower bounds")

    parser = argparse.ArgumentParser(prog="epmeas", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_, extra=()):
        sp = sub.add_parser(name, help=help_, parents=[common, *extra])
        if name != "run":
            sp.add_argument("source", help="builtin:<name>(<args>) or instrument JSON file")
        return sp

    add("validate", "validate an instrument")
    add("reverse", "emit the canonical reversal as an instrument file")
    sp = add("ep", "entropy production bounds")
    sp.add_argument("--T", default="1..8")
    sp.add_argument("--mc-T", type=int, default=200)
    sp.add_argument("--mc-n", type=int, default=0)
    sp = add("pressure", "Rényi pressures with brackets (CSV)", [consts])
    sp.add_argument("--alpha", default="0:1:41")
    sp.add_argument("--T", default="1..8")
    sp.add_argument("--json", action="store_true")
    sp = add("ldp", "rate function and empirical large deviations", [consts])
    sp.add_argument("--alpha", default="0:1:41")
    sp.add_argument("--T", default="1..8")
    sp.add_argument("--interval", required=True, help="lo,hi")
    sp.add_argument("--s-grid", default=None)
    sp.add_argument("--json", action="store_true")
    sp = add("hypotest", "Chernoff, Stein and Hoeffding exponents", [consts])
    sp.add_argument("--alpha", default="0:1:41")
    sp.add_argument("--T", default="1..8")
    sp.add_argument("--epsilon", type=float, default=0.2)
    sp.add_argument("--s-grid", default="0:1:21")
    sp.add_argument("--csv-dir", default=None)
    sp = add("assumptions", "certificate bundle for the structural assumptions", [consts])
    sp.add_argument("--T-max", type=int, default=6)
    sp = add("sample", "sample trajectories as JSON lines")
    sp.add_argument("--T", type=int, default=10)
    sp.add_argument("--n", type=int, default=10)
    sp = add("run", "run a scenario configuration")
    sp.add_argument("config")
    sp.add_argument("--out", required=True)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command != "run":
            try:
                p = load_source(args.source)
            except SourceError as exc:
                parser.error(str(exc))
        else:
            p = None
        for attr in ("T",):
            if isinstance(getattr(args, attr, None), str):
                try:
                    parse_range(getattr(args, attr))
                except ValueError as exc:
                    parser.error(str(exc))
        return COMMANDS[args.command](args, p)
    except (ConfigError, ArithmeticError, RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
        diag = {"error": type(exc).__name__, "message": str(exc)}
        for key in ("required", "cap"):
            if hasattr(exc, key):
                diag[key] = getattr(exc, key)
        sys.stderr.write(json.dumps(diag) + "\n")
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
