"""Batch command line: ``stripecsc {encode,inpaint,separate,diag} ...``.

Exit status: 0 on success, 1 on usage or input errors, 2 when a solver fails.
Every subcommand accepts ``--config FILE`` with ``key = value`` lines whose
keys are long option names (``max-iter`` or ``max_iter``); options given on
the command line take precedence.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .apps import SeparationConfig, inpaint, separate_cartoon_texture
from .classic import FistaConfig, omp_patches, solve_l1
from .core import build_dct_dictionary, synthesize
from .diagnostics import (atom_usage_histogram, capped_psnr, diff_sparsity_maps, psnr,
                          sparsity_map)
from .exceptions import ConstraintInfeasible, FormatError, InvalidArgumentError, NumericalFailure
from .l1inf import AdmmConfig, solve_l1inf
from .l2inf import ConstraintSpec, PpxaConfig, solve_l2inf

logger = logging.getLogger("stripecsc")

EXIT_OK, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- validated argument types -------------------------------------------------------

def _number(kind, check, what):
    def parse(text):
        try:
            value = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected {what}, got {text!r}") from None
        if not check(value):
            raise argparse.ArgumentTypeError(f"expected {what}, got {text!r}")
        return value
    parse.__name__ = what
    return parse


positive_float = _number(float, lambda v: v > 0 and np.isfinite(v), "a positive number")
nonneg_float = _number(float, lambda v: v >= 0 and np.isfinite(v), "a nonnegative number")
unit_float = _number(float, lambda v: 0.0 <= v <= 1.0, "a number in [0, 1]")
positive_int = _number(int, lambda v: v > 0, "a positive integer")
any_int = _number(int, lambda v: True, "an integer")


# -- parser -----------------------------------------------------------------------------

def _add_common(p):
    p.add_argument("--config", help="file of 'key = value' lines providing option defaults")
    p.add_argument("-v", "--verbose", action="store_true", help="log solver progress")


def _add_dictionary(p, n=4, m=16):
    p.add_argument("--n", type=positive_int, default=n, help="atom side length")
    p.add_argument("--m", type=positive_int, default=m,
                   help="number of DCT atoms (a perfect square >= n^2)")


def build_parser():
    parser = _Parser(prog="stripecsc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="sparse-code an image")
    p.add_argument("input", help="input PGM")
    p.add_argument("outdir", help="output directory")
    p.add_argument("--solver", choices=("l1", "l1inf", "l2inf"), default="l1inf")
    p.add_argument("--lambda", dest="lam", type=positive_float, default=1.0,
                   help="penalty weight (l1, l1inf)")
    p.add_argument("--sigma", type=nonneg_float, default=2.0,
                   help="noise level for the l2inf thresholds T = C n^2 sigma^2")
    p.add_argument("--C", dest="C", type=positive_float, default=1.0)
    p.add_argument("--theta", type=unit_float, default=0.0, help="stripe weighting (l2inf)")
    p.add_argument("--rho", type=positive_float, default=1.0, help="ADMM penalty (l1inf)")
    p.add_argument("--max-iter", type=positive_int, default=100)
    _add_dictionary(p)
    _add_common(p)

    p = sub.add_parser("inpaint", help="fill masked pixels")
    p.add_argument("input", help="input PGM (masked pixels are ignored)")
    p.add_argument("mask", help="mask PGM: pixels > 127 are observed")
    p.add_argument("outdir", help="output directory")
    p.add_argument("--sigma", type=nonneg_float, default=2.0)
    p.add_argument("--C", dest="C", type=positive_float, default=1.0)
    p.add_argument("--theta", type=unit_float, default=0.0)
    p.add_argument("--max-iter", type=positive_int, default=100)
    p.add_argument("--reference", help="ground-truth PGM; adds summary.csv with PSNRs")
    _add_dictionary(p)
    _add_common(p)

    p = sub.add_parser("separate", help="cartoon/texture separation")
    p.add_argument("input", help="input PGM")
    p.add_argument("outdir", help="output directory")
    p.add_argument("--lambda", dest="lam", type=positive_float, default=1.0)
    p.add_argument("--zeta", type=positive_float, default=10.0)
    p.add_argument("--rounds", type=positive_int, default=3)
    p.add_argument("--max-iter", type=positive_int, default=50, help="ADMM iterations per round")
    p.add_argument("--tv-iters", type=positive_int, default=100)
    p.add_argument("--no-dictionary-update", action="store_true")
    _add_dictionary(p)
    _add_common(p)

    p = sub.add_parser("diag", help="code and image diagnostics as CSV")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--hist", metavar="CODE", help="atom-usage histogram of a code file")
    mode.add_argument("--map", metavar="CODE", help="needle l1 map of a code file")
    mode.add_argument("--diff", nargs=2, metavar=("CODE_A", "CODE_B"),
                      help="difference of two sparsity maps")
    mode.add_argument("--omp", metavar="IMAGE",
                      help="per-patch OMP of an image, reported as an atom-usage histogram")
    mode.add_argument("--psnr", nargs=2, metavar=("REFERENCE", "TEST"), help="PSNR of two PGMs")
    p.add_argument("--shift", nargs=2, type=any_int, default=(0, 0), metavar=("DR", "DC"))
    p.add_argument("--zero-tol", type=nonneg_float, default=1e-8)
    p.add_argument("--err-threshold", type=nonneg_float, default=100.0,
                   help="OMP squared-error threshold per patch")
    p.add_argument("--max-atoms", type=positive_int, default=None)
    p.add_argument("--peak", type=positive_float, default=255.0)
    p.add_argument("--code-out", help="also save the OMP needles as a code file")
    p.add_argument("-o", "--out", default="-", help="output CSV (default: stdout)")
    _add_dictionary(p)
    _add_common(p)
    return parser


def _subparser(parser, command):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise KeyError(command)


def _config_defaults(sub, path):
    """Convert a config file into parser defaults, validated like command-line values."""
    try:
        entries = io.read_config(path)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    by_dest = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in entries.items():
        dest = key.replace("-", "_")
        dest = {"lambda": "lam"}.get(dest, dest)
        action = by_dest.get(dest)
        if action is None or dest in ("help", "config") or not action.option_strings:
            raise UsageError(f"unknown config key {key!r} in {path}")
        if isinstance(action, argparse._StoreTrueAction):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise UsageError(f"config key {key!r} expects a boolean, got {raw!r}")
            defaults[dest] = raw.lower() in ("true", "1", "yes")
            continue
        parts = raw.split() if action.nargs not in (None, "?") else [raw]
        try:
            values = [action.type(v) if action.type else v for v in parts]
        except argparse.ArgumentTypeError as exc:
            raise UsageError(f"config key {key!r}: {exc}") from None
        if action.choices is not None and any(v not in action.choices for v in values):
            raise UsageError(f"config key {key!r}: invalid choice {raw!r}")
        defaults[dest] = values if action.nargs not in (None, "?") else values[0]
    return defaults


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        sub = _subparser(parser, args.command)
        sub.set_defaults(**_config_defaults(sub, args.config))
        args = parser.parse_args(argv)
    return args


# -- commands -----------------------------------------------------------------------------

def _read_input(path):
    if not Path(path).is_file():
        raise UsageError(f"input file not found: {path}")
    return io.read_image(path)


def _outdir(path):
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dictionary(args):
    return build_dct_dictionary(args.n, args.m)


def cmd_encode(args):
    Y = _read_input(args.input)
    out = _outdir(args.outdir)
    D = _dictionary(args)
    trace = []
    if args.solver == "l1":
        code = solve_l1(Y, D, args.lam, FistaConfig(max_iter=args.max_iter), trace=trace)
    elif args.solver == "l1inf":
        code = solve_l1inf(Y, D, args.lam, AdmmConfig(rho=args.rho, max_iter=args.max_iter),
                           trace=trace)
    else:
        spec = ConstraintSpec.from_noise(Y.shape, D.n, args.sigma, args.C)
        code = solve_l2inf(Y, D, spec, PpxaConfig(max_outer=args.max_iter, theta=args.theta),
                           trace=trace)
    io.write_code(code, D.n, out / "code.bin")
    io.write_image(synthesize(D, code), out / "reconstruction.pgm")
    io.write_metrics_csv(out / "metrics.csv", trace)
    return EXIT_OK


def cmd_inpaint(args):
    Y = _read_input(args.input)
    mask = (_read_input(args.mask) > 127).astype(float)
    if mask.shape != Y.shape:
        raise UsageError("mask and input differ in size")
    out = _outdir(args.outdir)
    D = _dictionary(args)
    trace = []
    cfg = PpxaConfig(max_outer=args.max_iter, theta=args.theta)
    code, X = inpaint(Y * mask, mask, D, sigma=args.sigma, C=args.C, cfg=cfg, trace=trace)
    io.write_code(code, D.n, out / "code.bin")
    io.write_image(X, out / "reconstruction.pgm")
    io.write_metrics_csv(out / "metrics.csv", trace)
    if args.reference:
        ref = _read_input(args.reference)
        missing = mask == 0
        rows = [("reconstruction", capped_psnr(psnr(ref, X, mask=missing))),
                ("zero_fill", capped_psnr(psnr(ref, Y * mask, mask=missing)))]
        io.write_csv(out / "summary.csv", ("method", "psnr_missing"), rows)
    return EXIT_OK


def cmd_separate(args):
    X = _read_input(args.input)
    out = _outdir(args.outdir)
    D = _dictionary(args)
    cfg = SeparationConfig(lam=args.lam, zeta=args.zeta, outer_iters=args.rounds,
                           admm=AdmmConfig(max_iter=args.max_iter), tv_iters=args.tv_iters,
                           update_dictionary=not args.no_dictionary_update)
    trace = []
    result = separate_cartoon_texture(X, D, cfg, trace=trace)
    io.write_image(result.cartoon, out / "cartoon.pgm")
    # the texture oscillates around zero; shift it to mid-gray for viewing
    io.write_image(result.texture + 128.0, out / "texture.pgm")
    io.write_code(result.code, D.n, out / "code.bin")
    io.write_metrics_csv(out / "metrics.csv", trace)
    return EXIT_OK


def _read_code(path):
    if not Path(path).is_file():
        raise UsageError(f"code file not found: {path}")
    return io.read_code(path)[0]


def cmd_diag(args):
    sink = sys.stdout if args.out == "-" else args.out
    if args.hist:
        io.write_histogram_csv(sink, atom_usage_histogram(_read_code(args.hist), args.zero_tol))
    elif args.map:
        io.write_map_csv(sink, sparsity_map(_read_code(args.map)))
    elif args.diff:
        a, b = (sparsity_map(_read_code(p)) for p in args.diff)
        if a.shape != b.shape:
            raise UsageError("codes differ in size")
        io.write_map_csv(sink, diff_sparsity_maps(a, b, tuple(args.shift)))
    elif args.omp:
        Y = _read_input(args.omp)
        D = _dictionary(args)
        needles = omp_patches(Y, D, args.err_threshold, args.max_atoms)
        if args.code_out:
            io.write_code(needles, D.n, args.code_out)
        io.write_histogram_csv(sink, atom_usage_histogram(needles, args.zero_tol))
    else:
        ref, test = (_read_input(p) for p in args.psnr)
        if ref.shape != test.shape:
            raise UsageError("images differ in size")
        io.write_csv(sink, ("psnr",), [(capped_psnr(psnr(ref, test, peak=args.peak)),)])
    return EXIT_OK


COMMANDS = {"encode": cmd_encode, "inpaint": cmd_inpaint, "separate": cmd_separate,
            "diag": cmd_diag}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, FormatError, InvalidArgumentError) as exc:
        print(f"stripecsc {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"stripecsc {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalFailure, ConstraintInfeasible, ArithmeticError) as exc:
        print(f"stripecsc {args.command}: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
