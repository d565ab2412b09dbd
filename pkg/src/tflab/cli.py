"""Command-line front end.

Exit codes: 0 Proven/pass, 1 Refuted/fail, 2 Unknown, 64 usage error,
65 inapplicable input or over the oracle cap, 66 I/O error.
"""
from __future__ import annotations

import argparse
import concurrent.futures as cf
import json
import os
import sys

import numpy as np

from . import _accel, analysis
from . import ergodicity as erg
from . import generators as gen
from . import texpr

EXIT_OK, EXIT_FAIL, EXIT_UNKNOWN = 0, 1, 2
EXIT_USAGE, EXIT_DATA, EXIT_IO = 64, 65, 66

_RESULT_EXIT = {erg.PROVEN: EXIT_OK, erg.REFUTED: EXIT_FAIL, erg.UNKNOWN: EXIT_UNKNOWN}


class CliError(Exception):
    def __init__(self, msg, code=EXIT_USAGE):
        super().__init__(msg)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(f"{self.prog}: error: {message}", EXIT_USAGE)


def exit_code(verdict):
    return _RESULT_EXIT[verdict.result]


def _emit(obj, out=None):
    text = obj if isinstance(obj, str) else json.dumps(obj, indent=2, default=str)
    if out:
        try:
            with open(out, "w") as fh:
                fh.write(text + ("" if text.endswith("\n") else "\n"))
        except OSError as exc:
            raise CliError(str(exc), EXIT_IO) from exc
    else:
        print(text)


def _config_line(args):
    cfg = {k: v for k, v in sorted(vars(args).items())
           if k not in ("func", "default_width", "width_given")}
    cfg["jit"] = _accel.JIT_ENABLED
    print("# config: " + json.dumps(cfg, default=str), file=sys.stderr)


def _ints(text):
    return [int(t, 0) for t in text.split(",") if t.strip()]


def _parse_expr(text):
    try:
        return texpr.parse(text)
    except texpr.ParseError as exc:
        raise CliError(f"bad expression: {exc}", EXIT_USAGE) from exc


def _check_cap(width):
    cap = _accel.oracle_cap()
    if width > cap:
        raise CliError(f"width {width} exceeds the exhaustive-search cap 2^{cap} "
                       "(set TFLAB_ORACLE_CAP to raise it)", EXIT_DATA)


def _load_spec(args):
    if getattr(args, "spec", None):
        try:
            with open(args.spec) as fh:
                obj = json.load(fh)
        except OSError as exc:
            raise CliError(str(exc), EXIT_IO) from exc
        except json.JSONDecodeError as exc:
            raise CliError(f"bad spec file: {exc}", EXIT_DATA) from exc
        if args.width_given:
            obj["width"] = args.width
        try:
            return gen.spec_from_json(obj)
        except (KeyError, ValueError, texpr.ParseError) as exc:
            raise CliError(f"bad spec file: {exc}", EXIT_DATA) from exc
    if getattr(args, "expr", None):
        return gen.OrdinarySpec(args.width, _parse_expr(args.expr), args.seed)
    raise CliError("one of --spec or --expr is required", EXIT_USAGE)


def _read_words(path, width, binary=False, packed=False):
    try:
        if binary or packed:
            return np.asarray(gen.read_keystream(path, width, packed), dtype=np.int64)
        if path in (None, "-"):
            text = sys.stdin.read()
        else:
            with open(path) as fh:
                text = fh.read()
    except OSError as exc:
        raise CliError(str(exc), EXIT_IO) from exc
    try:
        return np.array([int(t, 16) for t in text.split()], dtype=np.int64)
    except ValueError as exc:
        raise CliError(f"bad hex word: {exc}", EXIT_DATA) from exc


def _hex_lines(words, width):
    digits = max(1, (width + 3) // 4)
    return "\n".join(format(int(w), f"0{digits}x") for w in words)


# -- verbs ------------------------------------------------------------------------

_METHODS = ("deriv", "brute", "anf", "ff", "b2")


def cmd_verify(args):
    exprs = [_parse_expr(e) for e in args.expr]
    ergodic = args.property == "ergodic"
    if len(exprs) > 1:
        if ergodic:
            raise CliError("multivariate verification supports --property mp only")
        v = erg.multivar_check_bijective(exprs, args.test_width)
    else:
        f = exprs[0]
        m = args.method
        if m == "brute":
            _check_cap(args.width)
            pol = erg.Brute(args.width)
        elif m == "deriv":
            pol = erg.DerivativeMod4(args.test_width) if ergodic else erg.DerivativeMod2(args.test_width)
        elif m == "anf":
            pol = erg.Anf(min(args.width, args.maxbit))
        elif m == "ff":
            pol = erg.FallingFactorial()
        else:
            pol = erg.B2Class()
        try:
            v = (erg.verify_ergodic if ergodic else erg.verify_measure_preserving)(f, pol)
        except (erg.PolicyInapplicable, erg.OverCap) as exc:
            raise CliError(f"{m}: {exc}", EXIT_DATA) from exc
    _emit(v.to_json(), args.out)
    return exit_code(v)


def cmd_classify(args):
    if args.poly_ff is not None:
        cls = erg.classify_poly_ff(_ints(args.poly_ff))
    elif args.poly is not None:
        coeffs = _ints(args.poly)
        try:
            cls = erg.classify_poly_modp(args.p, coeffs)
        except erg.OverCap as exc:
            raise CliError(str(exc), EXIT_DATA) from exc
    elif args.ks is not None:
        cls = erg.klimov_shamir_C(args.ks, args.width)
        cls = {"SingleCycle": erg.ERGODIC, "InvertibleOnly": "MeasurePreservingOnly",
               "NotInvertible": "Neither"}[cls]
    else:
        raise CliError("one of --poly-ff, --poly or --ks is required")
    _emit(cls, args.out)
    ok = cls == erg.ERGODIC or (args.property == "mp" and cls == "MeasurePreservingOnly")
    return EXIT_OK if ok else EXIT_FAIL


def _count_for(spec, count):
    if count is not None:
        return count
    if isinstance(spec, gen.OrdinarySpec):
        _check_cap(spec.width)
        return 1 << spec.width
    raise CliError("--count is required for this spec")


def _generate(spec, count):
    try:
        return gen.keystream(spec, count)
    except gen.SpecError as exc:
        raise CliError(f"spec rejected: {exc}", EXIT_FAIL) from exc


def _report(words, width, args):
    rep = analysis.analyze(words, width, m=getattr(args, "m", 1), max_lc_ring=args.max_lc_ring,
                           scatter_path=getattr(args, "scatter", None))
    if args.l_error is not None and len(words):
        rep["l_error"] = _l_error(words, width, args)
    return rep


def _l_error(words, width, args):
    def one(j):
        bits = analysis.coord_bits(words, j)
        bits = bits[: analysis.cyclic_period(bits)]
        return {"j": j, **analysis.l_error_lc(bits, args.l_error, args.rng_seed).to_json()}

    with cf.ThreadPoolExecutor(max_workers=args.jobs) as ex:
        return list(ex.map(one, range(width)))


def cmd_gen(args):
    spec = _load_spec(args)
    count = _count_for(spec, args.count)
    words = _generate(spec, count)
    width = gen.output_bits(spec)
    if args.binary:
        if not args.out:
            raise CliError("--binary needs --out")
        try:
            gen.write_keystream(args.out, words, width, args.packed)
        except OSError as exc:
            raise CliError(str(exc), EXIT_IO) from exc
    else:
        _emit(_hex_lines(words, width), args.out)
    if args.report:
        _emit(_report(words, width, args), args.report)
    return EXIT_OK


def cmd_analyze(args):
    words = _read_words(args.input, args.width, args.binary, args.packed)
    _emit(_report(words, args.width, args), args.out)
    return EXIT_OK


def _default_b(spec):
    if isinstance(spec, gen.OrdinarySpec):
        coeffs = erg.as_polynomial(spec.f)
        if coeffs is not None and len(coeffs) <= 2:
            return int(coeffs[1]) if len(coeffs) == 2 else 0
    return None


def cmd_plot(args):
    spec = _load_spec(args)
    count = _count_for(spec, args.count)
    words = _generate(spec, count) if count else np.zeros(0, np.int64)
    width = gen.output_bits(spec)
    b = args.b if args.b is not None else _default_b(spec)
    sc = analysis.pair_scatter(words, width, b)
    csv = analysis.scatter_csv(sc["points"])
    out = args.out or "pairs.csv"
    try:
        with open(out, "w") as fh:
            fh.write(csv)
        if args.pgm:
            with open(args.pgm, "wb") as fh:
                fh.write(analysis.occupancy_pgm(words, width, args.k))
    except OSError as exc:
        raise CliError(str(exc), EXIT_IO) from exc
    summary = {"csv": out, "points": len(sc["points"])}
    if "lines" in sc:
        summary["b"] = b
        summary["lines"] = sc["lines"]
    if args.pgm:
        summary["pgm"] = args.pgm
    print(json.dumps(summary))
    return EXIT_OK


def cmd_abc(args):
    spec = gen.default_abc(args.width, args.s, args.seed)
    if args.a:
        spec.a = tuple(_ints(args.a))
    if args.b:
        spec.b = tuple(_ints(args.b))
    if args.d is not None:
        spec.d = args.d
    if args.dj:
        spec.dj = tuple(_ints(args.dj))
    v = gen.abc_validate(spec)
    doc = {"spec": gen.spec_to_json(spec), "verdict": v.to_json()}
    if v.result != erg.REFUTED and args.count:
        words = gen.keystream(spec, args.count, validate=False)
        doc["keystream"] = _hex_lines(words, args.width).split("\n")
    _emit(doc, args.out)
    return exit_code(v)


# -- parser -------------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="tflab", description="T-function laboratory")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    def common(sp, width=32):
        sp.add_argument("--width", type=int, default=None, help=f"word width (default {width})")
        sp.add_argument("--rng-seed", type=int, default=0)
        sp.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
        sp.add_argument("--out")
        sp.set_defaults(default_width=width)

    def reporting(sp):
        sp.add_argument("--l-error", type=int, default=None, metavar="ELL",
                        help="add ELL-error linear complexity per coordinate")
        sp.add_argument("--max-lc-ring", type=int, default=16)
        sp.add_argument("--m", type=int, default=1, help="clock count for half-negation checks")

    v = sub.add_parser("verify", help="prove or refute ergodicity / measure preservation")
    common(v)
    v.add_argument("--expr", action="append", required=True,
                   help="expression; repeat for a multivariate map")
    v.add_argument("--property", choices=("ergodic", "mp"), default="ergodic")
    v.add_argument("--method", choices=_METHODS, default="deriv")
    v.add_argument("--test-width", type=int, default=10)
    v.add_argument("--maxbit", type=int, default=12)
    v.set_defaults(func=cmd_verify)

    c = sub.add_parser("classify", help="coefficient criteria for polynomials and x+(x^2|C)")
    common(c)
    c.add_argument("--poly-ff", help="falling-factorial coefficients c0,c1,...")
    c.add_argument("--poly", help="monomial coefficients a0,a1,...")
    c.add_argument("--p", type=int, default=2)
    c.add_argument("--ks", type=lambda t: int(t, 0), help="constant C of x + (x*x | C)")
    c.add_argument("--property", choices=("ergodic", "mp"), default="ergodic")
    c.set_defaults(func=cmd_classify)

    g = sub.add_parser("gen", help="emit keystream words")
    common(g)
    g.add_argument("--spec")
    g.add_argument("--expr")
    g.add_argument("--seed", type=lambda t: int(t, 0), default=0)
    g.add_argument("--count", type=int)
    g.add_argument("--hex", action="store_true", help="hex words, one per line (default)")
    g.add_argument("--binary", action="store_true", help="raw little-endian words to --out")
    g.add_argument("--packed", action="store_true", help="with --binary: LSB-first packed bits")
    g.add_argument("--report", metavar="PATH", help="write an analysis report of the output")
    reporting(g)
    g.set_defaults(func=cmd_gen)

    a = sub.add_parser("analyze", help="report on one period of words")
    common(a)
    a.add_argument("--in", dest="input", default="-", help="hex words file (default stdin)")
    a.add_argument("--binary", action="store_true")
    a.add_argument("--packed", action="store_true")
    a.add_argument("--scatter", help="also write the pair-scatter CSV here")
    reporting(a)
    a.set_defaults(func=cmd_analyze)

    pl = sub.add_parser("plot", help="pair-scatter CSV and occupancy PGM")
    common(pl)
    pl.add_argument("--spec")
    pl.add_argument("--expr")
    pl.add_argument("--seed", type=lambda t: int(t, 0), default=0)
    pl.add_argument("--count", type=int)
    pl.add_argument("--pairs", action="store_true", help="emit the pair scatter (default)")
    pl.add_argument("--b", type=lambda t: int(t, 0), help="slope for the line-count statistic")
    pl.add_argument("--pgm", help="occupancy bitmap path")
    pl.add_argument("--k", type=int, help="bitmap resolution 2^k (default min(width, 9))")
    pl.set_defaults(func=cmd_plot)

    b = sub.add_parser("abc", help="ABC cipher template")
    common(b, width=8)
    b.add_argument("--s", type=int, default=4, help="LFSR degree")
    b.add_argument("--seed", type=lambda t: int(t, 0), default=0)
    b.add_argument("--a", help="a0,a1,a2")
    b.add_argument("--b", help="b0,b1")
    b.add_argument("--d", type=lambda t: int(t, 0))
    b.add_argument("--dj", help="d_0,...,d_{n-1}")
    b.add_argument("--count", type=int, default=0)
    b.set_defaults(func=cmd_abc)
    return p


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.width_given = args.width is not None
        if args.width is None:
            args.width = args.default_width
        if not 1 <= args.width <= 64:
            raise CliError("--width must be in 1..64")
        _config_line(args)
        return args.func(args)
    except CliError as exc:
        print(str(exc), file=sys.stderr)
        return exc.code
    except texpr.ParseError as exc:
        print(f"bad expression: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":  # pragma: no cover
    main()
