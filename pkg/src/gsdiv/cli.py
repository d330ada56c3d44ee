"""Command-line front end.

Exit codes: 0 pass, 1 misrounding found, 2 bound verdict fail, 3 config error.
"""

from __future__ import annotations

import argparse
import dataclasses
import csv
import sys
import time
from fractions import Fraction

from . import configfile
from .campaign import MODES, CampaignSpec, check_against_bounds, dyadic_decimal, run_campaign, write_histogram
from .engine import ConfigError, divide
from .error_model import bound_reports, log2, pow2, sweep, total_bound
from .fixedpoint import FixedPoint, FixedPointError
from .recip_table import dump_entries, find_worst_divisors, search_partitions

EXIT_OK, EXIT_MISROUND, EXIT_BOUND_FAIL, EXIT_CONFIG = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _rational(text: str) -> Fraction:
    """``3/2``, ``1.25``, ``0x1.8p0`` style hex floats, or ``2^-13.5`` (nearest double)."""
    t = text.strip()
    if t.startswith("2^"):
        return pow2(float(t[2:]))
    if t.lower().startswith(("0x", "-0x")) and "p" in t.lower():
        return Fraction(float.fromhex(t))
    return Fraction(t)


def exact_text(q: Fraction) -> str:
    """Compact exact form: ``m*2^e`` with odd ``m`` for dyadic values, else ``p/q``."""
    q = Fraction(q)
    if q == 0:
        return "0"
    den = q.denominator
    if den & (den - 1):
        return f"{q.numerator}/{den}"
    num, e = q.numerator, -(den.bit_length() - 1)
    while num % 2 == 0:
        num //= 2
        e += 1
    return str(num) if e == 0 else f"{num}*2^{e}"


def _fmt(q: Fraction) -> str:
    q = Fraction(q)
    if q == 0:
        return "0"
    sign = "-" if q < 0 else ""
    return f"{sign}2^{log2(abs(q)):.6f}  [{exact_text(q)}]"


def _ulps(q: Fraction) -> str:
    return f"{float(q):.6f}"


def cmd_table_analyze(args) -> int:
    cfg = configfile.resolve(args.config)
    t0 = time.perf_counter()
    table = cfg.build_table()
    dt = time.perf_counter() - t0
    bc = cfg.table
    print(f"geometry       {bc.describe()}")
    print(f"scan width     {table.divisor_frac_bits} divisor fraction bits ({dt:.1f} s)")
    print(f"max |rel err|  {_fmt(table.max_abs_rel_error)}")
    print(f"max rec*b-1    {_fmt(table.max_pos_error)}")
    print(f"min rec*b-1    {_fmt(table.max_neg_error)}")
    print(f"achieved at b  {dyadic_decimal(table.achieving_input.value)}")
    if args.worst:
        print(f"worst {args.worst} intervals (index, lo, rec*b-1 at worse end):")
        for r in find_worst_divisors(table, args.worst):
            print(f"  {r.index:8d}  {float(r.lo.value):.12f}  2^{log2(abs(r.local_error)):.6f}"
                  f"{' (neg)' if r.local_error < 0 else ''}")
    if args.search_partitions:
        print("slice partitions with the same table sizes (best first):")
        for c, t, note in search_partitions(bc, cfg.divisor_frac_bits):
            res = _fmt(t.max_abs_rel_error) if t is not None else f"unusable: {note}"
            print(f"  n1={c.n1} n2={c.n2} n3={c.n3}  {res}")
    if args.dump:
        dump_entries(table, args.dump)
        print(f"entries written to {args.dump}")
    return EXIT_OK


def _stages(cfg, stage):
    return [cfg.readout(stage)] if stage else list(cfg.readouts)


def cmd_bounds(args) -> int:
    cfg = configfile.resolve(args.config)
    table = None if args.eps0 is not None else cfg.build_table()
    eps0 = None if args.eps0 is None else _rational(args.eps0)
    worst = EXIT_OK
    for r in _stages(cfg, args.stage):
        b = total_bound(cfg, table, r, eps0=eps0, criticality=args.criticality,
                        input_frac_bits=args.input_frac_bits)
        print(f"[{b.stage}] iteration {b.iteration}, {b.mantissa_bits}-bit mantissa, ulp 2^-{cfg.n_width(b.iteration)}")
        print(f"  eps0            {_fmt(b.eps0)}")
        for i, e in enumerate(b.chain.eps_prime_bound[: b.iteration]):
            print(f"  eps'_{i} bound    {_fmt(e)}")
        print(f"  eps_{b.iteration} bound     {_fmt(b.chain.eps_bound[b.iteration])}")
        print(f"  AAET            [{b.aaet_lower}, {b.aaet_upper}] ulp")
        print(f"  |CET| bound     {_ulps(b.cet_ulps)} ulp  = {_fmt(b.cet_bound)}")
        print(f"  F ceiling       {float(b.aet.factor_ceiling):.12f}, factors "
              + ", ".join(f"{float(x):.6f}" for x in b.aet.factors))
        print(f"  rigorous lower  {_ulps(b.rigorous_ulps.lower)} ulp = {_fmt(b.rigorous_lower)}")
        print(f"  rigorous upper  {_ulps(b.rigorous_ulps.upper)} ulp = {_fmt(b.rigorous_upper)}")
        print(f"  rough           [{_ulps(b.rough_lower / b.ulp)}, {_ulps(b.rough_upper / b.ulp)}] ulp")
        print(f"  margin          +-{_ulps(b.margin_ulps)} ulp = +-2^-{b.mantissa_bits + 1}")
        print(f"  regime          {b.regime}")
        print(f"  verdict         {b.verdict}")
        if b.verdict == "fail":
            worst = EXIT_BOUND_FAIL
    return worst


def cmd_simulate(args) -> int:
    cfg = configfile.resolve(args.config)
    w = cfg.divisor_frac_bits
    try:
        a = FixedPoint.from_value(_rational(args.a), 1, w)
        b = FixedPoint.from_value(_rational(args.b), 1, w)
    except FixedPointError as exc:
        raise ConfigError(str(exc)) from exc
    res = divide(cfg, a, b)
    led = res.ledger
    print(f"A = {dyadic_decimal(led.a)}")
    print(f"B = {dyadic_decimal(led.b)}")
    print(f"Q = {float(led.quotient)!r}")
    print(f"rec = {dyadic_decimal(led.rec)}, eps0 = {float(led.eps0):.6e}")
    status = EXIT_OK
    for r in cfg.readouts:
        err = led.error(r.name)
        ok = abs(err) < r.margin
        print(f"[{r.name}] N_{r.iteration} = {dyadic_decimal(led.approx[r.name])}  "
              f"error {float(err / cfg.ulp(r.iteration)):+.6f} ulp  {'ok' if ok else 'MISROUND'}")
        if not ok:
            status = EXIT_MISROUND
    if args.ledger:
        for i, x in enumerate(led.n):
            print(f"  n_{i} = {float(x / cfg.ulp(i)):.6f} ulp_{i}")
        for i, x in enumerate(led.d):
            print(f"  d_{i} = {float(x * (1 << cfg.d_frac_bits[i])):.6f} ulp")
        for i, x in enumerate(led.f):
            print(f"  f_{i} = {float(x * (1 << cfg.d_frac_bits[i])):.6f} ulp, F_{i} = {float(led.factors[i])!r}")
    return status


def cmd_campaign(args) -> int:
    cfg = configfile.resolve(args.config)
    spec = CampaignSpec(
        config=cfg,
        vectors=args.vectors,
        seed=args.seed,
        mode=args.mode,
        stages=(args.stage,) if args.stage else None,
        bin_width=_rational(args.bin_width),
        hist_stage=args.stage,
        input_frac_bits=args.input_frac_bits,
        worst_intervals=args.worst_intervals,
        stop_on_misround=args.stop_on_misround,
        chunk=args.chunk,
        workers=args.workers,
    )
    table = cfg.build_table()
    bounds = bound_reports(cfg, table)
    if not any(bounds[n].verdict == "fail" for n in spec.stage_names):
        # A misrounding here would falsify the bound: stop at the first one.
        spec = dataclasses.replace(spec, stop_on_misround=True)
    t0 = time.perf_counter()
    report = run_campaign(spec, table)
    dt = time.perf_counter() - t0
    print(f"mode {report.mode}, seed {report.seed}, {report.vectors} vectors at "
          f"{report.input_frac_bits} fraction bits ({dt:.1f} s)")
    alarm = False
    for name, st in report.stages.items():
        b = bounds[name]
        lo = "-" if st.min_error is None else _ulps(st.min_error)
        hi = "-" if st.max_error is None else _ulps(st.max_error)
        print(f"[{name}] misroundings {st.misroundings}, observed [{lo}, {hi}] ulp, "
              f"rigorous [{_ulps(b.rigorous_ulps.lower)}, {_ulps(b.rigorous_ulps.upper)}] ulp, verdict {b.verdict}")
        for a_sig, b_sig in st.witnesses:
            w = report.input_frac_bits
            print(f"    witness a={a_sig:#x} b={b_sig:#x} (2^-{w} units)")
        if st.misroundings and b.verdict != "fail":
            alarm = True
    problems = check_against_bounds(report, bounds)
    for p in problems:
        print(f"BOUND VIOLATION {p}")
    if args.hist:
        write_histogram(report, args.hist, cfg)
        print(f"histogram written to {args.hist} (theory in {args.hist}.theory.csv)")
    if alarm or problems:
        print("SOUNDNESS ALARM: misrounding or out-of-bound error under a non-fail verdict")
        return EXIT_MISROUND
    if report.misroundings:
        return EXIT_MISROUND
    if any(bounds[n].verdict == "fail" for n in report.stages):
        return EXIT_BOUND_FAIL
    return EXIT_OK


def _values(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        if ":" in part:
            lo, hi = part.split(":")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def cmd_sweep(args) -> int:
    cfg = configfile.resolve(args.config)
    eps0 = None if args.eps0 is None else _rational(args.eps0)
    table = None if eps0 is not None else cfg.build_table()
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        wr = csv.writer(out, lineterminator="\n")
        wr.writerow(["param", "value", "stage", "rigorous_lower_ulp", "rigorous_upper_ulp",
                     "cet_ulp", "margin_ulp", "verdict"])
        for value, b in sweep(cfg, args.param, _values(args.values), table, eps0=eps0,
                              criticality=args.criticality):
            if args.stage and b.stage != args.stage:
                continue
            lo, hi = b.rigorous_ulps
            wr.writerow([args.param, value, b.stage, dyadic_decimal(lo), dyadic_decimal(hi),
                         dyadic_decimal(b.cet_ulps), dyadic_decimal(b.margin_ulps), b.verdict])
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gsdiv", description="Goldschmidt divider error analysis and verification")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", required=True,
                        help=f"preset name ({', '.join(configfile.PRESETS)}) or config file path")

    sp = sub.add_parser("table-analyze", help="build the reciprocal table and measure its error")
    common(sp)
    sp.add_argument("--worst", type=int, default=0, help="list the N worst divisor intervals")
    sp.add_argument("--dump", help="write table entries to this binary file")
    sp.add_argument("--search-partitions", action="store_true",
                    help="also try every slice split with the same table sizes")
    sp.set_defaults(func=cmd_table_analyze)

    sp = sub.add_parser("bounds", help="print error bounds and verdicts")
    common(sp)
    sp.add_argument("--stage")
    sp.add_argument("--criticality", action="store_true", help="grid-aware truncation suprema")
    sp.add_argument("--input-frac-bits", type=int, help="operand fraction bits (criticality mode)")
    sp.add_argument("--eps0", help="table error override, e.g. 2^-13.662378 or 1/64")
    sp.set_defaults(func=cmd_bounds)

    sp = sub.add_parser("simulate", help="run one division bit-exactly")
    common(sp)
    sp.add_argument("--a", required=True, help="dividend mantissa in [1,2)")
    sp.add_argument("--b", required=True, help="divisor mantissa in [1,2)")
    sp.add_argument("--ledger", action="store_true", help="print every truncation error")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("campaign", help="random/adversarial/exhaustive verification")
    common(sp)
    sp.add_argument("--vectors", type=int, default=100_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--mode", choices=MODES, default="random")
    sp.add_argument("--stage", help="check and histogram only this readout")
    sp.add_argument("--hist", help="write the error histogram CSV here")
    sp.add_argument("--bin-width", default="1/4", help="histogram bin width in ulps")
    sp.add_argument("--input-frac-bits", type=int)
    sp.add_argument("--worst-intervals", type=int, default=64)
    sp.add_argument("--stop-on-misround", action="store_true")
    sp.add_argument("--chunk", type=int, default=1 << 15)
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_campaign)

    sp = sub.add_parser("sweep", help="bounds over a range of one wordlength parameter")
    common(sp)
    sp.add_argument("--param", required=True,
                    help="e.g. f_frac_bits.0, n_frac_bits.*, uniform_frac_bits, bias_ulps")
    sp.add_argument("--values", required=True, help="comma list and/or lo:hi ranges")
    sp.add_argument("--stage")
    sp.add_argument("--eps0")
    sp.add_argument("--criticality", action="store_true")
    sp.add_argument("--out", help="CSV path (default stdout)")
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FixedPointError, KeyError, ValueError, OSError) as exc:
        print(f"gsdiv: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
