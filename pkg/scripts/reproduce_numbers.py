"""Print the analytic numbers for the three-stage and two-stage designs.

AAET intervals, the eps chain, CET in ulps, the rigorous AET bound at
eps0 = 2^-6, and the bound verdicts at both the published table errors and
the tables this package builds.
"""

import argparse
from fractions import Fraction

from gsdiv import configfile
from gsdiv.error_model import (
    aaet,
    apply_param,
    cet,
    epsilon_chain,
    log2,
    pow2,
    rigorous_aet,
    table_error_for,
    total_bound,
)


def show_chain(label, cfg, eps0):
    ch = epsilon_chain(eps0, cfg)
    eps = ", ".join(f"2^{log2(e):.6f}" for e in ch.eps_bound)
    epp = ", ".join(f"2^{log2(e):.6f}" for e in ch.eps_prime_bound)
    print(f"  {label}: eps = [{eps}], eps' = [{epp}], omitted bits {list(ch.omit_bits)}")
    return ch


def show_verdicts(cfg, **kw):
    for r in cfg.readouts:
        b = total_bound(cfg, stage=r, **kw)
        lo, hi = b.rigorous_ulps
        print(f"    {r.name}: rigorous [{float(lo):.4f}, {float(hi):.4f}] ulp, "
              f"margin +-{float(b.margin_ulps)}, CET {float(b.cet_ulps):.6f}, {b.regime} -> {b.verdict}")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--tables", action="store_true", help="also build the tables (about 20 s)")
    args = ap.parse_args()

    three = configfile.preset("threestage")
    two = configfile.preset("twostage")
    e3, e2 = pow2(-13.662378), pow2(-16.576687)

    print("AAET intervals (ulps)")
    for label, cfg in (("three-stage", three), ("three-stage, reduced N0", three.replace(n0_reduced=True)),
                       ("two-stage, raw", two.replace(n0_reduced=False, bias_ulps=0)),
                       ("two-stage, reduced N0 +5 bias", two)):
        a = aaet(cfg)
        print(f"  {label}: [{a.lower}, {a.upper}]")

    print("\nEpsilon chains")
    show_chain("three-stage F1=57", three, e3)
    show_chain("three-stage F1=56", three.replace(f_frac_bits=(30, 56, 67)), e3)
    show_chain("two-stage F0=35", two, e2)
    neg = two.replace(f_frac_bits=(34, 67))
    show_chain("two-stage F0=34", neg, e2)

    print("\nCET of the two-stage examples")
    for label, cfg, target in (("F0=35", two, -32.79972341), ("F0=34", neg, -32.515685)):
        rec = table_error_for(cfg, pow2(target))
        c_rec = float(cet(epsilon_chain(rec, cfg), 2) / cfg.ulp(2))
        c_pub = float(cet(epsilon_chain(e2, cfg), 2) / cfg.ulp(2))
        print(f"  {label}: {c_rec:.6f} ulp at eps0 2^{log2(rec):.6f} (recovered from eps'1), "
              f"{c_pub:.6f} ulp at 2^-16.576687")

    print("\nRigorous AET, three-stage, eps0 = 2^-6")
    b = rigorous_aet(three, Fraction(1, 64))
    print(f"  factors {[round(float(f), 5) for f in b.factors]}")
    print(f"  upper {float(b.d_coefficient / b.ulp):.5f}*Q ulp, lower {float(b.lower / b.ulp):.5f} ulp")

    print("\nVerdicts at the published table errors")
    for label, cfg, e in (("three-stage", three, e3),
                          ("three-stage ulp 2^-66", apply_param(three, "uniform_frac_bits", 66), e3),
                          ("three-stage F1=56", three.replace(f_frac_bits=(30, 56, 67)), e3),
                          ("two-stage", two, e2), ("two-stage F0=34", neg, e2)):
        print(f"  {label}")
        show_verdicts(cfg, eps0=e)

    if args.tables:
        print("\nVerdicts at the built tables")
        for label, cfg in (("three-stage", three), ("two-stage", two), ("two-stage F0=34", neg)):
            t = cfg.build_table()
            print(f"  {label}: eps0 = 2^{log2(t.max_abs_rel_error):.6f}")
            show_verdicts(cfg, table=t)


if __name__ == "__main__":
    main()
