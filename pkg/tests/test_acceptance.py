"""Acceptance criteria, one test each, at their stated tolerances.

Each test records a ``PASS``/``FAIL`` line that is echoed in the terminal
summary. Run directly (``python3 tests/test_acceptance.py``) to get only the
lines. ``GSDIV_ACCEPT_VECTORS`` scales the random campaigns down for quick
local runs; the default is the stated 10**7.
"""

import os
import sys
import time
from fractions import Fraction

import pytest

from gsdiv import configfile
from gsdiv.campaign import CampaignSpec, check_against_bounds, run_campaign
from gsdiv.engine import compile_kernel, divide, run
from gsdiv.error_model import (
    aaet,
    apply_param,
    cet,
    epsilon_chain,
    expand_error,
    log2,
    pow2,
    rigorous_aet,
    table_error_for,
    total_bound,
)
from gsdiv.fixedpoint import (
    FixedPoint,
    SignedDelta,
    mul_exact,
    ones_complement_from_two,
    rectangular_mul,
    requantize,
    truncate,
)
from gsdiv.oracle import check_margin, exact_quotient, margin_ok_int
from gsdiv.recip_table import BipartiteConfig, build

sys.path.insert(0, os.path.dirname(__file__))
from conftest import ACCEPTANCE, all_mantissas  # noqa: E402

VECTORS = int(os.environ.get("GSDIV_ACCEPT_VECTORS", 10_000_000))
ADVERSARIAL_CAP = 10 ** 8
EPS0_THREE = pow2(-13.662378)
EPS0_TWO = pow2(-16.576687)


def record(label: str, ok: bool, detail: str, seconds: float):
    ACCEPTANCE.append(f"{'PASS' if ok else 'FAIL'}  {label}: {detail} [{seconds:.1f} s]")
    print(ACCEPTANCE[-1])
    assert ok, detail


def close(x: float, want: float, tol: float) -> bool:
    return abs(x - want) <= tol


def test_c1_aaet_reproduction():
    t0 = time.perf_counter()
    three = configfile.preset("threestage")
    two = configfile.preset("twostage")
    got = {
        "k=3": aaet(three),
        "k=2": aaet(two.replace(n0_reduced=False, bias_ulps=0)),
        "k=3 reduced N0": aaet(three.replace(n0_reduced=True)),
        "2-stage +5 bias": aaet(two),
    }
    want = {"k=3": (-6, 4), "k=2": (-5, 2), "k=3 reduced N0": (-7, None), "2-stage +5 bias": (-1, 7)}
    ok = all(got[k].lower == lo and (hi is None or got[k].upper == hi) for k, (lo, hi) in want.items())
    detail = ", ".join(f"{k} [{v.lower}, {v.upper}]" for k, v in got.items())
    record("C1 AAET intervals (exact)", ok, detail, time.perf_counter() - t0)


def test_c2_epsilon_chain():
    t0 = time.perf_counter()
    three = configfile.preset("threestage")
    two = configfile.preset("twostage")
    vals = {
        "eps'1 (3-stage)": (log2(epsilon_chain(EPS0_THREE, three).eps_prime_bound[1]), -27.1149),
        "eps2 F1=57": (log2(epsilon_chain(EPS0_THREE, three).eps_bound[2]), -54.0325),
        "eps2 F1=56": (log2(epsilon_chain(EPS0_THREE, three.replace(f_frac_bits=(30, 56, 67))).eps_bound[2]),
                       -53.8589),
        "eps'1 F0=35": (log2(epsilon_chain(EPS0_TWO, two).eps_prime_bound[1]), -32.7997),
        "eps'1 F0=34": (log2(epsilon_chain(EPS0_TWO, two.replace(f_frac_bits=(34, 67))).eps_prime_bound[1]),
                        -32.5157),
    }
    ok = all(close(g, w, 0.001) for g, w in vals.values())
    detail = ", ".join(f"{k} 2^{g:.6f}" for k, (g, w) in vals.items())
    record("C2 eps-chain (+-0.001 in log2)", ok, detail, time.perf_counter() - t0)


def test_c3_cet_reproduction():
    t0 = time.perf_counter()
    two = configfile.preset("twostage")
    pos = two
    neg = two.replace(f_frac_bits=(34, 67))
    # eps0 recovered from the printed eps'_1 of each example (see README on the printed eps0).
    e_pos = table_error_for(pos, pow2(-32.79972341))
    e_neg = table_error_for(neg, pow2(-32.515685))
    c_pos = float(cet(epsilon_chain(e_pos, pos), 2) / pos.ulp(2))
    c_neg = float(cet(epsilon_chain(e_neg, neg), 2) / neg.ulp(2))
    v_pos = total_bound(pos, eps0=e_pos, stage="ep").verdict
    v_neg = total_bound(neg, eps0=e_neg, stage="ep").verdict
    c_printed = float(cet(epsilon_chain(EPS0_TWO, pos), 2) / pos.ulp(2))
    ok = close(c_pos, 5.2801, 0.001) and close(c_neg, 7.8279, 0.001) and v_pos == "pass" and v_neg == "fail"
    detail = (f"positive {c_pos:.6f} ulp ({v_pos}), negative {c_neg:.6f} ulp ({v_neg}); "
              f"at the printed eps0 2^-16.576687 the positive CET is {c_printed:.6f}")
    record("C3 CET (+-0.001 ulp) and verdicts", ok, detail, time.perf_counter() - t0)


def test_c4_table_one():
    t0 = time.perf_counter()
    b = rigorous_aet(configfile.preset("threestage"), Fraction(1, 64))
    factors = [float(f) for f in b.factors]
    up = float(b.d_coefficient / b.ulp)
    lo = float(b.lower / b.ulp)
    ok = (all(close(f, w, 1e-4) for f, w in zip(factors, (1.0476, 1.0315, 1.0156)))
          and close(up, 3.0947, 1e-4) and close(lo, -4.0947, 1e-4))
    detail = f"factors {', '.join(f'{f:.5f}' for f in factors)}; upper {up:.5f}*Q ulp, lower {lo:.5f} ulp"
    record("C4 rigorous AET at eps0=2^-6 (+-1e-4)", ok, detail, time.perf_counter() - t0)


@pytest.mark.parametrize("cfg,limit", [
    (BipartiteConfig(5, 4, 5, 14, 6, 14, method="minimax"), -13.65),
    (BipartiteConfig(6, 5, 6, 17, 7, 17), -16.398161),
])
def test_c5_bipartite_tables(cfg, limit):
    t0 = time.perf_counter()
    build.cache_clear()
    table = build(cfg, 63)
    dt = time.perf_counter() - t0
    e = log2(table.max_abs_rel_error)
    b = table.achieving_input
    attained = abs(1 - b.value * Fraction(table.rec_significands[(b.significand >> (63 - cfg.in_bits))
                                                                   - (1 << cfg.in_bits)],
                                           1 << cfg.rec_frac_bits)) == table.max_abs_rel_error
    ok = e <= limit and attained and dt < 60
    detail = f"{cfg.describe()}: max |eps0| = 2^{e:.6f} (need <= 2^{limit}), witness attains it: {attained}"
    record(f"C5 table 2^{cfg.n1 + cfg.n2}x{cfg.large_out_bits}", ok, detail, dt)


def test_c6_toy_master_soundness():
    t0 = time.perf_counter()
    toy = configfile.preset("toy")
    table = toy.build_table()
    bounds = {r.name: total_bound(toy, table, r) for r in toy.readouts}
    kernel = compile_kernel(toy, table)
    w = toy.divisor_frac_bits
    outside = inconsistent = falsified = pairs = 0
    for a in all_mantissas(w):
        for b in all_mantissas(w):
            pairs += 1
            res = divide(toy, a, b, table)
            led = res.ledger
            q = exact_quotient(led.a, led.b)
            an, bn = int(led.a * (1 << w)), int(led.b * (1 << w))
            fast = kernel(an, bn, w)
            for pos, r in enumerate(toy.readouts):
                bd = bounds[r.name]
                err = q.error_of(res.readouts[r.name])
                if not bd.rigorous_lower <= err <= bd.rigorous_upper:
                    outside += 1
                ok, _ = check_margin(res.readouts[r.name], q.value, r.mantissa_bits)
                if ok != margin_ok_int(fast[pos], toy.n_width(r.iteration), an, bn, w, r.mantissa_bits):
                    inconsistent += 1
                if not ok and bd.verdict != "fail":
                    falsified += 1
    dt = time.perf_counter() - t0
    ok = outside == inconsistent == falsified == 0 and dt < 300
    verdicts = ", ".join(f"{n} {b.verdict}" for n, b in bounds.items())
    detail = (f"{pairs} pairs, {outside} errors outside the rigorous bound, {inconsistent} oracle "
              f"disagreements, {falsified} misroundings under a non-fail verdict ({verdicts})")
    record("C6 toy exhaustive soundness", ok, detail, dt)


@pytest.mark.parametrize("name", ["threestage", "twostage"])
def test_c7_positive_campaigns(name):
    t0 = time.perf_counter()
    cfg = configfile.preset(name)
    table = cfg.build_table()
    bounds = {r.name: total_bound(cfg, table, r) for r in cfg.readouts}
    report = run_campaign(CampaignSpec(cfg, vectors=VECTORS, seed=2024), table)
    problems = check_against_bounds(report, bounds)
    dt = time.perf_counter() - t0
    ok = report.misroundings == 0 and not problems and all(b.verdict != "fail" for b in bounds.values())
    obs = "; ".join(
        f"{n} [{float(s.min_error):.4f}, {float(s.max_error):.4f}] within "
        f"[{float(bounds[n].rigorous_ulps.lower):.4f}, {float(bounds[n].rigorous_ulps.upper):.4f}]"
        for n, s in report.stages.items()
    )
    detail = f"{report.vectors} vectors, {report.misroundings} misroundings; {obs}"
    record(f"C7 {name} random campaign", ok, detail, dt)


def test_c8a_three_stage_ulp_66():
    t0 = time.perf_counter()
    cfg = apply_param(configfile.preset("threestage"), "uniform_frac_bits", 66)
    r = total_bound(cfg, eps0=EPS0_THREE, stage="ep")
    built = total_bound(cfg, cfg.build_table(), "ep")
    ok = r.verdict == "fail" and built.verdict == "fail"
    detail = (f"EP rigorous [{float(r.rigorous_ulps.lower):.4f}, {float(r.rigorous_ulps.upper):.4f}] ulp "
              f"vs +-{float(r.margin_ulps)} ulp -> {r.verdict} (built table: {built.verdict})")
    record("C8a 3-stage ulp=2^-66 verdict", ok, detail, time.perf_counter() - t0)


def test_c8b_three_stage_f1_56():
    t0 = time.perf_counter()
    cfg = configfile.preset("threestage").replace(f_frac_bits=(30, 56, 67))
    r = total_bound(cfg, eps0=EPS0_THREE, stage="dp")
    # Informational: the minimax table built here is tighter than the published
    # one, which moves this design back inside the DP margin.
    built = total_bound(cfg, cfg.build_table(), "dp")
    ok = r.verdict == "fail"
    detail = (f"DP rigorous lower {float(r.rigorous_ulps.lower):.2f} ulp vs -{float(r.margin_ulps)} ulp "
              f"at eps0 2^-13.662378 -> {r.verdict}; with the built table "
              f"({float(built.rigorous_ulps.lower):.2f} ulp) -> {built.verdict}")
    record("C8b 3-stage F1 with 2 extra bits verdict", ok, detail, time.perf_counter() - t0)


def test_c8c_two_stage_f0_34():
    t0 = time.perf_counter()
    cfg = configfile.preset("twostage").replace(f_frac_bits=(34, 67))
    table = cfg.build_table()
    v_paper = total_bound(cfg, eps0=EPS0_TWO, stage="ep").verdict
    v_table = total_bound(cfg, table, "ep").verdict
    spec = CampaignSpec(cfg, vectors=ADVERSARIAL_CAP, seed=11, mode="adversarial", stages=("ep",),
                        stop_on_misround=True)
    report = run_campaign(spec, table)
    st = report.stages["ep"]
    found = st.misroundings > 0
    if found:
        a, b = st.witnesses[0]
        w = spec.width
        led = run(cfg, FixedPoint(a, 2, w), FixedPoint(b, 1, w), table).ledger
        found = abs(led.error("ep")) >= cfg.readout("ep").margin
    ok = v_paper == "fail" and v_table == "fail" and found
    detail = (f"verdict {v_paper} (printed eps0), {v_table} (built table); first witness after "
              f"{report.vectors} adversarial vectors, min error {float(st.min_error):.4f} ulp")
    record("C8c 2-stage F0 with 1 extra bit", ok, detail, time.perf_counter() - t0)


def test_c9_property_suites():
    t0 = time.perf_counter()
    checks = {}
    checks["ones complement"] = all(
        ones_complement_from_two(FixedPoint(s, 1, k)).value == 2 - Fraction(s, 1 << k) - Fraction(1, 1 << k)
        for k in range(1, 11) for s in range(1 << (k + 1))
    )
    rect = True
    for kf, e in ((5, 2), (6, 3), (7, 4)):
        lim = 1 << (kf - e + 1)
        for fs in range((1 << kf) - lim + 1, (1 << kf) + lim):
            f = FixedPoint(fs, 1, kf)
            d = SignedDelta.from_factor(f)
            for ns in range(1 << 7):
                n = FixedPoint(ns, 2, 5)
                rect &= rectangular_mul(n, d, e, 6) == requantize(mul_exact(n, f), 6)
    checks["rectangular multiply"] = rect
    checks["truncation supremum"] = all(
        max(truncate(FixedPoint(s, 1, p), k)[1] for s in range(1 << (p + 1)))
        == (1 - Fraction(1, 1 << (p - k))) * Fraction(1, 1 << k)
        for p in range(1, 11) for k in range(p + 1)
    )
    toy = configfile.preset("toy")
    table = toy.build_table()
    chain = epsilon_chain(table.max_abs_rel_error, toy)
    ident = dom = True
    for a in all_mantissas(7):
        for b in all_mantissas(7):
            led = divide(toy, a, b, table).ledger
            ident &= all(expand_error(led, toy, r.iteration).total == led.error(r.name) for r in toy.readouts)
            dom &= all(abs(e) <= chain.eps_prime_bound[i] for i, e in enumerate(led.eps_prime))
    checks["ledger identity"] = ident
    checks["eps' dominance"] = dom
    dt = time.perf_counter() - t0
    ok = all(checks.values()) and dt < 300
    record("C9 exhaustive property suites", ok, ", ".join(f"{k} {'ok' if v else 'BROKEN'}" for k, v in checks.items()), dt)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
