from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from gsdiv import configfile
from gsdiv.engine import divide
from gsdiv.error_model import (
    EpsilonChain,
    aaet,
    apply_param,
    cet,
    combined_error,
    epsilon_chain,
    floor_log_half,
    log2,
    pow2,
    precision_loss_curve,
    rigorous_aet,
    sweep,
    table_error_for,
    total_bound,
)
from conftest import all_mantissas

E3 = pow2(-13.662378)
E2 = pow2(-16.576687)


@pytest.fixture(scope="module")
def three():
    return configfile.preset("threestage")


@pytest.fixture(scope="module")
def two():
    return configfile.preset("twostage")


def exact_config(base):
    # Widths grow fast enough that every product fits: no truncation anywhere.
    return base.replace(
        iterations=2, n_frac_bits=(14, 30, 62), d_frac_bits=(14, 30), f_frac_bits=(14, 30),
        f_omit_bits=(0, 0), complement="twos", readouts=base.readouts[:1],
    )


def test_log_helpers():
    assert log2(Fraction(1, 1 << 300)) == -300
    assert floor_log_half(Fraction(1, 64)) == 6
    assert floor_log_half(Fraction(1, 64) + Fraction(1, 1 << 40)) == 5
    assert floor_log_half(Fraction(3, 256)) == 6


def test_aaet_intervals(three, two):
    assert aaet(three) == (-6, 4)
    assert aaet(two.replace(n0_reduced=False, bias_ulps=0)) == (-5, 2)
    assert aaet(three.replace(n0_reduced=True)).lower == -7
    assert aaet(two) == (-1, 7)


def test_aaet_all_exact_is_zero(toy):
    cfg = exact_config(toy)
    assert aaet(cfg, criticality=True, input_frac_bits=7) == (0, 0)


def test_epsilon_chain_three_stage(three):
    ch = epsilon_chain(E3, three)
    assert log2(ch.eps_prime_bound[1]) == pytest.approx(-27.114905, abs=1e-6)
    assert log2(ch.eps_bound[2]) == pytest.approx(-54.032467, abs=1e-6)
    ch56 = epsilon_chain(E3, three.replace(f_frac_bits=(30, 56, 67)))
    assert log2(ch56.eps_bound[2]) == pytest.approx(-53.858898, abs=1e-6)
    assert ch.omit_bits == three.f_omit_bits


def test_epsilon_chain_recurrence(three):
    ch = epsilon_chain(E3, three)
    assert ch.eps_prime_bound[0] == E3 + ch.d_bound[0]
    for i in range(1, three.iterations):
        p = ch.eps_prime_bound[i - 1]
        assert ch.eps_prime_bound[i] == p * p + (1 + p) * ch.f_bound[i - 1] + ch.d_bound[i]


def test_epsilon_chain_two_stage(two):
    ch35 = epsilon_chain(E2, two)
    ch34 = epsilon_chain(E2, two.replace(f_frac_bits=(34, 67)))
    assert log2(ch35.eps_prime_bound[1]) == pytest.approx(-32.7997, abs=1e-3)
    assert log2(ch34.eps_prime_bound[1]) == pytest.approx(-32.5157, abs=1e-3)
    assert ch35.omit_bits == two.f_omit_bits


def test_epsilon_chain_rejects_nonpositive(two):
    with pytest.raises(ValueError):
        epsilon_chain(0, two)


def test_cet_two_stage_from_printed_eps_prime(two):
    # The printed eps'_1 values pin down eps0; CET follows from it.
    for fb, target, want in ((35, -32.79972341, 5.280056), (34, -32.515685, 7.827922)):
        cfg = two.replace(f_frac_bits=(fb, 67))
        e0 = table_error_for(cfg, pow2(target))
        assert float(cet(epsilon_chain(e0, cfg), 2) / cfg.ulp(2)) == pytest.approx(want, abs=1e-4)


def test_cet_of_exact_chain_is_zero():
    z = (Fraction(0),)
    ch = EpsilonChain(Fraction(0), z * 2, z, z, z, z)
    assert cet(ch, 1) == 0
    with pytest.raises(ValueError):
        cet(ch, 2)


def test_table_error_inversion_round_trips(two):
    e0 = table_error_for(two, pow2(-32.6))
    assert log2(epsilon_chain(e0, two).eps_prime_bound[1]) == pytest.approx(-32.6, abs=1e-9)
    with pytest.raises(ValueError):
        table_error_for(two, pow2(-40))


def test_rigorous_aet_table_one(three):
    b = rigorous_aet(three, Fraction(1, 64))
    assert [float(f) for f in b.factors] == pytest.approx([1.0476, 1.0315, 1.0156], abs=1e-4)
    assert float(b.d_coefficient / b.ulp) == pytest.approx(3.0947, abs=1e-4)
    assert float(b.lower / b.ulp) == pytest.approx(-4.0947, abs=1e-4)


def test_rigorous_aet_collapses_to_aaet(three):
    cfg = three.replace(f_frac_bits=(67, 67, 67), complement="twos")
    b = rigorous_aet(cfg, Fraction(1, 1 << 200))
    approx = aaet(cfg)
    assert abs(b.upper / b.ulp - approx.upper) < Fraction(1, 1 << 60)
    assert abs(b.lower / b.ulp - approx.lower) < Fraction(1, 1 << 60)


@settings(max_examples=60, deadline=None)
@given(st.floats(6, 40))
def test_rigorous_width_close_to_aaet_width(e):
    cfg = configfile.preset("threestage").replace(complement="twos", f_frac_bits=(30, 57, 67))
    b = rigorous_aet(cfg, pow2(-e))
    approx = aaet(cfg, include_bias=False)
    width = (b.upper - b.lower) / b.ulp
    assert approx.width <= width < Fraction(11, 10) * approx.width


def test_precision_loss_curve():
    (x, loss), = precision_loss_curve(27.1, [3])
    assert 0.15 < loss < 0.21
    assert precision_loss_curve(20, [60])[0][1] < 1e-15
    losses = [v for _, v in precision_loss_curve(20, range(0, 10))]
    assert losses == sorted(losses, reverse=True)
    assert combined_error(17.3, 35) == pytest.approx(-33.78, abs=0.01)
    with pytest.raises(ValueError):
        precision_loss_curve(0.5, [1])


def test_three_stage_verdicts(three):
    for stage in ("sp", "dp", "ep"):
        assert total_bound(three, eps0=E3, stage=stage).verdict == "pass"
    neg = apply_param(three, "uniform_frac_bits", 66)
    assert total_bound(neg, eps0=E3, stage="ep").verdict == "fail"
    f56 = three.replace(f_frac_bits=(30, 56, 67))
    assert total_bound(f56, eps0=E3, stage="dp").verdict == "fail"


def test_two_stage_doubled_last_factor_error(two):
    e0 = table_error_for(two, pow2(-32.79972341))
    plain = two.replace(f_frac_bits=(35, 66), n0_reduced=False)
    r = total_bound(plain, eps0=e0, stage="ep")
    assert float(r.rough_lower / r.ulp) == pytest.approx(-7.280056, abs=1e-5)
    assert r.verdict == "pass"
    reduced = total_bound(two.replace(f_frac_bits=(35, 66)), eps0=e0, stage="ep")
    assert float(reduced.rough_lower / reduced.ulp) == pytest.approx(-8.280056, abs=1e-5)
    assert reduced.verdict == "fail"


def test_critical_verdict_when_only_the_rough_bound_fails(three):
    # Rough bound is AAET +-1 ulp; the rigorous one can sit inside a margin the rough one crosses.
    cfg = three.replace(readouts=(three.readout("ep").__class__("x", 3, 63),), bias_ulps=3)
    r = total_bound(cfg, eps0=E3)
    assert r.rough_upper >= r.margin > r.rigorous_upper
    assert r.verdict == "critical"


def test_regimes(three):
    assert total_bound(three, eps0=E3, stage="sp").regime == "cet-dominated"
    assert total_bound(three, eps0=E3, stage="ep").regime == "aet-dominated"
    assert total_bound(configfile.preset("twostage"), eps0=E2, stage="ep").regime == "comparable"


def test_sweep_and_apply_param(two):
    rows = list(sweep(two, "f_frac_bits.0", [34, 35], eps0=E2))
    verdicts = {(v, b.stage): b.verdict for v, b in rows}
    assert verdicts[(34, "ep")] == "fail" and verdicts[(35, "ep")] == "pass"
    assert apply_param(two, "n_frac_bits.*", 60).n_frac_bits == (60, 60, 60)
    assert apply_param(two, "bias_ulps", 3).bias_ulps == 3
    with pytest.raises(ValueError):
        apply_param(two, "colour", 1)


@pytest.mark.parametrize("criticality", [False, True])
def test_toy_master_soundness(toy, toy_table, criticality):
    # Every exhaustively observed total error sits inside the rigorous interval.
    bounds = {r.name: total_bound(toy, toy_table, r, criticality=criticality, input_frac_bits=7)
              for r in toy.readouts}
    ms = all_mantissas(7)
    for a in ms:
        for b in ms:
            led = divide(toy, a, b, toy_table).ledger
            for name, bd in bounds.items():
                assert bd.rigorous_lower <= led.error(name) <= bd.rigorous_upper
