"""Parametric error bounds for a divider configuration.

The final error after the readout iteration ``j`` splits exactly into

    N_j - Q = -Q * eps_j + AET_j + bias

with ``1 - eps_j = D_{j-1} F_{j-1}`` (convergent part plus the last factor's
own error) and

    AET_j = sum_{i<j} (Q d_i - n_i) * F_i ... F_{j-1}  -  n_j

Everything here bounds those two pieces. Bounds are exact rationals; floats
appear only in log2 renderings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, NamedTuple

from .engine import DividerConfig, ErrorLedger, Readout
from .recip_table import ReciprocalTable

DEFAULT_Q_RANGE = (Fraction(1), Fraction(2))
RAW_Q_RANGE = (Fraction(1, 2), Fraction(2))


class Interval(NamedTuple):
    lower: Fraction
    upper: Fraction

    def contains(self, x) -> bool:
        return self.lower <= x <= self.upper

    @property
    def width(self) -> Fraction:
        return self.upper - self.lower


def log2(q) -> float:
    """log2 of a positive rational without float overflow."""
    q = Fraction(q)
    if q <= 0:
        raise ValueError("log2 of a non-positive number")
    return math.log2(q.numerator) - math.log2(q.denominator)


def pow2(exponent: float) -> Fraction:
    """``2**exponent`` as the exact rational value of the nearest double."""
    return Fraction(2.0 ** exponent)


def floor_log_half(x: Fraction) -> int:
    """Largest ``e`` with ``x <= 2**-e``, i.e. floor(log_{1/2} x) for 0 < x."""
    x = Fraction(x)
    if x <= 0:
        raise ValueError("need x > 0")
    e = x.denominator.bit_length() - x.numerator.bit_length() + 1
    while Fraction(1, 1) / (Fraction(2) ** e) < x:
        e -= 1
    while Fraction(1) / (Fraction(2) ** (e + 1)) >= x:
        e += 1
    return e


def _q_ext(q_range, coef: Fraction, want_max: bool) -> Fraction:
    vals = [q * coef for q in q_range]
    return max(vals) if want_max else min(vals)


def f_range(config: DividerConfig, i: int) -> Interval:
    """Range of the total error ``f_i = (2 - D_i) - F_i``."""
    kd = config.d_frac_bits[i]
    kf = config.f_frac_bits[i]
    trunc = Fraction(1, 1 << kf) - Fraction(1, 1 << kd)
    if config.complement == "ones":
        return Interval(Fraction(1, 1 << kd), Fraction(1, 1 << kd) + trunc)
    return Interval(Fraction(0), trunc)


def _grid_sup(out_frac: int, product_frac: int | None) -> Fraction:
    # Truncating a value on the 2^-p grid to 2^-k loses at most 2^-k - 2^-p.
    ulp = Fraction(1, 1 << out_frac)
    if product_frac is None:
        return ulp
    if product_frac <= out_frac:
        return Fraction(0)
    return ulp - Fraction(1, 1 << product_frac)


def n_sup(config: DividerConfig, i: int, criticality=False, input_frac_bits=None) -> Fraction:
    if not criticality:
        return Fraction(1, 1 << config.n_width(i))
    if i == 0:
        p = None if input_frac_bits is None else input_frac_bits + config.table.rec_frac_bits
    else:
        p = config.n_width(i - 1) + config.f_frac_bits[i - 1]
    return _grid_sup(config.n_width(i), p)


def d_sup(config: DividerConfig, i: int, criticality=False, input_frac_bits=None) -> Fraction:
    if not criticality:
        return Fraction(1, 1 << config.d_frac_bits[i])
    if i == 0:
        p = None if input_frac_bits is None else input_frac_bits + config.table.rec_frac_bits
    else:
        p = config.d_frac_bits[i - 1] + config.f_frac_bits[i - 1]
    return _grid_sup(config.d_frac_bits[i], p)


@dataclass(frozen=True)
class EpsilonChain:
    eps0_max: Fraction
    # eps_bound[i] bounds |1 - D_{i-1} F_{i-1}| (eps_bound[0] is the table error);
    # it has k+1 entries, the last one covering the factor after the final D.
    eps_bound: tuple[Fraction, ...]
    eps_prime_bound: tuple[Fraction, ...]
    f_bound: tuple[Fraction, ...]
    f_floor: tuple[Fraction, ...]
    d_bound: tuple[Fraction, ...]

    @property
    def omit_bits(self) -> tuple[int, ...]:
        """Leading F bits that can be skipped: floor(log_{1/2} eps') per iteration."""
        return tuple(floor_log_half(b) for b in self.eps_prime_bound)

    def factor_ceiling(self, i: int) -> Fraction:
        # The floor of f is taken as 0, which keeps the ceiling an over-estimate.
        return 1 + self.eps_prime_bound[i]


def epsilon_chain(table_eps0, config: DividerConfig) -> EpsilonChain:
    eps0 = Fraction(table_eps0)
    if eps0 <= 0:
        raise ValueError("table error must be positive")
    k = config.iterations
    d = [Fraction(1, 1 << config.d_frac_bits[i]) for i in range(k)]
    fr = [f_range(config, i) for i in range(k)]
    eps = [eps0]
    ep = [eps0 + d[0]]
    for i in range(1, k + 1):
        prev = ep[i - 1]
        e = prev * prev + (1 + prev) * fr[i - 1].upper
        eps.append(e)
        if i < k:
            ep.append(e + d[i])
    return EpsilonChain(
        eps0_max=eps0,
        eps_bound=tuple(eps),
        eps_prime_bound=tuple(ep),
        f_bound=tuple(r.upper for r in fr),
        f_floor=tuple(r.lower for r in fr),
        d_bound=tuple(d),
    )


def table_error_for(config: DividerConfig, eps_prime_target, iteration: int = 1,
                    tol=Fraction(1, 1 << 80)) -> Fraction:
    """Largest table error whose chain keeps ``eps'_iteration`` at ``eps_prime_target``.

    Runs the chain backwards by bisection; the chain is increasing in ``eps0``.
    """
    target = Fraction(eps_prime_target)
    k = config.iterations
    if not 0 <= iteration < k:
        raise ValueError(f"iteration must be in 0..{k - 1}")

    def at(e):
        return epsilon_chain(e, config).eps_prime_bound[iteration]

    lo, hi = Fraction(0), Fraction(1, 2)
    if at(Fraction(1, 1 << 200)) > target:
        raise ValueError("target unreachable even with an exact table")
    while hi - lo > tol * hi:
        mid = (lo + hi) / 2
        mid = Fraction(round(mid * (1 << 200)), 1 << 200) or mid
        if at(mid) <= target:
            lo = mid
        else:
            hi = mid
    return lo


def cet(chain: EpsilonChain, stage: int, q_max=Fraction(2)) -> Fraction:
    """Magnitude bound ``Q * eps'_{stage-1}**2`` of the convergent term."""
    if not 1 <= stage <= len(chain.eps_prime_bound):
        raise ValueError(f"stage {stage} outside 1..{len(chain.eps_prime_bound)}")
    e = chain.eps_prime_bound[stage - 1]
    return Fraction(q_max) * e * e


def aaet(
    config: DividerConfig,
    q_range=DEFAULT_Q_RANGE,
    stage: int | None = None,
    include_bias: bool = True,
    criticality: bool = False,
    input_frac_bits: int | None = None,
) -> Interval:
    """Approximate accumulated error, in ulps of ``N_stage``.

    Upper end: every d_i at its supremum, n_i = 0, the last factor error at its
    minimum. Lower end: d_i = 0, n_i at their suprema, last factor error at
    its maximum. The F_i products multiplying each term are taken as 1.
    """
    j = config.iterations if stage is None else stage
    ulp = config.ulp(j)
    kw = dict(criticality=criticality, input_frac_bits=input_frac_bits)
    dsum = sum((d_sup(config, i, **kw) for i in range(j)), Fraction(0))
    nsum = sum((n_sup(config, i, **kw) for i in range(j + 1)), Fraction(0))
    fr = f_range(config, j - 1)
    upper = _q_ext(q_range, dsum - fr.lower, True)
    lower = -nsum + _q_ext(q_range, -fr.upper, False)
    if include_bias:
        upper += config.bias_at(j)
        lower += config.bias_at(j)
    return Interval(lower / ulp, upper / ulp)


@dataclass(frozen=True)
class AetBound:
    lower: Fraction
    upper: Fraction
    d_coefficient: Fraction  # upper = q_max * d_coefficient
    n_coefficient: Fraction  # lower = -n_coefficient
    factors: tuple[Fraction, ...]  # F-product ceiling applied to term i
    factor_ceiling: Fraction
    ulp: Fraction

    @property
    def interval(self) -> Interval:
        return Interval(self.lower, self.upper)

    def in_ulps(self) -> Interval:
        return Interval(self.lower / self.ulp, self.upper / self.ulp)


def rigorous_aet(
    config: DividerConfig,
    eps0_max,
    q_range=DEFAULT_Q_RANGE,
    stage: int | None = None,
    criticality: bool = False,
    input_frac_bits: int | None = None,
) -> AetBound:
    """Strict AET bound with each term scaled by a ceiling on its F product.

    Term ``i`` is multiplied by ``F_i ... F_{j-1} <= Fmax**(j-i)`` where ``Fmax``
    is the largest per-iteration factor ceiling (that of ``F_0`` whenever the
    iteration converges). With ``criticality`` the truncation suprema account
    for the grid of each product, ``(1 - 2**-p) * ulp`` rather than ``ulp``.
    """
    j = config.iterations if stage is None else stage
    chain = epsilon_chain(eps0_max, config)
    fmax = max(chain.factor_ceiling(i) for i in range(j))
    factors = tuple(fmax ** (j - i) for i in range(j))
    kw = dict(criticality=criticality, input_frac_bits=input_frac_bits)
    dco = sum((d_sup(config, i, **kw) * factors[i] for i in range(j)), Fraction(0))
    nco = sum((n_sup(config, i, **kw) * factors[i] for i in range(j)), Fraction(0))
    nco += n_sup(config, j, **kw)
    return AetBound(
        lower=-nco,
        upper=_q_ext(q_range, dco, True),
        d_coefficient=dco,
        n_coefficient=nco,
        factors=factors,
        factor_ceiling=fmax,
        ulp=config.ulp(j),
    )


@dataclass(frozen=True)
class BoundReport:
    stage: str
    iteration: int
    mantissa_bits: int
    ulp: Fraction
    eps0: Fraction
    aaet_lower: Fraction  # ulps, bias included
    aaet_upper: Fraction
    cet_bound: Fraction  # absolute
    rigorous_lower: Fraction  # absolute, bias included
    rigorous_upper: Fraction
    rough_lower: Fraction
    rough_upper: Fraction
    margin: Fraction
    verdict: str  # pass | critical | fail
    regime: str
    aet: AetBound = field(repr=False)
    chain: EpsilonChain = field(repr=False)

    @property
    def rigorous(self) -> Interval:
        return Interval(self.rigorous_lower, self.rigorous_upper)

    @property
    def rigorous_ulps(self) -> Interval:
        return Interval(self.rigorous_lower / self.ulp, self.rigorous_upper / self.ulp)

    @property
    def cet_ulps(self) -> Fraction:
        return self.cet_bound / self.ulp

    @property
    def margin_ulps(self) -> Fraction:
        return self.margin / self.ulp

    @property
    def passed(self) -> bool:
        return self.verdict != "fail"


def _regime(cet_abs: Fraction, aet_width: Fraction) -> str:
    # "Much larger/smaller" is taken as a factor of 16 either way.
    if aet_width == 0 or cet_abs > 16 * aet_width:
        return "cet-dominated"
    if 16 * cet_abs < aet_width:
        return "aet-dominated"
    return "comparable"


def total_bound(
    config: DividerConfig,
    table: ReciprocalTable | None = None,
    stage: str | Readout | None = None,
    *,
    eps0=None,
    q_range=DEFAULT_Q_RANGE,
    criticality: bool = False,
    input_frac_bits: int | None = None,
) -> BoundReport:
    """Full bound and verdict for one readout.

    ``eps0`` overrides the table's measured error, which is how a bound is
    evaluated for a table that has only been characterized, not built.
    """
    if isinstance(stage, Readout):
        r = stage
    elif stage is None:
        r = max(config.readouts, key=lambda x: (x.iteration, x.mantissa_bits))
    else:
        r = config.readout(stage)
    if eps0 is None:
        if table is None:
            table = config.build_table()
        eps0 = table.max_abs_rel_error
    eps0 = Fraction(eps0)
    j = r.iteration
    ulp = config.ulp(j)
    bias = config.bias_at(j)
    chain = epsilon_chain(eps0, config)
    aet = rigorous_aet(config, eps0, q_range, j, criticality, input_frac_bits)
    q_hi = max(q_range)

    ep_prev = chain.eps_prime_bound[j - 1]
    eps_j_max = chain.eps_bound[j]
    eps_j_min = max(chain.f_floor[j - 1] * (1 - ep_prev), Fraction(0))
    upper = _q_ext(q_range, aet.d_coefficient - eps_j_min, True) + bias
    lower = aet.lower - q_hi * eps_j_max + bias

    cet_abs = cet(chain, j, q_hi)
    approx = aaet(config, q_range, j, criticality=criticality, input_frac_bits=input_frac_bits)
    regime = _regime(cet_abs, aet.upper - aet.lower)
    if regime == "aet-dominated":
        # CET and the ignored F products are both well under an ulp here, so
        # one ulp of slack on either side covers them.
        rough_lower = approx.lower * ulp - ulp
        rough_upper = approx.upper * ulp + ulp
    else:
        rough_lower = approx.lower * ulp - cet_abs
        rough_upper = approx.upper * ulp
    margin = r.margin
    if -margin < lower and upper < margin:
        verdict = "pass" if -margin < rough_lower and rough_upper < margin else "critical"
    else:
        verdict = "fail"
    return BoundReport(
        stage=r.name,
        iteration=j,
        mantissa_bits=r.mantissa_bits,
        ulp=ulp,
        eps0=eps0,
        aaet_lower=approx.lower,
        aaet_upper=approx.upper,
        cet_bound=cet_abs,
        rigorous_lower=lower,
        rigorous_upper=upper,
        rough_lower=rough_lower,
        rough_upper=rough_upper,
        margin=margin,
        verdict=verdict,
        regime=regime,
        aet=aet,
        chain=chain,
    )


def bound_reports(config: DividerConfig, table=None, **kw) -> dict[str, BoundReport]:
    if table is None and kw.get("eps0") is None:
        table = config.build_table()
    return {r.name: total_bound(config, table, r, **kw) for r in config.readouts}


def precision_loss_curve(e: float, extra_bits: Iterable[float]) -> list[tuple[float, float]]:
    """Bits lost when ``F`` keeps ``2e + x`` fractional bits instead of being exact.

    With ``eps = 2**-e`` the next convergence state grows from ``eps**2`` to
    ``eps**2 + (1 + eps) * 2**-(2e + x)``.
    """
    if e < 1:
        raise ValueError("e must be >= 1")
    eps = 2.0 ** -e
    return [(x, math.log2(1 + (1 + eps) * 2.0 ** -x)) for x in extra_bits]


def combined_error(e: float, f_frac_bits: int) -> float:
    """log2 of ``eps**2 + (1 + eps) * 2**-f_frac_bits`` for ``eps = 2**-e``."""
    eps = 2.0 ** -e
    return math.log2(eps * eps + (1 + eps) * 2.0 ** -f_frac_bits)


@dataclass(frozen=True)
class ErrorTerms:
    convergent: Fraction  # -Q eps'_{j-1}^2
    last_factor: Fraction  # -Q f_{j-1} (1 - eps'_{j-1})
    accumulated: Fraction  # AET_j
    bias: Fraction

    @property
    def total(self) -> Fraction:
        return self.convergent + self.last_factor + self.accumulated + self.bias


def expand_error(ledger: ErrorLedger, config: DividerConfig, iteration: int) -> ErrorTerms:
    """Rebuild the final error from ``eps0`` and the recorded n, d, f alone."""
    q = ledger.a / ledger.b
    ep = [ledger.eps0 + ledger.d[0]]
    factors = []
    for i in range(iteration):
        f = 1 + ep[i] - ledger.f[i]
        factors.append(f)
        if i + 1 < iteration:
            ep.append(1 - (1 - ep[i]) * f + ledger.d[i + 1])
    aet = -ledger.n[iteration]
    for i in range(iteration):
        prod = Fraction(1)
        for m in range(i, iteration):
            prod *= factors[m]
        aet += (q * ledger.d[i] - ledger.n[i]) * prod
    e = ep[iteration - 1]
    return ErrorTerms(
        convergent=-q * e * e,
        last_factor=-q * ledger.f[iteration - 1] * (1 - e),
        accumulated=aet,
        bias=config.bias_at(iteration),
    )


def approximate_aet(ledger: ErrorLedger, iteration: int) -> Fraction:
    """The ledger's AET with every F product replaced by 1."""
    q = ledger.a / ledger.b
    return q * sum(ledger.d[:iteration], Fraction(0)) - sum(ledger.n[: iteration + 1], Fraction(0))


# -- sweeps -----------------------------------------------------------------

def apply_param(config: DividerConfig, param: str, value: int) -> DividerConfig:
    """Return ``config`` with one knob changed.

    ``param`` is one of: ``<list>.<i>`` / ``<list>.*`` for the per-iteration
    width lists, ``uniform_frac_bits`` (all N and D widths and the last F),
    ``bias_ulps``, ``n0_reduced``.
    """
    k = config.iterations
    if param == "uniform_frac_bits":
        v = int(value)
        f = tuple(min(b, v) for b in config.f_frac_bits[:-1]) + (v,)
        return replace(config, n_frac_bits=(v,) * (k + 1), d_frac_bits=(v,) * k, f_frac_bits=f)
    if param == "bias_ulps":
        return replace(config, bias_ulps=int(value))
    if param == "n0_reduced":
        return replace(config, n0_reduced=bool(int(value)))
    name, _, idx = param.partition(".")
    if name not in ("n_frac_bits", "d_frac_bits", "f_frac_bits", "f_omit_bits") or not idx:
        raise ValueError(f"unknown sweep parameter {param!r}")
    vals = list(getattr(config, name))
    if idx == "*":
        vals = [int(value)] * len(vals)
    else:
        vals[int(idx)] = int(value)
    return replace(config, **{name: tuple(vals)})


def sweep(config: DividerConfig, param: str, values: Iterable[int], table=None, **kw):
    """Yield ``(value, BoundReport)`` per readout for each setting of ``param``."""
    if table is None and kw.get("eps0") is None:
        table = config.build_table()
    for v in values:
        cfg = apply_param(config, param, v)
        for r in cfg.readouts:
            yield v, total_bound(cfg, table, r, **kw)
