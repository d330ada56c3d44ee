"""Bit-exact Goldschmidt iteration with a full truncation-error ledger.

Iteration ``i`` produces ``N_i`` and ``D_i``; ``F_i`` is formed from ``D_i`` by
one's complement (or exact two's complement), optionally truncated, and
multiplies into ``N_{i+1}``/``D_{i+1}``. A divider with ``k`` iterations
computes ``N_0..N_k`` and ``D_0..D_{k-1}``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

from .fixedpoint import (
    FixedPoint,
    FixedPointError,
    SignedDelta,
    mul_exact,
    ones_complement_from_two,
    rectangular_mul,
    requantize,
    twos_complement_from_two,
)
from .recip_table import BipartiteConfig, ReciprocalTable, build, interval_index, lookup


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Readout:
    name: str
    iteration: int
    mantissa_bits: int

    @property
    def margin(self) -> Fraction:
        return Fraction(1, 1 << (self.mantissa_bits + 1))


@dataclass(frozen=True)
class DividerConfig:
    iterations: int
    n_frac_bits: tuple[int, ...]
    d_frac_bits: tuple[int, ...]
    f_frac_bits: tuple[int, ...]
    f_omit_bits: tuple[int, ...]
    table: BipartiteConfig
    readouts: tuple[Readout, ...]
    bias_ulps: int = 0
    n0_reduced: bool = False
    complement: str = "ones"
    divisor_frac_bits: int = 63
    name: str = ""

    def __post_init__(self):
        k = self.iterations
        if k < 1:
            raise ConfigError("need at least one iteration")
        for attr, want in (("n_frac_bits", k + 1), ("d_frac_bits", k), ("f_frac_bits", k),
                           ("f_omit_bits", k)):
            got = getattr(self, attr)
            if len(got) != want:
                raise ConfigError(f"{attr} has {len(got)} entries, expected {want}")
            if any(v < 0 for v in got):
                raise ConfigError(f"{attr} entries must be non-negative")
        for i, (fb, db) in enumerate(zip(self.f_frac_bits, self.d_frac_bits)):
            if fb > db:
                raise ConfigError(f"F_{i} cannot keep {fb} bits: D_{i} only has {db}")
        if self.n0_reduced and self.n_frac_bits[0] == 0:
            raise ConfigError("n0_reduced needs N_0 to have a fractional bit to give up")
        if self.complement not in ("ones", "twos"):
            raise ConfigError(f"complement must be 'ones' or 'twos', not {self.complement!r}")
        names = [r.name for r in self.readouts]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate readout names")
        for r in self.readouts:
            if not 1 <= r.iteration <= k:
                raise ConfigError(f"readout {r.name} at iteration {r.iteration} outside 1..{k}")
        if self.table.in_bits > self.divisor_frac_bits:
            raise ConfigError("table consumes more divisor bits than divisor_frac_bits")

    def n_width(self, i: int) -> int:
        """Fractional width of ``N_i`` after the optional one-bit N_0 reduction."""
        return self.n_frac_bits[i] - (1 if i == 0 and self.n0_reduced else 0)

    def ulp(self, iteration: int | None = None) -> Fraction:
        j = self.iterations if iteration is None else iteration
        return Fraction(1, 1 << self.n_width(j))

    def bias_at(self, iteration: int) -> Fraction:
        if iteration != self.iterations:
            return Fraction(0)
        return self.bias_ulps * self.ulp(iteration)

    def readout(self, name: str) -> Readout:
        for r in self.readouts:
            if r.name == name:
                return r
        raise KeyError(f"no readout named {name!r}; have {[r.name for r in self.readouts]}")

    def replace(self, **changes) -> "DividerConfig":
        return dataclasses.replace(self, **changes)

    def build_table(self) -> ReciprocalTable:
        return build(self.table, self.divisor_frac_bits)


@dataclass
class ErrorLedger:
    a: Fraction
    b: Fraction
    rec: Fraction
    eps0: Fraction
    n: list[Fraction] = field(default_factory=list)
    d: list[Fraction] = field(default_factory=list)
    f: list[Fraction] = field(default_factory=list)
    eps_prime: list[Fraction] = field(default_factory=list)
    numerators: list[Fraction] = field(default_factory=list)
    denominators: list[Fraction] = field(default_factory=list)
    factors: list[Fraction] = field(default_factory=list)
    approx: dict[str, Fraction] = field(default_factory=dict)

    @property
    def quotient(self) -> Fraction:
        return self.a / self.b

    def error(self, name: str) -> Fraction:
        return self.approx[name] - self.quotient

    @property
    def final_approx(self) -> Fraction:
        return self.numerators[-1]


@dataclass
class RunResult:
    readouts: dict[str, FixedPoint]
    ledger: ErrorLedger


def normalize(a_mantissa: FixedPoint, b_mantissa: FixedPoint) -> tuple[FixedPoint, FixedPoint]:
    """Shift the dividend left once when ``a < b`` so that ``a/b`` lands in [1, 2)."""
    for name, m in (("dividend", a_mantissa), ("divisor", b_mantissa)):
        if not 1 <= m.value < 2:
            raise FixedPointError(f"{name} mantissa {m.value} outside [1, 2)")
    a = a_mantissa.widen(int_bits=max(2, a_mantissa.int_bits))
    if a_mantissa.value < b_mantissa.value:
        a = FixedPoint(a.significand << 1, a.int_bits, a.frac_bits)
    return a, b_mantissa


def _complement(config: DividerConfig, d: FixedPoint) -> FixedPoint:
    if config.complement == "ones":
        return ones_complement_from_two(d)
    return twos_complement_from_two(d)


def _times_factor(config: DividerConfig, i: int, x: FixedPoint, f: FixedPoint, out_frac: int):
    e = config.f_omit_bits[i]
    if e:
        try:
            return rectangular_mul(x, SignedDelta.from_factor(f), e, out_frac)
        except FixedPointError as exc:
            raise ConfigError(f"iteration {i + 1}: {exc}") from exc
    return requantize(mul_exact(x, f), out_frac)


def run(
    config: DividerConfig, a: FixedPoint, b: FixedPoint, table: ReciprocalTable | None = None
) -> RunResult:
    """Execute the iteration on normalized mantissas and record every error exactly."""
    if table is None:
        table = config.build_table()
    if not b.value <= a.value < 2 * b.value:
        raise FixedPointError("operands are not normalized: need b <= a < 2b")
    k = config.iterations
    rec = lookup(table, b)
    ledger = ErrorLedger(a=a.value, b=b.value, rec=rec.value, eps0=1 - b.value * rec.value)

    n_cur, err = requantize(mul_exact(a, rec), config.n_width(0))
    n_cur = n_cur.with_int_bits(2)
    ledger.n.append(err)
    d_cur, err = requantize(mul_exact(b, rec), config.d_frac_bits[0])
    d_cur = d_cur.with_int_bits(1)
    ledger.d.append(err)
    ledger.eps_prime.append(1 - d_cur.value)
    numerators = [n_cur]
    ledger.denominators.append(d_cur.value)

    for i in range(k):
        f_full = _complement(config, d_cur)
        f_cur, _ = requantize(f_full, config.f_frac_bits[i])
        ledger.f.append(2 - d_cur.value - f_cur.value)
        ledger.factors.append(f_cur.value)
        n_cur, err = _times_factor(config, i, n_cur, f_cur, config.n_width(i + 1))
        n_cur = n_cur.with_int_bits(2)
        ledger.n.append(err)
        numerators.append(n_cur)
        if i + 1 < k:
            d_cur, err = _times_factor(config, i, d_cur, f_cur, config.d_frac_bits[i + 1])
            d_cur = d_cur.with_int_bits(1)
            ledger.d.append(err)
            ledger.eps_prime.append(1 - d_cur.value)
            ledger.denominators.append(d_cur.value)

    ledger.numerators = [x.value for x in numerators]
    out = {}
    for r in config.readouts:
        nj = numerators[r.iteration]
        bias = config.bias_ulps if r.iteration == k else 0
        qa = FixedPoint(nj.significand + bias, 2, nj.frac_bits)
        out[r.name] = qa
        ledger.approx[r.name] = qa.value
    return RunResult(out, ledger)


def divide(config: DividerConfig, a: FixedPoint, b: FixedPoint, table=None) -> RunResult:
    """``normalize`` then ``run``."""
    a2, b2 = normalize(a, b)
    return run(config, a2, b2, table)


def compile_kernel(
    config: DividerConfig, table: ReciprocalTable
) -> Callable[[int, int, int], tuple[int, ...]]:
    """Integer-only fast path for campaigns.

    The returned function takes normalized significands ``a`` (in [b, 2b)) and
    ``b`` (in [1, 2)) with ``w`` fractional bits and returns one significand per
    readout, in ``config.readouts`` order, each at that iteration's N width.
    It must agree bit for bit with :func:`run`; the test suite checks this.
    """
    k = config.iterations
    nw = [config.n_width(i) for i in range(k + 1)]
    dw = list(config.d_frac_bits)
    fw = list(config.f_frac_bits)
    omit = list(config.f_omit_bits)
    recs = table.rec_significands
    rfb = table.config.rec_frac_bits
    n_in = table.config.in_bits
    ones = config.complement == "ones"
    stages = [(r.iteration, config.bias_ulps if r.iteration == k else 0) for r in config.readouts]

    def q(x: int, src: int, dst: int) -> int:
        return x >> (src - dst) if src >= dst else x << (dst - src)

    def kernel(a: int, b: int, w: int) -> tuple[int, ...]:
        rec = recs[q(b, w, n_in) - (1 << n_in)]
        ns = [q(a * rec, w + rfb, nw[0])]
        d = q(b * rec, w + rfb, dw[0])
        n = ns[0]
        for i in range(k):
            kd = dw[i]
            if ones:
                f = d ^ ((2 << kd) - 1)
            else:
                f = (2 << kd) - d
            f >>= kd - fw[i]
            kf = fw[i]
            e = omit[i]
            if e:
                delta = f - (1 << kf)
                if abs(delta) >> max(kf - e + 1, 0):
                    raise ConfigError(f"iteration {i + 1}: |F-1| violates the {e}-bit pattern")
                n = q((n << kf) + n * delta, nw[i] + kf, nw[i + 1])
                if i + 1 < k:
                    d = q((d << kf) + d * delta, kd + kf, dw[i + 1])
            else:
                n = q(n * f, nw[i] + kf, nw[i + 1])
                if i + 1 < k:
                    d = q(d * f, kd + kf, dw[i + 1])
            ns.append(n)
        return tuple(ns[j] + bias for j, bias in stages)

    if n_in > config.divisor_frac_bits:
        raise ConfigError("table wider than divisor_frac_bits")
    return kernel


__all__ = [
    "ConfigError",
    "DividerConfig",
    "ErrorLedger",
    "Readout",
    "RunResult",
    "compile_kernel",
    "divide",
    "interval_index",
    "normalize",
    "run",
]
