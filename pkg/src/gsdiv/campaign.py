"""Verification campaigns: random, adversarial and exhaustive runs of the fast kernel.

Every vector is checked against the exact quotient with integer arithmetic
only. Reports merge by min/max/count/histogram-sum, so chunks can be run in
any order (or in separate processes) and combined.
"""

from __future__ import annotations

import math
import random
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator

import numpy as np

from .engine import ConfigError, DividerConfig, compile_kernel
from .error_model import BoundReport, bound_reports, d_sup, f_range, n_sup
from .recip_table import ReciprocalTable, find_worst_divisors

MODES = ("random", "adversarial", "exhaustive-toy")
EXHAUSTIVE_CAP = 12  # fraction bits per operand; 2**24 pairs at the cap
DEFAULT_CHUNK = 1 << 15


@dataclass(frozen=True)
class CampaignSpec:
    config: DividerConfig
    vectors: int = 10_000
    seed: int = 0
    mode: str = "random"
    stages: tuple[str, ...] | None = None  # None: every readout
    bin_width: Fraction = Fraction(1, 4)  # ulps of the histogram stage
    hist_stage: str | None = None  # None: the widest final-iteration readout
    input_frac_bits: int | None = None  # None: config.divisor_frac_bits
    worst_intervals: int = 64
    stop_on_misround: bool = False
    max_witnesses: int = 8
    chunk: int = DEFAULT_CHUNK
    workers: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, not {self.mode!r}")
        if self.vectors < 0:
            raise ConfigError("vector count must be non-negative")
        if self.bin_width <= 0:
            raise ConfigError("bin width must be positive")
        w = self.width
        if w < self.config.table.in_bits:
            raise ConfigError(f"inputs with {w} fraction bits cannot index a {self.config.table.in_bits}-bit table")
        if self.mode == "exhaustive-toy" and w > EXHAUSTIVE_CAP:
            raise ConfigError(f"exhaustive mode is capped at {EXHAUSTIVE_CAP} fraction bits per operand, got {w}")
        names = {r.name for r in self.config.readouts}
        for s in self.stage_names:
            if s not in names:
                raise ConfigError(f"unknown stage {s!r}; have {sorted(names)}")
        if self.histogram_stage not in names:
            raise ConfigError(f"unknown histogram stage {self.histogram_stage!r}")

    @property
    def width(self) -> int:
        return self.config.divisor_frac_bits if self.input_frac_bits is None else self.input_frac_bits

    @property
    def stage_names(self) -> tuple[str, ...]:
        if self.stages is None:
            return tuple(r.name for r in self.config.readouts)
        return tuple(self.stages)

    @property
    def histogram_stage(self) -> str:
        if self.hist_stage is not None:
            return self.hist_stage
        k = self.config.iterations
        final = [r for r in self.config.readouts if r.iteration == k] or list(self.config.readouts)
        return max(final, key=lambda r: r.mantissa_bits).name

    @property
    def total_vectors(self) -> int:
        if self.mode == "exhaustive-toy":
            return 1 << (2 * self.width)
        return self.vectors


@dataclass
class StageStats:
    name: str
    iteration: int
    mantissa_bits: int
    n_frac_bits: int
    count: int = 0
    misroundings: int = 0
    witnesses: list[tuple[int, int]] = field(default_factory=list)
    # Extremes as (numerator, divisor significand): error = num / b in ulps.
    min_raw: tuple[int, int] | None = None
    max_raw: tuple[int, int] | None = None
    min_input: tuple[int, int] | None = None
    max_input: tuple[int, int] | None = None

    @property
    def min_error(self) -> Fraction | None:
        return None if self.min_raw is None else Fraction(*self.min_raw)

    @property
    def max_error(self) -> Fraction | None:
        return None if self.max_raw is None else Fraction(*self.max_raw)

    def merge(self, other: "StageStats", max_witnesses: int) -> None:
        self.count += other.count
        self.misroundings += other.misroundings
        self.witnesses = sorted(set(self.witnesses) | set(other.witnesses))[:max_witnesses]
        if other.min_raw is not None and (
            self.min_raw is None or _key(other.min_raw, other.min_input) < _key(self.min_raw, self.min_input)
        ):
            self.min_raw, self.min_input = other.min_raw, other.min_input
        if other.max_raw is not None and (
            self.max_raw is None or _key(other.max_raw, other.max_input, -1) < _key(self.max_raw, self.max_input, -1)
        ):
            self.max_raw, self.max_input = other.max_raw, other.max_input


def _key(raw, inp, sign=1):
    # Exact ordering, ties broken by input so merges are order-independent.
    return (sign * Fraction(*raw), inp)


@dataclass
class CampaignReport:
    mode: str
    seed: int
    input_frac_bits: int
    vectors: int
    stages: dict[str, StageStats]
    hist_stage: str
    bin_width: Fraction
    histogram: Counter = field(default_factory=Counter)  # bin index -> count

    @property
    def misroundings(self) -> int:
        return sum(s.misroundings for s in self.stages.values())

    def merge(self, other: "CampaignReport", max_witnesses: int = 8) -> "CampaignReport":
        if (other.hist_stage, other.bin_width, other.input_frac_bits) != (
            self.hist_stage, self.bin_width, self.input_frac_bits
        ):
            raise ValueError("cannot merge reports with different layouts")
        self.vectors += other.vectors
        for name, st in other.stages.items():
            self.stages[name].merge(st, max_witnesses)
        self.histogram.update(other.histogram)
        return self

    def bin_center(self, index: int) -> Fraction:
        return (index + Fraction(1, 2)) * self.bin_width

    def histogram_rows(self) -> list[tuple[Fraction, int]]:
        return [(self.bin_center(i), self.histogram[i]) for i in sorted(self.histogram)]


def _empty_report(spec: CampaignSpec) -> CampaignReport:
    cfg = spec.config
    stages = {}
    for name in spec.stage_names:
        r = cfg.readout(name)
        stages[name] = StageStats(name, r.iteration, r.mantissa_bits, cfg.n_width(r.iteration))
    return CampaignReport(
        mode=spec.mode,
        seed=spec.seed,
        input_frac_bits=spec.width,
        vectors=0,
        stages=stages,
        hist_stage=spec.histogram_stage,
        bin_width=spec.bin_width,
    )


# -- input generators ------------------------------------------------------

def _chunk_rng(seed: int, chunk: int) -> random.Random:
    # String seeds go through SHA-512, so this is stable across processes and runs.
    return random.Random(f"gsdiv/{seed}/{chunk}")


def _normalize(a: int, b: int) -> int:
    return a << 1 if a < b else a


def random_pairs(w: int, rng: random.Random, count: int) -> Iterator[tuple[int, int]]:
    """Uniform mantissas in [1, 2); yields normalized ``(a, b)`` significands."""
    one = 1 << w
    bits = rng.getrandbits
    for _ in range(count):
        a = one | bits(w)
        b = one | bits(w)
        yield (a << 1 if a < b else a), b


def _steer_f0(b: int, rec: int, window: int, lo: int, hi: int) -> int:
    """Nudge ``b`` so that ``b*rec mod 2**window < rec``.

    With the low ``window`` product bits near zero, the bits that the first
    factor's truncation drops are all ones after complementing, so ``f_0``
    sits at its maximum. The nudge moves ``b`` by fewer than
    ``2**window / rec`` units, far too little to change the table error.
    """
    mod = 1 << window
    x = (b * rec) % mod
    down = b - x // rec
    up = b + (mod - x + rec - 1) // rec
    for cand in (down, up):
        if lo <= cand <= hi:
            return cand
    return b


def adversarial_pairs(
    w: int, rng: random.Random, count: int, intervals, config: DividerConfig | None = None,
    table: ReciprocalTable | None = None,
) -> Iterator[tuple[int, int]]:
    """Divisors from the worst table intervals, dividends pushing the quotient up.

    The divisor sits at or near the interval endpoint with the larger table
    error, and (given ``config`` and ``table``) is nudged so the first
    factor's truncation error is maximal. Most dividends are ``b`` minus a
    short random amount, putting Q just below 2 where every Q-scaled term
    peaks; the rest fill the low dividend bits with ones, which maximizes
    the truncation losses n_i.
    """
    one = 1 << w
    ends = []
    for iv in intervals:
        lo, hi = iv.lo.significand, iv.hi.significand
        shift = w - iv.lo.frac_bits
        if shift >= 0:
            lo, hi = lo << shift, (hi << shift) | ((1 << shift) - 1)
        else:
            lo, hi = lo >> -shift, hi >> -shift
        rec = None
        if table is not None:
            rec = table.rec_significands[iv.index]
        # Endpoint with the larger |b*rec - 1|; error is linear in b.
        worst = hi if rec is not None and abs(rec * hi - (one << table.config.rec_frac_bits)) > abs(
            rec * lo - (one << table.config.rec_frac_bits)) else lo
        ends.append((lo, hi, worst, rec))
    window = None
    if config is not None and table is not None:
        dropped = w + table.config.rec_frac_bits - config.d_frac_bits[0]
        f_drop = config.d_frac_bits[0] - config.f_frac_bits[0]
        if f_drop > 0 and dropped >= 0:
            window = dropped + f_drop
    span = max(1, w // 2)
    for _ in range(count):
        lo, hi, worst, rec = ends[rng.randrange(len(ends))]
        style = rng.getrandbits(2)
        if style == 0:
            b = rng.randint(lo, hi)
        else:
            wiggle = rng.getrandbits(rng.randrange(1, span + 1))
            b = worst + wiggle if worst == lo else worst - wiggle
            b = min(max(b, lo), hi)
            if window is not None and rec:
                b = _steer_f0(b, rec, window, lo, hi)
        if rng.random() < 0.75:
            delta = rng.getrandbits(rng.randrange(1, span + 1)) + 1
            a = b - delta
            if a < one:
                a = b
        else:
            ones = rng.randrange(1, w + 1)
            a = one | (rng.getrandbits(w) | ((1 << ones) - 1)) & (one - 1)
        yield _normalize(a, b), b


def exhaustive_pairs(w: int, start: int, stop: int) -> Iterator[tuple[int, int]]:
    one = 1 << w
    for idx in range(start, stop):
        a = one | (idx >> w)
        b = one | (idx & (one - 1))
        yield _normalize(a, b), b


# -- execution -------------------------------------------------------------

def _run_chunk(spec: CampaignSpec, table: ReciprocalTable, chunk: int, start: int, stop: int,
               worst=None) -> CampaignReport:
    cfg = spec.config
    w = spec.width
    kernel = compile_kernel(cfg, table)
    report = _empty_report(spec)
    n = stop - start
    if spec.mode == "random":
        pairs = random_pairs(w, _chunk_rng(spec.seed, chunk), n)
    elif spec.mode == "adversarial":
        if worst is None:
            worst = find_worst_divisors(table, spec.worst_intervals)
        pairs = adversarial_pairs(w, _chunk_rng(spec.seed, chunk), n, worst, cfg, table)
    else:
        pairs = exhaustive_pairs(w, start, stop)

    positions = {r.name: i for i, r in enumerate(cfg.readouts)}
    checks = []
    for name in spec.stage_names:
        st = report.stages[name]
        checks.append((positions[name], st.n_frac_bits, st.mantissa_bits + 1, st))
    hist_pos = positions[spec.histogram_stage]
    hist_nf = cfg.n_width(cfg.readout(spec.histogram_stage).iteration)
    bw_num, bw_den = spec.bin_width.numerator, spec.bin_width.denominator
    hist = report.histogram
    maxw = spec.max_witnesses
    # Float shadows of the running extremes; exact comparison only on float ties.
    fmin = {name: math.inf for name in report.stages}
    fmax = {name: -math.inf for name in report.stages}

    done = 0
    for a, b in pairs:
        outs = kernel(a, b, w)
        done += 1
        for pos, nf, shift, st in checks:
            num = outs[pos] * b - (a << nf)
            # |N - a/b| < 2^-(m+1), scaled by b * 2^nf on both sides.
            if (abs(num) << shift) >= (b << nf):
                st.misroundings += 1
                if len(st.witnesses) < maxw:
                    st.witnesses.append((a, b))
            ef = num / b
            name = st.name
            if ef <= fmin[name]:
                if ef < fmin[name] or _key((num, b), (a, b)) < _key(st.min_raw, st.min_input):
                    fmin[name] = ef
                    st.min_raw, st.min_input = (num, b), (a, b)
            if ef >= fmax[name]:
                if ef > fmax[name] or _key((num, b), (a, b), -1) < _key(st.max_raw, st.max_input, -1):
                    fmax[name] = ef
                    st.max_raw, st.max_input = (num, b), (a, b)
        num = outs[hist_pos] * b - (a << hist_nf)
        hist[(num * bw_den) // (b * bw_num)] += 1
        if spec.stop_on_misround and any(st.misroundings for *_, st in checks):
            break
    report.vectors = done
    for st in report.stages.values():
        st.count = done
    return report


_WORKER: dict = {}


def _worker_init(spec: CampaignSpec):
    _WORKER["spec"] = spec
    _WORKER["table"] = spec.config.build_table()


def _worker_chunk(args):
    chunk, start, stop = args
    return _run_chunk(_WORKER["spec"], _WORKER["table"], chunk, start, stop)


def _chunks(spec: CampaignSpec):
    total = spec.total_vectors
    step = spec.chunk
    return [(i, s, min(s + step, total)) for i, s in enumerate(range(0, total, step))]


def run_campaign(spec: CampaignSpec, table: ReciprocalTable | None = None, progress=None) -> CampaignReport:
    """Run every chunk and merge. Results depend only on the spec, not on ``workers``."""
    if table is None:
        table = spec.config.build_table()
    report = _empty_report(spec)
    chunks = _chunks(spec)
    if spec.workers <= 1 or len(chunks) <= 1:
        worst = find_worst_divisors(table, spec.worst_intervals) if spec.mode == "adversarial" else None
        for c in chunks:
            part = _run_chunk(spec, table, *c, worst=worst)
            report.merge(part, spec.max_witnesses)
            if progress:
                progress(report)
            if spec.stop_on_misround and part.misroundings:
                break
    else:
        with ProcessPoolExecutor(spec.workers, initializer=_worker_init, initargs=(spec,)) as ex:
            for part in ex.map(_worker_chunk, chunks):
                report.merge(part, spec.max_witnesses)
                if progress:
                    progress(report)
                if spec.stop_on_misround and part.misroundings:
                    break
    return report


def check_against_bounds(report: CampaignReport, bounds: dict[str, BoundReport]) -> list[str]:
    """Observed extremes outside a rigorous interval; each entry names the stage."""
    problems = []
    for name, st in report.stages.items():
        if st.min_raw is None:
            continue
        b = bounds[name]
        lo, hi = b.rigorous_ulps
        if st.min_error < lo:
            problems.append(f"{name}: observed {float(st.min_error):.6f} ulp below bound {float(lo):.6f}")
        if st.max_error > hi:
            problems.append(f"{name}: observed {float(st.max_error):.6f} ulp above bound {float(hi):.6f}")
    return problems


# -- histogram output ------------------------------------------------------

def dyadic_decimal(q: Fraction) -> str:
    """Exact decimal text for a rational whose denominator is a power of two."""
    q = Fraction(q)
    den = q.denominator
    if den & (den - 1):
        return f"{q.numerator}/{den}"
    places = den.bit_length() - 1
    scaled = abs(q.numerator) * 5 ** places
    digits = str(scaled).rjust(places + 1, "0")
    sign = "-" if q < 0 else ""
    if places == 0:
        return sign + digits
    return f"{sign}{digits[:-places]}.{digits[-places:]}"


def q_density(q):
    """Density of the normalized quotient of two uniform mantissas on [1, 2)."""
    q = np.asarray(q, dtype=float)
    return 1.0 / (q * q) + 0.5


def aaet_density(
    config: DividerConfig,
    stage: int,
    centers,
    q_points: int = 64,
    q_values=None,
    grid_step: float = 1 / 256,
    include_bias: bool = True,
):
    """Theoretical error density (per ulp) from the AAET model.

    Each d_i contributes Q*U(0, d_max), each n_i contributes -U(0, n_max) and
    the last factor error contributes -Q*U(f_min, f_max); the terms are taken
    as independent and the result is mixed over the quotient density. Pass
    ``q_values`` as ``[(q, weight), ...]`` to fix the mixture instead.
    """
    ulp = config.ulp(stage)
    centers = np.asarray(centers, dtype=float)
    if q_values is None:
        # Gauss-Legendre on [1, 2] against the quotient density.
        x, wts = np.polynomial.legendre.leggauss(q_points)
        qs = 1.5 + 0.5 * x
        ws = 0.5 * wts * q_density(qs)
        q_values = list(zip(qs, ws))
    d_w = [float(d_sup(config, i) / ulp) for i in range(stage)]
    n_w = [float(n_sup(config, i) / ulp) for i in range(stage + 1)]
    fr = f_range(config, stage - 1)
    f_lo, f_hi = float(fr.lower / ulp), float(fr.upper / ulp)
    bias = float(config.bias_at(stage) / ulp) if include_bias else 0.0

    out = np.zeros_like(centers)
    for q, wq in q_values:
        # (offset, width) of each uniform term in ulps.
        terms = [(0.0, q * dw) for dw in d_w] + [(-nw, nw) for nw in n_w]
        terms.append((-q * f_hi, q * (f_hi - f_lo)))
        offset = bias + sum(t[0] for t in terms)
        widths = [t[1] for t in terms if t[1] > 0]
        density = np.array([1.0 / grid_step])  # point mass on the grid
        for wd in widths:
            m = max(1, int(round(wd / grid_step)))
            density = np.convolve(density, np.full(m, 1.0 / m))
        # Each box puts its cells at (j + 1/2) * step, so r boxes shift by r/2 cells.
        xs = offset + grid_step * (np.arange(len(density)) + 0.5 * len(widths))
        out += wq * np.interp(centers, xs, density, left=0.0, right=0.0)
    return out


def write_histogram(report: CampaignReport, path, config: DividerConfig | None = None) -> None:
    """Two-column CSV ``bin_center,count`` in ulps; optional theory overlay beside it."""
    rows = report.histogram_rows()
    with open(path, "w", newline="") as fh:
        fh.write("bin_center,count\n")
        for c, n in rows:
            fh.write(f"{dyadic_decimal(c)},{n}\n")
    if config is None or not rows:
        return
    lo = min(report.histogram) - 4
    hi = max(report.histogram) + 4
    centers = [report.bin_center(i) for i in range(lo, hi + 1)]
    stage = config.readout(report.hist_stage).iteration
    dens = aaet_density(config, stage, [float(c) for c in centers])
    bw = float(report.bin_width)
    with open(f"{path}.theory.csv", "w", newline="") as fh:
        fh.write("bin_center,density,expected_count\n")
        for c, d in zip(centers, dens):
            fh.write(f"{dyadic_decimal(c)},{float(d)!r},{float(d) * bw * report.vectors!r}\n")
