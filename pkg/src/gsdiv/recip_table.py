"""Bipartite reciprocal tables with exhaustively measured relative error.

The divisor mantissa ``1.x`` contributes ``n = n1 + n2 + n3`` leading fraction
bits split as ``x1 | x2 | x3``. A large table indexed by ``x1x2`` holds the
reciprocal at the midpoint of its interval, a small table indexed by ``x1x3``
holds a signed first-order correction, and the delivered reciprocal is

    rec = 1/2 + (large << (sub_bits - large_out_bits) - small) * 2**-(sub_bits + 1)

Since ``rec`` is constant on each of the ``2**n`` input intervals, the relative
error ``rec*b - 1`` is linear in ``b`` there and its extremes sit at the two
representable endpoints. Scanning those endpoints is exhaustive.
"""

from __future__ import annotations

import dataclasses
import functools
import logging
import struct
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .fixedpoint import FixedPoint, FixedPointError

log = logging.getLogger(__name__)

METHODS = ("midpoint", "minimax")


@dataclass(frozen=True)
class BipartiteConfig:
    n1: int
    n2: int
    n3: int
    large_out_bits: int
    small_out_bits: int
    sub_bits: int
    out_frac_bits: int | None = None
    method: str = "midpoint"

    def __post_init__(self):
        if min(self.n1, self.n2, self.n3) < 0:
            raise ValueError("slice widths must be non-negative")
        if self.n1 + self.n2 == 0:
            raise ValueError("degenerate geometry: the large table needs at least one index bit")
        if self.sub_bits < self.large_out_bits:
            raise ValueError("sub_bits must be >= large_out_bits")
        if self.small_out_bits < 1:
            raise ValueError("small_out_bits must be >= 1")
        if self.out_frac_bits is not None and self.out_frac_bits < self.sub_bits + 1:
            raise ValueError("out_frac_bits must be >= sub_bits + 1")
        if self.method not in METHODS:
            raise ValueError(f"unknown table method {self.method!r}")

    @property
    def in_bits(self) -> int:
        return self.n1 + self.n2 + self.n3

    @property
    def rec_frac_bits(self) -> int:
        return self.sub_bits + 1 if self.out_frac_bits is None else self.out_frac_bits

    @property
    def large_size(self) -> int:
        return 1 << (self.n1 + self.n2)

    @property
    def small_size(self) -> int:
        return 1 << (self.n1 + self.n3)

    def describe(self) -> str:
        return (
            f"2^{self.n1 + self.n2} x {self.large_out_bits} large, "
            f"2^{self.n1 + self.n3} x {self.small_out_bits} small, "
            f"{self.sub_bits}-bit subtractor (n1={self.n1}, n2={self.n2}, n3={self.n3}, {self.method})"
        )


@dataclass(frozen=True)
class DivisorRange:
    index: int
    lo: FixedPoint
    hi: FixedPoint
    local_error: Fraction


@dataclass(frozen=True, eq=False)
class ReciprocalTable:
    config: BipartiteConfig
    divisor_frac_bits: int
    large_entries: tuple[int, ...]
    small_entries: tuple[int, ...]
    rec_significands: tuple[int, ...] = field(repr=False)
    # Per-interval signed relative error of the worse endpoint, scaled by 2**error_shift.
    local_error_nums: tuple[int, ...] = field(repr=False)
    error_shift: int
    max_rel_error: Fraction
    max_pos_error: Fraction
    max_neg_error: Fraction
    achieving_input: FixedPoint

    @property
    def max_abs_rel_error(self) -> Fraction:
        return abs(self.max_rel_error)

    def local_error(self, index: int) -> Fraction:
        return Fraction(self.local_error_nums[index], 1 << self.error_shift)

    def interval(self, index: int) -> tuple[FixedPoint, FixedPoint]:
        """Smallest and largest representable divisor mantissas in interval ``index``."""
        w = self.divisor_frac_bits
        n = self.config.in_bits
        base = (1 << w) + (index << (w - n))
        return FixedPoint(base, 1, w), FixedPoint(base + (1 << (w - n)) - 1, 1, w)


def _round_half_up(q: Fraction) -> int:
    return (q + Fraction(1, 2)).__floor__()


def _midpoint_entries(cfg: BipartiteConfig) -> tuple[list[int], list[int]]:
    n1, n2, n3 = cfg.n1, cfg.n2, cfg.n3
    n = cfg.in_bits
    lsb_scale = 1 << (cfg.sub_bits + 1)
    large_scale = 1 << (cfg.large_out_bits + 1)
    large = []
    for j in range(cfg.large_size):
        mid = 1 + Fraction(2 * j + 1, 1 << (n1 + n2 + 1))
        large.append(_round_half_up((1 / mid - Fraction(1, 2)) * large_scale))
    small = []
    half_x3_span = Fraction(1, 1 << (n1 + n2 + 1))
    for i in range(1 << n1):
        a = 1 + Fraction(i, 1 << n1)
        b = a + Fraction(1, 1 << n1)
        slope = -1 / (a * b)  # secant of 1/x across the x1 region
        for k in range(1 << n3):
            offset = Fraction(2 * k + 1, 1 << (n + 1)) - half_x3_span
            small.append(_round_half_up(-slope * offset * lsb_scale))
    return large, small


def _output_limits(cfg: BipartiteConfig) -> tuple[int, int]:
    return 0, (1 << cfg.sub_bits) - 1


def _fit_large_to_range(cfg: BipartiteConfig, large: list[int], small: list[int]) -> list[int]:
    """Pull large entries in so ``large - small`` never leaves the subtractor range.

    Only rows at the extreme ends of [1, 2) are affected: rec ~ 1 at b = 1 needs
    one more bit than the subtractor has, so those rows saturate.
    """
    lo, hi = _output_limits(cfg)
    shift = cfg.sub_bits - cfg.large_out_bits
    n2, n3 = cfg.n2, cfg.n3
    lmax = (1 << cfg.large_out_bits) - 1
    out = list(large)
    for j in range(cfg.large_size):
        i = j >> n2
        row = small[i << n3:(i + 1) << n3]
        top = (hi + min(row)) >> shift
        bottom = -((-(lo + max(row))) >> shift)
        out[j] = max(min(out[j], top, lmax), bottom, 0)
    return out


def _check_small_range(cfg: BipartiteConfig, small: list[int]):
    lim = 1 << (cfg.small_out_bits - 1)
    bad = [s for s in small if not -lim <= s < lim]
    if bad:
        raise ValueError(
            f"small table entry {bad[0]} does not fit in {cfg.small_out_bits} signed bits; "
            "increase small_out_bits or n1+n2"
        )


def _minimax_entries(
    cfg: BipartiteConfig, seed_large: list[int], seed_small: list[int], time_limit: float
) -> tuple[list[int], list[int]]:
    """Per-x1-block integer minimax of the relative error (HiGHS MILP).

    Blocks sharing an ``x1`` value share no entries with any other block, so the
    global minimax is the max of independent block problems.
    """
    from scipy.optimize import Bounds, LinearConstraint, milp
    from scipy.sparse import coo_matrix

    n1, n2, n3 = cfg.n1, cfg.n2, cfg.n3
    n = cfg.in_bits
    nl, ns = 1 << n2, 1 << n3
    nv = nl + ns + 1
    shift = 1 << (cfg.sub_bits - cfg.large_out_bits)
    lsb = 2.0 ** -(cfg.sub_bits + 1)
    lo_out, hi_out = _output_limits(cfg)
    slim = 1 << (cfg.small_out_bits - 1)

    jj, kk = np.meshgrid(np.arange(nl), np.arange(ns), indexing="ij")
    jj, kk = jj.ravel(), kk.ravel()
    m = jj.size
    large = list(seed_large)
    small = list(seed_small)
    for i in range(1 << n1):
        x = (i << (n2 + n3)) | (jj << n3) | kk
        rows, cols, vals, ub = [], [], [], []
        r = 0
        for bb in (1 + x * 2.0 ** -n, 1 + (x + 1) * 2.0 ** -n):
            c = lsb * bb
            const = 0.5 * bb - 1
            for sgn in (1.0, -1.0):
                idx = np.arange(r, r + m)
                rows += [idx, idx, idx]
                cols += [jj, nl + kk, np.full(m, nv - 1)]
                vals += [sgn * c * shift, -sgn * c, -np.ones(m)]
                ub.append(-sgn * const)
                r += m
        # Output range of the subtractor.
        idx = np.arange(r, r + m)
        rows += [idx, idx]
        cols += [jj, nl + kk]
        vals += [np.full(m, float(shift)), -np.ones(m)]
        r += m
        A = coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(r, nv)
        ).tocsr()
        lb_rows = np.concatenate([np.full(4 * m, -np.inf), np.full(m, lo_out)])
        ub_rows = np.concatenate([np.concatenate(ub), np.full(m, hi_out)])
        cost = np.zeros(nv)
        cost[-1] = 1.0
        integrality = np.ones(nv)
        integrality[-1] = 0
        bounds = Bounds(
            np.r_[np.zeros(nl), np.full(ns, -slim), 0.0],
            np.r_[np.full(nl, (1 << cfg.large_out_bits) - 1), np.full(ns, slim - 1), 1.0],
        )
        res = milp(
            cost,
            constraints=LinearConstraint(A, lb_rows, ub_rows),
            integrality=integrality,
            bounds=bounds,
            options={"time_limit": time_limit},
        )
        if res.x is None:
            log.warning("minimax block %d found no feasible point; keeping midpoint entries", i)
            continue
        sol = np.rint(res.x[:-1]).astype(int)
        large[i << n2:(i + 1) << n2] = [int(v) for v in sol[:nl]]
        small[i << n3:(i + 1) << n3] = [int(v) for v in sol[nl:]]
    return large, small


def _scan(cfg: BipartiteConfig, large, small, w: int):
    """Exact exhaustive scan over all 2**n intervals at ``w`` divisor fraction bits."""
    n1, n2, n3 = cfg.n1, cfg.n2, cfg.n3
    n = cfg.in_bits
    shift = cfg.sub_bits - cfg.large_out_bits
    rfb = cfg.rec_frac_bits
    rec_pad = rfb - cfg.sub_bits - 1
    half = 1 << cfg.sub_bits
    lo_out, hi_out = _output_limits(cfg)
    one = 1 << (rfb + w)
    step = 1 << (w - n)
    recs = []
    local = []
    best = (-1, 0, 0)  # (|err|, signed err, divisor significand)
    pos = neg = 0
    mask3 = (1 << n3) - 1
    for x in range(1 << n):
        out = (large[x >> n3] << shift) - small[((x >> (n2 + n3)) << n3) | (x & mask3)]
        if not lo_out <= out <= hi_out:
            raise ValueError(f"subtractor overflow at interval {x}: {out}")
        rec = (half + out) << rec_pad
        recs.append(rec)
        b_lo = (1 << w) + x * step
        b_hi = b_lo + step - 1
        e_lo = rec * b_lo - one
        e_hi = rec * b_hi - one
        e, b = (e_lo, b_lo) if abs(e_lo) >= abs(e_hi) else (e_hi, b_hi)
        local.append(e)
        pos = max(pos, e_lo, e_hi)
        neg = min(neg, e_lo, e_hi)
        if abs(e) > best[0]:
            best = (abs(e), e, b)
    return recs, local, best, pos, neg


@functools.lru_cache(maxsize=16)
def build(
    config: BipartiteConfig, divisor_frac_bits: int = 63, time_limit: float = 20.0
) -> ReciprocalTable:
    """Materialize a table and measure its exact worst relative error.

    ``divisor_frac_bits`` is the widest divisor mantissa the table will see;
    the scan at that width bounds every narrower format too, since narrower
    grids are subsets.
    """
    cfg = config
    if cfg.in_bits > divisor_frac_bits:
        raise ValueError(
            f"table consumes {cfg.in_bits} bits but divisors only have {divisor_frac_bits}"
        )
    large, small = _midpoint_entries(cfg)
    _check_small_range(cfg, small)
    large = _fit_large_to_range(cfg, large, small)
    if cfg.method == "minimax":
        large, small = _minimax_entries(cfg, large, small, time_limit)
    recs, local, best, pos, neg = _scan(cfg, large, small, divisor_frac_bits)
    shift = cfg.rec_frac_bits + divisor_frac_bits
    return ReciprocalTable(
        config=cfg,
        divisor_frac_bits=divisor_frac_bits,
        large_entries=tuple(large),
        small_entries=tuple(small),
        rec_significands=tuple(recs),
        local_error_nums=tuple(local),
        error_shift=shift,
        max_rel_error=Fraction(best[1], 1 << shift),
        max_pos_error=Fraction(pos, 1 << shift),
        max_neg_error=Fraction(neg, 1 << shift),
        achieving_input=FixedPoint(best[2], 1, divisor_frac_bits),
    )


def search_partitions(
    config: BipartiteConfig, divisor_frac_bits: int = 63, method: str | None = None
) -> list[tuple[BipartiteConfig, ReciprocalTable | None, str]]:
    """Try every ``(n1, n2, n3)`` split that keeps both table sizes of ``config``.

    Returns ``(config, table, note)`` best first; geometries whose entries do
    not fit the output widths come back with ``table=None`` and the reason.
    """
    large_idx, small_idx = config.n1 + config.n2, config.n1 + config.n3
    results = []
    for n1 in range(min(large_idx, small_idx) + 1):
        try:
            cand = dataclasses.replace(
                config, n1=n1, n2=large_idx - n1, n3=small_idx - n1, method=method or config.method
            )
            results.append((cand, build(cand, divisor_frac_bits), ""))
        except (ValueError, FixedPointError) as exc:
            results.append((cand, None, str(exc)))
    results.sort(key=lambda r: (r[1] is None, r[1].max_abs_rel_error if r[1] else 0))
    return results


def interval_index(table: ReciprocalTable, b_mantissa: FixedPoint) -> int:
    n = table.config.in_bits
    fb = b_mantissa.frac_bits
    sig = b_mantissa.significand
    if not (1 << fb) <= sig < (2 << fb):
        raise FixedPointError(f"divisor mantissa {b_mantissa.value} outside [1, 2)")
    if fb >= n:
        return (sig >> (fb - n)) - (1 << n)
    return (sig << (n - fb)) - (1 << n)


def lookup(table: ReciprocalTable, b_mantissa: FixedPoint) -> FixedPoint:
    return FixedPoint(
        table.rec_significands[interval_index(table, b_mantissa)], 1, table.config.rec_frac_bits
    )


def find_worst_divisors(table: ReciprocalTable, count: int | None = None) -> list[DivisorRange]:
    """Intervals ranked by descending ``|local eps0|``; ``count=None`` returns all."""
    nums = table.local_error_nums
    order = sorted(range(len(nums)), key=lambda j: (-abs(nums[j]), j))
    if count is not None:
        order = order[:count]
    out = []
    for j in order:
        lo, hi = table.interval(j)
        out.append(DivisorRange(j, lo, hi, table.local_error(j)))
    return out


# Binary dump: little-endian header then one fixed-width row per entry.
#   magic  4s  b"BPT1"
#   n1 n2 n3 large_out_bits small_out_bits sub_bits rec_frac_bits  7 x uint16
#   large_count small_count                                        2 x uint32
#   large entries                      large_count x uint32
#   small entries (two's complement)   small_count x int32
DUMP_MAGIC = b"BPT1"
_HEADER = struct.Struct("<4s7H2I")


def dump_entries(table: ReciprocalTable, path) -> None:
    cfg = table.config
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(
                DUMP_MAGIC, cfg.n1, cfg.n2, cfg.n3, cfg.large_out_bits, cfg.small_out_bits,
                cfg.sub_bits, cfg.rec_frac_bits, len(table.large_entries), len(table.small_entries),
            )
        )
        fh.write(struct.pack(f"<{len(table.large_entries)}I", *table.large_entries))
        fh.write(struct.pack(f"<{len(table.small_entries)}i", *table.small_entries))


def load_entries(path) -> tuple[dict, list[int], list[int]]:
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, n1, n2, n3, lob, sob, sub, rfb, nl, ns = _HEADER.unpack_from(raw)
    if magic != DUMP_MAGIC:
        raise ValueError(f"{path}: not a table dump")
    off = _HEADER.size
    large = list(struct.unpack_from(f"<{nl}I", raw, off))
    small = list(struct.unpack_from(f"<{ns}i", raw, off + 4 * nl))
    header = dict(
        n1=n1, n2=n2, n3=n3, large_out_bits=lob, small_out_bits=sob, sub_bits=sub,
        rec_frac_bits=rfb,
    )
    return header, large, small
