"""Run the verification campaigns and write error histograms.

Random campaigns on every preset, plus the adversarial search on the
two-stage design with F0 one bit short. Histograms (observed and predicted
AAET density) land in ``--out``.
"""

import argparse
import time
from pathlib import Path

from gsdiv import configfile
from gsdiv.campaign import CampaignSpec, check_against_bounds, run_campaign, write_histogram
from gsdiv.error_model import total_bound


def one(label, cfg, spec, out: Path | None, hist_stage=None):
    t0 = time.perf_counter()
    table = cfg.build_table()
    bounds = {r.name: total_bound(cfg, table, r) for r in cfg.readouts}
    rep = run_campaign(spec, table)
    dt = time.perf_counter() - t0
    print(f"{label}: {rep.vectors} vectors in {dt:.1f} s, {rep.misroundings} misroundings")
    for name, st in rep.stages.items():
        lo, hi = bounds[name].rigorous_ulps
        print(f"  {name}: observed [{float(st.min_error):.4f}, {float(st.max_error):.4f}] "
              f"bound [{float(lo):.4f}, {float(hi):.4f}] {bounds[name].verdict}")
    for problem in check_against_bounds(rep, bounds):
        print(f"  !! {problem}")
    if out is not None and hist_stage:
        path = out / f"{label}_{hist_stage}.csv"
        write_histogram(rep, path, cfg)
        print(f"  histogram -> {path}")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--vectors", type=int, default=1_000_000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("campaign_out"))
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    toy = configfile.preset("toy")
    one("toy", toy, CampaignSpec(toy, mode="exhaustive-toy", hist_stage="full"), args.out, "full")
    for name in ("threestage", "twostage"):
        cfg = configfile.preset(name)
        spec = CampaignSpec(cfg, vectors=args.vectors, seed=args.seed, hist_stage="ep", workers=args.workers)
        one(name, cfg, spec, args.out, "ep")
    neg = configfile.preset("twostage").replace(f_frac_bits=(34, 67))
    spec = CampaignSpec(neg, vectors=args.vectors, seed=args.seed, mode="adversarial", stages=("ep",),
                        hist_stage="ep", workers=args.workers)
    one("twostage_f0_34_adversarial", neg, spec, args.out, "ep")


if __name__ == "__main__":
    main()
