"""Precision lost to truncating F to 2e + x bits: log2(1 + (1 + 2^-e)*2^-x) against x.

Writes a CSV and, when matplotlib is available, a PNG next to it.
"""

import argparse
import csv
from pathlib import Path

import numpy as np

from gsdiv.error_model import precision_loss_curve


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--e", type=float, nargs="+", default=[6.0, 13.662378, 16.576687],
                    help="error exponents, eps = 2^-e")
    ap.add_argument("--max-bits", type=float, default=8.0)
    ap.add_argument("--out", type=Path, default=Path("precision_loss.csv"))
    args = ap.parse_args()

    xs = np.linspace(0, args.max_bits, 161)
    curves = {e: precision_loss_curve(e, xs) for e in args.e}
    with args.out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["extra_bits"] + [f"loss_e_{e:g}" for e in args.e])
        for row in zip(xs, *(curves[e] for e in args.e)):
            w.writerow([f"{row[0]:.4f}"] + [f"{y:.8f}" for _, y in row[1:]])
    print(f"wrote {args.out}")
    for x in (1, 2, 3, 4):
        print(f"  x={x}: loss {precision_loss_curve(13.662378, [x])[0][1]:.4f} bits")
    try:
        import matplotlib.pyplot as plt
    except ImportError:
        return
    for e, pts in curves.items():
        plt.plot([p[0] for p in pts], [p[1] for p in pts], label=f"eps=2^-{e:g}")
    plt.xlabel("extra bits kept in F")
    plt.ylabel("precision loss (bits)")
    plt.legend()
    plt.savefig(args.out.with_suffix(".png"), dpi=120)
    print(f"wrote {args.out.with_suffix('.png')}")


if __name__ == "__main__":
    main()
