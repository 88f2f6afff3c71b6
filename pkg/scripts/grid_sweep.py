"""Depth quality and refinement time versus bilateral grid size.

Runs the sweep on the shipped stereo scene (or any left/right pair) and
prints MS-SSIM against the finest grid, vertex count and refinement time.

    python3 scripts/grid_sweep.py --sizes 4,8,16,32,64
"""

import argparse

from incam.bssa import grid_quality_sweep
from incam.fixtures import STEREO_PARAMS, data_path
from incam.imgio import load_pgm


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--left", default=str(data_path("stereo", "left.pgm")))
    ap.add_argument("--right", default=str(data_path("stereo", "right.pgm")))
    ap.add_argument("--sizes", default="4,8,16,32,64")
    ap.add_argument("--repeats", type=int, default=3, help="timing repeats; the fastest is kept")
    args = ap.parse_args()

    left, right = load_pgm(args.left), load_pgm(args.right)
    sizes = [int(s) for s in args.sizes.split(",")]
    best = None
    for _ in range(args.repeats):
        rows = grid_quality_sweep(left, right, sizes, max_disp=STEREO_PARAMS["max_disp"], block=STEREO_PARAMS["block"])
        if best is None:
            best = rows
        else:
            best = [r._replace(refine_time=min(r.refine_time, b.refine_time)) for r, b in zip(rows, best)]
    print(f"{'size':>5} {'vertices':>9} {'ms_ssim':>8} {'refine_ms':>10}")
    for r in best:
        print(f"{r.size:>5g} {r.vertex_count:>9} {r.ms_ssim:>8.4f} {1000 * r.refine_time:>10.1f}")


if __name__ == "__main__":
    main()
