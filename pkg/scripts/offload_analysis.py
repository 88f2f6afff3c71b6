"""Throughput and energy of every offload configuration across link speeds.

Writes one CSV row per (link, configuration) and prints, for each link, which
configurations reach the frame-rate target.

    python3 scripts/offload_analysis.py --out out/offload
"""

import argparse
import csv
from pathlib import Path

from incam import costmodel as cm
from incam.fixtures import data_path

LINKS = {"1GbE": 1e9, "10GbE": 10e9, "25GbE": 25e9, "100GbE": 100e9, "400GbE": 400e9}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--pipeline", default=str(data_path("vr_pipeline.json")))
    ap.add_argument("--fps", type=float, default=30.0)
    ap.add_argument("--out", default="out/offload")
    args = ap.parse_args()

    g = cm.load_pipeline(args.pipeline)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "offload.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["link", "cut_index", "placements", "throughput_fps", "energy", "feasible"])
        for name, bps in LINKS.items():
            link = cm.LinkSpec(bps, g.link.energy_per_bit)
            evals = cm.enumerate_feasible(g, link, args.fps)
            for e in sorted(evals, key=lambda e: e.config_id):
                place = ";".join(f"{b}={p}" for b, p in sorted(e.config.placement.items()))
                w.writerow([name, e.config.cut_index, place, f"{e.throughput:.3f}", f"{e.energy:.6g}", int(e.feasible)])
            ok = [e for e in evals if e.feasible]
            best = max(evals, key=lambda e: e.throughput)
            print(f"{name:>7}: {len(ok)}/{len(evals)} configs reach {args.fps:g} FPS; "
                  f"fastest is cut {best.config.cut_index} at {best.throughput:.1f} FPS")
    print(f"wrote {out / 'offload.csv'}")


if __name__ == "__main__":
    main()
