#!/usr/bin/env python3
"""Desk-scale selection-policy ablation on seeded uniform instances.

Generates instances, runs the CLI ablation per instance, and leaves one
directory of gap curves + an overlaid SVG per instance. Example:

    python scripts/run_ablation.py --sizes 500 1000 --budget-s 60 --out runs/
"""

import argparse
from pathlib import Path

from vitsp.cli import main as vitsp_main
from vitsp.core import uniform_instance
from vitsp.tsplib import serialize_instance


def run(size: int, seed: int, budget_s: float, out_root: Path) -> None:
    name = f"uniform{size}-s{seed}"
    out = out_root / name
    out.mkdir(parents=True, exist_ok=True)
    tsp = out / f"{name}.tsp"
    tsp.write_text(serialize_instance(uniform_instance(size, seed, 10000.0, name=name)),
                   encoding="utf-8")
    rc = vitsp_main([
        "ablate", "--instance", str(tsp), "--seed", str(seed),
        "--budget-s", str(budget_s), "--init-s", "2", "--tmax-s", "3",
        "--length", str(max(50, size // 2)), "--out-dir", str(out),
        "--policies", "random-box,random-sequence",
    ])
    if rc != 0:
        raise SystemExit(rc)
    logs = sorted(str(p) for p in out.glob("*.gap.csv"))
    vitsp_main(["eval", "--gap-log", *logs, "--plot-svg", str(out / "curves.svg")])


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=[500, 1000])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--budget-s", type=float, default=60.0)
    ap.add_argument("--out", default="runs")
    args = ap.parse_args()
    for size in args.sizes:
        run(size, args.seed, args.budget_s, Path(args.out))


if __name__ == "__main__":
    main()
