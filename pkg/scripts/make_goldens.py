#!/usr/bin/env python3
"""Regenerate frozen golden files (render bytes, prompt text).

Run from the repository root; goldens land in tests/data/. Only rerun this
when the rendering or prompt format intentionally changes, and re-review the
outputs before committing.
"""

from pathlib import Path

import numpy as np

from vitsp.core import Instance, Tour
from vitsp.render import render
from vitsp.selector import SelectionContext, TrajectoryEntry, build_prompt
from vitsp.subproblem import BoxRegion

DATA = Path(__file__).resolve().parent.parent / "tests" / "data"


def square_png() -> bytes:
    inst = Instance("sq", np.array([(0.0, 0.0), (100.0, 0.0), (100.0, 100.0), (0.0, 100.0)]))
    return render(inst, Tour([0, 1, 2, 3]))


def golden_prompt() -> str:
    ctx = SelectionContext(
        image=b"\x89PNGfake",
        bounds=(-100.0, 1100.0, -50.0, 1050.0),
        trajectory=(
            TrajectoryEntry(BoxRegion(100.0, 250.0, 300.0, 450.0), 57, 128, 9.5),
            TrajectoryEntry(BoxRegion(0.0, 80.0, 0.0, 60.0), 12, 0, 10.0),
        ),
        pending=(BoxRegion(500.0, 700.0, 500.0, 640.0),),
        boxes_per_prompt=2,
        node_cap=1000,
    )
    text, _ = build_prompt(ctx)
    return text


def main() -> None:
    DATA.mkdir(parents=True, exist_ok=True)
    (DATA / "square_tour.png").write_bytes(square_png())
    (DATA / "prompt_golden.txt").write_text(golden_prompt(), encoding="utf-8")
    print(f"wrote {DATA / 'square_tour.png'} ({len(square_png())} bytes)")
    print(f"wrote {DATA / 'prompt_golden.txt'}")


if __name__ == "__main__":
    main()
