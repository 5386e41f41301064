#!/usr/bin/env python3
"""Record the end-to-end replay fixture: a seeded 200-node run driven by a
deterministic scripted responder, captured as (prompt digest, response)
pairs plus the frozen final length.

Regenerating is only needed when prompts, rendering, or run mechanics
intentionally change; the acceptance suite replays this exact script through
the CLI and must land on the recorded length.
"""

import json
from pathlib import Path

import numpy as np

from vitsp.construct import farthest_insertion, polish
from vitsp.core import uniform_instance
from vitsp.orchestrator import OrchestratorConfig, run
from vitsp.render import padded_bounds
from vitsp.selector import VlmSelector
from vitsp.subsolver import SubsolverConfig
from vitsp.tsplib import serialize_instance
from vitsp.vlmclient import RecordingClient

DATA = Path(__file__).resolve().parent.parent / "tests" / "data"

SEED = 2024
N = 200
INIT_PASSES = 3
TMAX_S = 2.0       # mapped to a deterministic step budget by the runner
STALL_LIMIT = 5
BUDGET_S = 240.0   # generous; the stall rule terminates long before


class ScriptedResponder:
    """Stands in for a live model: emits two seeded random boxes per prompt."""

    def __init__(self, seed: int, bounds):
        self.rng = np.random.default_rng(seed)
        self.bounds = bounds

    def complete(self, text: str, image: bytes = b"") -> str:
        x_lo, x_hi, y_lo, y_hi = self.bounds
        parts = []
        for _ in range(2):
            xs = np.sort(self.rng.uniform(x_lo, x_hi, size=2))
            ys = np.sort(self.rng.uniform(y_lo, y_hi, size=2))
            parts.append(f"<coordinates> x_min={xs[0]:.1f} , x_max={xs[1]:.1f} , "
                         f"y_min={ys[0]:.1f} , y_max={ys[1]:.1f} </coordinates>")
        return "\n".join(parts)


def main() -> None:
    DATA.mkdir(parents=True, exist_ok=True)
    inst = uniform_instance(N, SEED, 10000.0, name=f"replay{N}")
    (DATA / f"replay{N}.tsp").write_text(serialize_instance(inst), encoding="utf-8")

    initial = polish(inst, farthest_insertion(inst, SEED), time_budget_s=None,
                     max_passes=INIT_PASSES, seed=SEED)
    recorder = RecordingClient(ScriptedResponder(SEED, padded_bounds(*inst.bounds())))
    cfg = OrchestratorConfig(solver_time_s=TMAX_S, stall_limit=STALL_LIMIT,
                             budget_s=BUDGET_S, seed=SEED,
                             scheduler="stepped", deterministic=True)
    selector = VlmSelector(recorder, boxes_per_prompt=cfg.boxes_per_prompt, node_cap=1000)
    result = run(inst, initial, cfg, selector,
                 SubsolverConfig(mode="auto", time_limit_s=cfg.solver_time_s, seed=SEED))

    recorder.dump(DATA / "replay_fixture.json")
    golden = {
        "instance": inst.name,
        "seed": SEED,
        "init_passes": INIT_PASSES,
        "tmax_s": TMAX_S,
        "stall_limit": STALL_LIMIT,
        "final_length": result.length,
        "prompts": len(recorder.recorded),
    }
    (DATA / "replay_golden.json").write_text(json.dumps(golden, indent=1), encoding="utf-8")
    print(f"recorded {len(recorder.recorded)} prompts; final length {result.length}")


if __name__ == "__main__":
    main()
