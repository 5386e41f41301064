"""Asynchronous coordination of one selection loop, P slave solvers, and one
master solver over a shared tour, trajectory pool, and bounded queues.

Slaves screen queued subproblems against a snapshot and forward only
improving candidates; the single master re-extracts against the live tour,
re-solves, and applies strict hill-climbing acceptance. The run stops after a
configured number of consecutive non-improving master steps or at the
wall-clock cap.

Two schedulers share the step logic: ``threads`` runs the loops concurrently
as designed; ``stepped`` interleaves them round-robin in one thread so that
seeded runs are exactly reproducible.
"""

from __future__ import annotations

import json
import logging
import queue
import threading
import time
from dataclasses import dataclass, fields, replace

import numpy as np

from .core import Instance, Tour, tour_length
from .subproblem import (
    DegenerateSubproblemError,
    RecoveryError,
    Subproblem,
    atsp_to_stsp,
    build_atsp,
    extract_free_set,
    recover,
    splice_if_better,
    warm_encoding,
)
from .selector import Proposal, TrajectoryEntry
from .subsolver import CapacityError, SolveOutcome, SolverError, SubsolverConfig, choose

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OrchestratorConfig:
    boxes_per_prompt: int = 2        # selections requested per prompt
    node_cap: int | None = None      # free-node cap; None = 1000 below 10k nodes, else 2000
    solver_time_s: float = 10.0      # per-subproblem solver limit
    slave_count: int = 8             # parallel screening solvers
    stall_limit: int = 5             # consecutive non-improving master steps
    budget_s: float = 60.0           # wall-clock cap, always finite
    seed: int = 0
    queue_cap: int = 64
    dim_cap: int = 4000              # skip subproblems whose matrix would exceed this
    scheduler: str = "stepped"       # "stepped" (reproducible) or "threads"
    deterministic: bool = True       # replace solver wall limits with step budgets

    def __post_init__(self) -> None:
        if self.slave_count < 1:
            raise ValueError("slave_count must be >= 1")
        if self.stall_limit < 1:
            raise ValueError("stall_limit must be >= 1")
        if not (self.budget_s > 0):
            raise ValueError("budget_s must be positive and finite")
        if self.scheduler not in ("stepped", "threads"):
            raise ValueError(f"unknown scheduler {self.scheduler!r}")
        if not (1 <= self.boxes_per_prompt <= self.queue_cap):
            raise ValueError("boxes_per_prompt must be in 1..queue_cap")

    @classmethod
    def from_mapping(cls, mapping: dict) -> "OrchestratorConfig":
        kwargs = {}
        for f in fields(cls):
            if f.name not in mapping:
                continue
            raw = mapping[f.name]
            if f.name == "scheduler":
                kwargs[f.name] = str(raw)
            elif f.name == "deterministic":
                kwargs[f.name] = str(raw).lower() in ("1", "true", "yes", "on")
            elif f.name in ("solver_time_s", "budget_s"):
                kwargs[f.name] = float(raw)
            elif f.name == "node_cap":
                kwargs[f.name] = None if str(raw).lower() == "auto" else int(raw)
            else:
                kwargs[f.name] = int(raw)
        return cls(**kwargs)


def load_config_text(text: str) -> dict[str, str]:
    """Parse ``key = value`` run-configuration lines ('#' starts a comment)."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def resolve_node_cap(n: int, configured: int | None) -> int:
    if configured is not None:
        return configured
    return 1000 if n < 10000 else 2000


@dataclass(frozen=True)
class RunEvent:
    elapsed_s: float
    kind: str     # init / accept / reject / discard / screen / screen_discard / stop
    length: int
    gain: int = 0
    note: str = ""


@dataclass
class RunResult:
    tour: Tour
    length: int
    events: list[RunEvent]
    trajectory: list[TrajectoryEntry]


@dataclass(frozen=True)
class _Screened:
    proposal: Proposal
    candidate: Tour
    candidate_length: int
    solver_elapsed: float


class SharedState:
    """Single-writer global tour plus append-only trajectory and event logs."""

    def __init__(self, inst: Instance, tour: Tour):
        self._lock = threading.Lock()
        self._inst = inst
        self._tour = tour
        self._length = tour_length(inst, tour)
        self.trajectory: list[TrajectoryEntry] = []
        self.events: list[RunEvent] = []
        self._pending: dict[int, Proposal] = {}
        self.counter = 0
        self.stop = threading.Event()
        self.t0 = time.monotonic()

    def elapsed(self) -> float:
        return time.monotonic() - self.t0

    def snapshot(self) -> tuple[Tour, int]:
        with self._lock:
            return self._tour, self._length

    def selection_view(self) -> tuple[Tour, tuple[TrajectoryEntry, ...], tuple]:
        with self._lock:
            boxes = tuple(p.box for p in self._pending.values())
            return self._tour, tuple(self.trajectory), boxes

    def update_tour(self, tour: Tour, length: int) -> None:
        # master-only; global length must strictly decrease
        with self._lock:
            assert length < self._length, "hill-climbing violated"
            self._tour = tour
            self._length = length

    def log(self, kind: str, length: int, gain: int = 0, note: str = "") -> None:
        with self._lock:
            self.events.append(RunEvent(self.elapsed(), kind, length, gain, note))

    def add_trajectory(self, entry: TrajectoryEntry) -> None:
        with self._lock:
            self.trajectory.append(entry)

    def pending_add(self, proposal: Proposal) -> None:
        with self._lock:
            self._pending[id(proposal)] = proposal

    def pending_remove(self, proposal: Proposal) -> None:
        with self._lock:
            self._pending.pop(id(proposal), None)


def solve_candidate(inst: Instance, sp: Subproblem, sub_cfg: SubsolverConfig,
                    dim_cap: int) -> tuple[Tour, SolveOutcome] | None:
    """Reformulate, warm-start, solve, recover. None = unusable subproblem."""
    if len(sp.free_nodes) == 0:
        return None
    try:
        bm = build_atsp(inst, sp)
    except DegenerateSubproblemError:
        return None
    if bm.stsp_dim > dim_cap:
        return None
    bm = atsp_to_stsp(bm)
    warm = warm_encoding(sp)
    try:
        outcome = choose(bm.d_stsp, warm, sub_cfg)
        candidate = recover(outcome.tour, sp)
    except (SolverError, CapacityError, RecoveryError) as exc:
        log.warning("subproblem solve failed: %s", exc)
        return None
    return candidate, outcome


def slave_step(inst: Instance, state: SharedState, proposal: Proposal,
               sub_cfg: SubsolverConfig, dim_cap: int) -> _Screened | None:
    """Screen one queued subproblem against the current snapshot."""
    _, snap_length = state.snapshot()
    result = solve_candidate(inst, proposal.subproblem, sub_cfg, dim_cap)
    if result is None:
        state.pending_remove(proposal)
        state.log("screen_discard", snap_length, note="unusable-subproblem")
        return None
    candidate, outcome = result
    cand_length = tour_length(inst, candidate)
    if cand_length < snap_length:
        state.log("screen", cand_length, gain=snap_length - cand_length)
        return _Screened(proposal, candidate, cand_length, outcome.elapsed)
    state.pending_remove(proposal)
    state.log("screen_discard", snap_length)
    return None


def master_step(inst: Instance, state: SharedState, item: Proposal | _Screened,
                sub_cfg: SubsolverConfig, dim_cap: int,
                virtual_time: bool = False) -> bool:
    """Re-extract against the live tour, re-solve, and accept iff improving.

    ``virtual_time`` records 0.0 as the solver time so that trajectory text
    fed back into prompts is identical across reproducible runs.
    """
    proposal = item.proposal if isinstance(item, _Screened) else item
    live_tour, live_length = state.snapshot()
    mask = np.zeros(inst.n, dtype=bool)
    mask[list(proposal.subproblem.free_nodes)] = True
    sp_live = extract_free_set(inst, live_tour, mask, live_length)
    result = solve_candidate(inst, sp_live, sub_cfg, dim_cap)
    state.pending_remove(proposal)
    if result is None:
        state.counter += 1
        state.add_trajectory(TrajectoryEntry(proposal.box, len(sp_live.free_nodes), 0, 0.0))
        state.log("discard", live_length, note="unusable-subproblem")
        return False
    candidate, outcome = result
    new_tour, accepted, gain = splice_if_better(inst, live_tour, candidate)
    if accepted:
        state.update_tour(new_tour, live_length - gain)
        state.counter = 0
        state.log("accept", live_length - gain, gain=gain)
    else:
        state.counter += 1
        state.log("reject", live_length)
    state.add_trajectory(TrajectoryEntry(
        proposal.box, len(sp_live.free_nodes), gain,
        0.0 if virtual_time else outcome.elapsed))
    return accepted


class _Run:
    def __init__(self, inst: Instance, initial: Tour, cfg: OrchestratorConfig,
                 selector, sub_cfg: SubsolverConfig):
        self.inst = inst
        self.cfg = cfg
        self.sub_cfg = sub_cfg
        self.selector = selector
        self.state = SharedState(inst, initial)
        self.pending_q: queue.Queue = queue.Queue(maxsize=cfg.queue_cap)
        self.screened_q: queue.Queue = queue.Queue(maxsize=cfg.queue_cap)
        self.state.log("init", self.state.snapshot()[1])

    def over_budget(self) -> bool:
        return self.state.elapsed() >= self.cfg.budget_s

    def should_stop(self) -> bool:
        return (self.state.stop.is_set() or self.state.counter >= self.cfg.stall_limit
                or self.over_budget())

    def selector_round(self) -> int:
        tour, trajectory, pending = self.state.selection_view()
        try:
            proposals = self.selector.propose(self.inst, tour, trajectory, pending)
        except Exception:
            log.exception("selector failed; skipping round")
            return 0
        queued = 0
        for proposal in proposals:
            while not self.should_stop():
                try:
                    self.pending_q.put(proposal, timeout=0.2)
                    self.state.pending_add(proposal)
                    queued += 1
                    break
                except queue.Full:
                    continue
        return queued

    def slave_round(self, block: bool) -> bool:
        try:
            proposal = self.pending_q.get(timeout=0.2) if block else self.pending_q.get_nowait()
        except queue.Empty:
            return False
        screened = slave_step(self.inst, self.state, proposal, self.sub_cfg, self.cfg.dim_cap)
        if screened is not None:
            while not self.should_stop():
                try:
                    self.screened_q.put(screened, timeout=0.2)
                    break
                except queue.Full:
                    continue
        return True

    def master_round(self, block: bool) -> bool:
        item: Proposal | _Screened
        try:
            item = self.screened_q.get_nowait()
        except queue.Empty:
            try:
                item = self.pending_q.get(timeout=0.2) if block else self.pending_q.get_nowait()
            except queue.Empty:
                return False
        master_step(self.inst, self.state, item, self.sub_cfg, self.cfg.dim_cap,
                    virtual_time=self.cfg.deterministic)
        return True

    def run_stepped(self) -> None:
        # Round-robin simulation of the parallel loops, seed-reproducible.
        # Alternating who claims the pending queue first mirrors the fair
        # contention of the threaded mode: without it, slaves would screen
        # out every non-improving item and the master's stall counter could
        # never advance on an already-optimal tour.
        cycle = 0
        while not self.should_stop():
            cycle += 1
            queued = 0
            if self.pending_q.qsize() < self.cfg.boxes_per_prompt:
                queued = self.selector_round()
            if self.should_stop():
                break
            did_slave = did_master = False
            if cycle % 2:
                did_slave = self.slave_round(block=False)
                if not self.should_stop():
                    did_master = self.master_round(block=False)
            else:
                did_master = self.master_round(block=False)
                if not self.should_stop():
                    did_slave = self.slave_round(block=False)
            if not (queued or did_slave or did_master):
                if self.over_budget():
                    break
                time.sleep(0.005)  # idle selector; wait out the budget

    def run_threads(self) -> None:
        state = self.state

        def selector_loop():
            while not self.should_stop():
                if self.selector_round() == 0:
                    time.sleep(0.02)

        def slave_loop():
            while not self.should_stop():
                self.slave_round(block=True)

        def master_loop():
            while not self.should_stop():
                self.master_round(block=True)
            state.stop.set()

        threads = [threading.Thread(target=selector_loop, name="selector", daemon=True)]
        threads += [threading.Thread(target=slave_loop, name=f"slave-{i}", daemon=True)
                    for i in range(self.cfg.slave_count)]
        threads.append(threading.Thread(target=master_loop, name="master", daemon=True))
        for t in threads:
            t.start()
        while any(t.is_alive() for t in threads):
            if self.should_stop():
                state.stop.set()
            time.sleep(0.05)
        for t in threads:
            t.join(timeout=5.0)


def run(inst: Instance, initial: Tour, cfg: OrchestratorConfig, selector,
        sub_cfg: SubsolverConfig | None = None) -> RunResult:
    """Improve the initial tour until the stall limit or wall budget hits."""
    if sub_cfg is None:
        sub_cfg = SubsolverConfig(time_limit_s=cfg.solver_time_s, seed=cfg.seed)
    if cfg.deterministic and sub_cfg.mode in ("auto", "local") and sub_cfg.max_steps is None:
        # deterministic work budget instead of a wall-clock solver limit
        sub_cfg = replace(sub_cfg, time_limit_s=None,
                          max_steps=max(2000, int(40 * cfg.solver_time_s) * 100))
    runner = _Run(inst, initial, cfg, selector, sub_cfg)
    try:
        if cfg.scheduler == "threads":
            runner.run_threads()
        else:
            runner.run_stepped()
    finally:
        runner.state.stop.set()
    tour, length = runner.state.snapshot()
    runner.state.log("stop", length, note=f"counter={runner.state.counter}")
    return RunResult(tour, length, runner.state.events, runner.state.trajectory)


def emit_gap_log(events: list[RunEvent], optimum_length: int | None = None) -> str:
    """CSV curve of the accepted-solution length over time."""
    lines = ["elapsed_s,length,gap_percent"]
    for ev in events:
        if ev.kind not in ("init", "accept"):
            continue
        if optimum_length:
            pct = 100.0 * (ev.length - optimum_length) / optimum_length
            gap = f"{pct:.2f}"
        else:
            gap = ""
        lines.append(f"{ev.elapsed_s:.3f},{ev.length},{gap}")
    return "\n".join(lines) + "\n"


def emit_event_log(events: list[RunEvent], trajectory: list[TrajectoryEntry]) -> str:
    """JSON-lines audit trail: every event, then every trajectory entry."""
    out = []
    for ev in events:
        out.append(json.dumps({
            "elapsed_s": round(ev.elapsed_s, 4), "kind": ev.kind,
            "length": ev.length, "gain": ev.gain, "note": ev.note,
        }, sort_keys=True))
    for entry in trajectory:
        out.append(json.dumps({
            "kind": "trajectory",
            "box": [entry.box.x_min, entry.box.x_max, entry.box.y_min, entry.box.y_max],
            "node_count": entry.node_count, "gain": entry.gain,
            "solver_time_s": round(entry.solver_time, 4),
        }, sort_keys=True))
    return "\n".join(out) + "\n"
