import sys
import textwrap

import numpy as np
import pytest

from vitsp.core import Tour, uniform_instance, weight_matrix
from vitsp.subproblem import atsp_to_stsp, build_atsp, extract, BoxRegion
from vitsp.subsolver import (
    AdapterConfig,
    CapacityError,
    SolverError,
    SubsolverConfig,
    choose,
    external_solve,
    held_karp,
    local_solve,
    matrix_neighbors,
    tour_cost,
    write_explicit_matrix,
)

from conftest import random_tour
from oracles import brute_force_optimum

SQUARE = np.array([
    [0, 1, 2, 1],
    [1, 0, 1, 2],
    [2, 1, 0, 1],
    [1, 2, 1, 0],
], dtype=np.int64)


class TestHeldKarp:
    def test_three_nodes(self):
        d = np.array([[0, 5, 2], [5, 0, 4], [2, 4, 0]], dtype=np.int64)
        out = held_karp(d)
        assert out.proven_optimal
        assert out.cost == 11
        assert out.tour.key() == (0, 1, 2)

    def test_unit_square_perimeter(self):
        out = held_karp(SQUARE)
        assert out.cost == 4

    def test_dimension_bounds(self):
        with pytest.raises(CapacityError):
            held_karp(np.zeros((2, 2), dtype=np.int64))
        with pytest.raises(CapacityError):
            held_karp(np.zeros((19, 19), dtype=np.int64))

    @pytest.mark.parametrize("seed", range(25))
    def test_matches_factorial_enumeration(self, seed):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(3, 10))
        d = rng.integers(1, 500, size=(m, m)).astype(np.int64)
        np.fill_diagonal(d, 0)
        out = held_karp(d)
        best, _ = brute_force_optimum(d)
        assert out.cost == best
        assert tour_cost(d, out.tour) == best

    def test_asymmetric_optimum(self):
        rng = np.random.default_rng(99)
        d = rng.integers(1, 100, size=(8, 8)).astype(np.int64)
        np.fill_diagonal(d, 0)
        assert not np.array_equal(d, d.T)
        best, _ = brute_force_optimum(d)
        assert held_karp(d).cost == best


class TestLocalSolve:
    def test_locally_optimal_warm_unchanged(self):
        warm = Tour([0, 1, 2, 3])
        out = local_solve(SQUARE, warm, time_limit=None)
        assert out.cost == 4
        assert out.tour.key() == warm.key()
        assert not out.proven_optimal

    def test_crossing_warm_improved(self):
        warm = Tour([0, 2, 1, 3])  # cost 8 on the square metric
        out = local_solve(SQUARE, warm, time_limit=None)
        assert out.cost == 4

    @pytest.mark.parametrize("seed", range(10))
    def test_never_worse_than_warm(self, seed):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(5, 30))
        d = rng.integers(1, 1000, size=(m, m)).astype(np.int64)
        d = d + d.T  # symmetric
        np.fill_diagonal(d, 0)
        warm = random_tour(rng, m)
        out = local_solve(d, warm, time_limit=None, seed=seed)
        assert out.cost <= tour_cost(d, warm)
        Tour(out.tour.order)  # permutation validity

    def test_tracks_exact_costs_on_small_instances(self):
        ratios = []
        for seed in range(8):
            inst = uniform_instance(int(np.random.default_rng(seed).integers(8, 13)), seed, 500)
            d = weight_matrix(inst, range(inst.n), range(inst.n))
            exact = held_karp(d).cost
            warm = random_tour(np.random.default_rng(seed + 1), inst.n)
            got = local_solve(d, warm, time_limit=2.0, seed=seed).cost
            assert got >= exact
            ratios.append(got / exact)
        # descent from a random tour should land near the optimum here
        assert np.median(ratios) < 1.05


def _write_script(tmp_path, body):
    path = tmp_path / "adapter.py"
    path.write_text(textwrap.dedent(body), encoding="utf-8")
    return path


def _echo_warm_adapter(tmp_path):
    # parses DIMENSION and emits the identity tour
    return _write_script(tmp_path, """
        import re, sys
        text = open(sys.argv[1]).read()
        n = int(re.search(r"DIMENSION:\\s*(\\d+)", text).group(1))
        lines = ["TYPE: TOUR", "TOUR_SECTION"] + [str(i + 1) for i in range(n)] + ["-1", "EOF"]
        open(sys.argv[2], "w").write("\\n".join(lines) + "\\n")
    """)


def _brute_force_adapter(tmp_path):
    return _write_script(tmp_path, """
        import itertools, re, sys
        lines = open(sys.argv[1]).read().splitlines()
        n = int(next(l for l in lines if "DIMENSION" in l).split(":")[1])
        at = lines.index("EDGE_WEIGHT_SECTION") + 1
        rows = [list(map(int, lines[at + i].split())) for i in range(n)]
        best, tour = None, None
        for perm in itertools.permutations(range(1, n)):
            order = (0,) + perm
            c = sum(rows[order[i]][order[(i + 1) % n]] for i in range(n))
            if best is None or c < best:
                best, tour = c, order
        out = ["TYPE: TOUR", "TOUR_SECTION"] + [str(v + 1) for v in tour] + ["-1", "EOF"]
        open(sys.argv[2], "w").write("\\n".join(out) + "\\n")
    """)


class TestExternalSolve:
    def test_echo_adapter_is_identity(self, tmp_path):
        script = _echo_warm_adapter(tmp_path)
        cfg = AdapterConfig(command=(sys.executable, str(script), "{tsp}", "{tour}"))
        out = external_solve(SQUARE, 10.0, cfg)
        assert np.array_equal(out.tour.order, [0, 1, 2, 3])
        assert out.cost == 4

    def test_timeout_surfaces_as_solver_error(self, tmp_path):
        script = _write_script(tmp_path, "import time\ntime.sleep(30)\n")
        cfg = AdapterConfig(command=(sys.executable, str(script), "{tsp}", "{tour}"), timeout_s=0.5)
        with pytest.raises(SolverError, match="timed out"):
            external_solve(SQUARE, 0.5, cfg)

    def test_crash_surfaces_as_solver_error(self, tmp_path):
        script = _write_script(tmp_path, "import sys\nsys.exit(3)\n")
        cfg = AdapterConfig(command=(sys.executable, str(script), "{tsp}", "{tour}"))
        with pytest.raises(SolverError, match="exited 3"):
            external_solve(SQUARE, 5.0, cfg)

    def test_invalid_tour_surfaces_as_solver_error(self, tmp_path):
        script = _write_script(tmp_path, """
            import sys
            open(sys.argv[2], "w").write("TOUR_SECTION\\n1\\n1\\n-1\\n")
        """)
        cfg = AdapterConfig(command=(sys.executable, str(script), "{tsp}", "{tour}"))
        with pytest.raises(SolverError, match="unusable"):
            external_solve(SQUARE, 5.0, cfg)

    def test_exact_adapter_matches_held_karp_on_fixture(self, tmp_path):
        rng = np.random.default_rng(6)
        d = rng.integers(1, 60, size=(6, 6)).astype(np.int64)
        d = d + d.T
        np.fill_diagonal(d, 0)
        cfg = AdapterConfig(command=(sys.executable, str(_brute_force_adapter(tmp_path)), "{tsp}", "{tour}"))
        assert external_solve(d, 20.0, cfg).cost == held_karp(d).cost

    def test_negative_entries_are_shifted_and_cost_unshifted(self, tmp_path):
        inst = uniform_instance(9, 4, 100)
        tour = random_tour(np.random.default_rng(4), 9)
        sp = extract(inst, tour, BoxRegion(10, 80, 10, 80))
        bm = atsp_to_stsp(build_atsp(inst, sp))
        assert bm.d_stsp.min() < 0
        cfg = AdapterConfig(command=(sys.executable, str(_brute_force_adapter(tmp_path)), "{tsp}", "{tour}"))
        out = external_solve(bm.d_stsp, 30.0, cfg)
        assert out.shift == -bm.neg_m
        best, _ = brute_force_optimum(bm.d_stsp)
        assert out.cost == best  # shift cancels per-tour, optimum preserved

    def test_explicit_matrix_serialization(self):
        text = write_explicit_matrix(SQUARE)
        assert "TYPE: TSP" in text
        assert "EDGE_WEIGHT_TYPE: EXPLICIT" in text
        assert "EDGE_WEIGHT_FORMAT: FULL_MATRIX" in text
        assert "0 1 2 1" in text


class TestChoose:
    def test_routes_small_to_exact(self):
        out = choose(SQUARE, Tour([0, 2, 1, 3]), SubsolverConfig(mode="auto", exact_cap=14))
        assert out.proven_optimal and out.cost == 4

    def test_routes_large_to_local(self):
        rng = np.random.default_rng(0)
        m = 20
        d = rng.integers(1, 100, size=(m, m)).astype(np.int64)
        d = d + d.T
        np.fill_diagonal(d, 0)
        warm = random_tour(rng, m)
        out = choose(d, warm, SubsolverConfig(mode="auto", exact_cap=14, time_limit_s=1.0))
        assert not out.proven_optimal
        assert out.cost <= tour_cost(d, warm)

    def test_routes_to_external_when_configured(self, tmp_path):
        rng = np.random.default_rng(1)
        m = 16
        d = rng.integers(1, 100, size=(m, m)).astype(np.int64)
        d = d + d.T
        np.fill_diagonal(d, 0)
        script = _echo_warm_adapter(tmp_path)
        cfg = SubsolverConfig(
            mode="auto", exact_cap=14,
            adapter=AdapterConfig(command=(sys.executable, str(script), "{tsp}", "{tour}")),
        )
        out = choose(d, random_tour(rng, m), cfg)
        assert out.shift == 0
        assert np.array_equal(out.tour.order, np.arange(m))

    def test_forced_modes(self):
        warm = Tour([0, 2, 1, 3])
        assert choose(SQUARE, warm, SubsolverConfig(mode="exact")).proven_optimal
        assert choose(SQUARE, warm, SubsolverConfig(mode="local", time_limit_s=None)).cost == 4
        with pytest.raises(SolverError):
            choose(SQUARE, warm, SubsolverConfig(mode="external"))
        with pytest.raises(ValueError):
            choose(SQUARE, warm, SubsolverConfig(mode="bogus"))


def test_matrix_neighbors_sorted_and_exclude_self():
    rng = np.random.default_rng(2)
    d = rng.integers(1, 50, size=(7, 7)).astype(np.int64)
    np.fill_diagonal(d, 0)
    for i, row in enumerate(matrix_neighbors(d, 3)):
        assert i not in row
        vals = [int(d[i, j]) for j in row]
        assert vals == sorted(vals)
