import numpy as np
import pytest

from streamplace import (
    Cap,
    DeviceTopology,
    DqLevel,
    DqScenario,
    Method,
    ModelParams,
    OperatorGraph,
    OptimizerConfig,
    Placement,
    SearchSpaceError,
    brute_force_optimize,
    evaluate_candidate,
    local_search_optimize,
    optimize_with_dq,
    validate_placement,
)
from streamplace.optimizer import (
    InfeasibleError,
    InvalidCandidateError,
    count_candidates,
    random_instance,
)

from conftest import naive_optimum


def paper_scenario():
    return DqScenario([DqLevel(0.5), DqLevel(1.0, (Cap(2, 0, 0.0),))])


def small_case(seed, n_ops=3, n_dev=3):
    rng = np.random.default_rng(seed)
    graph, topo = random_instance(rng, n_ops, n_dev, p_edge=0.7)
    params = ModelParams(alpha=float(rng.uniform(0, 0.3)), beta=float(rng.uniform(0, 2)),
                         dq_fraction=float(rng.uniform(0, 1)))
    return graph, topo, params


def argmin_set(results, rel=1e-9):
    best = min(f for f, _ in results)
    return {x for f, x in results if f <= best * (1 + rel) + 1e-15}


class TestEvaluateCandidate:
    def test_paper(self, paper_graph, paper_topo, table3):
        ev = evaluate_candidate(paper_graph, paper_topo, table3, ModelParams(beta=1, dq_fraction=0.5))
        assert ev.latency == pytest.approx(1.74, abs=1e-9)
        assert ev.objective == pytest.approx(1.16, abs=1e-9)
        assert ev.network_volume == pytest.approx(0.44 + 1.05, abs=1e-12)

    def test_modified(self, paper_graph, paper_topo, modified):
        ev = evaluate_candidate(paper_graph, paper_topo, modified, ModelParams(beta=2, dq_fraction=1))
        assert (ev.latency, ev.objective) == pytest.approx((2.37, 0.79), abs=1e-9)

    def test_colocated(self, paper_graph, paper_topo):
        ev = evaluate_candidate(paper_graph, paper_topo, Placement([[1, 0, 0]] * 3), ModelParams())
        assert (ev.latency, ev.objective, ev.network_volume) == (0.0, 0.0, 0.0)

    def test_invalid(self, paper_graph, paper_topo):
        with pytest.raises(InvalidCandidateError):
            evaluate_candidate(paper_graph, paper_topo, Placement([[0.5, 0.4, 0]] * 3), ModelParams())


class TestBruteForce:
    def test_forced_single_device(self):
        g = OperatorGraph.from_selectivities([1.0], [])
        topo = DeviceTopology.fully_available([[0.0]], 1)
        r = brute_force_optimize(g, topo, ModelParams(), config=OptimizerConfig(granularity=7))
        assert r.placement == Placement([[1.0]]) and r.latency == 0.0
        assert r.method is Method.BRUTE_FORCE

    def test_paper_instance(self, paper_graph, paper_topo, paper_params, table3):
        r = brute_force_optimize(paper_graph, paper_topo, paper_params,
                                 config=OptimizerConfig(granularity=10))
        assert r.evaluations == 66 ** 3
        assert r.latency <= 1.74
        assert validate_placement(r.placement, paper_graph, paper_topo).ok

    def test_two_op_chain(self):
        g = OperatorGraph.from_selectivities([1, 1], [(0, 1)])
        topo = DeviceTopology.fully_available([[0, 1], [1, 0]], 2)
        results = naive_optimum(g, topo, ModelParams(), 2)
        assert len(results) == 9
        assert min(f for f, _ in results) == 0.0
        assert argmin_set(results) == {((0.0, 1.0), (0.0, 1.0)), ((1.0, 0.0), (1.0, 0.0))}
        r = brute_force_optimize(g, topo, ModelParams(), config=OptimizerConfig(granularity=2))
        assert r.latency == 0.0
        assert r.placement == Placement([[0.0, 1.0], [0.0, 1.0]])

    @pytest.mark.parametrize("seed", range(25))
    def test_matches_exhaustive_oracle(self, seed):
        graph, topo, params = small_case(seed)
        g = 3
        results = naive_optimum(graph, topo, params, g)
        r = brute_force_optimize(graph, topo, params, config=OptimizerConfig(granularity=g))
        best = min(f for f, _ in results)
        assert r.objective == pytest.approx(best, rel=1e-12, abs=1e-15)
        assert tuple(map(tuple, r.placement.x.tolist())) in argmin_set(results)
        assert r.evaluations == len(results)

    @pytest.mark.parametrize("seed", range(10))
    @pytest.mark.parametrize("factor", [0.25, 8.0, 3.7])
    def test_argmin_invariant_under_cost_scaling(self, seed, factor):
        graph, topo, _ = small_case(seed)
        params = ModelParams(beta=1.0, dq_fraction=0.3)
        scaled = DeviceTopology(topo.com_cost * factor, topo.availability)
        before = naive_optimum(graph, topo, params, 2)
        after = naive_optimum(graph, scaled, params, 2)
        assert argmin_set(before) == argmin_set(after)
        a = brute_force_optimize(graph, topo, params, config=OptimizerConfig(granularity=2))
        b = brute_force_optimize(graph, scaled, params, config=OptimizerConfig(granularity=2))
        assert b.objective == pytest.approx(a.objective * factor, rel=1e-12, abs=1e-15)
        if factor in (0.25, 8.0):
            assert a.placement == b.placement

    def test_guard(self, paper_graph, paper_topo, paper_params):
        cfg = OptimizerConfig(granularity=60)
        with pytest.raises(SearchSpaceError) as info:
            brute_force_optimize(paper_graph, paper_topo, paper_params, config=cfg)
        assert info.value.count == count_candidates(paper_graph, paper_topo, paper_params, None, 60)
        assert info.value.count == 1891 ** 3

    def test_infeasible_level(self, paper_graph, paper_topo, paper_params):
        caps = tuple(Cap(0, u, 0.3) for u in range(3))
        with pytest.raises(InfeasibleError):
            brute_force_optimize(paper_graph, paper_topo, paper_params,
                                 DqScenario([DqLevel(0.2, caps)]), OptimizerConfig(granularity=10))

    def test_caps_respected(self, paper_graph, paper_topo, paper_params):
        caps = (Cap(0, 2, 0.3), Cap(1, 2, 0.0), Cap(2, 2, 0.5))
        sc = DqScenario([DqLevel(0.4, caps)])
        r = brute_force_optimize(paper_graph, paper_topo, paper_params, sc,
                                 OptimizerConfig(granularity=10))
        capm = sc.levels[0].cap_matrix(3, 3)
        assert validate_placement(r.placement, paper_graph, paper_topo, capm).ok


class TestLocalSearch:
    def test_single_shared_device(self):
        g = OperatorGraph.from_selectivities([1, 1, 1], [(0, 1), (1, 2)])
        avail = [[False, True, False]] * 3
        topo = DeviceTopology([[0, 2, 2], [2, 0, 2], [2, 2, 0]], avail)
        r = local_search_optimize(g, topo, ModelParams(), config=OptimizerConfig(restarts=2))
        assert r.latency == 0.0 and r.method is Method.LOCAL_SEARCH

    def test_paper_continuous_moves(self, paper_graph, paper_topo, table3):
        params = ModelParams(beta=1, dq_fraction=0.5)
        ref = evaluate_candidate(paper_graph, paper_topo, table3, params).objective
        cfg = OptimizerConfig(granularity=10, move_step=0.037, seed=11, restarts=5,
                              max_iterations=300)
        r = local_search_optimize(paper_graph, paper_topo, params, config=cfg)
        assert r.objective <= ref
        assert np.allclose(r.placement.x.sum(axis=1), 1.0, atol=1e-9)

    @pytest.mark.parametrize("seed", range(8))
    def test_best_not_worse_than_any_start(self, seed):
        graph, topo, params = small_case(seed)
        cfg = OptimizerConfig(granularity=4, restarts=6, max_iterations=40, seed=seed)
        r = local_search_optimize(graph, topo, params, config=cfg)
        assert len(r.start_objectives) == 6
        assert all(r.objective <= f for f in r.start_objectives)

    @pytest.mark.parametrize("seed", range(6))
    def test_deterministic(self, seed):
        graph, topo, params = small_case(seed, 4, 3)
        cfg = OptimizerConfig(granularity=5, restarts=3, max_iterations=100, seed=seed)
        a = local_search_optimize(graph, topo, params, config=cfg)
        b = local_search_optimize(graph, topo, params, config=cfg)
        assert a == b
        assert a.placement.x.tobytes() == b.placement.x.tobytes()
        assert a.start_objectives == b.start_objectives

    @pytest.mark.parametrize("seed", range(10))
    def test_never_beats_oracle_on_lattice(self, seed):
        graph, topo, params = small_case(seed)
        cfg = OptimizerConfig(granularity=4, restarts=5, max_iterations=80, seed=seed)
        oracle = brute_force_optimize(graph, topo, params, config=cfg)
        local = local_search_optimize(graph, topo, params, config=cfg)
        assert local.objective >= oracle.objective

    def test_no_annealing_is_greedy(self, paper_graph, paper_topo, paper_params):
        cfg = OptimizerConfig(granularity=10, restarts=3, max_iterations=200,
                              initial_temperature=0.0)
        r = local_search_optimize(paper_graph, paper_topo, paper_params, config=cfg)
        assert all(r.objective <= f for f in r.start_objectives)

    @pytest.mark.parametrize("seed", range(5))
    def test_feasible_under_caps(self, seed, paper_graph, paper_topo, paper_params):
        caps = (Cap(0, 0, 0.25), Cap(1, 1, 0.0), Cap(2, 2, 0.6))
        sc = DqScenario([DqLevel(0.3, caps)])
        cfg = OptimizerConfig(granularity=8, restarts=3, max_iterations=150, seed=seed)
        r = local_search_optimize(paper_graph, paper_topo, paper_params, sc, cfg)
        capm = sc.levels[0].cap_matrix(3, 3)
        assert validate_placement(r.placement, paper_graph, paper_topo, capm).ok


class TestDqScenarios:
    @pytest.mark.parametrize("method", list(Method))
    @pytest.mark.parametrize("beta,bound", [(1.0, 1.16), (2.0, 0.79)])
    def test_paper_two_levels(self, paper_graph, paper_topo, method, beta, bound):
        params = ModelParams(beta=beta, dq_fraction=0.5)
        r = optimize_with_dq(paper_graph, paper_topo, params, paper_scenario(),
                             OptimizerConfig(granularity=10, restarts=4, max_iterations=200),
                             method)
        assert r.objective <= bound
        level = {0.5: DqLevel(0.5), 1.0: paper_scenario().levels[1]}[r.dq_fraction]
        assert validate_placement(r.placement, paper_graph, paper_topo,
                                  level.cap_matrix(3, 3)).ok

    def test_paper_level_placements_feasible(self, paper_graph, paper_topo, modified, table3):
        caps = paper_scenario().levels[1].cap_matrix(3, 3)
        assert validate_placement(modified, paper_graph, paper_topo, caps).ok
        assert not validate_placement(table3, paper_graph, paper_topo, caps).ok

    @pytest.mark.parametrize("method", list(Method))
    def test_single_level_matches_underlying(self, paper_graph, paper_topo, method):
        params = ModelParams(beta=1.0, dq_fraction=0.2)
        cfg = OptimizerConfig(granularity=6, restarts=3, max_iterations=80)
        via = optimize_with_dq(paper_graph, paper_topo, params, DqScenario([DqLevel(0.7)]), cfg,
                               method)
        fn = brute_force_optimize if method is Method.BRUTE_FORCE else local_search_optimize
        direct = fn(paper_graph, paper_topo, params.with_dq(0.7), None, cfg)
        assert via == direct

    def test_beta_zero_prefers_lowest_dq_on_tie(self, paper_graph, paper_topo):
        sc = DqScenario([DqLevel(0.9), DqLevel(0.1), DqLevel(0.5)])
        r = optimize_with_dq(paper_graph, paper_topo, ModelParams(beta=0.0), sc,
                             OptimizerConfig(granularity=4))
        assert r.dq_fraction == 0.1 and r.objective == r.latency

    def test_beta_zero_picks_min_latency_level(self, paper_graph, paper_topo):
        # the high-dq level forbids co-locating everything
        caps = tuple(Cap(i, u, 0.5) for i in range(3) for u in range(3))
        sc = DqScenario([DqLevel(1.0, caps), DqLevel(0.6)])
        r = optimize_with_dq(paper_graph, paper_topo, ModelParams(beta=0.0), sc,
                             OptimizerConfig(granularity=4))
        assert r.dq_fraction == 0.6 and r.latency == 0.0

    @pytest.mark.parametrize("method", list(Method))
    @pytest.mark.parametrize("seed", range(4))
    def test_pruning_never_helps(self, paper_topo, method, seed):
        rng = np.random.default_rng(seed)
        graph, topo = random_instance(rng, 3, 3, p_available=1.0)
        levels = [DqLevel(0.2), DqLevel(0.6, (Cap(1, 0, 0.0), Cap(2, 1, 0.25))),
                  DqLevel(1.0, tuple(Cap(i, u, 0.5) for i in range(3) for u in range(3)))]
        params = ModelParams(alpha=0.1, beta=float(rng.uniform(0, 3)))
        cfg = OptimizerConfig(granularity=4, restarts=3, max_iterations=60, seed=seed)
        full = optimize_with_dq(graph, topo, params, DqScenario(levels), cfg, method)
        for drop in levels:
            pruned = DqScenario(levels).without(drop.dq_fraction)
            assert optimize_with_dq(graph, topo, params, pruned, cfg, method).objective >= \
                full.objective

    def test_scenario_validation(self):
        with pytest.raises(ValueError):
            DqScenario([DqLevel(0.5), DqLevel(0.5)])
        with pytest.raises(ValueError):
            DqScenario([DqLevel(1.5)])
        with pytest.raises(ValueError):
            DqScenario([])


def test_config_validation():
    for kwargs in (dict(granularity=0), dict(move_step=0), dict(move_step=1.5), dict(decay=1.0),
                   dict(restarts=0)):
        with pytest.raises(ValueError):
            OptimizerConfig(**kwargs)
