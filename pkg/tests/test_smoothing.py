"""Tests for smoothed shortest-path potentials, expected loads, and sampling."""

import math

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra

from eqkit import instances
from eqkit.network import BPR, CostParams, Network
from eqkit.smoothing import (
    DualPoint,
    SolverError,
    flow_from_dual,
    gumbel_check,
    log_sum_exp,
    psi_and_flow,
    psi_sink_ordered,
    psi_source_layered,
    psi_total,
    sample_path,
    sample_stochastic_gradient,
    transition_probabilities,
)


def _bpr_params(t_free):
    t = np.asarray(t_free, dtype=float)
    m = t.size
    return CostParams(
        t_free=t,
        capacity=np.ones(m),
        rho=np.ones(m),
        mu_power=np.ones(m),
        model=np.array([BPR] * m, dtype=object),
    )


def _net(n, tails, heads, t_free, ods):
    origins, dests, demands = zip(*ods)
    return Network(
        n_vertices=n,
        edge_tail=tails,
        edge_head=heads,
        cost=_bpr_params(t_free),
        od_origin=list(origins),
        od_dest=list(dests),
        od_demand=list(demands),
    )


def _dijkstra_total(net, t):
    """Demand-weighted shortest-path total (instances without parallel edges)."""
    graph = sp.csr_matrix(
        (t, (net.edge_tail, net.edge_head)), shape=(net.n_vertices, net.n_vertices)
    )
    dist = dijkstra(graph, directed=True, indices=net.od_origin)
    lengths = dist[np.arange(net.n_ods), net.od_dest]
    return float(np.dot(net.od_demand, lengths))


class TestLogSumExp:
    def test_two_equal_terms(self):
        assert log_sum_exp([0.0, 0.0]) == pytest.approx(math.log(2.0), abs=1e-15)

    def test_minus_infinity_entries_drop_out(self):
        assert log_sum_exp([-math.inf, 5.0]) == pytest.approx(5.0)
        assert log_sum_exp([-math.inf, -math.inf]) == -math.inf
        assert log_sum_exp([]) == -math.inf

    def test_large_inputs_do_not_overflow(self):
        val = log_sum_exp([1000.0, 1000.0])
        assert math.isfinite(val)
        assert val == pytest.approx(1000.0 + math.log(2.0), rel=1e-15)

    def test_rejects_nan_and_plus_infinity(self):
        with pytest.raises(ValueError):
            log_sum_exp([math.nan, 1.0])
        with pytest.raises(ValueError):
            log_sum_exp([math.inf, 1.0])

    def test_matches_naive_formula_on_random_draws(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            v = rng.normal(size=int(rng.integers(1, 9)))
            assert log_sum_exp(v) == pytest.approx(math.log(np.exp(v).sum()), rel=1e-12)


class TestDualPoint:
    def test_stores_contiguous_float_copy(self):
        dp = DualPoint(t=[1, 2, 3], gamma=1)
        assert dp.t.dtype == float and dp.t.shape == (3,)
        assert dp.gamma == 1.0

    def test_rejects_bad_t(self):
        with pytest.raises(ValueError):
            DualPoint(t=np.ones((2, 2)), gamma=1.0)
        with pytest.raises(ValueError):
            DualPoint(t=[1.0, math.nan], gamma=1.0)

    def test_rejects_bad_gamma(self):
        with pytest.raises(ValueError):
            DualPoint(t=[1.0], gamma=-0.5)
        with pytest.raises(ValueError):
            DualPoint(t=[1.0], gamma=math.inf)
        DualPoint(t=[1.0], gamma=0.0)  # the deterministic limit is allowed

    def test_size_checked_against_network(self):
        net = instances.parallel_two()
        with pytest.raises(ValueError, match="wrong number of edges"):
            psi_total(net, DualPoint(t=[1.0], gamma=1.0))


class TestOrderedSweep:
    def test_two_edge_chain_accumulates_costs(self):
        net = _net(3, [0, 1], [1, 2], [1.0, 1.0], [(0, 2, 1.0)])
        table = psi_sink_ordered(net, 2, DualPoint(t=np.array([1.0, 1.0]), gamma=1.0))
        assert table.values == pytest.approx([-2.0, -1.0, 0.0], abs=1e-15)

    def test_parallel_pair_soft_minimum(self):
        net = instances.parallel_two()
        table = psi_sink_ordered(net, 1, DualPoint(t=net.t_free, gamma=1.0))
        assert table.values[1] == 0.0
        assert table.values[0] == pytest.approx(
            math.log(math.exp(-1) + math.exp(-2)), rel=1e-14
        )

    def test_vertex_without_a_path_gets_minus_infinity(self):
        # vertex 2 hangs off the sink: no directed path from 2 back to 1
        net = _net(3, [0, 1], [1, 2], [1.0, 1.0], [(0, 1, 1.0)])
        table = psi_sink_ordered(net, 1, DualPoint(t=np.array([1.0, 1.0]), gamma=1.0))
        assert table.values[0] == pytest.approx(-1.0)
        assert table.values[1] == 0.0
        assert table.values[2] == -math.inf

    def test_gamma_zero_gives_shortest_path_values(self):
        net = instances.parallel_two()
        table = psi_sink_ordered(net, 1, DualPoint(t=net.t_free, gamma=0.0))
        assert table.values[0] == -1.0

    def test_cyclic_reaching_subgraph_is_rejected(self):
        net = instances.ring_with_tail()
        with pytest.raises(SolverError, match="directed cycle"):
            psi_sink_ordered(net, 3, DualPoint(t=net.t_free, gamma=1.0))


class TestLayeredRecursion:
    def test_single_edge_base_case(self):
        net = _net(2, [0], [1], [3.0], [(0, 1, 1.0)])
        table = psi_source_layered(net, 0, DualPoint(t=np.array([3.0]), gamma=1.0))
        assert table.horizon == 1
        assert table.a[0, 1] == pytest.approx(-3.0)
        assert table.b[0, 1] == pytest.approx(-3.0)
        assert table.a[0, 0] == -math.inf  # no one-edge walk back to the source

    def test_two_layer_triangle_aggregates_both_paths(self):
        # the direct edge costs 3, the two-edge detour 1 + 1
        net = _net(3, [0, 1, 0], [1, 2, 2], [1.0, 1.0, 3.0], [(0, 2, 1.0)])
        dp = DualPoint(t=np.array([1.0, 1.0, 3.0]), gamma=1.0)
        table = psi_source_layered(net, 0, dp, horizon=2)
        assert table.a[0, 2] == pytest.approx(-3.0)  # exactly one edge: direct only
        assert table.a[1, 2] == pytest.approx(-2.0)  # exactly two edges: the detour
        assert table.b[1, 2] == pytest.approx(np.logaddexp(-2.0, -3.0), rel=1e-14)

    def test_envelope_is_monotone_in_the_horizon(self):
        net = instances.ring_with_tail()
        table = psi_source_layered(net, 0, DualPoint(t=net.t_free, gamma=1.0), horizon=8)
        b = table.b
        for layer in range(7):
            mask = np.isfinite(b[layer])
            assert np.all(b[layer + 1, mask] >= b[layer, mask] - 1e-12)

    def test_cycles_keep_adding_walks(self):
        net = instances.ring_with_tail()
        table = psi_source_layered(net, 0, DualPoint(t=net.t_free, gamma=1.0), horizon=10)
        assert table.b[9, 3] > table.b[2, 3] + 1e-9

    def test_matches_ordered_sweep_on_acyclic_instances(self):
        net = instances.grid_3x3()
        dp = DualPoint(t=net.t_free, gamma=1.0)
        for k in range(net.n_ods):
            origin, dest = int(net.od_origin[k]), int(net.od_dest[k])
            table = psi_source_layered(net, origin, dp)
            phi = psi_sink_ordered(net, dest, dp)
            assert table.b[-1, dest] == pytest.approx(phi.values[origin], rel=1e-12)

    def test_horizon_must_be_positive(self):
        net = instances.parallel_two()
        with pytest.raises(ValueError, match="horizon"):
            psi_source_layered(net, 0, DualPoint(t=net.t_free, gamma=1.0), horizon=0)


class TestPsiTotal:
    def test_parallel_pair_closed_form(self):
        net = instances.parallel_two()
        val = psi_total(net, DualPoint(t=net.t_free, gamma=1.0))
        assert val == pytest.approx(10.0 * math.log(math.exp(-1) + math.exp(-2)), rel=1e-14)
        assert val == pytest.approx(-6.8673831248177724, rel=1e-15)

    def test_single_route_value_does_not_depend_on_gamma(self):
        net = instances.chain()
        want = -5.0 * float(net.t_free.sum())
        for gamma in (0.5, 1.0, 10.0):
            val = psi_total(net, DualPoint(t=net.t_free, gamma=gamma))
            assert val == pytest.approx(want, rel=1e-12)

    def test_small_gamma_approaches_the_shortest_path_total(self):
        net = instances.grid_3x3()
        sp_total = _dijkstra_total(net, net.t_free)
        vals = [
            psi_total(net, DualPoint(t=net.t_free, gamma=g)) for g in (1.0, 0.1, 0.01, 1e-4)
        ]
        for v in vals:  # the soft minimum never undercuts the hard one
            assert v >= -sp_total - 1e-12
        for hi, lo in zip(vals, vals[1:]):  # and tightens monotonically
            assert lo <= hi + 1e-15
        assert vals[-1] == pytest.approx(-sp_total, abs=1e-3)

    def test_threads_do_not_change_the_value(self):
        net = instances.grid_3x3()
        dp = DualPoint(t=net.t_free * 1.3, gamma=0.7)
        assert psi_total(net, dp, threads=4) == psi_total(net, dp)


class TestFlowFromDual:
    def test_parallel_pair_logit_split(self):
        net = instances.parallel_two()
        load = flow_from_dual(net, DualPoint(t=net.t_free, gamma=1.0))
        p = 1.0 / (1.0 + math.exp(-1.0))
        assert load.f == pytest.approx([10.0 * p, 10.0 * (1.0 - p)], rel=1e-12)

    def test_gamma_zero_routes_all_demand_on_the_best_edge(self):
        net = instances.parallel_two()
        load = flow_from_dual(net, DualPoint(t=np.array([2.0, 1.0]), gamma=0.0))
        assert load.f.tolist() == [0.0, 10.0]

    def test_flow_conservation(self):
        net = instances.grid_3x3()
        f = flow_from_dual(net, DualPoint(t=net.t_free * 1.2, gamma=0.8)).f
        div = np.zeros(net.n_vertices)
        np.add.at(div, net.edge_tail, f)
        np.add.at(div, net.edge_head, -f)
        want = np.zeros(net.n_vertices)
        np.add.at(want, net.od_origin, net.od_demand)
        np.add.at(want, net.od_dest, -net.od_demand)
        assert div == pytest.approx(want, abs=1e-9 * net.total_demand)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(42)
        h = 1e-6
        for net in (instances.triangle(), instances.grid_3x3()):
            for _ in range(3):
                t = net.t_free * (1.0 + rng.uniform(0.0, 1.0, size=net.n_edges))
                gamma = float(rng.uniform(0.3, 2.0))
                f = flow_from_dual(net, DualPoint(t=t, gamma=gamma)).f
                for e in range(net.n_edges):
                    tp, tm = t.copy(), t.copy()
                    tp[e] += h
                    tm[e] -= h
                    up = psi_total(net, DualPoint(t=tp, gamma=gamma))
                    down = psi_total(net, DualPoint(t=tm, gamma=gamma))
                    assert -(up - down) / (2 * h) == pytest.approx(f[e], rel=2e-5, abs=1e-7)

    def test_joint_evaluation_matches_separate_calls(self):
        net = instances.triangle()
        dp = DualPoint(t=net.t_free * 1.1, gamma=0.9)
        value, load = psi_and_flow(net, dp)
        assert value == psi_total(net, dp)
        assert np.array_equal(load.f, flow_from_dual(net, dp).f)

    def test_threads_do_not_change_the_loads(self):
        net = instances.grid_3x3()
        dp = DualPoint(t=net.t_free, gamma=0.6)
        assert np.array_equal(flow_from_dual(net, dp, threads=4).f, flow_from_dual(net, dp).f)


class TestTransitionProbabilities:
    def test_parallel_pair_logit_split(self):
        net = instances.parallel_two()
        dp = DualPoint(t=net.t_free, gamma=1.0)
        table = psi_sink_ordered(net, 1, dp)
        edges, probs = transition_probabilities(net, table, dp, 0)
        assert sorted(edges.tolist()) == [0, 1]
        assert probs.sum() == pytest.approx(1.0, abs=1e-12)
        p_first = probs[edges.tolist().index(0)]
        assert p_first == pytest.approx(1.0 / (1.0 + math.exp(-1.0)), rel=1e-12)

    def test_rejects_mismatched_gamma(self):
        net = instances.parallel_two()
        table = psi_sink_ordered(net, 1, DualPoint(t=net.t_free, gamma=1.0))
        with pytest.raises(ValueError, match="does not match"):
            transition_probabilities(net, table, DualPoint(t=net.t_free, gamma=2.0), 0)

    def test_vertex_off_the_reaching_subgraph_is_rejected(self):
        net = _net(3, [0, 1], [1, 2], [1.0, 1.0], [(0, 1, 1.0)])
        dp = DualPoint(t=np.array([1.0, 1.0]), gamma=1.0)
        table = psi_sink_ordered(net, 1, dp)
        with pytest.raises(SolverError, match="no edge toward"):
            transition_probabilities(net, table, dp, 2)


class TestSamplePath:
    def test_single_route_is_deterministic(self):
        net = instances.chain()
        rng = np.random.default_rng(0)
        dp = DualPoint(t=net.t_free, gamma=1.0)
        for _ in range(5):
            assert sample_path(net, 0, dp, rng).tolist() == [0, 1, 2]

    def test_edge_frequencies_match_the_logit_split(self):
        net = instances.parallel_two()
        dp = DualPoint(t=net.t_free, gamma=1.0)
        table = psi_sink_ordered(net, 1, dp)
        rng = np.random.default_rng(2024)
        n = 20_000
        hits = sum(
            int(sample_path(net, 0, dp, rng, potentials=table)[0] == 0) for _ in range(n)
        )
        p = 1.0 / (1.0 + math.exp(-1.0))
        sigma = math.sqrt(p * (1.0 - p) / n)
        assert abs(hits / n - p) <= 3.0 * sigma

    def test_mismatched_table_is_rejected(self):
        net = instances.parallel_two()
        dp = DualPoint(t=net.t_free, gamma=1.0)
        wrong_gamma = psi_sink_ordered(net, 1, DualPoint(t=net.t_free, gamma=2.0))
        with pytest.raises(ValueError, match="does not match"):
            sample_path(net, 0, dp, np.random.default_rng(0), potentials=wrong_gamma)

    def test_cyclic_sink_is_rejected(self):
        net = instances.ring_with_tail()
        with pytest.raises(SolverError, match="acyclic"):
            sample_path(net, 0, DualPoint(t=net.t_free, gamma=1.0), np.random.default_rng(0))


class TestStochasticGradient:
    def test_single_od_single_route_loads_the_demand(self):
        net = instances.chain()
        load = sample_stochastic_gradient(
            net, DualPoint(t=net.t_free, gamma=1.0), np.random.default_rng(0)
        )
        assert load.f.tolist() == [5.0, 5.0, 5.0]

    def test_od_pick_is_proportional_to_demand(self):
        # two disjoint routes; demands 1 and 3 -> the heavy pair in ~75% of draws
        net = Network(
            n_vertices=4,
            edge_tail=[0, 2],
            edge_head=[1, 3],
            cost=_bpr_params([1.0, 1.0]),
            od_origin=[0, 2],
            od_dest=[1, 3],
            od_demand=[1.0, 3.0],
        )
        dp = DualPoint(t=net.t_free, gamma=1.0)
        rng = np.random.default_rng(11)
        n = 4000
        heavy = 0
        for _ in range(n):
            f = sample_stochastic_gradient(net, dp, rng).f
            assert f.sum() == pytest.approx(4.0)  # the total demand, on one route
            heavy += int(f[1] > 0)
        p = 0.75
        sigma = math.sqrt(p * (1 - p) / n)
        assert abs(heavy / n - p) <= 3.0 * sigma

    def test_mean_matches_the_expected_loads(self):
        net = instances.parallel_two()
        dp = DualPoint(t=net.t_free, gamma=1.0)
        exact = flow_from_dual(net, dp).f
        rng = np.random.default_rng(5)
        n = 20_000
        draws = np.empty((n, net.n_edges))
        cache = {}
        for i in range(n):
            draws[i] = sample_stochastic_gradient(net, dp, rng, potentials=cache).f
        mean = draws.mean(axis=0)
        se = draws.std(axis=0, ddof=1) / math.sqrt(n)
        assert np.all(np.abs(mean - exact) <= 3.0 * se)
        assert set(cache) == {1}  # one table per distinct sink

    def test_per_draw_norm_respects_the_walk_bound(self):
        net = instances.grid_3x3()
        dp = DualPoint(t=net.t_free, gamma=1.0)
        rng = np.random.default_rng(9)
        cache = {}
        bound = (net.n_vertices - 1) * net.total_demand ** 2
        for _ in range(200):
            f = sample_stochastic_gradient(net, dp, rng, potentials=cache).f
            assert float(f @ f) <= bound + 1e-9


class TestGumbelIdentity:
    def test_passes_on_the_parallel_pair(self):
        net = instances.parallel_two()
        report = gumbel_check(
            net, 0, DualPoint(t=net.t_free, gamma=1.0), 20_000, np.random.default_rng(3)
        )
        assert report.passed
        assert report.expected == pytest.approx(
            math.log(math.exp(-1) + math.exp(-2)), rel=1e-12
        )

    def test_small_gamma_concentrates_on_the_best_path(self):
        net = instances.parallel_two()
        report = gumbel_check(
            net, 0, DualPoint(t=net.t_free, gamma=0.1), 20_000, np.random.default_rng(4)
        )
        assert report.passed
        assert abs(report.expected - (-1.0)) < 0.05

    def test_gamma_zero_is_rejected(self):
        net = instances.parallel_two()
        with pytest.raises(ValueError, match="gamma > 0"):
            gumbel_check(net, 0, DualPoint(t=net.t_free, gamma=0.0), 10, np.random.default_rng(0))
