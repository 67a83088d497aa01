"""Tests for the scikit-learn style wrapper around the solvers."""

import numpy as np
import pytest
from sklearn.base import clone

from eqkit import instances
from eqkit.estimators import EquilibriumSolver

FIXED_POINT_PARALLEL_2 = np.array([6.7555301677790744, 3.2444698322209247])


class TestParams:
    def test_get_params_round_trip(self):
        est = EquilibriumSolver(method="path-fgm", gamma=0.5, epsilon=1e-7, seed=3)
        params = est.get_params()
        assert params["method"] == "path-fgm"
        assert params["gamma"] == 0.5
        assert params["epsilon"] == 1e-7
        assert params["seed"] == 3
        rebuilt = EquilibriumSolver(**params)
        assert rebuilt.get_params() == params

    def test_set_params(self):
        est = EquilibriumSolver()
        est.set_params(gamma=2.0, method="dual-universal")
        assert est.gamma == 2.0
        assert est.method == "dual-universal"

    def test_clone_is_unfitted_copy(self):
        est = EquilibriumSolver(method="dual-fgm", gamma=1.0, epsilon=1e-6)
        est.fit(instances.parallel_two())
        twin = clone(est)
        assert twin.get_params() == est.get_params()
        assert not hasattr(twin, "flow_")
        assert hasattr(est, "flow_")

    def test_unknown_method_rejected(self):
        est = EquilibriumSolver(method="newton")
        with pytest.raises(ValueError, match="unknown method"):
            est.fit(instances.parallel_two())

    def test_underscore_alias_accepted(self):
        est = EquilibriumSolver(method="dual_universal", gamma=1.0, epsilon=1e-6)
        est.fit(instances.parallel_two())
        np.testing.assert_allclose(est.flow_, FIXED_POINT_PARALLEL_2, atol=1e-3)


class TestFit:
    def test_dual_fgm(self):
        est = EquilibriumSolver(method="dual-fgm", gamma=1.0, epsilon=1e-7)
        out = est.fit(instances.parallel_two())
        assert out is est
        np.testing.assert_allclose(est.flow_, FIXED_POINT_PARALLEL_2, atol=1e-4)
        assert est.converged_
        assert 0.0 <= est.gap_ <= 1e-7
        assert est.n_iter_ >= 1
        assert est.certificate_ is not None
        assert est.certificate_.method == "dual_fgm"
        assert np.all(est.time_ >= instances.parallel_two().cost.t_free)

    def test_dual_universal(self):
        est = EquilibriumSolver(method="dual-universal", gamma=1.0, epsilon=1e-8)
        est.fit(instances.parallel_two())
        np.testing.assert_allclose(est.flow_, FIXED_POINT_PARALLEL_2, atol=5e-5)
        # at the optimum the dual point is the travel-time vector of the loads
        from eqkit.network import edge_cost

        np.testing.assert_allclose(est.time_, edge_cost(instances.parallel_two().cost, est.flow_), atol=1e-3)

    def test_dual_smd_gamma_zero(self):
        est = EquilibriumSolver(method="dual-smd", gamma=0.0, epsilon=1e-6, seed=1)
        est.fit(instances.parallel_two_constant())
        np.testing.assert_allclose(est.flow_, [10.0, 0.0], atol=1e-9)
        assert est.converged_
        assert est.gap_ == 0.0

    def test_dual_smd_seed_controls_run(self):
        net = instances.parallel_two()
        a = EquilibriumSolver(method="dual-smd", gamma=0.5, epsilon=1e-12, max_iters=400, seed=7).fit(net)
        b = EquilibriumSolver(method="dual-smd", gamma=0.5, epsilon=1e-12, max_iters=400, seed=7).fit(net)
        c = EquilibriumSolver(method="dual-smd", gamma=0.5, epsilon=1e-12, max_iters=400, seed=8).fit(net)
        np.testing.assert_array_equal(a.flow_, b.flow_)
        assert np.any(a.flow_ != c.flow_)

    def test_path_fgm(self):
        est = EquilibriumSolver(method="path-fgm", gamma=1.0, epsilon=1e-8)
        est.fit(instances.parallel_two())
        np.testing.assert_allclose(est.flow_, FIXED_POINT_PARALLEL_2, atol=2e-5)
        assert est.converged_
        assert est.certificate_.method == "path_fgm"
        flow, cert = est.result_
        np.testing.assert_array_equal(flow.edge_flows(), est.flow_)

    def test_path_penalty(self):
        est = EquilibriumSolver(method="path-penalty", gamma=1.0, epsilon=2e-3, lam=5e-5)
        est.fit(instances.parallel_two())
        assert est.converged_
        assert est.certificate_ is None
        assert est.gap_ == est.result_.residual <= 2e-3
        np.testing.assert_allclose(est.flow_, FIXED_POINT_PARALLEL_2, atol=0.01)

    def test_max_routes_cap_propagates(self):
        est = EquilibriumSolver(method="path-fgm", gamma=1.0, epsilon=1e-6, max_routes=5)
        from eqkit.smoothing import SolverError

        with pytest.raises(SolverError, match="exceeds 5 routes"):
            est.fit(instances.grid_3x3_uniform())

    def test_methods_agree_on_triangle(self):
        net = instances.triangle()
        flows = {}
        for method, eps in (("dual-fgm", 1e-7), ("dual-universal", 1e-8), ("path-fgm", 1e-8)):
            flows[method] = EquilibriumSolver(method=method, gamma=0.5, epsilon=eps).fit(net).flow_
        np.testing.assert_allclose(flows["dual-fgm"], flows["dual-universal"], atol=5e-4)
        np.testing.assert_allclose(flows["path-fgm"], flows["dual-universal"], atol=5e-4)
