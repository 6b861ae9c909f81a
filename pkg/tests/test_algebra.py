import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from conftest import random_dag
from ngev_assign.algebra import (Logit, Model, Ngev, NgevParams, ShortestPath, bellman_update, expected_min_cost,
                                 fixed_point_residual, make_params, markov_solve, power_series, solve_mu)
from ngev_assign.errors import ValidationError
from ngev_assign.network import DemandTable, Network, generate_grid, sp_distance_table

finite = st.floats(-50.0, 50.0, allow_nan=False)
extended = st.one_of(finite, st.just(math.inf))

SEMIRINGS = [ShortestPath(), Logit(0.7), Ngev(np.array([2.5]), np.array([1.0]))]


def _close(a, b):
    if math.isinf(a) or math.isinf(b):
        return a == b
    return math.isclose(a, b, rel_tol=1e-12, abs_tol=1e-11)


class TestSemiringLaws:
    @pytest.mark.parametrize("ring", SEMIRINGS, ids=["sp", "logit", "ngev"])
    @given(x=extended, y=extended, z=extended)
    def test_oplus_commutative_associative(self, ring, x, y, z):
        assert _close(ring.oplus(x, y, 0), ring.oplus(y, x, 0))
        assert _close(ring.oplus(ring.oplus(x, y, 0), z, 0), ring.oplus(x, ring.oplus(y, z, 0), 0))

    @pytest.mark.parametrize("ring", SEMIRINGS, ids=["sp", "logit", "ngev"])
    @given(x=extended, y=extended, z=extended)
    def test_otimes_distributes_over_oplus(self, ring, x, y, z):
        assume(not math.isinf(x))
        left = ring.otimes(x, ring.oplus(y, z, 0), 0)
        right = ring.oplus(ring.otimes(x, y, 0), ring.otimes(x, z, 0), 0)
        assert _close(left, right)

    @pytest.mark.parametrize("ring", SEMIRINGS, ids=["sp", "logit", "ngev"])
    @given(x=extended)
    def test_identities(self, ring, x):
        assert ring.oplus(x, ring.zero, 0) == x
        assert ring.otimes(x, ring.unit, 0) == x
        assert ring.otimes(x, ring.zero, 0) == ring.zero

    @given(x=finite, y=finite)
    def test_soft_min_bounds(self, x, y):
        ring = Logit(1.3)
        v = ring.oplus(x, y)
        assert v <= min(x, y) + 1e-12
        assert v >= min(x, y) - math.log(2) / 1.3 - 1e-12

    def test_large_scale_does_not_overflow(self):
        assert Logit(1e3).oplus(0.0, 1e3) == pytest.approx(0.0)
        assert Logit(1e3).oplus(5.0, 5.0) == pytest.approx(5.0 - math.log(2) / 1e3)

    def test_rejects_nonpositive_scales(self):
        with pytest.raises(ValidationError):
            Logit(0.0)
        with pytest.raises(ValidationError):
            Ngev(np.array([1.0, -1.0]), np.ones(1))


def _two_route():
    # o=0, a=1, b=2, d=3
    return Network.from_links(4, [(0, 1), (0, 2), (1, 3), (2, 3)], np.full(4, 0.5))


class TestExpectedMinCost:
    def test_two_route_logit(self):
        net = _two_route()
        mu = expected_min_cost(net, net.free_flow_cost, Logit(1.0), 3)
        assert mu[0] == pytest.approx(1.0 - math.log(2.0), abs=1e-12)

    def test_two_route_ngev_half_weights(self):
        net = _two_route()
        ring = Ngev(np.ones(4), np.array([0.5, 0.5, 1.0, 1.0]))
        mu = expected_min_cost(net, net.free_flow_cost, ring, 3)
        assert mu[0] == pytest.approx(1.0, abs=1e-12)

    def test_shortest_path_matches_dijkstra(self, cyclic):
        net, _ = cyclic
        mu = expected_min_cost(net, net.free_flow_cost, ShortestPath(), 8)
        np.testing.assert_allclose(mu, sp_distance_table(net, net.free_flow_cost, [8])[0])

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(3, 30), st.floats(0.2, 3.0))
    def test_logit_reduction(self, seed, n, theta):
        net, _ = random_dag(np.random.default_rng(seed), n)
        d = n - 1
        a = expected_min_cost(net, net.free_flow_cost, Ngev(np.full(n, theta), np.ones(net.n_links)), d)
        b = expected_min_cost(net, net.free_flow_cost, Logit(theta), d)
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)

    def test_logit_matches_power_series_on_cyclic_network(self, cyclic):
        net, _ = cyclic
        mu = expected_min_cost(net, net.free_flow_cost, Logit(1.0), 8)
        series = power_series(net, net.free_flow_cost, Logit(1.0), 8, terms=400)
        np.testing.assert_allclose(mu, series, rtol=0, atol=1e-10)

    def test_shortest_path_limit(self, cyclic):
        net, _ = cyclic
        D = sp_distance_table(net, net.free_flow_cost, [8])[0]
        prev = None
        for theta in (1.0, 10.0, 100.0, 1000.0):
            mu = expected_min_cost(net, net.free_flow_cost, Logit(theta), 8)
            assert np.all(mu <= D + 1e-12)
            if prev is not None:
                assert np.all(mu >= prev - 1e-12)
            prev = mu
        # at most ten acyclic paths leave any node of the example
        assert np.max(D - prev) <= math.log(10.0) / 1000.0

    @pytest.mark.parametrize("model", ["model2", "model3", "model4"])
    def test_fixed_point_residual(self, sf, model):
        net, dem = sf
        p = make_params(model, net, dem)
        sol = solve_mu(net, net.free_flow_cost, p.theta, p.alpha, p.dest)
        for r in range(0, p.n_rows, max(1, p.n_rows // 7)):
            res = fixed_point_residual(net, net.free_flow_cost, p.theta[r], p.alpha[r], p.dest[r], sol.mu[r])
            assert np.nanmax(np.abs(res)) <= 1e-9

    def test_newton_and_jacobi_agree(self, sf):
        net, dem = sf
        p = make_params("model3", net, dem)
        a = solve_mu(net, net.free_flow_cost, p.theta, p.alpha, p.dest, method="newton", tol=1e-12)
        b = solve_mu(net, net.free_flow_cost, p.theta, p.alpha, p.dest, method="jacobi", tol=1e-12)
        np.testing.assert_allclose(a.mu, b.mu, rtol=0, atol=1e-9)

    def test_generic_weights_match_direct_recursion(self, cyclic):
        net, _ = cyclic
        rng = np.random.default_rng(3)
        ring = Ngev(rng.uniform(0.5, 2.0, 9), rng.uniform(0.2, 1.0, net.n_links))
        mu = expected_min_cost(net, net.free_flow_cost, ring, 8, tol=1e-13)
        np.testing.assert_allclose(bellman_update(net, net.free_flow_cost, ring, 8, mu), mu, rtol=0, atol=1e-12)

    def test_unreachable_nodes_stay_infinite(self):
        net = Network.from_links(3, [(0, 1)], [1.0])
        mu = expected_min_cost(net, net.free_flow_cost, Logit(1.0), 1)
        assert mu[0] == pytest.approx(1.0) and np.isinf(mu[2])

    def test_warm_start_gives_same_answer(self, sf):
        net, dem = sf
        p = make_params("model3", net, dem)
        cold = solve_mu(net, net.free_flow_cost, p.theta, p.alpha, p.dest)
        warm = solve_mu(net, 1.3 * net.free_flow_cost, p.theta, p.alpha, p.dest, init=cold.mu)
        ref = solve_mu(net, 1.3 * net.free_flow_cost, p.theta, p.alpha, p.dest)
        np.testing.assert_allclose(warm.mu, ref.mu, rtol=0, atol=1e-9)


class TestModelParameters:
    def test_model3_scale_at_distance_three(self):
        net = Network.from_links(4, [(0, 1), (1, 2), (2, 3)], [1.0, 1.0, 1.0])
        dem = DemandTable.from_pairs(4, {(0, 3): 1.0})
        p = make_params(Model.MODEL3, net, dem)
        assert p.theta[0, 0] == pytest.approx(math.pi / 3.0)
        assert p.theta[0, 3] == 1.0

    def test_model2_is_od_specific(self, sf):
        net, dem = sf
        p = make_params("model2", net, dem)
        assert p.od_specific and p.n_rows == len(dem.od_pairs)
        D = sp_distance_table(net, net.free_flow_cost, p.dest)
        for r in range(0, p.n_rows, 50):
            o = p.origin[r]
            assert p.theta[r, o] == pytest.approx(1.0)
            i = (o + 1) % net.n_nodes
            if i != p.dest[r]:
                assert p.theta[r, i] == pytest.approx(D[r, o] / D[r, i])

    def test_model1_is_logit(self, sf):
        net, dem = sf
        p = make_params("model1", net, dem)
        assert np.all(p.theta == 1.0) and np.all(p.alpha == 1.0)

    def test_allocation_weights_sum_to_one(self, sf):
        net, dem = sf
        p = make_params("model4", net, dem)
        np.testing.assert_allclose(p.allocation_sums(net)[0], 1.0)

    def test_parse(self):
        assert Model.parse("3") is Model.MODEL3
        assert Model.parse("Model 2") is Model.MODEL2
        with pytest.raises(ValidationError):
            Model.parse("model9")

    def test_params_validate_shapes(self):
        with pytest.raises(ValidationError):
            NgevParams([0], [[0.0, 1.0]], [[1.0]])


class TestMarkovSolve:
    def test_dense_and_sparse_paths_agree(self):
        net, dem = generate_grid(2, 1.0)
        assert net.n_nodes > 64
        p = make_params("model3", net, dem)
        sol = solve_mu(net, net.free_flow_cost, p.theta, p.alpha, p.dest)
        sparse = markov_solve(net, sol.prob, dem.flows, transpose=True)
        n = net.n_nodes
        for r in range(p.n_rows):
            A = np.eye(n)
            np.subtract.at(A, (net.head, net.tail), sol.prob[r])
            np.testing.assert_allclose(sparse[r], np.linalg.solve(A, dem.flows[r]), rtol=1e-10, atol=1e-9)
