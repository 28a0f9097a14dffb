import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from landuse_pricing.errors import DimensionMismatch, RouteLimitExceeded, Unreachable, ValidationError
from landuse_pricing.network import (
    CombinedState,
    Network,
    enumerate_routes,
    make_state,
    project_state,
    random_feasible_state,
    validate_state,
)
from landuse_pricing.oracle import brute_force_routes


def net(nodes, links, origins=("1",), demand=(10.0,), dests=("4",), T=5.0):
    return Network(tuple(nodes), tuple(links), tuple(origins), tuple(demand), tuple(dests), T)


class TestNetworkValidation:
    def test_coerces_identifiers(self):
        n = Network((1, 2), ((1, 2),), (1,), (3,), (2,), 4)
        assert n.nodes == ("1", "2") and n.links == (("1", "2"),)
        assert n.total_firms == 4.0 and n.total_demand == 3.0

    @pytest.mark.parametrize(
        "kwargs, match",
        [
            (dict(nodes=("1", "1", "4")), "duplicate node"),
            (dict(links=(("1", "4"), ("1", "4"))), "parallel"),
            (dict(links=(("1", "9"),)), "unknown node"),
            (dict(links=(("1", "1"), ("1", "4"))), "self-loop"),
            (dict(demand=(-1.0,)), "nonnegative"),
            (dict(demand=(0.0,)), "positive"),
            (dict(T=0.0), "firms"),
            (dict(dests=("7",)), "not a declared node"),
        ],
    )
    def test_rejects_invalid(self, kwargs, match):
        base = dict(nodes=("1", "4"), links=(("1", "4"),))
        base.update(kwargs)
        with pytest.raises(ValidationError, match=match):
            net(**base)

    def test_demand_length_mismatch(self):
        with pytest.raises(DimensionMismatch):
            net(("1", "4"), [("1", "4")], demand=(1.0, 2.0))


class TestEnumerateRoutes:
    def test_single_link(self):
        routes = enumerate_routes(net(("1", "4"), [("1", "4")]))
        assert routes.route_nodes == (("1", "4"),)
        assert list(routes.links_of(0)) == [0]

    def test_diamond(self):
        routes = enumerate_routes(net("1234", [("1", "2"), ("2", "4"), ("1", "3"), ("3", "4")]))
        assert routes.route_nodes == (("1", "2", "4"), ("1", "3", "4"))
        assert [list(routes.links_of(k)) for k in range(2)] == [[0, 1], [2, 3]]

    def test_t2_routes(self, t2):
        _, routes = t2
        assert routes.route_nodes == (("1", "2"), ("1", "4", "2"), ("1", "3"))
        assert list(routes.od_ptr) == [0, 2, 3]

    def test_sixnode_matches_bruteforce(self, sixnode):
        sc, routes = sixnode
        oracle = brute_force_routes(sc.network)
        for r, o in enumerate(sc.network.origins):
            for s, d in enumerate(sc.network.destinations):
                got = [routes.route_nodes[k] for k in routes.routes_of(r, s)]
                assert got == oracle[(o, d)]
        assert routes.n_routes == 8

    def test_deterministic(self, sixnode):
        sc, routes = sixnode
        again = enumerate_routes(sc.network)
        assert again.route_nodes == routes.route_nodes
        assert np.array_equal(again.route_links, routes.route_links)

    def test_route_limit(self):
        n = net("1234", [("1", "2"), ("2", "4"), ("1", "3"), ("3", "4")])
        with pytest.raises(RouteLimitExceeded) as err:
            enumerate_routes(n, max_routes=1)
        assert err.value.od == ("1", "4")

    def test_unreachable(self):
        with pytest.raises(Unreachable):
            enumerate_routes(net(("1", "4", "5"), [("1", "4")], dests=("4", "5")))

    def test_origin_may_be_destination(self):
        routes = enumerate_routes(net(("1", "4"), [("1", "4")], dests=("1", "4")))
        assert routes.route_nodes == (("1",), ("1", "4"))
        assert len(routes.links_of(0)) == 0

    def test_incidence(self, t2):
        _, routes = t2
        delta = routes.incidence()
        for k in range(routes.n_routes):
            assert set(np.flatnonzero(delta[:, k])) == set(routes.links_of(k))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(min_value=3, max_value=6).flatmap(
        lambda n: st.tuples(
            st.just(n),
            st.sets(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)).filter(lambda e: e[0] != e[1]), max_size=n * (n - 1)),
        )
    ))
    def test_random_graphs_match_bruteforce(self, graph):
        n, edges = graph
        nodes = [str(i) for i in range(n)]
        links = sorted((str(a), str(b)) for a, b in edges) + [("0", str(n - 1))] * ((0, n - 1) not in edges)
        network = net(nodes, links, origins=("0",), dests=(str(n - 1),))
        routes = enumerate_routes(network)
        assert list(routes.route_nodes) == brute_force_routes(network)[("0", str(n - 1))]
        for k, path in enumerate(routes.route_nodes):
            assert len(set(path)) == len(path)
            assert [network.links[a] for a in routes.links_of(k)] == list(zip(path, path[1:]))


class TestStates:
    def test_zero_flow(self, t2):
        sc, routes = t2
        x, q, d = project_state(np.zeros(routes.n_routes), sc.network, routes)
        assert not x.any() and not q.any() and not d.any()

    def test_shared_link_additivity(self):
        # routes 1-2-4 and 1-2-3-4 share link 1->2
        n = net("1234", [("1", "2"), ("2", "4"), ("2", "3"), ("3", "4")])
        routes = enumerate_routes(n)
        x, _, _ = project_state(np.array([1.0, 2.0]), n, routes)
        assert x[0] == 3.0

    def test_random_flows_match_direct_summation(self, t2, rng):
        sc, routes = t2
        f = rng.uniform(0, 5, routes.n_routes)
        x, q, d = project_state(f, sc.network, routes)
        # t2: routes [1-2], [1-4-2], [1-3]; links 1->2, 1->4, 4->2, 1->3
        assert np.allclose(x, [f[0], f[1], f[1], f[2]], rtol=0, atol=1e-14)
        assert np.allclose(q, [[f[0] + f[1], f[2]]], rtol=0, atol=1e-14)
        assert np.allclose(d, [f[0] + f[1], f[2]], rtol=0, atol=1e-14)

    def test_dimension_mismatch(self, t2):
        sc, routes = t2
        with pytest.raises(DimensionMismatch):
            project_state(np.ones(2), sc.network, routes)

    def test_valid_and_invalid(self, t2, rng):
        sc, routes = t2
        z = random_feasible_state(sc.network, routes, rng)
        assert validate_state(z, sc.network, routes)
        bad = CombinedState(z.f, z.x, z.q, z.d, z.h + np.array([1.0, 0.0]))
        check = validate_state(bad, sc.network, routes)
        assert not check and check.residuals["firm_total"] == pytest.approx(1.0)
        neg = make_state(z.f * np.array([1, 1, -1]), z.h, sc.network, routes)
        assert validate_state(neg, sc.network, routes).residuals["path_nonnegativity"] > 0

    def test_wrong_shape_is_invalid(self, t2):
        sc, routes = t2
        z = CombinedState(np.ones(2), np.ones(4), np.ones((1, 2)), np.ones(2), np.ones(2))
        assert not validate_state(z, sc.network, routes)

    def test_roundtrip_dict(self, sixnode, rng):
        sc, routes = sixnode
        z = random_feasible_state(sc.network, routes, rng)
        back = CombinedState.from_dict(z.as_dict())
        assert back.distance(z) == 0.0

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_feasible_state_invariants(self, seed):
        from conftest import fixture_bundle

        sc, routes = fixture_bundle("sixnode")
        z = random_feasible_state(sc.network, routes, np.random.default_rng(seed))
        assert validate_state(z, sc.network, routes)
        lengths = np.diff(routes.route_ptr)
        assert z.x.sum() == pytest.approx(float(z.f @ lengths), rel=1e-12)
        assert z.d.sum() == pytest.approx(sc.network.total_demand, rel=1e-12)


def test_origin_may_also_be_a_destination():
    from landuse_pricing.behavior import AttractionSpec, Behavior, LinkTimeSpec, LogitParams
    from landuse_pricing.equilibrium import solve_combined

    n = net(("1", "2"), (("1", "2"),), dests=("1", "2"))
    routes = enumerate_routes(n)
    assert [list(routes.links_of(i)) for i in range(routes.n_routes)] == [[], [0]]
    beh = Behavior(LinkTimeSpec([1.0], [0.1], [1.0]), AttractionSpec([3.0] * 2, [0.5] * 2, [0.5] * 2, [0.0] * 2, [1.0] * 2, [0.2] * 2, [0.5] * 2))
    z, rep = solve_combined(n, routes, beh, LogitParams(1.0, 1.0, 0.5))
    assert rep.converged and validate_state(z, n, routes)
    # staying home costs no travel time, so the local center draws more trips
    assert z.q[0, 0] > z.q[0, 1]
