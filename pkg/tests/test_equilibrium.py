import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from reference_values import SIXNODE_EQUILIBRIUM, T2_EQUILIBRIUM

from landuse_pricing.behavior import AttractionSpec, Behavior, LinkTimeSpec, attraction_eval
from landuse_pricing.equilibrium import (
    EquilibriumConfig,
    check_uniqueness,
    destination_choice_map,
    expected_time,
    location_choice_map,
    route_choice_map,
    solve_combined,
    solve_parametric_location,
    solve_parametric_traffic,
    uniqueness_conditions,
    vi_gap,
)
from landuse_pricing.errors import InfeasibleState, NotConverged, OscillationDetected, ValidationError
from landuse_pricing.network import CombinedState, enumerate_routes, make_state, random_feasible_state, validate_state
from landuse_pricing.oracle import bisect_location, kkt_residual, vertex_vi_gap


class TestChoiceMaps:
    def test_expected_time_singleton(self, t2):
        sc, routes = t2
        link_t = np.array([7.0, 1.0, 1.0, 9.0])
        assert expected_time(routes, link_t, (0, 1), 3.0) == 9.0

    def test_expected_time_pairs(self, t2):
        _, routes = t2
        # routes of OD (1,2): link 0 alone, links 1+2
        assert expected_time(routes, np.array([4.0, 2.0, 2.0, 0.0]), (0, 0), 2.0) == pytest.approx(4 - np.log(2) / 2)
        assert expected_time(routes, np.array([1.0, 1.0, 1.0, 0.0]), (0, 0), 1.0) == pytest.approx(
            1 - np.log(1 + np.exp(-1)), rel=1e-15
        )

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0, 50), min_size=1, max_size=6), st.floats(0.01, 5), st.floats(-100, 100))
    def test_expected_time_properties(self, costs, alpha, shift):
        from landuse_pricing.equilibrium import _softmin

        v = _softmin(costs, alpha)[0]
        assert v <= min(costs) + 1e-12
        assert _softmin(np.array(costs) + shift, alpha)[0] == pytest.approx(v + shift, abs=1e-9)

    def test_route_choice(self):
        assert np.allclose(route_choice_map(10.0, [3.0, 3.0], 1.0), [5.0, 5.0])
        assert not route_choice_map(0.0, [1.0, 2.0], 1.0).any()
        assert route_choice_map(10.0, [1.0, 2.0], 1.0)[0] == pytest.approx(10 / (1 + np.exp(-1)), rel=1e-15)
        with pytest.raises(ValidationError):
            route_choice_map(-1.0, [1.0], 1.0)

    def test_destination_choice(self):
        assert np.allclose(destination_choice_map(40.0, [3.0, 5.0], [1.0, 3.0], 0.5), [20.0, 20.0])
        assert destination_choice_map(7.0, [2.0], [1.0], 1.0)[0] == 7.0
        assert destination_choice_map(10.0, [1.0, 2.0], [0.0, 0.0], 1.0)[0] == pytest.approx(10 / (1 + np.exp(-1)))

    def test_location_choice(self):
        assert np.allclose(location_choice_map([2.0, 2.0], 50.0, 1.0), [25.0, 25.0])
        assert location_choice_map([1.0, 0.0], 50.0, 1.0)[0] == pytest.approx(50 * np.e / (np.e + 1))
        assert np.allclose(location_choice_map([2.0, 2.0], 50.0, 2.0), [25.0, 25.0])
        with pytest.raises(ValidationError):
            location_choice_map([1.0], 0.0, 1.0)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-30, 30), min_size=2, max_size=5), st.floats(0.01, 3), st.floats(-1e3, 1e3))
    def test_maps_on_simplex_and_shift_invariant(self, util, beta, shift):
        h = location_choice_map(util, 50.0, beta)
        assert h.sum() == pytest.approx(50.0, rel=1e-12)
        assert np.all(h >= 0)
        assert np.allclose(location_choice_map(np.array(util) + shift, 50.0, beta), h, rtol=1e-9, atol=1e-12)


class TestConfig:
    @pytest.mark.parametrize(
        "kw", [dict(tolerance=0.0), dict(step=0.0), dict(step=1.5), dict(damping="newton"), dict(max_iterations=0), dict(floor=0.0)]
    )
    def test_rejects(self, kw):
        with pytest.raises(ValidationError):
            EquilibriumConfig(**kw)


class TestParametricTraffic:
    def test_symmetric(self, s2):
        sc, routes = s2
        z, rep = solve_parametric_traffic(sc.network, routes, sc.behavior, sc.logit, [2.0, 2.0])
        assert np.allclose(z.q, [[5.0, 5.0]], atol=1e-12)
        assert rep.converged and "location" not in rep.residuals

    def test_t2_satisfies_route_and_destination_equalities(self, t2):
        sc, routes = t2
        h = T2_EQUILIBRIUM["h"]
        z, rep = solve_parametric_traffic(sc.network, routes, sc.behavior, sc.logit, h)
        # at the combined equilibrium's h, the parametric solution is the combined one
        assert np.allclose(z.f, T2_EQUILIBRIUM["f"], atol=1e-8)
        res = kkt_residual(z, sc.network, routes, sc.behavior, sc.logit, "equilibrium")
        assert res["route"] < 1e-9 and res["destination"] < 1e-9
        assert rep.vi_gap >= -1e-9 and rep.vi_gap < 1e-8
        assert validate_state(z, sc.network, routes)

    def test_infeasible_h(self, t2):
        sc, routes = t2
        with pytest.raises(InfeasibleState):
            solve_parametric_traffic(sc.network, routes, sc.behavior, sc.logit, [1.0, 1.0])


class TestParametricLocation:
    def test_identical_destinations_uniform(self, s2):
        sc, _ = s2
        h, rep = solve_parametric_location(sc.behavior, [5.0, 5.0], 4.0, sc.logit.beta)
        assert np.allclose(h, [2.0, 2.0], atol=1e-12)

    @pytest.mark.parametrize("d", [[0.0, 0.0], [3.0, 17.0], [20.0, 0.5]])
    def test_matches_bisection(self, t2, d):
        sc, _ = t2
        h, rep = solve_parametric_location(sc.behavior, d, sc.network.total_firms, sc.logit.beta)
        assert np.allclose(h, bisect_location(sc.behavior, d, sc.network.total_firms, sc.logit.beta), atol=1e-10)
        assert rep.residuals["location"] < 1e-9
        assert h.sum() == pytest.approx(sc.network.total_firms, rel=1e-14)

    def test_oscillation_detected(self):
        # plain undamped iteration on a steep firm-crowding response flips between corners
        at = AttractionSpec([0.0, 0.0], [1.0, 1.0], [1.0, 1.0], [0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [10.0, 10.0])
        beh = Behavior(LinkTimeSpec([1.0], [1.0], [1.0]), at)
        cfg = EquilibriumConfig(step=1.0, anderson=0, oscillation_window=10)
        with pytest.raises(OscillationDetected) as err:
            solve_parametric_location(beh, [1.0, 1.0], 10.0, 1.0, cfg, initial_h=[9.0, 1.0])
        assert len(err.value.trace) > 10

    def test_not_converged_carries_trace(self, sixnode):
        sc, routes = sixnode
        cfg = EquilibriumConfig(max_iterations=1, inner_max_iterations=2)
        with pytest.raises(NotConverged) as err:
            solve_combined(sc.network, routes, sc.behavior, sc.logit, cfg)
        assert err.value.trace


class TestCombined:
    def test_symmetric(self, s2):
        sc, routes = s2
        z, rep = solve_combined(sc.network, routes, sc.behavior, sc.logit, sc.config)
        assert np.allclose(z.q, [[5.0, 5.0]], atol=1e-10) and np.allclose(z.h, [2.0, 2.0], atol=1e-10)

    def test_t2_matches_reference(self, t2):
        sc, routes = t2
        z, rep = solve_combined(sc.network, routes, sc.behavior, sc.logit, sc.config)
        for key in ("f", "q", "h"):
            assert np.allclose(getattr(z, key), T2_EQUILIBRIUM[key], rtol=0, atol=1e-8)
        assert rep.vi_gap < 10 * sc.config.tolerance
        assert max(rep.residuals.values()) < sc.config.tolerance

    def test_sixnode_matches_reference(self, sixnode):
        sc, routes = sixnode
        z, rep = solve_combined(sc.network, routes, sc.behavior, sc.logit, sc.config)
        assert np.allclose(z.f, SIXNODE_EQUILIBRIUM["f"], rtol=0, atol=1e-7)
        assert np.allclose(z.h, SIXNODE_EQUILIBRIUM["h"], rtol=0, atol=1e-7)
        assert validate_state(z, sc.network, routes, tol=1e-10)

    @pytest.mark.parametrize("damping", ["msa", "fixed"])
    def test_damping_schedules_agree(self, t2, damping):
        sc, routes = t2
        # MSA is sublinear, so this run asks for less accuracy
        cfg = EquilibriumConfig(tolerance=1e-4, damping=damping, max_iterations=5000, inner_max_iterations=100000)
        z, _ = solve_combined(sc.network, routes, sc.behavior, sc.logit, cfg)
        assert np.allclose(z.h, T2_EQUILIBRIUM["h"], atol=1e-3)

    def test_random_starts_agree(self, sixnode):
        sc, routes = sixnode
        rng = np.random.default_rng(3)
        base, _ = solve_combined(sc.network, routes, sc.behavior, sc.logit, sc.config)
        for _ in range(4):
            start = random_feasible_state(sc.network, routes, rng)
            z, _ = solve_combined(sc.network, routes, sc.behavior, sc.logit, sc.config, initial=start)
            assert z.distance(base) < 1e-6


class TestViGap:
    def test_zero_at_equilibrium_positive_off_it(self, t2):
        sc, routes = t2
        z, _ = solve_combined(sc.network, routes, sc.behavior, sc.logit, sc.config)
        assert abs(vi_gap(z, sc.network, routes, sc.behavior, sc.logit)) < 1e-8
        moved = 0.1 * z.h[0]
        bumped = CombinedState(z.f, z.x, z.q, z.d, z.h + np.array([-moved, moved]))
        assert vi_gap(bumped, sc.network, routes, sc.behavior, sc.logit) > 1e-3

    def test_infeasible_state(self, t2):
        sc, routes = t2
        z = make_state(np.array([1.0, 1.0, 1.0]), np.array([5.0, 5.0]), sc.network, routes)
        with pytest.raises(InfeasibleState):
            vi_gap(z, sc.network, routes, sc.behavior, sc.logit)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.sampled_from(["t2", "sixnode"]))
    def test_matches_vertex_enumeration(self, seed, name):
        from conftest import fixture_bundle

        sc, routes = fixture_bundle(name)
        z = random_feasible_state(sc.network, routes, np.random.default_rng(seed))
        gap = vi_gap(z, sc.network, routes, sc.behavior, sc.logit)
        assert gap >= 0
        assert gap == pytest.approx(vertex_vi_gap(z, sc.network, routes, sc.behavior, sc.logit), rel=1e-10, abs=1e-9)


def violating_behavior():
    at = AttractionSpec([5.0, 5.0], [10.0, 10.0], [0.01, 0.01], [0.0, 0.0], [1.0, 1.0], [10.0, 10.0], [0.01, 0.01])
    return Behavior(LinkTimeSpec([1.0], [1.0], [1.0]), at)


class TestUniqueness:
    def test_satisfied(self):
        at = AttractionSpec([5.0], [0.1], [5.0], [0.0], [1.0], [0.1], [5.0])
        verdict = check_uniqueness(Behavior(LinkTimeSpec([1.0], [1.0], [1.0]), at), 100.0, 50.0)
        assert verdict.status == "satisfied" and not verdict.witnesses

    def test_violated_with_witness(self):
        beh = violating_behavior()
        verdict = check_uniqueness(beh, 100.0, 50.0)
        assert verdict.status == "violated" and verdict.witnesses
        for w in verdict.witnesses:
            v = attraction_eval(beh.attraction, w.destination, w.d, w.h)
            direct = v.A_d + 0.5 * v.A_h + 0.5 * v.B_d if w.condition == 1 else v.B_h + 0.5 * v.B_d + 0.5 * v.A_h
            assert w.value == pytest.approx(direct, rel=1e-15) and direct >= 0

    def test_indeterminate_on_unbounded_box(self, t2):
        sc, _ = t2
        assert check_uniqueness(sc.behavior, np.inf, 10.0).status == "indeterminate"

    @settings(max_examples=40, deadline=None)
    @given(st.floats(0, 200), st.floats(0, 50))
    def test_corners_bound_interior(self, d, h):
        from conftest import fixture_bundle

        sc, _ = fixture_bundle("sixnode")
        verdict = check_uniqueness(sc.behavior, 200.0, 50.0)
        for s, (m1, m2) in enumerate(verdict.margins):
            c1, c2 = uniqueness_conditions(sc.behavior, s, d, h)
            assert c1 <= m1 + 1e-12 and c2 <= m2 + 1e-12

    def test_fixtures_satisfy(self, any_fixture):
        sc, _ = any_fixture
        assert check_uniqueness(sc.behavior, sc.network.total_demand, sc.network.total_firms)


def test_routes_reused_across_networks_rejected(t2, sixnode):
    sc, _ = t2
    _, other_routes = sixnode
    with pytest.raises(ValidationError):
        solve_combined(sc.network, other_routes, sc.behavior, sc.logit)


def test_network_with_overlapping_origin_destination():
    from landuse_pricing.behavior import LogitParams
    from landuse_pricing.network import Network

    net = Network(("1", "2"), (("1", "2"),), ("1",), (10.0,), ("1", "2"), 4.0)
    at = AttractionSpec([5.0, 5.0], [0.5, 0.5], [0.6, 0.6], [0.0, 0.0], [2.0, 2.0], [0.2, 0.2], [0.5, 0.5])
    beh = Behavior(LinkTimeSpec([2.0], [0.1], [1.0]), at)
    routes = enumerate_routes(net)
    z, rep = solve_combined(net, routes, beh, LogitParams(1.0, 0.5, 0.5))
    # staying home costs nothing, so more trips end at node 1
    assert z.q[0, 0] > z.q[0, 1] and rep.vi_gap < 1e-8
