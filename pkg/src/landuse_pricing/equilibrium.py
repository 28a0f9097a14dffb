"""Logit choice maps and fixed-point solvers for the combined traveler/firm equilibrium.

Travelers pick a destination (logit, dispersion gamma, on attraction minus
expected travel time) and then a route (logit, dispersion alpha, on route
time). Firms pick a business center (logit, dispersion beta, on business
attraction). The combined equilibrium is solved by diagonalization: an inner
traffic equilibrium for fixed firm locations, an inner location equilibrium for
fixed trip ends, and an outer damped/Anderson-accelerated update of the firm
distribution.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernels as K
from .behavior import Behavior, LogitParams
from .errors import InfeasibleState, NotConverged, OscillationDetected, ValidationError
from .network import CombinedState, Network, RouteSet, make_state, project_state

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EquilibriumConfig:
    tolerance: float = 1e-10
    max_iterations: int = 500
    inner_max_iterations: int = 5000
    damping: str = "fixed"
    step: float = 0.5
    anderson: int = 6
    floor: float = 1e-12
    oscillation_window: int = 100

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValidationError("tolerance must be positive")
        if not 0 < self.step <= 1:
            raise ValidationError("damping step must lie in (0, 1]")
        if self.damping not in ("fixed", "msa"):
            raise ValidationError(f"unknown damping schedule {self.damping!r}")
        if self.max_iterations < 1 or self.inner_max_iterations < 1:
            raise ValidationError("iteration limits must be positive")
        if not self.floor > 0:
            raise ValidationError("flow floor must be positive")


@dataclass
class GapReport:
    vi_gap: float
    residuals: dict[str, float]
    iterations: int
    converged: bool
    trace: list[float] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values())


# -- cost models ---------------------------------------------------------------


@dataclass(frozen=True)
class CostModel:
    """The functions travelers and firms respond to.

    The untolled equilibrium, the externality-adjusted systems and equilibria
    under posted prices differ only in these three callables.
    """

    name: str
    link_cost: Callable[[np.ndarray], np.ndarray]
    trip_utility: Callable[[np.ndarray, np.ndarray], np.ndarray]
    firm_utility: Callable[[np.ndarray, np.ndarray], np.ndarray]


def untolled_model(behavior: Behavior) -> CostModel:
    att = behavior.attraction
    return CostModel("equilibrium", behavior.links.time, att.trip, att.business)


def road_pricing_model(behavior: Behavior) -> CostModel:
    """Travelers see their own externalities (t + x t', A + d A_d); firms are untouched."""
    lt, att = behavior.links, behavior.attraction

    def trip(d, h):
        av = att.evaluate(d, h)
        return av.A + d * av.A_d

    return CostModel("road-pricing", lambda x: lt.time(x) + lt.marginal(x), trip, att.business)


def system_optimum_model(behavior: Behavior) -> CostModel:
    """Fully adjusted functions; their equilibrium is a stationary point of the total social cost."""
    lt, att = behavior.links, behavior.attraction

    def trip(d, h):
        av = att.evaluate(d, h)
        return av.A + d * av.A_d + h * av.B_d

    def firm(d, h):
        av = att.evaluate(d, h)
        return av.B + d * av.A_h + h * av.B_h

    return CostModel("system-optimum", lambda x: lt.time(x) + lt.marginal(x), trip, firm)


def posted_price_model(behavior: Behavior, link_toll, entrance_fee, business_tax) -> CostModel:
    """Untolled behavior plus fixed per-unit prices (negative fee or tax = subsidy)."""
    lt, att = behavior.links, behavior.attraction
    toll = np.asarray(link_toll, dtype=float)
    fee = np.asarray(entrance_fee, dtype=float)
    tax = np.asarray(business_tax, dtype=float)
    return CostModel(
        "posted-prices",
        lambda x: lt.time(x) + toll,
        lambda d, h: att.trip(d, h) - fee,
        lambda d, h: att.business(d, h) - tax,
    )


# -- elementary choice maps -------------------------------------------------------


def _softmin(values, theta):
    values = np.asarray(values, dtype=float)
    low = values.min()
    e = np.exp(-theta * (values - low))
    total = e.sum()
    return low - np.log(total) / theta, e / total


def expected_time(routes: RouteSet, link_times, od: tuple[int, int], alpha: float) -> float:
    """Logit expected travel time of OD pair ``od = (r, s)`` (a smoothed minimum route time)."""
    link_times = np.asarray(link_times, dtype=float)
    costs = [link_times[routes.links_of(k)].sum() for k in routes.routes_of(*od)]
    return float(_softmin(costs, alpha)[0])


def route_choice_map(q_rs: float, route_costs, alpha: float) -> np.ndarray:
    if q_rs < 0:
        raise ValidationError("OD demand must be nonnegative")
    return q_rs * _softmin(route_costs, alpha)[1]


def destination_choice_map(origin_demand: float, expected_times, attractions, gamma: float) -> np.ndarray:
    if origin_demand < 0:
        raise ValidationError("origin demand must be nonnegative")
    gen = np.asarray(expected_times, dtype=float) - np.asarray(attractions, dtype=float)
    return origin_demand * _softmin(gen, gamma)[1]


def location_choice_map(business_attraction, total_firms: float, beta: float) -> np.ndarray:
    if not total_firms > 0:
        raise ValidationError("total number of firms must be positive")
    return total_firms * _softmin(-np.asarray(business_attraction, dtype=float), beta)[1]


# -- fixed-point machinery ------------------------------------------------------------


class _Anderson:
    """Type-II Anderson mixing on top of a damped fixed-point step."""

    def __init__(self, memory: int):
        self.memory = memory
        self.reset()

    def reset(self):
        self._dx: list[np.ndarray] = []
        self._dr: list[np.ndarray] = []
        self._x = None
        self._r = None

    def step(self, x: np.ndarray, gx: np.ndarray, lam: float) -> np.ndarray:
        r = gx - x
        if self._x is not None and self.memory > 0:
            self._dx.append(x - self._x)
            self._dr.append(r - self._r)
            if len(self._dx) > self.memory:
                del self._dx[0], self._dr[0]
        self._x, self._r = x, r
        if not self._dx:
            return x + lam * r
        dx = np.column_stack(self._dx)
        dr = np.column_stack(self._dr)
        coef = np.linalg.lstsq(dr, r, rcond=1e-12)[0]
        return x + lam * r - (dx + lam * dr) @ coef


def _relative_residual(x, gx) -> float:
    scale = max(1.0, float(np.max(np.abs(x), initial=0.0)))
    return float(np.max(np.abs(gx - x), initial=0.0)) / scale


def _fixed_point(
    mapping: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    config: EquilibriumConfig,
    max_iterations: int,
    renormalize: Callable[[np.ndarray], np.ndarray],
    label: str,
    tolerance: float | None = None,
    residual: Callable[[np.ndarray, np.ndarray], float] | None = None,
):
    """Iterate ``x <- x + step * (mapping(x) - x)`` until the relative residual drops below tolerance.

    Fixed damping is combined with Anderson mixing; extrapolated iterates that
    leave the nonnegative orthant are replaced by the plain damped step. MSA
    damping (step 1/n) runs without mixing. Once below tolerance, up to two
    extra steps are taken while they still gain an order of magnitude.
    """
    tol = config.tolerance if tolerance is None else tolerance
    residual = residual or (lambda x, gx: _relative_residual(x, gx))
    x = renormalize(np.asarray(x0, dtype=float).copy())
    lam = config.step
    mixer = _Anderson(config.anderson if config.damping == "fixed" else 0)
    trace: list[float] = []
    best, since_best, prev = np.inf, 0, np.inf
    polished, polish_left = None, 2
    for n in range(1, max_iterations + 1):
        gx = mapping(x)
        res = residual(x, gx)
        trace.append(res)
        if not np.isfinite(res):
            raise NotConverged(f"{label}: non-finite residual at iteration {n}", trace)
        if res < tol:
            if polished is not None and res >= polished[2] * 0.1:
                # polishing stalled at round-off; keep the better point
                return (x, gx, trace) if res < polished[2] else (polished[0], polished[1], trace)
            polished = (x, gx, res)
            if len(trace) > 1 and polish_left > 0:
                polish_left -= 1
            else:
                return x, gx, trace
        if res < best * (1 - 1e-3):
            best, since_best = res, 0
        else:
            since_best += 1
            if since_best > config.oscillation_window:
                raise OscillationDetected(
                    f"{label}: residual has not decreased for {config.oscillation_window} iterations (best {best:.3e})",
                    trace,
                )
        if config.damping == "msa":
            nxt = x + (gx - x) / n
        else:
            if res > 2.0 * prev and lam > 1.0 / 64:
                lam *= 0.5
                mixer.reset()
            nxt = mixer.step(x, gx, lam)
            if not (np.all(np.isfinite(nxt)) and np.all(nxt >= 0)):
                mixer.reset()
                nxt = x + lam * (gx - x)
        prev = res
        x = renormalize(nxt)
    if polished is not None:
        return polished[0], polished[1], trace
    raise NotConverged(f"{label}: no convergence in {max_iterations} iterations (residual {trace[-1]:.3e})", trace)


# -- problem wrapper -----------------------------------------------------------------


class Problem:
    """Arrays and maps shared by every solver for one (network, model, logit) triple."""

    def __init__(self, network: Network, routes: RouteSet, model: CostModel, logit: LogitParams):
        if routes.n_origins != network.n_origins or routes.n_links != network.n_links:
            raise ValidationError("route set does not belong to this network")
        self.network = network
        self.routes = routes
        self.model = model
        self.logit = logit
        self.demand = np.asarray(network.demand, dtype=float)
        self.T = network.total_firms
        self.nD = network.n_destinations
        self.route_ptr = np.ascontiguousarray(routes.route_ptr, dtype=np.int64)
        self.route_links = np.ascontiguousarray(routes.route_links, dtype=np.int64)
        self.od_ptr = np.ascontiguousarray(routes.od_ptr, dtype=np.int64)
        self.origin_ptr = np.ascontiguousarray(routes.origin_ptr, dtype=np.int64)
        self.all_ptr = np.array([0, self.nD], dtype=np.int64)

    # f -> (x, q_flat, d)
    def loads(self, f):
        x = K.link_loads(f, self.route_ptr, self.route_links, self.network.n_links)
        q = K.segment_sums(f, self.od_ptr)
        return x, q, q.reshape(-1, self.nD).sum(axis=0)

    def traffic_map(self, f, h):
        x, _, d = self.loads(f)
        x = np.maximum(x, 0.0)
        return K.nested_logit(
            np.ascontiguousarray(self.model.link_cost(x), dtype=float),
            np.ascontiguousarray(self.model.trip_utility(d, h), dtype=float),
            self.demand,
            self.route_ptr,
            self.route_links,
            self.od_ptr,
            self.logit.alpha,
            self.logit.gamma,
        )[3]

    def location_map(self, d, h):
        util = np.ascontiguousarray(-self.model.firm_utility(d, h), dtype=float)
        return self.T * K.segment_softmin(util, self.all_ptr, self.logit.beta)[1]

    def renormalize_f(self, f):
        totals = K.segment_sums(f, self.origin_ptr)
        scale = np.divide(self.demand, totals, out=np.zeros_like(totals), where=totals > 0)
        return f * np.repeat(scale, np.diff(self.origin_ptr))

    def renormalize_h(self, h):
        return h * (self.T / h.sum())

    def initial_f(self):
        counts = np.diff(self.od_ptr)
        q = np.repeat(self.demand / self.nD, self.nD)
        return np.repeat(q / counts, counts)

    def initial_h(self):
        return np.full(self.nD, self.T / self.nD)

    def state(self, f, h) -> CombinedState:
        return make_state(f, h, self.network, self.routes)


# -- residuals and gap ------------------------------------------------------------


def logit_residuals(state: CombinedState, problem: Problem) -> dict[str, float]:
    """Sup-norm deviation of ``state`` from the three logit equalities of ``problem.model``."""
    p = problem
    f, x, q, d, h = state
    t = np.ascontiguousarray(p.model.link_cost(np.maximum(x, 0.0)), dtype=float)
    A = np.ascontiguousarray(p.model.trip_utility(d, h), dtype=float)
    c = K.route_costs(t, p.route_ptr, p.route_links)
    v, share = K.segment_softmin(c, p.od_ptr, p.logit.alpha)
    q_flat = np.asarray(q, dtype=float).reshape(-1)
    route = f - share * np.repeat(q_flat, np.diff(p.od_ptr))
    dest = np.concatenate(
        [destination_choice_map(o, v[r * p.nD : (r + 1) * p.nD], A, p.logit.gamma) for r, o in enumerate(p.demand)]
    ) - q_flat
    loc = p.location_map(d, h) - h
    return {
        "route": float(np.max(np.abs(route))),
        "destination": float(np.max(np.abs(dest))),
        "location": float(np.max(np.abs(loc))),
    }


def vi_gap(
    state: CombinedState,
    network: Network,
    routes: RouteSet,
    behavior: Behavior,
    logit: LogitParams,
    model: CostModel | None = None,
    floor: float = 1e-12,
    tol: float = 1e-9,
) -> float:
    """Gap function ``max_{z' feasible} Psi(z)^T (z - z')`` of the combined VI.

    ``Psi(z)^T z'`` is linear in the path flows and firm counts of ``z'``, so
    the minimization over the feasible set splits into one simplex per origin (all of
    its routes to all destinations) plus the firm simplex, each attained at the
    best vertex. ``model`` swaps in adjusted or tolled functions.
    """
    model = model or untolled_model(behavior)
    p = Problem(network, routes, model, logit)
    f, x, q, d, h = (np.asarray(a, dtype=float) for a in state)
    check = network_feasibility(state, network, routes)
    if check > tol:
        raise InfeasibleState(f"state is infeasible by {check:.3e}")
    a, g = logit.alpha, logit.gamma
    t = np.ascontiguousarray(model.link_cost(np.maximum(x, 0.0)), dtype=float)
    c = K.route_costs(t, p.route_ptr, p.route_links)
    A = model.trip_utility(d, h)
    q_flat = q.reshape(-1)
    # coefficient of path flow k in Psi(z)^T z'
    coef = (
        np.log(np.maximum(f, floor)) / a
        + c
        + (1.0 / g - 1.0 / a) * np.log(np.maximum(q_flat, floor))[routes.route_od]
        - A[routes.route_dest]
    )
    firm = np.log(np.maximum(h, floor)) / logit.beta - model.firm_utility(d, h)
    current = float(coef @ f + firm @ h)
    best = sum(o * float(coef[lo:hi].min()) for o, lo, hi in zip(p.demand, p.origin_ptr[:-1], p.origin_ptr[1:]))
    best += network.total_firms * float(firm.min())
    return current - best


def network_feasibility(state: CombinedState, network: Network, routes: RouteSet) -> float:
    from .network import validate_state

    return max(validate_state(state, network, routes).residuals.values())


# -- solvers --------------------------------------------------------------------------


def _traffic_solve(problem: Problem, h, config: EquilibriumConfig, f0=None, tolerance=None):
    f, gf, trace = _fixed_point(
        lambda f: problem.traffic_map(f, h),
        problem.initial_f() if f0 is None else f0,
        config,
        config.inner_max_iterations,
        problem.renormalize_f,
        "traffic equilibrium",
        tolerance,
    )
    return problem.renormalize_f(gf), trace


def _location_solve(problem: Problem, d, config: EquilibriumConfig, h0=None, tolerance=None):
    h, gh, trace = _fixed_point(
        lambda h: problem.location_map(d, h),
        problem.initial_h() if h0 is None else h0,
        config,
        config.inner_max_iterations,
        problem.renormalize_h,
        "location equilibrium",
        tolerance,
    )
    return problem.renormalize_h(gh), trace


def _report(state, problem, behavior, iterations, trace, converged=True, gap=True) -> GapReport:
    residuals = logit_residuals(state, problem)
    value = (
        vi_gap(state, problem.network, problem.routes, behavior, problem.logit, problem.model)
        if gap
        else float("nan")
    )
    return GapReport(value, residuals, iterations, converged, trace)


def solve_parametric_traffic(
    network: Network,
    routes: RouteSet,
    behavior: Behavior,
    logit: LogitParams,
    h,
    config: EquilibriumConfig = EquilibriumConfig(),
    model: CostModel | None = None,
    initial_f=None,
) -> tuple[CombinedState, GapReport]:
    """Traffic equilibrium for a fixed firm distribution ``h``.

    The reported gap is that of the traffic block alone (the location block is
    frozen at ``h``).
    """
    h = np.asarray(h, dtype=float)
    if h.shape != (network.n_destinations,) or np.any(h < 0) or abs(h.sum() - network.total_firms) > 1e-8:
        raise InfeasibleState("h must be a feasible firm distribution")
    problem = Problem(network, routes, model or untolled_model(behavior), logit)
    f, trace = _traffic_solve(problem, h, config, initial_f, config.tolerance * 0.1)
    state = problem.state(f, h)
    report = _report(state, problem, behavior, len(trace), trace, gap=False)
    report.residuals.pop("location")
    report.vi_gap = _traffic_gap(state, problem, config.floor)
    return state, report


def _traffic_gap(state, problem: Problem, floor) -> float:
    # gap of the traffic block with h frozen: same linearization without the firm simplex
    p = problem
    f, x, q, d, h = state
    a, g = p.logit.alpha, p.logit.gamma
    t = np.ascontiguousarray(p.model.link_cost(np.maximum(x, 0.0)), dtype=float)
    c = K.route_costs(t, p.route_ptr, p.route_links)
    A = p.model.trip_utility(d, h)
    coef = (
        np.log(np.maximum(f, floor)) / a
        + c
        + (1.0 / g - 1.0 / a) * np.log(np.maximum(q.reshape(-1), floor))[p.routes.route_od]
        - A[p.routes.route_dest]
    )
    best = sum(o * float(coef[lo:hi].min()) for o, lo, hi in zip(p.demand, p.origin_ptr[:-1], p.origin_ptr[1:]))
    return float(coef @ f) - best


def solve_parametric_location(
    behavior: Behavior,
    d,
    total_firms: float,
    beta: float,
    config: EquilibriumConfig = EquilibriumConfig(),
    model: CostModel | None = None,
    initial_h=None,
) -> tuple[np.ndarray, GapReport]:
    """Firm distribution in equilibrium with fixed trip ends ``d``."""
    d = np.asarray(d, dtype=float)
    model = model or untolled_model(behavior)
    n = len(behavior.attraction)
    if d.shape != (n,) or np.any(d < 0):
        raise InfeasibleState("d must be a nonnegative vector with one entry per destination")
    if not total_firms > 0 or not beta > 0:
        raise ValidationError("total_firms and beta must be positive")

    def loc(h):
        return total_firms * _softmin(-model.firm_utility(d, h), beta)[1]

    h0 = np.full(n, total_firms / n) if initial_h is None else np.asarray(initial_h, dtype=float)
    h, gh, trace = _fixed_point(
        loc, h0, config, config.inner_max_iterations, lambda h: h * (total_firms / h.sum()), "location equilibrium"
    )
    h = gh * (total_firms / gh.sum())
    u = np.log(np.maximum(h, config.floor)) / beta - model.firm_utility(d, h)
    gap = float(u @ h - total_firms * u.min())
    res = float(np.max(np.abs(loc(h) - h)))
    return h, GapReport(gap, {"location": res}, len(trace), True, trace)


def solve_combined(
    network: Network,
    routes: RouteSet,
    behavior: Behavior,
    logit: LogitParams,
    config: EquilibriumConfig = EquilibriumConfig(),
    model: CostModel | None = None,
    initial: CombinedState | None = None,
) -> tuple[CombinedState, GapReport]:
    """Combined equilibrium by diagonalization.

    Each outer iteration solves the traffic equilibrium for the current firm
    distribution, then the location equilibrium for the resulting trip ends,
    and moves the firm distribution toward it (damped, Anderson-mixed). The
    stop rule is the joint relative residual of the three logit equalities.
    """
    problem = Problem(network, routes, model or untolled_model(behavior), logit)
    # outer stops an order below tolerance so the final gap stays within 10x tolerance
    inner_tol = config.tolerance * 0.01
    warm = {
        "f": problem.initial_f() if initial is None else problem.renormalize_f(np.asarray(initial.f, dtype=float)),
        "h": None,
    }
    h0 = problem.initial_h() if initial is None else problem.renormalize_h(np.asarray(initial.h, dtype=float))

    def outer(h):
        f, _ = _traffic_solve(problem, h, config, warm["f"], inner_tol)
        warm["f"] = f
        _, _, d = problem.loads(f)
        h_new, _ = _location_solve(problem, d, config, warm["h"] if warm["h"] is not None else h, inner_tol)
        warm["h"] = h_new
        return h_new

    def joint_residual(h, h_new):
        # traveler equalities hold to inner tolerance at warm["f"]; measure the firm equality directly
        _, _, d = problem.loads(warm["f"])
        scale = max(1.0, float(np.max(np.abs(h))))
        return float(np.max(np.abs(problem.location_map(d, h) - h))) / scale

    h, _, trace = _fixed_point(
        outer,
        h0,
        config,
        config.max_iterations,
        problem.renormalize_h,
        "combined equilibrium",
        config.tolerance * 0.1,
        residual=joint_residual,
    )
    state = problem.state(warm["f"], h)
    report = _report(state, problem, behavior, len(trace), trace)
    logger.debug("%s converged in %d outer iterations, gap %.3e", problem.model.name, len(trace), report.vi_gap)
    return state, report


# -- uniqueness -------------------------------------------------------------------------


@dataclass(frozen=True)
class Witness:
    destination: int
    condition: int
    d: float
    h: float
    value: float


@dataclass
class UniquenessVerdict:
    status: str  # "satisfied" | "violated" | "indeterminate"
    witnesses: list[Witness]
    margins: list[tuple[float, float]]

    def __bool__(self) -> bool:
        return self.status == "satisfied"


def uniqueness_conditions(behavior: Behavior, s: int, d: float, h: float) -> tuple[float, float]:
    """Left-hand sides of the two sufficient uniqueness conditions at one point."""
    from .behavior import attraction_eval

    v = attraction_eval(behavior.attraction, s, d, h)
    return (v.A_d + 0.5 * v.A_h + 0.5 * v.B_d, v.B_h + 0.5 * v.B_d + 0.5 * v.A_h)


def check_uniqueness(behavior: Behavior, d_max: float, h_max: float) -> UniquenessVerdict:
    """Verify both uniqueness conditions on the box ``[0, d_max] x [0, h_max]``.

    For this attraction family each condition is monotone in ``d`` and in
    ``h`` separately, so its maximum over the box sits at a corner; checking
    the four corners is exact.
    """
    if not (np.isfinite(d_max) and np.isfinite(h_max) and d_max >= 0 and h_max >= 0):
        return UniquenessVerdict("indeterminate", [], [])
    corners = [(0.0, 0.0), (0.0, h_max), (d_max, 0.0), (d_max, h_max)]
    witnesses: list[Witness] = []
    margins: list[tuple[float, float]] = []
    for s in range(len(behavior.attraction)):
        worst = [(-np.inf, None), (-np.inf, None)]
        for d, h in corners:
            for i, val in enumerate(uniqueness_conditions(behavior, s, d, h)):
                if not np.isfinite(val):
                    return UniquenessVerdict("indeterminate", [], [])
                if val > worst[i][0]:
                    worst[i] = (val, (d, h))
        margins.append((worst[0][0], worst[1][0]))
        for i, (val, (d, h)) in enumerate(worst):
            if val >= 0:
                witnesses.append(Witness(s, i + 1, d, h, val))
    return UniquenessVerdict("violated" if witnesses else "satisfied", witnesses, margins)
