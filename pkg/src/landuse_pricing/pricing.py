"""Social cost, system optima and the congestion-pricing schemes that decentralize them.

Two schemes are supported:

* ``road``: link tolls ``x t'(x)`` plus a destination entrance fee ``-d dA/dd``;
  firms are not priced and keep their equilibrium location behavior.
* ``full``: the same link tolls, an entrance fee ``u = -(d dA/dd + h dB/dd)`` and
  a per-firm business tax ``v = -(d dA/dh + h dB/dh)``. Negative values are
  subsidies.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .behavior import Behavior, LogitParams
from .equilibrium import (
    CombinedState,
    CostModel,
    EquilibriumConfig,
    GapReport,
    Problem,
    logit_residuals,
    posted_price_model,
    road_pricing_model,
    solve_combined,
    solve_parametric_traffic,
    system_optimum_model,
    untolled_model,
)
from .errors import MultipleSolutionsReported, NoKKTPoint, NotConverged, ValidationError
from .network import Network, RouteSet, make_state, random_feasible_state

logger = logging.getLogger(__name__)

DISTINCT = 1e-6


@dataclass(frozen=True, eq=False)
class PricingScheme:
    mode: str  # "road" | "full"
    link_toll: np.ndarray
    entrance_fee: np.ndarray
    business_tax: np.ndarray
    evaluated_at: CombinedState | None = None

    @property
    def net_revenue(self) -> float:
        """Tolls and taxes collected minus subsidies paid, at ``evaluated_at``."""
        z = self.evaluated_at
        if z is None:
            return float("nan")
        return float(self.link_toll @ z.x + self.entrance_fee @ z.d + self.business_tax @ z.h)

    def zeroed(self) -> "PricingScheme":
        return PricingScheme(
            self.mode,
            np.zeros_like(self.link_toll),
            np.zeros_like(self.entrance_fee),
            np.zeros_like(self.business_tax),
            self.evaluated_at,
        )


@dataclass(frozen=True)
class CostBreakdown:
    route_entropy: float
    destination_entropy: float
    firm_entropy: float
    travel_time: float
    traveler_benefit: float
    firm_benefit: float

    @property
    def travelers(self) -> float:
        """Total social cost of travelers for the current firm distribution."""
        return self.route_entropy + self.destination_entropy + self.travel_time - self.traveler_benefit

    @property
    def total(self) -> float:
        """Total social cost of travelers and firms."""
        return self.travelers + self.firm_entropy - self.firm_benefit

    def as_dict(self) -> dict[str, float]:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out["travelers"] = self.travelers
        out["total"] = self.total
        return out


def _entropy(v) -> float:
    v = np.asarray(v, dtype=float).reshape(-1)
    pos = v > 0
    return float(np.sum(v[pos] * (np.log(v[pos]) - 1.0)))


def social_cost_total(state: CombinedState, behavior: Behavior, logit: LogitParams) -> CostBreakdown:
    f, x, q, d, h = state
    a, b, g = logit.alpha, logit.beta, logit.gamma
    att = behavior.attraction
    return CostBreakdown(
        route_entropy=_entropy(f) / a,
        destination_entropy=(1.0 / g - 1.0 / a) * _entropy(q),
        firm_entropy=_entropy(h) / b,
        travel_time=float(x @ behavior.links.time(x)),
        traveler_benefit=float(att.trip(d, h) @ d),
        firm_benefit=float(att.business(d, h) @ h),
    )


def social_cost_travelers(state: CombinedState, behavior: Behavior, logit: LogitParams) -> float:
    return social_cost_total(state, behavior, logit).travelers


def extract_pricing(state: CombinedState, behavior: Behavior, mode: str = "full") -> PricingScheme:
    """Prices equal to the external effects evaluated at ``state``."""
    av = behavior.attraction.evaluate(state.d, state.h)
    toll = behavior.links.marginal(state.x)
    if mode == "full":
        fee = -(state.d * av.A_d + state.h * av.B_d)
        tax = -(state.d * av.A_h + state.h * av.B_h)
    elif mode == "road":
        fee = -(state.d * av.A_d)
        tax = np.zeros_like(fee)
    else:
        raise ValidationError(f"unknown pricing mode {mode!r}")
    return PricingScheme(mode, toll, fee, tax, state)


# -- direct minimization (cross-check for the stationary-point solvers) -----------------


class _DirectObjective:
    """Social cost as a function of softmax logits on each origin's route simplex (and the firm simplex)."""

    def __init__(self, network, routes, behavior, logit, h_fixed=None):
        self.network, self.routes, self.behavior, self.logit = network, routes, behavior, logit
        self.delta = routes.incidence()
        self.demand = np.asarray(network.demand, dtype=float)
        self.h_fixed = None if h_fixed is None else np.asarray(h_fixed, dtype=float)
        self.nD = network.n_destinations
        self.optimize_h = h_fixed is None
        self.model = system_optimum_model(behavior) if self.optimize_h else road_pricing_model(behavior)

    def split(self, theta):
        f = np.empty(self.routes.n_routes)
        for r, o in enumerate(self.demand):
            lo, hi = self.routes.origin_ptr[r], self.routes.origin_ptr[r + 1]
            z = theta[lo:hi] - theta[lo:hi].max()
            e = np.exp(z)
            f[lo:hi] = o * e / e.sum()
        if self.optimize_h:
            z = theta[self.routes.n_routes :]
            e = np.exp(z - z.max())
            h = self.network.total_firms * e / e.sum()
        else:
            h = self.h_fixed
        return f, h

    def state(self, theta) -> CombinedState:
        f, h = self.split(theta)
        return make_state(f, h, self.network, self.routes)

    def __call__(self, theta):
        a, g = self.logit.alpha, self.logit.gamma
        z = self.state(theta)
        cost = social_cost_total(z, self.behavior, self.logit)
        value = cost.total if self.optimize_h else cost.travelers
        tiny = 1e-300
        q_flat = z.q.reshape(-1)
        grad_f = (
            np.log(np.maximum(z.f, tiny)) / a
            + self.delta.T @ self.model.link_cost(z.x)
            + (1.0 / g - 1.0 / a) * np.log(np.maximum(q_flat, tiny))[self.routes.route_od]
            - self.model.trip_utility(z.d, z.h)[self.routes.route_dest]
        )
        grad = np.empty_like(theta)
        for r, o in enumerate(self.demand):
            lo, hi = self.routes.origin_ptr[r], self.routes.origin_ptr[r + 1]
            p = z.f[lo:hi]
            grad[lo:hi] = p * (grad_f[lo:hi] - (p @ grad_f[lo:hi]) / o) if o > 0 else 0.0
        if self.optimize_h:
            grad_h = np.log(np.maximum(z.h, tiny)) / self.logit.beta - self.model.firm_utility(z.d, z.h)
            grad[self.routes.n_routes :] = z.h * (grad_h - (z.h @ grad_h) / self.network.total_firms)
        return value, grad

    def logits_of(self, state: CombinedState):
        parts = [np.log(np.maximum(state.f, 1e-300))]
        if self.optimize_h:
            parts.append(np.log(np.maximum(state.h, 1e-300)))
        return np.concatenate(parts)


def direct_minimize(
    network: Network,
    routes: RouteSet,
    behavior: Behavior,
    logit: LogitParams,
    start: CombinedState,
    h_fixed=None,
) -> tuple[CombinedState, float]:
    """Minimize the social cost directly with L-BFGS on a softmax parameterization.

    With ``h_fixed`` the travelers' cost is minimized over trip patterns only;
    otherwise the total cost over trips and firm locations.
    """
    obj = _DirectObjective(network, routes, behavior, logit, h_fixed)
    res = optimize.minimize(
        obj,
        obj.logits_of(start),
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": 20000, "ftol": 1e-15, "gtol": 1e-11, "maxcor": 30},
    )
    return obj.state(res.x), float(res.fun)


# -- system optima ----------------------------------------------------------------------


def _starts(network, routes, multistart: int, seed: int, extra=()):
    rng = np.random.default_rng(seed)
    starts: list[CombinedState | None] = [None, *extra]
    while len(starts) < max(multistart, 1) + len(extra):
        starts.append(random_feasible_state(network, routes, rng))
    return starts


def _distinct(candidates, key=lambda c: c[0]):
    out = []
    for cand in candidates:
        if all(key(cand).distance(key(o)) > DISTINCT for o in out):
            out.append(cand)
    return out


def solve_relative_so(
    network: Network,
    routes: RouteSet,
    behavior: Behavior,
    logit: LogitParams,
    h,
    config: EquilibriumConfig = EquilibriumConfig(),
) -> tuple[CombinedState, GapReport]:
    """Travelers' system optimum for a fixed firm distribution.

    Computed as the traffic equilibrium under the externality-adjusted link
    times and trip attractions; the report carries the social cost at the
    optimum and at the untolled traffic equilibrium for the same ``h``.
    """
    state, report = solve_parametric_traffic(network, routes, behavior, logit, h, config, road_pricing_model(behavior))
    untolled, _ = solve_parametric_traffic(network, routes, behavior, logit, h, config)
    report.extra = {
        "objective": social_cost_travelers(state, behavior, logit),
        "untolled_objective": social_cost_travelers(untolled, behavior, logit),
    }
    return state, report


def solve_uniform_road_pricing(
    network: Network,
    routes: RouteSet,
    behavior: Behavior,
    logit: LogitParams,
    config: EquilibriumConfig = EquilibriumConfig(),
    multistart: int = 1,
    seed: int = 0,
    on_multiple: str = "select",
) -> tuple[CombinedState, PricingScheme, GapReport]:
    """Equilibrium where travelers pay their own externalities and firms are unpriced.

    Multi-start candidates that differ by more than 1e-6 are all kept in
    ``report.extra["candidates"]``; the one with least travelers' social cost
    is returned (or :class:`MultipleSolutionsReported` is raised when
    ``on_multiple="raise"``).
    """
    model = road_pricing_model(behavior)
    found = []
    failures = []
    for start in _starts(network, routes, multistart, seed):
        try:
            state, rep = solve_combined(network, routes, behavior, logit, config, model, start)
        except NotConverged as exc:
            failures.append(str(exc))
            continue
        found.append((state, rep, social_cost_travelers(state, behavior, logit)))
    if not found:
        raise NotConverged("no road-pricing equilibrium found from any start: " + "; ".join(failures))
    distinct = _distinct(found)
    if len(distinct) > 1 and on_multiple == "raise":
        raise MultipleSolutionsReported(f"{len(distinct)} distinct road-pricing equilibria", distinct)
    state, report, value = min(distinct, key=lambda c: c[2])
    report.extra = {
        "objective": value,
        "candidates": [(c[0], c[2]) for c in distinct],
        "failed_starts": failures,
    }
    return state, extract_pricing(state, behavior, "road"), report


def solve_overall_so(
    network: Network,
    routes: RouteSet,
    behavior: Behavior,
    logit: LogitParams,
    config: EquilibriumConfig = EquilibriumConfig(),
    multistart: int = 4,
    seed: int = 0,
    initial_states=(),
) -> tuple[CombinedState, GapReport]:
    """Overall system optimum: the best stationary point found from several starts.

    Each start is solved as the combined equilibrium under the fully adjusted
    functions; candidates whose stationarity residual exceeds 100x tolerance
    are discarded. A direct L-BFGS minimization from the same starts
    cross-checks the objective; if it finds a strictly better point, the
    fixed-point solver is restarted from there and the discrepancy flagged.
    """
    model = system_optimum_model(behavior)
    starts = _starts(network, routes, multistart, seed, initial_states)
    problem = Problem(network, routes, model, logit)
    kkt_tol = 100 * config.tolerance * max(1.0, network.total_demand, network.total_firms)

    def objective(z):
        return social_cost_total(z, behavior, logit).total

    candidates = []

    def try_start(start):
        try:
            state, rep = solve_combined(network, routes, behavior, logit, config, model, start)
        except NotConverged as exc:
            logger.info("system-optimum start failed: %s", exc)
            return
        if max(logit_residuals(state, problem).values()) <= kkt_tol:
            candidates.append((state, rep, objective(state)))

    for start in starts:
        try_start(start)

    direct_best = None
    for start in starts:
        z0 = start if start is not None else problem.state(problem.initial_f(), problem.initial_h())
        z, value = direct_minimize(network, routes, behavior, logit, z0)
        if direct_best is None or value < direct_best[1]:
            direct_best = (z, value)

    discrepancy = False
    if candidates:
        best_kkt = min(c[2] for c in candidates)
        if direct_best[1] < best_kkt - 1e-6 * max(1.0, abs(best_kkt)):
            discrepancy = True
            try_start(direct_best[0])
    else:
        try_start(direct_best[0])
    if not candidates:
        raise NoKKTPoint("no start produced a point satisfying the optimality conditions")

    distinct = _distinct(candidates)
    state, report, value = min(distinct, key=lambda c: c[2])
    report.extra = {
        "objective": value,
        "direct_objective": direct_best[1],
        "discrepancy": discrepancy,
        "candidates": [(c[0], c[2]) for c in distinct],
    }
    return state, report


# -- support verification ---------------------------------------------------------------


@dataclass
class SupportVerdict:
    holds: bool
    distance: float
    cost_optimum: float
    cost_tolled: float
    relative_cost_gap: float
    fixed_point_residual: dict[str, float]
    tolled_state: CombinedState
    tolled_report: GapReport
    notes: list[str] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.holds


def verify_support(
    network: Network,
    routes: RouteSet,
    behavior: Behavior,
    logit: LogitParams,
    scheme: PricingScheme,
    config: EquilibriumConfig = EquilibriumConfig(),
    state_tol: float = 1e-6,
    cost_tol: float = 1e-8,
    optimum: CombinedState | None = None,
) -> SupportVerdict:
    """Check that the equilibrium under the posted (fixed) prices reproduces the optimum.

    Prices are held at their values in ``scheme``; the combined equilibrium
    is re-solved from the default start and compared with ``optimum`` (by
    default ``scheme.evaluated_at``). For ``road`` schemes the compared cost is
    the travelers' social cost, otherwise the total.
    """
    target = optimum if optimum is not None else scheme.evaluated_at
    if target is None:
        raise ValidationError("verify_support needs the optimum the scheme was evaluated at")
    model: CostModel = posted_price_model(behavior, scheme.link_toll, scheme.entrance_fee, scheme.business_tax)
    residual = logit_residuals(target, Problem(network, routes, model, logit))
    tolled, report = solve_combined(network, routes, behavior, logit, config, model)

    def cost(z):
        c = social_cost_total(z, behavior, logit)
        return c.travelers if scheme.mode == "road" else c.total

    c_opt, c_tol = cost(target), cost(tolled)
    rel = abs(c_tol - c_opt) / max(1.0, abs(c_opt))
    dist = tolled.distance(target)
    return SupportVerdict(dist <= state_tol and rel <= cost_tol, dist, c_opt, c_tol, rel, residual, tolled, report)


def untolled_equilibrium(network, routes, behavior, logit, config=EquilibriumConfig()):
    return solve_combined(network, routes, behavior, logit, config, untolled_model(behavior))
