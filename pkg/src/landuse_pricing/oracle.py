"""Brute-force references for tiny instances.

Nothing here calls the solver, the loading kernels or the softmax helpers of
:mod:`landuse_pricing.equilibrium`; link flows come from an explicit dense
incidence matrix and every choice probability is summed out directly.

Grids live on the free coordinates of each simplex: a simplex with ``m``
vertices gets ``m - 1`` stick-breaking fractions, each taking the values
``i / (n + 1)`` for ``i = 1..n``. Going from ``n`` to ``2n + 1`` points halves the
spacing and keeps every old point, so the best value can only improve.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .behavior import Behavior, LogitParams
from .errors import InstanceTooLarge, ValidationError
from .network import CombinedState, Network, RouteSet

MAX_ORIGINS = 2
MAX_DESTINATIONS = 2
MAX_ROUTES = 4
MAX_POINTS = 10_000_000
CHUNK = 1 << 17

KINDS = ("equilibrium", "traffic", "overall")


@dataclass(frozen=True)
class GridSpec:
    resolution: int = 200
    max_points: int = MAX_POINTS

    def __post_init__(self):
        if self.resolution < 1:
            raise ValidationError("grid resolution must be at least 1")

    @property
    def cell(self) -> float:
        return 1.0 / (self.resolution + 1)

    def values(self) -> np.ndarray:
        return np.arange(1, self.resolution + 1) / (self.resolution + 1)


@dataclass(eq=False)
class GridResult:
    state: CombinedState
    coords: np.ndarray  # stick-breaking fractions of the best point
    value: float  # residual (equilibrium) or objective (optimum)
    n_points: int
    cell: float
    slack: float = 0.0  # one-cell Lipschitz bound (optimum only)


class AdjustedFunctions(NamedTuple):
    """Link costs, trip attractions and firm attractions evaluated at one point (or a batch)."""

    link_cost: np.ndarray
    trip: np.ndarray
    firm: np.ndarray


# -- instance layout ---------------------------------------------------------------


class _Layout:
    """Free coordinates of the feasible set (trip patterns alone when ``h`` is fixed)."""

    def __init__(self, network: Network, routes: RouteSet, spec: GridSpec | None, fixed_h=None):
        n_routes = routes.n_routes
        if spec is not None and (network.n_origins > MAX_ORIGINS or network.n_destinations > MAX_DESTINATIONS or n_routes > MAX_ROUTES):
            raise InstanceTooLarge(
                f"oracle handles at most {MAX_ORIGINS} origins, {MAX_DESTINATIONS} destinations and "
                f"{MAX_ROUTES} routes; got {network.n_origins}, {network.n_destinations}, {n_routes}"
            )
        self.network, self.routes = network, routes
        self.nO, self.nD, self.nR = network.n_origins, network.n_destinations, n_routes
        self.demand = np.array(network.demand, dtype=float)
        self.T = network.total_firms
        self.delta = np.zeros((network.n_links, n_routes))
        for k in range(n_routes):
            for a in routes.links_of(k):
                self.delta[a, k] = 1.0
        self.od_routes = [list(routes.routes_of(r, s)) for r in range(self.nO) for s in range(self.nD)]
        self.fixed_h = None if fixed_h is None else np.asarray(fixed_h, dtype=float)
        # free coordinates: destination split per origin, route split per OD, then firms
        self.n_free = self.nO * (self.nD - 1) + sum(len(rt) - 1 for rt in self.od_routes)
        if self.fixed_h is None:
            self.n_free += self.nD - 1
        self.n_points = 0 if spec is None else spec.resolution**self.n_free
        if spec is not None and self.n_points > spec.max_points:
            raise InstanceTooLarge(
                f"{spec.resolution}^{self.n_free} = {self.n_points} grid points exceeds {spec.max_points}"
            )

    @staticmethod
    def _stick(u: np.ndarray, m: int) -> np.ndarray:
        """Map ``(N, m-1)`` fractions to ``(N, m)`` simplex shares."""
        shares = np.empty((u.shape[0], m))
        left = np.ones(u.shape[0])
        for j in range(m - 1):
            shares[:, j] = left * u[:, j]
            left = left - shares[:, j]
        shares[:, m - 1] = left
        return shares

    def flows(self, u: np.ndarray):
        """Batch of points ``(f, q, h)`` for fractions ``u`` of shape ``(N, n_free)``."""
        n = u.shape[0]
        col = 0
        q = np.empty((n, self.nO * self.nD))
        for r in range(self.nO):
            sh = self._stick(u[:, col : col + self.nD - 1], self.nD)
            col += self.nD - 1
            q[:, r * self.nD : (r + 1) * self.nD] = self.demand[r] * sh
        f = np.empty((n, self.nR))
        for od, rt in enumerate(self.od_routes):
            sh = self._stick(u[:, col : col + len(rt) - 1], len(rt))
            col += len(rt) - 1
            f[:, rt] = q[:, [od]] * sh
        if self.fixed_h is None:
            h = self.T * self._stick(u[:, col : col + self.nD - 1], self.nD)
        else:
            h = np.broadcast_to(self.fixed_h, (n, self.nD)).copy()
        return f, q, h

    def destination_flows(self, q: np.ndarray) -> np.ndarray:
        return q.reshape(q.shape[0], self.nO, self.nD).sum(axis=1)

    def state(self, f, h) -> CombinedState:
        q = np.zeros((self.nO, self.nD))
        for od, rt in enumerate(self.od_routes):
            q[od // self.nD, od % self.nD] = f[rt].sum()
        return CombinedState(f.copy(), self.delta @ f, q, q.sum(axis=0), np.asarray(h, dtype=float).copy())

    def fractions(self, state: CombinedState) -> np.ndarray:
        """Inverse of :meth:`flows` for a single state."""
        out = []

        def breaks(shares):
            left = 1.0
            for v in shares[:-1]:
                out.append(v / left if left > 0 else 0.0)
                left -= v

        for r in range(self.nO):
            if self.demand[r] > 0:
                breaks(state.q[r] / self.demand[r])
            else:
                out.extend([0.0] * (self.nD - 1))
        for od, rt in enumerate(self.od_routes):
            qq = state.f[rt].sum()
            breaks(state.f[rt] / qq if qq > 0 else np.full(len(rt), 1.0 / len(rt)))
        if self.fixed_h is None:
            breaks(state.h / self.T)
        return np.array(out)


def _functions(behavior: Behavior, x, d, h, kind: str) -> AdjustedFunctions:
    """Cost/utility functions of the requested problem, computed from the raw partials."""
    lt = behavior.links
    t = lt.t0 + lt.b * x**lt.p
    at = behavior.attraction
    A = at.a0 + at.a1 * np.log(1.0 + h) - at.a2 * d - at.a3 * d**2
    B = at.b0 + at.b1 * d - at.b2 * h
    if kind == "equilibrium":
        return AdjustedFunctions(t, A, B)
    ext_link = x * (lt.b * lt.p * x ** (lt.p - 1.0))
    dA_dd = -at.a2 - 2.0 * at.a3 * d
    if kind == "traffic":
        return AdjustedFunctions(t + ext_link, A + d * dA_dd, B)
    if kind == "overall":
        dA_dh = at.a1 / (1.0 + h)
        return AdjustedFunctions(t + ext_link, A + d * dA_dd + h * at.b1, B + d * dA_dh - h * at.b2)
    raise ValidationError(f"unknown problem kind {kind!r}; expected one of {KINDS}")


def adjusted_functions(state: CombinedState, behavior: Behavior, kind: str = "overall") -> AdjustedFunctions:
    return _functions(behavior, state.x, state.d, state.h, kind)


def _predicted(lay: _Layout, fn: AdjustedFunctions, q, logit: LogitParams, route_cost_offset: float = 0.0):
    """Logit-map images ``(f_hat, q_hat, h_hat)`` of a batch, by direct summation."""
    a, b, g = logit.alpha, logit.beta, logit.gamma
    c = fn.link_cost @ lay.delta + route_cost_offset
    n = c.shape[0]
    f_hat = np.empty_like(c)
    v = np.empty((n, lay.nO * lay.nD))
    for od, rt in enumerate(lay.od_routes):
        cr = c[:, rt]
        low = cr.min(axis=1, keepdims=True)
        w = np.exp(-a * (cr - low))
        tot = w.sum(axis=1, keepdims=True)
        f_hat[:, rt] = q[:, [od]] * w / tot
        v[:, od] = low[:, 0] - np.log(tot[:, 0]) / a
    q_hat = np.empty_like(q)
    for r in range(lay.nO):
        cols = slice(r * lay.nD, (r + 1) * lay.nD)
        z = -g * (v[:, cols] - fn.trip)
        w = np.exp(z - z.max(axis=1, keepdims=True))
        q_hat[:, cols] = lay.demand[r] * w / w.sum(axis=1, keepdims=True)
    z = b * fn.firm
    w = np.exp(z - z.max(axis=1, keepdims=True))
    h_hat = lay.T * w / w.sum(axis=1, keepdims=True)
    return f_hat, q_hat, h_hat


def _share_residual(lay: _Layout, f, q, h, f_hat, q_hat, h_hat, include_h=True) -> np.ndarray:
    """Sup-norm distance between current and logit-predicted shares of every simplex."""
    res = np.zeros(f.shape[0])
    for od, rt in enumerate(lay.od_routes):
        qq = q[:, [od]]
        with np.errstate(invalid="ignore", divide="ignore"):
            diff = np.where(qq > 0, np.abs(f[:, rt] - f_hat[:, rt]) / qq, 0.0)
        res = np.maximum(res, diff.max(axis=1))
    for r in range(lay.nO):
        if lay.demand[r] > 0:
            cols = slice(r * lay.nD, (r + 1) * lay.nD)
            res = np.maximum(res, (np.abs(q[:, cols] - q_hat[:, cols]) / lay.demand[r]).max(axis=1))
    if include_h:
        res = np.maximum(res, (np.abs(h - h_hat) / lay.T).max(axis=1))
    return res


def _xlnx(v: np.ndarray) -> np.ndarray:
    out = np.zeros_like(v)
    pos = v > 0
    out[pos] = v[pos] * (np.log(v[pos]) - 1.0)
    return out


def _objective(lay: _Layout, behavior: Behavior, logit: LogitParams, f, q, h, kind: str) -> np.ndarray:
    a, b, g = logit.alpha, logit.beta, logit.gamma
    x = f @ lay.delta.T
    d = lay.destination_flows(q)
    fn = _functions(behavior, x, d, h, "equilibrium")
    value = (
        _xlnx(f).sum(axis=1) / a
        + (1.0 / g - 1.0 / a) * _xlnx(q).sum(axis=1)
        + (x * fn.link_cost).sum(axis=1)
        - (d * fn.trip).sum(axis=1)
    )
    if kind == "overall":
        value = value + _xlnx(h).sum(axis=1) / b - (h * fn.firm).sum(axis=1)
    return value


def _grid_fractions(lay: _Layout, spec: GridSpec, start: int, stop: int) -> np.ndarray:
    idx = np.unravel_index(np.arange(start, stop), (spec.resolution,) * lay.n_free)
    vals = spec.values()
    return np.stack([vals[i] for i in idx], axis=1) if lay.n_free else np.zeros((stop - start, 0))


def _scan(lay: _Layout, spec: GridSpec, evaluate):
    best_val, best_u = np.inf, None
    values = np.empty(lay.n_points)
    for start in range(0, lay.n_points, CHUNK):
        stop = min(start + CHUNK, lay.n_points)
        u = _grid_fractions(lay, spec, start, stop)
        val = evaluate(u)
        values[start:stop] = val
        i = int(np.argmin(val))
        if val[i] < best_val:
            best_val, best_u = float(val[i]), u[i].copy()
    return best_val, best_u, values


# -- public oracles ----------------------------------------------------------------


def grid_equilibrium(
    network: Network,
    routes: RouteSet,
    behavior: Behavior,
    logit: LogitParams,
    spec: GridSpec = GridSpec(),
    kind: str = "equilibrium",
) -> GridResult:
    """Feasible grid point with the smallest share-space logit-map residual."""
    lay = _Layout(network, routes, spec)

    def evaluate(u):
        f, q, h = lay.flows(u)
        fn = _functions(behavior, f @ lay.delta.T, lay.destination_flows(q), h, kind)
        return _share_residual(lay, f, q, h, *_predicted(lay, fn, q, logit))

    value, u, _ = _scan(lay, spec, evaluate)
    f, _, h = lay.flows(u[None, :])
    return GridResult(lay.state(f[0], h[0]), u, value, lay.n_points, spec.cell)


def grid_optimum(
    network: Network,
    routes: RouteSet,
    behavior: Behavior,
    logit: LogitParams,
    spec: GridSpec = GridSpec(),
    objective: str = "overall",
    h=None,
) -> GridResult:
    """Exhaustive minimum of the travelers' (``traffic``, needs ``h``) or total (``overall``) social cost.

    ``slack`` bounds how far the grid minimum can sit above the minimum over
    the grid's hull: the largest neighbor-to-neighbor change along each free
    coordinate, summed over coordinates.
    """
    if objective not in ("traffic", "overall"):
        raise ValidationError("objective must be 'traffic' or 'overall'")
    if objective == "traffic" and h is None:
        raise ValidationError("traffic is defined for a fixed firm distribution h")
    lay = _Layout(network, routes, spec, fixed_h=h if objective == "traffic" else None)

    def evaluate(u):
        f, q, hh = lay.flows(u)
        return _objective(lay, behavior, logit, f, q, hh, objective)

    value, u, values = _scan(lay, spec, evaluate)
    slack = 0.0
    if lay.n_free:
        cube = values.reshape((spec.resolution,) * lay.n_free)
        for axis in range(lay.n_free):
            if spec.resolution > 1:
                slack += float(np.abs(np.diff(cube, axis=axis)).max())
    f, _, hh = lay.flows(u[None, :])
    return GridResult(lay.state(f[0], hh[0]), u, value, lay.n_points, spec.cell, slack)


def share_residual(
    state: CombinedState,
    network: Network,
    routes: RouteSet,
    behavior: Behavior,
    logit: LogitParams,
    kind: str = "equilibrium",
) -> float:
    """The residual :func:`grid_equilibrium` minimizes, evaluated at an arbitrary state."""
    lay = _Layout(network, routes, None)
    f, q, h = state.f[None, :], state.q.reshape(1, -1), state.h[None, :]
    fn = _functions(behavior, f @ lay.delta.T, lay.destination_flows(q), h, kind)
    return float(_share_residual(lay, f, q, h, *_predicted(lay, fn, q, logit))[0])


def grid_fractions(state: CombinedState, network: Network, routes: RouteSet) -> np.ndarray:
    """Free coordinates of ``state`` in the oracle's parameterization (for cell comparisons)."""
    return _Layout(network, routes, None).fractions(state)


def kkt_residual(
    state: CombinedState,
    network: Network,
    routes: RouteSet,
    behavior: Behavior,
    logit: LogitParams,
    kind: str = "overall",
    route_cost_offset: float = 0.0,
) -> dict[str, float]:
    """Largest absolute deviation of ``state`` from each logit equality of the chosen problem.

    ``equilibrium`` uses the raw functions, ``traffic`` the traveler-adjusted
    ones (firm condition unchanged) and ``overall`` the fully adjusted ones.
    """
    lay = _Layout(network, routes, None)
    f = state.f[None, :]
    q = state.q.reshape(1, -1)
    h = state.h[None, :]
    fn = adjusted_functions(state, behavior, kind)
    fn = AdjustedFunctions(fn.link_cost[None, :], fn.trip[None, :], fn.firm[None, :])
    f_hat, q_hat, h_hat = _predicted(lay, fn, q, logit, route_cost_offset)
    return {
        "route": float(np.abs(f - f_hat).max()),
        "destination": float(np.abs(q - q_hat).max()),
        "location": float(np.abs(h - h_hat).max()),
    }


def vertex_vi_gap(state: CombinedState, network: Network, routes: RouteSet, behavior: Behavior, logit: LogitParams) -> float:
    """Gap of the joint variational inequality by enumerating every vertex of the feasible set.

    A vertex sends each origin's whole demand down one route and puts every
    firm at one destination; the linear gap term is maximized at one of them.
    """
    a, b, g = logit.alpha, logit.beta, logit.gamma
    nO, nD = network.n_origins, network.n_destinations
    T = network.total_firms
    demand = np.array(network.demand, dtype=float)
    delta = np.zeros((network.n_links, routes.n_routes))
    for k in range(routes.n_routes):
        for a_ in routes.links_of(k):
            delta[a_, k] = 1.0
    f, x, q, d, h = state
    if (f <= 0).any() or (h <= 0).any() or (q <= 0).any():
        raise ValidationError("vertex_vi_gap needs a strictly positive state")
    fn = _functions(behavior, x, d, h, "equilibrium")
    route_of = [[k for s in range(nD) for k in routes.routes_of(r, s)] for r in range(nO)]
    od_of = {k: (r, s) for r in range(nO) for s in range(nD) for k in routes.routes_of(r, s)}

    # pseudo-costs of the joint mapping per route / destination (constant at the state)
    route_term = {}
    for k, (r, s) in od_of.items():
        route_term[k] = np.log(f[k]) / a + (1.0 / g - 1.0 / a) * np.log(q[r, s]) - fn.trip[s]
    link_term = fn.link_cost
    firm_term = np.log(h) / b - fn.firm

    def inner(fv, xv, hv):
        return sum(route_term[k] * fv[k] for k in od_of) + float(link_term @ xv) + float(firm_term @ hv)

    here = inner(f, x, h)
    best = -np.inf
    for choice in itertools.product(*route_of):
        fv = np.zeros(routes.n_routes)
        for r, k in enumerate(choice):
            fv[k] += demand[r]
        xv = delta @ fv
        for s in range(nD):
            hv = np.zeros(nD)
            hv[s] = T
            best = max(best, here - inner(fv, xv, hv))
    return float(best)


def bisect_location(behavior: Behavior, d, total_firms: float, beta: float, tol: float = 1e-14) -> np.ndarray:
    """Two-destination firm equilibrium for fixed ``d`` by bisection on ``h_1``.

    ``h_1 - T / (1 + exp(beta * (B_2 - B_1)))`` is strictly increasing in
    ``h_1`` because each ``B_s`` falls with its own firm count.
    """
    at = behavior.attraction
    if len(at) != 2:
        raise ValidationError("bisect_location handles exactly two destinations")
    d = np.asarray(d, dtype=float)

    def g(h1):
        h = np.array([h1, total_firms - h1])
        B = at.b0 + at.b1 * d - at.b2 * h
        return h1 - total_firms / (1.0 + np.exp(beta * (B[1] - B[0])))

    lo, hi = 0.0, float(total_firms)
    while hi - lo > tol * max(1.0, total_firms):
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            hi = mid
        else:
            lo = mid
    h1 = 0.5 * (lo + hi)
    return np.array([h1, total_firms - h1])


def brute_force_routes(network: Network) -> dict[tuple[str, str], list[tuple[str, ...]]]:
    """All simple routes per OD pair, by trying every ordered subset of intermediate nodes."""
    links = set(network.links)
    order = {n: i for i, n in enumerate(network.nodes)}
    out = {}
    for r in network.origins:
        for s in network.destinations:
            if r == s:
                out[(r, s)] = [(r,)]
                continue
            middle = [n for n in network.nodes if n not in (r, s)]
            found = []
            for size in range(len(middle) + 1):
                for mid in itertools.permutations(middle, size):
                    path = (r, *mid, s)
                    if all((path[i], path[i + 1]) in links for i in range(len(path) - 1)):
                        found.append(path)
            out[(r, s)] = sorted(found, key=lambda p: [order[n] for n in p])
    return out
