"""Network topology, route enumeration and the feasible sets of trip and firm patterns."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, RouteLimitExceeded, Unreachable, ValidationError

DEFAULT_MAX_ROUTES = 10_000


def _frozen(a) -> np.ndarray:
    arr = np.array(a)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Network:
    """Directed graph with fixed origin demands and a set of business centers.

    Node identifiers are strings; their declaration order defines the node
    order used for route ordering.
    """

    nodes: tuple[str, ...]
    links: tuple[tuple[str, str], ...]
    origins: tuple[str, ...]
    demand: tuple[float, ...]
    destinations: tuple[str, ...]
    total_firms: float

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(str(n) for n in self.nodes))
        object.__setattr__(self, "links", tuple((str(a), str(b)) for a, b in self.links))
        object.__setattr__(self, "origins", tuple(str(n) for n in self.origins))
        object.__setattr__(self, "destinations", tuple(str(n) for n in self.destinations))
        object.__setattr__(self, "demand", tuple(float(o) for o in self.demand))
        object.__setattr__(self, "total_firms", float(self.total_firms))

        if len(set(self.nodes)) != len(self.nodes):
            raise ValidationError("duplicate node identifiers")
        known = set(self.nodes)
        if len(set(self.links)) != len(self.links):
            raise ValidationError("parallel links are not supported")
        for tail, head in self.links:
            if tail not in known or head not in known:
                raise ValidationError(f"link {tail}->{head} references an unknown node")
            if tail == head:
                raise ValidationError(f"self-loop at node {tail}")
        for group, name in ((self.origins, "origin"), (self.destinations, "destination")):
            if not group:
                raise ValidationError(f"no {name} nodes")
            if len(set(group)) != len(group):
                raise ValidationError(f"duplicate {name} node")
            for n in group:
                if n not in known:
                    raise ValidationError(f"{name} {n} is not a declared node")
        if len(self.demand) != len(self.origins):
            raise DimensionMismatch("one demand value per origin is required")
        if any(not np.isfinite(o) or o < 0 for o in self.demand):
            raise ValidationError("origin demands must be finite and nonnegative")
        if not any(o > 0 for o in self.demand):
            raise ValidationError("at least one origin demand must be positive")
        if not (np.isfinite(self.total_firms) and self.total_firms > 0):
            raise ValidationError("total number of firms T must be positive")

    @property
    def n_links(self) -> int:
        return len(self.links)

    @property
    def n_origins(self) -> int:
        return len(self.origins)

    @property
    def n_destinations(self) -> int:
        return len(self.destinations)

    @property
    def total_demand(self) -> float:
        return float(sum(self.demand))

    def node_index(self) -> dict[str, int]:
        return {n: i for i, n in enumerate(self.nodes)}

    def with_demand(self, demand) -> "Network":
        return Network(self.nodes, self.links, self.origins, tuple(demand), self.destinations, self.total_firms)


@dataclass(frozen=True, eq=False)
class RouteSet:
    """All simple routes of every OD pair, in CSR form.

    OD pairs are ordered origin-major (``od = r * n_dest + s``), and the routes
    of OD pair ``od`` occupy ``od_ptr[od]:od_ptr[od + 1]``. Route ``k`` uses
    links ``route_links[route_ptr[k]:route_ptr[k + 1]]``.
    """

    n_origins: int
    n_destinations: int
    n_links: int
    route_nodes: tuple[tuple[str, ...], ...]
    od_ptr: np.ndarray
    route_ptr: np.ndarray
    route_links: np.ndarray
    route_od: np.ndarray = field(init=False)
    route_origin: np.ndarray = field(init=False)
    route_dest: np.ndarray = field(init=False)
    origin_ptr: np.ndarray = field(init=False)

    def __post_init__(self):
        counts = np.diff(self.od_ptr)
        route_od = np.repeat(np.arange(len(counts)), counts)
        object.__setattr__(self, "route_od", _frozen(route_od))
        object.__setattr__(self, "route_origin", _frozen(route_od // self.n_destinations))
        object.__setattr__(self, "route_dest", _frozen(route_od % self.n_destinations))
        object.__setattr__(self, "origin_ptr", _frozen(self.od_ptr[:: self.n_destinations]))
        for name in ("od_ptr", "route_ptr", "route_links"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def n_routes(self) -> int:
        return len(self.route_nodes)

    @property
    def n_od(self) -> int:
        return self.n_origins * self.n_destinations

    def routes_of(self, r: int, s: int) -> range:
        od = r * self.n_destinations + s
        return range(int(self.od_ptr[od]), int(self.od_ptr[od + 1]))

    def links_of(self, k: int) -> np.ndarray:
        return self.route_links[self.route_ptr[k] : self.route_ptr[k + 1]]

    def incidence(self) -> np.ndarray:
        """Dense link-route incidence matrix (links x routes)."""
        delta = np.zeros((self.n_links, self.n_routes))
        for k in range(self.n_routes):
            delta[self.links_of(k), k] = 1.0
        return delta


def enumerate_routes(network: Network, max_routes: int = DEFAULT_MAX_ROUTES) -> RouteSet:
    """Enumerate every simple route of every OD pair by depth-first search.

    Successors are visited in node declaration order, so each OD pair's routes
    come out in lexicographic order of their node-index sequences.
    """
    index = network.node_index()
    link_id = {(index[a], index[b]): i for i, (a, b) in enumerate(network.links)}
    succ: list[list[int]] = [[] for _ in network.nodes]
    for tail, head in link_id:
        succ[tail].append(head)
    for s in succ:
        s.sort()

    route_nodes: list[tuple[str, ...]] = []
    route_links: list[int] = []
    route_ptr = [0]
    od_ptr = [0]
    for r in network.origins:
        for s in network.destinations:
            found = 0
            source, target = index[r], index[s]
            path = [source]
            on_path = {source}
            # stack of successor iterators mirrors the current path
            stack = [iter(succ[source])] if source != target else []
            if source == target:
                found = 1
                route_nodes.append((r,))
                route_ptr.append(len(route_links))
            while stack:
                nxt = next(stack[-1], None)
                if nxt is None:
                    stack.pop()
                    on_path.discard(path.pop())
                    continue
                if nxt in on_path:
                    continue
                if nxt == target:
                    found += 1
                    if found > max_routes:
                        raise RouteLimitExceeded((r, s), max_routes)
                    full = path + [nxt]
                    route_nodes.append(tuple(network.nodes[i] for i in full))
                    route_links.extend(link_id[(a, b)] for a, b in zip(full, full[1:]))
                    route_ptr.append(len(route_links))
                    continue
                path.append(nxt)
                on_path.add(nxt)
                stack.append(iter(succ[nxt]))
            if found == 0:
                raise Unreachable((r, s))
            od_ptr.append(len(route_nodes))

    return RouteSet(
        n_origins=network.n_origins,
        n_destinations=network.n_destinations,
        n_links=network.n_links,
        route_nodes=tuple(route_nodes),
        od_ptr=np.array(od_ptr, dtype=np.int64),
        route_ptr=np.array(route_ptr, dtype=np.int64),
        route_links=np.array(route_links, dtype=np.int64),
    )


@dataclass(frozen=True, eq=False)
class CombinedState:
    """A feasible point (f, x, q, d, h).

    ``q`` is stored as an (origins x destinations) matrix.
    """

    f: np.ndarray
    x: np.ndarray
    q: np.ndarray
    d: np.ndarray
    h: np.ndarray

    def as_dict(self) -> dict[str, list]:
        return {
            "f": self.f.tolist(),
            "x": self.x.tolist(),
            "q": self.q.tolist(),
            "d": self.d.tolist(),
            "h": self.h.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CombinedState":
        return cls(*(np.asarray(data[k], dtype=float) for k in ("f", "x", "q", "d", "h")))

    def distance(self, other: "CombinedState") -> float:
        """Sup-norm distance over every component."""
        return max(float(np.max(np.abs(np.atleast_1d(a - b)), initial=0.0)) for a, b in zip(self, other))

    def __iter__(self):
        return iter((self.f, self.x, self.q, self.d, self.h))


def project_state(f, network: Network, routes: RouteSet) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Aggregate path flows into link flows, OD demands and destination demands."""
    f = np.asarray(f, dtype=float)
    if f.shape != (routes.n_routes,):
        raise DimensionMismatch(f"expected {routes.n_routes} path flows, got shape {f.shape}")
    if routes.n_links != network.n_links or routes.n_origins != network.n_origins:
        raise DimensionMismatch("route set was built for a different network")
    counts = np.diff(routes.route_ptr)
    x = np.bincount(routes.route_links, weights=np.repeat(f, counts), minlength=network.n_links)
    q = np.bincount(routes.route_od, weights=f, minlength=routes.n_od).reshape(routes.n_origins, routes.n_destinations)
    return x, q, q.sum(axis=0)


def make_state(f, h, network: Network, routes: RouteSet) -> CombinedState:
    x, q, d = project_state(f, network, routes)
    return CombinedState(np.asarray(f, dtype=float).copy(), x, q, d, np.asarray(h, dtype=float).copy())


@dataclass(frozen=True)
class StateCheck:
    valid: bool
    residuals: dict[str, float]

    def __bool__(self) -> bool:
        return self.valid


def validate_state(state: CombinedState, network: Network, routes: RouteSet, tol: float = 1e-10) -> StateCheck:
    """Check feasibility of ``state``; residuals are sup-norm violations."""
    f, x, q, d, h = (np.asarray(a, dtype=float) for a in state)
    shapes_ok = (
        f.shape == (routes.n_routes,)
        and x.shape == (network.n_links,)
        and q.shape == (network.n_origins, network.n_destinations)
        and d.shape == (network.n_destinations,)
        and h.shape == (network.n_destinations,)
    )
    if not shapes_ok:
        return StateCheck(False, {"shape": float("inf")})

    def sup(a) -> float:
        return float(np.max(np.abs(a), initial=0.0))

    x_f, q_f, d_f = project_state(f, network, routes)
    res = {
        "path_nonnegativity": sup(np.minimum(f, 0.0)),
        "path_demand": sup(q_f - q),
        "origin_demand": sup(q.sum(axis=1) - np.asarray(network.demand)),
        "link_flow": sup(x_f - x),
        "destination_demand": sup(q.sum(axis=0) - d),
        "firm_nonnegativity": sup(np.minimum(h, 0.0)),
        "firm_total": abs(float(h.sum()) - network.total_firms),
    }
    finite = all(np.all(np.isfinite(a)) for a in (f, x, q, d, h))
    return StateCheck(finite and all(v <= tol for v in res.values()), res)


def random_feasible_state(network: Network, routes: RouteSet, rng: np.random.Generator) -> CombinedState:
    """Draw a strictly positive feasible point (flat Dirichlet on each simplex)."""
    f = np.empty(routes.n_routes)
    for r, o in enumerate(network.demand):
        lo, hi = routes.origin_ptr[r], routes.origin_ptr[r + 1]
        f[lo:hi] = o * rng.dirichlet(np.ones(hi - lo))
    h = network.total_firms * rng.dirichlet(np.ones(network.n_destinations))
    return make_state(f, h, network, routes)
