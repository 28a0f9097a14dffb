"""Compare the compiled and numpy kernel backends.

Times each kernel on a monotone grid network and then a full combined
equilibrium solve on the same network under both backends.

    python3 benchmarks/bench_kernels.py [--size 7] [--repeat 50]
"""

import argparse
import time

import numpy as np

from landuse_pricing import _kernels as K
from landuse_pricing.behavior import AttractionSpec, Behavior, LinkTimeSpec, LogitParams
from landuse_pricing.equilibrium import EquilibriumConfig, solve_combined
from landuse_pricing.network import Network, enumerate_routes


def grid_instance(size: int, seed: int = 0):
    """``size x size`` grid with right/down links, two origins top-left, three destinations bottom-right."""
    rng = np.random.default_rng(seed)
    name = lambda i, j: f"{i},{j}"  # noqa: E731
    nodes = [name(i, j) for i in range(size) for j in range(size)]
    links = [(name(i, j), name(i, j + 1)) for i in range(size) for j in range(size - 1)]
    links += [(name(i, j), name(i + 1, j)) for i in range(size - 1) for j in range(size)]
    last = size - 1
    network = Network(
        nodes, links, [name(0, 0), name(0, 1)], [60.0, 40.0], [name(last, last), name(last, last - 1), name(last - 1, last)], 30.0
    )
    n = len(links)
    link_spec = LinkTimeSpec(rng.uniform(1, 3, n), rng.uniform(0.001, 0.01, n), np.full(n, 2.0))
    att = AttractionSpec([8.0, 7.5, 7.0], [0.5] * 3, [0.3] * 3, [0.0] * 3, [2.0] * 3, [0.1] * 3, [0.6] * 3)
    return network, Behavior(link_spec, att), LogitParams(0.5, 0.4, 0.3)


def best_of(fn, repeat: int) -> float:
    best = np.inf
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--size", type=int, default=7)
    parser.add_argument("--repeat", type=int, default=50)
    args = parser.parse_args()

    network, behavior, logit = grid_instance(args.size)
    routes = enumerate_routes(network)
    print(f"grid {args.size}x{args.size}: {network.n_links} links, {routes.n_routes} routes")
    backends = K.available_backends()
    if len(backends) < 2:
        print("compiled kernels not built; only the numpy backend is available")

    rng = np.random.default_rng(1)
    t = behavior.links.time(rng.uniform(0, 50, network.n_links))
    A = rng.uniform(0, 5, network.n_destinations)
    f = rng.uniform(0, 5, routes.n_routes)
    demand = np.array(network.demand)
    cases = {
        "route_costs": lambda: K.route_costs(t, routes.route_ptr, routes.route_links),
        "link_loads": lambda: K.link_loads(f, routes.route_ptr, routes.route_links, network.n_links),
        "segment_softmin": lambda: K.segment_softmin(f, routes.od_ptr, logit.alpha),
        "nested_logit": lambda: K.nested_logit(
            t, A, demand, routes.route_ptr, routes.route_links, routes.od_ptr, logit.alpha, logit.gamma
        ),
    }

    previous = K.BACKEND
    timings: dict[str, dict[str, float]] = {}
    try:
        for backend in backends:
            K.use_backend(backend)
            row = {label: best_of(fn, args.repeat) for label, fn in cases.items()}
            row["full solve"] = best_of(
                lambda: solve_combined(network, routes, behavior, logit, EquilibriumConfig(tolerance=1e-9)), 3
            )
            timings[backend] = row
    finally:
        K.use_backend(previous)

    header = f"{'kernel':<16}" + "".join(f"{b:>14}" for b in backends) + ("   speedup" if len(backends) > 1 else "")
    print(header)
    for label in timings[backends[0]]:
        line = f"{label:<16}" + "".join(f"{timings[b][label] * 1e3:>12.3f}ms" for b in backends)
        if len(backends) > 1:
            line += f"{timings['python'][label] / timings['cython'][label]:>9.1f}x"
        print(line)


if __name__ == "__main__":
    main()
