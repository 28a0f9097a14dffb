"""Command-line interface: ``landuse-pricing {solve,price,verify,sweep,check,oracle}``.

Every command prints a human-readable table and writes a JSON report
(``-o/--output``, default ``<scenario>.<command>.json`` in the working
directory). Reports hold no timings or paths that change between runs, so
repeated runs are byte-identical.

Exit codes: 0 success, 1 negative verification verdict, 2 parse error,
3 validation error, 4 convergence failure, 5 instance-size guard.
"""

from __future__ import annotations

import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import __version__
from .behavior import validate_assumptions
from .equilibrium import check_uniqueness, solve_combined
from .errors import (
    InstanceTooLarge,
    NoKKTPoint,
    NotConverged,
    ParseError,
    RouteLimitExceeded,
    ValidationError,
)
from .io import Scenario, dump_report, read_pricing, read_scenario, write_pricing
from .network import enumerate_routes
from .oracle import GridSpec, grid_equilibrium, grid_fractions, grid_optimum
from .pricing import (
    PricingScheme,
    extract_pricing,
    social_cost_total,
    solve_overall_so,
    solve_uniform_road_pricing,
    verify_support,
)

EXIT_VERDICT, EXIT_PARSE, EXIT_VALIDATION, EXIT_CONVERGENCE, EXIT_GUARD = 1, 2, 3, 4, 5
WORKERS_ENV = "LANDUSE_PRICING_WORKERS"
SWEEP_NOTE = (
    "The descending percentages depend on the reconstructed network and the chosen "
    "function parameters; a value near 60% is not a target and is not checked."
)


def _fail(code: int, message: str, trace_path: Path | None = None, trace=None):
    click.echo(f"error: {message}", err=True)
    if trace_path is not None and trace is not None:
        dump_report({"error": message, "trace": trace}, trace_path)
        click.echo(f"diagnostic trace written to {trace_path}", err=True)
    sys.exit(code)


def _load(path) -> Scenario:
    try:
        return read_scenario(path)
    except ParseError as exc:
        _fail(EXIT_PARSE, str(exc))
    except ValidationError as exc:
        _fail(EXIT_VALIDATION, str(exc))


def _output(scenario: Scenario, command: str, output) -> Path:
    return Path(output) if output else Path(f"{scenario.name}.{command}.json")


def _guarded(fn, scenario: Scenario, command: str):
    """Run ``fn`` and translate library errors into exit codes."""
    try:
        return fn()
    except (NotConverged, NoKKTPoint) as exc:
        trace = getattr(exc, "trace", None)
        _fail(EXIT_CONVERGENCE, str(exc), Path(f"{scenario.name}.{command}.trace.json"), trace or [])
    except (InstanceTooLarge, RouteLimitExceeded) as exc:
        _fail(EXIT_GUARD, str(exc))
    except ValidationError as exc:
        _fail(EXIT_VALIDATION, str(exc))


def _table(rows, headers) -> str:
    cells = [[str(h) for h in headers]] + [[_fmt(v) for v in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{v:.6g}"
    return str(v)


def _state_table(scenario: Scenario, state) -> str:
    net = scenario.network
    rows = [
        (s, float(state.d[i]), float(state.h[i])) for i, s in enumerate(net.destinations)
    ]
    out = _table(rows, ["destination", "d", "h"])
    od_rows = [
        (r, s, float(state.q[i, j])) for i, r in enumerate(net.origins) for j, s in enumerate(net.destinations)
    ]
    return out + "\n\n" + _table(od_rows, ["origin", "destination", "q"])


def _scheme_dict(scheme: PricingScheme, scenario: Scenario) -> dict:
    net = scenario.network
    return {
        "mode": scheme.mode,
        "link_toll": {f"{a}->{b}": float(v) for (a, b), v in zip(net.links, scheme.link_toll)},
        "entrance_fee": dict(zip(net.destinations, map(float, scheme.entrance_fee))),
        "business_tax": dict(zip(net.destinations, map(float, scheme.business_tax))),
        "net_revenue": scheme.net_revenue,
    }


def _report_base(scenario: Scenario, command: str) -> dict:
    lg = scenario.logit
    return {
        "command": command,
        "scenario": scenario.name,
        "logit": {"alpha": lg.alpha, "beta": lg.beta, "gamma": lg.gamma},
        "network": {
            "origins": list(scenario.network.origins),
            "demand": list(scenario.network.demand),
            "destinations": list(scenario.network.destinations),
            "total_firms": scenario.network.total_firms,
        },
    }


def _gap_dict(report) -> dict:
    return {
        "vi_gap": report.vi_gap,
        "residuals": report.residuals,
        "iterations": report.iterations,
        "converged": report.converged,
    }


@click.group()
@click.version_option(__version__, prog_name="landuse-pricing")
def main():
    """Combined land-use/traffic equilibrium and optimal congestion pricing."""


@main.command()
@click.argument("scenario", type=click.Path(dir_okay=False))
@click.option("-o", "--output", type=click.Path(dir_okay=False), help="JSON report path.")
def solve(scenario, output):
    """Solve the untolled combined equilibrium."""
    sc = _load(scenario)

    def run():
        routes = enumerate_routes(sc.network, sc.max_routes)
        return solve_combined(sc.network, routes, sc.behavior, sc.logit, sc.config)

    state, rep = _guarded(run, sc, "solve")
    cost = social_cost_total(state, sc.behavior, sc.logit)
    report = _report_base(sc, "solve") | {
        "state": state.as_dict(),
        "solver": _gap_dict(rep),
        "cost": cost.as_dict(),
    }
    path = _output(sc, "solve", output)
    dump_report(report, path)
    click.echo(_state_table(sc, state))
    click.echo(f"\nvi gap {rep.vi_gap:.3e}  max residual {rep.max_residual:.3e}  iterations {rep.iterations}")
    click.echo(f"total social cost {cost.total:.10g}  (travelers {cost.travelers:.10g})")
    click.echo(f"report: {path}")


def _priced(sc: Scenario, mode: str):
    routes = enumerate_routes(sc.network, sc.max_routes)
    if mode == "road":
        state, scheme, rep = solve_uniform_road_pricing(
            sc.network, routes, sc.behavior, sc.logit, sc.config, sc.multistart, sc.seed
        )
        return routes, state, scheme, rep
    ue, _ = solve_combined(sc.network, routes, sc.behavior, sc.logit, sc.config)
    state, rep = solve_overall_so(
        sc.network, routes, sc.behavior, sc.logit, sc.config, sc.multistart, sc.seed, initial_states=(ue,)
    )
    return routes, state, extract_pricing(state, sc.behavior, "full"), rep


@main.command()
@click.argument("scenario", type=click.Path(dir_okay=False))
@click.option("--mode", type=click.Choice(["road", "full"]), default=None, help="Defaults to the scenario's pricing mode, else full.")
@click.option("-o", "--output", type=click.Path(dir_okay=False), help="JSON report path.")
@click.option("--pricing-file", type=click.Path(dir_okay=False), help="Pricing CSV path.")
def price(scenario, mode, output, pricing_file):
    """Compute the optimum and the prices that support it."""
    sc = _load(scenario)
    mode = mode or (sc.pricing if sc.pricing != "none" else "full")
    routes, state, scheme, rep = _guarded(lambda: _priced(sc, mode), sc, "price")
    cost = social_cost_total(state, sc.behavior, sc.logit)
    csv_path = Path(pricing_file) if pricing_file else Path(f"{sc.name}.{mode}.pricing.csv")
    write_pricing(scheme, sc.network, csv_path)
    report = _report_base(sc, "price") | {
        "mode": mode,
        "state": state.as_dict(),
        "solver": _gap_dict(rep),
        "objective": rep.extra.get("objective"),
        "candidates": len(rep.extra.get("candidates", [])),
        "cost": cost.as_dict(),
        "pricing": _scheme_dict(scheme, sc),
    }
    if mode == "full":
        report["direct_objective"] = rep.extra.get("direct_objective")
        report["discrepancy"] = rep.extra.get("discrepancy")
    path = _output(sc, "price", output)
    dump_report(report, path)
    net = sc.network
    click.echo(_table([(f"{a}->{b}", float(x), float(t)) for (a, b), x, t in zip(net.links, state.x, scheme.link_toll)], ["link", "x", "toll"]))
    click.echo()
    click.echo(
        _table(
            [(s, float(state.d[i]), float(state.h[i]), float(scheme.entrance_fee[i]), float(scheme.business_tax[i])) for i, s in enumerate(net.destinations)],
            ["destination", "d", "h", "entrance_fee", "business_tax"],
        )
    )
    click.echo(f"\nmode {mode}  objective {rep.extra.get('objective'):.10g}  net revenue {scheme.net_revenue:.6g}")
    click.echo(f"pricing: {csv_path}\nreport: {path}")


@main.command()
@click.argument("scenario", type=click.Path(dir_okay=False))
@click.argument("pricing_file", type=click.Path(dir_okay=False))
@click.option("-o", "--output", type=click.Path(dir_okay=False), help="JSON report path.")
def verify(scenario, pricing_file, output):
    """Check that posted prices reproduce the optimum they were computed for."""
    sc = _load(scenario)
    try:
        mode, toll, fee, tax = read_pricing(pricing_file, sc.network)
    except ParseError as exc:
        _fail(EXIT_PARSE, str(exc))
    if mode not in ("road", "full"):
        _fail(EXIT_PARSE, f"pricing file mode must be road or full, got {mode!r}")

    def run():
        routes, optimum, _, _ = _priced(sc, mode)
        scheme = PricingScheme(mode, toll, fee, tax, optimum)
        return verify_support(sc.network, routes, sc.behavior, sc.logit, scheme, sc.config)

    verdict = _guarded(run, sc, "verify")
    report = _report_base(sc, "verify") | {
        "mode": mode,
        "holds": verdict.holds,
        "distance": verdict.distance,
        "cost_optimum": verdict.cost_optimum,
        "cost_tolled": verdict.cost_tolled,
        "relative_cost_gap": verdict.relative_cost_gap,
        "fixed_point_residual": verdict.fixed_point_residual,
        "tolled_state": verdict.tolled_state.as_dict(),
    }
    path = _output(sc, "verify", output)
    dump_report(report, path)
    click.echo(
        _table(
            [("distance to optimum", verdict.distance, 1e-6), ("relative cost gap", verdict.relative_cost_gap, 1e-8)],
            ["check", "value", "tolerance"],
        )
    )
    click.echo(f"\nsupport {'HOLDS' if verdict.holds else 'FAILS'}\nreport: {path}")
    if not verdict.holds:
        sys.exit(EXIT_VERDICT)


# -- sweep ---------------------------------------------------------------------------


def sweep_row(scenario: Scenario, k: int) -> dict:
    """All runs for demand scenario ``k`` (1-based)."""
    demand = scenario.sweep.demands(k)
    net = scenario.network.with_demand(demand)
    beh, lg, cfg = scenario.behavior, scenario.logit, scenario.config
    try:
        routes = enumerate_routes(net, scenario.max_routes)
        ue, ue_rep = solve_combined(net, routes, beh, lg, cfg)
        so, so_rep = solve_overall_so(net, routes, beh, lg, cfg, scenario.multistart, scenario.seed, initial_states=(ue,))
        scheme = extract_pricing(so, beh, "full")
        support = verify_support(net, routes, beh, lg, scheme, cfg)
        road, road_scheme, _ = solve_uniform_road_pricing(net, routes, beh, lg, cfg, scenario.multistart, scenario.seed)
    except (NotConverged, NoKKTPoint) as exc:
        raise type(exc)(f"scenario {k}: {exc}") from exc
    c_ue = social_cost_total(ue, beh, lg)
    c_so = social_cost_total(so, beh, lg)
    c_road = social_cost_total(road, beh, lg)
    return {
        "k": k,
        "demand": list(demand),
        "untolled_cost": c_ue.total,
        "priced_cost": c_so.total,
        "descending_percentage": 100.0 * (1.0 - c_so.total / c_ue.total) if c_ue.total > 0 else None,
        "untolled_traveler_cost": c_ue.travelers,
        "road_priced_traveler_cost": c_road.travelers,
        "road_efficient": c_road.travelers <= c_ue.travelers,
        "support_holds": support.holds,
        "support_distance": support.distance,
        "discrepancy": so_rep.extra["discrepancy"],
        "untolled": {"q": ue.q.tolist(), "d": ue.d.tolist(), "h": ue.h.tolist()},
        "priced": {"q": so.q.tolist(), "d": so.d.tolist(), "h": so.h.tolist()},
        "h_spread_untolled": float(ue.h.max() - ue.h.min()),
        "h_spread_priced": float(so.h.max() - so.h.min()),
        "prices": _scheme_dict(scheme, scenario),
        "road_prices": _scheme_dict(road_scheme, scenario),
        "max_residual": max(ue_rep.max_residual, so_rep.max_residual),
    }


def _sweep_job(args):
    path, k = args
    return sweep_row(read_scenario(path), k)


def run_sweep(scenario: Scenario, workers: int = 1) -> dict:
    if scenario.sweep is None:
        raise ValidationError(f"scenario {scenario.name} has no [sweep] section")
    ks = range(1, scenario.sweep.count + 1)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_job, [(scenario.path, k) for k in ks]))
    else:
        rows = [sweep_row(scenario, k) for k in ks]
    pct = [r["descending_percentage"] for r in rows]
    return _report_base(scenario, "sweep") | {
        "sweep": {
            "base_demand": list(scenario.sweep.base_demand),
            "increment": scenario.sweep.increment,
            "count": scenario.sweep.count,
        },
        "rows": rows,
        "summary": {
            "all_descending_nonnegative": all(p is not None and p >= 0 for p in pct),
            "all_road_efficient": all(r["road_efficient"] for r in rows),
            "all_support_holds": all(r["support_holds"] for r in rows),
            "min_descending_percentage": min(p for p in pct if p is not None),
            "max_descending_percentage": max(p for p in pct if p is not None),
            "balanced_firms_under_pricing": sum(r["h_spread_priced"] <= r["h_spread_untolled"] for r in rows),
        },
        "note": SWEEP_NOTE,
    }


def _workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        _fail(EXIT_VALIDATION, f"{WORKERS_ENV} must be an integer, got {raw!r}")


@main.command()
@click.argument("scenario", type=click.Path(dir_okay=False))
@click.option("-o", "--output", type=click.Path(dir_okay=False), help="JSON report path.")
def sweep(scenario, output):
    """Run the demand sweep: untolled vs fully priced vs road-priced, per scenario."""
    sc = _load(scenario)
    report = _guarded(lambda: run_sweep(sc, _workers()), sc, "sweep")
    path = _output(sc, "sweep", output)
    dump_report(report, path)
    rows = [
        (
            r["k"],
            "/".join(_fmt(v) for v in r["demand"]),
            r["untolled_cost"],
            r["priced_cost"],
            r["descending_percentage"],
            r["untolled_traveler_cost"],
            r["road_priced_traveler_cost"],
            "/".join(_fmt(v) for v in r["priced"]["h"]),
            "yes" if r["support_holds"] else "NO",
        )
        for r in report["rows"]
    ]
    click.echo(_table(rows, ["k", "demand", "untolled", "priced", "desc %", "trav untolled", "trav road", "h priced", "support"]))
    click.echo(f"\n{SWEEP_NOTE}\nreport: {path}")


@main.command()
@click.argument("scenario", type=click.Path(dir_okay=False))
@click.option("-o", "--output", type=click.Path(dir_okay=False), help="JSON report path.")
def check(scenario, output):
    """Check the sufficient uniqueness conditions over the demand/firm box."""
    sc = _load(scenario)
    d_max = sc.network.total_demand
    if sc.sweep is not None:
        d_max = max(d_max, sum(sc.sweep.demands(sc.sweep.count)))
    verdict = check_uniqueness(sc.behavior, d_max, sc.network.total_firms)
    assumptions = validate_assumptions(sc.behavior)
    report = _report_base(sc, "check") | {
        "status": verdict.status,
        "box": {"d_max": d_max, "h_max": sc.network.total_firms},
        "margins": {s: list(m) for s, m in zip(sc.network.destinations, verdict.margins)},
        "witnesses": [w.__dict__ | {"destination": sc.network.destinations[w.destination]} for w in verdict.witnesses],
        "assumptions": {"valid": assumptions.valid, "violations": assumptions.violations, "warnings": assumptions.warnings},
    }
    path = _output(sc, "check", output)
    dump_report(report, path)
    click.echo(_table([(s, m[0], m[1]) for s, m in zip(sc.network.destinations, verdict.margins)], ["destination", "cond 1 max", "cond 2 max"]))
    for w in verdict.witnesses:
        click.echo(f"witness: destination {sc.network.destinations[w.destination]} condition {w.condition} at d={w.d:g}, h={w.h:g}: {w.value:.6g} >= 0")
    click.echo(f"\nuniqueness conditions: {verdict.status}\nreport: {path}")


@main.command()
@click.argument("scenario", type=click.Path(dir_okay=False))
@click.option("--resolution", type=int, default=200, show_default=True, help="Grid points per free coordinate.")
@click.option("-o", "--output", type=click.Path(dir_okay=False), help="JSON report path.")
def oracle(scenario, resolution, output):
    """Compare the solvers with exhaustive grid references (tiny instances only)."""
    sc = _load(scenario)
    spec = GridSpec(resolution)

    def run():
        routes = enumerate_routes(sc.network, sc.max_routes)
        ge = grid_equilibrium(sc.network, routes, sc.behavior, sc.logit, spec)
        go = grid_optimum(sc.network, routes, sc.behavior, sc.logit, spec, "overall")
        ue, _ = solve_combined(sc.network, routes, sc.behavior, sc.logit, sc.config)
        so, rep = solve_overall_so(sc.network, routes, sc.behavior, sc.logit, sc.config, sc.multistart, sc.seed, initial_states=(ue,))
        return routes, ge, go, ue, so, rep

    routes, ge, go, ue, so, rep = _guarded(run, sc, "oracle")
    cells = float(np.abs(grid_fractions(ue, sc.network, routes) - ge.coords).max() / ge.cell)
    objective = rep.extra["objective"]
    report = _report_base(sc, "oracle") | {
        "resolution": resolution,
        "grid_points": ge.n_points,
        "equilibrium": {
            "grid_residual": ge.value,
            "grid_state": ge.state.as_dict(),
            "solver_state": ue.as_dict(),
            "distance_in_cells": cells,
            "agrees": cells <= 1.0,
        },
        "optimum": {
            "grid_minimum": go.value,
            "lipschitz_slack": go.slack,
            "solver_objective": objective,
            "agrees": objective <= go.value + go.slack,
        },
    }
    path = _output(sc, "oracle", output)
    dump_report(report, path)
    click.echo(
        _table(
            [
                ("equilibrium", "distance (cells)", cells, "<= 1", report["equilibrium"]["agrees"]),
                ("optimum", "solver - grid min", objective - go.value, f"<= {go.slack:.3g}", report["optimum"]["agrees"]),
            ],
            ["problem", "measure", "value", "bound", "agrees"],
        )
    )
    click.echo(f"report: {path}")


if __name__ == "__main__":  # pragma: no cover
    main()
