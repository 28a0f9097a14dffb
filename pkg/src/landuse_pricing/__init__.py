"""Combined business land-use equilibrium and congestion pricing."""

from importlib.metadata import PackageNotFoundError, version

from .behavior import AttractionSpec, Behavior, LinkTimeSpec, LogitParams, validate_assumptions
from .equilibrium import (
    EquilibriumConfig,
    GapReport,
    check_uniqueness,
    solve_combined,
    solve_parametric_location,
    solve_parametric_traffic,
    vi_gap,
)
from .errors import LandUsePricingError
from .io import load_fixture, read_network, read_scenario
from .network import CombinedState, Network, RouteSet, enumerate_routes, validate_state
from .pricing import (
    PricingScheme,
    extract_pricing,
    social_cost_total,
    social_cost_travelers,
    solve_overall_so,
    solve_relative_so,
    solve_uniform_road_pricing,
    verify_support,
)

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

__all__ = [
    "AttractionSpec",
    "Behavior",
    "CombinedState",
    "EquilibriumConfig",
    "GapReport",
    "LandUsePricingError",
    "LinkTimeSpec",
    "LogitParams",
    "Network",
    "PricingScheme",
    "RouteSet",
    "check_uniqueness",
    "enumerate_routes",
    "extract_pricing",
    "load_fixture",
    "read_network",
    "read_scenario",
    "social_cost_total",
    "social_cost_travelers",
    "solve_combined",
    "solve_overall_so",
    "solve_parametric_location",
    "solve_parametric_traffic",
    "solve_relative_so",
    "solve_uniform_road_pricing",
    "validate_assumptions",
    "validate_state",
    "verify_support",
    "vi_gap",
]
