"""Link travel times, trip/business attraction functions and their externality-adjusted forms.

Link times are power functions ``t(x) = t0 + b * x**p``. Destination ``s`` offers
travelers ``A(d, h) = a0 + a1*ln(1 + h) - a2*d - a3*d**2`` and firms
``B(d, h) = b0 + b1*d - b2*h``, where ``d`` is the number of trips ending at
``s`` and ``h`` the number of firms located there. All quantities share one
generalized-cost unit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DimensionMismatch, NegativeFlow, ValidationError


def _vec(values) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class LinkTimeSpec:
    t0: np.ndarray
    b: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        for name in ("t0", "b", "p"):
            object.__setattr__(self, name, _vec(getattr(self, name)))
        if not (len(self.t0) == len(self.b) == len(self.p)):
            raise DimensionMismatch("t0, b and p need one entry per link")

    def __len__(self) -> int:
        return len(self.t0)

    def time(self, x) -> np.ndarray:
        return self.t0 + self.b * np.power(x, self.p)

    def derivative(self, x) -> np.ndarray:
        # p >= 1, so x**(p-1) is finite at x = 0
        return self.b * self.p * np.power(x, self.p - 1.0)

    def marginal(self, x) -> np.ndarray:
        """Congestion externality ``x * t'(x)``."""
        return self.b * self.p * np.power(x, self.p)


class AttractionValues(NamedTuple):
    A: np.ndarray
    A_d: np.ndarray
    A_h: np.ndarray
    B: np.ndarray
    B_d: np.ndarray
    B_h: np.ndarray


@dataclass(frozen=True, eq=False)
class AttractionSpec:
    a0: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    a3: np.ndarray
    b0: np.ndarray
    b1: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        names = ("a0", "a1", "a2", "a3", "b0", "b1", "b2")
        for name in names:
            object.__setattr__(self, name, _vec(getattr(self, name)))
        if len({len(getattr(self, n)) for n in names}) != 1:
            raise DimensionMismatch("attraction parameters need one entry per destination")

    def __len__(self) -> int:
        return len(self.a0)

    def trip(self, d, h) -> np.ndarray:
        return self.a0 + self.a1 * np.log1p(h) - self.a2 * d - self.a3 * d * d

    def business(self, d, h) -> np.ndarray:
        return self.b0 + self.b1 * d - self.b2 * h

    def evaluate(self, d, h) -> AttractionValues:
        d = np.asarray(d, dtype=float)
        h = np.asarray(h, dtype=float)
        ones = np.ones_like(d + h)
        return AttractionValues(
            A=self.trip(d, h),
            A_d=-self.a2 - 2.0 * self.a3 * d,
            A_h=self.a1 / (1.0 + h),
            B=self.business(d, h),
            B_d=self.b1 * ones,
            B_h=-self.b2 * ones,
        )


@dataclass(frozen=True)
class LogitParams:
    """Dispersion parameters: route (alpha), location (beta), destination (gamma)."""

    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            v = float(getattr(self, name))
            if not (np.isfinite(v) and v > 0):
                raise ValidationError(f"{name} must be positive, got {v}")
            object.__setattr__(self, name, v)
        if self.alpha < self.gamma:
            raise ValidationError(
                f"nested logit requires alpha >= gamma (alpha={self.alpha}, gamma={self.gamma})"
            )


@dataclass(frozen=True, eq=False)
class Behavior:
    links: LinkTimeSpec
    attraction: AttractionSpec
    labels: tuple[str, ...] = field(default=("user-supplied",))


# -- single-element accessors ------------------------------------------------


def link_time(spec: LinkTimeSpec, a: int, x_a: float) -> float:
    if x_a < 0:
        raise NegativeFlow(f"negative flow {x_a} on link {a}")
    return float(spec.t0[a] + spec.b[a] * x_a ** spec.p[a])


def link_time_marginal(spec: LinkTimeSpec, a: int, x_a: float) -> float:
    if x_a < 0:
        raise NegativeFlow(f"negative flow {x_a} on link {a}")
    return float(spec.b[a] * spec.p[a] * x_a ** spec.p[a])


def attraction_eval(spec: AttractionSpec, s: int, d_s: float, h_s: float) -> AttractionValues:
    """Attractions of destination ``s`` and their four first partials."""
    a1, a2, a3, b1, b2 = (float(getattr(spec, n)[s]) for n in ("a1", "a2", "a3", "b1", "b2"))
    return AttractionValues(
        A=float(spec.a0[s] + a1 * np.log1p(h_s) - a2 * d_s - a3 * d_s * d_s),
        A_d=-a2 - 2.0 * a3 * d_s,
        A_h=a1 / (1.0 + h_s),
        B=float(spec.b0[s] + b1 * d_s - b2 * h_s),
        B_d=b1,
        B_h=-b2,
    )


# -- adjusted (externality-internalizing) functions ---------------------------


def adjusted_traffic_functions(behavior: Behavior, state) -> tuple[np.ndarray, np.ndarray]:
    """Link times and trip attractions with the travelers' own externalities added.

    Returns ``(t + x t', A + d dA/dd)``.
    """
    t_bar = behavior.links.time(state.x) + behavior.links.marginal(state.x)
    av = behavior.attraction.evaluate(state.d, state.h)
    return t_bar, av.A + state.d * av.A_d


def adjusted_overall_functions(behavior: Behavior, state) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Adjusted functions whose equilibrium reproduces the overall system optimum.

    Returns ``(t_bar, A_barbar, B_bar)`` with
    ``A_barbar = A + d dA/dd + h dB/dd`` and ``B_bar = B + d dA/dh + h dB/dh``.
    """
    t_bar = behavior.links.time(state.x) + behavior.links.marginal(state.x)
    av = behavior.attraction.evaluate(state.d, state.h)
    a_bb = av.A + state.d * av.A_d + state.h * av.B_d
    b_bar = av.B + state.d * av.A_h + state.h * av.B_h
    return t_bar, a_bb, b_bar


# -- assumption checks ---------------------------------------------------------


@dataclass
class AssumptionReport:
    valid: bool
    violations: list[str]
    warnings: list[str]

    def __bool__(self) -> bool:
        return self.valid


def validate_assumptions(behavior: Behavior) -> AssumptionReport:
    """Sign/shape inspection of the parameters (no sampling).

    With ``a3 == 0`` the trip attraction is linear in ``d``; that is reported
    as a warning rather than a violation.
    """
    lt, at = behavior.links, behavior.attraction
    violations: list[str] = []
    warnings: list[str] = []

    def check(mask, message):
        for i in np.flatnonzero(mask):
            violations.append(message.format(i=int(i)))

    finite = all(np.all(np.isfinite(v)) for v in (lt.t0, lt.b, lt.p, at.a0, at.a1, at.a2, at.a3, at.b0, at.b1, at.b2))
    if not finite:
        violations.append("non-finite parameter")
    check(~(lt.t0 > 0), "link {i}: free-flow time must be positive")
    check(~(lt.b > 0), "link {i}: travel time must be strictly increasing (b > 0)")
    check(~(lt.p >= 1), "link {i}: travel time must be convex and continuously differentiable (p >= 1)")
    check(~(at.a2 > 0), "destination {i}: trip attraction must be strictly decreasing of d_s (a2 > 0)")
    check(~(at.a3 >= 0), "destination {i}: trip attraction must be concave in d_s (a3 >= 0)")
    check(~(at.a1 > 0), "destination {i}: trip attraction must be strictly increasing of h_s (a1 > 0)")
    check(~(at.b1 > 0), "destination {i}: business attraction must be strictly increasing of d_s (b1 > 0)")
    check(~(at.b2 > 0), "destination {i}: business attraction must be strictly decreasing of h_s (b2 > 0)")
    for i in np.flatnonzero(at.a3 == 0):
        warnings.append(f"destination {int(i)}: a3 = 0, trip attraction is only weakly concave in d_s")
    return AssumptionReport(not violations, violations, warnings)
