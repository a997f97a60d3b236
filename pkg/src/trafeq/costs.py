"""Link travel-time functions, their integrals, convex conjugates and tolls.

Each family relates the travel time ``tau`` on a link to the flow ``f`` on
it, given the free-flow time ``t_free`` and the capacity ``cap``:

* ``LogBarrier(mu)``:   tau(f) = t_free * (1 - mu*ln(1 - f/cap))
* ``Hyperbolic(mu)``:   tau(f) = t_free * (1 + mu*f/(cap - f))
* ``BPR(gamma, mu)``:   tau(f) = t_free * (1 + gamma*(f/cap)**(1/mu))
* ``HardCap``:          tau(f) = t_free for f < cap, undefined at f >= cap

The barrier families blow up as f -> cap and degenerate to the hard-capacity
step as mu -> 0+, which is what ties capacitated assignment to the smooth
(Beckmann-style) potential formulation.  ``sigma`` is the antiderivative of
``tau`` (the per-link potential term), ``sigma_star`` its convex conjugate,
and ``inv_flow`` the stationarity map t -> f solving tau(f) = t (equivalently
the derivative of ``sigma_star``).

Everything here is a pure scalar/array function; domain violations raise
``CostDomainError`` instead of clamping, so infeasibility surfaces in the
solvers rather than being silently hidden.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum


class CostDomainError(ValueError):
    """Flow or time argument outside the family's domain."""


class Variant(Enum):
    LOG_BARRIER = "log_barrier"
    HYPERBOLIC = "hyperbolic"
    BPR = "bpr"
    HARD_CAP = "hard_cap"


@dataclass(frozen=True)
class CostFamily:
    """A parameterized link cost family.

    mu is the barrier/curvature parameter (> 0 for all but HardCap); gamma is
    the BPR congestion coefficient.  Typical BPR engineering values are
    mu = 0.25 (a quartic law) with gamma between 0.15 and 2.
    """

    variant: Variant
    mu: float = 0.0
    gamma: float = 0.0

    def __post_init__(self) -> None:
        if self.variant in (Variant.LOG_BARRIER, Variant.HYPERBOLIC, Variant.BPR):
            if self.mu <= 0:
                raise ValueError(f"{self.variant.value}: mu must be > 0, got {self.mu}")
        if self.variant is Variant.BPR and self.gamma <= 0:
            raise ValueError(f"bpr: gamma must be > 0, got {self.gamma}")

    @staticmethod
    def log_barrier(mu: float) -> "CostFamily":
        return CostFamily(Variant.LOG_BARRIER, mu=mu)

    @staticmethod
    def hyperbolic(mu: float) -> "CostFamily":
        return CostFamily(Variant.HYPERBOLIC, mu=mu)

    @staticmethod
    def bpr(gamma: float = 1.0, mu: float = 0.25) -> "CostFamily":
        return CostFamily(Variant.BPR, mu=mu, gamma=gamma)

    @staticmethod
    def hard_cap() -> "CostFamily":
        return CostFamily(Variant.HARD_CAP)


def _check_flow(family: CostFamily, cap: float, f: float) -> None:
    if f < 0:
        raise CostDomainError(f"flow must be nonnegative, got {f}")
    if family.variant is not Variant.BPR and f >= cap:
        raise CostDomainError(
            f"flow {f} at or above capacity {cap} for {family.variant.value}"
        )


def tau(family: CostFamily, t_free: float, cap: float, f: float) -> float:
    """Travel time at flow f."""
    _check_flow(family, cap, f)
    v = family.variant
    if v is Variant.LOG_BARRIER:
        return t_free * (1.0 - family.mu * math.log1p(-f / cap))
    if v is Variant.HYPERBOLIC:
        return t_free * (1.0 + family.mu * f / (cap - f))
    if v is Variant.BPR:
        return t_free * (1.0 + family.gamma * (f / cap) ** (1.0 / family.mu))
    return t_free  # HardCap, f < cap


def sigma(family: CostFamily, t_free: float, cap: float, f: float) -> float:
    """Integral of tau from 0 to f (per-link potential term)."""
    _check_flow(family, cap, f)
    v = family.variant
    if v is Variant.LOG_BARRIER:
        # int ln(1 - z/cap) dz = -(cap - f)ln(1 - f/cap) - f
        lg = math.log1p(-f / cap)
        return t_free * f + t_free * family.mu * ((cap - f) * lg + f)
    if v is Variant.HYPERBOLIC:
        lg = math.log1p(-f / cap)
        return t_free * f - t_free * family.mu * (f + cap * lg)
    if v is Variant.BPR:
        mu = family.mu
        return t_free * f + t_free * family.gamma * (mu / (1.0 + mu)) * f * (
            f / cap
        ) ** (1.0 / mu)
    return t_free * f


def _check_time(family: CostFamily, t_free: float, t: float) -> None:
    v = family.variant
    if v is Variant.HYPERBOLIC:
        if t <= (1.0 - family.mu) * t_free:
            raise CostDomainError(
                f"time {t} outside hyperbolic domain (> {(1 - family.mu) * t_free})"
            )
    elif t < t_free:
        raise CostDomainError(f"time {t} below free-flow time {t_free}")


def sigma_star(family: CostFamily, t_free: float, cap: float, t: float) -> float:
    """Convex conjugate of sigma, evaluated at time t.

    As mu -> 0+ every family's conjugate converges pointwise to
    (t - t_free) * cap, the hard-capacity (queueing) term.
    """
    _check_time(family, t_free, t)
    v = family.variant
    dt = t - t_free
    if v is Variant.LOG_BARRIER:
        return dt * cap - cap * t_free * family.mu * (
            1.0 - math.exp(-dt / (t_free * family.mu))
        )
    if v is Variant.HYPERBOLIC:
        mu = family.mu
        return dt * cap + t_free * cap * mu * math.log(
            t_free * mu / (t - (1.0 - mu) * t_free)
        )
    if v is Variant.BPR:
        mu = family.mu
        return cap * (dt / (t_free * family.gamma)) ** mu * dt / (1.0 + mu)
    return dt * cap  # HardCap


def inv_flow(family: CostFamily, t_free: float, cap: float, t: float) -> float:
    """Flow at which tau(f) = t; equals d(sigma_star)/dt.

    For the barrier families the value lies in [0, cap).  HardCap has a
    set-valued inverse at t == t_free; we return the 0 endpoint there and cap
    for t > t_free (the right derivative of its conjugate).
    """
    _check_time(family, t_free, t)
    v = family.variant
    dt = t - t_free
    if v is Variant.LOG_BARRIER:
        return cap * (1.0 - math.exp(-dt / (t_free * family.mu)))
    if v is Variant.HYPERBOLIC:
        mu = family.mu
        return cap * (1.0 - t_free * mu / (t - (1.0 - mu) * t_free))
    if v is Variant.BPR:
        return cap * (dt / (t_free * family.gamma)) ** family.mu
    return 0.0 if t == t_free else cap


def marginal_toll(family: CostFamily, t_free: float, cap: float, f: float) -> float:
    """The marginal-cost toll addend f * tau'(f).

    Charging tau(f) + f*tau'(f) per link steers the user equilibrium to the
    system optimum; this returns just the toll part.
    """
    _check_flow(family, cap, f)
    v = family.variant
    if v is Variant.LOG_BARRIER:
        return f * t_free * family.mu / (cap - f)
    if v is Variant.HYPERBOLIC:
        return f * t_free * family.mu * cap / (cap - f) ** 2
    if v is Variant.BPR:
        mu = family.mu
        return (t_free * family.gamma / mu) * (f / cap) ** (1.0 / mu)
    return 0.0  # HardCap: tau is flat below capacity
