"""User dissatisfaction (regret) under throttling plans.

A throttled user's regret is the product of a rate penalty and a time
penalty, each raised to a tunable exponent:

    regret = (1 - delivered_rate_fraction)^rho * (1 - T / d)^tau

Unthrottled users have zero regret.  For download users the delivered
fraction compares the post-throttle rate against their demand; for
streaming users it compares codec rates, since a stream that still fits in
r is delivered in full.  Tiered plans add a price term kappa * price that
every member of a tier pays, throttled or not.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .allocation import Mode, Plan, post_throttle_activity
from .errors import ValidationError
from .population import Population, UserProfile

DEFAULT_RHO = 2.0
DEFAULT_KAPPA = 0.01


@dataclass(frozen=True)
class RegretParams:
    """Exponents for the rate/time penalties and the price weight.

    tau defaults to rho.  Exponents below 1 would reward partial throttling
    more than proportionally and are rejected.
    """

    rho: float = DEFAULT_RHO
    tau: float | None = None
    kappa: float = DEFAULT_KAPPA

    def __post_init__(self):
        if self.tau is None:
            object.__setattr__(self, "tau", self.rho)
        if self.rho < 1:
            raise ValidationError(f"rho must be >= 1, got {self.rho}")
        if self.tau < 1:
            raise ValidationError(f"tau must be >= 1, got {self.tau}")
        if self.kappa < 0:
            raise ValidationError(f"kappa must be >= 0, got {self.kappa}")


def user_regret(user: UserProfile, plan: Plan, params: RegretParams) -> float:
    """Regret of a single user under a plan (0 when unthrottled)."""
    if not plan.throttles:
        return 0.0
    d = user.demand
    gate = d if plan.mode is Mode.DOWNLOAD else user.rate
    if not (d > plan.threshold and gate > plan.rate):
        return 0.0
    y = post_throttle_activity(user, plan.rate, plan.mode)
    rate_term = max(1.0 - plan.rate * y / d, 0.0)
    time_term = max(1.0 - plan.threshold / d, 0.0)
    return rate_term**params.rho * time_term**params.tau


def aggregate_regret(pop: Population, plan: Plan, params: RegretParams) -> float:
    """Sum of user regrets over the population."""
    if not plan.throttles:
        return 0.0
    d = pop.demands
    gate = d if plan.mode is Mode.DOWNLOAD else pop.rates
    hot = (d > plan.threshold) & (gate > plan.rate)
    if not hot.any():
        return 0.0
    d_hot = d[hot]
    if plan.mode is Mode.DOWNLOAD:
        # throttled downloads have y = 1, so the delivered fraction is r / d
        rate_term = 1.0 - plan.rate / d_hot
    else:
        rate_term = 1.0 - plan.rate / pop.rates[hot]
    time_term = 1.0 - plan.threshold / d_hot
    np.clip(rate_term, 0.0, None, out=rate_term)
    np.clip(time_term, 0.0, None, out=time_term)
    return float(np.sum(rate_term**params.rho * time_term**params.tau))


def tiered_user_regret(
    user: UserProfile, plan: Plan, price: float, params: RegretParams
) -> float:
    """Regret of a tier member: price term plus the usual throttle term."""
    if price < 0:
        raise ValidationError(f"price must be >= 0, got {price}")
    return params.kappa * price + user_regret(user, plan, params)


def tiered_aggregate_regret(
    pop: Population,
    tier_members: list[tuple[int, ...]],
    tier_plans: list[Plan],
    prices: list[float],
    params: RegretParams,
) -> float:
    """Total regret across tiers, price terms included for every member.

    ``tier_members`` must partition the population's indices exactly.
    """
    if not (len(tier_members) == len(tier_plans) == len(prices)):
        raise ValidationError("tier_members, tier_plans and prices must align")
    seen: set[int] = set()
    total = 0.0
    for members, plan, price in zip(tier_members, tier_plans, prices):
        for i in members:
            if i in seen:
                raise ValidationError(f"user index {i} assigned to more than one tier")
            seen.add(i)
            total += tiered_user_regret(pop[i], plan, price, params)
    if len(seen) != len(pop):
        missing = sorted(set(range(len(pop))) - seen)
        raise ValidationError(f"user indices {missing} not assigned to any tier")
    return total
