"""Multi-tier plan games over a shared link.

Users pick one of several priced tiers; each tier j holds a capacity share
C_j and throttles with its own plan (T_j, r_j).  A member's regret is
kappa * price_j plus the usual throttle regret, so cheap tiers attract
low-demand users and the game resembles a leader/follower pricing game:

* two tiers: exact Nash enumeration over all assignments plus a sweep over
  capacity splits;
* many tiers: the operator's joint threshold problem (capacity used exactly,
  r_j = T_j) solved as a small constrained minimization, alternated with
  sequential best responses by the users.

All tier games run on download traffic; demands fold activity in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.optimize import brentq, minimize, minimize_scalar

from .allocation import Mode, Plan
from .download import optimize_demands
from .errors import InfeasibleError, ThrottlePlanError, ValidationError
from .population import DEFAULT_SEED, Population, assign_tiers_binomial
from .regret import DEFAULT_RHO, RegretParams, user_regret

ENUMERATION_CAP = 20
SWEEP_STEP = 0.01
MAX_ITERS = 100


@dataclass(frozen=True)
class TierConfig:
    """Prices, price weight and capacity shares for a set of tiers."""

    prices: tuple[float, ...]
    kappa: float
    capacity_shares: tuple[float, ...]

    def __init__(self, prices: Sequence[float], kappa: float, capacity_shares: Sequence[float]):
        prices = tuple(float(p) for p in prices)
        shares = tuple(float(c) for c in capacity_shares)
        if len(prices) < 1:
            raise ValidationError("need at least one tier")
        if len(prices) > 10:
            raise ValidationError("at most 10 tiers (single-digit class encoding)")
        if any(p < 0 for p in prices):
            raise ValidationError("prices must be >= 0")
        if any(b <= a for a, b in zip(prices, prices[1:])):
            raise ValidationError("prices must be strictly ascending")
        if kappa < 0:
            raise ValidationError(f"kappa must be >= 0, got {kappa}")
        if len(shares) != len(prices):
            raise ValidationError("capacity_shares must match prices in length")
        if any(c < 0 for c in shares):
            raise ValidationError("capacity shares must be >= 0")
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "kappa", float(kappa))
        object.__setattr__(self, "capacity_shares", shares)

    @property
    def n_tiers(self) -> int:
        return len(self.prices)

    @property
    def capacity(self) -> float:
        return float(sum(self.capacity_shares))

    def with_shares(self, shares: Sequence[float]) -> "TierConfig":
        return TierConfig(self.prices, self.kappa, shares)


@dataclass(frozen=True)
class Assignment:
    """Which tier each user picked, indexed by rate-sorted user position."""

    tier_of: tuple[int, ...]
    n_tiers: int

    def __post_init__(self):
        if any(not (0 <= t < self.n_tiers) for t in self.tier_of):
            raise ValidationError("tier indices out of range")

    @property
    def class_id(self) -> str:
        """Digit string, one digit per user: digit i is user i's tier index."""
        return "".join(str(t) for t in self.tier_of)

    @classmethod
    def from_class_id(cls, class_id: str, n_tiers: int) -> "Assignment":
        return cls(tuple(int(c) for c in class_id), n_tiers)

    def members(self) -> list[tuple[int, ...]]:
        """Per-tier tuples of user indices, ascending."""
        out: list[list[int]] = [[] for _ in range(self.n_tiers)]
        for i, t in enumerate(self.tier_of):
            out[t].append(i)
        return [tuple(m) for m in out]


@dataclass(frozen=True)
class EquilibriumReport:
    converged: bool
    iterations: int
    assignment: Assignment
    tier_plans: tuple[Plan, ...]
    regret: float
    capacity_shares: tuple[float, ...] = ()


@dataclass(frozen=True)
class SweepPoint:
    """Equilibria found at one capacity split, with regret order statistics."""

    split: float
    equilibria: tuple[tuple[str, float], ...]
    min_regret: float | None
    avg_regret: float | None
    max_regret: float | None


def _game_params(config: TierConfig, params: RegretParams | None) -> RegretParams:
    # the config's kappa is authoritative inside tier games
    base = params if params is not None else RegretParams()
    return replace(base, kappa=config.kappa)


def optimize_tier(
    pop: Population,
    members: Sequence[int],
    share: float,
    params: RegretParams,
    mode: Mode = Mode.DOWNLOAD,
    codecs=None,
) -> Plan:
    """Best plan for one tier's members under its capacity share.

    Empty tiers get the zero plan.  A share covering the members' demand
    returns the no-throttling convention T = r = share, so reported tier
    plans stay finite.  Streaming tiers need a codec set.
    """
    if share < 0:
        raise ValidationError(f"share must be >= 0, got {share}")
    members = tuple(sorted(int(i) for i in members))
    if len(set(members)) != len(members):
        raise ValidationError("duplicate member indices")
    if members and not (0 <= members[0] and members[-1] < len(pop)):
        raise ValidationError("member index out of range")
    if not members:
        return Plan(0.0, 0.0, mode)
    demands = pop.demands[list(members)]
    if share >= float(demands.sum()):
        return Plan(share, share, mode)
    if mode is Mode.STREAMING:
        from .streaming import optimize_streaming

        if codecs is None:
            raise ValidationError("streaming tiers require a codec set")
        sol = optimize_streaming(pop.select(members), share, codecs, params)
        return sol.plan
    t, r, _ = optimize_demands(demands, share, params.rho)
    return Plan(t, r, Mode.DOWNLOAD)


class _PlanCache:
    """Memoized download-tier plans keyed by (member tuple, share)."""

    def __init__(self, pop: Population, rho: float):
        self.demands = pop.demands
        self.rho = rho
        self.cache: dict[tuple[tuple[int, ...], float], Plan] = {}

    def plan(self, members: tuple[int, ...], share: float) -> Plan:
        key = (members, share)
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        if not members:
            plan = Plan(0.0, 0.0, Mode.DOWNLOAD)
        else:
            d = self.demands[list(members)]
            total = float(d.sum())
            if share >= total:
                plan = Plan(share, share, Mode.DOWNLOAD)
            else:
                t, r, _ = optimize_demands(d, share, self.rho)
                plan = Plan(t, r, Mode.DOWNLOAD)
        self.cache[key] = plan
        return plan


def _member_regret(pop: Population, user: int, plan: Plan, price: float, params: RegretParams) -> float:
    return params.kappa * price + user_regret(pop[user], plan, params)


def deviation_regret(
    pop: Population,
    config: TierConfig,
    assignment: Assignment,
    user: int,
    target_tier: int,
    params: RegretParams | None = None,
) -> float:
    """Regret the user would carry after unilaterally switching tiers.

    Both affected tiers re-optimize their plans for the new memberships at
    unchanged capacity shares; the mover then pays the target tier's price
    plus its throttle regret.
    """
    params = _game_params(config, params)
    current = assignment.tier_of[user]
    if target_tier == current:
        raise ValidationError("target tier equals the user's current tier")
    if not (0 <= target_tier < config.n_tiers):
        raise ValidationError(f"no such tier {target_tier}")
    members = assignment.members()
    new_target = tuple(sorted(members[target_tier] + (user,)))
    new_source = tuple(i for i in members[current] if i != user)
    cache = _PlanCache(pop, params.rho)
    target_plan = cache.plan(new_target, config.capacity_shares[target_tier])
    cache.plan(new_source, config.capacity_shares[current])  # source re-plans too
    return _member_regret(pop, user, target_plan, config.prices[target_tier], params)


def _improving_moves(
    pop: Population,
    config: TierConfig,
    assignment: Assignment,
    params: RegretParams,
    cache: _PlanCache,
    first_only: bool = False,
) -> list[tuple[int, int, float]]:
    """All (user, target tier, regret drop) strict improvements."""
    members = assignment.members()
    plans = [
        cache.plan(m, config.capacity_shares[j]) for j, m in enumerate(members)
    ]
    out: list[tuple[int, int, float]] = []
    for u in range(len(pop)):
        a = assignment.tier_of[u]
        cur = _member_regret(pop, u, plans[a], config.prices[a], params)
        for b in range(config.n_tiers):
            if b == a:
                continue
            new_target = tuple(sorted(members[b] + (u,)))
            plan_b = cache.plan(new_target, config.capacity_shares[b])
            dev = _member_regret(pop, u, plan_b, config.prices[b], params)
            if dev < cur:
                out.append((u, b, cur - dev))
                if first_only:
                    return out
    return out


def check_equilibrium(
    pop: Population,
    config: TierConfig,
    assignment: Assignment,
    params: RegretParams | None = None,
) -> tuple[bool, list[tuple[int, int, float]]]:
    """Nash test: no user can strictly cut their regret by switching tiers.

    Returns (is_nash, improving) where improving lists every profitable
    (user, target tier, regret drop); indifferent users do not move.
    """
    params = _game_params(config, params)
    if len(assignment.tier_of) != len(pop):
        raise ValidationError("assignment size must match population")
    cache = _PlanCache(pop, params.rho)
    improving = _improving_moves(pop, config, assignment, params, cache)
    return (not improving, improving)


def enumerate_equilibria(
    pop: Population,
    config: TierConfig,
    split: float,
    params: RegretParams | None = None,
) -> list[str]:
    """Class IDs of all Nash assignments of a two-tier game at one split.

    The first tier receives split * C, the second the rest.  Exhaustive over
    all 2^n assignments, so populations are capped at ENUMERATION_CAP users;
    use stackelberg_iterate beyond that.
    """
    if config.n_tiers != 2:
        raise ValidationError("equilibrium enumeration handles exactly 2 tiers")
    if not (0.0 <= split <= 1.0):
        raise ValidationError(f"split must be in [0, 1], got {split}")
    n = len(pop)
    if n > ENUMERATION_CAP:
        raise ValidationError(
            f"{n} users exceeds the enumeration cap of {ENUMERATION_CAP} "
            f"(2^n assignments); use stackelberg_iterate instead"
        )
    params = _game_params(config, params)
    total = config.capacity
    cfg = config.with_shares((split * total, (1.0 - split) * total))
    cache = _PlanCache(pop, params.rho)
    found: list[str] = []
    for bits in range(1 << n):
        tiers = tuple((bits >> i) & 1 for i in range(n))
        assignment = Assignment(tiers, 2)
        if not _improving_moves(pop, cfg, assignment, params, cache, first_only=True):
            found.append(assignment.class_id)
    return found


def _assignment_regret(
    pop: Population,
    config: TierConfig,
    assignment: Assignment,
    params: RegretParams,
    cache: _PlanCache,
) -> float:
    """Total regret over all tiers, price terms included for every member."""
    total = 0.0
    for j, m in enumerate(assignment.members()):
        plan = cache.plan(m, config.capacity_shares[j])
        for u in m:
            total += _member_regret(pop, u, plan, config.prices[j], params)
    return total


def sweep_splits(
    pop: Population,
    config: TierConfig,
    step: float = SWEEP_STEP,
    params: RegretParams | None = None,
) -> list[SweepPoint]:
    """Nash sets and regret statistics across two-tier capacity splits.

    Splits run over {0, step, 2*step, ..., 1}.  Splits with no equilibrium
    produce an empty point (None statistics).
    """
    if not (0.0 < step < 1.0):
        raise ValidationError(f"step must be in (0, 1), got {step}")
    params = _game_params(config, params)
    total = config.capacity
    n_steps = int(math.floor(1.0 / step + 1e-9))
    splits = [min(i * step, 1.0) for i in range(n_steps + 1)]
    if splits[-1] < 1.0 - 1e-12:
        splits.append(1.0)
    points: list[SweepPoint] = []
    cache = _PlanCache(pop, params.rho)
    for split in splits:
        cfg = config.with_shares((split * total, (1.0 - split) * total))
        ids = enumerate_equilibria(pop, config, split, params)
        pairs = tuple(
            (cid, _assignment_regret(pop, cfg, Assignment.from_class_id(cid, 2), params, cache))
            for cid in ids
        )
        regs = [r for _, r in pairs]
        points.append(
            SweepPoint(
                split,
                pairs,
                min(regs) if regs else None,
                (sum(regs) / len(regs)) if regs else None,
                max(regs) if regs else None,
            )
        )
    return points


def _tier_consumption(demands: np.ndarray, t: float) -> float:
    """Download consumption of one tier at threshold t with rate r = t."""
    if demands.size == 0:
        return 0.0
    hot = demands > t
    return float(demands[~hot].sum() + np.sum(2.0 * t - t * t / demands[hot]))


def _tier_objective(demands: np.ndarray, t: float, rho: float) -> float:
    hot = demands > t
    if not hot.any():
        return 0.0
    return float(np.sum((1.0 - t / demands[hot]) ** (2.0 * rho)))


def solve_multi_tier(
    pop: Population,
    assignment: Assignment,
    capacity: float,
    params: RegretParams,
    bounds: tuple[float, float] | None = None,
) -> list[float]:
    """Joint per-tier thresholds minimizing total regret at fixed membership.

    Rates are pinned to thresholds (r_j = T_j), so the operator chooses one
    T_j per tier subject to total consumption equaling capacity.  Each T_j
    is box-bounded (default: min and max demand over the whole population),
    solved with SLSQP from a feasible start, with a penalty-plus-coordinate-
    descent fallback; the equality residual is repaired to <= 1e-6 * C.
    Tiers that end up unthrottled report their largest member demand; empty
    tiers report 0.
    """
    if params.tau != params.rho:
        raise ValidationError("multi-tier optimization requires rho == tau")
    if params.rho < 2:
        raise ValidationError("multi-tier optimization requires rho >= 2")
    if len(assignment.tier_of) != len(pop):
        raise ValidationError("assignment size must match population")
    if capacity < 0:
        raise ValidationError(f"capacity must be >= 0, got {capacity}")
    members = assignment.members()
    tier_demands = [pop.demands[list(m)] for m in members]
    active = [j for j, d in enumerate(tier_demands) if d.size > 0]
    out = [0.0] * assignment.n_tiers

    def clamp(j: int, t: float) -> float:
        top = float(tier_demands[j].max())
        return top if not (tier_demands[j] > t).any() else t

    if capacity >= pop.total_demand:
        # equality is unreachable; report everyone unthrottled
        for j in active:
            out[j] = float(tier_demands[j].max())
        return out
    if len(active) == 1:
        j = active[0]
        t, _, _ = optimize_demands(tier_demands[j], capacity, params.rho)
        out[j] = clamp(j, t)
        return out

    lo, hi = bounds if bounds is not None else (
        float(pop.demands.min()),
        float(pop.demands.max()),
    )
    if not (0 <= lo <= hi):
        raise ValidationError(f"bad bounds ({lo}, {hi})")
    ds = [tier_demands[j] for j in active]
    m = len(active)

    def total_consumption(ts: np.ndarray) -> float:
        return sum(_tier_consumption(d, float(t)) for d, t in zip(ds, ts))

    def objective(ts: np.ndarray) -> float:
        return sum(_tier_objective(d, float(t), params.rho) for d, t in zip(ds, ts))

    floor = total_consumption(np.full(m, lo))
    ceil = total_consumption(np.full(m, hi))
    if floor > capacity:
        raise InfeasibleError(
            f"no feasible start: consumption {floor:.6g} at the lower bound "
            f"already exceeds capacity {capacity:.6g}"
        )
    # uniform threshold meeting capacity exactly: a start with zero slack
    if floor == capacity:
        start = np.full(m, lo)
    elif ceil <= capacity:
        start = np.full(m, hi)
    else:
        t0 = brentq(lambda t: total_consumption(np.full(m, t)) - capacity, lo, hi, xtol=1e-13)
        start = np.full(m, float(t0))

    tol = 1e-6 * max(capacity, 1.0)

    def residual(ts: np.ndarray) -> float:
        return capacity - total_consumption(ts)

    res = minimize(
        objective,
        start,
        method="SLSQP",
        bounds=[(lo, hi)] * m,
        constraints=[{"type": "eq", "fun": residual}],
        options={"ftol": 1e-12, "maxiter": 500},
    )
    ts = np.clip(res.x, lo, hi) if res.success else None
    if ts is None or abs(residual(ts)) > tol:
        ts = _penalty_descent(ds, capacity, params.rho, lo, hi, start)
    ts = _repair_equality(ds, capacity, ts, lo, hi)
    if abs(residual(ts)) > tol:
        raise ThrottlePlanError(
            f"capacity residual {abs(residual(ts)):.3g} exceeds tolerance {tol:.3g}"
        )
    for j, t in zip(active, ts):
        out[j] = clamp(j, float(t))
    return out


def _penalty_descent(
    ds: list[np.ndarray], capacity: float, rho: float, lo: float, hi: float, start: np.ndarray
) -> np.ndarray:
    """Quadratic-penalty coordinate descent fallback for the joint problem."""
    ts = start.astype(float).copy()
    m = len(ds)
    scale = max(capacity, 1.0)
    for weight in (1e2, 1e4, 1e6, 1e8, 1e10):

        def penalized(t: float, j: int) -> float:
            old = ts[j]
            ts[j] = t
            gap = (capacity - sum(_tier_consumption(d, x) for d, x in zip(ds, ts))) / scale
            val = sum(_tier_objective(d, x, rho) for d, x in zip(ds, ts)) + weight * gap * gap
            ts[j] = old
            return val

        for _ in range(30):
            moved = 0.0
            for j in range(m):
                r = minimize_scalar(penalized, bounds=(lo, hi), method="bounded", args=(j,))
                moved = max(moved, abs(float(r.x) - ts[j]))
                ts[j] = float(r.x)
            if moved < 1e-11:
                break
    return ts


def _repair_equality(
    ds: list[np.ndarray], capacity: float, ts: np.ndarray, lo: float, hi: float
) -> np.ndarray:
    """Nudge one coordinate so total consumption meets capacity exactly."""
    ts = np.asarray(ts, dtype=float).copy()
    gap = capacity - sum(_tier_consumption(d, t) for d, t in zip(ds, ts))
    if abs(gap) <= 1e-12 * max(capacity, 1.0):
        return ts
    for j in np.argsort([-d.sum() for d in ds]):
        others = sum(_tier_consumption(d, t) for i, (d, t) in enumerate(zip(ds, ts)) if i != j)
        want = capacity - others

        def f(t: float) -> float:
            return _tier_consumption(ds[j], t) - want

        f_lo, f_hi = f(lo), f(hi)
        if f_lo == 0.0:
            ts[j] = lo
            return ts
        if f_hi == 0.0:
            ts[j] = hi
            return ts
        if f_lo < 0.0 < f_hi:
            ts[j] = float(brentq(f, lo, hi, xtol=1e-14))
            return ts
    return ts


def stackelberg_iterate(
    pop: Population,
    prices: Sequence[float],
    capacity: float,
    kappa: float,
    max_iters: int = MAX_ITERS,
    seed: int = DEFAULT_SEED,
    rho: float = DEFAULT_RHO,
    progress=None,
) -> EquilibriumReport:
    """Leader/follower loop: joint threshold solve, then user best responses.

    The leader re-solves all tier thresholds for the current membership;
    capacity shares are whatever each tier consumes at that solution.  Users
    then take turns (ascending rate) moving to any tier that strictly cuts
    their regret, anticipating the re-optimized plans.  Converged when a
    full pass moves nobody and the leader's thresholds are stable to 1e-9.
    Detected assignment cycles end the loop early as non-converged.

    ``progress``, if given, is called after each round with
    (iteration, thresholds, moves).
    """
    prices = tuple(float(p) for p in prices)
    if len(prices) < 2:
        raise ValidationError("stackelberg game needs at least 2 tiers")
    if any(b <= a for a, b in zip(prices, prices[1:])):
        raise ValidationError("prices must be strictly ascending")
    if max_iters < 0:
        raise ValidationError(f"max_iters must be >= 0, got {max_iters}")
    params = RegretParams(rho=rho, kappa=kappa)
    n = len(pop)
    k = len(prices)
    if k == 3:
        seeded = assign_tiers_binomial(pop, 3, seed)
        tier_of = tuple(u.tier for u in seeded)
    else:
        # deterministic rate-order chunks when the coin scheme does not apply
        base, rem = divmod(n, k)
        tier_of_list: list[int] = []
        for j in range(k):
            tier_of_list.extend([j] * (base + rem if j == 0 else base))
        tier_of = tuple(tier_of_list[:n])
    assignment = Assignment(tier_of, k)

    if max_iters == 0:
        return EquilibriumReport(False, 0, assignment, (), math.nan, ())

    cache = _PlanCache(pop, params.rho)
    seen = {assignment.tier_of}
    prev_ts: np.ndarray | None = None
    converged = False
    iterations = 0
    plans: tuple[Plan, ...] = ()
    shares: tuple[float, ...] = ()
    members = assignment.members()

    for _ in range(max_iters):
        iterations += 1
        ts = np.array(solve_multi_tier(pop, assignment, capacity, params), dtype=float)
        tier_demands = [pop.demands[list(mber)] for mber in members]
        shares = tuple(
            _tier_consumption(d, float(t)) for d, t in zip(tier_demands, ts)
        )
        plans = tuple(Plan(float(t), float(t), Mode.DOWNLOAD) for t in ts)

        moved = False
        moves = 0
        member_lists = [list(mm) for mm in members]
        cur_plans = list(plans)
        for u in range(n):
            a = assignment.tier_of[u]
            throttle = user_regret(pop[u], cur_plans[a], params)
            if a == 0 and throttle == 0.0:
                continue  # cheapest tier, unthrottled: nothing can beat it
            cur = params.kappa * prices[a] + throttle
            best_dev, best_b, best_plan = cur, None, None
            for b in range(k):
                if b == a:
                    continue
                cand = tuple(sorted(member_lists[b] + [u]))
                plan_b = cache.plan(cand, shares[b])
                dev = params.kappa * prices[b] + user_regret(pop[u], plan_b, params)
                if dev < best_dev:
                    best_dev, best_b, best_plan = dev, b, plan_b
            if best_b is not None:
                member_lists[a].remove(u)
                member_lists[best_b].append(u)
                member_lists[best_b].sort()
                src = tuple(member_lists[a])
                cur_plans[a] = cache.plan(src, shares[a])
                cur_plans[best_b] = best_plan
                new_tiers = list(assignment.tier_of)
                new_tiers[u] = best_b
                assignment = Assignment(tuple(new_tiers), k)
                moved = True
                moves += 1
        members = [tuple(mm) for mm in member_lists]
        if progress is not None:
            progress(iterations, tuple(float(t) for t in ts), moves)

        if not moved and prev_ts is not None and np.max(np.abs(ts - prev_ts)) <= 1e-9:
            converged = True
            break
        prev_ts = ts
        if moved:
            if assignment.tier_of in seen:
                break  # deterministic dynamics revisiting a state: a cycle
            seen.add(assignment.tier_of)

    regret = _assignment_regret(
        pop,
        TierConfig(prices, kappa, shares if shares else (0.0,) * k),
        assignment,
        params,
        cache,
    )
    return EquilibriumReport(converged, iterations, assignment, plans, regret, shares)
