"""Command line front end: generate, optimize, tiers, simulate.

Summaries go to stdout, diagnostics to stderr.  Exit codes: 0 success,
2 usage or validation problem, 1 internal error.  Randomized commands
default to seed 20260819 when --seed is omitted; nothing reads the clock.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import sys
import time

import numpy as np

from .allocation import Mode, Plan, consumption, max_threshold
from .cyclesim import SimConfig, UserState, daily_average, simulate, variability_ratio
from .download import optimize_download, threshold_curve
from .errors import ThrottlePlanError
from .population import (
    DEFAULT_SEED,
    Population,
    generate_codec_uniform,
    generate_lognormal,
    load_population,
    save_population,
)
from .regret import RegretParams
from .streaming import CodecSet, optimize_streaming, streaming_curve
from .tiergame import TierConfig, stackelberg_iterate, sweep_splits


def _digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()[:12]


def _echo(cmd: str, **fields) -> None:
    parts = [f"command={cmd}"] + [f"{k}={v}" for k, v in fields.items()]
    print(" ".join(parts))


def _resolve_capacity(args, pop: Population) -> float:
    if args.capacity is not None:
        return args.capacity
    if args.capacity_fraction is not None:
        return args.capacity_fraction * pop.total_demand
    raise ThrottlePlanError("one of --capacity / --capacity-fraction is required")


def _add_capacity_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--capacity", type=float, help="link capacity C")
    p.add_argument(
        "--capacity-fraction", type=float, help="C as a fraction of total demand"
    )


def _parse_dist(text: str):
    kind, _, rest = text.partition(":")
    if kind == "lognormal":
        fields = {}
        for part in rest.split(","):
            key, _, val = part.partition("=")
            if not val:
                raise ThrottlePlanError(f"bad --dist parameter {part!r}")
            fields[key.strip()] = float(val)
        unknown = set(fields) - {"mu", "sigma", "x"}
        if unknown or "mu" not in fields or "sigma" not in fields:
            raise ThrottlePlanError(
                "lognormal needs mu=..,sigma=.. (optional x=..), got " + rest
            )
        return ("lognormal", fields)
    if kind == "codec":
        if not rest.startswith("v="):
            raise ThrottlePlanError("codec distribution needs v=r1,r2,...")
        return ("codec", CodecSet.parse(rest[2:]))
    raise ThrottlePlanError(f"unknown distribution {kind!r} (use lognormal or codec)")


def cmd_generate(args) -> int:
    kind, spec = _parse_dist(args.dist)
    if kind == "lognormal":
        pop = generate_lognormal(
            args.n, spec["mu"], spec["sigma"], activity=spec.get("x", 1.0), seed=args.seed
        )
    else:
        pop = generate_codec_uniform(args.n, list(spec), seed=args.seed)
    save_population(pop, args.output)
    _echo(
        "generate",
        dist=args.dist,
        n=len(pop),
        seed=args.seed,
        total_demand=f"{pop.total_demand:.6f}",
        output=args.output,
    )
    return 0


def _write_curve(path: str, rows: np.ndarray) -> None:
    with open(path, "w", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["T", "r", "regret"])
        for t, r, reg in rows:
            w.writerow([f"{t:.9g}", f"{r:.9g}", f"{reg:.9g}"])


def cmd_optimize(args) -> int:
    t0 = time.perf_counter()
    pop = load_population(args.pop)
    cap = _resolve_capacity(args, pop)
    params = RegretParams(rho=args.rho, tau=args.tau)
    _echo("optimize", pop=args.pop, digest=_digest(args.pop), mode=args.mode,
          capacity=f"{cap:.6f}", rho=args.rho)
    if cap >= pop.total_demand:
        print("no throttling needed: capacity covers total demand")
        print("T=inf r=inf regret=0")
        return 0
    if args.mode == "download":
        sol = optimize_download(pop, cap, params)
        plan, extras = sol.plan, ()
    else:
        codecs = CodecSet.parse(args.codecs) if args.codecs else None
        if codecs is None:
            raise ThrottlePlanError("stream mode requires --codecs")
        ssol = optimize_streaming(pop, cap, codecs, params)
        plan, extras = ssol.plan, ssol.candidates
        sol = ssol
    residual = abs(consumption(pop, plan) - cap)
    for cand in extras:
        print(
            f"candidate r={cand.rate:.6f} T={cand.threshold:.6f} regret={cand.regret:.6f}"
        )
    print(
        f"T={plan.threshold:.6f} r={plan.rate:.6f} regret={sol.regret:.6f} "
        f"residual={residual:.3e}"
    )
    if args.curve:
        bound = max_threshold(pop, cap)
        step = args.curve_step if args.curve_step else bound.threshold / 1000.0
        if args.mode == "download":
            rows = threshold_curve(pop, cap, params, step)
        else:
            rows = streaming_curve(pop, cap, codecs, params, step)
        _write_curve(args.curve, rows)
        print(f"curve={args.curve} points={len(rows)}")
    print(f"elapsed={time.perf_counter() - t0:.3f}s", file=sys.stderr)
    return 0


def cmd_tiers(args) -> int:
    t0 = time.perf_counter()
    pop = load_population(args.pop)
    cap = _resolve_capacity(args, pop)
    prices = tuple(float(p) for p in args.prices.split(","))
    params = RegretParams(rho=args.rho, kappa=args.kappa)
    _echo("tiers", sub=args.game, pop=args.pop, digest=_digest(args.pop),
          prices=args.prices, kappa=args.kappa, capacity=f"{cap:.6f}")
    if len(prices) == 1:
        # a single tier is just the plain optimizer
        sol = optimize_download(pop, cap, params)
        print(
            f"T={sol.plan.threshold:.6f} r={sol.plan.rate:.6f} regret={sol.regret:.6f}"
        )
        return 0
    if args.game == "sweep":
        config = TierConfig(prices, args.kappa, (cap, 0.0))
        points = sweep_splits(pop, config, args.split_step, params)
        if args.out_equilibria:
            with open(args.out_equilibria, "w", newline="\n") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["split", "class_id", "regret"])
                for pt in points:
                    for cid, reg in pt.equilibria:
                        w.writerow([f"{pt.split:.6g}", cid, f"{reg:.9g}"])
        if args.out_summary:
            with open(args.out_summary, "w", newline="\n") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["split", "min", "avg", "max"])
                for pt in points:
                    if pt.equilibria:
                        w.writerow(
                            [f"{pt.split:.6g}", f"{pt.min_regret:.9g}",
                             f"{pt.avg_regret:.9g}", f"{pt.max_regret:.9g}"]
                        )
                    else:
                        w.writerow([f"{pt.split:.6g}", "", "", ""])
        nonempty = sum(1 for pt in points if pt.equilibria)
        print(f"splits={len(points)} with_equilibria={nonempty}")
        for pt in points:
            if abs(pt.split - 0.5) < 1e-12:
                print(f"split=0.5 equilibria={len(pt.equilibria)}")
    else:
        report = stackelberg_iterate(
            pop, prices, cap, args.kappa, max_iters=args.max_iters, seed=args.seed,
            rho=args.rho,
            progress=lambda it, ts, moves: print(
                f"iter={it} moves={moves} T=[" + ",".join(f"{t:.6f}" for t in ts) + "]"
            ),
        )
        print(
            f"converged={report.converged} iterations={report.iterations} "
            f"regret={report.regret:.6f}"
        )
        if args.output:
            params_out = RegretParams(rho=args.rho, kappa=args.kappa)
            with open(args.output, "w", newline="\n") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["id", "rate", "tier", "regret"])
                from .regret import tiered_user_regret

                for i, user in enumerate(pop):
                    tier = report.assignment.tier_of[i]
                    if report.tier_plans:
                        reg = tiered_user_regret(
                            user, report.tier_plans[tier], prices[tier], params_out
                        )
                        reg_txt = f"{reg:.9g}"
                    else:
                        reg_txt = ""
                    # tiers are numbered from 1 in rendered output
                    w.writerow([user.id, repr(user.rate), tier + 1, reg_txt])
            print(f"assignment={args.output}")
    print(f"elapsed={time.perf_counter() - t0:.3f}s", file=sys.stderr)
    return 0


def _parse_plan(text: str, mode: Mode) -> Plan:
    parts = text.split(",")
    if len(parts) != 2:
        raise ThrottlePlanError(f"--plan expects T,r got {text!r}")
    return Plan(float(parts[0]), float(parts[1]), mode)


def cmd_simulate(args) -> int:
    t0 = time.perf_counter()
    pop = load_population(args.pop)
    cap = _resolve_capacity(args, pop)
    mode = Mode.DOWNLOAD if args.mode == "download" else Mode.STREAMING
    params = RegretParams(rho=args.rho)
    if args.plan:
        plan = _parse_plan(args.plan, mode)
    elif args.optimize:
        if cap >= pop.total_demand:
            plan = Plan.no_throttling(mode)
        elif mode is Mode.DOWNLOAD:
            plan = optimize_download(pop, cap, params).plan
        else:
            if not args.codecs:
                raise ThrottlePlanError("--optimize in stream mode requires --codecs")
            plan = optimize_streaming(pop, cap, CodecSet.parse(args.codecs), params).plan
    else:
        raise ThrottlePlanError("one of --plan / --optimize is required")
    _echo("simulate", pop=args.pop, digest=_digest(args.pop), mode=args.mode,
          capacity=f"{cap:.6f}", days=args.days, diurnal=args.diurnal, seed=args.seed)
    base = SimConfig(
        plan=plan, horizon_days=args.days, diurnal=args.diurnal, seed=args.seed,
        record_states=args.states,
    )
    throttled = simulate(pop, base)
    free = SimConfig(
        plan=Plan.no_throttling(mode), horizon_days=args.days, diurnal=args.diurnal,
        seed=args.seed,
    )
    unthrottled = simulate(pop, free)
    hourly_unit = cap / (30 * 24)

    def write_hourly(path, trace):
        with open(path, "w", newline="\n") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["hour", "total", "normalized_total"])
            for h, v in enumerate(trace.hourly_total):
                w.writerow([h, f"{v:.9g}", f"{v / hourly_unit:.9g}"])

    prefix = args.out_prefix
    write_hourly(f"{prefix}_throttled_hourly.csv", throttled)
    write_hourly(f"{prefix}_unthrottled_hourly.csv", unthrottled)
    with open(f"{prefix}_daily.csv", "w", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["day", "throttled", "unthrottled"])
        for day, (a, b) in enumerate(
            zip(daily_average(throttled), daily_average(unthrottled))
        ):
            w.writerow([day, f"{a / hourly_unit:.9g}", f"{b / hourly_unit:.9g}"])
    if args.states:
        with open(f"{prefix}_states.csv", "w", newline="\n") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["hour", "user", "state"])
            st = throttled.per_user_state
            for h in range(st.shape[1]):
                for u in range(st.shape[0]):
                    w.writerow([h, pop[u].id, UserState(st[u, h]).name.lower()])
    zero_hours = int(np.sum(unthrottled.hourly_total == 0))
    ratio = variability_ratio(throttled, unthrottled)
    if plan.throttles:
        print(f"plan T={plan.threshold:.6f} r={plan.rate:.6f}")
    else:
        print("plan: no throttling")
    print(f"variability_ratio={ratio:.6f} excluded_hours={zero_hours}")
    print(f"elapsed={time.perf_counter() - t0:.3f}s", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="throttleplan",
        description="Bandwidth throttling plans: optimization, tier games, simulation.",
    )
    sub = top.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic population CSV")
    g.add_argument("--dist", required=True,
                   help="lognormal:mu=..,sigma=..[,x=..] or codec:v=r1,r2,...")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=DEFAULT_SEED)
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_generate)

    o = sub.add_parser("optimize", help="solve one plan for a population")
    o.add_argument("--pop", required=True)
    _add_capacity_flags(o)
    o.add_argument("--mode", choices=["download", "stream"], default="download")
    o.add_argument("--rho", type=float, default=2.0)
    o.add_argument("--tau", type=float, default=None)
    o.add_argument("--codecs", help="comma-separated codec rates (stream mode)")
    o.add_argument("--curve", help="write a T,r,regret curve CSV here")
    o.add_argument("--curve-step", type=float, default=None)
    o.set_defaults(func=cmd_optimize)

    t = sub.add_parser("tiers", help="two-tier sweeps and the leader/follower game")
    t.add_argument("game", choices=["sweep", "stackelberg"])
    t.add_argument("--pop", required=True)
    _add_capacity_flags(t)
    t.add_argument("--prices", required=True, help="comma-separated ascending prices")
    t.add_argument("--kappa", type=float, default=0.01)
    t.add_argument("--rho", type=float, default=2.0)
    t.add_argument("--split-step", type=float, default=0.01)
    t.add_argument("--max-iters", type=int, default=100)
    t.add_argument("--seed", type=int, default=DEFAULT_SEED)
    t.add_argument("--out-equilibria")
    t.add_argument("--out-summary")
    t.add_argument("-o", "--output", help="stackelberg: final assignment CSV")
    t.set_defaults(func=cmd_tiers)

    s = sub.add_parser("simulate", help="hourly billing-cycle Monte Carlo")
    s.add_argument("--pop", required=True)
    _add_capacity_flags(s)
    s.add_argument("--plan", help="fixed plan as T,r")
    s.add_argument("--optimize", action="store_true",
                   help="derive the plan from the optimizer")
    s.add_argument("--mode", choices=["stream", "download"], default="stream")
    s.add_argument("--rho", type=float, default=2.0)
    s.add_argument("--codecs", help="codec rates for --optimize in stream mode")
    s.add_argument("--days", type=int, default=60)
    s.add_argument("--diurnal", action="store_true")
    s.add_argument("--seed", type=int, default=DEFAULT_SEED)
    s.add_argument("--states", action="store_true",
                   help="also write per-user hourly states")
    s.add_argument("--out-prefix", required=True)
    s.set_defaults(func=cmd_simulate)
    return top


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ThrottlePlanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:  # noqa: BLE001 - internal failure path
        import traceback

        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
