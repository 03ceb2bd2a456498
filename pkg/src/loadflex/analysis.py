"""Savings metrics, parameter sweeps, cost-emissions fronts, and abatement costs.

Savings are reported relative to running the baseline profile unchanged
under the same incentive; positive numbers are improvements. Cost-emissions
trade-offs come from scalarized solves where the emissions objective is
weighted and swept; the abatement cost is the negative average slope between
a front point and the cost-optimal point, in $/ton CO2 (1 ton = 1000 kg).
"""

from __future__ import annotations

import json
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import AnalysisError, LoadflexError
from .flexmodel import FlexSpec, Schedule
from .signals import HourlyProfile
from .solver import Objective, SolveResult, solve
from .tariff import bill

KG_PER_TON = 1000.0

THREADS_ENV_VAR = "LOADFLEX_THREADS"


def _map_ordered(fn, items):
    """Apply fn over items, optionally in a thread pool; order preserved."""
    try:
        workers = int(os.environ.get(THREADS_ENV_VAR, "1"))
    except ValueError:
        workers = 1
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class Benchmarks:
    """Reference abatement prices: social cost of carbon and REC price range."""

    scc: float = 140.0                       # $/ton CO2
    rec_price_range: tuple = (1.0, 20.0)     # $/MWh

    def __post_init__(self):
        if self.scc <= 0:
            raise AnalysisError("scc must be positive")
        lo, hi = self.rec_price_range
        if lo <= 0 or hi <= 0 or hi < lo:
            raise AnalysisError("rec_price_range must be positive and ordered")


def savings(x_baseline: float, x_flexible: float) -> float:
    """Percent improvement of the flexible outcome over the baseline.

    Positive when the flexible value is lower; can exceed 100% when the
    flexible value is negative (e.g. negative prices).
    """
    if abs(x_baseline) <= 1e-9:
        raise AnalysisError("savings undefined: baseline value is (near) zero")
    return 100.0 * (x_baseline - x_flexible) / x_baseline


def baseline_value(objective: Objective, spec: FlexSpec) -> float:
    """Value of running the baseline profile unchanged under the incentive."""
    base_schedule = Schedule(status=spec.baseline > 0, power=spec.baseline,
                             dt_hours=spec.dt_hours)
    if objective.kind == "tariff":
        return bill(objective.tariff, base_schedule, objective.calendar).total
    coeffs = objective.linear_coeffs
    if coeffs is None:
        coeffs = objective.emissions_coeffs
    if coeffs is None or coeffs.size != spec.horizon:
        raise AnalysisError("objective has no coefficient vector matching the horizon")
    return float(np.dot(coeffs, spec.baseline) * spec.dt_hours)


def flexible_value(result: SolveResult, objective: Objective) -> float:
    """The incentive value achieved by an optimized schedule."""
    if objective.kind == "tariff":
        return result.cost
    return result.objective_value


# ---------------------------------------------------------------------------
# Savings surfaces (uptime x power-capacity sweeps)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SavingsSurface:
    u_grid: tuple
    pc_grid: tuple
    values: np.ndarray = field(repr=False)  # shape (len(u_grid), len(pc_grid))
    metadata: dict = field(default_factory=dict)


def sweep_surface(objective: Objective, spec: FlexSpec, u_grid, pc_grid,
                  metadata: dict | None = None) -> SavingsSurface:
    """Percent-savings surface over an uptime x power-capacity grid.

    Each grid point is an independent exact solve with the uptime pinned
    (exact mode, on-count = round(u*T)); efficiency and the energy-capacity
    cap come from the spec template. Solver failures are annotated with the
    grid coordinates.
    """
    u_grid = tuple(float(u) for u in u_grid)
    pc_grid = tuple(float(p) for p in pc_grid)
    if not u_grid or not pc_grid:
        raise AnalysisError("sweep grids must be non-empty")
    base_val = baseline_value(objective, spec)

    def solve_point(point):
        u, pc = point
        spec_pt = spec.with_(uptime=u, power_capacity=pc, uptime_mode="exact")
        try:
            result = solve(objective, spec_pt)
        except LoadflexError as exc:
            raise AnalysisError(f"grid point (uptime={u}, pc={pc}): {exc}") from exc
        return savings(base_val, flexible_value(result, objective))

    points = [(u, pc) for u in u_grid for pc in pc_grid]
    flat = _map_ordered(solve_point, points)
    values = np.array(flat).reshape(len(u_grid), len(pc_grid))
    meta = {"rte": spec.rte, "ec_cap": spec.ec_cap}
    if metadata:
        meta.update(metadata)
    return SavingsSurface(u_grid=u_grid, pc_grid=pc_grid, values=values, metadata=meta)


def surface_to_csv(surface: SavingsSurface) -> str:
    lines = ["uptime,power_capacity,savings_pct"]
    for i, u in enumerate(surface.u_grid):
        for j, pc in enumerate(surface.pc_grid):
            lines.append(f"{u!r},{pc!r},{float(surface.values[i, j])!r}")
    return "\n".join(lines) + "\n"


def surface_from_csv(text: str) -> SavingsSurface:
    lines = [ln for ln in text.strip().splitlines() if ln]
    if not lines or lines[0] != "uptime,power_capacity,savings_pct":
        raise AnalysisError("not a savings-surface CSV")
    rows = [tuple(float(x) for x in ln.split(",")) for ln in lines[1:]]
    u_grid = tuple(dict.fromkeys(r[0] for r in rows))
    pc_grid = tuple(dict.fromkeys(r[1] for r in rows))
    values = np.full((len(u_grid), len(pc_grid)), np.nan)
    for u, pc, v in rows:
        values[u_grid.index(u), pc_grid.index(pc)] = v
    return SavingsSurface(u_grid=u_grid, pc_grid=pc_grid, values=values)


def surface_to_json(surface: SavingsSurface) -> str:
    doc = {
        "u_grid": list(surface.u_grid),
        "pc_grid": list(surface.pc_grid),
        "values": [[float(v) for v in row] for row in surface.values],
        "metadata": {k: v for k, v in sorted(surface.metadata.items())},
    }
    return json.dumps(doc, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# Cost-emissions trade-off fronts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParetoPoint:
    weight: float
    cost: float
    emissions: float
    schedule: Schedule = field(repr=False, compare=False)


@dataclass(frozen=True)
class ParetoFront:
    points: tuple
    cost_optimal: ParetoPoint
    emissions_optimal: ParetoPoint


def default_weights(intermediate: int = 25) -> list[float]:
    """Zero, log-spaced intermediate weights, and a pure-emissions endpoint."""
    return [0.0] + list(np.logspace(-3.0, 3.0, intermediate)) + [math.inf]


def pareto_front(cost_objective: Objective, emissions, spec: FlexSpec,
                 weights=None) -> ParetoFront:
    """Scalarized cost-emissions front: solve cost + weight * emissions per weight.

    The weight schedule always includes 0 (pure cost) and infinity (pure
    emissions); dominated points are pruned and the survivors are ordered by
    emissions descending.
    """
    emis = np.asarray(emissions, dtype=float)
    if emis.size != spec.horizon:
        raise AnalysisError("emissions vector length does not match the horizon")
    if weights is None:
        weights = default_weights()
    weights = list(weights)
    if not any(w == 0.0 for w in weights):
        weights.insert(0, 0.0)
    if not any(math.isinf(w) for w in weights):
        weights.append(math.inf)
    weights = sorted(set(weights))

    def solve_weight(weight):
        if cost_objective.kind == "tariff":
            if math.isinf(weight):
                inner = solve(Objective.linear(emis), spec)
                sched = inner.schedule
                cost = bill(cost_objective.tariff, sched, cost_objective.calendar).total
            else:
                res = solve(Objective.for_tariff(cost_objective.tariff,
                                                 cost_objective.calendar,
                                                 emissions=emis, weight=weight), spec)
                sched, cost = res.schedule, res.cost
        else:
            res = solve(Objective.weighted(cost_objective.linear_coeffs, emis, weight),
                        spec)
            sched, cost = res.schedule, res.cost
        emis_val = float(np.dot(emis, sched.net_power) * spec.dt_hours)
        return ParetoPoint(weight=weight, cost=cost, emissions=emis_val, schedule=sched)

    raw = _map_ordered(solve_weight, weights)

    cost_optimal = min(raw, key=lambda p: (p.cost, p.emissions))
    emissions_optimal = min(raw, key=lambda p: (p.emissions, p.cost))

    kept = []
    seen = set()
    for p in raw:
        key = (round(p.cost, 9), round(p.emissions, 9))
        if key in seen:
            continue
        dominated = any(q.cost <= p.cost + 1e-12 and q.emissions <= p.emissions + 1e-12
                        and (q.cost < p.cost - 1e-12 or q.emissions < p.emissions - 1e-12)
                        for q in raw)
        if not dominated:
            seen.add(key)
            kept.append(p)
    kept.sort(key=lambda p: (-p.emissions, p.cost))
    return ParetoFront(points=tuple(kept), cost_optimal=cost_optimal,
                       emissions_optimal=emissions_optimal)


def front_to_csv(front: ParetoFront) -> str:
    lines = ["weight,cost_usd,emissions_kg"]
    for p in front.points:
        w = "inf" if math.isinf(p.weight) else repr(float(p.weight))
        lines.append(f"{w},{p.cost!r},{p.emissions!r}")
    return "\n".join(lines) + "\n"


def front_to_json(front: ParetoFront) -> str:
    doc = {
        "points": [{"weight": ("inf" if math.isinf(p.weight) else p.weight),
                    "cost_usd": p.cost, "emissions_kg": p.emissions}
                   for p in front.points],
        "cost_optimal": {"cost_usd": front.cost_optimal.cost,
                         "emissions_kg": front.cost_optimal.emissions},
        "emissions_optimal": {"cost_usd": front.emissions_optimal.cost,
                              "emissions_kg": front.emissions_optimal.emissions},
    }
    return json.dumps(doc, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# Abatement costs and benchmarks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AbatementResult:
    cost_of_abatement: float  # $/ton CO2
    fraction_abated: float
    anchor_weight: float      # weight of the bracketing front point


def abatement_cost(front: ParetoFront, fraction: float) -> AbatementResult:
    """Average-slope abatement cost at a fraction of the achievable reduction.

    The target emissions level sits ``fraction`` of the way from the
    cost-optimal point's emissions down to the emissions-optimal level; the
    cost there is interpolated linearly between the bracketing front points.
    """
    if not 0.0 < fraction <= 1.0:
        raise AnalysisError("fraction must be in (0, 1]")
    c_star = front.cost_optimal.cost
    e_star = front.cost_optimal.emissions
    e_min = front.emissions_optimal.emissions
    max_reduction = e_star - e_min
    if max_reduction <= 1e-9:
        if abs(front.emissions_optimal.cost - c_star) <= 1e-9:
            # perfectly aligned incentives: no trade-off, abatement is free
            return AbatementResult(0.0, fraction, front.emissions_optimal.weight)
        raise AnalysisError(
            "abatement undefined: front is degenerate (no emissions spread)")
    target_e = e_star - fraction * max_reduction

    points = sorted(front.points, key=lambda p: -p.emissions)
    upper = points[0]
    for p in points:
        if p.emissions >= target_e - 1e-12:
            upper = p
        else:
            lower = p
            break
    else:
        lower = points[-1]
    if abs(upper.emissions - lower.emissions) <= 1e-12:
        cost_at_target = min(upper.cost, lower.cost)
        anchor = lower.weight
    else:
        frac = (upper.emissions - target_e) / (upper.emissions - lower.emissions)
        cost_at_target = upper.cost + frac * (lower.cost - upper.cost)
        anchor = lower.weight
    cost_per_ton = -(cost_at_target - c_star) / (target_e - e_star) * KG_PER_TON
    return AbatementResult(cost_of_abatement=float(cost_per_ton),
                           fraction_abated=fraction, anchor_weight=anchor)


def rec_equivalent(rec_price: float, profile: HourlyProfile) -> np.ndarray:
    """Hourly $/ton abatement cost of a REC priced per MWh.

    Divides the REC price by each hour's emissions factor (converted from
    kg/MWh to ton/MWh), assuming the credit abates all emissions of the
    delivered electricity. Hours with a zero emissions factor are undefined
    and returned as NaN (reported via a warning).
    """
    if rec_price < 0:
        raise AnalysisError("rec_price must be >= 0")
    factors_ton = np.asarray(profile.values, dtype=float) / KG_PER_TON
    out = np.full(24, np.nan)
    nonzero = factors_ton > 0
    out[nonzero] = rec_price / factors_ton[nonzero]
    if not np.all(nonzero):
        hours = [h for h in range(24) if not nonzero[h]]
        warnings.warn(f"zero emissions factor at hours {hours}: REC-equivalent "
                      f"cost undefined there", UserWarning, stacklevel=2)
    return out


def min_viable_rte(objective: Objective, spec: FlexSpec,
                   tol: float = 1e-4) -> float:
    """Break-even round-trip efficiency found by bisection on savings = 0.

    Returns 1.0 as a sentinel when there is no benefit even at perfect
    efficiency. Assumes savings are monotone non-decreasing in efficiency,
    which holds for linear incentives with non-negative coefficients.
    """
    base_val = baseline_value(objective, spec)

    def sav(eta: float) -> float:
        try:
            result = solve(objective, spec.with_(rte=eta))
        except LoadflexError:
            return -math.inf
        return savings(base_val, flexible_value(result, objective))

    if sav(1.0) <= 0.0:
        return 1.0
    lo, hi = 1e-6, 1.0
    if sav(lo) > 0.0:
        return lo
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if sav(mid) > 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)
