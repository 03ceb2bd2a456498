"""Exact schedule optimization for linear incentives and retail tariffs.

The problem: pick per-step on/off status and continuous power so that total
energy equals baseline energy divided by round-trip efficiency, the on-count
satisfies the uptime mode, and on-step power stays within the power-capacity
band around its reference. For a fixed on-count the band is a fixed box, so
a linear objective is minimized exactly by selecting the cheapest steps and
waterfilling the energy budget (cheapest first, one fractional step). Free
or minimum uptime is solved exactly by enumerating the on-count.

Demand charges are handled by parametrizing the window peak: total cost is
piecewise linear in the peak cap, so evaluating the finite set of fill
breakpoints is exact for a single charge; two or three charges use a nested
grid refinement with a $1e-6 objective tolerance.

An iterative dual-relaxation mode is provided for comparison: the power band
is softened into the objective and per-side multipliers grow proportionally
to the worst violation until it falls below 1e-8.

A brute-force oracle enumerates every status vector (horizon <= 16) with a
sort-based inner fill and is used to verify the solvers.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleError, SolverError, SpecError
from .flexmodel import FlexSpec, Schedule, energy_capacity
from .tariff import MonthCalendar, Tariff, bill, demand_window_masks, marginal_energy_rates

OBJECTIVE_KINDS = ("linear", "weighted", "tariff")

_CONSERVATION_RTOL = 1e-9
_EC_TOL = 1e-8


def _improves(value: float, best: float) -> bool:
    """Strict improvement with a small relative margin; first optimum wins ties."""
    if math.isinf(best):
        return value < best
    return value < best - 1e-12 * max(1.0, abs(best))


@dataclass(frozen=True)
class Objective:
    """What the solver minimizes.

    ``linear``: dot(linear_coeffs, power) * dt. ``weighted``: cost plus
    ``weight`` times emissions (``weight=inf`` minimizes emissions alone).
    ``tariff``: full bill (energy + demand + fixed), optionally plus
    ``weight`` times emissions.
    """

    kind: str = "linear"
    linear_coeffs: np.ndarray | None = field(default=None, repr=False)
    emissions_coeffs: np.ndarray | None = field(default=None, repr=False)
    tariff: Tariff | None = None
    calendar: MonthCalendar | None = None
    weight: float = 0.0

    def __post_init__(self):
        if self.kind not in OBJECTIVE_KINDS:
            raise SpecError(f"objective kind must be one of {OBJECTIVE_KINDS}")
        for name in ("linear_coeffs", "emissions_coeffs"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.asarray(arr, dtype=float)
                if arr.ndim != 1 or not np.all(np.isfinite(arr)):
                    raise SpecError(f"{name} must be a finite 1-D array")
                object.__setattr__(self, name, arr)
        if self.weight < 0:
            raise SpecError("weight must be >= 0")
        if self.kind == "linear" and self.linear_coeffs is None:
            raise SpecError("linear objective requires linear_coeffs")
        if self.kind == "weighted" and self.emissions_coeffs is None:
            raise SpecError("weighted objective requires emissions_coeffs")
        if self.kind == "tariff" and (self.tariff is None or self.calendar is None):
            raise SpecError("tariff objective requires a tariff and a calendar")

    @classmethod
    def linear(cls, coeffs, emissions=None) -> "Objective":
        return cls(kind="linear", linear_coeffs=coeffs, emissions_coeffs=emissions)

    @classmethod
    def weighted(cls, cost_coeffs, emissions_coeffs, weight: float) -> "Objective":
        return cls(kind="weighted", linear_coeffs=cost_coeffs,
                   emissions_coeffs=emissions_coeffs, weight=weight)

    @classmethod
    def for_tariff(cls, tariff: Tariff, calendar: MonthCalendar,
                   emissions=None, weight: float = 0.0) -> "Objective":
        return cls(kind="tariff", tariff=tariff, calendar=calendar,
                   emissions_coeffs=emissions, weight=weight)


@dataclass
class SolveResult:
    schedule: Schedule
    objective_value: float
    cost: float | None
    emissions: float | None
    diagnostics: dict


def _effective_coeffs(objective: Objective, horizon: int) -> np.ndarray:
    """Collapse the objective to one linear coefficient per step."""
    if objective.kind == "tariff":
        raise SpecError("tariff objectives have no single coefficient vector")
    cost = objective.linear_coeffs
    emis = objective.emissions_coeffs
    if objective.kind == "linear":
        c = cost
    elif math.isinf(objective.weight):
        c = emis
    elif objective.weight > 0:
        if cost is None:
            raise SpecError("weighted objective requires cost coefficients")
        c = cost + objective.weight * emis
    else:
        c = cost if cost is not None else emis
    if c is None or c.size != horizon:
        raise SpecError(f"coefficient vector length {getattr(c, 'size', None)} "
                        f"does not match horizon {horizon}")
    return np.asarray(c, dtype=float)


def _objective_value(objective: Objective, spec: FlexSpec, schedule: Schedule) -> float:
    net = schedule.net_power
    dt = schedule.dt_hours
    if objective.kind == "tariff":
        value = bill(objective.tariff, schedule, objective.calendar).total
        if objective.emissions_coeffs is not None and objective.weight > 0:
            value += objective.weight * float(np.dot(objective.emissions_coeffs, net) * dt)
        return value
    return float(np.dot(_effective_coeffs(objective, spec.horizon), net) * dt)


def _violates_ec_cap(spec: FlexSpec, status: np.ndarray, power: np.ndarray) -> bool:
    if spec.ec_cap is None:
        return False
    sched = Schedule(status=status, power=power, dt_hours=spec.dt_hours)
    return energy_capacity(sched, spec.baseline) > spec.ec_cap + _EC_TOL


def _build_result(objective: Objective, spec: FlexSpec, status: np.ndarray,
                  power: np.ndarray, diagnostics: dict) -> SolveResult:
    schedule = Schedule(status=status, power=power, dt_hours=spec.dt_hours)
    target = spec.flexible_energy_mwh()
    actual = schedule.total_energy_mwh()
    if abs(actual - target) > _CONSERVATION_RTOL * max(1.0, abs(target)):
        raise SolverError(
            f"internal error: schedule energy {actual} != required {target}")
    if spec.ec_cap is not None:
        ec = energy_capacity(schedule, spec.baseline)
        if ec > spec.ec_cap + _EC_TOL:
            raise InfeasibleError(
                f"energy-capacity cap {spec.ec_cap} binds (schedule needs {ec:.6f})")
    cost = None
    emissions = None
    dt = spec.dt_hours
    net = schedule.net_power
    if objective.kind == "tariff":
        cost = bill(objective.tariff, schedule, objective.calendar).total
    elif objective.linear_coeffs is not None:
        cost = float(np.dot(objective.linear_coeffs, net) * dt)
    if objective.emissions_coeffs is not None:
        emissions = float(np.dot(objective.emissions_coeffs, net) * dt)
    return SolveResult(schedule=schedule,
                       objective_value=_objective_value(objective, spec, schedule),
                       cost=cost, emissions=emissions, diagnostics=diagnostics)


# ---------------------------------------------------------------------------
# Exact continuous fill
# ---------------------------------------------------------------------------

def _waterfill(costs: np.ndarray, lower: np.ndarray, upper: np.ndarray,
               total: float) -> np.ndarray | None:
    """Cheapest-first fill of ``total`` across steps with per-step bounds.

    Exact for a fixed step set: floors everywhere, then the residual goes to
    the cheapest headroom first with a single fractional step. Ties break on
    the earliest step. Returns None when the bounds cannot hold ``total``.
    """
    headroom = upper - lower
    if np.any(headroom < -1e-12):
        return None  # some step's cap sits below its floor: set not selectable
    headroom = np.maximum(headroom, 0.0)
    lower_sum = float(lower.sum())
    slack = 1e-9 * max(1.0, abs(total))
    if total < lower_sum - slack or total > lower_sum + float(headroom.sum()) + slack:
        return None
    powers = lower.astype(float).copy()
    residual = total - lower_sum
    if residual <= 0.0:
        return powers
    order = np.lexsort((np.arange(costs.size), costs))
    gaps = headroom[order]
    cum = np.cumsum(gaps)
    m = int(np.searchsorted(cum, residual, side="left"))
    if m >= order.size:
        m = order.size - 1
    full = order[:m]
    powers[full] = upper[full]
    prev = float(cum[m - 1]) if m > 0 else 0.0
    powers[order[m]] = lower[order[m]] + max(0.0, residual - prev)
    return powers


def _cheapest(costs: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k smallest coefficients, earliest step winning ties."""
    order = np.lexsort((np.arange(costs.size), costs))
    return np.sort(order[:k])


def _on_bounds(spec: FlexSpec, k: int) -> tuple[np.ndarray, np.ndarray, float]:
    """Per-on-step (lower, upper) power bounds and the required power sum."""
    W = spec.flexible_energy_mwh() / spec.dt_hours
    pc = spec.power_capacity
    if spec.pc_reference == "average":
        ref = W / k
        lo = np.full(spec.horizon, (1.0 - pc) * ref)
        hi = np.full(spec.horizon, (1.0 + pc) * ref)
    else:
        lo = (1.0 - pc) * spec.baseline
        hi = (1.0 + pc) * spec.baseline
    return lo, hi, W


def _bounds_uniform(spec: FlexSpec) -> bool:
    return spec.pc_reference == "average" or float(np.ptp(spec.baseline)) == 0.0


# ---------------------------------------------------------------------------
# Fixed on-count solves (linear objectives)
# ---------------------------------------------------------------------------

def _fixed_k_core(c: np.ndarray, spec: FlexSpec, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Optimal (status, power) for a linear objective with exactly k on-steps."""
    T = spec.horizon
    if not 1 <= k <= T:
        raise SpecError(f"on-count must be in 1..{T}, got {k}")
    lo, hi, W = _on_bounds(spec, k)
    if _bounds_uniform(spec):
        lo_val, hi_val = float(lo[0]), float(hi[0])
        slack = 1e-9 * max(1.0, W)
        if k * hi_val < W - slack:
            raise InfeasibleError(
                f"k={k}: maximum deliverable energy {k * hi_val * spec.dt_hours:.6g} MWh "
                f"is below the required {W * spec.dt_hours:.6g} MWh")
        if k * lo_val > W + slack:
            raise InfeasibleError(
                f"k={k}: minimum consumption {k * lo_val * spec.dt_hours:.6g} MWh "
                f"exceeds the required {W * spec.dt_hours:.6g} MWh")
        sel = _cheapest(c, k)
        powers_sel = _waterfill(c[sel], lo[sel], hi[sel], W)
        if powers_sel is None:
            raise InfeasibleError(f"k={k}: power bounds cannot absorb the energy budget")
    else:
        sel, powers_sel = _select_subset_bnb(c, lo, hi, k, W)
    status = np.zeros(T, dtype=bool)
    status[sel] = True
    power = np.zeros(T)
    power[sel] = powers_sel
    return status, power


def _select_subset_bnb(c: np.ndarray, lo: np.ndarray, hi: np.ndarray, k: int,
                       W: float, node_cap: int = 500_000):
    """Exact on-set selection under heterogeneous per-step bounds.

    Branch and bound over inclusion decisions in cost order. The node bound
    relaxes unchosen steps to [0, upper] and drops the count constraint,
    which only enlarges the feasible set, so pruning is safe.
    """
    T = c.size
    slack = 1e-9 * max(1.0, abs(W))
    order = sorted(range(T), key=lambda t: (c[t], t))
    c_l = [float(x) for x in c]
    lo_l = [float(x) for x in lo]
    hi_l = [float(x) for x in hi]

    if sum(sorted(hi_l, reverse=True)[:k]) < W - slack:
        raise InfeasibleError(
            f"k={k}: even the {k} largest step capacities cannot absorb the energy budget")
    if sum(sorted(lo_l)[:k]) > W + slack:
        raise InfeasibleError(
            f"k={k}: even the {k} smallest step floors exceed the energy budget")

    best_val = math.inf
    best = None

    def try_incumbent(sel):
        nonlocal best_val, best
        if len(sel) != k:
            return
        idx = np.array(sorted(sel))
        p = _waterfill(c[idx], lo[idx], hi[idx], W)
        if p is None:
            return
        val = float(np.dot(c[idx], p))
        if val < best_val - 1e-15:
            best_val, best = val, (idx, p)

    try_incumbent(order[:k])
    try_incumbent(sorted(range(T), key=lambda t: (-hi_l[t], t))[:k])

    def relaxed_bound(chosen: list, pos: int) -> float:
        mand_cost = sum(c_l[t] * lo_l[t] for t in chosen)
        resid = W - sum(lo_l[t] for t in chosen)
        if resid < -slack:
            return math.inf
        segments = [(c_l[t], hi_l[t] - lo_l[t]) for t in chosen]
        segments += [(c_l[t], hi_l[t]) for t in order[pos:]]
        segments.sort()
        acc = mand_cost
        for rate, room in segments:
            if resid <= 0:
                break
            take = room if room < resid else resid
            acc += rate * take
            resid -= take
        if resid > slack:
            return math.inf
        return acc

    nodes = 0
    stack = [([], 0)]
    while stack:
        chosen, pos = stack.pop()
        nodes += 1
        if nodes > node_cap:
            raise SolverError(
                "subset selection exceeded the search budget; reduce the horizon "
                "or use a flat baseline for the power-capacity reference")
        n = len(chosen)
        if n == k:
            try_incumbent(chosen)
            continue
        if pos >= T or n + (T - pos) < k:
            continue
        if relaxed_bound(chosen, pos) >= best_val - 1e-12:
            continue
        t = order[pos]
        stack.append((chosen, pos + 1))        # exclude t
        stack.append((chosen + [t], pos + 1))  # include t (explored first, LIFO)

    if best is None:
        raise InfeasibleError(f"k={k}: no on-set satisfies the power bounds")
    return best


def solve_fixed_k(objective: Objective, spec: FlexSpec, k: int) -> SolveResult:
    """Globally optimal schedule with exactly ``k`` on-steps (linear objective)."""
    c = _effective_coeffs(objective, spec.horizon)
    status, power = _fixed_k_core(c, spec, k)
    return _build_result(objective, spec, status, power,
                         {"mode": "fixed_k", "k": k, "iterations": 1,
                          "max_violation": 0.0})


def solve_min_uptime(objective: Objective, spec: FlexSpec) -> SolveResult:
    """Exact free/minimum-uptime optimum by enumerating the on-count."""
    if spec.uptime_mode not in ("minimum", "free"):
        raise SpecError("solve_min_uptime requires uptime_mode 'minimum' or 'free'")
    c = _effective_coeffs(objective, spec.horizon)
    best = None
    best_val = math.inf
    evaluated = 0
    for k in spec.admissible_on_counts():
        try:
            status, power = _fixed_k_core(c, spec, k)
            result = _build_result(objective, spec, status, power,
                                   {"mode": "min_uptime", "k": k,
                                    "iterations": 1, "max_violation": 0.0})
        except InfeasibleError:
            continue
        evaluated += 1
        if _improves(result.objective_value, best_val):
            best_val = result.objective_value
            best = result
    if best is None:
        raise InfeasibleError("no admissible on-count yields a feasible schedule")
    best.diagnostics["evaluated_counts"] = evaluated
    return best


# ---------------------------------------------------------------------------
# Dual-relaxation mode (iterative soft power-capacity bounds)
# ---------------------------------------------------------------------------

def solve_lagrangian(objective: Objective, spec: FlexSpec, step_scale: float = 1.0,
                     tol: float = 1e-8, max_iterations: int = 10_000) -> SolveResult:
    """Free/minimum-uptime solve via iterative relaxation of the power band.

    The hard band around the average on-step power is replaced by linear
    penalties around the previous iterate's band. Each side's multiplier is
    incremented proportionally to that side's worst violation (step
    ``step_scale``, halved whenever the worst violation grows) until the
    worst violation drops below ``tol``.

    Raises
    ------
    SolverError
        If the loop hits ``max_iterations`` without converging; the error
        carries ``iterations`` and ``max_violation``.
    """
    if spec.pc_reference != "average":
        raise SpecError("the relaxation mode supports only the average power reference")
    if spec.uptime_mode not in ("minimum", "free"):
        raise SpecError("the relaxation mode requires uptime_mode 'minimum' or 'free'")
    c = _effective_coeffs(objective, spec.horizon)
    T = spec.horizon
    dt = spec.dt_hours
    W = spec.flexible_energy_mwh() / dt
    k_min = spec.min_on_count()
    pc = spec.power_capacity
    order = np.lexsort((np.arange(T), c))

    mu_lo = 0.0
    mu_hi = 0.0
    alpha = float(step_scale)
    band_lo = 0.0
    band_hi = math.inf
    prev_violation = math.inf

    for iteration in range(1, max_iterations + 1):
        sel, powers_sel = _relaxed_subproblem(c, order, dt, W, k_min, T,
                                              mu_lo, mu_hi, band_lo, band_hi)
        k = sel.size
        avg = W / k
        v_lo = max(0.0, float(np.max((1.0 - pc) * avg - powers_sel)))
        v_hi = max(0.0, float(np.max(powers_sel - (1.0 + pc) * avg)))
        violation = max(v_lo, v_hi)
        if violation < tol:
            status = np.zeros(T, dtype=bool)
            status[sel] = True
            power = np.zeros(T)
            power[sel] = powers_sel
            return _build_result(objective, spec, status, power,
                                 {"mode": "lagrangian", "k": int(k),
                                  "iterations": iteration,
                                  "max_violation": violation})
        if violation > prev_violation + 1e-15:
            alpha = max(alpha * 0.5, 1e-9)
        prev_violation = violation
        mu_lo += alpha * v_lo
        mu_hi += alpha * v_hi
        band_lo = (1.0 - pc) * avg
        band_hi = (1.0 + pc) * avg

    raise SolverError(
        f"relaxation did not converge in {max_iterations} iterations "
        f"(last violation {prev_violation:.3e})",
        iterations=max_iterations, max_violation=prev_violation)


def _relaxed_subproblem(c, order, dt, W, k_min, T, mu_lo, mu_hi, band_lo, band_hi):
    """Exact optimum of the penalized problem, free of hard power bounds.

    Each on-step's cost is convex piecewise linear in its power: marginal
    c*dt - mu_lo below the band, c*dt inside, c*dt + mu_hi above, plus the
    constant penalty mu_lo*band_lo for being on at all. Segments of a
    cheaper step dominate those of a dearer one, so the k cheapest steps are
    an optimal on-set for every k, and k is enumerated.
    """
    if mu_lo == 0.0 and mu_hi == 0.0:
        sel = np.sort(order[:k_min])
        powers = np.zeros(k_min)
        csel = c[sel]
        powers[int(np.lexsort((np.arange(k_min), csel))[0])] = W
        return sel, powers

    mid_cap = W if math.isinf(band_hi) else max(band_hi - band_lo, 0.0)
    best = None
    best_val = math.inf
    for k in range(k_min, T + 1):
        sel = np.sort(order[:k])
        csel = c[sel] * dt
        rates = np.concatenate([csel - mu_lo, csel, csel + mu_hi])
        pos = np.tile(np.arange(k), 3)
        tier = np.repeat(np.arange(3), k)
        caps = np.concatenate([np.full(k, band_lo), np.full(k, mid_cap), np.full(k, W)])
        seg_order = np.lexsort((tier, pos, rates))
        powers = np.zeros(k)
        resid = W
        value = k * mu_lo * band_lo
        for s in seg_order:
            if resid <= 0:
                break
            take = min(float(caps[s]), resid)
            if take <= 0:
                continue
            powers[pos[s]] += take
            value += float(rates[s]) * take
            resid -= take
        if resid > 1e-9:
            continue
        if value < best_val - 1e-15:
            best_val = value
            best = (sel, powers)
    if best is None:
        raise SolverError("relaxed subproblem found no allocation")
    return best


# ---------------------------------------------------------------------------
# Tariff objectives: peak-cap parametrization
# ---------------------------------------------------------------------------

def solve_tariff(tariff: Tariff, spec: FlexSpec, calendar: MonthCalendar,
                 emissions=None, weight: float = 0.0) -> SolveResult:
    """Minimize bill plus optional weighted emissions over feasible schedules.

    Exact for at most one active demand charge (finite breakpoint sweep of
    the window peak); two or three active charges use nested refinement to a
    $1e-6 objective tolerance. At most 3 demand charges are supported.
    """
    if calendar.steps != spec.horizon:
        raise SpecError(f"calendar steps {calendar.steps} != spec horizon {spec.horizon}")
    if abs(calendar.dt_hours - spec.dt_hours) > 1e-12:
        raise SpecError("calendar and spec step sizes differ")
    if len(tariff.demand_charges) > 3:
        raise SolverError("at most 3 demand charges are supported")
    if not _bounds_uniform(spec):
        raise SolverError(
            "tariff objectives require the average power reference or a flat baseline")
    emis = None if emissions is None else np.asarray(emissions, dtype=float)
    if emis is not None and emis.size != spec.horizon:
        raise SpecError("emissions vector length does not match horizon")
    objective = Objective.for_tariff(tariff, calendar, emissions=emis, weight=weight)
    rates = marginal_energy_rates(tariff, calendar)
    c = rates.copy()
    if emis is not None and weight > 0:
        c = c + weight * emis

    masks = demand_window_masks(tariff, calendar)
    active = [(dc.rate, mask) for dc, mask in zip(tariff.demand_charges, masks)
              if dc.rate > 0 and bool(mask.any())]

    if not active:
        linear_obj = Objective.linear(c)
        if spec.uptime_mode == "exact":
            inner = solve_fixed_k(linear_obj, spec, spec.exact_on_count())
        else:
            inner = solve_min_uptime(linear_obj, spec)
        diag = dict(inner.diagnostics)
        diag["mode"] = "tariff"
        return _build_result(objective, spec, inner.schedule.status,
                             inner.schedule.power, diag)

    best = None
    best_val = math.inf
    best_diag = None
    for k in spec.admissible_on_counts():
        out = _tariff_fixed_k(c, spec, k, active)
        if out is None:
            continue
        status, power, value = out
        if _violates_ec_cap(spec, status, power):
            continue
        if _improves(value, best_val):
            best_val = value
            best = (status, power)
            best_diag = {"mode": "tariff", "k": k, "iterations": 1,
                         "max_violation": 0.0, "demand_charges": len(active)}
    if best is None:
        raise InfeasibleError("no admissible on-count yields a feasible tariff schedule")
    return _build_result(objective, spec, best[0], best[1], best_diag)


def _tariff_value(c, power, dt, active):
    value = float(np.dot(c, power)) * dt
    for d_rate, mask in active:
        peak = float(power[mask].max()) if mask.any() else 0.0
        value += d_rate * peak
    return value


def _tariff_fixed_k(c, spec: FlexSpec, k: int, active):
    """Best (status, power, value) with exactly k on-steps under demand charges.

    The value excludes the fixed charge (constant across k).
    """
    T = spec.horizon
    dt = spec.dt_hours
    lo_vec, hi_vec, W = _on_bounds(spec, k)
    lo, hi = float(lo_vec[0]), float(hi_vec[0])
    slack = 1e-9 * max(1.0, W)
    if k * hi < W - slack or k * lo > W + slack:
        return None

    if len(active) == 1 and bool(active[0][1].all()):
        return _tariff_fixed_k_full_window(c, T, dt, k, lo, hi, W, active[0][0])

    class_ids = np.zeros(T, dtype=int)
    for bit, (_, mask) in enumerate(active):
        class_ids = class_ids + (1 << bit) * mask.astype(int)

    def value_fn(power):
        return _tariff_value(c, power, dt, active)

    if len(active) == 1:
        d_rate, mask = active[0]
        best_sel = None
        best_powers = None
        best_val = math.inf
        for P in _peak_candidates(mask, k, lo, hi, W):
            caps = np.where(mask, min(hi, P), hi)
            out = _fixed_k_with_caps(c, k, lo, caps, W, class_ids, value_fn)
            if out is None:
                continue
            sel, power, value = out
            if _improves(value, best_val):
                best_val = value
                best_sel, best_powers = sel, power
        if best_sel is None:
            return None
    else:
        def evaluate(pvec):
            caps = np.full(T, hi)
            for (d_rate, mask), P in zip(active, pvec):
                caps = np.where(mask, np.minimum(caps, P), caps)
            out = _fixed_k_with_caps(c, k, lo, caps, W, class_ids, value_fn)
            if out is None:
                return math.inf, None
            sel, power, value = out
            return value, (sel, power)
        best_val, payload = _refine_peaks(evaluate, len(active), 0.0, hi)
        if payload is None:
            return None
        best_sel, best_powers = payload

    status = np.zeros(T, dtype=bool)
    status[best_sel] = True
    return status, best_powers, best_val


def _tariff_fixed_k_full_window(c, T, dt, k, lo, hi, W, d_rate):
    """Closed-form breakpoint sweep when the demand window covers all steps.

    The selection (k cheapest steps) is independent of the peak cap, and at
    the breakpoint cap lo + R/b exactly b steps sit at the cap with no
    fractional step, so each candidate's energy cost is a prefix sum.
    """
    sel = _cheapest(c, k)
    csel = c[sel]
    order_in_sel = np.lexsort((sel, csel))
    c_sorted = csel[order_in_sel]
    prefix = np.concatenate([[0.0], np.cumsum(c_sorted)])
    sum_c = prefix[k]
    R = W - k * lo
    headroom = hi - lo

    candidates: list[tuple[float, int]] = []  # (cap, steps at cap), -1 = uncapped
    if R <= 1e-12:
        candidates.append((lo, 0))
    else:
        b_min = max(1, int(math.ceil(R / headroom - 1e-12))) if headroom > 0 else k
        for b in range(k, b_min - 1, -1):  # ascending cap order
            candidates.append((lo + R / b, b))
        candidates.append((hi, -1))

    best_val = math.inf
    best = None
    for P, b in candidates:
        if b == 0:
            energy = lo * sum_c
            peak = lo
        elif b > 0:
            energy = lo * sum_c + (R / b) * prefix[b]
            peak = P
        else:
            m = int(math.floor(R / headroom + 1e-12)) if headroom > 0 else 0
            m = min(m, k - 1)
            frac = R - m * headroom
            energy = lo * sum_c + headroom * prefix[m] + frac * c_sorted[m]
            peak = hi if m >= 1 else lo + frac
        value = energy * dt + d_rate * peak
        if _improves(value, best_val):
            best_val = value
            best = (P, b)

    P, b = best
    powers_sel = np.full(k, lo)
    if b > 0:
        powers_sel[order_in_sel[:b]] = P
    elif b == -1:
        m = int(math.floor(R / headroom + 1e-12)) if headroom > 0 else 0
        m = min(m, k - 1)
        frac = R - m * headroom
        powers_sel[order_in_sel[:m]] = hi
        powers_sel[order_in_sel[m]] = lo + frac
    status = np.zeros(T, dtype=bool)
    status[sel] = True
    power = np.zeros(T)
    power[sel] = powers_sel
    return status, power, _tariff_value(c, power, dt, [(d_rate, np.ones(T, dtype=bool))])


def _peak_candidates(mask, k, lo, hi, W):
    """Finite peak-cap set containing an optimal achieved peak.

    Fill breakpoints occur where the residual is exactly consumed by ``b``
    in-window steps at the cap plus ``a`` out-of-window steps at full
    headroom, plus the cap-feasibility floors and the band edges.
    """
    R = W - k * lo
    n_in = int(mask.sum())
    n_out = mask.size - n_in
    cands = {hi}
    if n_out >= 1:
        cands.add(0.0)  # skip the window entirely: zero peak, zero demand cost
    if R <= 1e-12:
        cands.add(lo)
        return sorted(cands)
    headroom = hi - lo
    max_b = min(k, n_in)
    for b in range(1, max_b + 1):
        for a in range(0, min(k - b, n_out) + 1):
            P = lo + (R - a * headroom) / b
            if lo - 1e-12 <= P <= hi + 1e-12:
                cands.add(min(max(P, lo), hi))
    for j in range(1, max_b + 1):
        P = (W - (k - j) * hi) / j
        if lo - 1e-12 <= P <= hi + 1e-12:
            cands.add(min(max(P, lo), hi))
    return sorted(cands)


def _fixed_k_with_caps(c, k, lo, caps, W, class_ids, value_fn):
    """Exact k-step selection and fill when steps fall into few classes.

    ``class_ids`` must give equal ids exactly to steps with identical bounds
    and identical demand-window membership; within such a class the cheapest
    members dominate (same fill transfers, same peak contributions), so
    enumerating the per-class selection counts is exact. Each composition is
    filled by energy cost and scored by ``value_fn`` (the true objective
    including achieved-peak demand costs).
    """
    T = c.size
    values = np.unique(class_ids)
    classes = []
    for v in values:
        idx = np.where(class_ids == v)[0]
        order = idx[np.lexsort((idx, c[idx]))]
        classes.append(order)
    sizes = [cls.size for cls in classes]
    n_classes = len(classes)

    n_splits = 1
    for size in sizes[:-1]:
        n_splits *= min(size, k) + 1
    if n_splits > 200_000:
        raise SolverError(
            "too many cap-class selection splits; reduce demand-charge windows "
            "or the horizon")

    best = None
    best_val = math.inf

    def compositions(remaining, pos, counts):
        if pos == n_classes - 1:
            if remaining <= sizes[pos]:
                yield counts + [remaining]
            return
        lo_cnt = max(0, remaining - sum(sizes[pos + 1:]))
        hi_cnt = min(sizes[pos], remaining)
        for j in range(lo_cnt, hi_cnt + 1):
            yield from compositions(remaining - j, pos + 1, counts + [j])

    for counts in compositions(k, 0, []):
        sel_parts = [cls[:j] for cls, j in zip(classes, counts) if j > 0]
        if not sel_parts:
            continue
        sel = np.sort(np.concatenate(sel_parts))
        powers = _waterfill(c[sel], np.full(sel.size, lo), caps[sel], W)
        if powers is None:
            continue
        power = np.zeros(T)
        power[sel] = powers
        value = value_fn(power)
        if _improves(value, best_val):
            best_val = value
            best = (sel, power, value)
    return best


def _refine_peaks(evaluate, n_dims, lo, hi, points: int = 7,
                  tol: float = 1e-6, max_levels: int = 60):
    """Nested grid refinement of a jointly convex peak-cap objective."""
    boxes = [(lo, hi)] * n_dims
    best_val = math.inf
    best_payload = None
    best_combo = None
    prev_val = math.inf
    for level in range(max_levels):
        axes = [np.linspace(b[0], b[1], points) for b in boxes]
        for combo in itertools.product(*axes):
            value, payload = evaluate(np.array(combo))
            if value < best_val - 1e-15:
                best_val = value
                best_payload = payload
                best_combo = combo
        if best_combo is None:
            return math.inf, None
        steps = [(b[1] - b[0]) / (points - 1) for b in boxes]
        boxes = [(max(lo, cb - st), min(hi, cb + st))
                 for cb, st in zip(best_combo, steps)]
        width = max(b[1] - b[0] for b in boxes)
        if level > 0 and abs(prev_val - best_val) < tol and width < max(1e-9, 1e-12 * hi):
            break
        if abs(prev_val - best_val) < 1e-15 and width < 1e-11 * max(1.0, hi):
            break
        prev_val = best_val
    return best_val, best_payload


# ---------------------------------------------------------------------------
# Brute-force oracle
# ---------------------------------------------------------------------------

def brute_force(objective: Objective, spec: FlexSpec,
                max_horizon: int = 16) -> SolveResult:
    """Global optimum by enumerating every admissible status vector.

    Verification oracle: independent of the selection logic of the fast
    solvers. The inner continuous fill for a fixed on-set is sort-based and
    exact; tariff peaks are swept over the same breakpoint structure.
    """
    T = spec.horizon
    if T > max_horizon:
        raise SolverError(f"brute force limited to horizon <= {max_horizon}, got {T}")
    dt = spec.dt_hours
    W = spec.flexible_energy_mwh() / dt
    is_tariff = objective.kind == "tariff"
    if is_tariff:
        rates = marginal_energy_rates(objective.tariff, objective.calendar)
        c = rates.copy()
        if objective.emissions_coeffs is not None and objective.weight > 0:
            c = c + objective.weight * objective.emissions_coeffs
        masks = demand_window_masks(objective.tariff, objective.calendar)
        active = [(dc.rate, mask) for dc, mask in
                  zip(objective.tariff.demand_charges, masks)
                  if dc.rate > 0 and bool(mask.any())]
    else:
        c = _effective_coeffs(objective, T)
        active = []

    best_val = math.inf
    best = None
    for k in spec.admissible_on_counts():
        lo_vec, hi_vec, _ = _on_bounds(spec, k)
        for sel in itertools.combinations(range(T), k):
            idx = list(sel)
            lo_sel = [float(lo_vec[t]) for t in idx]
            hi_sel = [float(hi_vec[t]) for t in idx]
            if is_tariff:
                out = _oracle_tariff_fill(c, idx, lo_sel, hi_sel, W, dt, active)
            else:
                c_sel = [float(c[t]) for t in idx]
                powers = _oracle_fill(c_sel, lo_sel, hi_sel, W)
                out = None
                if powers is not None:
                    out = (math.fsum(ci * pi for ci, pi in zip(c_sel, powers)) * dt,
                           powers)
            if out is None:
                continue
            value, powers = out
            if spec.ec_cap is not None:
                status_vec = np.zeros(T, dtype=bool)
                status_vec[idx] = True
                power_full = np.zeros(T)
                power_full[idx] = powers
                if _violates_ec_cap(spec, status_vec, power_full):
                    continue
            if _improves(value, best_val):
                best_val = value
                best = (idx, powers)
    if best is None:
        raise InfeasibleError("brute force found no feasible schedule")
    idx, powers = best
    status = np.zeros(T, dtype=bool)
    status[idx] = True
    power = np.zeros(T)
    power[idx] = powers
    return _build_result(objective, spec, status, power,
                         {"mode": "brute_force", "k": len(idx),
                          "iterations": 1, "max_violation": 0.0})


def _oracle_fill(c_sel, lo_sel, hi_sel, W):
    """Sort-based exact fill for a fixed on-set (pure-python oracle path)."""
    if any(h < l - 1e-12 for l, h in zip(lo_sel, hi_sel)):
        return None
    slack = 1e-9 * max(1.0, abs(W))
    lower = math.fsum(lo_sel)
    upper = math.fsum(hi_sel)
    if W < lower - slack or W > upper + slack:
        return None
    powers = list(lo_sel)
    residual = W - lower
    for i in sorted(range(len(c_sel)), key=lambda i: (c_sel[i], i)):
        if residual <= 0:
            break
        room = hi_sel[i] - lo_sel[i]
        take = room if room < residual else residual
        powers[i] += take
        residual -= take
    return powers


def _oracle_tariff_fill(c, idx, lo_sel, hi_sel, W, dt, active):
    """Best bill-aware fill for a fixed on-set (peak swept over breakpoints)."""
    T = c.size
    c_sel = [float(c[t]) for t in idx]

    def eval_caps(caps_sel):
        bounded = [min(h, cp) for h, cp in zip(hi_sel, caps_sel)]
        powers = _oracle_fill(c_sel, lo_sel, bounded, W)
        if powers is None:
            return None
        power = np.zeros(T)
        power[idx] = powers
        value = float(np.dot(c, power)) * dt
        for d_rate, mask in active:
            peak = float(power[mask].max()) if mask.any() else 0.0
            value += d_rate * peak
        return value, powers

    if not active:
        return eval_caps(hi_sel)

    uniform = len(set(lo_sel)) == 1 and len(set(hi_sel)) == 1
    if len(active) == 1 and uniform:
        lo, hi = lo_sel[0], hi_sel[0]
        mask = active[0][1]
        in_count = sum(1 for t in idx if mask[t])
        out_count = len(idx) - in_count
        R = W - len(idx) * lo
        cands = {hi}
        if R <= 1e-12:
            cands.add(lo)
        else:
            headroom = hi - lo
            for b in range(1, in_count + 1):
                for a in range(0, out_count + 1):
                    P = lo + (R - a * headroom) / b
                    if lo - 1e-12 <= P <= hi + 1e-12:
                        cands.add(min(max(P, lo), hi))
            for j in range(1, in_count + 1):
                P = (W - (len(idx) - j) * hi) / j
                if lo - 1e-12 <= P <= hi + 1e-12:
                    cands.add(min(max(P, lo), hi))
        best = None
        for P in sorted(cands):
            caps = [P if mask[t] else hi for t in idx]
            out = eval_caps(caps)
            if out is not None and (best is None or out[0] < best[0] - 1e-15):
                best = out
        return best

    hi_max = max(hi_sel)
    lo_min = min(lo_sel)

    def evaluate(pvec):
        caps = list(hi_sel)
        for (d_rate, mask), P in zip(active, pvec):
            caps = [min(cp, P) if mask[t] else cp for cp, t in zip(caps, idx)]
        out = eval_caps(caps)
        if out is None:
            return math.inf, None
        return out

    value, powers = _refine_peaks(evaluate, len(active), lo_min, hi_max, tol=1e-9)
    if powers is None:
        return None
    return value, powers


def solve(objective: Objective, spec: FlexSpec) -> SolveResult:
    """Dispatch to the appropriate exact solver for the objective and mode."""
    if objective.kind == "tariff":
        return solve_tariff(objective.tariff, spec, objective.calendar,
                            emissions=objective.emissions_coeffs,
                            weight=objective.weight)
    if spec.uptime_mode == "exact":
        return solve_fixed_k(objective, spec, spec.exact_on_count())
    return solve_min_uptime(objective, spec)
