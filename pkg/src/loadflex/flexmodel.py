"""Flexibility envelope, schedules, feasibility checks, and ex-post metrics.

The envelope of a flexible load is described by four parameters: uptime
(fraction of steps it must be online), power capacity (maximum fractional
deviation of on-step power from a reference), round-trip efficiency (ratio
of baseline to flexible total energy; values below 1 inflate consumption),
and an optional energy-capacity cap evaluated ex post.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import SpecError

UPTIME_MODES = ("exact", "minimum", "free")
PC_REFERENCES = ("average", "baseline")

FEASIBILITY_TOL = 1e-8


@dataclass(frozen=True)
class FlexSpec:
    """Flexibility envelope for a load against a baseline profile.

    Parameters
    ----------
    baseline : numpy.ndarray
        Baseline power per step (MW, >= 0, not all zero).
    uptime : float
        Required online fraction in (0, 1]; interpretation depends on
        ``uptime_mode`` (``exact`` pins the on-count, ``minimum`` sets a
        floor, ``free`` leaves it to the optimizer).
    power_capacity : float
        Allowed fractional deviation of on-step power from the reference,
        in [0, 1].
    pc_reference : str
        ``average`` measures deviation from the mean on-step power;
        ``baseline`` measures deviation from the per-step baseline.
    rte : float
        Round-trip efficiency in (0, 1]; total flexible energy is
        ``sum(baseline) * dt / rte``.
    ec_cap : float, optional
        Cap on the ex-post energy-capacity fraction, in [0, 1].
    dt_hours : float
        Hours per step.
    """

    baseline: np.ndarray = field(repr=False)
    uptime: float = 1.0
    uptime_mode: str = "exact"
    power_capacity: float = 0.0
    pc_reference: str = "average"
    rte: float = 1.0
    ec_cap: float | None = None
    dt_hours: float = 1.0

    def __post_init__(self):
        base = np.asarray(self.baseline, dtype=float)
        if base.ndim != 1 or base.size == 0:
            raise SpecError("baseline must be a non-empty 1-D array")
        if np.any(base < 0) or not np.all(np.isfinite(base)):
            raise SpecError("baseline values must be finite and >= 0")
        if not base.any():
            raise SpecError("baseline must not be all zeros (savings undefined)")
        object.__setattr__(self, "baseline", base)
        if not 0.0 < self.uptime <= 1.0:
            raise SpecError(f"uptime must be in (0, 1], got {self.uptime}")
        if self.uptime_mode not in UPTIME_MODES:
            raise SpecError(f"uptime_mode must be one of {UPTIME_MODES}")
        if not 0.0 <= self.power_capacity <= 1.0:
            raise SpecError(f"power_capacity must be in [0, 1], got {self.power_capacity}")
        if self.pc_reference not in PC_REFERENCES:
            raise SpecError(f"pc_reference must be one of {PC_REFERENCES}")
        if not 0.0 < self.rte <= 1.0:
            raise SpecError(f"rte must be in (0, 1], got {self.rte}")
        if self.ec_cap is not None and not 0.0 <= self.ec_cap <= 1.0:
            raise SpecError(f"ec_cap must be in [0, 1], got {self.ec_cap}")
        if self.dt_hours <= 0:
            raise SpecError("dt_hours must be > 0")

    @property
    def horizon(self) -> int:
        return int(self.baseline.size)

    def baseline_energy_mwh(self) -> float:
        return float(math.fsum(self.baseline) * self.dt_hours)

    def flexible_energy_mwh(self) -> float:
        """Total energy the flexible schedule must consume (baseline / rte)."""
        return self.baseline_energy_mwh() / self.rte

    def exact_on_count(self) -> int:
        """Requested uptime mapped to an integer on-count (half rounds up)."""
        return max(1, min(self.horizon, int(math.floor(self.uptime * self.horizon + 0.5))))

    def min_on_count(self) -> int:
        """Smallest admissible on-count for the configured uptime mode."""
        if self.uptime_mode == "free":
            return 1
        if self.uptime_mode == "minimum":
            return max(1, int(math.ceil(self.uptime * self.horizon - 1e-9)))
        return self.exact_on_count()

    def admissible_on_counts(self) -> range:
        if self.uptime_mode == "exact":
            k = self.exact_on_count()
            return range(k, k + 1)
        return range(self.min_on_count(), self.horizon + 1)

    def with_(self, **kwargs) -> "FlexSpec":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class Schedule:
    """Per-step on/off status and continuous power of an operating plan.

    ``power`` holds the continuous power; it is forced to zero wherever the
    status is off, so net power equals the stored array.
    """

    status: np.ndarray = field(repr=False)
    power: np.ndarray = field(repr=False)
    dt_hours: float = 1.0

    def __post_init__(self):
        status = np.asarray(self.status).astype(bool)
        power = np.asarray(self.power, dtype=float)
        if status.shape != power.shape or status.ndim != 1 or status.size == 0:
            raise SpecError("status and power must be non-empty 1-D arrays of equal length")
        if np.any(power < -1e-12) or not np.all(np.isfinite(power)):
            raise SpecError("power must be finite and >= 0")
        if self.dt_hours <= 0:
            raise SpecError("dt_hours must be > 0")
        object.__setattr__(self, "status", status)
        object.__setattr__(self, "power", np.clip(power, 0.0, None))

    @property
    def horizon(self) -> int:
        return int(self.status.size)

    @property
    def net_power(self) -> np.ndarray:
        """Power actually drawn: zero on off-steps (status gates the draw)."""
        return self.power * self.status

    def on_count(self) -> int:
        return int(self.status.sum())

    def total_energy_mwh(self) -> float:
        return float(math.fsum(self.net_power) * self.dt_hours)


@dataclass(frozen=True)
class Violation:
    constraint: str  # one of: uptime, power_capacity, rte, ec
    magnitude: float


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    violations: tuple

    def magnitude(self, constraint: str) -> float:
        for v in self.violations:
            if v.constraint == constraint:
                return v.magnitude
        return 0.0


def _pc_reference_values(schedule: Schedule, spec: FlexSpec) -> np.ndarray:
    if spec.pc_reference == "baseline":
        return spec.baseline
    k = schedule.on_count()
    if k == 0:
        raise SpecError("power-capacity reference undefined: schedule has no on-steps")
    avg = float(math.fsum(schedule.power) / k)
    return np.full(schedule.horizon, avg)


def check_feasibility(schedule: Schedule, spec: FlexSpec,
                      tol: float = FEASIBILITY_TOL) -> FeasibilityReport:
    """Check a schedule against every envelope constraint.

    Violation magnitudes are absolute in each constraint's native units:
    uptime as an on-fraction, power capacity as a deviation fraction, the
    efficiency balance as a power-sum mismatch (MW), and the energy-capacity
    cap as a fraction.
    """
    if schedule.horizon != spec.horizon:
        raise SpecError(
            f"schedule horizon {schedule.horizon} != baseline length {spec.horizon}")
    violations: list[Violation] = []
    T = spec.horizon
    k = schedule.on_count()

    if spec.uptime_mode == "exact":
        uptime_violation = abs(k - spec.exact_on_count()) / T
    elif spec.uptime_mode == "minimum":
        uptime_violation = max(0.0, spec.uptime - k / T)
    else:
        uptime_violation = 0.0 if k >= 1 else 1.0 / T
    if uptime_violation > tol:
        violations.append(Violation("uptime", uptime_violation))

    if k > 0:
        ref = _pc_reference_values(schedule, spec)
        on = schedule.status
        dev = np.zeros(T)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(ref > 0, schedule.power / np.where(ref > 0, ref, 1.0), np.nan)
        dev[on] = np.abs(1.0 - ratio[on])
        zero_ref = on & (ref <= 0)
        dev[zero_ref] = np.where(schedule.power[zero_ref] > 0, np.inf, 0.0)
        pc_violation = float(np.nanmax(dev[on]) - spec.power_capacity) if on.any() else 0.0
        if pc_violation > tol:
            violations.append(Violation("power_capacity", pc_violation))

    rte_violation = abs(math.fsum(spec.baseline) - spec.rte * math.fsum(schedule.net_power))
    if rte_violation > tol:
        violations.append(Violation("rte", rte_violation))

    if spec.ec_cap is not None:
        ec = energy_capacity(schedule, spec.baseline)
        if ec - spec.ec_cap > tol:
            violations.append(Violation("ec", ec - spec.ec_cap))

    return FeasibilityReport(feasible=not violations, violations=tuple(violations))


def is_feasible(schedule: Schedule, spec: FlexSpec, tol: float = FEASIBILITY_TOL) -> bool:
    return check_feasibility(schedule, spec, tol).feasible


def energy_capacity(schedule: Schedule, baseline) -> float:
    """Fraction of baseline energy shifted away from baseline-or-below steps.

    Sums the per-step deficit ``baseline - power`` over steps drawing at or
    below baseline, normalized by total baseline energy.
    """
    base = np.asarray(baseline, dtype=float)
    if base.size != schedule.horizon:
        raise SpecError("baseline length does not match schedule horizon")
    denom = math.fsum(base) * schedule.dt_hours
    if denom <= 0:
        raise SpecError("energy capacity undefined for zero baseline energy")
    net = schedule.net_power
    deficit = np.where(net <= base, base - net, 0.0)
    return float(math.fsum(deficit) * schedule.dt_hours / denom)


def realized_uptime(schedule: Schedule) -> float:
    """Fraction of steps the schedule is online."""
    return schedule.on_count() / schedule.horizon


def realized_power_capacity(schedule: Schedule, spec: FlexSpec) -> float:
    """Largest on-step fractional deviation from the configured reference."""
    if schedule.on_count() == 0:
        raise SpecError("power capacity undefined: schedule has no on-steps")
    ref = _pc_reference_values(schedule, spec)
    on = schedule.status
    devs = []
    for p, r in zip(schedule.power[on], ref[on]):
        if r > 0:
            devs.append(abs(1.0 - p / r))
        else:
            devs.append(math.inf if p > 0 else 0.0)
    return float(max(devs))


def schedule_to_json(schedule: Schedule) -> str:
    doc = {
        "status": [int(s) for s in schedule.status],
        "power": [float(p) for p in schedule.power],
        "dt_hours": schedule.dt_hours,
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def schedule_from_json(text: str) -> Schedule:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"invalid schedule JSON: {exc}") from exc
    missing = {"status", "power"} - set(doc)
    if missing:
        raise SpecError(f"schedule JSON missing fields: {sorted(missing)}")
    return Schedule(status=np.array(doc["status"]),
                    power=np.array(doc["power"], dtype=float),
                    dt_hours=float(doc.get("dt_hours", 1.0)))
