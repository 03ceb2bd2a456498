"""Retail tariff structures and billing.

A tariff is a set of time-of-use energy charges ($/MWh), windowed demand
charges ($/MW per billing period), and a fixed charge per billing period.
Every hour of a billed month must fall under exactly one energy charge so
that the per-timestep marginal energy rate is well defined for the solver.
"""

from __future__ import annotations

import calendar as _cal
import json
import math
from dataclasses import dataclass, field
from datetime import date, timedelta

import numpy as np

from .errors import SpecError, TariffError

_ALL_HOURS = frozenset(range(24))
_ALL_WEEKDAYS = frozenset(range(7))
_ALL_MONTHS = frozenset(range(1, 13))


def _as_frozenset(raw, lo, hi, label):
    if raw is None:
        return frozenset(range(lo, hi + 1))
    try:
        items = frozenset(int(x) for x in raw)
    except (TypeError, ValueError) as exc:
        raise TariffError(f"{label} must be a list of integers, got {raw!r}") from exc
    if not items:
        raise TariffError(f"{label} must be non-empty")
    bad = [x for x in items if not lo <= x <= hi]
    if bad:
        raise TariffError(f"{label} values out of range {lo}..{hi}: {sorted(bad)}")
    return items


@dataclass(frozen=True)
class EnergyCharge:
    """Volumetric rate applicable on an hour-of-day x weekday x month window."""

    rate: float
    hours: frozenset = _ALL_HOURS
    weekdays: frozenset = _ALL_WEEKDAYS
    months: frozenset = _ALL_MONTHS

    def __post_init__(self):
        if not math.isfinite(self.rate):
            raise TariffError("energy charge rate must be finite")
        if not (self.hours and self.weekdays and self.months):
            raise TariffError("energy charge applicability must be non-empty")

    def applies(self, month: int, weekday: int, hour: int) -> bool:
        return month in self.months and weekday in self.weekdays and hour in self.hours


@dataclass(frozen=True)
class DemandCharge:
    """$/MW charge on the maximum net power drawn inside the window."""

    rate: float
    hours: frozenset = _ALL_HOURS
    weekdays: frozenset = _ALL_WEEKDAYS
    months: frozenset = _ALL_MONTHS

    def __post_init__(self):
        if not (math.isfinite(self.rate) and self.rate >= 0.0):
            raise TariffError("demand charge rate must be finite and >= 0")
        if not (self.hours and self.weekdays and self.months):
            raise TariffError("demand charge window must be non-empty")

    def applies(self, month: int, weekday: int, hour: int) -> bool:
        return month in self.months and weekday in self.weekdays and hour in self.hours


@dataclass(frozen=True)
class Tariff:
    name: str
    energy_charges: tuple
    demand_charges: tuple = ()
    fixed_charge: float = 0.0

    def __post_init__(self):
        if not self.energy_charges:
            raise TariffError("tariff requires at least one energy charge")
        if not math.isfinite(self.fixed_charge):
            raise TariffError("fixed charge must be finite")
        object.__setattr__(self, "energy_charges", tuple(self.energy_charges))
        object.__setattr__(self, "demand_charges", tuple(self.demand_charges))
        _validate_coverage(self)


@dataclass(frozen=True)
class BillBreakdown:
    """Itemized bill; ``total`` is the exact sum of the parts."""

    energy_cost: float
    demand_costs: tuple
    fixed_cost: float
    total: float

    @property
    def demand_cost(self) -> float:
        return float(sum(self.demand_costs))


class MonthCalendar:
    """Hourly calendar context for one billing month.

    Steps run at 1-hour resolution from local midnight on the first day.
    ``steps`` may be shorter than the full month so that day-scale analyses
    can still be billed under monthly charge definitions.
    """

    def __init__(self, year: int, month: int, steps: int | None = None,
                 dt_hours: float = 1.0):
        if not 1 <= month <= 12:
            raise TariffError(f"month must be in 1..12, got {month}")
        self.year = int(year)
        self.month = int(month)
        self.dt_hours = float(dt_hours)
        month_hours = _cal.monthrange(self.year, self.month)[1] * 24
        self.steps = month_hours if steps is None else int(steps)
        if not 1 <= self.steps <= month_hours:
            raise TariffError(
                f"steps must be in 1..{month_hours} for {year}-{month:02d}, got {steps}")
        first = date(self.year, self.month, 1)
        hours = np.arange(self.steps)
        self.hour_of_day = (hours % 24).astype(int)
        self.weekday = np.array(
            [(first + timedelta(days=int(h // 24))).weekday() for h in hours], dtype=int)

    def __len__(self) -> int:
        return self.steps


def parse_tariff(source, format: str = "json") -> Tariff:
    """Parse and validate a tariff document.

    Parameters
    ----------
    source : str, bytes, os.PathLike, or file-like
        JSON document or a path to one. Schema::

            {"name": str, "fixed_charge": number,
             "energy_charges": [{"rate": number, "hours": [0..23],
                                 "weekdays": [0..6], "months": [1..12]}],
             "demand_charges": [{"rate": number, "hours": [...],
                                 "weekdays": [...], "months": [...]}]}

        Omitted ``hours``/``weekdays``/``months`` default to all values.
        Weekday 0 is Monday. Rates are $/MWh (energy) and $/MW-period
        (demand).
    format : str
        Only ``json`` is supported.

    Returns
    -------
    Tariff

    Raises
    ------
    TariffError
        On schema violations, hours not covered by exactly one energy
        charge in any month the tariff addresses, or negative demand rates.
    """
    if format != "json":
        raise TariffError(f"unsupported tariff format {format!r}; expected 'json'")
    text = _read_text(source)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TariffError(f"invalid tariff JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise TariffError("tariff document must be a JSON object")
    name = str(doc.get("name", "unnamed"))
    fixed = float(doc.get("fixed_charge", 0.0))
    raw_energy = doc.get("energy_charges")
    if not raw_energy:
        raise TariffError("tariff requires a non-empty 'energy_charges' list")
    energy = tuple(
        EnergyCharge(rate=float(item["rate"]),
                     hours=_as_frozenset(item.get("hours"), 0, 23, "hours"),
                     weekdays=_as_frozenset(item.get("weekdays"), 0, 6, "weekdays"),
                     months=_as_frozenset(item.get("months"), 1, 12, "months"))
        for item in raw_energy)
    demand = tuple(
        DemandCharge(rate=float(item["rate"]),
                     hours=_as_frozenset(item.get("hours"), 0, 23, "hours"),
                     weekdays=_as_frozenset(item.get("weekdays"), 0, 6, "weekdays"),
                     months=_as_frozenset(item.get("months"), 1, 12, "months"))
        for item in doc.get("demand_charges", []))
    return Tariff(name=name, energy_charges=energy, demand_charges=demand,
                  fixed_charge=fixed)


def tariff_to_dict(tariff: Tariff) -> dict:
    """Schema-shaped dict (inverse of :func:`parse_tariff` up to set order)."""
    return {
        "name": tariff.name,
        "fixed_charge": tariff.fixed_charge,
        "energy_charges": [
            {"rate": ec.rate, "hours": sorted(ec.hours),
             "weekdays": sorted(ec.weekdays), "months": sorted(ec.months)}
            for ec in tariff.energy_charges],
        "demand_charges": [
            {"rate": dc.rate, "hours": sorted(dc.hours),
             "weekdays": sorted(dc.weekdays), "months": sorted(dc.months)}
            for dc in tariff.demand_charges],
    }


def _validate_coverage(tariff: Tariff) -> None:
    # Every month any energy charge addresses must be covered by exactly one
    # charge for all weekday/hour combinations; anything else makes the
    # marginal rate ambiguous or the bill undefined.
    months = set()
    for ec in tariff.energy_charges:
        months |= ec.months
    for month in sorted(months):
        for weekday in range(7):
            for hour in range(24):
                n = sum(ec.applies(month, weekday, hour) for ec in tariff.energy_charges)
                if n == 0:
                    raise TariffError(
                        f"uncovered hours: month {month}, weekday {weekday}, "
                        f"hour {hour} has no energy charge")
                if n > 1:
                    raise TariffError(
                        f"overlapping energy charges: month {month}, weekday "
                        f"{weekday}, hour {hour} is covered {n} times")


def marginal_energy_rates(tariff: Tariff, cal: MonthCalendar) -> np.ndarray:
    """Per-timestep $/MWh vector: the unique energy rate applicable at each step."""
    rates = np.empty(cal.steps)
    cache: dict[tuple[int, int], float] = {}
    for t in range(cal.steps):
        key = (int(cal.weekday[t]), int(cal.hour_of_day[t]))
        if key not in cache:
            matches = [ec.rate for ec in tariff.energy_charges
                       if ec.applies(cal.month, key[0], key[1])]
            if len(matches) != 1:
                raise TariffError(
                    f"month {cal.month}, weekday {key[0]}, hour {key[1]} is covered "
                    f"by {len(matches)} energy charges; expected exactly 1")
            cache[key] = matches[0]
        rates[t] = cache[key]
    return rates


def demand_window_masks(tariff: Tariff, cal: MonthCalendar) -> list[np.ndarray]:
    """Boolean mask per demand charge marking the steps inside its window."""
    masks = []
    for dc in tariff.demand_charges:
        mask = np.array([dc.applies(cal.month, int(cal.weekday[t]), int(cal.hour_of_day[t]))
                         for t in range(cal.steps)], dtype=bool)
        masks.append(mask)
    return masks


def bill(tariff: Tariff, schedule, cal: MonthCalendar) -> BillBreakdown:
    """Compute the itemized bill for a schedule over a billing month.

    Parameters
    ----------
    tariff : Tariff
    schedule : loadflex.flexmodel.Schedule or array-like
        Net power per step (MW). A bare array is treated as net power.
    cal : MonthCalendar
        Must match the schedule horizon exactly.

    Returns
    -------
    BillBreakdown
        ``energy_cost`` is the rate-weighted energy sum, each demand cost is
        ``rate * max(window power)``, and ``total`` is their exact sum plus
        the fixed charge.
    """
    power = getattr(schedule, "net_power", schedule)
    power = np.asarray(power, dtype=float)
    if power.ndim != 1 or power.size != cal.steps:
        raise SpecError(
            f"schedule horizon {power.size} does not match calendar steps {cal.steps}")
    rates = marginal_energy_rates(tariff, cal)
    energy_cost = float(np.dot(rates, power) * cal.dt_hours)
    demand_costs = []
    for dc, mask in zip(tariff.demand_charges, demand_window_masks(tariff, cal)):
        peak = float(power[mask].max()) if mask.any() else 0.0
        demand_costs.append(dc.rate * peak)
    total = energy_cost + math.fsum(demand_costs) + tariff.fixed_charge
    return BillBreakdown(energy_cost=energy_cost, demand_costs=tuple(demand_costs),
                         fixed_cost=tariff.fixed_charge, total=total)


def _read_text(source) -> str:
    if hasattr(source, "read"):
        data = source.read()
        return data.decode("utf-8") if isinstance(data, bytes) else data
    if isinstance(source, bytes):
        return source.decode("utf-8")
    text = str(source)
    if text.lstrip().startswith("{"):
        return text
    with open(text, encoding="utf-8") as fh:
        return fh.read()
