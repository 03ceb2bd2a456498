"""Command-line interface: reproducible solves, sweeps, and trade-off reports.

Exit codes: 0 success, 1 input error, 2 infeasible (or solver failure).
Flag values take precedence over the JSON config file (``--config``), which
takes precedence over built-in defaults. Outputs are deterministic for
identical inputs and configuration.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import analysis, flexmodel, signals, solver, tariff as tariff_mod
from .errors import InfeasibleError, LoadflexError, SolverError, SpecError

_DEFAULTS = {
    "uptime": 1.0,
    "uptime_mode": "exact",
    "pc": 0.0,
    "pc_reference": "average",
    "rte": 1.0,
    "ec": None,
    "baseline": None,
    "baseline_mw": 1.0,
    "kind": "generic",
    "region": "UTC",
    "units": "$/MWh",
    "out": "out",
    "format": "both",
    "seed": 0,
    "year": 2023,
    "month": None,
    "month_hour_average": False,
    "weight": 0.0,
    "weights": None,
    "fraction": "1.0",
    "scc": 140.0,
    "rec_price_min": 1.0,
    "rec_price_max": 20.0,
    "rec_price": None,
    "u_grid": "0.25,0.5,0.75,1.0",
    "pc_grid": "0.0,0.5,1.0",
    "tol": 1e-4,
    "steps": 24,
    "mw": 1.0,
    "start": "2023-01-01T00:00:00+00:00",
}


class _CliInputError(LoadflexError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _CliInputError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="loadflex",
                     description="Value flexible load operation against prices, "
                                 "emissions factors, and retail tariffs.")
    sub = parser.add_subparsers(dest="command")

    def add_common(p):
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--out", help="output directory (default: out)")
        p.add_argument("--format", choices=["csv", "json", "both"],
                       help="plot-data formats to write (default: both)")
        p.add_argument("--seed", type=int, help="seed recorded for reproducibility")

    def add_spec(p):
        p.add_argument("--uptime", "-u", type=float, help="uptime fraction in (0,1]")
        p.add_argument("--uptime-mode", choices=["exact", "minimum", "free"],
                       dest="uptime_mode")
        p.add_argument("--pc", type=float, help="power capacity in [0,1]")
        p.add_argument("--pc-reference", choices=["average", "baseline"],
                       dest="pc_reference")
        p.add_argument("--rte", type=float, help="round-trip efficiency in (0,1]")
        p.add_argument("--ec", type=float, help="optional energy-capacity cap in [0,1]")
        p.add_argument("--baseline", help="baseline profile CSV (timestamp,value in MW)")
        p.add_argument("--baseline-mw", type=float, dest="baseline_mw",
                       help="flat baseline level when no file is given (default 1.0)")

    def add_signal_opts(p):
        p.add_argument("--kind", choices=list(signals.SIGNAL_KINDS))
        p.add_argument("--region", help="region label for local-time bucketing")
        p.add_argument("--units", help="declared signal units")
        p.add_argument("--month", type=int, help="month 1..12 for averaging/billing")
        p.add_argument("--month-hour-average", action="store_const", const=True,
                       dest="month_hour_average",
                       help="collapse the signal to a 24-hour month-hour profile")

    p = sub.add_parser("solve", help="optimize one schedule against a signal or tariff")
    add_common(p); add_spec(p); add_signal_opts(p)
    p.add_argument("--signal", help="incentive signal CSV (linear objective)")
    p.add_argument("--emissions", help="emissions signal CSV (reporting/weighting)")
    p.add_argument("--tariff", help="tariff JSON (bill objective)")
    p.add_argument("--year", type=int, help="billing year (tariff objectives)")
    p.add_argument("--weight", type=float, help="emissions weight added to the objective")
    p.add_argument("--solver", choices=["exact", "lagrangian"], default=None,
                   help="free-uptime method (default exact enumeration)")

    p = sub.add_parser("sweep", help="savings surface over uptime x power capacity")
    add_common(p); add_spec(p); add_signal_opts(p)
    p.add_argument("--signal", help="incentive signal CSV")
    p.add_argument("--tariff", help="tariff JSON")
    p.add_argument("--year", type=int)
    p.add_argument("--u-grid", dest="u_grid", help="comma-separated uptime grid")
    p.add_argument("--pc-grid", dest="pc_grid", help="comma-separated PC grid")

    p = sub.add_parser("pareto", help="cost-emissions trade-off front")
    add_common(p); add_spec(p); add_signal_opts(p)
    p.add_argument("--cost", help="cost signal CSV")
    p.add_argument("--tariff", help="tariff JSON as the cost objective")
    p.add_argument("--year", type=int)
    p.add_argument("--emissions", help="emissions signal CSV", required=False)
    p.add_argument("--weights", help="comma-separated emission weights")

    p = sub.add_parser("abatement", help="abatement cost vs REC/SCC benchmarks")
    add_common(p); add_spec(p); add_signal_opts(p)
    p.add_argument("--cost", help="cost signal CSV")
    p.add_argument("--tariff", help="tariff JSON as the cost objective")
    p.add_argument("--year", type=int)
    p.add_argument("--emissions", help="emissions signal CSV")
    p.add_argument("--weights", help="comma-separated emission weights")
    p.add_argument("--fraction", help="comma-separated fractions of max abatement")
    p.add_argument("--scc", type=float, help="social cost of carbon $/ton (default 140)")
    p.add_argument("--rec-price-min", type=float, dest="rec_price_min")
    p.add_argument("--rec-price-max", type=float, dest="rec_price_max")
    p.add_argument("--rec-price", type=float, dest="rec_price",
                   help="single REC price for the hourly equivalent table")

    p = sub.add_parser("rte-threshold", help="break-even round-trip efficiency")
    add_common(p); add_spec(p); add_signal_opts(p)
    p.add_argument("--signal", help="incentive signal CSV")
    p.add_argument("--tol", type=float, help="bisection tolerance (default 1e-4)")

    p = sub.add_parser("bill", help="itemized bill for a schedule under a tariff")
    add_common(p)
    p.add_argument("--tariff", required=True)
    p.add_argument("--schedule", required=True, help="schedule JSON")
    p.add_argument("--year", type=int)
    p.add_argument("--month", type=int)

    p = sub.add_parser("emit-baseline", help="write a flat baseline profile CSV")
    add_common(p)
    p.add_argument("--steps", type=int, help="number of hourly steps (default 24)")
    p.add_argument("--mw", type=float, help="flat level in MW (default 1.0)")
    p.add_argument("--start", help="ISO timestamp of the first step")

    return parser


def _resolve(args) -> dict:
    cfg_file = {}
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            with open(config_path, encoding="utf-8") as fh:
                cfg_file = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise _CliInputError(f"cannot read config file {config_path}: {exc}") from exc
        if not isinstance(cfg_file, dict):
            raise _CliInputError("config file must hold a JSON object")
    cfg = {}
    for key, default in _DEFAULTS.items():
        flag = getattr(args, key, None)
        cfg[key] = flag if flag is not None else cfg_file.get(key, default)
    for key in ("signal", "emissions", "cost", "tariff", "schedule", "solver"):
        flag = getattr(args, key, None)
        cfg[key] = flag if flag is not None else cfg_file.get(key)
    cfg["command"] = args.command
    return cfg


def _floats(text: str, label: str) -> list[float]:
    try:
        return [float(x) for x in str(text).split(",") if x.strip() != ""]
    except ValueError as exc:
        raise _CliInputError(f"invalid {label} list: {text!r}") from exc


def _load_signal(cfg: dict, path: str, kind: str) -> np.ndarray:
    series = signals.load_signal(path, kind=kind, units=cfg["units"],
                                 region=cfg["region"])
    if cfg["month_hour_average"]:
        if cfg["month"] is None:
            raise _CliInputError("--month-hour-average requires --month")
        profile = signals.month_hour_average(series, int(cfg["month"]))
        return profile.values.copy()
    return series.values.copy()


def _build_spec(cfg: dict, horizon: int) -> flexmodel.FlexSpec:
    if cfg["baseline"]:
        base_series = signals.load_signal(cfg["baseline"], kind="generic",
                                          units="MW", region=cfg["region"])
        baseline = base_series.values.copy()
        if baseline.size != horizon:
            raise SpecError(f"baseline length {baseline.size} != horizon {horizon}")
    else:
        baseline = np.full(horizon, float(cfg["baseline_mw"]))
    return flexmodel.FlexSpec(baseline=baseline, uptime=float(cfg["uptime"]),
                              uptime_mode=cfg["uptime_mode"],
                              power_capacity=float(cfg["pc"]),
                              pc_reference=cfg["pc_reference"],
                              rte=float(cfg["rte"]),
                              ec_cap=None if cfg["ec"] is None else float(cfg["ec"]))


def _cost_objective(cfg: dict, need_emissions: bool = False):
    """Build (objective, horizon, emissions_vector_or_None) from the config."""
    emissions = None
    if cfg.get("emissions"):
        emissions = _load_signal(cfg, cfg["emissions"], "generic")
    if cfg.get("tariff"):
        trf = tariff_mod.parse_tariff(cfg["tariff"])
        if cfg["month"] is None:
            raise _CliInputError("tariff objectives require --month")
        if emissions is not None:
            cal = tariff_mod.MonthCalendar(int(cfg["year"]), int(cfg["month"]),
                                           steps=emissions.size)
        else:
            cal = tariff_mod.MonthCalendar(int(cfg["year"]), int(cfg["month"]))
        objective = solver.Objective.for_tariff(trf, cal, emissions=emissions,
                                                weight=float(cfg["weight"]))
        return objective, cal.steps, emissions
    source = cfg.get("signal") or cfg.get("cost")
    if not source:
        raise _CliInputError("provide --signal/--cost or --tariff")
    coeffs = _load_signal(cfg, source, cfg["kind"])
    if emissions is not None and emissions.size != coeffs.size:
        raise _CliInputError("cost and emissions signals have different horizons")
    if need_emissions and emissions is None:
        raise _CliInputError("this command requires --emissions")
    if emissions is not None and float(cfg["weight"]) > 0:
        objective = solver.Objective.weighted(coeffs, emissions, float(cfg["weight"]))
    else:
        objective = solver.Objective.linear(coeffs, emissions=emissions)
    return objective, coeffs.size, emissions


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(out: Path, name: str, text: str) -> None:
    (out / name).write_text(text, encoding="utf-8")


def _dump(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=True)


def _money(x) -> str:
    return "n/a" if x is None else f"{x:,.2f} $"


def _summary(result: solver.SolveResult, spec, savings_pct) -> str:
    sched = result.schedule
    lines = [
        f"  savings            {savings_pct:.4f} %" if savings_pct is not None else
        "  savings            n/a",
        f"  cost               {_money(result.cost)}",
        f"  emissions          "
        + ("n/a" if result.emissions is None else f"{result.emissions:,.2f} kg"),
        f"  objective          {result.objective_value:,.6f}",
        f"  realized uptime    {flexmodel.realized_uptime(sched):.4f}",
        f"  realized PC        {flexmodel.realized_power_capacity(sched, spec):.4f}",
        f"  realized EC        {flexmodel.energy_capacity(sched, spec.baseline):.4f}",
        f"  on-steps           {sched.on_count()}/{sched.horizon}",
    ]
    return "\n".join(lines)


def _cmd_solve(cfg: dict) -> int:
    objective, horizon, _ = _cost_objective(cfg)
    spec = _build_spec(cfg, horizon)
    if cfg.get("solver") == "lagrangian":
        result = solver.solve_lagrangian(objective, spec)
    else:
        result = solver.solve(objective, spec)
    base_val = analysis.baseline_value(objective, spec)
    savings_pct = analysis.savings(base_val, analysis.flexible_value(result, objective))
    out = _out_dir(cfg)
    _write(out, "schedule.json", flexmodel.schedule_to_json(result.schedule))
    doc = {
        "config": _config_echo(cfg),
        "objective_value": result.objective_value,
        "cost_usd": result.cost,
        "emissions_kg": result.emissions,
        "baseline_value": base_val,
        "savings_pct": savings_pct,
        "realized": {
            "uptime": flexmodel.realized_uptime(result.schedule),
            "power_capacity": flexmodel.realized_power_capacity(result.schedule, spec),
            "energy_capacity": flexmodel.energy_capacity(result.schedule, spec.baseline),
            "on_count": result.schedule.on_count(),
        },
        "diagnostics": result.diagnostics,
    }
    _write(out, "result.json", _dump(doc))
    print(_summary(result, spec, savings_pct))
    print(f"  wrote {out / 'result.json'} and {out / 'schedule.json'}")
    return 0


def _cmd_sweep(cfg: dict) -> int:
    objective, horizon, _ = _cost_objective(cfg)
    spec = _build_spec(cfg, horizon)
    u_grid = _floats(cfg["u_grid"], "u-grid")
    pc_grid = _floats(cfg["pc_grid"], "pc-grid")
    meta = {"kind": cfg["kind"], "region": cfg["region"], "month": cfg["month"]}
    surface = analysis.sweep_surface(objective, spec, u_grid, pc_grid, metadata=meta)
    out = _out_dir(cfg)
    if cfg["format"] in ("csv", "both"):
        _write(out, "surface.csv", analysis.surface_to_csv(surface))
    if cfg["format"] in ("json", "both"):
        _write(out, "surface.json", analysis.surface_to_json(surface))
    best = float(np.nanmax(surface.values))
    print(f"  grid               {len(u_grid)} x {len(pc_grid)} points")
    print(f"  best savings       {best:.4f} %")
    print(f"  wrote surface data to {out}")
    return 0


def _cmd_pareto(cfg: dict) -> int:
    objective, horizon, emissions = _cost_objective(cfg, need_emissions=True)
    if emissions is None:
        raise _CliInputError("pareto requires --emissions")
    spec = _build_spec(cfg, horizon)
    weights = _floats(cfg["weights"], "weights") if cfg["weights"] else None
    front = analysis.pareto_front(objective, emissions, spec, weights=weights)
    out = _out_dir(cfg)
    if cfg["format"] in ("csv", "both"):
        _write(out, "pareto.csv", analysis.front_to_csv(front))
    if cfg["format"] in ("json", "both"):
        _write(out, "pareto.json", analysis.front_to_json(front))
    print(f"  front points       {len(front.points)}")
    print(f"  cost-optimal       {_money(front.cost_optimal.cost)}, "
          f"{front.cost_optimal.emissions:,.2f} kg")
    print(f"  emissions-optimal  {_money(front.emissions_optimal.cost)}, "
          f"{front.emissions_optimal.emissions:,.2f} kg")
    print(f"  wrote front data to {out}")
    return 0


def _cmd_abatement(cfg: dict) -> int:
    objective, horizon, emissions = _cost_objective(cfg, need_emissions=True)
    if emissions is None:
        raise _CliInputError("abatement requires --emissions")
    spec = _build_spec(cfg, horizon)
    weights = _floats(cfg["weights"], "weights") if cfg["weights"] else None
    front = analysis.pareto_front(objective, emissions, spec, weights=weights)
    fractions = _floats(cfg["fraction"], "fraction")
    benchmarks = analysis.Benchmarks(
        scc=float(cfg["scc"]),
        rec_price_range=(float(cfg["rec_price_min"]), float(cfg["rec_price_max"])))
    rows = []
    for fraction in fractions:
        res = analysis.abatement_cost(front, fraction)
        rows.append({"fraction": fraction,
                     "cost_per_ton_usd": res.cost_of_abatement,
                     "anchor_weight": ("inf" if math.isinf(res.anchor_weight)
                                       else res.anchor_weight)})
    out = _out_dir(cfg)
    doc = {
        "config": _config_echo(cfg),
        "abatement": rows,
        "benchmarks": {
            "scc_usd_per_ton": benchmarks.scc,
            "rec_price_range_usd_per_mwh": list(benchmarks.rec_price_range),
        },
    }
    if cfg["rec_price"] is not None and cfg["month"] is not None:
        series = signals.load_signal(cfg["emissions"], kind="generic",
                                     units="kgCO2/MWh", region=cfg["region"])
        profile = signals.month_hour_average(series, int(cfg["month"]))
        vec = analysis.rec_equivalent(float(cfg["rec_price"]), profile)
        doc["rec_equivalent_usd_per_ton_by_hour"] = [
            None if math.isnan(v) else float(v) for v in vec]
    if cfg["format"] in ("json", "both"):
        _write(out, "abatement.json", _dump(doc))
    if cfg["format"] in ("csv", "both"):
        lines = ["fraction,cost_per_ton_usd,anchor_weight"]
        for row in rows:
            lines.append(f"{row['fraction']!r},{row['cost_per_ton_usd']!r},"
                         f"{row['anchor_weight']}")
        _write(out, "abatement.csv", "\n".join(lines) + "\n")
    for row in rows:
        print(f"  fraction {row['fraction']:<6} -> "
              f"{row['cost_per_ton_usd']:,.2f} $/ton")
    print(f"  benchmarks: SCC {benchmarks.scc:,.2f} $/ton, "
          f"REC {benchmarks.rec_price_range[0]:.2f}-"
          f"{benchmarks.rec_price_range[1]:.2f} $/MWh")
    print(f"  wrote abatement data to {out}")
    return 0


def _cmd_rte_threshold(cfg: dict) -> int:
    objective, horizon, _ = _cost_objective(cfg)
    spec = _build_spec(cfg, horizon)
    threshold = analysis.min_viable_rte(objective, spec, tol=float(cfg["tol"]))
    out = _out_dir(cfg)
    doc = {"config": _config_echo(cfg), "min_viable_rte": threshold}
    _write(out, "rte_threshold.json", _dump(doc))
    if threshold >= 1.0:
        print("  no benefit at any round-trip efficiency (threshold 1.0)")
    else:
        print(f"  break-even RTE     {threshold:.4f}")
    print(f"  wrote {out / 'rte_threshold.json'}")
    return 0


def _cmd_bill(cfg: dict) -> int:
    trf = tariff_mod.parse_tariff(cfg["tariff"])
    with open(cfg["schedule"], encoding="utf-8") as fh:
        schedule = flexmodel.schedule_from_json(fh.read())
    if cfg["month"] is None:
        raise _CliInputError("bill requires --month")
    cal = tariff_mod.MonthCalendar(int(cfg["year"]), int(cfg["month"]),
                                   steps=schedule.horizon)
    breakdown = tariff_mod.bill(trf, schedule, cal)
    out = _out_dir(cfg)
    doc = {
        "config": _config_echo(cfg),
        "energy_cost_usd": breakdown.energy_cost,
        "demand_costs_usd": list(breakdown.demand_costs),
        "fixed_cost_usd": breakdown.fixed_cost,
        "total_usd": breakdown.total,
    }
    _write(out, "bill.json", _dump(doc))
    print(f"  energy             {_money(breakdown.energy_cost)}")
    for i, d in enumerate(breakdown.demand_costs):
        print(f"  demand[{i}]          {_money(d)}")
    print(f"  fixed              {_money(breakdown.fixed_cost)}")
    print(f"  total              {_money(breakdown.total)}")
    print(f"  wrote {out / 'bill.json'}")
    return 0


def _cmd_emit_baseline(cfg: dict) -> int:
    steps = int(cfg["steps"])
    if steps <= 0:
        raise _CliInputError("--steps must be > 0")
    mw = float(cfg["mw"])
    start_text = str(cfg["start"])
    if start_text.endswith(("Z", "z")):
        start_text = start_text[:-1] + "+00:00"
    try:
        start = datetime.fromisoformat(start_text)
    except ValueError as exc:
        raise _CliInputError(f"invalid --start timestamp: {cfg['start']!r}") from exc
    if start.tzinfo is None:
        start = start.replace(tzinfo=timezone.utc)
    series = signals.SignalSeries(kind="generic", region=cfg["region"], units="MW",
                                  start=start, values=np.full(steps, mw))
    out = _out_dir(cfg)
    _write(out, "baseline.csv", signals.series_to_csv(series))
    print(f"  wrote {out / 'baseline.csv'} ({steps} steps at {mw} MW, "
          f"{steps * mw:.1f} MWh total)")
    return 0


def _config_echo(cfg: dict) -> dict:
    return {k: v for k, v in sorted(cfg.items()) if v is not None}


_HANDLERS = {
    "solve": _cmd_solve,
    "sweep": _cmd_sweep,
    "pareto": _cmd_pareto,
    "abatement": _cmd_abatement,
    "rte-threshold": _cmd_rte_threshold,
    "bill": _cmd_bill,
    "emit-baseline": _cmd_emit_baseline,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            parser.print_help()
            return 1
        cfg = _resolve(args)
        return _HANDLERS[args.command](cfg)
    except _CliInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 2
    except LoadflexError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
