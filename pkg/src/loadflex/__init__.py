"""Upper-bound valuation of flexible electrical load operation.

Exact schedule optimization against hourly prices, emissions factors, and
retail tariffs, parameterized by uptime, power capacity, round-trip
efficiency, and energy capacity, with cost-emissions trade-off fronts and
carbon abatement costs against REC/SCC benchmarks.
"""

from .analysis import (
    AbatementResult,
    Benchmarks,
    ParetoFront,
    ParetoPoint,
    SavingsSurface,
    abatement_cost,
    min_viable_rte,
    pareto_front,
    rec_equivalent,
    savings,
    sweep_surface,
)
from .errors import (
    AnalysisError,
    InfeasibleError,
    LoadflexError,
    SignalError,
    SolverError,
    SpecError,
    TariffError,
)
from .flexmodel import (
    FeasibilityReport,
    FlexSpec,
    Schedule,
    check_feasibility,
    energy_capacity,
    is_feasible,
    realized_power_capacity,
    realized_uptime,
)
from .signals import (
    HourlyProfile,
    SignalSeries,
    load_signal,
    month_hour_average,
    profile_to_series,
    series_from_json,
    series_to_csv,
    series_to_json,
)
from .solver import (
    Objective,
    SolveResult,
    brute_force,
    solve,
    solve_fixed_k,
    solve_lagrangian,
    solve_min_uptime,
    solve_tariff,
)
from .tariff import (
    BillBreakdown,
    DemandCharge,
    EnergyCharge,
    MonthCalendar,
    Tariff,
    bill,
    marginal_energy_rates,
    parse_tariff,
    tariff_to_dict,
)

__version__ = "0.1.0"
