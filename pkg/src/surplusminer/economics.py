"""Daily mining output, revenue, depreciation, and per-case profit reports.

A case is one (price source, scenario plan) pair. Each simulated day mines
reward x (fleet share of network hash rate) x 144 blocks, valued at the
case's price for that day. Revenue accumulates as plain floats in date order;
money becomes exact cents (Decimal) at the report boundary, and depreciation
is exact rational arithmetic throughout, so profit = revenue - cost holds to
the cent.
"""
from __future__ import annotations

import bisect
import csv
import logging
import math
from dataclasses import dataclass, field
from datetime import date, timedelta
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction

from .errors import DataInsufficientError, ValidationError
from .fleet import MinerSpec, ScenarioPlan, block_reward
from .ingest import MarketSeries

logger = logging.getLogger(__name__)

BLOCKS_PER_DAY = 144

DEFAULT_SIM_START = date(2023, 1, 1)
DEFAULT_SIM_END = date(2023, 12, 31)

_CENT = Decimal("0.01")


def btc_per_day(
    fleet_hashrate_ths: float,
    network_hashrate_ths: float,
    reward_btc: float,
    blocks_per_day: int = BLOCKS_PER_DAY,
) -> float:
    """Expected BTC mined per day: reward x (fleet/network) x blocks.

    A fleet share above 1 is physically impossible and is capped (with a
    warning) rather than extrapolated.
    """
    if network_hashrate_ths <= 0:
        raise ValidationError(f"network hash rate must be > 0, got {network_hashrate_ths!r}")
    if fleet_hashrate_ths < 0:
        raise ValidationError(f"fleet hash rate must be >= 0, got {fleet_hashrate_ths!r}")
    if reward_btc < 0:
        raise ValidationError(f"reward must be >= 0, got {reward_btc!r}")
    share = fleet_hashrate_ths / network_hashrate_ths
    if share > 1.0:
        logger.warning(
            "fleet hash rate %.0f TH/s exceeds the network's %.0f TH/s; capping share at 1",
            fleet_hashrate_ths,
            network_hashrate_ths,
        )
        share = 1.0
    return reward_btc * share * blocks_per_day


def daily_revenue(price_used_usd: float, btc: float) -> float:
    """Revenue for one day: price x BTC mined (exact float product)."""
    if price_used_usd < 0:
        raise ValidationError(f"price must be >= 0, got {price_used_usd!r}")
    if btc < 0:
        raise ValidationError(f"btc must be >= 0, got {btc!r}")
    return price_used_usd * btc


def depreciation_cost(
    owned_units: int,
    unit_price_usd: float,
    months_operated: int,
    lifespan_months: int = 90,
) -> Decimal:
    """Straight-line hardware cost for the months operated, in exact cents.

    owned x price x months / lifespan, evaluated as an exact rational and
    rounded half-up to cents only at the end.
    """
    if lifespan_months <= 0:
        raise ValidationError(f"lifespan_months must be > 0, got {lifespan_months}")
    if owned_units < 0 or unit_price_usd < 0 or months_operated < 0:
        raise ValidationError("owned_units, unit_price_usd, months_operated must be >= 0")
    value = (
        Fraction(owned_units)
        * Fraction(Decimal(str(unit_price_usd)))
        * Fraction(months_operated)
        / Fraction(lifespan_months)
    )
    cents = math.floor(value * 100 + Fraction(1, 2))
    return Decimal(cents).scaleb(-2)


def solo_mining_time(
    miner_hashrate_ths: float,
    network_hashrate_ths: float,
    reward_btc: float,
) -> float:
    """Expected days for one miner to earn 1 BTC: 1 / btc_per_day."""
    if miner_hashrate_ths <= 0 or reward_btc <= 0:
        raise ValidationError("miner hash rate and reward must be > 0")
    rate = btc_per_day(miner_hashrate_ths, network_hashrate_ths, reward_btc)
    return 1.0 / rate


def usd_cents(amount: float) -> Decimal:
    """Float dollars -> Decimal rounded half-up to cents."""
    return Decimal(str(amount)).quantize(_CENT, rounding=ROUND_HALF_UP)


def usd_millions(amount: Decimal) -> int:
    """Dollars -> nearest whole million (half-up), for summary tables."""
    return int((amount / Decimal(1_000_000)).to_integral_value(rounding=ROUND_HALF_UP))


@dataclass
class PriceSource:
    """Daily prices for one case, keyed by the day they apply to.

    Prediction sources allow fallback: a day with no prediction uses the
    most recent earlier one (or the earliest available when nothing precedes,
    which only happens during the model's warm-up at the start of the range).
    Fallback days are flagged so the ledger records them.
    """

    label: str
    prices: dict[date, float]
    allow_fallback: bool = False
    _days: list[date] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not self.prices:
            raise DataInsufficientError(f"price source {self.label!r} is empty")
        self._days = sorted(self.prices)

    @classmethod
    def from_market(cls, market: MarketSeries) -> "PriceSource":
        return cls("actual", {r.day: r.price_usd for r in market.records})

    @classmethod
    def from_predictions(cls, label: str, predictions: dict[date, float]) -> "PriceSource":
        return cls(label, dict(predictions), allow_fallback=True)

    def price_for(self, day: date) -> tuple[float, bool]:
        """(price, is_fallback) for the given day."""
        exact = self.prices.get(day)
        if exact is not None:
            return exact, False
        if not self.allow_fallback:
            raise ValidationError(f"price source {self.label!r} has no price for {day.isoformat()}")
        pos = bisect.bisect_right(self._days, day)
        fallback_day = self._days[pos - 1] if pos > 0 else self._days[0]
        return self.prices[fallback_day], True


@dataclass(frozen=True)
class DailyLedgerEntry:
    day: date
    scenario: int
    price_source: str
    operating_units: int
    fleet_hashrate_ths: float
    network_hashrate_ths: float
    btc_mined: float
    revenue_usd: float
    price_used_usd: float
    price_is_fallback: bool


@dataclass(frozen=True)
class MonthlyResult:
    month: str
    btc_mined: float
    revenue_usd: float


@dataclass
class SimulationReport:
    """Totals for one case, plus its per-day ledger."""

    case_label: str
    scenario: int
    price_source: str
    revenue_usd: Decimal
    cost_usd: Decimal
    profit_usd: Decimal
    monthly: tuple[MonthlyResult, ...]
    delta_vs_actual_pct: float | None
    ledger: list[DailyLedgerEntry]
    fallback_days: int


def months_spanned(start: date, end: date) -> int:
    """Distinct calendar months touched by [start, end]."""
    if end < start:
        raise ValidationError("end before start")
    return (end.year - start.year) * 12 + (end.month - start.month) + 1


def run_case(
    plan: ScenarioPlan,
    prices: PriceSource,
    market: MarketSeries,
    miner: MinerSpec,
    sim_start: date = DEFAULT_SIM_START,
    sim_end: date = DEFAULT_SIM_END,
    blocks_per_day: int = BLOCKS_PER_DAY,
) -> SimulationReport:
    """Simulate one case day by day over [sim_start, sim_end].

    Each day uses block_reward(day), the plan's operating units for the
    day's month, the day's actual network hash rate, and the case's price.
    Missing hash rate or (non-fallback) price for any day is an error.
    """
    if sim_end < sim_start:
        raise ValidationError("sim_end before sim_start")

    entries: list[DailyLedgerEntry] = []
    total_revenue = 0.0
    monthly_rev: dict[str, float] = {}
    monthly_btc: dict[str, float] = {}
    fallback_days = 0

    day = sim_start
    while day <= sim_end:
        record = market.lookup(day)
        if record is None:
            raise ValidationError(f"market series has no hash rate for {day.isoformat()}")
        month = f"{day.year:04d}-{day.month:02d}"
        fleet_month = plan.fleet_for(month)
        operating = fleet_month.operating
        fleet_ths = operating * miner.hashrate_ths
        price, is_fallback = prices.price_for(day)
        fallback_days += is_fallback
        btc = btc_per_day(fleet_ths, record.network_hashrate_ths, block_reward(day), blocks_per_day)
        revenue = daily_revenue(price, btc)
        entries.append(
            DailyLedgerEntry(
                day=day,
                scenario=plan.scenario,
                price_source=prices.label,
                operating_units=operating,
                fleet_hashrate_ths=fleet_ths,
                network_hashrate_ths=record.network_hashrate_ths,
                btc_mined=btc,
                revenue_usd=revenue,
                price_used_usd=price,
                price_is_fallback=is_fallback,
            )
        )
        total_revenue += revenue
        monthly_rev[month] = monthly_rev.get(month, 0.0) + revenue
        monthly_btc[month] = monthly_btc.get(month, 0.0) + btc
        day += timedelta(days=1)

    revenue_cents = usd_cents(total_revenue)
    cost_cents = depreciation_cost(
        plan.owned_units,
        miner.unit_price_usd,
        months_spanned(sim_start, sim_end),
        miner.lifespan_months,
    )
    return SimulationReport(
        case_label=f"{prices.label}-{plan.scenario}",
        scenario=plan.scenario,
        price_source=prices.label,
        revenue_usd=revenue_cents,
        cost_usd=cost_cents,
        profit_usd=revenue_cents - cost_cents,
        monthly=tuple(
            MonthlyResult(m, monthly_btc[m], monthly_rev[m]) for m in sorted(monthly_rev)
        ),
        delta_vs_actual_pct=None,
        ledger=entries,
        fallback_days=fallback_days,
    )


def attach_deltas(reports: list[SimulationReport]) -> None:
    """Fill delta_vs_actual_pct on each report from its scenario's actual case."""
    actual_by_scenario = {
        r.scenario: r for r in reports if r.price_source == "actual"
    }
    for r in reports:
        base = actual_by_scenario.get(r.scenario)
        if base is None or r.price_source == "actual" or base.revenue_usd == 0:
            continue
        r.delta_vs_actual_pct = float(
            (r.revenue_usd - base.revenue_usd) / base.revenue_usd * 100
        )


def write_ledger_csv(reports: list[SimulationReport], path, header_comment: str | None = None) -> None:
    """All cases' daily rows, ordered by case label then date."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            [
                "date", "scenario", "price_source", "operating_units",
                "fleet_hashrate_ths", "network_hashrate_ths",
                "btc_mined", "revenue_usd", "price_used_usd", "price_is_fallback",
            ]
        )
        for report in sorted(reports, key=lambda r: r.case_label):
            for e in report.ledger:
                writer.writerow(
                    [
                        e.day.isoformat(),
                        e.scenario,
                        e.price_source,
                        e.operating_units,
                        repr(e.fleet_hashrate_ths),
                        repr(e.network_hashrate_ths),
                        repr(e.btc_mined),
                        repr(e.revenue_usd),
                        repr(e.price_used_usd),
                        int(e.price_is_fallback),
                    ]
                )
