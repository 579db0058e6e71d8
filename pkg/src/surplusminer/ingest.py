"""Loading, validation, and alignment of market and surplus-energy data.

Two inputs drive every run: a daily Bitcoin market file (closing price and
network hash rate) and a monthly surplus-electricity file from the utility.
Both arrive as CSV. This module parses them into typed records, rejects rows
that violate the documented invariants (with file/line context), fills
calendar gaps in the market series by carrying the previous day forward, and
converts monthly energy totals into per-day values.
"""
from __future__ import annotations

import calendar
import csv
import logging
import math
import re
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path

from .errors import DataInsufficientError, ValidationError

logger = logging.getLogger(__name__)

MARKET_COLUMNS = ("date", "price_usd", "network_hashrate_ths")
SURPLUS_COLUMNS = ("region", "month", "households", "surplus_kwh")

# Months the utility dataset is allowed to cover unless config widens it.
DEFAULT_SURPLUS_MONTHS = ("2021-01", "2023-12")

_MONTH_RE = re.compile(r"^\d{4}-(0[1-9]|1[0-2])$")


@dataclass(frozen=True)
class MarketRecord:
    """One day of Bitcoin market data."""

    day: date
    price_usd: float
    network_hashrate_ths: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.price_usd) or self.price_usd < 0:
            raise ValidationError(
                f"price_usd must be finite and >= 0, got {self.price_usd!r}"
            )
        if not math.isfinite(self.network_hashrate_ths) or self.network_hashrate_ths <= 0:
            raise ValidationError(
                f"network_hashrate_ths must be finite and > 0, "
                f"got {self.network_hashrate_ths!r}"
            )


@dataclass
class MarketSeries:
    """Daily market records in strictly increasing date order."""

    records: list[MarketRecord]
    _by_date: dict[date, MarketRecord] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        for prev, cur in zip(self.records, self.records[1:]):
            if cur.day <= prev.day:
                raise ValidationError(
                    f"records out of order or duplicated at {cur.day.isoformat()}"
                )
        self._by_date = {r.day: r for r in self.records}

    def __len__(self) -> int:
        return len(self.records)

    @property
    def start(self) -> date:
        if not self.records:
            raise DataInsufficientError("empty market series has no start date")
        return self.records[0].day

    @property
    def end(self) -> date:
        if not self.records:
            raise DataInsufficientError("empty market series has no end date")
        return self.records[-1].day

    def lookup(self, day: date) -> MarketRecord | None:
        return self._by_date.get(day)

    def prices(self) -> list[float]:
        return [r.price_usd for r in self.records]

    def dates(self) -> list[date]:
        return [r.day for r in self.records]

    def is_contiguous(self) -> bool:
        """True when every calendar day between start and end has a record."""
        if not self.records:
            return True
        return len(self.records) == (self.end - self.start).days + 1

    def clip(self, start: date | None = None, end: date | None = None) -> "MarketSeries":
        """Records within [start, end], inclusive; bounds default to the series edges."""
        kept = [
            r
            for r in self.records
            if (start is None or r.day >= start) and (end is None or r.day <= end)
        ]
        return MarketSeries(kept)


def _data_rows(path: str | Path):
    """Yield (line_number, row) from a CSV file, skipping blank and '#' lines.

    The '#' skip lets files written by this package (which carry a provenance
    header line) round-trip through the same parser.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for row in reader:
            if not row or row[0].startswith("#"):
                continue
            yield reader.line_num, row


def _parse_date(text: str, where: str) -> date:
    try:
        return date.fromisoformat(text.strip())
    except ValueError:
        raise ValidationError(f"{where}: invalid ISO date {text!r}") from None


def _parse_float(text: str, where: str, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ValidationError(f"{where}: invalid number {text!r} in {column}") from None
    if not math.isfinite(value):
        raise ValidationError(f"{where}: non-finite value {text!r} in {column}")
    return value


def parse_market_csv(path: str | Path) -> MarketSeries:
    """Parse the daily market CSV (date,price_usd,network_hashrate_ths).

    Rows may appear in any order and are sorted by date. Duplicate dates,
    malformed rows, and invalid values are hard errors naming the offending
    line. A file with no data rows is a data-insufficiency error.
    """
    path = Path(path)
    rows = list(_data_rows(path))
    if not rows:
        raise DataInsufficientError(f"{path}: no records")

    line_no, header = rows[0]
    if tuple(h.strip() for h in header) != MARKET_COLUMNS:
        raise ValidationError(
            f"{path}:{line_no}: expected header {','.join(MARKET_COLUMNS)}, "
            f"got {','.join(header)!r}"
        )

    records: list[MarketRecord] = []
    seen: dict[date, int] = {}
    for line_no, row in rows[1:]:
        where = f"{path}:{line_no}"
        if len(row) != len(MARKET_COLUMNS):
            raise ValidationError(
                f"{where}: expected {len(MARKET_COLUMNS)} columns, got {len(row)}"
            )
        day = _parse_date(row[0], where)
        if day in seen:
            raise ValidationError(
                f"{where}: duplicate date {day.isoformat()} "
                f"(first seen at line {seen[day]})"
            )
        seen[day] = line_no
        price = _parse_float(row[1], where, "price_usd")
        hashrate = _parse_float(row[2], where, "network_hashrate_ths")
        try:
            records.append(MarketRecord(day, price, hashrate))
        except ValidationError as exc:
            raise ValidationError(f"{where}: {exc}") from None

    if not records:
        raise DataInsufficientError(f"{path}: no records")
    records.sort(key=lambda r: r.day)
    return MarketSeries(records)


def write_market_csv(series: MarketSeries, path: str | Path, header_comment: str | None = None) -> None:
    """Serialize a market series back to CSV (UTF-8, LF line endings)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MARKET_COLUMNS)
        for r in series.records:
            writer.writerow([r.day.isoformat(), repr(r.price_usd), repr(r.network_hashrate_ths)])


def fill_gaps(
    series: MarketSeries,
    start: date | None = None,
    end: date | None = None,
) -> MarketSeries:
    """Fill missing calendar days by carrying the previous record forward.

    The filled range is [start, end] (defaulting to the series edges). A
    requested start earlier than the first record is an error: there is
    nothing to carry into the gap. The number of synthesized days is logged.
    """
    if len(series) < 2:
        raise DataInsufficientError("need at least 2 records to fill gaps")
    first, last = series.start, series.end
    if start is None:
        start = first
    if end is None:
        end = last
    if start < first:
        raise DataInsufficientError(
            f"gap at series start: first record is {first.isoformat()}, "
            f"requested range starts {start.isoformat()}"
        )
    if end < start:
        raise ValidationError("requested range is empty (end before start)")

    out: list[MarketRecord] = []
    carried = 0
    prev: MarketRecord | None = None
    day = start
    while day <= end:
        rec = series.lookup(day)
        if rec is None:
            if prev is None:
                # start is guaranteed >= first record, so this cannot happen
                raise ValidationError(f"no record to carry into {day.isoformat()}")
            rec = MarketRecord(day, prev.price_usd, prev.network_hashrate_ths)
            carried += 1
        out.append(rec)
        prev = rec
        day += timedelta(days=1)
    if carried:
        logger.info("fill_gaps: carried previous day forward into %d missing days", carried)
    return MarketSeries(out)


@dataclass(frozen=True)
class SurplusRecord:
    """Surplus electricity reported by one region for one month."""

    region: str
    month: str  # "YYYY-MM"
    households: int
    surplus_kwh: float

    def __post_init__(self) -> None:
        if not _MONTH_RE.match(self.month):
            raise ValidationError(f"invalid month {self.month!r}, expected YYYY-MM")
        if self.households < 0:
            raise ValidationError(f"households must be >= 0, got {self.households}")
        if not math.isfinite(self.surplus_kwh) or self.surplus_kwh < 0:
            raise ValidationError(f"surplus_kwh must be finite and >= 0, got {self.surplus_kwh!r}")


@dataclass(frozen=True)
class MonthlySurplusTotal:
    """Surplus energy summed across regions for one month."""

    month: str
    total_kwh: float


def parse_surplus_csv(
    path: str | Path,
    months: tuple[str, str] = DEFAULT_SURPLUS_MONTHS,
) -> list[SurplusRecord]:
    """Parse the monthly surplus CSV (region,month,households,surplus_kwh).

    Months must fall within the allowed [first, last] range. Duplicate
    (region, month) pairs and negative values are hard errors. A month with
    zero households but positive energy is accepted with a warning.
    """
    path = Path(path)
    rows = list(_data_rows(path))
    if not rows:
        raise DataInsufficientError(f"{path}: no records")

    line_no, header = rows[0]
    if tuple(h.strip() for h in header) != SURPLUS_COLUMNS:
        raise ValidationError(
            f"{path}:{line_no}: expected header {','.join(SURPLUS_COLUMNS)}, "
            f"got {','.join(header)!r}"
        )

    month_lo, month_hi = months
    records: list[SurplusRecord] = []
    seen: dict[tuple[str, str], int] = {}
    for line_no, row in rows[1:]:
        where = f"{path}:{line_no}"
        if len(row) != len(SURPLUS_COLUMNS):
            raise ValidationError(
                f"{where}: expected {len(SURPLUS_COLUMNS)} columns, got {len(row)}"
            )
        region = row[0].strip()
        if not region:
            raise ValidationError(f"{where}: empty region")
        month = row[1].strip()
        if not _MONTH_RE.match(month):
            raise ValidationError(f"{where}: unparseable month {row[1]!r}, expected YYYY-MM")
        if not (month_lo <= month <= month_hi):
            raise ValidationError(
                f"{where}: month {month} outside allowed range {month_lo}..{month_hi}"
            )
        key = (region, month)
        if key in seen:
            raise ValidationError(
                f"{where}: duplicate record for {region}/{month} "
                f"(first seen at line {seen[key]})"
            )
        seen[key] = line_no
        try:
            households = int(row[2])
        except ValueError:
            raise ValidationError(f"{where}: invalid integer {row[2]!r} in households") from None
        kwh = _parse_float(row[3], where, "surplus_kwh")
        try:
            rec = SurplusRecord(region, month, households, kwh)
        except ValidationError as exc:
            raise ValidationError(f"{where}: {exc}") from None
        if rec.households == 0 and rec.surplus_kwh > 0:
            logger.warning(
                "%s: %s/%s reports %.1f kWh from zero households",
                where, region, month, kwh,
            )
        records.append(rec)

    if not records:
        raise DataInsufficientError(f"{path}: no records")
    records.sort(key=lambda r: (r.month, r.region))
    return records


def monthly_totals(records: list[SurplusRecord]) -> list[MonthlySurplusTotal]:
    """Sum surplus energy across regions, one total per month, sorted by month."""
    if not records:
        raise DataInsufficientError("no surplus records")
    sums: dict[str, float] = {}
    for rec in records:
        sums[rec.month] = sums.get(rec.month, 0.0) + rec.surplus_kwh
    return [MonthlySurplusTotal(m, sums[m]) for m in sorted(sums)]


def days_in_month(month: str) -> int:
    """Calendar days in a YYYY-MM month (leap-aware)."""
    if not _MONTH_RE.match(month):
        raise ValidationError(f"invalid month {month!r}, expected YYYY-MM")
    year, mon = int(month[:4]), int(month[5:7])
    return calendar.monthrange(year, mon)[1]


def monthly_to_daily(total: MonthlySurplusTotal) -> float:
    """Average energy available per day of the month, in kWh."""
    return total.total_kwh / days_in_month(total.month)
