"""Command-line pipeline: ingest -> features -> train -> simulate -> report.

Every command is a pure function of (input files, config): reruns produce
byte-identical outputs, each output file starts with a header naming the
config hash and seed, and the effective config is echoed into the output
directory. Exit codes: 0 success, 2 validation error, 3 insufficient data,
4 internal error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from dataclasses import dataclass
from datetime import date, timedelta
from decimal import Decimal
from pathlib import Path

from .economics import (
    PriceSource,
    SimulationReport,
    attach_deltas,
    depreciation_cost,
    months_spanned,
    run_case,
    usd_cents,
    usd_millions,
    write_ledger_csv,
)
from .errors import DataInsufficientError, ValidationError
from .fleet import (
    DEFAULT_LOSS_RATE,
    DEFAULT_MINER,
    MinerSpec,
    ScenarioPlan,
    build_scenarios,
    month_capacity,
    write_fleet_csv,
)
from .forest import ForestParams, fit_forest, load_forest, predict_forest, predict_matrix, save_forest
from .indicators import FeatureMatrix, build_features, write_features_csv
from .ingest import (
    DEFAULT_SURPLUS_MONTHS,
    MarketSeries,
    fill_gaps,
    monthly_totals,
    parse_market_csv,
    parse_surplus_csv,
    write_market_csv,
)
from .lstm import TrainConfig, fit_lstm, load_lstm, predict_series, predict_window, save_lstm
from .metrics import EvalReport, evaluate, write_eval_csv

logger = logging.getLogger(__name__)

VALID_CASES = ("actual-1", "actual-2", "forest-1", "forest-2", "lstm-1", "lstm-2")

_CONFIG_KEYS = {
    "market_csv", "surplus_csv", "out_dir",
    "analysis_start", "analysis_end",
    "train_start", "train_end", "test_start", "test_end",
    "sim_start", "sim_end",
    "seed", "loss_rate", "blocks_per_day", "cases", "surplus_months",
    "forest", "lstm", "miner",
}
_FOREST_KEYS = {"n_trees", "m_try", "min_samples_leaf", "max_depth"}
_LSTM_KEYS = {"epochs", "window", "hidden_size", "learning_rate", "batch_size", "clip_norm"}
_MINER_KEYS = {"name", "hashrate_ths", "power_w", "efficiency_j_per_th", "unit_price_usd", "lifespan_months"}


@dataclass
class RunConfig:
    market_csv: str
    surplus_csv: str
    out_dir: str
    base_dir: str
    analysis_start: date
    analysis_end: date
    train_start: date
    train_end: date
    test_start: date
    test_end: date
    sim_start: date
    sim_end: date
    seed: int
    loss_rate: float
    blocks_per_day: int
    cases: tuple[str, ...]
    surplus_months: tuple[str, str]
    forest: ForestParams
    lstm: TrainConfig
    miner: MinerSpec

    def __post_init__(self) -> None:
        if self.train_end >= self.test_start:
            raise ValidationError(
                f"train_end {self.train_end} must precede test_start {self.test_start}"
            )
        if not (self.test_start <= self.sim_start <= self.sim_end <= self.test_end):
            raise ValidationError(
                f"simulation range {self.sim_start}..{self.sim_end} must lie within "
                f"the test range {self.test_start}..{self.test_end}"
            )
        if not 0.0 <= self.loss_rate < 1.0:
            raise ValidationError(f"loss_rate must be in [0, 1), got {self.loss_rate}")
        if self.blocks_per_day < 1:
            raise ValidationError(f"blocks_per_day must be >= 1, got {self.blocks_per_day}")
        for case in self.cases:
            if case not in VALID_CASES:
                raise ValidationError(
                    f"unknown case {case!r}; valid cases: {', '.join(VALID_CASES)}"
                )

    def input_path(self, raw: str) -> Path:
        """Input paths in the config are relative to the config file itself."""
        p = Path(raw)
        return p if p.is_absolute() else Path(self.base_dir) / p


def _parse_iso(value: str, key: str) -> date:
    try:
        return date.fromisoformat(value)
    except (TypeError, ValueError):
        raise ValidationError(f"config key {key!r}: invalid ISO date {value!r}") from None


def load_config(
    path: str | Path,
    seed: int | None = None,
    cases: list[str] | None = None,
    out_dir: str | None = None,
) -> RunConfig:
    """Read the JSON config, merge defaults, and apply CLI overrides."""
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ValidationError(f"{path}: config must be a JSON object")

    for key in raw:
        if key not in _CONFIG_KEYS:
            raise ValidationError(f"{path}: unknown config key {key!r}")
    for section, allowed in (("forest", _FOREST_KEYS), ("lstm", _LSTM_KEYS), ("miner", _MINER_KEYS)):
        for key in raw.get(section, {}):
            if key not in allowed:
                raise ValidationError(f"{path}: unknown {section} key {key!r}")

    for required in ("market_csv", "surplus_csv"):
        if required not in raw:
            raise ValidationError(f"{path}: missing required key {required!r}")

    master_seed = seed if seed is not None else int(raw.get("seed", 42))

    forest_raw = dict(raw.get("forest", {}))
    lstm_raw = dict(raw.get("lstm", {}))
    miner_raw = raw.get("miner")

    months_raw = raw.get("surplus_months", list(DEFAULT_SURPLUS_MONTHS))
    if not (isinstance(months_raw, list) and len(months_raw) == 2):
        raise ValidationError(f"{path}: surplus_months must be [first, last]")

    case_list = cases if cases is not None else list(raw.get("cases", VALID_CASES))

    cfg = RunConfig(
        market_csv=str(raw["market_csv"]),
        surplus_csv=str(raw["surplus_csv"]),
        out_dir=out_dir if out_dir is not None else raw.get("out_dir", "out"),
        base_dir=str(path.parent),
        analysis_start=_parse_iso(raw.get("analysis_start", "2016-01-01"), "analysis_start"),
        analysis_end=_parse_iso(raw.get("analysis_end", "2023-09-23"), "analysis_end"),
        train_start=_parse_iso(raw.get("train_start", "2016-01-16"), "train_start"),
        train_end=_parse_iso(raw.get("train_end", "2022-12-31"), "train_end"),
        test_start=_parse_iso(raw.get("test_start", "2023-01-01"), "test_start"),
        test_end=_parse_iso(raw.get("test_end", "2023-12-31"), "test_end"),
        sim_start=_parse_iso(raw.get("sim_start", "2023-01-01"), "sim_start"),
        sim_end=_parse_iso(raw.get("sim_end", "2023-12-31"), "sim_end"),
        seed=master_seed,
        loss_rate=float(raw.get("loss_rate", DEFAULT_LOSS_RATE)),
        blocks_per_day=int(raw.get("blocks_per_day", 144)),
        cases=tuple(case_list),
        surplus_months=(str(months_raw[0]), str(months_raw[1])),
        forest=ForestParams(seed=master_seed, **forest_raw),
        lstm=TrainConfig(seed=master_seed, **lstm_raw),
        miner=MinerSpec(**miner_raw) if miner_raw else DEFAULT_MINER,
    )
    return cfg


def effective_config(cfg: RunConfig) -> dict:
    """The config as actually used. out_dir and the config file's location are
    excluded: outputs must not depend on where they are written or read from."""
    return {
        "market_csv": cfg.market_csv,
        "surplus_csv": cfg.surplus_csv,
        "analysis_start": cfg.analysis_start.isoformat(),
        "analysis_end": cfg.analysis_end.isoformat(),
        "train_start": cfg.train_start.isoformat(),
        "train_end": cfg.train_end.isoformat(),
        "test_start": cfg.test_start.isoformat(),
        "test_end": cfg.test_end.isoformat(),
        "sim_start": cfg.sim_start.isoformat(),
        "sim_end": cfg.sim_end.isoformat(),
        "seed": cfg.seed,
        "loss_rate": cfg.loss_rate,
        "blocks_per_day": cfg.blocks_per_day,
        "cases": list(cfg.cases),
        "surplus_months": list(cfg.surplus_months),
        "forest": {
            "n_trees": cfg.forest.n_trees,
            "m_try": cfg.forest.m_try,
            "min_samples_leaf": cfg.forest.min_samples_leaf,
            "max_depth": cfg.forest.max_depth,
        },
        "lstm": {
            "epochs": cfg.lstm.epochs,
            "window": cfg.lstm.window,
            "hidden_size": cfg.lstm.hidden_size,
            "learning_rate": cfg.lstm.learning_rate,
            "batch_size": cfg.lstm.batch_size,
            "clip_norm": cfg.lstm.clip_norm,
        },
        "miner": {
            "name": cfg.miner.name,
            "hashrate_ths": cfg.miner.hashrate_ths,
            "power_w": cfg.miner.power_w,
            "efficiency_j_per_th": cfg.miner.efficiency_j_per_th,
            "unit_price_usd": cfg.miner.unit_price_usd,
            "lifespan_months": cfg.miner.lifespan_months,
        },
    }


def config_hash(cfg: RunConfig) -> str:
    canonical = json.dumps(effective_config(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def _header(cfg: RunConfig) -> str:
    return f"config={config_hash(cfg)} seed={cfg.seed}"


def _prepare_out(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {"config_hash": config_hash(cfg), "seed": cfg.seed, **effective_config(cfg)}
    with open(out / "config_used.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    return out


def _require_file(path: Path, what: str) -> None:
    if not path.is_file():
        raise ValidationError(f"{what} not found: {path}")


def _load_clean_market(cfg: RunConfig) -> tuple[MarketSeries, int]:
    """Parse, clip to the analysis..test window, and gap-fill the market data.

    Returns (filled series, number of gap days filled).
    """
    market_path = cfg.input_path(cfg.market_csv)
    _require_file(market_path, "market CSV")
    series = parse_market_csv(market_path)
    clipped = series.clip(cfg.analysis_start, cfg.test_end)
    if len(clipped) < 2:
        raise DataInsufficientError(
            f"market data covers {len(clipped)} days of "
            f"{cfg.analysis_start}..{cfg.test_end}"
        )
    filled = fill_gaps(clipped, start=cfg.analysis_start)
    return filled, len(filled) - len(clipped)


def _window_note(cfg: RunConfig) -> str | None:
    if cfg.test_end > cfg.analysis_end:
        return (
            f"evaluation window ends {cfg.test_end.isoformat()}, after the configured "
            f"analysis window end {cfg.analysis_end.isoformat()}; split dates follow the config"
        )
    return None


def cmd_ingest(cfg: RunConfig) -> None:
    """Validate inputs and write the cleaned series plus a summary."""
    out = _prepare_out(cfg)
    filled, gaps = _load_clean_market(cfg)
    surplus_path = cfg.input_path(cfg.surplus_csv)
    _require_file(surplus_path, "surplus CSV")
    surplus = parse_surplus_csv(surplus_path, months=cfg.surplus_months)
    totals = monthly_totals(surplus)

    write_market_csv(filled, out / "market_clean.csv", header_comment=_header(cfg))
    with open(out / "surplus_monthly.csv", "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# {_header(cfg)}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["month", "total_kwh"])
        for t in totals:
            writer.writerow([t.month, repr(t.total_kwh)])

    regions = sorted({r.region for r in surplus})
    lines = [
        f"# {_header(cfg)}",
        "ingest summary",
        f"market rows (cleaned): {len(filled)}",
        f"market span: {filled.start.isoformat()}..{filled.end.isoformat()}",
        f"gap days filled by carry-forward: {gaps}",
        f"surplus records: {len(surplus)}",
        f"surplus months: {totals[0].month}..{totals[-1].month} ({len(totals)} months)",
        f"surplus regions: {', '.join(regions)}",
    ]
    (out / "ingest_summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines[1:]))


def cmd_features(cfg: RunConfig) -> None:
    """Build and export the indicator feature matrix."""
    out = _prepare_out(cfg)
    filled, _ = _load_clean_market(cfg)
    matrix = build_features(filled)
    write_features_csv(matrix, out / "features.csv", header_comment=_header(cfg))
    print(
        f"features: {len(matrix)} rows, "
        f"{matrix.rows[0].day.isoformat()}..{matrix.rows[-1].day.isoformat()}"
    )


def _split_features(cfg: RunConfig, matrix: FeatureMatrix) -> tuple[FeatureMatrix, FeatureMatrix]:
    train = matrix.slice_dates(cfg.train_start, cfg.train_end)
    test = matrix.slice_dates(cfg.test_start, cfg.test_end)
    if len(train) == 0:
        raise DataInsufficientError("no feature rows in the training window")
    if len(test) == 0:
        raise DataInsufficientError("no feature rows in the test window")
    return train, test


def _lstm_eval_arrays(model, test: FeatureMatrix) -> tuple[list[float], list[float]]:
    """Aligned (actual, predicted) for windows fully inside the test split."""
    T = model.config.window
    if len(test) < T:
        raise DataInsufficientError(
            f"test split has {len(test)} rows, shorter than the {T}-day window"
        )
    inputs = test.input_array()
    targets = test.target_array()
    predicted = [
        predict_window(model, inputs[i : i + T]) for i in range(len(test) - T + 1)
    ]
    return list(targets[T - 1 :]), predicted


def cmd_train(cfg: RunConfig) -> None:
    """Fit both models on the train split and evaluate on the test split."""
    out = _prepare_out(cfg)
    filled, _ = _load_clean_market(cfg)
    matrix = build_features(filled)
    train, test = _split_features(cfg, matrix)

    forest_model = fit_forest(train, cfg.forest)
    save_forest(forest_model, out / "forest_model.json")
    forest_eval = evaluate(
        "forest", "test", test.target_array(), predict_matrix(forest_model, test)
    )

    lstm_model = fit_lstm(train, cfg.lstm)
    save_lstm(lstm_model, out / "lstm_model.json")
    actual, predicted = _lstm_eval_arrays(lstm_model, test)
    lstm_eval = evaluate("lstm", "test", actual, predicted)

    write_eval_csv([forest_eval, lstm_eval], out / "eval.csv", header_comment=_header(cfg))

    lines = [
        f"# {_header(cfg)}",
        "training summary",
        f"train rows: {len(train)} ({train.rows[0].day.isoformat()}..{train.rows[-1].day.isoformat()})",
        f"test rows: {len(test)} ({test.rows[0].day.isoformat()}..{test.rows[-1].day.isoformat()})",
        f"forest: {cfg.forest.n_trees} trees, m_try={cfg.forest.resolved_m_try(matrix.feature_count)}",
        f"lstm: {cfg.lstm.epochs} epochs, hidden={cfg.lstm.hidden_size}, window={cfg.lstm.window}",
        "lstm loss trace: " + ", ".join(f"{v:.6f}" for v in lstm_model.loss_trace),
    ]
    for ev in (forest_eval, lstm_eval):
        lines.append(
            f"{ev.model}/{ev.split}: n={ev.n} mae={ev.mae:.4f} mse={ev.mse:.4f} r2={ev.r2:.4f}"
        )
    note = _window_note(cfg)
    if note:
        lines.append(f"note: {note}")
    (out / "train_summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines[1:]))


def _build_plans(cfg: RunConfig) -> tuple[ScenarioPlan, ScenarioPlan]:
    surplus_path = cfg.input_path(cfg.surplus_csv)
    _require_file(surplus_path, "surplus CSV")
    surplus = parse_surplus_csv(surplus_path, months=cfg.surplus_months)
    capacities = [
        month_capacity(t, cfg.miner, cfg.loss_rate) for t in monthly_totals(surplus)
    ]
    return build_scenarios(capacities, cfg.miner)


def _price_sources(cfg: RunConfig, out: Path, market: MarketSeries) -> dict[str, PriceSource]:
    """Build the price source for every model named in the requested cases."""
    needed = {case.rsplit("-", 1)[0] for case in cfg.cases}
    sources: dict[str, PriceSource] = {}
    if "actual" in needed:
        sources["actual"] = PriceSource.from_market(market)
    if "forest" in needed or "lstm" in needed:
        matrix = build_features(market)
        _, test = _split_features(cfg, matrix)
        if "forest" in needed:
            model_path = out / "forest_model.json"
            if not model_path.is_file():
                raise ValidationError(f"forest cases requested but {model_path} is missing; run train first")
            model = load_forest(model_path)
            preds = {
                row.day + timedelta(days=1): predict_forest(model, row.features())
                for row in test.rows
            }
            sources["forest"] = PriceSource.from_predictions("forest", preds)
        if "lstm" in needed:
            model_path = out / "lstm_model.json"
            if not model_path.is_file():
                raise ValidationError(f"lstm cases requested but {model_path} is missing; run train first")
            model = load_lstm(model_path)
            sources["lstm"] = PriceSource.from_predictions("lstm", predict_series(model, test))
    return sources


def render_report(reports: list[SimulationReport], cfg: RunConfig) -> str:
    """Fixed-width summary table: revenue/cost/profit per case, exact and in millions."""
    months = months_spanned(cfg.sim_start, cfg.sim_end)
    lines = [
        f"# {_header(cfg)}",
        f"profit summary: {cfg.sim_start.isoformat()}..{cfg.sim_end.isoformat()} "
        f"({months} months), miner: {cfg.miner.name}",
        "",
    ]
    header = [
        "case", "scenario", "source", "revenue_usd", "cost_usd", "profit_usd",
        "rev_m", "cost_m", "profit_m", "vs_actual",
    ]
    body = []
    ordered = sorted(reports, key=lambda r: r.case_label)
    for r in ordered:
        body.append(
            [
                r.case_label,
                str(r.scenario),
                r.price_source,
                f"{r.revenue_usd:,.2f}",
                f"{r.cost_usd:,.2f}",
                f"{r.profit_usd:,.2f}",
                str(usd_millions(r.revenue_usd)),
                str(usd_millions(r.cost_usd)),
                str(usd_millions(r.profit_usd)),
                "-" if r.delta_vs_actual_pct is None else f"{r.delta_vs_actual_pct:+.2f}%",
            ]
        )
    widths = [max(len(header[i]), *(len(row[i]) for row in body)) for i in range(len(header))]

    def fmt(row: list[str]) -> str:
        cells = []
        for i, cell in enumerate(row):
            cells.append(cell.ljust(widths[i]) if i < 3 else cell.rjust(widths[i]))
        return "  ".join(cells).rstrip()

    lines.append(fmt(header))
    for row in body:
        lines.append(fmt(row))

    notes = []
    note = _window_note(cfg)
    if note:
        notes.append(note)
    fallbacks = [f"{r.case_label}={r.fallback_days}" for r in ordered if r.fallback_days]
    if fallbacks:
        notes.append("price-fallback days: " + ", ".join(fallbacks))
    if notes:
        lines.append("")
        lines.append("notes:")
        lines.extend(f"- {n}" for n in notes)
    return "\n".join(lines) + "\n"


def cmd_simulate(cfg: RunConfig) -> None:
    """Run every requested (price source x scenario) case and write the report."""
    out = _prepare_out(cfg)
    if not cfg.cases:
        raise ValidationError("no cases requested")
    market, _ = _load_clean_market(cfg)
    plans = _build_plans(cfg)
    sources = _price_sources(cfg, out, market)

    reports = []
    for case in sorted(set(cfg.cases)):
        source_label, scenario = case.rsplit("-", 1)
        plan = plans[int(scenario) - 1]
        reports.append(
            run_case(
                plan,
                sources[source_label],
                market,
                cfg.miner,
                cfg.sim_start,
                cfg.sim_end,
                cfg.blocks_per_day,
            )
        )
    attach_deltas(reports)

    write_fleet_csv(list(plans), out / "fleet.csv", header_comment=_header(cfg))
    write_ledger_csv(reports, out / "ledger.csv", header_comment=_header(cfg))
    text = render_report(reports, cfg)
    (out / "report.txt").write_text(text, encoding="utf-8")
    print(text, end="")


def cmd_report(cfg: RunConfig) -> None:
    """Rebuild the summary report from an existing ledger.csv."""
    out = _prepare_out(cfg)
    ledger_path = out / "ledger.csv"
    if not ledger_path.is_file():
        raise ValidationError(f"no ledger found at {ledger_path}; run simulate first")

    revenue: dict[str, float] = {}
    scenario_of: dict[str, int] = {}
    fallback: dict[str, int] = {}
    with open(ledger_path, newline="", encoding="utf-8") as fh:
        first = fh.readline()
        if not first.startswith("#"):
            fh.seek(0)
        reader = csv.DictReader(fh)
        for row in reader:
            case = f"{row['price_source']}-{row['scenario']}"
            revenue[case] = revenue.get(case, 0.0) + float(row["revenue_usd"])
            scenario_of[case] = int(row["scenario"])
            fallback[case] = fallback.get(case, 0) + int(row["price_is_fallback"])
    if not revenue:
        raise DataInsufficientError(f"{ledger_path}: no ledger rows")

    plans = _build_plans(cfg)
    months = months_spanned(cfg.sim_start, cfg.sim_end)
    reports = []
    for case in sorted(revenue):
        scenario = scenario_of[case]
        plan = plans[scenario - 1]
        rev = usd_cents(revenue[case])
        cost = depreciation_cost(
            plan.owned_units, cfg.miner.unit_price_usd, months, cfg.miner.lifespan_months
        )
        reports.append(
            SimulationReport(
                case_label=case,
                scenario=scenario,
                price_source=case.rsplit("-", 1)[0],
                revenue_usd=rev,
                cost_usd=cost,
                profit_usd=rev - cost,
                monthly=(),
                delta_vs_actual_pct=None,
                ledger=[],
                fallback_days=fallback[case],
            )
        )
    attach_deltas(reports)
    text = render_report(reports, cfg)
    (out / "report.txt").write_text(text, encoding="utf-8")
    print(text, end="")


COMMANDS = {
    "ingest": cmd_ingest,
    "features": cmd_features,
    "train": cmd_train,
    "simulate": cmd_simulate,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="surplusminer",
        description="Simulate Bitcoin mining funded by surplus electricity.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "ingest": "validate and clean the input data",
        "features": "build the indicator feature matrix",
        "train": "fit and evaluate both price models",
        "simulate": "run the profit cases and write the report",
        "report": "rebuild the report from an existing ledger",
    }
    for name, help_text in helps.items():
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, help="path to the JSON run config")
        sp.add_argument("--seed", type=int, default=None, help="override the master seed")
        sp.add_argument("--cases", default=None, help="comma-separated case list, e.g. actual-1,forest-2")
        sp.add_argument("--out", default=None, help="override the output directory")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr
    )
    cases = args.cases.split(",") if args.cases else None
    try:
        cfg = load_config(args.config, seed=args.seed, cases=cases, out_dir=args.out)
        COMMANDS[args.command](cfg)
    except ValidationError as exc:
        logger.error("validation error: %s", exc)
        return 2
    except DataInsufficientError as exc:
        logger.error("insufficient data: %s", exc)
        return 3
    except Exception:
        logger.exception("internal error")
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
