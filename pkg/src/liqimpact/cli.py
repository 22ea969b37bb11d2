"""Command-line entry point: reproducible batch runs over the library modules.

Subcommands mirror the pipeline: ``ingest`` (ticks to bars), ``simulate``
(paths or synthetic panels), ``fit`` (per-day and pooled model fits),
``curves`` (sampled impact curves from a fit), ``compare`` (cross-model and
cross-contract reports).  Each run reads an optional JSON config file; flags
given on the command line win over config values.  Every output file gets a
sibling ``.meta.json`` echoing the effective configuration (schema versioned,
no timestamps), so identical inputs produce byte-identical outputs.

Verbosity comes from the LIQIMPACT_LOG environment variable (DEBUG, INFO,
WARNING, ERROR; default WARNING).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from ._common import SCHEMA_VERSION, fmt, write_json
from .impact import (
    LinearParams,
    ParameterError,
    SqrtParams,
    SShapeParams,
    StructuralParams,
    f_linear,
    f_sqrt,
    f_sshape,
    feasibility_margin,
)
from .ingest import ParseError, build_bars, flow_descriptives, read_bars_csv, read_ticks, write_bars_csv
from .sde import OUParams, SimConfig, read_panel_csv, simulate_path, synth_regression_panel
from .estimation import (
    EstimationError,
    FitResult,
    RegressionPanel,
    fit_ols,
    fit_result_to_dict,
    fit_sshape,
    read_daily_fits_csv,
    write_daily_fits_csv,
)
from .compare import (
    DailyMetricSeries,
    METRICS,
    depth_report,
    descriptives,
    paired_t_test,
    write_depth_csv,
    write_descriptives_csv,
    write_ttest_csv,
)

logger = logging.getLogger(__name__)

MODELS = ("sshape", "linear", "sqrt")


def _setup_logging() -> None:
    level = os.environ.get("LIQIMPACT_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config file not found: {p}")
    with p.open(encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ValueError(f"config root must be a JSON object: {p}")
    return cfg


def _pick(flag_value, config: dict, key: str, default):
    """Flag wins over config wins over default; flags parse with default None."""
    if flag_value is not None:
        return flag_value
    if key in config:
        return config[key]
    return default


def _meta_path(out_file: Path) -> Path:
    name = out_file.name
    if name.endswith(".csv"):
        name = name[: -len(".csv")]
    return out_file.with_name(name + ".meta.json")


def _write_meta(out_file: Path, command: str, effective: dict) -> None:
    write_json(_meta_path(out_file), {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": effective,
    })


def _out_dir(args, config: dict) -> Path:
    d = Path(_pick(args.out_dir, config, "out_dir", "."))
    d.mkdir(parents=True, exist_ok=True)
    return d


def _stem(path: Path) -> str:
    name = path.name
    for suffix in (".csv.gz", ".csv", ".gz", ".json"):
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return path.stem


# ---------------------------------------------------------------------------
# ingest


def cmd_ingest(args) -> int:
    config = _load_config(args.config)
    session_start = _pick(args.session_start, config, "session_start", "09:00")
    session_end = _pick(args.session_end, config, "session_end", "15:00")
    bar_seconds = int(_pick(args.bar_seconds, config, "bar_seconds", 60))
    tick_size = float(_pick(args.tick_size, config, "tick_size", 0.01))
    out_dir = _out_dir(args, config)
    jobs = int(_pick(args.jobs, config, "jobs", 1))

    files = [Path(f) for f in args.files]
    for f in files:
        if not f.is_file():
            print(f"error: input file not found: {f}", file=sys.stderr)
            return 1
    effective = {
        "session_start": session_start, "session_end": session_end,
        "bar_seconds": bar_seconds, "tick_size": tick_size,
        "out_dir": str(out_dir), "inputs": [str(f) for f in files],
    }

    def one(f: Path) -> tuple[Path, dict, int, int]:
        ticks = read_ticks(f)
        days = build_bars(ticks, session_start, session_end, bar_seconds, tick_size)
        dest = out_dir / f"{_stem(f)}.bars.csv"
        write_bars_csv(days, dest)
        _write_meta(dest, "ingest", {**effective, "input": str(f)})
        signed = sum(b.signed_count for bars in days.values() for b in bars)
        unsigned = sum(b.unsigned_count for bars in days.values() for b in bars)
        return dest, days, signed, unsigned

    try:
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(one, files))
        else:
            results = [one(f) for f in files]
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    for dest, days, signed, unsigned in results:
        total = signed + unsigned
        pct = 100.0 * unsigned / total if total else 0.0
        n_days = len(days)
        n_bars = sum(len(v) for v in days.values())
        print(f"{dest}: {n_days} day(s), {n_bars} bars, {total} trades, {pct:.1f}% unsigned")
    return 0


# ---------------------------------------------------------------------------
# simulate


def _structural_from(config: dict) -> StructuralParams:
    block = config.get("structural")
    if not isinstance(block, dict):
        raise ValueError("config needs a 'structural' object")
    return StructuralParams(**block)


def _impact_from(config: dict):
    block = dict(config.get("impact") or {})
    family = block.pop("family", "sshape")
    if family == "sshape":
        return SShapeParams(**block)
    if family == "linear":
        return LinearParams(**block)
    if family == "sqrt":
        return SqrtParams(**block)
    raise ValueError(f"impact family must be sshape, linear, or sqrt, got {family!r}")


def cmd_simulate(args) -> int:
    config = _load_config(args.config)
    out_dir = _out_dir(args, config)
    mode = _pick(args.mode, config, "mode", "path")
    seed = args.seed if args.seed is not None else config.get("seed")
    try:
        if mode == "path":
            sim_cfg = SimConfig(
                structural=_structural_from(config),
                impact=_impact_from(config),
                n_steps=int(config.get("n_steps", 390)),
                dt=float(config.get("dt", 1.0)),
                x0=float(config.get("x0", 0.0)),
                s0=float(config.get("s0", 100.0)),
                seed=seed,
                measure=config.get("measure", "physical"),
            )
            path = simulate_path(sim_cfg)
            dest = out_dir / "path.csv"
            path.write_csv(dest)
            write_json(out_dir / "path.meta.json", path.metadata())
            print(f"{dest}: {len(path)} samples, seed {path.seed_used}")
        elif mode == "panel":
            block = config.get("panel")
            if not isinstance(block, dict):
                raise ValueError("config needs a 'panel' object for panel mode")
            flow = OUParams(**block.get("flow", {}))
            if seed is None:
                seed = int(np.random.SeedSequence().entropy)
            panel = synth_regression_panel(
                a=float(block.get("a", 0.0)),
                impact=_impact_from(config),
                flow=flow,
                n_days=int(block.get("n_days", 1)),
                bars_per_day=int(block.get("bars_per_day", 360)),
                noise_sd=float(block.get("noise_sd", 0.0)),
                seed=int(seed),
            )
            dest = out_dir / "panel.csv"
            panel.write_csv(dest)
            write_json(out_dir / "panel.meta.json", panel.metadata())
            print(f"{dest}: {len(panel.bars)} bars over {len(panel.days)} day(s), seed {seed}")
        else:
            raise ValueError(f"mode must be path or panel, got {mode!r}")
    except (ParameterError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# fit


def _fit_one(panel: RegressionPanel, model: str, grid, fit_kwargs) -> FitResult:
    if model == "sshape":
        return fit_sshape(panel, grid, **fit_kwargs)
    return fit_ols(panel, model)


def cmd_fit(args) -> int:
    config = _load_config(args.config)
    out_dir = _out_dir(args, config)
    model_flag = _pick(args.model, config, "model", "all")
    models = list(MODELS) if model_flag == "all" else [model_flag]
    pooled = bool(args.pooled or config.get("pooled", False))
    jobs = int(_pick(args.jobs, config, "jobs", 1))
    grid = config.get("grid")
    if grid is not None:
        grid = [tuple(map(float, pair)) for pair in grid]
    fit_kwargs = {k: config[k] for k in ("max_iter", "rss_rtol", "grad_atol", "margin_floor") if k in config}

    files = [Path(f) for f in args.files]
    for f in files:
        if not f.is_file():
            print(f"error: input file not found: {f}", file=sys.stderr)
            return 1

    effective = {
        "model": model_flag, "pooled": pooled, "jobs": jobs,
        "grid": grid, "fit_options": fit_kwargs,
        "out_dir": str(out_dir), "inputs": [str(f) for f in files],
    }

    total_days = 0
    failed_days = 0
    for f in files:
        try:
            with f.open(encoding="utf-8") as fh:
                first = fh.readline().strip()
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        if first.startswith("day,bar,order_flow"):
            by_day = read_bars_csv(f)
        else:
            flat = read_panel_csv(f)
            by_day = {}
            for b in flat:
                by_day.setdefault(b.day, []).append(b)

        day_rows: list[tuple[str, FitResult]] = []
        failures: dict[str, str] = {}

        def fit_day(item: tuple[str, list]) -> tuple[str, list[tuple[str, FitResult]], str | None]:
            day, bars = item
            try:
                panel = RegressionPanel.from_bars({day: bars})
            except EstimationError as exc:
                return day, [], str(exc)
            out = []
            err = None
            for model in models:
                try:
                    out.append((model, _fit_one(panel, model, grid, fit_kwargs)))
                except EstimationError as exc:
                    err = f"{model}: {exc}"
            return day, out, err

        items = sorted(by_day.items())
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                fit_results = list(pool.map(fit_day, items))
        else:
            fit_results = [fit_day(it) for it in items]

        json_days: dict[str, dict] = {}
        for day, fits, err in fit_results:
            total_days += 1
            if err is not None and not fits:
                failures[day] = err
                failed_days += 1
                continue
            if err is not None:
                failures[day] = err
            json_days[day] = {model: fit_result_to_dict(fr) for model, fr in fits}
            for model, fr in fits:
                day_rows.append((day, fr))

        pooled_block = {}
        if pooled:
            try:
                panel_all = RegressionPanel.from_bars(by_day)
                for model in models:
                    pooled_block[model] = fit_result_to_dict(_fit_one(panel_all, model, grid, fit_kwargs))
            except EstimationError as exc:
                failures["pooled"] = str(exc)

        stem = _stem(f)
        csv_dest = out_dir / f"{stem}.fits.csv"
        write_daily_fits_csv(day_rows, csv_dest)
        _write_meta(csv_dest, "fit", {**effective, "input": str(f)})
        write_json(out_dir / f"{stem}.fits.json", {
            "schema_version": SCHEMA_VERSION,
            "config": {**effective, "input": str(f)},
            "days": json_days,
            "pooled": pooled_block,
            "failures": failures,
        })
        ok_days = len(json_days)
        print(f"{csv_dest}: {ok_days}/{len(items)} day(s) fit, models {'+'.join(models)}"
              + (f", {len(failures)} failure(s)" if failures else ""))
        for day, msg in sorted(failures.items()):
            print(f"  failed {day}: {msg}")

    if total_days > 0 and failed_days == total_days:
        print("error: all days failed to fit", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# curves


def _curve_fn(model: str, params: dict):
    if model == "sshape":
        sp = SShapeParams(params["ell"], params["p"], params["q"])
        if not feasibility_margin(sp) > 0:
            raise ParameterError("fit parameters are infeasible; curve undefined on the real line")
        return lambda x: f_sshape(x, sp)
    if model == "linear":
        lp = LinearParams(params["alpha"])
        return lambda x: f_linear(x, lp)
    if model == "sqrt":
        qp = SqrtParams(params["alpha"])
        return lambda x: f_sqrt(x, qp)
    raise ValueError(f"unknown model {model!r}")


def cmd_curves(args) -> int:
    config = _load_config(args.config)
    out_dir = _out_dir(args, config)
    model = _pick(args.model, config, "model", "sshape")
    if model == "all":
        print("error: curves needs a single --model", file=sys.stderr)
        return 1
    x_min = float(_pick(args.x_min, config, "x_min", -400.0))
    x_max = float(_pick(args.x_max, config, "x_max", 400.0))
    n_points = int(_pick(args.n_points, config, "n_points", 201))
    if n_points < 2 or not x_max > x_min:
        print("error: need n_points >= 2 and x_max > x_min", file=sys.stderr)
        return 1

    fit_path = Path(args.fit_json)
    if not fit_path.is_file():
        print(f"error: fit JSON not found: {fit_path}", file=sys.stderr)
        return 1
    doc = json.loads(fit_path.read_text(encoding="utf-8"))
    try:
        fit_dict = _select_fit(doc, model, args.date)
        fn = _curve_fn(model, fit_dict["param_hats"])
        xs = np.linspace(x_min, x_max, n_points)
        f_bps = 1e4 * np.asarray(fn(xs))
    except (ParameterError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    dest = out_dir / "curve.csv"
    lines = ["x,f_bps"] + [f"{fmt(float(x))},{fmt(float(v))}" for x, v in zip(xs, f_bps)]
    dest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    _write_meta(dest, "curves", {
        "fit_json": str(fit_path), "model": model, "date": args.date,
        "x_min": x_min, "x_max": x_max, "n_points": n_points,
        "param_hats": fit_dict["param_hats"],
    })
    print(f"{dest}: {n_points} points over [{x_min}, {x_max}]")
    return 0


def _select_fit(doc: dict, model: str, date: str | None) -> dict:
    """Find the fit block for the model in a fits.json (or bare FitResult) document."""
    if "param_hats" in doc:
        if doc.get("model") != model:
            raise ValueError(f"fit JSON holds model {doc.get('model')!r}, not {model!r}")
        return doc
    if date is not None:
        days = doc.get("days", {})
        if date not in days or model not in days[date]:
            raise ValueError(f"no {model} fit for date {date!r} in fit JSON")
        return days[date][model]
    pooled = doc.get("pooled", {})
    if model in pooled:
        return pooled[model]
    days = doc.get("days", {})
    if len(days) == 1:
        (only,) = days.values()
        if model in only:
            return only[model]
    raise ValueError("fit JSON has no pooled fit for this model; pass --date")


# ---------------------------------------------------------------------------
# compare


def cmd_compare(args) -> int:
    config = _load_config(args.config)
    out_dir = _out_dir(args, config)
    fit_files = [Path(f) for f in args.fits]
    bar_files = [Path(f) for f in (args.bars or [])]
    for f in fit_files + bar_files:
        if not f.is_file():
            print(f"error: input file not found: {f}", file=sys.stderr)
            return 1

    ttest_rows = []
    desc_rows = []
    depth_reports = []
    report: dict = {"schema_version": SCHEMA_VERSION, "contracts": {}}

    bars_by_contract: dict[str, dict] = {}
    for f in bar_files:
        bars_by_contract[_stem(f).removesuffix(".bars")] = read_bars_csv(f)

    try:
        for f in fit_files:
            contract = _stem(f).removesuffix(".fits")
            rows = read_daily_fits_csv(f)
            models_present = sorted({r["model"] for r in rows})
            series = {m: DailyMetricSeries.from_fit_rows(contract, m, rows) for m in models_present}
            block: dict = {"models": models_present, "t_tests": [], "descriptives": {},
                           "excluded": {m: series[m].n_excluded for m in models_present}}

            for i, ma in enumerate(models_present):
                for mb in models_present[i + 1:]:
                    for metric in METRICS:
                        res = paired_t_test(series[ma], series[mb], metric)
                        ttest_rows.append((contract, ma, mb, res))
                        block["t_tests"].append({
                            "model_a": ma, "model_b": mb, "metric": metric,
                            "mean_difference": res.mean_difference,
                            "t_statistic": res.t_statistic,
                            "n": res.n, "degenerate": res.degenerate,
                        })

            sshape_rows = [r for r in rows if r["model"] == "sshape" and r["converged"]]
            if sshape_rows:
                for label, key in (("ell", "ell"), ("p", "p"), ("q", "q"), ("a", "a_hat"), ("adj_r2", "adj_r2")):
                    vals = [r[key] for r in sshape_rows if r[key] is not None]
                    if vals:
                        d = descriptives(vals)
                        desc_rows.append((contract, label, d))
                        block["descriptives"][label] = {
                            "n": d.n, "mean": d.mean, "sd": d.sd,
                            "percentiles": {str(k): v for k, v in d.percentiles.items()},
                        }
                fits = {
                    r["date"]: FitResult(
                        model="sshape", a_hat=r["a_hat"],
                        param_hats={"ell": r["ell"], "p": r["p"], "q": r["q"]},
                        ses={}, t_stats={}, rss=r["rss"], adj_r2=r["adj_r2"], bic=r["bic"],
                        n=r["n"], k=r["k"], converged=r["converged"],
                    )
                    for r in rows if r["model"] == "sshape"
                }
                rep = depth_report(fits, bars_by_contract.get(contract), contract=contract)
                depth_reports.append(rep)
                block["depth"] = {
                    "daily_inflection": rep.daily_inflection,
                    "n_included": rep.n_included, "n_excluded": rep.n_excluded,
                }
            report["contracts"][contract] = block
    except (ValueError, EstimationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    t_dest = out_dir / "ttests.csv"
    write_ttest_csv(ttest_rows, t_dest)
    d_dest = out_dir / "descriptives.csv"
    write_descriptives_csv(desc_rows, d_dest)
    dep_dest = out_dir / "depth.csv"
    write_depth_csv(depth_reports, dep_dest)
    write_json(out_dir / "report.json", report)
    effective = {"fits": [str(f) for f in fit_files], "bars": [str(f) for f in bar_files],
                 "out_dir": str(out_dir)}
    for dest in (t_dest, d_dest, dep_dest):
        _write_meta(dest, "compare", effective)
    print(f"{out_dir}: ttests.csv ({len(ttest_rows)} rows), descriptives.csv ({len(desc_rows)} rows), "
          f"depth.csv ({len(depth_reports)} contract(s)), report.json")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="liqimpact", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override its values")
        p.add_argument("--out-dir", help="output directory (default: current directory)")

    p_ing = sub.add_parser("ingest", help="parse tick CSVs into minute bars")
    common(p_ing)
    p_ing.add_argument("files", nargs="+", help="tick CSV files (plain or gzip)")
    p_ing.add_argument("--session-start", help="session open clock time (default 09:00)")
    p_ing.add_argument("--session-end", help="session close clock time (default 15:00)")
    p_ing.add_argument("--bar-seconds", type=int, help="bar width in seconds (default 60)")
    p_ing.add_argument("--tick-size", type=float, help="price tick for midpoint comparison (default 0.01)")
    p_ing.add_argument("--jobs", type=int, help="parallel workers across files")

    p_sim = sub.add_parser("simulate", help="simulate a price/flow path or synthetic panel")
    common(p_sim)
    p_sim.add_argument("--mode", choices=["path", "panel"], help="what to generate (default path)")
    p_sim.add_argument("--seed", type=int, help="RNG seed (omitted: drawn and recorded)")

    p_fit = sub.add_parser("fit", help="fit impact models to bar/panel CSVs per day")
    common(p_fit)
    p_fit.add_argument("files", nargs="+", help="bar CSVs or day,bar,x,r panel CSVs")
    p_fit.add_argument("--model", choices=[*MODELS, "all"], help="model to fit (default all)")
    p_fit.add_argument("--pooled", action="store_true", help="also fit the pooled panel across days")
    p_fit.add_argument("--jobs", type=int, help="parallel workers across days")

    p_cur = sub.add_parser("curves", help="sample a fitted impact curve to CSV")
    common(p_cur)
    p_cur.add_argument("fit_json", help="fits.json from the fit command (or a bare fit object)")
    p_cur.add_argument("--model", choices=list(MODELS), help="which model's fit to sample (default sshape)")
    p_cur.add_argument("--date", help="sample a specific day's fit instead of the pooled one")
    p_cur.add_argument("--x-min", type=float, help="left end of the flow range (default -400)")
    p_cur.add_argument("--x-max", type=float, help="right end of the flow range (default 400)")
    p_cur.add_argument("--n-points", type=int, help="number of samples (default 201)")

    p_cmp = sub.add_parser("compare", help="cross-model t tests, descriptives, and depth reports")
    common(p_cmp)
    p_cmp.add_argument("--fits", nargs="+", required=True, help="daily fits.csv files, one per contract")
    p_cmp.add_argument("--bars", nargs="*", help="bar CSVs matching the contracts (for depth quote sizes)")

    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "ingest":
            return cmd_ingest(args)
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "fit":
            return cmd_fit(args)
        if args.command == "curves":
            return cmd_curves(args)
        if args.command == "compare":
            return cmd_compare(args)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    parser.error(f"unknown command {args.command!r}")
    return 2


if __name__ == "__main__":
    sys.exit(main())
