"""Command-line entry point: ``inflpanel {describe,fit,simulate,dgp,indices}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import re
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import scipy

from . import __version__
from .config import ConfigError, load_config, parse_value, require_seed
from .dgp import INSTITUTION_COLUMNS, DgpError, DgpParams, generate, write_truth
from .fe import FeSpec, fit_fe
from .gmm import GmmSpec, fit_gmm
from .indices import IndexScoreError, institution_columns, read_institutions, write_institutions
from .panel import PanelDataset, PanelError, describe, histogram, read_panel_csv, scatter_pairs, \
    volatility_profile, write_panel_csv
from .report import (TableColumn, coefficient_rows, diagnostics_rows, regression_table, render_text,
                     write_rows)
from .results import EstimationError
from .uncertainty import SimulationError, UncertaintySpec, run_uncertainty, write_draws, write_summary

log = logging.getLogger("inflpanel")

DEFAULT_VARIANTS = [
    {"name": "Uniform distribution", "target": "wri", "distribution": "uniform",
     "interactions": ["wri", "err"]},
    {"name": "Normal distribution", "target": "wri", "distribution": "normal",
     "interactions": ["wri", "err"]},
    {"name": "WRI only", "target": "wri", "distribution": "uniform", "interactions": ["wri"]},
    {"name": "Regime: WRI and ERR", "target": "regime", "interactions": ["wri", "err"]},
    {"name": "Regime: WRI not included", "target": "regime", "interactions": ["err"]},
]

# keys that cannot change any reported number and are left out of the echo
NON_RESULT_KEYS = ("out", "threads")


# --------------------------------------------------------------------------
# Shared helpers
# --------------------------------------------------------------------------

def _load_data(config: dict) -> tuple[PanelDataset, dict]:
    data_cfg = config["data"]
    if not data_cfg.get("panel"):
        raise ConfigError("data.panel is not set")
    data = read_panel_csv(data_cfg["panel"], start=data_cfg.get("start"), end=data_cfg.get("end"))
    records = {}
    if data_cfg.get("institutions"):
        records = read_institutions(data_cfg["institutions"])
        data = data.with_unit_values(institution_columns(records))
    return data, records


def _interaction_terms(config: dict, interactions) -> list[str]:
    dep = config["model"]["dependent"]
    return [f"L.{dep}:{v}" for v in interactions]


def fe_spec(config: dict, interactions) -> FeSpec:
    m = config["model"]
    dep = m["dependent"]
    regressors = [f"L.{dep}", *_interaction_terms(config, interactions),
                  *m["endogenous_controls"], *m["exogenous_controls"]]
    return FeSpec(dep, tuple(regressors), unit_effects=True, time_effects=m["time_effects"])


def gmm_spec(config: dict, interactions) -> GmmSpec:
    m = config["model"]
    dep = m["dependent"]
    return GmmSpec(
        dep,
        endogenous=(f"L.{dep}", *_interaction_terms(config, interactions), *m["endogenous_controls"]),
        exogenous=tuple(m["exogenous_controls"]),
        time_effects=m["time_effects"],
        lag_min=m["lag_min"],
        lag_max=m["lag_max"] if m["lag_max"] not in (None, "", "none") else None,
        collapse=m["collapse"],
        steps=m["steps"],
        windmeijer=m["windmeijer"],
    )


def _spec_label(interactions) -> str:
    return "+".join(interactions) if interactions else "none"


def _slug(text: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", text.lower()).strip("_")


def _write_metadata(out: Path, command: str, config: dict, extra: dict | None = None) -> None:
    echo = {k: v for k, v in config.items() if k not in NON_RESULT_KEYS}
    meta = {
        "command": command,
        "config": echo,
        "versions": {"inflpanel": __version__, "numpy": np.__version__,
                     "pandas": pd.__version__, "scipy": scipy.__version__},
    }
    if extra:
        meta.update(extra)
    text = json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n"
    (out / f"{command}_metadata.json").write_text(text, encoding="utf-8")


def _outdir(config: dict) -> Path:
    out = Path(config["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def cmd_describe(config: dict) -> int:
    data, _ = _load_data(config)
    out = _outdir(config)
    d = config["describe"]
    columns = d.get("columns") or [c for c in data.columns if data.series(c).notna().any()]
    with (out / "descriptives.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variable", "obs", "mean", "sd", "min", "max"])
        for row in describe(data, columns):
            w.writerow([row.variable, row.obs, *(_f2(v) for v in (row.mean, row.sd, row.min, row.max))])
    extra = {}
    if d.get("scatter"):
        x, y = d["scatter"]
        with (out / "scatter.csv").open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["unit", "year", x, y])
            for unit, year, a, b in scatter_pairs(data, x, y):
                w.writerow([unit, year, repr(a), repr(b)])
    if d.get("histogram_column"):
        width = float(d["histogram_bin_width"])
        with (out / "histogram.csv").open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin_lower", "bin_upper", "count"])
            for lower, count in histogram(data, d["histogram_column"], width):
                w.writerow([repr(lower), repr(lower + width), count])
    omitted = {}
    for column in d.get("volatility") or []:
        profile = volatility_profile(data, column)
        with (out / f"volatility_{_slug(column)}.csv").open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["unit", "volatility"])
            for unit, value in profile.values.items():
                w.writerow([unit, repr(float(value))])
        omitted[column] = profile.omitted
        if profile.omitted:
            log.warning("volatility of %s: omitted units with fewer than two changes: %s",
                        column, ", ".join(profile.omitted))
    extra["volatility_omitted_units"] = omitted
    _write_metadata(out, "describe", config, extra)
    return 0


def _f2(value: float) -> str:
    return "" if not np.isfinite(value) else f"{value:.2f}"


def run_fits(config: dict, data: PanelDataset) -> list[TableColumn]:
    m = config["model"]
    columns = []
    for family in m["estimators"]:
        if family not in ("fe", "gmm"):
            raise ConfigError(f"unknown estimator {family!r}")
        for interactions in m["interactions"]:
            label = _spec_label(interactions)
            k = len(columns) + 1
            try:
                if family == "fe":
                    result = fit_fe(data, fe_spec(config, interactions))
                else:
                    result = fit_gmm(data, gmm_spec(config, interactions))
            except (EstimationError, PanelError) as exc:
                raise EstimationError(f"column ({k}) {family} with interactions [{label}]: {exc}") from exc
            columns.append(TableColumn(family, label, result))
    return columns


def cmd_fit(config: dict) -> int:
    data, _ = _load_data(config)
    out = _outdir(config)
    columns = run_fits(config, data)
    rows = regression_table(columns, config["model"].get("labels"))
    write_rows(rows, out / "table.csv")
    (out / "table.txt").write_text(render_text(rows), encoding="utf-8")
    write_rows(coefficient_rows(columns), out / "coefficients.csv")
    write_rows(diagnostics_rows(columns), out / "diagnostics.csv")
    notes = {"r_squared": "within R-squared (net of unit effects)",
             "gmm_instrument_window": [config["model"]["lag_min"], config["model"]["lag_max"]]}
    _write_metadata(out, "fit", config, {"notes": notes})
    sys.stdout.write(render_text(rows))
    return 0


def cmd_simulate(config: dict) -> int:
    seed = require_seed(config, "simulate")
    data, records = _load_data(config)
    if not records:
        raise ConfigError("simulate needs data.institutions")
    out = _outdir(config)
    s = config["simulate"]
    variants = s.get("variants") or DEFAULT_VARIANTS
    summaries = {}
    for variant in variants:
        name = variant["name"]
        spec = UncertaintySpec(
            base_model=gmm_spec(config, variant.get("interactions", ["wri", "err"])),
            target=variant.get("target", "wri"),
            distribution=variant.get("distribution", "uniform"),
            reps=int(variant.get("reps", s["reps"])),
            seed=seed,
            significance_level=float(variant.get("significance_level", s["significance_level"])),
            coefficient=variant.get("coefficient"),
        )
        log.info("simulating %s (%d draws)", name, spec.reps)
        try:
            summary, draws = run_uncertainty(data, records, spec, threads=int(config.get("threads", 1)))
        except SimulationError as exc:
            raise SimulationError(f"variant {name!r}: {exc}") from exc
        summaries[name] = summary
        write_draws(draws, out / f"draws_{_slug(name)}.csv")
    write_summary(summaries, out / "simulation_summary.csv")
    notes = {"normal_scale": "band / 2",
             "band": "symmetric half-width, draws clipped to the index domain",
             "share_negative_significant_denominator": "all converged draws",
             "p_value_summary": "median across converged draws",
             "variants": variants}
    _write_metadata(out, "simulate", config, {"notes": notes})
    sys.stdout.write((out / "simulation_summary.csv").read_text(encoding="utf-8"))
    return 0


def _dgp_params(config: dict, seed: int) -> DgpParams:
    raw = dict(config.get("dgp") or {})
    raw["seed"] = seed
    try:
        return DgpParams(**raw)
    except TypeError as exc:
        raise ConfigError(f"dgp block: {exc}") from None


def cmd_dgp(config: dict) -> int:
    seed = require_seed(config, "dgp")
    params = _dgp_params(config, seed)
    data, truth = generate(params)
    out = _outdir(config)
    panel_cols = [c for c in data.columns if c not in INSTITUTION_COLUMNS]
    write_panel_csv(PanelDataset(data.frame[panel_cols]), out / "panel.csv")
    write_truth(truth, out)
    _write_metadata(out, "dgp", config, {"dgp_params": params.as_dict()})
    return 0


def cmd_indices(config: dict) -> int:
    path = config["data"].get("institutions")
    if not path:
        raise ConfigError("data.institutions is not set")
    records = read_institutions(path)
    out = _outdir(config)
    write_institutions(records, out / "institutions_computed.csv")
    sys.stdout.write(f"{len(records)} units validated\n")
    return 0


COMMANDS = {
    "describe": cmd_describe,
    "fit": cmd_fit,
    "simulate": cmd_simulate,
    "dgp": cmd_dgp,
    "indices": cmd_indices,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML run configuration")
    common.add_argument("--seed", type=int, help="override config key 'seed'")
    common.add_argument("--out", help="override config key 'out'")
    common.add_argument("--threads", type=int, help="worker threads; never changes results")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key, e.g. model.lag_max=3")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="inflpanel", parents=[common],
                                     description="Institution-conditioned inflation persistence toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=(func.__doc__ or name).splitlines()[0])
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    overrides = []
    for item in args.set:
        if "=" not in item:
            parser.error(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides.append((key.strip(), parse_value(value.strip())))
    for key in ("seed", "out", "threads"):
        value = getattr(args, key)
        if value is not None:
            overrides.append((key, value))
    try:
        config = load_config(args.config, overrides)
        return COMMANDS[args.command](config)
    except (ConfigError, PanelError, IndexScoreError, EstimationError, SimulationError, DgpError,
            OSError) as exc:
        log.error("%s failed: %s", args.command, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
