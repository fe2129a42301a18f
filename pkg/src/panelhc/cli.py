"""Command-line front end.

Three subcommands:

  fit          within-group regression on a CSV, selectable vce
  diagnostics  per-observation fitted/residual/leverage dump (plot data)
  mc           replication experiments, metrics and power-curve CSVs

Exit codes: 0 success, 1 data or configuration problem, 2 estimation
failure. Output is a pure function of the inputs and flags; reruns are
byte-identical. PANEL_HC_THREADS caps the mc worker count and never
changes results.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigurationError,
    DataError,
    EstimationError,
)
from .fe_core import FEFit, fit_within, leverage
from .inference import conf_interval, t_test
from .montecarlo import (
    Contamination,
    McConfig,
    run_power_experiment,
    run_size_experiment,
    write_metrics_csv,
    write_power_csv,
)
from .paneldata import ColumnMap, load_csv, within_transform
from .vcov import (
    VcovKind,
    vcov_conventional,
    vcov_phc0,
    vcov_phc3,
    vcov_phc6,
    vcov_phcjk,
)

__all__ = ["OutputTable", "cmd_fit", "cmd_diagnostics", "cmd_mc", "main"]

_VCE_NAMES = {
    "conventional": VcovKind.CONVENTIONAL,
    "robust": VcovKind.PHC0,
    "phc0": VcovKind.PHC0,
    "phc3": VcovKind.PHC3,
    "phc6": VcovKind.PHC6,
    "jackknife": VcovKind.PHCJK,
    "phcjk": VcovKind.PHCJK,
}


@dataclass
class OutputTable:
    """Rectangular table; cells are strings or floats, formatted at render.

    Human formats (markdown) print floats to 6 significant digits, the
    machine formats (csv, tsv) to 17. Footer lines become '#' comments in
    machine formats.
    """

    header: tuple
    rows: list
    footer: tuple = ()

    def render(self, fmt: str) -> str:
        if fmt == "markdown":
            return self._render_markdown()
        if fmt in ("csv", "tsv"):
            return self._render_delimited("," if fmt == "csv" else "\t")
        raise ConfigurationError(f"unknown format {fmt!r}")

    @staticmethod
    def _cell(v, digits: str) -> str:
        if isinstance(v, str):
            return v
        return format(float(v), digits)

    def _render_delimited(self, sep: str) -> str:
        import csv as _csv

        buf = io.StringIO()
        w = _csv.writer(buf, delimiter=sep, lineterminator="\n")
        w.writerow(self.header)
        for row in self.rows:
            w.writerow([self._cell(v, ".17g") for v in row])
        for line in self.footer:
            buf.write(f"# {line}\n")
        return buf.getvalue()

    def _render_markdown(self) -> str:
        cells = [[self._cell(v, ".6g") for v in row] for row in self.rows]
        widths = [
            max(len(str(h)), *(len(r[j]) for r in cells)) if cells else len(str(h))
            for j, h in enumerate(self.header)
        ]
        def line(vals):
            return "| " + " | ".join(v.ljust(w) for v, w in zip(vals, widths)) + " |"
        out = [line([str(h) for h in self.header]),
               line(["-" * w for w in widths])]
        out.extend(line(r) for r in cells)
        text = "\n".join(out) + "\n"
        if self.footer:
            text += "\n" + "\n".join(self.footer) + "\n"
        return text


def _write_out(text: str, out_path):
    if out_path:
        with open(out_path, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _split_cols(values) -> tuple:
    cols = []
    for v in values:
        cols.extend(c for c in v.split(",") if c)
    if not cols:
        raise ConfigurationError("no regressor columns given via --x")
    return tuple(cols)


def _load_and_fit(args):
    cm = ColumnMap(y=args.y, x=_split_cols(args.x), unit=args.unit, time=args.time)
    panel = load_csv(args.data, cm)
    dm = within_transform(panel)
    return panel, dm, fit_within(dm)


def _make_vcov(name: str, fit: FEFit, dm):
    kind = _VCE_NAMES.get(name.lower())
    if kind is None:
        raise ConfigurationError(
            f"unknown vce {name!r}; expected one of {', '.join(sorted(_VCE_NAMES))}"
        )
    if kind == VcovKind.CONVENTIONAL:
        return vcov_conventional(fit)
    if kind == VcovKind.PHC0:
        return vcov_phc0(fit, dm)
    lev = leverage(fit, dm)
    if kind == VcovKind.PHC3:
        return vcov_phc3(fit, dm, lev)
    if kind == VcovKind.PHC6:
        return vcov_phc6(fit, dm, lev)
    return vcov_phcjk(fit, dm, lev)


def cmd_fit(args) -> int:
    """Fit the model and print the coefficient table."""
    if not 0.0 < args.level < 100.0:
        raise ConfigurationError(
            f"--level is a percentage in (0, 100), got {args.level!r}"
        )
    panel, dm, fit = _load_and_fit(args)
    est = _make_vcov(args.vce, fit, dm)
    level = args.level / 100.0
    rows = []
    for j, name in enumerate(dm.column_names):
        se = float(np.sqrt(max(est.matrix[j, j], 0.0)))
        lo, hi = conf_interval(fit, est, j, level)
        if se == 0.0:
            rows.append((name, float(fit.beta[j]), 0.0, ".", ".", lo, hi))
        else:
            res = t_test(fit, est, j, 0.0)
            rows.append(
                (name, float(fit.beta[j]), se, res.statistic, res.p_value, lo, hi)
            )
    dfr = fit.n - fit.N - fit.k if est.kind == VcovKind.CONVENTIONAL else fit.N - 1
    footer = [
        f"N = {fit.N} units, n = {fit.n} observations, k = {fit.k}, df = {dfr}",
        f"vce = {est.kind.value} ({est.correction})",
    ]
    if est.kind == VcovKind.PHC6:
        footer.append(f"flagged units (high leverage): {len(est.flagged_units)}")
    table = OutputTable(
        header=("name", "coef", "se", "t", "p", "ci_lo", "ci_hi"),
        rows=rows,
        footer=tuple(footer),
    )
    _write_out(table.render(args.format), args.out)
    return 0


def cmd_diagnostics(args) -> int:
    """Per-observation plot data: fitted values, residuals, leverage."""
    panel, dm, fit = _load_and_fit(args)
    lev = leverage(fit, dm)
    fitted = dm.x @ fit.beta
    hbar_rows = lev.time_average_rows(dm.times)
    hstar_rows = np.repeat(lev.max_relative, dm.t_lengths)
    units_rows = np.repeat(np.asarray(panel.units, dtype=object), dm.t_lengths)
    rows = []
    for i in range(panel.n):
        rows.append(
            (
                str(units_rows[i]),
                str(panel.times[i]),
                fitted[i],
                fit.residuals[i],
                lev.diagonals[i],
                hbar_rows[i],
                hstar_rows[i],
                "true" if hstar_rows[i] >= 2.0 else "false",
            )
        )
    table = OutputTable(
        header=("unit", "time", "fitted", "demeaned_residual", "h_itt",
                "h_bar_tt", "h_star_i", "flagged"),
        rows=rows,
    )
    _write_out(table.render("csv"), args.out)
    return 0


def _read_config_file(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        try:
            cfg = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON: {exc}") from None
        if not isinstance(cfg, dict):
            raise ConfigurationError(f"{path}: top level must be an object")
        return cfg
    cfg = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(
                f"{path}: line {lineno}: expected 'key = value', got {raw!r}"
            )
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        try:
            cfg[key] = json.loads(value)
        except json.JSONDecodeError:
            cfg[key] = value.strip("\"'")
    return cfg


def _as_int_list(v, what: str) -> list:
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return [int(v)]
    if isinstance(v, (list, tuple)):
        return [int(i) for i in v]
    raise ConfigurationError(f"{what} must be an integer or list of integers, got {v!r}")


def _mc_settings(args) -> dict:
    cfg = _read_config_file(args.config) if args.config else {}
    known = {
        "N", "T", "gamma", "betas", "theta", "contamination", "replications",
        "seed", "alpha", "estimators", "power_grid", "power",
    }
    unknown = set(cfg) - known
    if unknown:
        raise ConfigurationError(
            f"unknown config key(s) {sorted(unknown)}; expected {sorted(known)}"
        )
    # inline flags override file values
    if args.N is not None:
        cfg["N"] = args.N
    if args.T is not None:
        cfg["T"] = args.T
    if args.gamma is not None:
        cfg["gamma"] = args.gamma
    if args.reps is not None:
        cfg["replications"] = args.reps
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.alpha is not None:
        cfg["alpha"] = args.alpha
    if args.contaminate:
        cfg["contamination"] = True
    if args.power:
        cfg["power"] = True
    if "N" not in cfg or "T" not in cfg:
        raise ConfigurationError("both N and T are required (flags or config file)")
    return cfg


def _build_config(settings: dict, n_val: int, t_val: int) -> McConfig:
    con = settings.get("contamination", False)
    if isinstance(con, bool):
        con = Contamination(enabled=con)
    elif isinstance(con, dict):
        con = Contamination(**{"enabled": True, **con})
    else:
        raise ConfigurationError(
            f"contamination must be a boolean or an object, got {con!r}"
        )
    kwargs = {
        "N": n_val,
        "T": t_val,
        "gamma": float(settings.get("gamma", 0.0)),
        "theta": float(settings.get("theta", 0.0)),
        "contamination": con,
        "replications": int(settings.get("replications", 1000)),
        "seed": int(settings.get("seed", 0)),
        "alpha": float(settings.get("alpha", 0.05)),
    }
    if "betas" in settings:
        kwargs["betas"] = tuple(settings["betas"])
    if "estimators" in settings:
        kwargs["estimators"] = tuple(settings["estimators"])
    if "power_grid" in settings:
        kwargs["power_grid"] = tuple(settings["power_grid"])
    return McConfig(**kwargs)


def cmd_mc(args) -> int:
    """Run the experiment grid and write metrics (and power) CSVs."""
    settings = _mc_settings(args)
    n_list = _as_int_list(settings["N"], "N")
    t_list = _as_int_list(settings["T"], "T")
    want_power = bool(settings.get("power", False))
    os.makedirs(args.out_dir, exist_ok=True)
    results = []
    for n_val in n_list:
        for t_val in t_list:
            cfg = _build_config(settings, n_val, t_val)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                res = run_size_experiment(cfg)
            if res.failures:
                print(
                    f"warning: N={cfg.N} T={cfg.T}: {res.failures} of "
                    f"{cfg.replications} replications failed and were excluded",
                    file=sys.stderr,
                )
            if want_power:
                run_power_experiment(cfg, res)
            results.append(res)
            _print_mc_summary(res)
    metrics_path = os.path.join(args.out_dir, "mc_metrics.csv")
    write_metrics_csv(results, metrics_path)
    print(f"wrote {metrics_path}")
    if want_power:
        for res in results:
            cfg = res.config
            name = (
                "mc_power.csv"
                if len(results) == 1
                else f"mc_power_N{cfg.N}_T{cfg.T}.csv"
            )
            power_path = os.path.join(args.out_dir, name)
            write_power_csv(res, power_path)
            print(f"wrote {power_path}")
    return 0


def _print_mc_summary(res) -> None:
    cfg = res.config
    con = "on" if cfg.contamination.enabled else "off"
    print(
        f"N={cfg.N} T={cfg.T} gamma={cfg.gamma:g} contamination={con} "
        f"R={cfg.replications} seed={cfg.seed} used={res.n_used}"
    )
    rows = []
    for kind in cfg.estimators:
        m = res.metrics[kind]
        rows.append(
            (kind.value, m.rp_single, m.rp_joint, m.pb_b1, m.pb_b2, m.rmse)
        )
    table = OutputTable(
        header=("estimator", "rp_single", "rp_joint", "pb_b1", "pb_b2", "rmse"),
        rows=rows,
    )
    sys.stdout.write(table.render("markdown"))


def _add_data_flags(p: argparse.ArgumentParser):
    p.add_argument("--data", required=True, help="input CSV path")
    p.add_argument("--y", required=True, help="response column")
    p.add_argument("--x", required=True, nargs="+",
                   help="regressor columns (space or comma separated)")
    p.add_argument("--unit", default="unit", help="unit id column (default: unit)")
    p.add_argument("--time", default="time", help="time column (default: time)")
    p.add_argument("--out", default=None, help="write output here instead of stdout")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="panelhc",
        description="Fixed-effects panel regression with leverage-aware "
                    "heteroskedasticity-consistent standard errors.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit a within-group regression")
    _add_data_flags(fit)
    fit.add_argument("--vce", default="conventional",
                     help="conventional | robust | phc0 | phc3 | phc6 | "
                          "jackknife | phcjk (default: conventional)")
    fit.add_argument("--level", type=float, default=95.0,
                     help="confidence level percent (default: 95)")
    fit.add_argument("--format", default="markdown",
                     choices=("csv", "tsv", "markdown"),
                     help="output format (default: markdown)")
    fit.set_defaults(func=cmd_fit)

    diag = sub.add_parser("diagnostics",
                          help="per-observation fitted/residual/leverage CSV")
    _add_data_flags(diag)
    diag.set_defaults(func=cmd_diagnostics)

    mc = sub.add_parser("mc", help="run replication experiments")
    mc.add_argument("--config", default=None,
                    help="JSON or key=value config file mirroring the "
                         "experiment settings")
    mc.add_argument("--N", type=int, nargs="+", default=None,
                    help="unit counts (grid crossed with --T)")
    mc.add_argument("--T", type=int, nargs="+", default=None,
                    help="period counts")
    mc.add_argument("--gamma", type=float, default=None,
                    help="heteroskedasticity degree (even integer, default 0)")
    mc.add_argument("--reps", type=int, default=None,
                    help="replications (default 1000)")
    mc.add_argument("--seed", type=int, default=None, help="RNG seed (default 0)")
    mc.add_argument("--alpha", type=float, default=None,
                    help="nominal level (default 0.05)")
    mc.add_argument("--contaminate", action="store_true",
                    help="contaminate 10%% of x1 cells with N(5, 25^2) draws")
    mc.add_argument("--power", action="store_true",
                    help="also compute size-adjusted power curves")
    mc.add_argument("--out-dir", default=".",
                    help="directory for result CSVs (default: .)")
    mc.set_defaults(func=cmd_mc)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except EstimationError as exc:
        print(f"estimation error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
