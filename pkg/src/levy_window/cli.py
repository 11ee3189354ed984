"""Command-line front end: ``levy-window {estimate,metrics,backtest,simulate,stable-table}``.

Exit codes: 0 success, 2 diagnostics failed (no valid window, or a backtest
z-score beyond the bound), 64 usage, 65 bad input data, 66 missing input,
70 internal error.
"""

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict

import numpy as np

from . import __version__
from .backtest import backtest_drawdown, backtest_var, results_to_csv, results_to_rows
from .exceptions import (
    DataError,
    DomainError,
    EstimationError,
    FitInfeasibleError,
    LevyWindowError,
)
from .market import read_csv, simulate_two_regime, write_csv
from .metrics import DriftSpec, risk_report
from .stable import StableParams, stable_table
from .window import IdentifyConfig, fit_stable_params, identification_report, identify

EXIT_OK = 0
EXIT_DIAGNOSTIC = 2
EXIT_USAGE = 64
EXIT_DATA = 65
EXIT_NOINPUT = 66
EXIT_INTERNAL = 70


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# deterministic JSON

def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return "null" if obj is None else ("true" if obj else "false")
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return "null" if not math.isfinite(v) else format(v, ".17g")
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [f"{pad}{_encode(v, indent, level + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent=2):
    """JSON text with floats at 17 significant digits and non-finite values as null."""
    return _encode(obj, indent, 0) + "\n"


# --------------------------------------------------------------------------
# configuration

def _parse_config_file(path):
    with open(path) as fh:
        text = fh.read()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {path}: {exc}") from None
        flat = {}

        def walk(prefix, node):
            for k, v in node.items():
                key = f"{prefix}.{k}" if prefix else k
                if isinstance(v, dict):
                    walk(key, v)
                else:
                    flat[key] = v

        walk("", raw)
        return flat
    out = {}
    for i, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config file {path}, line {i}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k] = v
    return out


def _config_dest(key):
    return key.rsplit(".", 1)[-1].replace("-", "_")


def _float_list(text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).replace(",", " ").split()]


def _merge(args, parser_defaults, types):
    """Defaults, then the config file, then explicit flags."""
    file_values = {}
    if getattr(args, "config", None):
        for k, v in _parse_config_file(args.config).items():
            dest = _config_dest(k)
            if dest not in parser_defaults:
                raise UsageError(f"unknown configuration key {k!r}")
            file_values[dest] = v
    merged = {}
    for dest, default in parser_defaults.items():
        flag = getattr(args, dest, None)
        if flag is not None:
            val = flag
        elif dest in file_values:
            val = file_values[dest]
        else:
            val = default
        conv = types.get(dest)
        if val is not None and conv is not None and isinstance(val, str):
            try:
                val = conv(val)
            except ValueError:
                raise UsageError(f"bad value for {dest}: {val!r}") from None
        merged[dest] = val
    return merged


def _bool(text):
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


# option table: dest -> (flag, type, default, help)
_COMMON = {
    "seed": ("--seed", int, 0, "random seed recorded in the report"),
    "threads": ("--threads", int, None, "worker threads (default: LEVY_WINDOW_THREADS or CPU count)"),
    "output": ("--output", str, None, "output path (default: stdout)"),
    "format": ("--format", str, "json", "json or csv"),
}
_ESTIMATE = {
    "input": ("--input", str, None, "CSV with timestamp,price or timestamp,log_price"),
    "delta_factor": ("--delta-factor", float, 0.25, "central band half-width as a multiple of the smallest-horizon MAD"),
    "tau_lo": ("--tau-lo", float, 1.0, "smallest grid horizon in base steps"),
    "tau_hi": ("--tau-hi", float, None, "largest grid horizon in base steps"),
    "per_decade": ("--per-decade", int, 8, "grid horizons per decade"),
    "grid_anchor": ("--grid-anchor", float, None, "horizon the geometric grid must pass through"),
    "span_lo": ("--span-lo", float, None, "lower end of the segment-fit span"),
    "span_hi": ("--span-hi", float, None, "upper end of the segment-fit span"),
    "pieces": ("--pieces", int, 3, "3 (both kinks) or 2 (upper kink only)"),
    "functional": ("--functional", str, "mad", "scale functional: mad or iqr"),
    "se_method": ("--se-method", str, "bootstrap", "bootstrap or sandwich"),
    "replicates": ("--replicates", int, 500, "bootstrap replicates"),
    "block_len": ("--block-len", int, None, "bootstrap block length in base steps"),
    "tau0": ("--tau0", float, None, "anchor horizon for the fitted scale (default: lower window edge)"),
}
_MODEL = {
    "estimate": ("--estimate", str, None, "estimation report to take alpha, sigma, mu, tau0 and window from"),
    "alpha": ("--alpha", float, None, "tail index"),
    "beta": ("--beta", float, 0.0, "skewness"),
    "sigma": ("--sigma", float, 1.0, "scale per unit horizon**(1/alpha)"),
    "mu": ("--mu", float, 0.0, "drift per base step"),
    "tau0": ("--tau0", float, 1.0, "anchor horizon"),
}
_METRICS = {
    "taus": ("--taus", _float_list, [1, 2, 4, 8, 16], "horizons"),
    "levels": ("--levels", _float_list, [0.01, 0.05], "VaR/ES tail levels"),
    "orders": ("--orders", _float_list, [1.1], "p-norm orders"),
    "dd_levels": ("--dd-levels", _float_list, [0.95], "drawdown-quantile levels"),
    "kelly_level": ("--kelly-level", float, 0.05, "tail level of the Kelly constraint"),
    "r": ("--r", float, 0.0, "riskless return per base step"),
    "beyond_ir": ("--beyond-ir", str, "levy", "levy or sqrt propagation above the window"),
    "active_alpha": ("--active-alpha", float, None, "tail index of the active return"),
    "active_sigma": ("--active-sigma", float, 1.0, "scale of the active return"),
    "active_mu": ("--active-mu", float, 0.0, "drift of the active return per base step"),
}
_BACKTEST = {
    "input": ("--input", str, None, "CSV with timestamp,price or timestamp,log_price"),
    "q": ("--q", float, 0.01, "VaR tail level"),
    "dd_level": ("--dd-level", float, 0.95, "drawdown non-breach level"),
    "horizons": ("--horizons", _float_list, [1, 2, 4, 8, 16], "horizons as multiples of tau0"),
    "metric": ("--metric", str, "var", "var, drawdown or both"),
    "split": ("--split", str, "train_test", "train_test or in_sample"),
    "train_frac": ("--train-frac", float, 0.5, "training fraction of the series"),
    "z_bound": ("--z-bound", float, 3.0, "fail when a levy-mode |z| exceeds this"),
    "block_se": ("--block-se", _bool, False, "add block-bootstrap standard errors"),
    "min_obs": ("--min-obs", int, 100, "minimum returns per horizon"),
}
_SIMULATE = {
    "alpha": ("--alpha", float, 1.5, "tail index"),
    "beta": ("--beta", float, 0.0, "skewness"),
    "sigma": ("--sigma", float, 0.01, "scale"),
    "mu": ("--mu", float, 0.0, "drift per step"),
    "tau_uv": ("--tau-uv", float, 2.0, "lower window edge in steps"),
    "tau_ir": ("--tau-ir", float, 64.0, "upper window edge in steps"),
    "n": ("--n", int, 100000, "number of increments"),
    "mode": ("--mode", str, "two_regime", "window or two_regime"),
    "step": ("--step", float, 1.0, "timestamp spacing"),
    "start": ("--start", float, 0.0, "first timestamp"),
}
_TABLE = {
    "alpha": ("--alpha", float, 1.5, "tail index"),
    "beta": ("--beta", float, 0.0, "skewness"),
    "z_min": ("--z-min", float, -10.0, "first z"),
    "z_max": ("--z-max", float, 10.0, "last z"),
    "num": ("--num", int, 201, "number of points"),
}

COMMANDS = {
    "estimate": {**_ESTIMATE, **_COMMON},
    "metrics": {**_MODEL, **_METRICS, **_COMMON},
    "backtest": {**_MODEL, **_BACKTEST, **_COMMON},
    "simulate": {**_SIMULATE, **_COMMON},
    "stable-table": {**_TABLE, **_COMMON},
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def build_parser():
    parser = _Parser(prog="levy-window", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, table in COMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON or key=value configuration file")
        for dest, (flag, _, default, help_text) in table.items():
            p.add_argument(flag, dest=dest, default=None, help=f"{help_text} (default: {default})")
    return parser


def _settings(args):
    table = COMMANDS[args.command]
    defaults = {dest: spec[2] for dest, spec in table.items()}
    types = {dest: spec[1] for dest, spec in table.items()}
    return _merge(args, defaults, types)


# --------------------------------------------------------------------------
# commands

def _envelope(command, cfg, result):
    return {
        "tool": "levy-window",
        "version": __version__,
        "command": command,
        "seed": cfg.get("seed"),
        "config": {k: v for k, v in cfg.items() if k != "output"},
        "result": result,
    }


def _emit(cfg, text):
    if cfg.get("output"):
        with open(cfg["output"], "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _csv_text(fieldnames, rows):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: (f"{float(v):.17g}" if isinstance(v, (float, np.floating)) else v)
                    for k, v in row.items()})
    return buf.getvalue()


def _estimate_csv(report):
    cm, sc = report["central_mass"], report["scale_curve"]
    s_at = dict(zip(sc["horizons"], sc["s_values"]))
    rows = [{"tau": h, "p0_hat": p, "center": c, "s_value": s_at.get(h, "")}
            for h, p, c in zip(cm["horizons"], cm["p0_hat"], cm["centers"])]
    return _csv_text(["tau", "p0_hat", "center", "s_value"], rows)


_METRIC_FIELDS = ["metric", "tau", "level_or_order", "levy", "gaussian", "bias", "f_star", "f_max"]


def _metrics_csv(metrics):
    rows = []
    for name, entries in metrics.items():
        for e in entries:
            row = {k: e.get(k, "") for k in _METRIC_FIELDS[1:]}
            rows.append({"metric": name, **{k: ("" if v is None else v) for k, v in row.items()}})
    return _csv_text(_METRIC_FIELDS, rows)


def cmd_estimate(cfg):
    if not cfg["input"]:
        raise UsageError("--input is required")
    series = read_csv(cfg["input"])
    ic = IdentifyConfig(
        delta_factor=cfg["delta_factor"], tau_lo=cfg["tau_lo"], tau_hi=cfg["tau_hi"],
        per_decade=cfg["per_decade"], grid_anchor=cfg["grid_anchor"], span_lo=cfg["span_lo"],
        span_hi=cfg["span_hi"], pieces=cfg["pieces"], functional=cfg["functional"],
        se_method=cfg["se_method"], replicates=cfg["replicates"], block_len=cfg["block_len"],
        seed=cfg["seed"], threads=cfg["threads"],
    )
    res = identify(series, ic)
    report = identification_report(res)
    tau0 = cfg["tau0"] if cfg["tau0"] is not None else res.window.tau_uv_hat
    fitted = fit_stable_params(series, res.slope_fit.alpha_hat, int(round(tau0)))
    report["fitted_params"] = {**asdict(fitted), "tau0": float(round(tau0)),
                               "alpha_clamped": bool(res.slope_fit.alpha_hat > 2.0)}
    report["step"] = series.step
    report["window_time_units"] = [res.window.tau_uv_hat * series.step,
                                   res.window.tau_ir_hat * series.step]
    verdict = res.diagnostics["levy_window"]
    report["verdict"] = "levy window" if verdict else "no Levy window"
    if cfg["format"] == "csv":
        _emit(cfg, _estimate_csv(report))
    else:
        _emit(cfg, dumps(_envelope("estimate", cfg, report)))
    return EXIT_OK if verdict else EXIT_DIAGNOSTIC


def _model_from(cfg):
    window = None
    if cfg.get("estimate"):
        with open(cfg["estimate"]) as fh:
            rep = json.load(fh)
        body = rep.get("result", rep)
        fp = body["fitted_params"]
        params = StableParams(alpha=fp["alpha"], beta=fp.get("beta", 0.0), sigma=fp["sigma"], mu=fp["mu"])
        w = body["window"]
        window = (w["tau_uv_hat"], w["tau_ir_hat"])
        return params, fp["tau0"], window
    if cfg.get("alpha") is None:
        raise UsageError("give --alpha (and --sigma, --mu, --tau0) or --estimate")
    params = StableParams(alpha=cfg["alpha"], beta=cfg["beta"], sigma=cfg["sigma"], mu=cfg["mu"])
    return params, cfg["tau0"], window


def cmd_metrics(cfg):
    params, tau0, window = _model_from(cfg)
    active = None
    if cfg["active_alpha"] is not None:
        active = StableParams(alpha=cfg["active_alpha"], sigma=cfg["active_sigma"], mu=cfg["active_mu"])
    rep = risk_report(
        params, DriftSpec(r=cfg["r"]), cfg["taus"], tau0=tau0, levels=cfg["levels"],
        orders=cfg["orders"], window=window, beyond_ir=cfg["beyond_ir"], active_params=active,
        dd_levels=cfg["dd_levels"], kelly_level=cfg["kelly_level"],
    )
    if cfg["format"] == "csv":
        _emit(cfg, _metrics_csv(rep))
    else:
        body = {"params": asdict(params), "tau0": tau0, "window": window, "metrics": rep}
        _emit(cfg, dumps(_envelope("metrics", cfg, body)))
    return EXIT_OK


def cmd_backtest(cfg):
    if not cfg["input"]:
        raise UsageError("--input is required")
    series = read_csv(cfg["input"])
    params, tau0, window = _model_from(cfg)
    tau0 = int(round(tau0))
    horizons = [int(round(h * tau0)) for h in cfg["horizons"]]
    kw = dict(window=window, split=cfg["split"], train_frac=cfg["train_frac"],
              min_obs=cfg["min_obs"], block_se=cfg["block_se"], seed=cfg["seed"])
    results = []
    if cfg["metric"] in ("var", "both"):
        results += backtest_var(series, params.alpha, tau0, cfg["q"], horizons, **kw)
    if cfg["metric"] in ("drawdown", "both"):
        results += backtest_drawdown(series, params.alpha, tau0, cfg["dd_level"], horizons, **kw)
    if cfg["metric"] not in ("var", "drawdown", "both"):
        raise UsageError(f"unknown metric {cfg['metric']!r}")
    worst = max((abs(r.z_score) for r in results if r.mode == "levy"), default=0.0)
    passed = worst <= cfg["z_bound"]
    if cfg["format"] == "csv":
        _emit(cfg, results_to_csv(results))
    else:
        body = {"alpha": params.alpha, "tau0": tau0, "results": results_to_rows(results),
                "max_abs_levy_z": worst, "passed": passed}
        _emit(cfg, dumps(_envelope("backtest", cfg, body)))
    return EXIT_OK if passed else EXIT_DIAGNOSTIC


def cmd_simulate(cfg):
    params = StableParams(alpha=cfg["alpha"], beta=cfg["beta"], sigma=cfg["sigma"], mu=cfg["mu"])
    series = simulate_two_regime(params, cfg["tau_uv"], cfg["tau_ir"], cfg["n"], cfg["seed"],
                                 mode=cfg["mode"], step=cfg["step"], start=cfg["start"])
    _emit(cfg, write_csv(series))
    return EXIT_OK


def cmd_stable_table(cfg):
    params = StableParams(alpha=cfg["alpha"], beta=cfg["beta"])
    if cfg["num"] < 1:
        raise UsageError("--num must be positive")
    z = np.linspace(cfg["z_min"], cfg["z_max"], cfg["num"])
    rows = stable_table(params, z)
    if cfg["format"] == "json":
        body = {"alpha": params.alpha, "beta": params.beta,
                "rows": [{"z": a, "pdf": b, "cdf": c} for a, b, c in rows]}
        _emit(cfg, dumps(_envelope("stable-table", cfg, body)))
    else:
        lines = ["z,pdf,cdf"] + [f"{a:.17g},{b:.17g},{c:.17g}" for a, b, c in rows]
        _emit(cfg, "\n".join(lines) + "\n")
    return EXIT_OK


HANDLERS = {
    "estimate": cmd_estimate,
    "metrics": cmd_metrics,
    "backtest": cmd_backtest,
    "simulate": cmd_simulate,
    "stable-table": cmd_stable_table,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _settings(args)
        if cfg.get("format") not in (None, "json", "csv"):
            raise UsageError(f"unknown format {cfg['format']!r}")
        if args.command == "simulate" and cfg["format"] == "json":
            cfg["format"] = "csv"
        return HANDLERS[args.command](cfg)
    except UsageError as exc:
        print(f"levy-window: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"levy-window: cannot open {exc.filename}: no such file", file=sys.stderr)
        return EXIT_NOINPUT
    except (DataError, FitInfeasibleError) as exc:
        print(f"levy-window: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except EstimationError as exc:
        print(f"levy-window: {exc}", file=sys.stderr)
        return EXIT_DIAGNOSTIC
    except DomainError as exc:
        print(f"levy-window: invalid parameter: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (LevyWindowError, OSError, ValueError, ArithmeticError) as exc:
        print(f"levy-window: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
