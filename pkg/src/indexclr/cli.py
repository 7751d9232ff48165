"""Command-line front end: ``indexclr {simulate,test,confset,mc,oracle}``.

Settings come from built-in defaults, then an optional ``--config`` file of
flat ``key = value`` lines with dotted keys (``kernel.scale``, ``clr.alpha``),
then command-line flags. Every structured output embeds the resolved settings
and the library version. ``threads``, ``out_dir`` and ``format`` are left out
of the echo so outputs do not depend on how a run was scheduled.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from indexclr import __version__
from indexclr.clr import APPROACHES, ClrConfig, clr_test
from indexclr.confset import build_eval_grid, build_param_grid, invert, kernel_echo
from indexclr.datafile import dataset_to_csv, read_dataset
from indexclr.dgp import (
    SET_KINDS,
    AppendixADgp,
    Section5Dgp,
    appendixA_cond_prob,
    appendixA_Fxi,
    membership_theta_mc,
)
from indexclr.errors import CellTimeoutError, IndexClrError, InvalidConfigError, InvalidDataError
from indexclr.kernels import KernelConfig
from indexclr.models import MODEL_FACTORIES, make_binary_model
from indexclr.montecarlo import STATUS_TIMEOUT, BANDWIDTH_RP, preset_cells, run_table, default_kernel
from indexclr.parallel import DATA, GRID, MULT, ORACLE, substream

COMMANDS = ("simulate", "test", "confset", "mc", "oracle")
DGPS = ("section5", "appendixA1", "appendixA2")
CURVES = ("cond_prob", "fxi")


def _floats(text) -> list[float]:
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise InvalidConfigError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text) -> list[int]:
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise InvalidConfigError(f"expected comma-separated integers, got {text!r}") from None


def _words(text) -> list[str]:
    return [v.strip() for v in str(text).split(",") if v.strip()]


def _points(text) -> list[list[float]]:
    return [_floats(p) for p in str(text).split(";") if p.strip()]


def _flag(text) -> bool:
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise InvalidConfigError(f"expected a boolean, got {text!r}")


@dataclass(frozen=True)
class Option:
    key: str
    flag: str
    conv: object
    default: object
    commands: tuple
    help: str
    choices: tuple | None = None


_DATA_CMDS = ("test", "confset")
_ALL = COMMANDS
OPTIONS = [
    Option("seed", "--seed", int, 0, _ALL, "master seed; every random draw derives from it"),
    Option("threads", "--threads", int, 1, _ALL, "worker processes"),
    Option("out_dir", "--out-dir", str, None, _ALL, "directory for output files"),
    Option("format", "--format", str, "table", _ALL, "stdout format", ("csv", "json", "table")),
    # data generation
    Option("dgp", "--dgp", str, "section5", ("simulate", "oracle"), "design", DGPS),
    Option("n", "--n", int, 250, ("simulate",), "sample size"),
    Option("d", "--d", int, 3, ("simulate", "oracle"), "number of covariates (section5 design)"),
    Option("tau", "--tau", float, 0.5, ("simulate", "oracle", "test", "confset"), "quantile level"),
    Option("slope_c", "--slope-c", float, 0.2, ("simulate", "oracle"), "slope of the noise cdf on (-1, 1]"),
    # model and data
    Option("data", "--data", str, None, _DATA_CMDS, "dataset CSV"),
    Option("model", "--model", str, "binary", _DATA_CMDS, "model kind", tuple(MODEL_FACTORIES)),
    Option("K", "--K", int, None, _DATA_CMDS, "categories above the lowest (ordered) or alternatives (multinomial)"),
    Option("T", "--T", int, None, _DATA_CMDS, "panel periods"),
    Option("q", "--q", int, None, _DATA_CMDS, "covariates per block (multinomial, panel)"),
    Option("bound", "--bound", float, 1.0, _DATA_CMDS, "box bound of the free coefficients"),
    Option("approach", "--approach", str, "index", _DATA_CMDS, "conditioning route", APPROACHES),
    Option("b", "--b", _floats, None, ("test", "oracle"), "parameter value, comma-separated"),
    Option("grid.points", "--points", _points, None, ("confset",), "explicit points, ';'-separated"),
    Option("grid.lattice", "--lattice", _ints, None, ("confset",), "lattice counts per free coordinate"),
    # kernel and test
    Option("kernel.scale", "--bandwidth-scale", float, None, _DATA_CMDS, "bandwidth constant c in h = c n^-r"),
    Option("kernel.rate", "--rate", float, None, _DATA_CMDS, "bandwidth rate r"),
    Option("kernel.order_p", "--order-p", int, None, _DATA_CMDS, "kernel order (2, 4 or 6)"),
    Option("kernel.leave_one_out", "--leave-one-out", _flag, None, _DATA_CMDS, "exclude i from its own fit"),
    Option("clr.alpha", "--alpha", float, 0.05, _DATA_CMDS + ("mc",), "test level"),
    Option("clr.B", "--B", int, 1000, _DATA_CMDS + ("mc",), "multiplier draws"),
    Option("clr.grid_size", "--grid-size", int, 400, _DATA_CMDS + ("mc",), "evaluation points"),
    Option("clr.seed", "--clr-seed", int, None, _DATA_CMDS + ("mc",), "alias of --seed"),
    # monte carlo
    Option("mc.preset", "--preset", str, "table2-desk", ("mc",), "cell preset"),
    Option("mc.reps", "--reps", int, None, ("mc",), "replications per cell"),
    Option("mc.d", "--mc-d", _ints, None, ("mc",), "restrict to these d"),
    Option("mc.n", "--mc-n", _ints, None, ("mc",), "restrict to these n"),
    Option("mc.approaches", "--approaches", _words, None, ("mc",), "restrict to these approaches"),
    Option("mc.time_budget", "--time-budget", float, None, ("mc",), "seconds per cell"),
    # oracle
    Option("oracle.set", "--set", str, None, ("oracle",), "population set", SET_KINDS),
    Option("oracle.curve", "--curve", str, None, ("oracle",), "tabulate a noise curve instead", CURVES),
    Option("oracle.gamma", "--gamma", _points, None, ("oracle",), "witness directions, ';'-separated"),
    Option("oracle.budget", "--budget", int, 1_000_000, ("oracle",), "Monte Carlo draws"),
    Option("oracle.n_gamma", "--n-gamma", int, 50, ("oracle",), "random directions when --gamma is absent"),
    Option("oracle.points", "--curve-points", int, 50, ("oracle",), "curve resolution"),
    Option("oracle.nodes", "--nodes", int, 128, ("oracle",), "Gauss-Legendre nodes"),
]
_BY_KEY = {o.key: o for o in OPTIONS}
_UNECHOED = ("threads", "out_dir", "format")


def _convert(opt: Option, value):
    if value is None:
        return None
    if isinstance(value, str):
        try:
            value = opt.conv(value)
        except ValueError:
            raise InvalidConfigError(f"{opt.key}: cannot parse {value!r}") from None
    if opt.choices and value not in opt.choices:
        raise InvalidConfigError(f"{opt.key} must be one of {list(opt.choices)}, got {value!r}")
    return value


def read_config_file(path, command) -> dict:
    """Flat ``key = value`` lines; unknown keys and keys of other subcommands are rejected."""
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise InvalidConfigError(f"malformed config {path}: {exc}") from None
    out = {}
    for key, raw in parser["run"].items():
        opt = _BY_KEY.get(key)
        if opt is None:
            raise InvalidConfigError(f"unknown config key {key!r}")
        if command not in opt.commands:
            raise InvalidConfigError(f"config key {key!r} does not apply to {command!r}")
        out[key] = _convert(opt, raw.strip())
    return out


def resolve_settings(command, args) -> dict:
    settings = {o.key: o.default for o in OPTIONS if command in o.commands}
    if args.config:
        settings.update(read_config_file(args.config, command))
    for key, value in vars(args).items():
        if key in settings and value is not None:
            settings[key] = _convert(_BY_KEY[key], value)
    if settings.get("clr.seed") is not None:
        if args.seed is not None and args.seed != settings["clr.seed"]:
            raise InvalidConfigError("--seed and clr.seed disagree")
        settings["seed"] = settings["clr.seed"]
    if "clr.seed" in settings:
        settings["clr.seed"] = settings["seed"]
    if settings["threads"] < 1:
        raise InvalidConfigError(f"threads must be positive, got {settings['threads']}")
    return settings


def echo(command, settings) -> dict:
    cfg = {k: v for k, v in settings.items() if k not in _UNECHOED}
    return {"version": __version__, "command": command, "settings": cfg}


# ---------------------------------------------------------------- output


def _csv_text(rows) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()


def _json_text(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _write(out_dir, name, text):
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / name, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise InvalidConfigError(f"cannot write {out_dir / name}: {exc.strerror}") from None


def emit(settings, name, payload, rows, table_text):
    """Print in the requested format; with ``out_dir`` also write ``name.json`` and ``name.csv``."""
    fmt = settings["format"]
    text = {"json": _json_text(payload), "csv": _csv_text(rows), "table": table_text.rstrip("\n") + "\n"}
    sys.stdout.write(text[fmt])
    if settings["out_dir"]:
        out = Path(settings["out_dir"])
        _write(out, f"{name}.json", text["json"])
        _write(out, f"{name}.csv", text["csv"])


def _table(rows) -> str:
    if not rows:
        return "(no rows)"
    cols = list(rows[0])
    cells = [[f"{r[c]:.6g}" if isinstance(r[c], float) else str(r[c]) for c in cols] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(cols)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(cols, widths))]
    lines += ["  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in cells]
    return "\n".join(lines)


# ---------------------------------------------------------------- commands


def _dgp(settings):
    name = settings["dgp"]
    if name == "section5":
        return Section5Dgp(settings["d"], settings["tau"])
    return AppendixADgp(int(name[-1]), settings["tau"], settings["slope_c"])


def cmd_simulate(settings):
    n = settings["n"]
    if n < 1:
        raise InvalidConfigError(f"n must be positive, got {n}")
    dgp = _dgp(settings)
    data = dgp.simulate(n, substream(settings["seed"], 0, DATA))
    text = dataset_to_csv(data, make_binary_model(0.5, dgp.d))
    sys.stdout.write(text if not settings["out_dir"] else f"wrote {n} rows to {settings['out_dir']}/dataset.csv\n")
    if settings["out_dir"]:
        out = Path(settings["out_dir"])
        _write(out, "dataset.csv", text)
        _write(out, "dataset.json", _json_text(echo("simulate", settings)))
    return 0


def _csv_header(path) -> list[str]:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            return [h.strip() for h in next(csv.reader(fh), [])]
    except OSError as exc:
        raise InvalidDataError(f"cannot read dataset {path}: {exc.strerror}") from None


def _require(settings, *keys):
    for k in keys:
        if settings.get(k) is None:
            raise InvalidConfigError(f"{_BY_KEY[k].flag} (config key {k!r}) is required")


def build_model(settings):
    kind, bound = settings["model"], settings["bound"]
    if kind in ("binary", "ordered"):
        _require(settings, "data")
        p = sum(1 for h in _csv_header(settings["data"]) if h.startswith("x"))
        if p < 1:
            raise InvalidDataError(f"{settings['data']}: no covariate columns x1..xd in the header")
        if kind == "binary":
            return make_binary_model(settings["tau"], p, bound)
        _require(settings, "K")
        return MODEL_FACTORIES[kind](K=settings["K"], q_dim=p, tau=settings["tau"], bound=bound)
    if kind == "multinomial":
        _require(settings, "K", "q")
        return MODEL_FACTORIES[kind](K=settings["K"], q=settings["q"], bound=bound)
    if kind == "panel_binary":
        _require(settings, "T", "q")
        return MODEL_FACTORIES[kind](T=settings["T"], q=settings["q"], bound=bound)
    _require(settings, "K", "T", "q")
    return MODEL_FACTORIES[kind](K=settings["K"], T=settings["T"], q=settings["q"], bound=bound)


def build_kernel(settings, model, n) -> KernelConfig:
    """Explicit settings win; otherwise the tabulated benchmark values for binary models."""
    approach = settings["approach"]
    base = None
    if model.kind == "binary" and model.n_covariates in BANDWIDTH_RP:
        base = default_kernel(approach, model.n_covariates, n)
    if settings["kernel.scale"] is None and base is None:
        raise InvalidConfigError("no tabulated bandwidth for this model; set --bandwidth-scale")
    pick = lambda key, fallback: settings[key] if settings[key] is not None else fallback  # noqa: E731
    return KernelConfig(
        scale=pick("kernel.scale", base.scale if base else None),
        rate=pick("kernel.rate", base.rate if base else 0.2),
        order_p=pick("kernel.order_p", base.order_p if base else 2),
        leave_one_out=settings["kernel.leave_one_out"],
    )


def _clr(settings) -> ClrConfig:
    return ClrConfig(settings["clr.alpha"], settings["clr.B"], settings["clr.grid_size"], settings["seed"])


def _resolved_echo(command, settings, model, kcfg, data):
    out = echo(command, settings)
    out["model"] = model.describe()
    out["kernel"] = kernel_echo(kcfg, settings["approach"])
    out["n"] = data.n
    return out


def cmd_test(settings):
    _require(settings, "data", "b")
    model = build_model(settings)
    b = model.param_space.validate(settings["b"])
    data = read_dataset(settings["data"], model)
    kcfg, ccfg = build_kernel(settings, model, data.n), _clr(settings)
    seed, approach = settings["seed"], settings["approach"]
    # same streams as entry 0 of a confidence-set run
    grid = build_eval_grid(data, model, ccfg.grid_size, substream(seed, 0, GRID), approach)
    out = clr_test(data, model, b, grid, kcfg, ccfg, substream(seed, 0, MULT, 0), approach=approach)
    row = {
        "statistic": out.statistic,
        "critical_value": out.critical_value,
        "contact_set_size": len(out.contact_set),
        "dropped_points": out.dropped_points,
        "decision": "reject" if out.reject else "accept",
    }
    payload = {"config": _resolved_echo("test", settings, model, kcfg, data), "b": b.tolist(), "outcome": out.to_dict()}
    table = "\n".join(f"{k:>17}: {v:.6g}" if isinstance(v, float) else f"{k:>17}: {v}" for k, v in row.items())
    emit(settings, "test", payload, [row], table)
    return 0


def cmd_confset(settings):
    _require(settings, "data")
    model = build_model(settings)
    if settings["grid.points"] is not None and settings["grid.lattice"] is not None:
        raise InvalidConfigError("give either --points or --lattice, not both")
    if settings["grid.points"] is not None:
        spec = {"points": settings["grid.points"]}
    elif settings["grid.lattice"] is not None:
        spec = {"lattice": settings["grid.lattice"]}
    else:
        raise InvalidConfigError("a parameter grid is required (--points or --lattice)")
    data = read_dataset(settings["data"], model)
    kcfg = build_kernel(settings, model, data.n)
    cs = invert(
        data, model, build_param_grid(model.param_space, spec), kcfg, _clr(settings), settings["approach"], settings["threads"]
    )
    payload = cs.to_dict()
    payload["config"] = {**_resolved_echo("confset", settings, model, kcfg, data), "inversion": cs.config}
    rows = cs.rows()
    emit(settings, "confset", payload, rows, _table(rows) + f"\n\naccepted {int(cs.accepted.sum())} of {len(rows)}")
    return 0


def cmd_mc(settings):
    overrides = {
        "reps": settings["mc.reps"],
        "B": settings["clr.B"],
        "grid_size": settings["clr.grid_size"],
        "alpha": settings["clr.alpha"],
        "d": settings["mc.d"],
        "n": settings["mc.n"],
        "approaches": settings["mc.approaches"],
        "time_budget": settings["mc.time_budget"],
    }
    preset = settings["mc.preset"]
    if preset.endswith("-fullscale"):
        # the full scale is its own default; only explicit overrides apply
        for k, opt in (("B", "clr.B"), ("grid_size", "clr.grid_size")):
            if settings[opt] == _BY_KEY[opt].default:
                overrides[k] = None
    for a in overrides["approaches"] or ():
        if a not in APPROACHES:
            raise InvalidConfigError(f"unknown approach {a!r}")
    cells = preset_cells(preset, settings["seed"], overrides)
    report = run_table(cells, settings["threads"], echo("mc", settings))
    timing = "\n".join(
        f"{r.cell.approach:<8} d={r.cell.d:<3} n={r.cell.n:<5} b2={r.cell.b2:<5g} {r.wall_time:8.1f}s"
        for r in report.results
    )
    table = report.table() + ("\n\nwall time\n" + timing if timing else "")
    emit(settings, "report", report.to_dict(), report.rows(), table)
    # the report is complete either way; the exit code flags truncated cells
    if any(r.status == STATUS_TIMEOUT for r in report.results):
        return CellTimeoutError.exit_code
    return 0


def cmd_oracle(settings):
    curve, kind = settings["oracle.curve"], settings["oracle.set"]
    if (curve is None) == (kind is None):
        raise InvalidConfigError("give exactly one of --set or --curve")
    if curve is not None:
        tau, c, m = settings["tau"], settings["slope_c"], settings["oracle.points"]
        if m < 2:
            raise InvalidConfigError("--curve-points must be at least 2")
        if curve == "cond_prob":
            rows = [
                {"s": float(s), "prob": appendixA_cond_prob(s, tau, c, settings["oracle.nodes"])}
                for s in np.linspace(0.0, 1.0, m)
            ]
        else:
            ts = np.linspace(-3.0, 3.0, m)
            rows = [{"t": float(t), "F": float(f)} for t, f in zip(ts, appendixA_Fxi(ts, tau, c))]
        emit(settings, "curve", {"config": echo("oracle", settings), "rows": rows}, rows, _table(rows))
        return 0
    _require(settings, "b")
    dgp = _dgp(settings)
    b = np.asarray(settings["b"], dtype=float)
    if b.shape != (dgp.d,):
        raise InvalidConfigError(f"b must have {dgp.d} coordinates for this design, got {b.size}")
    gammas = settings["oracle.gamma"]
    if gammas is not None and any(len(g) != dgp.d for g in gammas):
        raise InvalidConfigError(f"every --gamma direction needs {dgp.d} coordinates")
    res = membership_theta_mc(
        b,
        kind,
        budget=settings["oracle.budget"],
        rng=substream(settings["seed"], 0, ORACLE),
        dgp=dgp,
        gammas=gammas,
        n_gamma=settings["oracle.n_gamma"],
    )
    row = {
        "set": kind,
        "verdict": res.label(),
        "violation": res.violation,
        "margin": res.margin,
        "budget": res.budget,
        "populated_bins": res.populated_bins,
    }
    emit(settings, "oracle", {"config": echo("oracle", settings), "b": b.tolist(), "result": row}, [row], res.label())
    return 0


HANDLERS = {"simulate": cmd_simulate, "test": cmd_test, "confset": cmd_confset, "mc": cmd_mc, "oracle": cmd_oracle}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="indexclr", description="Index-based CLR set inference for discrete choice models")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "draw a dataset from a benchmark design",
        "test": "test one parameter value",
        "confset": "invert the test over a parameter grid",
        "mc": "simulated rejection frequencies",
        "oracle": "population set membership and noise curves",
    }
    for cmd in COMMANDS:
        p = sub.add_parser(cmd, help=helps[cmd])
        p.add_argument("--config", help="flat key = value settings file")
        for opt in OPTIONS:
            if cmd not in opt.commands:
                continue
            kw = {"dest": opt.key, "default": None, "help": opt.help}
            if opt.choices:
                kw["choices"] = opt.choices
            if opt.conv in (int, float):
                kw["type"] = opt.conv
            p.add_argument(opt.flag, **kw)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = resolve_settings(args.command, args)
        return HANDLERS[args.command](settings)
    except IndexClrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
