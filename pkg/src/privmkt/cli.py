"""Command-line front end: ``privmkt {solve,sweep,trace,verify}``.

Settings are merged in order: ``--preset``, then ``--config`` (a flat JSON
object), then ``--set name=value`` overrides, then ``--axis``. Recognised
keys:

  market     c, lam, r, t, eps_bar, p (list or "0.4,0.8"), p1..pm
  tolerance  dist ("uniform" | "truncnorm"), sigma
  solver     eps_tol, max_iters, br_grid, br_refine_tol, cycle_window,
             gap_min, initial_eps (rule name or list), damping, stop_on_cycle
  oracle     cert_eps_points, cert_v_points, cert_tol
  sweep      axes: {"name": "start:stop:steps" | [values]}
  misc       seed (recorded in the output; no command draws random numbers)

Units: risks, QoS and profits are in the model's revenue units; shares are
fractions of the consumer population.

Sweep CSV columns, in order: the swept parameter names, eps_1..eps_m,
v_1..v_m, n_1..n_m (shares), pi_1..pi_m, method, converged, feasible,
error. Trace CSV columns: iteration, sp, eps, v, profit, followed by a
footer line ``#status=<Converged|Oscillating|MaxIters>;iterations=N;
cycle_length=K``. Floats in CSV carry 17 significant digits.

Exit codes: 0 ok, 1 input or solver error, 2 closed-form conditions
violated (result still reported), 3 certification failed.
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from . import oracle
from .market import DegenerateDifferentiation, MarketParams, RiskDistribution, StrategyProfile
from .numeric import SolverConfig, iterate_best_response, solve_spne

log = logging.getLogger("privmkt")

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE, EXIT_NOT_CERTIFIED = 0, 1, 2, 3

MARKET_KEYS = ("c", "lam", "r", "t", "eps_bar")
DIST_KEYS = ("dist", "sigma")
SOLVER_KEYS = tuple(f.name for f in fields(SolverConfig))
ORACLE_KEYS = ("cert_eps_points", "cert_v_points", "cert_tol")
MISC_KEYS = ("p", "axes", "seed")

CONDITION_NAMES = {
    "share": "share condition (|ratio| < 1)",
    "eps": "risk-range condition (ratio inside the eps band)",
    "coverage": "full-coverage condition",
}

TABLE1 = {"c": 0.5, "lam": 0.75, "r": 0.7, "p": [0.4, 0.8]}


def _three_sp(p2):
    return {"c": 0.5, "lam": 0.75, "r": 0.7, "t": 0.7, "eps_bar": 5.0,
            "p": [0.4, p2, 0.8], "initial_eps": "spread", "max_iters": 100,
            "stop_on_cycle": False}


PRESETS = {
    "table1": TABLE1,
    "three-sp-p2-0.75": _three_sp(0.75),
    "three-sp-p2-0.6": _three_sp(0.6),
    "three-sp-p2-0.45": _three_sp(0.45),
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    values: dict = field(default_factory=dict)
    out: str = None
    fmt: str = None
    certify: bool = False
    profile_path: str = None

    def _is_p_index(self, key):
        return key[0] == "p" and key[1:].isdigit()

    def validate_keys(self):
        known = set(MARKET_KEYS + DIST_KEYS + SOLVER_KEYS + ORACLE_KEYS + MISC_KEYS)
        for key in self.values:
            if key not in known and not self._is_p_index(key):
                raise ConfigError(f"unknown setting {key!r}")

    def revenues(self, values=None):
        values = self.values if values is None else values
        p = values.get("p")
        if p is None:
            raise ConfigError("missing setting 'p' (revenue per SP)")
        p = list(_as_list(p))
        for key, val in values.items():
            if self._is_p_index(key):
                k = int(key[1:])
                if not 1 <= k <= len(p):
                    raise ConfigError(f"{key} out of range for {len(p)} SPs")
                p[k - 1] = float(val)
        return tuple(float(x) for x in p)

    def market(self, values=None) -> MarketParams:
        values = self.values if values is None else values
        missing = [k for k in MARKET_KEYS if k not in values]
        if missing:
            raise ConfigError(f"missing setting(s): {', '.join(missing)}")
        kw = {k: float(values[k]) for k in MARKET_KEYS}
        return MarketParams(p=self.revenues(values), **kw)

    def distribution(self, params: MarketParams, values=None) -> RiskDistribution:
        values = self.values if values is None else values
        kind = values.get("dist", "uniform")
        if kind == "uniform":
            return RiskDistribution.uniform(params.eps_bar)
        if kind in ("truncnorm", "truncated_normal"):
            return RiskDistribution.truncated_normal(params.eps_bar, float(values.get("sigma", 1.0)))
        raise ConfigError(f"unknown distribution {kind!r}")

    def solver(self) -> SolverConfig:
        kw = {k: self.values[k] for k in SOLVER_KEYS if k in self.values}
        for k in ("max_iters", "br_grid", "cycle_window"):
            if k in kw:
                kw[k] = int(kw[k])
        if "stop_on_cycle" in kw:
            kw["stop_on_cycle"] = _as_bool(kw["stop_on_cycle"])
        if isinstance(kw.get("initial_eps"), str) and "," in kw["initial_eps"]:
            kw["initial_eps"] = _as_list(kw["initial_eps"])
        return SolverConfig(**kw)

    def cert_grid(self):
        return (int(self.values.get("cert_eps_points", oracle.DEFAULT_GRID[0])),
                int(self.values.get("cert_v_points", oracle.DEFAULT_GRID[1])))

    def cert_tol(self):
        return float(self.values.get("cert_tol", oracle.DEFAULT_TOL))

    def axes(self):
        raw = self.values.get("axes") or {}
        if not isinstance(raw, dict):
            raise ConfigError("axes must map parameter names to ranges")
        out = []
        for name, spec in raw.items():
            if name not in MARKET_KEYS + ("sigma",) and not self._is_p_index(name):
                raise ConfigError(f"cannot sweep {name!r}")
            values = _axis_values(spec)
            if len(values) < 2:
                raise ConfigError(f"axis {name!r} needs at least 2 steps")
            out.append((name, values))
        return out


def _as_bool(x):
    if isinstance(x, str):
        return x.strip().lower() in ("1", "true", "yes", "on")
    return bool(x)


def _as_list(x):
    if isinstance(x, str):
        return [float(s) for s in x.split(",") if s.strip()]
    return [float(s) for s in x]


def _axis_values(spec):
    if isinstance(spec, str) and ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ConfigError(f"axis range must be start:stop:steps, got {spec!r}")
        start, stop, steps = float(parts[0]), float(parts[1]), int(parts[2])
        return [float(x) for x in np.linspace(start, stop, steps)]
    return _as_list(spec)


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def fmt_float(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x) + 0.0, ".17g")  # + 0.0 folds -0.0 into 0


def _write(text: str, out):
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _csv_text(header, rows, footer=None):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt_float(x) if not isinstance(x, str) else x for x in row])
    if footer:
        buf.write(footer + "\n")
    return buf.getvalue()


def _json_text(obj):
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def _workers(n_tasks):
    cap = os.environ.get("PRIVMKT_THREADS")
    limit = os.cpu_count() or 1
    if cap:
        try:
            limit = max(1, int(cap))
        except ValueError:
            raise ConfigError(f"PRIVMKT_THREADS must be an integer, got {cap!r}")
    return max(1, min(limit, n_tasks))


# ---------------------------------------------------------------- solve

def sweep_header(axis_names, m):
    cols = list(axis_names)
    for prefix in ("eps", "v", "n", "pi"):
        cols += [f"{prefix}_{i}" for i in range(1, m + 1)]
    return cols + ["method", "converged", "feasible", "error"]


def _outcome_row(outcome, m):
    feas = outcome.feasibility
    feasible = feas.all_feasible if feas is not None else (not outcome.warnings)
    return (list(outcome.eps) + list(outcome.v) + list(outcome.shares) + list(outcome.profits)
            + [outcome.method, outcome.converged, feasible])


def _infeasible_message(outcome):
    names = outcome.feasibility.failed() if outcome.feasibility is not None else []
    if not names:
        return None
    return "closed-form conditions violated: " + "; ".join(CONDITION_NAMES[n] for n in names)


def cmd_solve(cfg: RunConfig) -> int:
    params = cfg.market()
    dist = cfg.distribution(params)
    outcome = solve_spne(params, dist, cfg.solver())
    code = EXIT_OK
    cert = None
    if cfg.certify:
        cert = oracle.certify(params, dist, outcome.profile, cfg.cert_grid(), cfg.cert_tol())
        if not cert.certified:
            code = EXIT_NOT_CERTIFIED
    warning = _infeasible_message(outcome)
    if warning:
        print(f"warning: {warning}", file=sys.stderr)
        if code == EXIT_OK:
            code = EXIT_INFEASIBLE

    if (cfg.fmt or "json") == "csv":
        text = _csv_text(sweep_header([], params.m), [_outcome_row(outcome, params.m) + [""]])
    else:
        report = {
            "command": "solve",
            "params": _params_dict(params),
            "dist": _dist_dict(dist),
            "seed": cfg.values.get("seed"),
            "outcome": outcome.to_dict(),
        }
        if cert is not None:
            report["certificate"] = cert.to_dict()
        text = _json_text(report)
    _write(text, cfg.out)
    return code


def _params_dict(params):
    return {"c": params.c, "lam": params.lam, "r": params.r, "t": params.t,
            "eps_bar": params.eps_bar, "p": list(params.p)}


def _dist_dict(dist):
    return {"kind": dist.kind, "eps_bar": dist.eps_bar, "sigma": dist.sigma}


# ---------------------------------------------------------------- sweep

def _sweep_point(cfg, point, solver, m):
    values = dict(cfg.values)
    values.update(point)
    try:
        params = cfg.market(values)
        dist = cfg.distribution(params, values)
        outcome = solve_spne(params, dist, solver)
        error = ""
        if cfg.certify:
            cert = oracle.certify(params, dist, outcome.profile, cfg.cert_grid(), cfg.cert_tol())
            if not cert.certified:
                error = f"not certified: deviation {max(cert.max_deviation):.3g}"
        return _outcome_row(outcome, m) + [error]
    except Exception as exc:  # row-level failure, the sweep goes on
        return [float("nan")] * (4 * m) + ["", "", "", f"{type(exc).__name__}: {exc}"]


def sweep_rows(cfg: RunConfig):
    axes = cfg.axes()
    if not 1 <= len(axes) <= 2:
        raise ConfigError("sweep needs 1 or 2 axes")
    m = len(cfg.revenues())
    solver = cfg.solver()
    names = [a[0] for a in axes]
    points = [dict(zip(names, combo)) for combo in itertools.product(*(a[1] for a in axes))]
    with ThreadPoolExecutor(max_workers=_workers(len(points))) as pool:
        results = list(pool.map(lambda pt: _sweep_point(cfg, pt, solver, m), points))
    rows = [[pt[n] for n in names] + res for pt, res in zip(points, results)]
    return sweep_header(names, m), rows


def cmd_sweep(cfg: RunConfig) -> int:
    header, rows = sweep_rows(cfg)
    if (cfg.fmt or "csv") == "json":
        text = _json_text([dict(zip(header, [_json_cell(x) for x in row])) for row in rows])
    else:
        text = _csv_text(header, rows)
    _write(text, cfg.out)
    # per-point failures are reported in the error column, not the exit code
    return EXIT_OK


def _json_cell(x):
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (float, np.floating)):
        return None if np.isnan(x) else float(x)
    return x


# ---------------------------------------------------------------- trace

TRACE_HEADER = ["iteration", "sp", "eps", "v", "profit"]


def trace_rows(trace):
    rows = []
    for it, (eps, v, prof) in enumerate(zip(trace.eps, trace.v, trace.profits), start=1):
        for i in range(len(eps)):
            rows.append([it, i + 1, float(eps[i]), float(v[i]), float(prof[i])])
    return rows


def cmd_trace(cfg: RunConfig) -> int:
    params = cfg.market()
    if params.m < 2:
        raise ConfigError("trace needs at least 2 SPs")
    dist = cfg.distribution(params)
    _, trace = iterate_best_response(params, dist, cfg.solver())
    rows = trace_rows(trace)
    cycle = "" if trace.cycle_length is None else str(trace.cycle_length)
    if (cfg.fmt or "csv") == "json":
        text = _json_text({
            "rows": [dict(zip(TRACE_HEADER, r)) for r in rows],
            "status": trace.termination,
            "iterations": len(trace),
            "cycle_length": trace.cycle_length,
        })
    else:
        footer = f"#status={trace.termination};iterations={len(trace)};cycle_length={cycle}"
        text = _csv_text(TRACE_HEADER, rows, footer)
    _write(text, cfg.out)
    return EXIT_OK


# ---------------------------------------------------------------- verify

def read_profile(path) -> StrategyProfile:
    """Profile from a JSON file: top-level ``eps``/``v`` or a ``solve`` report."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if "outcome" in data:
        data = data["outcome"]
    try:
        return StrategyProfile.from_arrays(data["eps"], data["v"])
    except KeyError as exc:
        raise ConfigError(f"profile file lacks {exc}")


def cmd_verify(cfg: RunConfig) -> int:
    params = cfg.market()
    dist = cfg.distribution(params)
    if cfg.profile_path:
        profile = read_profile(cfg.profile_path)
        if len(profile) != params.m:
            raise ConfigError(f"profile has {len(profile)} SPs, market has {params.m}")
    else:
        profile = solve_spne(params, dist, cfg.solver()).profile
    cert = oracle.certify(params, dist, profile, cfg.cert_grid(), cfg.cert_tol())
    _write(_json_text({"command": "verify", "params": _params_dict(params),
                       "dist": _dist_dict(dist), "certificate": cert.to_dict()}), cfg.out)
    return EXIT_OK if cert.certified else EXIT_NOT_CERTIFIED


COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "trace": cmd_trace, "verify": cmd_verify}


# ---------------------------------------------------------------- entry

def build_parser():
    ap = argparse.ArgumentParser(prog="privmkt", description=__doc__.split("\n")[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--preset", choices=sorted(PRESETS))
    ap.add_argument("--config", metavar="PATH", help="flat JSON object of settings")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="NAME=VALUE")
    ap.add_argument("--axis", action="append", default=[], metavar="NAME=SPEC",
                    help="sweep axis: start:stop:steps or a comma list")
    ap.add_argument("--profile", metavar="PATH", help="verify: JSON with eps and v")
    ap.add_argument("--out", metavar="PATH")
    ap.add_argument("--format", dest="fmt", choices=("csv", "json"))
    ap.add_argument("--certify", action="store_true")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    return ap


def _split_assign(text, flag):
    if "=" not in text:
        raise ConfigError(f"{flag} expects NAME=VALUE, got {text!r}")
    name, value = text.split("=", 1)
    return name.strip(), value.strip()


def config_from_args(args) -> RunConfig:
    values = {}
    if args.preset:
        values.update(json.loads(json.dumps(PRESETS[args.preset])))
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}")
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        values.update(loaded)
    for item in args.overrides:
        name, value = _split_assign(item, "--set")
        values[name] = _parse_value(value)
    if args.axis:
        axes = dict(values.get("axes") or {})
        for item in args.axis:
            name, value = _split_assign(item, "--axis")
            axes[name] = value
        values["axes"] = axes
    cfg = RunConfig(args.command, values, args.out, args.fmt, args.certify, args.profile)
    cfg.validate_keys()
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.ERROR - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        return COMMANDS[cfg.command](cfg)
    except (ConfigError, DegenerateDifferentiation, ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
