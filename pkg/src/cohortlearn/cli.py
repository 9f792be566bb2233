"""Command-line front end: ``cohortlearn <simulate|estimate|test|critvals|study|theory>``.

Exit codes: 0 success, 1 numeric or estimation failure, 2 input or format error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import re
import secrets
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (ConfigError, DomainError, IdentificationError, NumericError,
                     PanelFormatError)
from .estimator import SearchConfig, Theta, estimate
from .inference import (DEFAULT_LEVELS, WaldSpec, gp_critical_values, supf_test, t_test, wald,
                        write_critical_values_csv)
from .learning import GainFamily, Plm, PlmConfig, Timing
from .montecarlo import StudyConfig, run_study, write_summary_csv
from .panel import DgpConfig, Scenario, load_panel_csv, simulate_dgp, write_panel_csv
from .theory import LimitParams, ar1_long_run_variance, hessian_c, phi, upsilon

EXIT_OK, EXIT_NUMERIC, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    """Bad flags, paths or config values (exit code 2)."""


# --------------------------------------------------------------------------
# helpers


def _status(msg: str) -> None:
    if sys.stderr.isatty() and "NO_COLOR" not in os.environ:
        msg = f"\x1b[32m{msg}\x1b[0m"
    print(msg, file=sys.stderr)


def _resolve_seed(args) -> int:
    if getattr(args, "seed", None) is None:
        args.seed = secrets.randbits(32)
        args.seed_source = "os"
    else:
        args.seed_source = "flag"
    return args.seed


def _jsonable(v):
    if isinstance(v, Path):
        return str(v)
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if hasattr(v, "value") and not isinstance(v, (int, str)):
        return v.value
    return v


def resolved_config(args) -> dict:
    return {k: _jsonable(v) for k, v in sorted(vars(args).items()) if k not in ("func", "config")}


def _emit_json(obj: dict, path) -> None:
    text = json.dumps(_jsonable(obj), indent=2) + "\n"
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        _write_text(Path(path), text)


def _write_text(path: Path, text: str) -> None:
    if not path.parent.exists():
        raise InputError(f"output directory does not exist: {path.parent}")
    path.write_text(text, encoding="utf-8")


def _read_config_file(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON: {exc}")
        if not isinstance(data, dict):
            raise InputError(f"{path}: top level must be an object")
        return {k.replace("-", "_"): v for k, v in data.items()}
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected key=value")
        key, value = (p.strip() for p in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _plm_from_args(args) -> PlmConfig:
    return PlmConfig(Plm(args.plm), GainFamily(args.gain), Timing(args.timing))


def _search_from_args(args) -> SearchConfig:
    return SearchConfig(gamma_lower=args.gamma_lower, gamma_upper=args.gamma_upper,
                        grid_points=args.grid_points)


def _load_panel(args):
    for p in (args.panel, args.macro):
        if not Path(p).is_file():
            raise InputError(f"input file not found: {p}")
    return load_panel_csv(args.panel, args.macro)


def parse_grid(text: str, default_points: int = 500) -> np.ndarray:
    """``lo:hi`` or ``lo:hi:N``; ``a:a`` is the single point ``a``."""
    parts = text.split(":")
    if len(parts) not in (2, 3):
        raise InputError(f"grid must be lo:hi or lo:hi:N, got {text!r}")
    try:
        lo, hi = (_parse_number(p) for p in parts[:2])
        pts = int(parts[2]) if len(parts) == 3 else default_points
    except ValueError:
        raise InputError(f"cannot parse grid {text!r}")
    if lo == hi:
        return np.array([lo])
    if hi < lo or pts < 2:
        raise InputError(f"invalid grid {text!r}")
    return np.linspace(lo, hi, pts)


def _parse_number(s: str) -> float:
    s = s.strip()
    if "/" in s:
        a, b = s.split("/", 1)
        return float(a) / float(b)
    return float(s)


_NULL_RE = re.compile(r"^\s*(beta|gamma)\s*(<=|>=|=)\s*([-+0-9.eE/]+)\s*$")


def parse_null(text: str):
    """Parse ``beta=0``, ``gamma<=1`` or ``beta=0.6,gamma=3`` into ``[(name, op, value)]``."""
    out = []
    for piece in text.split(","):
        m = _NULL_RE.match(piece)
        if not m:
            raise InputError(f"cannot parse null hypothesis {piece!r}")
        try:
            out.append((m.group(1), m.group(2), _parse_number(m.group(3))))
        except ValueError:
            raise InputError(f"cannot parse value in {piece!r}")
    names = [n for n, _, _ in out]
    if len(set(names)) != len(names):
        raise InputError("each parameter may appear at most once in --null")
    return out


# --------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    seed = _resolve_seed(args)
    out = Path(args.output)
    if not out.is_dir():
        raise InputError(f"output directory does not exist: {out}")
    cfg = DgpConfig(
        scenario=Scenario(args.scenario), k=args.k, beta0=args.beta, gamma0=args.gamma,
        mu_y=args.mu_y, phi_y=args.phi_y, mu_x=args.mu_x, phi_x=args.phi_x,
        family=GainFamily(args.gain), plm=Plm(args.plm), timing=Timing(args.timing),
        noise_scale=args.noise, seed=seed, n=args.n, u=args.u, l=args.l,
    )
    t0 = time.perf_counter()
    panel = simulate_dgp(cfg, replication=args.replication)
    panel_path, macro_path = out / f"{args.prefix}panel.csv", out / f"{args.prefix}macro.csv"
    write_panel_csv(panel, panel_path, macro_path)
    sidecar = {
        "command": "simulate",
        "version": __version__,
        "seed": seed,
        "config": resolved_config(args),
        "dgp": cfg.to_dict(),
        "files": {"panel": panel_path.name, "macro": macro_path.name},
        "shape": {"n": panel.n, "l": panel.l, "u": panel.u, "rows": panel.z.shape[0], "ages": panel.m},
    }
    _write_text(out / f"{args.prefix}panel.json", json.dumps(_jsonable(sidecar), indent=2) + "\n")
    _status(f"wrote {panel_path} and {macro_path} ({time.perf_counter() - t0:.2f}s)")
    return EXIT_OK


def cmd_estimate(args) -> int:
    panel = _load_panel(args)
    plm = _plm_from_args(args)
    fit = estimate(panel, plm, _search_from_args(args))
    _emit_json({"command": "estimate", "version": __version__, "config": resolved_config(args),
                "fit": fit.to_dict()}, args.output)
    return EXIT_OK


def cmd_test(args) -> int:
    nulls = parse_null(args.null)
    panel = _load_panel(args)
    plm = _plm_from_args(args)
    result: dict = {"command": "test", "version": __version__, "null": args.null}
    if any(n == "beta" and v == 0 for n, _, v in nulls):
        if len(nulls) != 1 or nulls[0][1] != "=":
            raise InputError("beta = 0 can only be tested on its own, as an equality, by the supF test")
        seed = _resolve_seed(args)
        grid = np.linspace(args.gamma_lower, args.gamma_upper, args.supf_grid_points)
        crit = None
        if args.critvals:
            crit = gp_critical_values(grid, args.draws, DEFAULT_LEVELS, seed)
        res = supf_test(panel, plm, grid, B=args.B, seed=seed, crit=crit)
        result["test"] = "supF"
        result.update(res.to_dict())
        result["p_value"] = res.p_boot
    else:
        fit = estimate(panel, plm, _search_from_args(args))
        result["fit"] = fit.to_dict()
        if len(nulls) == 1:
            name, op, value = nulls[0]
            alt = args.alternative
            implied = {"<=": "greater", ">=": "less", "=": None}[op]
            if implied is not None:
                if alt not in (None, implied):
                    raise InputError(f"--alternative {alt} contradicts the null {args.null!r}")
                alt = implied
            alt = alt or "two-sided"
            res = t_test(fit, name, value, alt)
            result.update(res.to_dict())
            if op == "=":
                result["wald"] = wald(fit, WaldSpec.single(name, value)).to_dict()
        else:
            if any(op != "=" for _, op, _ in nulls):
                raise InputError("joint hypotheses must be equalities")
            vals = dict((n, v) for n, _, v in nulls)
            res = wald(fit, WaldSpec(np.eye(2), np.array([vals["beta"], vals["gamma"]])))
            result.update(res.to_dict())
    result["config"] = resolved_config(args)
    _emit_json(result, args.output)
    return EXIT_OK


def cmd_critvals(args) -> int:
    seed = _resolve_seed(args)
    grid = parse_grid(args.grid, args.points)
    levels = tuple(_parse_number(v) for v in args.levels.split(","))
    if any(not 0 < a < 1 for a in levels):
        raise InputError("levels must lie in (0, 1)")
    t0 = time.perf_counter()
    crit = gp_critical_values(grid, args.draws, levels, seed)
    elapsed = time.perf_counter() - t0
    sidecar = {"command": "critvals", "version": __version__, "seed": seed, "config": resolved_config(args),
               "grid": {"lower": float(grid[0]), "upper": float(grid[-1]), "points": int(grid.size)},
               "critical_values": {repr(k): v for k, v in crit.items()}, "seconds": elapsed}
    if args.output in (None, "-"):
        sys.stdout.write("level,value\n")
        for level in sorted(crit):
            sys.stdout.write(f"{level!r},{crit[level]!r}\n")
        print(json.dumps(_jsonable(sidecar)), file=sys.stderr)
    else:
        out = Path(args.output)
        if not out.parent.exists():
            raise InputError(f"output directory does not exist: {out.parent}")
        write_critical_values_csv(crit, out)
        _write_text(out.with_suffix(".json"), json.dumps(_jsonable(sidecar), indent=2) + "\n")
    return EXIT_OK


def cmd_study(args) -> int:
    seed = _resolve_seed(args)
    dgp = DgpConfig(
        beta0=args.beta, gamma0=args.gamma, mu_y=args.mu_y, phi_y=args.phi_y, mu_x=args.mu_x,
        phi_x=args.phi_x, family=GainFamily(args.gain), plm=Plm(args.plm), timing=Timing(args.timing),
        noise_scale=args.noise, l=args.l,
    )
    tests = tuple(t.strip() for t in args.tests.split(","))
    cfg = StudyConfig(dgp=dgp, replications=args.reps, k_values=tuple(_int_list(args.k)),
                      scenarios=tuple(s.strip() for s in args.scenario.split(",")), tests=tests,
                      B=args.B, level=args.level, seed=seed, grid_points=args.supf_grid_points,
                      search=_search_from_args(args))
    out = Path(args.output)
    if not out.parent.exists():
        raise InputError(f"output directory does not exist: {out.parent}")
    t0 = time.perf_counter()
    summary = run_study(cfg, workers=args.threads)
    write_summary_csv(summary, out)
    payload = summary.to_dict(records=args.records)
    payload.update(command="study", version=__version__, seed=seed, cli=resolved_config(args),
                   seconds=time.perf_counter() - t0, warnings=summary.warnings)
    json_path = Path(args.json) if args.json else out.with_suffix(".json")
    _write_text(json_path, json.dumps(_jsonable(payload), indent=2) + "\n")
    for w in summary.warnings:
        print(f"warning: {w}", file=sys.stderr)
    _status(f"wrote {out} and {json_path}")
    return EXIT_OK


def _int_list(text) -> list:
    try:
        return [int(v) for v in str(text).split(",")]
    except ValueError:
        raise InputError(f"expected comma-separated integers, got {text!r}")


def cmd_theory(args) -> int:
    g, b = args.gamma, args.beta
    out = {"command": "theory", "version": __version__, "gamma": g, "beta": b,
           "phi": phi(g, g), "upsilon": {str(k): upsilon(k, g, g) for k in range(0, args.max_k + 1)}}
    omega2 = args.omega2 if args.omega2 is not None else ar1_long_run_variance(args.phi_y)
    lim = LimitParams.plug_in(args.n, args.u, args.l, omega2)
    out["limit"] = {"omega2": lim.omega2, "lambda2": lim.lambda2}
    try:
        out["hessian_c"] = hessian_c(Theta(b, g), lim).tolist()
    except IdentificationError as exc:
        out["hessian_c"] = None
        out["note"] = str(exc)
    out["config"] = resolved_config(args)
    _emit_json(out, args.output)
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def _model_opts(p, default_plm="regression"):
    p.add_argument("--plm", choices=[e.value for e in Plm], default=default_plm)
    p.add_argument("--gain", choices=[e.value for e in GainFamily], default=GainFamily.BASELINE.value)
    p.add_argument("--timing", choices=[e.value for e in Timing], default=Timing.ONE_STEP.value)


def _search_opts(p):
    p.add_argument("--gamma-lower", type=float, default=SearchConfig.gamma_lower)
    p.add_argument("--gamma-upper", type=float, default=SearchConfig.gamma_upper)
    p.add_argument("--grid-points", type=int, default=SearchConfig.grid_points,
                   help="coarse grid size for the gain search")


def _dgp_opts(p):
    p.add_argument("--beta", type=float, default=0.6)
    p.add_argument("--gamma", type=float, default=3.0)
    p.add_argument("--mu-y", type=float, default=0.0)
    p.add_argument("--phi-y", type=float, default=0.5)
    p.add_argument("--mu-x", type=float, default=0.0)
    p.add_argument("--phi-x", type=float, default=0.5)
    p.add_argument("--noise", type=float, default=1.0, help="scale of the survey noise")
    p.add_argument("--l", type=int, default=25, help="youngest age observed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cohortlearn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="key=value or JSON file; flags override its values")
        p.set_defaults(func=func)
        return p

    p = add("simulate", cmd_simulate, "simulate a cohort panel")
    p.add_argument("--scenario", choices=[s.value for s in Scenario], default="S1")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--u", type=int, default=None)
    p.add_argument("--replication", type=int, default=0)
    p.add_argument("--prefix", default="")
    _dgp_opts(p)
    _model_opts(p)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("-o", "--output", required=True, help="existing output directory")

    for name, func, help_ in (("estimate", cmd_estimate, "estimate (beta, gamma)"),
                              ("test", cmd_test, "Wald, t or supF test")):
        p = add(name, func, help_)
        p.add_argument("--panel", required=True)
        p.add_argument("--macro", required=True)
        _model_opts(p)
        _search_opts(p)
        p.add_argument("-o", "--output", default=None, help="JSON output file (default stdout)")
        if name == "test":
            p.add_argument("--null", required=True, help="e.g. beta=0, gamma<=1, beta=0.6,gamma=3")
            p.add_argument("--alternative", choices=["two-sided", "greater", "less"], default=None)
            p.add_argument("--B", type=int, default=100, help="bootstrap draws for supF")
            p.add_argument("--supf-grid-points", type=int, default=200)
            p.add_argument("--critvals", action="store_true",
                           help="also tabulate simulated critical values on the supF grid")
            p.add_argument("--draws", type=int, default=10_000)
            p.add_argument("--seed", type=int, default=None)

    p = add("critvals", cmd_critvals, "tabulate supF critical values")
    p.add_argument("--grid", default="2/3:10", help="lo:hi or lo:hi:N")
    p.add_argument("--points", type=int, default=500)
    p.add_argument("--draws", type=int, default=10_000)
    p.add_argument("--levels", default="0.01,0.05,0.10")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("-o", "--output", default=None, help="CSV output file (default stdout)")

    p = add("study", cmd_study, "Monte Carlo study")
    p.add_argument("--scenario", default="S1", help="comma-separated, e.g. S1,S2,S3")
    p.add_argument("--k", default="2,3,4", help="comma-separated scale factors")
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--B", type=int, default=100)
    p.add_argument("--level", type=float, default=0.05)
    p.add_argument("--tests", default="t,supf")
    p.add_argument("--supf-grid-points", type=int, default=200)
    _dgp_opts(p)
    _model_opts(p)
    _search_opts(p)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--records", action="store_true", help="include per-replication records in the JSON")
    p.add_argument("--json", default=None, help="JSON summary path (default: CSV path with .json)")
    p.add_argument("-o", "--output", required=True, help="CSV output path")

    p = add("theory", cmd_theory, "tabulate limit quantities")
    p.add_argument("--gamma", type=float, default=3.0)
    p.add_argument("--beta", type=float, default=0.6)
    p.add_argument("--max-k", type=int, default=2)
    p.add_argument("--omega2", type=float, default=None)
    p.add_argument("--phi-y", type=float, default=0.5)
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--u", type=int, default=150)
    p.add_argument("--l", type=int, default=25)
    p.add_argument("-o", "--output", default=None)
    return parser


def _scan_config(argv):
    command = next((a for a in argv if not a.startswith("-")), None)
    for i, a in enumerate(argv):
        if a == "--config" and i + 1 < len(argv):
            return command, argv[i + 1]
        if a.startswith("--config="):
            return command, a.split("=", 1)[1]
    return command, None


def _apply_config_file(parser, argv):
    """Parse ``argv`` with config-file values as defaults, so explicit flags still win."""
    argv = list(sys.argv[1:] if argv is None else argv)
    command, path = _scan_config(argv)
    subparsers = parser._subparsers._group_actions[0].choices
    if path is None or command not in subparsers:
        return parser.parse_args(argv)
    values = _read_config_file(path)
    subparser = subparsers[command]
    known = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, raw in values.items():
        if key not in known or key in ("help", "config", "func"):
            raise InputError(f"{path}: unknown option {key!r} for {command}")
        action = known[key]
        if isinstance(action, argparse._StoreTrueAction):
            if isinstance(raw, str):
                raw = raw.strip().lower() in ("1", "true", "yes", "on")
        elif isinstance(raw, str) and action.type is not None:
            try:
                raw = action.type(raw)
            except (TypeError, ValueError):
                raise InputError(f"{path}: bad value for {key}: {raw!r}")
        if action.choices is not None and raw not in action.choices:
            raise InputError(f"{path}: {key} must be one of {sorted(action.choices)}")
        defaults[key] = raw
        action.required = False
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config_file(parser, argv)
        return args.func(args)
    except (InputError, PanelFormatError, ConfigError, DomainError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except IdentificationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
