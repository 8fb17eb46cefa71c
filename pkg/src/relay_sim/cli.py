"""Command-line front end.

Each subcommand takes a JSON config (``--config``) whose keys may be
overridden with flags or ``--set key=value``.  Tabular output is CSV with a
``#`` comment header carrying the config hash and seed; reports are JSON.

Exit codes: 0 pass, 1 usage or config error, 2 validation failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys

import numpy as np

from . import finite_range as fr
from . import heights as hmod
from .blockage import Scheme, sample_trajectories
from .experiments import ACCEPTANCE, REGISTRY, config_hash, run_experiment
from .landscape import Landscape, as_profile, generate_window
from .relay_tree import (
    build_forest,
    classify_eft,
    expected_building_count,
    expected_zone_length_given_angle,
    expected_zone_length_palm,
    is_strict,
    mc_zone_given_angle,
    zone_length_cdf,
)
from .streams import rep_rng
from .validation import ConfigError, ks_distance, mean_ci, to_json

EXIT_OK, EXIT_USAGE, EXIT_FAIL = 0, 1, 2

BASE = {"seed": 0, "lam": 1.0, "heights": {"kind": "exponential", "rate": 1.0}, "workers": None,
        "output": None, "report": None}

COMMANDS = {
    "trajectory": {"n_hops": 5, "n_reps": 1, "start_height": 0.0, "scheme": "infinite", "range": None},
    "density-check": {"experiment": "g1", "sabotage": False, "params": {}},
    "zone": {"beta": 2.0, "tan_theta": 1.0, "n_reps": 0, "scheme": "infinite", "grid": 21},
    "tree": {"window": 200.0, "margin": 20.0, "scheme": "infinite", "trunc_eps": 1e-12},
    "finite": {"range": "horizontal:2", "n_reps": 10_000, "direct_reps": 10_000, "start_height": 0.0},
    "stoppage": {"range": "disc:1", "n_reps": 100_000, "start_height": 0.0, "ks_tol": 0.02},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- configuration ------------------------------------------------------------------------------------------

def parse_heights(value):
    """Height law from a dict, a JSON string or ``exp:RATE``, ``weibull:SHAPE,SCALE``, ``uniform:SUP``."""
    if isinstance(value, dict):
        return value
    text = str(value).strip()
    if text.startswith("{"):
        return json.loads(text)
    kind, _, arg = text.partition(":")
    nums = [float(v) for v in arg.split(",") if v]
    if kind in ("exp", "exponential"):
        return {"kind": "exponential", "rate": nums[0] if nums else 1.0}
    if kind == "weibull":
        if len(nums) != 2:
            raise ConfigError("weibull needs SHAPE,SCALE")
        return {"kind": "weibull", "shape": nums[0], "scale": nums[1]}
    if kind == "uniform":
        return {"kind": "uniform", "sup": nums[0] if nums else 1.0}
    raise ConfigError(f"unknown height law {text!r}")


def _coerce(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def build_config(command: str, file_cfg: dict | None, overrides: dict) -> dict:
    """Merge defaults, the JSON file and flag overrides; reject unknown keys."""
    defaults = {**BASE, **COMMANDS[command]}
    cfg = dict(defaults)
    for src in (file_cfg or {}, overrides):
        unknown = set(src) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown keys for {command}: {sorted(unknown)}")
        cfg.update({k: v for k, v in src.items() if v is not None})
    try:
        cfg["heights"] = parse_heights(cfg["heights"])
        hmod.from_dict(cfg["heights"])
        cfg["seed"] = int(cfg["seed"])
        cfg["lam"] = float(cfg["lam"])
        for key in ("n_reps", "n_hops", "direct_reps", "grid"):
            if key in cfg:
                cfg[key] = int(cfg[key])
                if cfg[key] < 0:
                    raise ConfigError(f"{key} must be nonnegative")
        if "scheme" in cfg:
            cfg["scheme"] = Scheme.parse(cfg["scheme"]).value
        if cfg.get("range") is not None:
            fr.RangeSpec.parse(cfg["range"])
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc
    if not cfg["lam"] > 0:
        raise ConfigError("lam must be positive")
    return cfg


def workers_for(cfg) -> int:
    cap = os.environ.get("RELAY_SIM_THREADS")
    want = cfg.get("workers")
    if want is None:
        return max(1, int(cap)) if cap else 1
    return max(1, min(int(want), int(cap))) if cap else max(1, int(want))


def provenance(command: str, cfg: dict) -> dict:
    public = {k: v for k, v in cfg.items() if k not in ("workers", "output", "report")}
    return {"command": command, "config_hash": config_hash(public), "seed": cfg["seed"]}


def header(prov: dict) -> str:
    return f"# relay-sim {prov['command']}\n# config_hash={prov['config_hash']}\n# seed={prov['seed']}\n"


def _fmt(v) -> str:
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def write_csv(path, prov, columns, rows):
    buf = io.StringIO()
    buf.write(header(prov))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([c if isinstance(c, (int, np.integer, str)) else _fmt(c) for c in r])
    _emit(path, buf.getvalue())


def write_report(path, prov, body: dict):
    _emit(path, to_json({**prov, **body}, indent=2) + "\n")


def _emit(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


# -- commands ----------------------------------------------------------------------------------------------

def cmd_trajectory(cfg) -> int:
    H = hmod.from_dict(cfg["heights"])
    n, N, y0 = cfg["n_reps"], cfg["n_hops"], float(cfg["start_height"])
    rows = []
    rng_range = None if cfg["range"] is None else fr.RangeSpec.parse(cfg["range"])
    if N == 0:
        rows = [(r, 0, 0.0, y0, math.inf) for r in range(max(n, 1))]
    elif rng_range is None:
        res = sample_trajectories(cfg["lam"], H, N, n, seed=cfg["seed"], start=(0.0, y0), scheme=cfg["scheme"],
                                  workers=workers_for(cfg))
        for r in range(n):
            for k in range(N + 1):
                rows.append((r, k, res["X"][r, k], res["H"][r, k], res["T"][r, k]))
    elif rng_range.name == "horizontal":
        X, Hh = fr.sample_range_trajectories(cfg["lam"], H, rng_range.params["R"], N, n, seed=cfg["seed"],
                                             start_height=y0, workers=workers_for(cfg))
        for r in range(n):
            rows.append((r, 0, 0.0, y0, math.inf))
            px, py = 0.0, y0
            for k in range(N):
                if not np.isfinite(X[r, k]):
                    break
                rows.append((r, k + 1, X[r, k], Hh[r, k], (Hh[r, k] - py) / (X[r, k] - px)))
                px, py = X[r, k], Hh[r, k]
    else:
        profile = as_profile(cfg["lam"])
        for r in range(n):
            rng = rep_rng(cfg["seed"], r)
            land = Landscape(np.empty(0), np.empty(0), 0.0, 0.0, profile, H, rng)
            rows.append((r, 0, 0.0, y0, math.inf))
            px, py = 0.0, y0
            for k, b in enumerate(fr.trajectory_gr(land, (0.0, y0), rng_range, N), start=1):
                rows.append((r, k, b.x, b.h, (b.h - py) / (b.x - px)))
                px, py = b.x, b.h
    write_csv(cfg["output"], provenance("trajectory", cfg), ["rep", "hop", "x", "h", "t"], rows)
    return EXIT_OK


def cmd_density_check(cfg) -> int:
    names = [name for _, name in ACCEPTANCE] if cfg["experiment"] == "all" else [cfg["experiment"]]
    params = dict(cfg["params"] or {})
    results = []
    for name in names:
        if name not in REGISTRY:
            raise ConfigError(f"unknown experiment {name!r}; known: {sorted(REGISTRY)}")
        sub = {"experiment": name, "seed": cfg["seed"], "lam": cfg["lam"], "heights": cfg["heights"],
               "workers": workers_for(cfg), "sabotage": bool(cfg["sabotage"]), **params}
        if name == "reproducibility":
            sub.pop("sabotage")
        results.append(run_experiment(sub))
    passed = all(r.passed for r in results)
    write_report(cfg["report"], provenance("density-check", cfg),
                 {"passed": passed, "results": [r.to_dict() for r in results]})
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}", file=sys.stderr)
    return EXIT_OK if passed else EXIT_FAIL


def cmd_zone(cfg) -> int:
    H = hmod.from_dict(cfg["heights"])
    lam, beta, tan = cfg["lam"], float(cfg["beta"]), float(cfg["tan_theta"])
    strict = is_strict(cfg["scheme"])
    mean_len = expected_zone_length_given_angle(lam, H, beta, tan, strict)
    body = {"beta": beta, "tan_theta": tan, "expected_length": mean_len,
            "expected_count": expected_building_count(lam, H, beta, tan, strict) if tan > 0 else None}
    if not (H.has_atom_at_sup and beta >= H.sup_support and cfg["scheme"] == "infinite") and beta <= H.sup_support:
        body["palm_expected_length"] = expected_zone_length_palm(lam, H, beta, cfg["scheme"])
    if tan > 0 and cfg["grid"] > 0:
        ts = np.linspace(0.0, beta / tan, cfg["grid"])
        body["cdf"] = {"t": ts, "F": zone_length_cdf(lam, H, beta, tan, ts, strict)}
    if cfg["n_reps"] > 0 and math.isfinite(mean_len):
        res = mc_zone_given_angle(lam, H, beta, tan, cfg["n_reps"], cfg["seed"], strict, workers_for(cfg))
        m, lo, hi = mean_ci(res["ell"])
        c, clo, chi = mean_ci(res["count"])
        body["mc"] = {"length": [m, lo, hi], "count": [c, clo, chi], "n_reps": cfg["n_reps"]}
        if cfg["output"]:
            write_csv(cfg["output"], provenance("zone", cfg), ["rep", "length", "count"],
                      [(i, a, int(b)) for i, (a, b) in enumerate(zip(res["ell"], res["count"]))])
    write_report(cfg["report"], provenance("zone", cfg), body)
    return EXIT_OK


def cmd_tree(cfg) -> int:
    H = hmod.from_dict(cfg["heights"])
    rng = rep_rng(cfg["seed"], 0)
    land = generate_window(cfg["lam"], H, (0.0, float(cfg["window"])), rng)
    forest = build_forest(land, cfg["scheme"], boundary_margin=float(cfg["margin"]), trunc_eps=float(cfg["trunc_eps"]))
    prov = provenance("tree", cfg)
    text = forest.to_csv(header=f"relay-sim tree\nconfig_hash={prov['config_hash']}\nseed={prov['seed']}")
    _emit(cfg["output"], text)
    if cfg["report"]:
        rep = classify_eft(H, cfg["scheme"])
        write_report(cfg["report"], prov, {"class": rep.label, "nodes": len(forest),
                                           "censored_fraction": forest.censored_fraction,
                                           "spine_nodes": int(forest.spine_flags().sum())})
    return EXIT_OK


def cmd_finite(cfg) -> int:
    H = hmod.from_dict(cfg["heights"])
    rs = fr.RangeSpec.parse(cfg["range"])
    if rs.name != "horizontal":
        raise ConfigError("finite works with a horizontal range; use stoppage or trajectory for general ranges")
    R = rs.params["R"]
    T = fr.sample_hitting_times(cfg["lam"], H, R, cfg["n_reps"], cfg["seed"], float(cfg["start_height"]),
                                workers_for(cfg))
    prov = provenance("finite", cfg)
    if cfg["output"]:
        write_csv(cfg["output"], prov, ["rep", "T"], [(i, int(v)) for i, v in enumerate(T)])
    m, lo, hi = mean_ci(T / cfg["lam"])
    body = {"R": R, "hitting_time_mean": float(T.mean()), "zone_length_via_T": [m, lo, hi],
            "p_zero": float(np.mean(T == 0)), "p_zero_exact": math.exp(-cfg["lam"] * R)}
    overlap = True
    if cfg["direct_reps"] > 0:
        d = fr.direct_zone_length_hr(cfg["lam"], H, R, cfg["direct_reps"], seed=cfg["seed"] + 1,
                                     workers=workers_for(cfg))
        body["zone_length_direct"] = [d.estimate, *d.ci95]
        overlap = bool(lo <= d.ci95[1] and d.ci95[0] <= hi)
        body["overlap"] = overlap
    write_report(cfg["report"], prov, body)
    return EXIT_OK if overlap else EXIT_FAIL


def cmd_stoppage(cfg) -> int:
    H = hmod.from_dict(cfg["heights"])
    rs = fr.RangeSpec.parse(cfg["range"])
    y0 = float(cfg["start_height"])
    xs = fr.sample_stoppage(cfg["lam"], H, rs, cfg["n_reps"], cfg["seed"], y0, workers_for(cfg))
    law = fr.stoppage_law(cfg["lam"], H, (0.0, y0), rs, rs.max_abscissa)
    cdf = lambda t: fr.stoppage_cdf(cfg["lam"], H, (0.0, y0), rs, t)
    cdf_left = lambda t: fr.stoppage_cdf(cfg["lam"], H, (0.0, y0), rs, t, left_limit=True)
    ks = ks_distance(xs, cdf, cdf_left)
    prov = provenance("stoppage", cfg)
    if cfg["output"]:
        write_csv(cfg["output"], prov, ["rep", "x_stop"], list(enumerate(xs)))
    ok = ks <= float(cfg["ks_tol"])
    write_report(cfg["report"], prov, {"range": rs.to_dict(), "atom": law.atom, "ks": ks, "passed": ok,
                                       "atom_mc": float(np.mean(xs >= rs.max_abscissa))})
    return EXIT_OK if ok else EXIT_FAIL


HANDLERS = {"trajectory": cmd_trajectory, "density-check": cmd_density_check, "zone": cmd_zone, "tree": cmd_tree,
            "finite": cmd_finite, "stoppage": cmd_stoppage}


# -- argument parsing ----------------------------------------------------------------------------------------

def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="relay-sim", description="Line-of-sight relaying over Poisson building processes.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON config file")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (value parsed as JSON when possible)")
        s.add_argument("--seed", type=int)
        s.add_argument("--lam", type=float)
        s.add_argument("--heights", help="exp:RATE | weibull:SHAPE,SCALE | uniform:SUP | JSON")
        s.add_argument("--workers", type=int)
        s.add_argument("-o", "--output", help="CSV output path")
        s.add_argument("--report", help="JSON report path (stdout by default)")
        if "n_reps" in COMMANDS[name]:
            s.add_argument("--n-reps", dest="n_reps", type=int)
        if "scheme" in COMMANDS[name]:
            s.add_argument("--scheme", help="infinite (tau) | self_absorbing (tau1) | next_max (tau2)")
        if "range" in COMMANDS[name]:
            s.add_argument("--range", help="horizontal:R | disc:R | rect:W,H | diamond:R | profile:file.csv")
        if name == "trajectory":
            s.add_argument("-N", "--n-hops", dest="n_hops", type=int)
            s.add_argument("--start-height", dest="start_height", type=float)
        if name == "density-check":
            s.add_argument("experiment", nargs="?", help=f"experiment name or 'all' ({', '.join(sorted(REGISTRY))})")
            s.add_argument("--sabotage", action="store_true", default=None,
                           help="perturb the closed-form intensity (negative control)")
        if name == "zone":
            s.add_argument("--beta", type=float)
            s.add_argument("--tan-theta", dest="tan_theta", type=float)
            s.add_argument("--grid", type=int, help="points of the exported CDF")
        if name == "tree":
            s.add_argument("--window", type=float)
            s.add_argument("--margin", type=float)
        if name == "finite":
            s.add_argument("--direct-reps", dest="direct_reps", type=int)
        if name == "stoppage":
            s.add_argument("--ks-tol", dest="ks_tol", type=float)
    return p


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "set") and v is not None}
    for item in args.set:
        key, eq, val = item.partition("=")
        if not eq:
            print(f"relay-sim: error: --set expects KEY=VALUE, got {item!r}", file=sys.stderr)
            return EXIT_USAGE
        flags[key] = _coerce(val)
    try:
        file_cfg = None
        if args.config:
            with open(args.config) as fh:
                file_cfg = json.load(fh)
            if not isinstance(file_cfg, dict):
                raise ConfigError("config file must hold a JSON object")
        cfg = build_config(args.command, file_cfg, flags)
        return HANDLERS[args.command](cfg)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"relay-sim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
