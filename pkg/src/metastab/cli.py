"""Command-line entry point: ``metastab <command> SPEC [options]``.

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import asymptotics, passage, simulate, tables
from .errors import MetastabError, NumericalFailure, ValidationError
from .hierarchy import build_hierarchy, time_scale, verify_postulates
from .landscape import CoefficientSpec, find_equilibria

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3

SPEC_KEYS = {"a.const": "a_const", "a.cos[]": "a_cos", "a.sin[]": "a_sin",
             "b.cos[]": "b_cos", "b.sin[]": "b_sin", "b.const": "b_const"}


def parse_spec_text(text: str) -> CoefficientSpec:
    """Read ``key = value`` lines; array keys end in ``[]`` and take
    comma- or space-separated numbers, optionally in brackets."""
    fields: dict = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"line {n}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in SPEC_KEYS:
            raise ValidationError(f"line {n}: unknown key {key!r}")
        try:
            if key.endswith("[]"):
                items = val.strip("[]").replace(",", " ").split()
                fields[SPEC_KEYS[key]] = tuple(float(v) for v in items)
            else:
                fields[SPEC_KEYS[key]] = float(val)
        except ValueError as exc:
            raise ValidationError(f"line {n}: {exc}") from exc
    if "a_const" not in fields:
        raise ValidationError("missing a.const")
    return CoefficientSpec(**fields)


def load_spec(path) -> CoefficientSpec:
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"spec file not found: {p}")
    return parse_spec_text(p.read_text())


def parse_u0(text: str):
    """``cos:c`` for (1 + cos 2 pi (x - c)) / 2, ``const:v``, or ``table:FILE``
    (CSV ``x,value`` over one period, interpolated periodically)."""
    kind, _, arg = text.partition(":")
    if kind == "cos":
        c = float(arg or 0.0)
        return lambda x: 0.5 * (1.0 + np.cos(2.0 * np.pi * (np.asarray(x, float) - c)))
    if kind == "const":
        v = float(arg)
        return lambda x: np.full(np.shape(x), v) if np.ndim(x) else v
    if kind == "table":
        data = np.loadtxt(arg, delimiter=",", skiprows=1, ndmin=2)
        return asymptotics.tabulated(data[:, 0], data[:, 1], period=1.0)
    raise ValidationError(f"unknown u0 form {text!r}")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(obj) -> None:
    sys.stdout.write(tables.json_text(obj))


def _eps(args) -> list[float]:
    eps = _floats(args.eps)
    if not eps or any(not e > 0 for e in eps):
        raise ValidationError("eps values must be positive")
    return eps


# --- commands --------------------------------------------------------------

def cmd_analyze(args) -> int:
    land = find_equilibria(load_spec(args.spec))
    tables.write_csv(_outdir(args) / "landscape.csv", tables.LANDSCAPE_HEADER,
                     tables.landscape_rows(land))
    _emit({"N": land.N, "tilt": land.tilt, "shift": float(land.shift),
           "minima": [m.location for m in land.minima],
           "saddles": [s.location for s in land.saddles]})
    return EXIT_OK


def cmd_hierarchy(args) -> int:
    h = build_hierarchy(find_equilibria(load_spec(args.spec)))
    out = _outdir(args)
    tables.write_json(out / "hierarchy.json", tables.hierarchy_tree(h))
    tables.write_csv(out / "rates.csv", tables.RATES_HEADER, tables.rate_rows(h))
    _emit({"Q": h.Q, "H": [lv.H for lv in h.levels], "u": [lv.u for lv in h.levels]})
    return EXIT_OK


def cmd_verify(args) -> int:
    h = build_hierarchy(find_equilibria(load_spec(args.spec)))
    rep = verify_postulates(h)
    _emit(rep.as_dict())
    return EXIT_OK if rep.passed else EXIT_NUMERIC


def _xs_arg(args, land):
    if args.x:
        return np.array(_floats(args.x))
    return np.array([land.min_location(g) for g in range(land.N)])


def cmd_predict(args) -> int:
    land = find_equilibria(load_spec(args.spec))
    h = build_hierarchy(land)
    u0 = parse_u0(args.u0)
    xs = _xs_arg(args, land)
    if args.regime == "critical":
        prof = asymptotics.predict_critical(h, args.p, _floats(args.t), u0, xs)
    elif args.regime == "intermediate":
        prof = asymptotics.predict_intermediate(h, args.p, u0, xs)
    elif args.regime == "pre-metastable":
        prof = asymptotics.predict_pre_metastable(land, u0, xs, not args.no_saddle_convention)
    else:
        val = asymptotics.predict_equilibrium(h, args.ell, u0)
        prof = asymptotics.PredictionProfile("equilibrium", h.Q, xs, np.full(len(xs), val))
    path = _outdir(args) / f"profile_{prof.regime}.csv"
    tables.write_csv(path, tables.PROFILE_HEADER, prof.rows())
    _emit({"regime": prof.regime, "p": prof.p, "file": path.name,
           "values": prof.values.tolist(), "chain_bound": prof.bound})
    return EXIT_OK


def cmd_passage(args) -> int:
    spec = load_spec(args.spec)
    rows = []
    for eps in _eps(args):
        bound = passage.mean_exit_bound(spec, args.l, args.r, eps)
        for x in _floats(args.x):
            prob = passage.ExitProblem(spec, eps, args.l, args.r, x)
            rows.append((eps, args.l, args.r, x, passage.exit_probability(prob),
                         passage.mean_exit_time(prob), bound))
    tables.write_csv(_outdir(args) / "passage.csv", tables.PASSAGE_HEADER, rows)
    _emit({"rows": len(rows)})
    return EXIT_OK


def _fd(spec, eps, u0, times, nodes):
    grid = simulate.FdGrid.periodic_grid(1, nodes)
    return simulate.fd_parabolic(spec, grid, u0, eps, times)


def cmd_simulate(args) -> int:
    spec = load_spec(args.spec)
    (eps,) = _eps(args)[:1]
    u0 = parse_u0(args.u0)
    times = _floats(args.t)
    out = _outdir(args)
    meta = {"method": args.method, "eps": eps, "u0": args.u0, "times": times}
    if args.method == "fd":
        sol = _fd(spec, eps, u0, times, args.nodes)
        tables.write_csv(out / "snapshots.csv", tables.SNAPSHOT_HEADER, tables.snapshot_rows(sol))
        summary = [(f"spatial_error(t={tables.fmt(t)})", e, None)
                   for t, e in zip(sol.times, sol.error)]
        meta |= sol.metadata
    else:
        xs = _floats(args.x) if args.x else [0.0]
        cfg = simulate.stable_config(spec, eps, max(times), args.paths, args.seed)
        summary = []
        for x in xs:
            for t in times:
                est, se = simulate.mc_parabolic(spec, cfg, u0, t, x)
                summary.append((f"u(t={tables.fmt(t)},x={tables.fmt(x)})", est, se))
        meta |= cfg.metadata(spec)
    tables.write_csv(out / "summary.csv", tables.SUMMARY_HEADER, summary)
    tables.write_json(out / "metadata.json", meta)
    _emit({"summary": [list(r) for r in summary]})
    return EXIT_OK


def cmd_compare(args) -> int:
    """Prediction vs finite-difference solution at the minima."""
    spec = load_spec(args.spec)
    land = find_equilibria(spec)
    h = build_hierarchy(land)
    u0 = parse_u0(args.u0)
    xs = _xs_arg(args, land)
    eps_list = _eps(args)
    report = {"regime": args.regime, "p": args.p, "tolerance": args.tol, "runs": []}
    all_ok = True
    for eps in eps_list:
        if args.regime == "critical":
            ts = _floats(args.t)
            pred = asymptotics.predict_critical(h, args.p, ts, u0, xs).values
            real_t = [t * time_scale(h, args.p, eps) for t in ts]
        elif args.regime == "intermediate":
            pred = asymptotics.predict_intermediate(h, args.p, u0, xs).values[None, :]
            ts = [math.sqrt(time_scale(h, args.p, eps) * time_scale(h, args.p + 1, eps))]
            real_t = ts
        else:
            val = asymptotics.predict_equilibrium(h, args.ell, u0)
            ts = [args.t_factor * time_scale(h, h.Q, eps)]
            real_t = ts
            pred = np.full((1, len(xs)), val)
        sol = _fd(spec, eps, u0, real_t, args.nodes)
        rows = []
        for i, t in enumerate(ts):
            fd_vals = sol.at(i, xs)
            err = float(np.max(np.abs(fd_vals - pred[i])))
            ok = err <= args.tol
            all_ok &= ok
            rows.append({"t": t, "time": real_t[i], "x": xs.tolist(), "fd": fd_vals.tolist(),
                         "predicted": pred[i].tolist(), "max_error": err, "pass": ok})
        report["runs"].append({"eps": eps, "rows": rows,
                               "max_error": max(r["max_error"] for r in rows)})
    report["pass"] = all_ok
    tables.write_json(_outdir(args) / "compare_report.json", report)
    _emit({"pass": all_ok, "max_error": [r["max_error"] for r in report["runs"]]})
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    """Usage errors become ``ValidationError`` so they get a JSON diagnostic."""

    def error(self, message):
        raise ValidationError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="metastab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("spec", help="coefficient spec file")
        p.add_argument("--out", default=".", help="output directory")
        p.set_defaults(func=fn)
        return p

    add("analyze", cmd_analyze, "critical points of S -> landscape.csv")
    add("hierarchy", cmd_hierarchy, "metastable hierarchy -> hierarchy.json, rates.csv")
    add("verify", cmd_verify, "postulate report")

    p = add("predict", cmd_predict, "limit profiles -> profile_<regime>.csv")
    p.add_argument("--regime", required=True,
                   choices=["critical", "intermediate", "pre-metastable", "equilibrium"])
    p.add_argument("--p", type=int, default=1)
    p.add_argument("--t", default="1", help="comma-separated times in units of theta_p")
    p.add_argument("--x", default="", help="comma-separated points (default: minima)")
    p.add_argument("--u0", default="cos:0")
    p.add_argument("--ell", type=int, default=1)
    p.add_argument("--no-saddle-convention", action="store_true")

    p = add("passage", cmd_passage, "exit probabilities and times -> passage.csv")
    p.add_argument("--eps", required=True)
    p.add_argument("--l", type=float, required=True)
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--x", required=True)

    p = add("simulate", cmd_simulate, "FD or Monte Carlo solution of the parabolic equation")
    p.add_argument("--method", choices=["fd", "mc"], default="fd")
    p.add_argument("--eps", required=True)
    p.add_argument("--t", required=True, help="comma-separated absolute times")
    p.add_argument("--x", default="")
    p.add_argument("--u0", default="cos:0")
    p.add_argument("--paths", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--nodes", type=int, default=2048)

    p = add("compare", cmd_compare, "prediction vs FD -> compare_report.json")
    p.add_argument("--regime", required=True, choices=["critical", "intermediate", "equilibrium"])
    p.add_argument("--p", type=int, default=1)
    p.add_argument("--eps", required=True)
    p.add_argument("--t", default="0.5,1,2")
    p.add_argument("--t-factor", type=float, default=50.0,
                   help="equilibrium regime: time in units of theta of the last level")
    p.add_argument("--x", default="")
    p.add_argument("--u0", default="cos:0")
    p.add_argument("--ell", type=int, default=1)
    p.add_argument("--tol", type=float, default=0.15)
    p.add_argument("--nodes", type=int, default=2048)
    return ap


def _diagnose(kind: str, exc: Exception) -> None:
    sys.stderr.write(json.dumps({"error": kind, "type": type(exc).__name__,
                                 "message": str(exc)}) + "\n")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except ValidationError as exc:
        _diagnose("usage", exc)
        return EXIT_INVALID
    try:
        return args.func(args)
    except (ValidationError, ValueError) as exc:
        _diagnose("validation", exc)
        return EXIT_INVALID
    except (NumericalFailure, ArithmeticError) as exc:
        _diagnose("numerical", exc)
        return EXIT_NUMERIC
    except MetastabError as exc:
        _diagnose("numerical", exc)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
