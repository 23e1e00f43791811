"""Batch command-line front end.

Exit codes: 0 success, 1 solver or numerical failure, 2 bad input or
configuration, 3 infeasible model, 4 no incumbent within the time limit.
"""

import argparse
import json
import logging
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from importlib import resources
from pathlib import Path

from . import freq_algebra as fa
from . import uc
from .errors import ConfigError, FreqUcError, NumericalError, ParseError, SolverError, ValidationError
from .grid import load_system
from .sfr import SfrScenario, simulate, simulate_until_settled

log = logging.getLogger("frequc")

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_NO_SOLUTION = 0, 1, 2, 3, 4
SWEEP_HORIZONS = (5.0, 10.0, 20.0, 30.0)
SWEEP_SEGMENTS = (1, 2, 4, 8)
UNEVEN_HORIZON = 30.0


def data_path(name):
    return Path(str(resources.files("frequc") / "data" / name))


# ---------------------------------------------------------------------------
# output helpers


def sig9(obj):
    """Round every float in a JSON-like structure to 9 significant digits."""
    if isinstance(obj, float):
        return float(f"{obj:.9g}")
    if isinstance(obj, dict):
        return {k: sig9(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sig9(v) for v in obj]
    return obj


def _atomic_write(path, text):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_json(path, obj):
    _atomic_write(path, json.dumps(sig9(obj), indent=2, sort_keys=True, default=uc._json_default) + "\n")


def write_csv(path, header, rows):
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(f"{v:.9g}" if isinstance(v, float) else str(v) for v in r))
    _atomic_write(path, "\n".join(lines) + "\n")


def _output_dir(path):
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from None
    if not os.access(out, os.W_OK):
        raise ConfigError(f"output directory {out} is not writable")
    return out


def _parse_fracs(text):
    if text is None:
        return None
    try:
        fracs = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise ConfigError(f"--segments expects comma-separated fractions, got {text!r}") from None
    if any(not f > 0 for f in fracs) or abs(sum(fracs) - 1.0) > 1e-9:
        raise ConfigError("--segments fractions must be positive and sum to 1")
    return fracs


# ---------------------------------------------------------------------------
# simulate


def load_scenario(path):
    path = Path(path)
    if not path.exists():
        raise ParseError(path, None, "file not found")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(path, exc.lineno, exc.msg) from None
    if not isinstance(raw, dict):
        raise ParseError(path, None, "expected a JSON object")
    return SfrScenario.from_dict(raw)


def system_scenario(system, hour):
    """All-online scenario for a 1-based ``hour`` with each farm at its default droop."""
    if not 1 <= hour <= system.horizon_hours:
        raise ValidationError(f"--hour must lie in 1..{system.horizon_hours}")
    on = {u.id: [1] * system.horizon_hours for u in system.units}
    droop = {f.id: [f.default_droop] * system.horizon_hours for f in system.wind_farms}
    sol = uc.UcSolution("given", None, {}, on, {}, {}, {}, {}, droop, None, 0.0, "")
    return uc.hour_scenario(system, sol, hour - 1)


def simulation_metrics(sc, dt):
    traj, qss, settled = simulate_until_settled(sc, dt)
    m = traj.metrics
    return traj, {
        "rocof0": m.rocof0,
        "t_db": traj.t_db,
        "nadir_df": m.nadir_df,
        "nadir_t": m.nadir_t,
        "qss_df": qss,
        "qss_settled": settled,
    }


def cmd_simulate(args):
    src = Path(args.input) if args.input else data_path("all_online_scenario.json")
    if src.is_dir():
        if args.hour is None:
            raise ConfigError("--hour is required when --input is a system directory")
        sc = system_scenario(load_system(src), args.hour)
    else:
        sc = load_scenario(src)
    out = _output_dir(args.output)
    traj, met = simulation_metrics(sc, args.dt)
    traj.to_csv(out / "trajectory.csv")
    write_json(out / "metrics.json", met)
    print(f"nadir {met['nadir_df']:.9g} Hz at {met['nadir_t']:.9g} s, qss {met['qss_df']:.9g} Hz")
    return EXIT_OK


# ---------------------------------------------------------------------------
# tightness


def tightness_points(uneven):
    pts = [(h, n, "even", None) for h in SWEEP_HORIZONS for n in SWEEP_SEGMENTS]
    pts.append((UNEVEN_HORIZON, len(uneven), "uneven", tuple(uneven)))
    return pts


def tightness_point(sc, horizon, n, kind, fracs, dt, bound_depth):
    """One row of the tightness table: transcription nadir vs the oracle."""
    if fracs is None:
        grid = fa.SegmentGrid.even(horizon, n)
    else:
        grid = fa.SegmentGrid.from_fractions(horizon, fracs)
    spl = fa.transcribe_scenario(sc, grid)
    nadir_bp, _ = spl.nadir()
    bound = spl.bound(bound_depth)
    # the transcription starts at the dead-band crossing, so the oracle runs
    # over the same window shifted by t_db
    t_db = spl.t_offset
    oracle = simulate(SfrScenario(**{**sc.__dict__, "horizon": horizon + t_db}), dt).metrics.nadir_df
    rel = abs(nadir_bp - oracle) / oracle
    return (horizon, n, kind, nadir_bp, bound, oracle, rel)


def _tightness_job(job):
    return tightness_point(*job)


def run_tightness(sc, uneven=(0.1, 0.2, 0.3, 0.4), dt=1e-3, bound_depth=1, jobs=1):
    work = [(sc, h, n, kind, fr, dt, bound_depth) for h, n, kind, fr in tightness_points(uneven)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_tightness_job, work))
    else:
        rows = [_tightness_job(w) for w in work]
    return rows


TIGHTNESS_HEADER = ["H", "N", "grid", "nadir_bp", "nadir_bound", "nadir_oracle", "rel_err"]


def cmd_tightness(args):
    src = Path(args.input) if args.input else data_path("all_online_scenario.json")
    sc = load_scenario(src)
    out = _output_dir(args.output)
    uneven = _parse_fracs(args.segments) or (0.1, 0.2, 0.3, 0.4)
    rows = run_tightness(sc, uneven, args.dt, args.bound_depth, args.jobs)
    write_csv(out / "tightness.csv", TIGHTNESS_HEADER, rows)
    for r in rows:
        print(f"H={r[0]:g} N={r[1]} {r[2]:6s} bp={r[3]:.6f} oracle={r[5]:.6f} err={100 * r[6]:.4f}%")
    return EXIT_OK


# ---------------------------------------------------------------------------
# solve


def cmd_solve(args):
    system = load_system(args.input)
    if args.drcc_strategy:
        policy = replace(system.policy, drcc_strategy=args.drcc_strategy)
        system = replace(system, policy=policy).validate()
    out = _output_dir(args.output)
    fracs = _parse_fracs(args.segments)
    model = uc.build(system, args.mode, args.bound_depth, fracs, initial_state=args.initial_state)
    log.info("model: %d variables (%d binary), %d rows", model.model.n_vars, model.model.n_binaries(),
             len(model.model.constraints))
    sol = uc.solve(model, gap_tol=args.gap, time_limit=args.time_limit)
    if not sol.feasible:
        report = {"status": sol.status, "mode": args.mode, "message": sol.message, "wall_time_s": sol.wall_time}
        write_json(out / "solution.json", report)
        print(f"solver status: {sol.status}", file=sys.stderr)
        return EXIT_INFEASIBLE if sol.status == "infeasible" else EXIT_NO_SOLUTION
    security = uc.validate(sol, system, dt=args.dt)
    problems = uc.audit(sol, system, model)
    doc = sol.to_dict()
    doc["security"] = security["summary"]
    doc["audit"] = problems
    doc["expected_redispatch_cost"] = uc.expected_redispatch_cost(sol, system)
    write_json(out / "solution.json", doc)
    write_json(out / "security_report.json", security)
    s = security["summary"]
    print(f"{args.mode}: {sol.status} cost {sol.objective:.9g} gap {sol.gap if sol.gap is not None else 0:.3g} "
          f"max nadir {s['max_nadir']:.6g} max qss {s['max_qss']:.6g} all_pass {s['all_pass']}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# report

REPORT_ROWS = [
    ("status", lambda d, s: d["status"]),
    ("total_cost", lambda d, s: d["costs"]["total"]),
    ("startup_shutdown_cost", lambda d, s: d["costs"]["startup_shutdown"]),
    ("fuel_cost", lambda d, s: d["costs"]["fuel"]),
    ("thermal_reserve_cost", lambda d, s: d["costs"]["reserve_thermal"]),
    ("wind_reserve_cost", lambda d, s: d["costs"]["reserve_wind"]),
    ("thermal_reserve_mwh", lambda d, s: float(sum(sum(v) for v in d["reserves"].values()))),
    ("wind_reserve_mwh", lambda d, s: float(sum(sum(v) for v in d["wind_reserves"].values()))),
    ("max_rocof_hz_s", lambda d, s: s["summary"]["max_rocof"]),
    ("max_nadir_hz", lambda d, s: s["summary"]["max_nadir"]),
    ("max_qss_hz", lambda d, s: s["summary"]["max_qss"]),
    ("failed_hours", lambda d, s: len(s["summary"]["failed_hours"])),
    ("wall_time_s", lambda d, s: d["wall_time_s"]),
    ("gap", lambda d, s: d["gap"] if d["gap"] is not None else 0.0),
]


def _load_run(path):
    d = Path(path)
    sol_path, sec_path = d / "solution.json", d / "security_report.json"
    for p in (sol_path, sec_path):
        if not p.exists():
            raise ParseError(p, None, "file not found")
    try:
        return json.loads(sol_path.read_text()), json.loads(sec_path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(sol_path, exc.lineno, exc.msg) from None


def cmd_report(args):
    runs = []
    for path in args.input:
        sol, sec = _load_run(path)
        label = sol.get("mode") or Path(path).name
        runs.append((label, sol, sec))
    out = _output_dir(args.output)
    rows = [[name] + [fn(sol, sec) for _, sol, sec in runs] for name, fn in REPORT_ROWS]
    write_csv(out / "report.csv", ["metric"] + [r[0] for r in runs], rows)
    width = max(len(n) for n, _ in REPORT_ROWS)
    lines = [" " * width + "".join(f"{label:>16s}" for label, _, _ in runs)]
    for r in rows:
        cells = "".join(f"{v:>16.9g}" if isinstance(v, float) else f"{v!s:>16s}" for v in r[1:])
        lines.append(f"{r[0]:<{width}s}{cells}")
    text = "\n".join(lines) + "\n"
    _atomic_write(out / "report.txt", text)
    print(text, end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
    return v


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1: {text!r}")
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="frequc", description="Frequency-constrained unit commitment toolkit.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, input_help, multi=False):
        if multi:
            sp.add_argument("--input", nargs="+", required=True, help=input_help)
        else:
            sp.add_argument("--input", help=input_help)
        sp.add_argument("--output", required=True, help="output directory")
        sp.add_argument("--dt", type=_positive_float, default=1e-3, help="oracle time step in seconds")

    sp = sub.add_parser("simulate", help="time-domain simulation of one frequency event")
    common(sp, "scenario JSON or system directory (default: bundled all-online fixture)")
    sp.add_argument("--hour", type=int, help="1-based hour when --input is a system directory")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("tightness", help="transcription nadir error sweep")
    common(sp, "scenario JSON (default: bundled all-online fixture)")
    sp.add_argument("--segments", help="uneven grid fractions, e.g. 0.1,0.2,0.3,0.4")
    sp.add_argument("--bound-depth", type=int, default=1)
    sp.add_argument("--jobs", type=_positive_int, default=1)
    sp.set_defaults(func=cmd_tightness)

    sp = sub.add_parser("solve", help="build, solve and validate the UC model")
    common(sp, "system directory")
    sp.add_argument("--mode", choices=uc.MODES, default="freq_full")
    sp.add_argument("--segments", help="segment fractions of the dynamics horizon")
    sp.add_argument("--bound-depth", type=int, default=1)
    sp.add_argument("--gap", type=float, default=uc.DEFAULT_GAP)
    sp.add_argument("--time-limit", type=_positive_float, default=uc.DEFAULT_TIME_LIMIT)
    sp.add_argument("--jobs", type=_positive_int, default=1, help="accepted for symmetry; solves are sequential")
    sp.add_argument("--drcc-strategy", choices=("gaussian", "wasserstein_cvar", "fixed"))
    sp.add_argument("--initial-state", choices=uc.INITIAL_STATES, default="offline")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("report", help="side-by-side comparison of solved runs")
    common(sp, "one or more solve output directories", multi=True)
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "solve" and args.input is None:
        parser.error("solve requires --input")
    if getattr(args, "gap", 0.0) is not None and getattr(args, "gap", 0.0) < 0:
        parser.error("--gap must be non-negative")
    try:
        return args.func(args)
    except (ParseError, ValidationError, ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalError, SolverError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except FreqUcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


def _entry():
    sys.exit(main())


if __name__ == "__main__":
    _entry()
