"""Frequency-stability-constrained unit commitment: build, solve, validate.

Two modes are supported:

``no_freq``
    classical UC where the total primary reserve must cover the hourly
    imbalance;
``freq_full``
    adds, per hour, the RoCoF and QSS rows, the spline transcription of the
    post-dead-band dynamics, and convex-hull bounds on the deviation and on
    every primary-response signal.
"""

import itertools
import json
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import bernstein as bp
from . import freq_algebra as fa
from .errors import BuildError, ConfigError
from .grid import event_params, unit_inertia, wind_inertia
from .milp import LinExpr, MilpModel, get_backend, lin_sum
from .risk import drcc_threshold, policy_coefficient
from .sfr import SfrScenario, simulate_until_settled

log = logging.getLogger(__name__)

MODES = ("no_freq", "freq_full")
DEFAULT_GAP = 1e-3
DEFAULT_TIME_LIMIT = 3600.0
ORACLE_TOL = 0.01
INITIAL_STATES = ("offline", "free")


@dataclass
class UcModel:
    """A built model plus the bookkeeping needed to read a solution back."""

    model: MilpModel
    system: object
    mode: str
    bound_depth: int
    grid: fa.SegmentGrid | None
    var: dict = field(default_factory=dict)
    thresholds: np.ndarray | None = None  # farms x hours
    risk_cp: np.ndarray | None = None
    expansions: dict = field(default_factory=dict)
    blocks: dict = field(default_factory=dict)
    fixed: dict | None = None
    initial_state: str = "offline"

    @property
    def first_transition(self):
        return 0 if self.initial_state == "offline" else 1


def _transition_binaries(on, initial_state="offline"):
    """Start/stop flags into each hour; hour 0 compares against an offline fleet."""
    on = np.asarray(on)
    prev = np.zeros((on.shape[0], 1), dtype=on.dtype)
    diff = on - np.concatenate([prev, on[:, :-1]], axis=1)
    su, sd = (diff > 0).astype(int), (diff < 0).astype(int)
    if initial_state == "free":
        su[:, 0] = sd[:, 0] = 0
    return su, sd


def build(system, mode="freq_full", bound_depth=1, segment_fracs=None, fixed=None, initial_state="offline"):
    """Assemble the MILP for ``system``.

    Parameters
    ----------
    system : PowerSystem
    mode : {"no_freq", "freq_full"}
    bound_depth : int
        Subdivision depth of the convex-hull bound matrix.
    segment_fracs : sequence of float, optional
        Overrides the policy's segment fractions.
    fixed : dict, optional
        ``{"on": units x hours 0/1, "droop": farms x hours levels}``.  When
        given, all binaries are fixed and bilinear products are written
        exactly instead of through big-M rows, leaving a pure LP.
    initial_state : {"offline", "free"}
        ``offline``: every unit is off before hour 1, so units online in
        hour 1 pay a start-up and owe their minimum up time.  ``free``: the
        hour-1 status carries no transition cost or obligation.
    """
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}; choose from {MODES}")
    if initial_state not in INITIAL_STATES:
        raise ConfigError(f"unknown initial state {initial_state!r}; choose from {INITIAL_STATES}")
    pol = system.policy
    fracs = tuple(segment_fracs) if segment_fracs is not None else tuple(pol.segment_fracs)
    grid = fa.SegmentGrid.from_fractions(pol.horizon, fracs) if mode == "freq_full" else None
    jmat = bp.bound_rows(bound_depth)
    if mode == "freq_full" and not pol.qss_max > pol.dead_band:
        raise ConfigError("QSS limit must exceed the dead band")

    n_h = system.horizon_hours
    units, farms = system.units, system.wind_farms
    m = MilpModel()
    uc = UcModel(model=m, system=system, mode=mode, bound_depth=bound_depth, grid=grid, fixed=fixed,
                 initial_state=initial_state)
    t_first = uc.first_transition
    v = uc.var
    obj = LinExpr()

    if fixed is not None:
        on_fixed = np.asarray(fixed["on"], dtype=int)
        if on_fixed.shape != (len(units), n_h):
            raise BuildError("fixed commitment must be units x hours")
        su_fixed, sd_fixed = _transition_binaries(on_fixed, initial_state)

    # --- thermal units
    for i, u in enumerate(units):
        if u.p_min > u.p_max:
            raise BuildError(f"unit {u.id}: p_min exceeds p_max")
        n_pw = len(u.fuel_segments)
        seg_cap = (u.p_max - u.p_min) / n_pw
        for t in range(n_h):
            v["I", u.id, t] = m.add_var(f"I[{u.id},{t}]", binary=True)
            v["P", u.id, t] = m.add_var(f"P[{u.id},{t}]", 0.0, u.p_max)
            v["R", u.id, t] = m.add_var(f"R[{u.id},{t}]", 0.0, u.p_max)
            segs = [m.add_var(f"p[{u.id},{k},{t}]", 0.0, seg_cap) for k in range(n_pw)]
            v["pseg", u.id, t] = segs
            if fixed is not None:
                m.fix(v["I", u.id, t], on_fixed[i, t])
            it, pt, rt = v["I", u.id, t], v["P", u.id, t], v["R", u.id, t]
            # generation = p_min * I + sum of segments
            e = LinExpr({pt: 1.0, it: -u.p_min})
            for s in segs:
                e.add_term(s, -1.0)
            m.add_constr(e, "==", 0.0, ("pseg", u.id, t))
            m.add_constr(LinExpr({pt: 1.0, it: -u.p_min}), ">=", 0.0, ("pmin", u.id, t))
            m.add_constr(LinExpr({pt: 1.0, rt: 1.0, it: -u.p_max}), "<=", 0.0, ("pmax", u.id, t))
            obj.add_term(it, u.cost_online)
            for s, lam in zip(segs, u.fuel_segments):
                obj.add_term(s, lam)
            obj.add_term(rt, u.reserve_cost)
        for t in range(t_first, n_h):
            v["U", u.id, t] = m.add_var(f"U[{u.id},{t}]", binary=True)
            v["D", u.id, t] = m.add_var(f"D[{u.id},{t}]", binary=True)
            if fixed is not None:
                m.fix(v["U", u.id, t], su_fixed[i, t])
                m.fix(v["D", u.id, t], sd_fixed[i, t])
            obj.add_term(v["U", u.id, t], u.cost_startup)
            obj.add_term(v["D", u.id, t], u.cost_shutdown)
        _commitment_rows(m, v, u, n_h, t_first)

    # --- wind farms and chance constraints
    uc.thresholds = np.zeros((len(farms), n_h))
    uc.risk_cp = np.zeros((len(farms), n_h))
    for fi, f in enumerate(farms):
        for t in range(n_h):
            cp = policy_coefficient(pol, f.sigma[t])
            thr = drcc_threshold(f.forecast[t], f.sigma[t], cp)
            uc.risk_cp[fi, t] = cp
            uc.thresholds[fi, t] = thr
            v["Pw", f.id, t] = m.add_var(f"Pw[{f.id},{t}]", 0.0, f.capacity)
            v["Rw", f.id, t] = m.add_var(f"Rw[{f.id},{t}]", 0.0, f.capacity)
            m.add_constr(LinExpr({v["Pw", f.id, t]: 1.0, v["Rw", f.id, t]: 1.0}), "<=", thr, ("drcc", f.id, t))
            obj.add_term(v["Rw", f.id, t], f.reserve_cost)

    # --- network
    ptdf = system.ptdf()
    bidx = system.network.bus_index()
    for t in range(n_h):
        bal = LinExpr()
        for u in units:
            bal.add_term(v["P", u.id, t], 1.0)
        for f in farms:
            bal.add_term(v["Pw", f.id, t], 1.0)
        m.add_constr(bal, "==", float(system.load[:, t].sum()), ("balance", t))
        for j, ln in enumerate(system.network.lines):
            if math.isinf(ln.limit):
                continue
            flow = LinExpr()
            for u in units:
                flow.add_term(v["P", u.id, t], ptdf[j, bidx[u.bus]])
            for f in farms:
                flow.add_term(v["Pw", f.id, t], ptdf[j, bidx[f.bus]])
            base = float(ptdf[j] @ system.load[:, t])
            if not flow.terms:
                if abs(base) > ln.limit + 1e-9:
                    raise BuildError(f"line {ln.id} overloaded by fixed load at hour {t + 1}")
                continue
            m.add_constr(flow, "<=", ln.limit + base, ("line", ln.id, t, "up"))
            m.add_constr(flow, ">=", -ln.limit + base, ("line", ln.id, t, "down"))

    # --- frequency security
    for t in range(n_h):
        dp, kd_pd = event_params(system, t)
        if mode == "no_freq":
            e = lin_sum(LinExpr.var(v["R", u.id, t]) for u in units)
            for f in farms:
                e.add_term(v["Rw", f.id, t], 1.0)
            m.add_constr(e, ">=", dp, ("reserve_total", t))
        elif dp > 0:
            _freq_hour(uc, t, dp, kd_pd, jmat)

    m.set_objective(obj)
    return uc


def _commitment_rows(m, v, u, n_h, t_first):
    """Start/stop logic, truncated minimum up/down windows and ramping.

    ``U``/``D`` at hour ``t`` flag a transition into ``t``; with an offline
    initial state hour 0 compares against ``I = 0``.
    """
    for t in range(t_first, n_h):
        ut, dt = v["U", u.id, t], v["D", u.id, t]
        m.add_constr(LinExpr({ut: 1.0, dt: 1.0}), "<=", 1.0, ("UD", u.id, t))
        e = LinExpr({ut: 1.0, dt: -1.0, v["I", u.id, t]: -1.0})
        if t > 0:
            e.add_term(v["I", u.id, t - 1], 1.0)
        m.add_constr(e, "==", 0.0, ("UDI", u.id, t))
        up_window = range(t, min(t + u.min_up, n_h))
        e = LinExpr({v["I", u.id, k]: 1.0 for k in up_window})
        e.add_term(ut, -len(up_window))
        m.add_constr(e, ">=", 0.0, ("min_up", u.id, t))
        down_window = range(t, min(t + u.min_down, n_h))
        e = LinExpr({v["I", u.id, k]: -1.0 for k in down_window}, const=len(down_window))
        e.add_term(dt, -len(down_window))
        m.add_constr(e, ">=", 0.0, ("min_down", u.id, t))
    if t_first == 0:
        # ramp out of the offline initial state
        m.add_constr(LinExpr({v["P", u.id, 0]: 1.0, v["U", u.id, 0]: -u.ramp_startup}), "<=", 0.0,
                     ("ramp_up", u.id, -1))
    for t in range(n_h - 1):
        pt, pn = v["P", u.id, t], v["P", u.id, t + 1]
        m.add_constr(LinExpr({pn: 1.0, pt: -1.0, v["I", u.id, t]: -u.ramp_up, v["U", u.id, t + 1]: -u.ramp_startup}),
                     "<=", 0.0, ("ramp_up", u.id, t))
        m.add_constr(LinExpr({pt: 1.0, pn: -1.0, v["I", u.id, t + 1]: -u.ramp_down,
                              v["D", u.id, t + 1]: -u.ramp_shutdown}), "<=", 0.0, ("ramp_down", u.id, t))


def _freq_hour(uc, t, dp, kd_pd, jmat):
    m, v, system = uc.model, uc.var, uc.system
    pol = system.policy
    f0 = pol.f0
    fixed = uc.fixed
    unit_terms = []
    for i, u in enumerate(system.units):
        online = fa.Handle(v["I", u.id, t]) if fixed is None else int(fixed["on"][i][t])
        unit_terms.append(fa.UnitTerms(u.id, unit_inertia(u, f0), u.resp_const, u.droop, online))
    farm_terms = []
    for fi, f in enumerate(system.wind_farms):
        x = uc.expansions.setdefault(f.id, fa.expand_droop(f))
        handles = []
        fixed_bits = None if fixed is None else x.bits_for(fixed["droop"][fi][t])
        for b in range(x.n_bits):
            idx = m.add_var(f"w[{f.id},{b},{t}]", binary=True)
            v["bit", f.id, b, t] = idx
            if fixed is None:
                handles.append(fa.Handle(idx))
            else:
                m.fix(idx, fixed_bits[b])
                handles.append(fixed_bits[b])
        farm_terms.append(fa.FarmTerms(f.id, x, tuple(handles)))
        if x.needs_cap:
            e = LinExpr(const=x.offset)
            for b in range(x.n_bits):
                e.add_term(v["bit", f.id, b, t], (2**b) * x.step)
            m.add_constr(e, "<=", x.cap, ("droop_cap", f.id, t))
    h_wind = sum(wind_inertia(f, f0) for f in system.wind_farms)
    tag = f"h{t}"
    fa.rocof_constraint(m, fa.h_sys_expr(unit_terms, h_wind), dp, pol.rocof_max, (tag, "rocof"))
    fa.qss_constraint(m, fa.g_sys_expr(unit_terms, farm_terms), kd_pd, pol.dead_band, pol.qss_max, dp,
                      (tag, "qss"))
    block = fa.transcribe_dynamics(m, uc.grid, unit_terms, farm_terms, h_wind, kd_pd, dp, pol.dead_band,
                                   pol.nadir_max, tag)
    fa.nadir_bound(m, block, jmat, pol.nadir_max, tag)
    for u in system.units:
        fa.reserve_bound(m, block.pg[u.id], jmat, v["R", u.id, t], tag, u.id)
    for f in system.wind_farms:
        fa.reserve_bound(m, block.pw[f.id], jmat, v["Rw", f.id, t], tag, f.id)
    uc.blocks[t] = block


# ---------------------------------------------------------------------------
# solutions


@dataclass
class UcSolution:
    status: str
    objective: float | None
    costs: dict
    commitment: dict  # unit -> list of 0/1
    dispatch: dict  # unit -> MW per hour
    reserves: dict  # unit -> MW per hour
    wind_dispatch: dict
    wind_reserves: dict
    droop: dict  # farm -> MW/Hz per hour
    gap: float | None
    wall_time: float
    mode: str
    startup: dict = field(default_factory=dict)
    shutdown: dict = field(default_factory=dict)
    message: str = ""
    initial_state: str = "offline"
    x: np.ndarray | None = field(default=None, repr=False)

    @property
    def feasible(self):
        return self.status in ("optimal", "feasible_gap")

    def to_dict(self):
        return {
            "status": self.status,
            "mode": self.mode,
            "objective": self.objective,
            "costs": self.costs,
            "gap": self.gap,
            "wall_time_s": self.wall_time,
            "commitment": self.commitment,
            "startup": self.startup,
            "shutdown": self.shutdown,
            "dispatch": self.dispatch,
            "reserves": self.reserves,
            "wind_dispatch": self.wind_dispatch,
            "wind_reserves": self.wind_reserves,
            "droop": self.droop,
            "message": self.message,
            "initial_state": self.initial_state,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(status=d["status"], objective=d["objective"], costs=d["costs"], commitment=d["commitment"],
                   dispatch=d["dispatch"], reserves=d["reserves"], wind_dispatch=d["wind_dispatch"],
                   wind_reserves=d["wind_reserves"], droop=d["droop"], gap=d.get("gap"),
                   wall_time=d.get("wall_time_s", 0.0), mode=d.get("mode", ""), startup=d.get("startup", {}),
                   shutdown=d.get("shutdown", {}), message=d.get("message", ""),
                   initial_state=d.get("initial_state", "offline"))


def solve(uc, backend=None, gap_tol=DEFAULT_GAP, time_limit=DEFAULT_TIME_LIMIT):
    """Solve a built model and extract a :class:`UcSolution`."""
    backend = get_backend(backend)
    res = backend.solve(uc.model, gap_tol=gap_tol, time_limit=time_limit)
    if res.x is None:
        return UcSolution(res.status, None, {}, {}, {}, {}, {}, {}, {}, res.gap, res.wall_time, uc.mode,
                          message=res.message)
    return extract(uc, res.x, res.status, res.objective, res.gap, res.wall_time, res.message)


def _r(x):
    return float(round(float(x), 9))


def extract(uc, x, status="optimal", objective=None, gap=None, wall_time=0.0, message=""):
    system, v = uc.system, uc.var
    n_h = system.horizon_hours
    commitment, dispatch, reserves, startup, shutdown = {}, {}, {}, {}, {}
    c_sw = c_fuel = c_rg = c_rw = 0.0
    for u in system.units:
        on = [int(round(x[v["I", u.id, t]])) for t in range(n_h)]
        commitment[u.id] = on
        dispatch[u.id] = [_r(x[v["P", u.id, t]]) for t in range(n_h)]
        reserves[u.id] = [_r(x[v["R", u.id, t]]) for t in range(n_h)]
        hours = range(uc.first_transition, n_h)
        startup[u.id] = [int(round(x[v["U", u.id, t]])) if t in hours else 0 for t in range(n_h)]
        shutdown[u.id] = [int(round(x[v["D", u.id, t]])) if t in hours else 0 for t in range(n_h)]
        c_sw += sum(u.cost_startup * x[v["U", u.id, t]] + u.cost_shutdown * x[v["D", u.id, t]] for t in hours)
        for t in range(n_h):
            c_fuel += u.cost_online * x[v["I", u.id, t]]
            c_fuel += sum(lam * x[s] for lam, s in zip(u.fuel_segments, v["pseg", u.id, t]))
            c_rg += u.reserve_cost * x[v["R", u.id, t]]
    wind_dispatch, wind_reserves, droop = {}, {}, {}
    for f in system.wind_farms:
        wind_dispatch[f.id] = [_r(x[v["Pw", f.id, t]]) for t in range(n_h)]
        wind_reserves[f.id] = [_r(x[v["Rw", f.id, t]]) for t in range(n_h)]
        c_rw += sum(f.reserve_cost * x[v["Rw", f.id, t]] for t in range(n_h))
        droop[f.id] = [float(f.default_droop)] * n_h
        x_exp = uc.expansions.get(f.id)
        for t in uc.blocks if x_exp is not None else ():
            droop[f.id][t] = _r(x_exp.value([round(x[v["bit", f.id, b, t]]) for b in range(x_exp.n_bits)]))
    costs = {
        "startup_shutdown": _r(c_sw),
        "fuel": _r(c_fuel),
        "reserve_thermal": _r(c_rg),
        "reserve_wind": _r(c_rw),
    }
    costs["total"] = _r(sum(costs.values()))
    if objective is None:
        objective = costs["total"]
    return UcSolution(status, _r(objective), costs, commitment, dispatch, reserves, wind_dispatch, wind_reserves,
                      droop, gap, wall_time, uc.mode, startup, shutdown, message, uc.initial_state, x)


# ---------------------------------------------------------------------------
# validation against the time-domain oracle


def hour_scenario(system, solution, t):
    """The :class:`SfrScenario` implied by a solution at 0-based hour ``t``."""
    pol = system.policy
    dp, kd_pd = event_params(system, t)
    h_sys = sum(wind_inertia(f, pol.f0) for f in system.wind_farms)
    govs, names = [], []
    for u in system.units:
        if solution.commitment[u.id][t]:
            h_sys += unit_inertia(u, pol.f0)
            govs.append((u.resp_const, u.droop))
            names.append(u.id)
    g_w = sum(solution.droop[f.id][t] for f in system.wind_farms)
    return SfrScenario(h_sys=h_sys, kd_pd=kd_pd, dp=dp, governors=govs, g_w=g_w, f_db=pol.dead_band,
                       horizon=pol.horizon, names=names)


def validate(solution, system, dt=1e-3, tol=ORACLE_TOL):
    """Simulate every hour of a solution and check it against the policy.

    Returns a JSON-ready dict with per-hour metrics, pass flags and margins
    (limit minus value; negative means a violation).
    """
    pol = system.policy
    hours = []
    for t in range(system.horizon_hours):
        dp, _ = event_params(system, t)
        if dp <= 0:
            hours.append({"hour": t + 1, "rocof0": 0.0, "nadir_df": 0.0, "qss_df": 0.0, "pass": True})
            continue
        sc = hour_scenario(system, solution, t)
        traj, qss, settled = simulate_until_settled(sc, dt)
        met = traj.metrics
        rep = {
            "hour": t + 1,
            "h_sys": _r(sc.h_sys),
            "g_sys": _r(sc.g_sys),
            "dp": _r(dp),
            "t_db": None if traj.t_db is None else _r(traj.t_db),
            "rocof0": _r(met.rocof0),
            "nadir_df": _r(met.nadir_df),
            "nadir_t": _r(met.nadir_t),
            "qss_df": _r(qss),
            "qss_settled": settled,
            "rocof_margin": _r(pol.rocof_max - met.rocof0),
            "nadir_margin": _r(pol.nadir_max - met.nadir_df),
            "qss_margin": _r(pol.qss_max - qss),
        }
        rep["rocof_ok"] = met.rocof0 <= pol.rocof_max * (1 + 1e-9)
        rep["nadir_ok"] = met.nadir_df <= pol.nadir_max * (1 + tol)
        rep["qss_ok"] = qss <= pol.qss_max * (1 + tol)
        audit = {}
        for col, name in enumerate(sc.unit_names):
            peak = float(traj.pfr_g[:, col].max())
            r = solution.reserves[name][t]
            audit[name] = {"pfr_max": _r(peak), "reserve": r, "ok": peak <= r * (1 + tol) + 1e-6}
        for f in system.wind_farms:
            g = solution.droop[f.id][t]
            peak = float(np.max(g * (traj.df - pol.dead_band))) if len(traj.df) else 0.0
            r = solution.wind_reserves[f.id][t]
            audit[f.id] = {"pfr_max": _r(peak), "reserve": r, "ok": peak <= r * (1 + tol) + 1e-6}
        rep["reserve_audit"] = audit
        rep["reserve_ok"] = all(a["ok"] for a in audit.values())
        rep["pass"] = rep["rocof_ok"] and rep["nadir_ok"] and rep["qss_ok"]
        hours.append(rep)
    summary = {
        "all_pass": all(h["pass"] for h in hours),
        "max_rocof": max(h["rocof0"] for h in hours),
        "max_nadir": max(h["nadir_df"] for h in hours),
        "max_qss": max(h["qss_df"] for h in hours),
        "failed_hours": [h["hour"] for h in hours if not h["pass"]],
    }
    return {"summary": summary, "hours": hours}


def audit(solution, system, uc=None, tol=1e-6):
    """Re-check a solution independently of the solver; returns a list of problems."""
    problems = []
    n_h = system.horizon_hours
    for u in system.units:
        on = solution.commitment[u.id]
        su, sd = _transition_binaries([on], solution.initial_state)
        if solution.startup and (list(su[0]) != solution.startup[u.id] or list(sd[0]) != solution.shutdown[u.id]):
            problems.append(f"{u.id}: start/stop flags inconsistent with the commitment")
        problems += [f"{u.id}: {msg}" for msg in min_updown_violations(on, u, solution.initial_state)]
        for t in range(n_h):
            p, r = solution.dispatch[u.id][t], solution.reserves[u.id][t]
            if p < u.p_min * on[t] - tol or p + r > u.p_max * on[t] + tol:
                problems.append(f"{u.id}: capacity limits violated at hour {t + 1}")
    for t in range(n_h):
        gen = sum(solution.dispatch[u.id][t] for u in system.units)
        gen += sum(solution.wind_dispatch[f.id][t] for f in system.wind_farms)
        if abs(gen - float(system.load[:, t].sum())) > tol * max(1.0, gen):
            problems.append(f"power balance violated at hour {t + 1}")
    if uc is not None and uc.thresholds is not None:
        for fi, f in enumerate(system.wind_farms):
            for t in range(n_h):
                if solution.wind_dispatch[f.id][t] + solution.wind_reserves[f.id][t] > uc.thresholds[fi, t] + tol:
                    problems.append(f"{f.id}: DRCC row violated at hour {t + 1}")
    parts = sum(v for k, v in solution.costs.items() if k != "total")
    if solution.objective is not None and abs(parts - solution.objective) > 1e-4 * max(1.0, abs(solution.objective)):
        problems.append("cost breakdown does not sum to the objective")
    return problems


# ---------------------------------------------------------------------------
# exhaustive oracle for small instances

BRUTE_MAX_UNITS = 2
BRUTE_MAX_HOURS = 3
BRUTE_MAX_LEVELS = 4


def min_updown_violations(on, u, initial_state="offline"):
    """Minimum up/down breaches of a 0/1 schedule, windows truncated at the horizon end."""
    on = [int(x) for x in on]
    n_h = len(on)
    prev = [0] + on[:-1]
    out = []
    for t in range(0 if initial_state == "offline" else 1, n_h):
        if on[t] > prev[t] and not all(on[t:min(t + u.min_up, n_h)]):
            out.append(f"minimum up time violated after start at hour {t + 1}")
        if on[t] < prev[t] and any(on[t:min(t + u.min_down, n_h)]):
            out.append(f"minimum down time violated after stop at hour {t + 1}")
    return out


@dataclass
class BruteForceResult:
    status: str
    objective: float | None
    on: np.ndarray | None
    droop: np.ndarray | None
    n_lps: int
    wall_time: float


def brute_force_small(system, mode="freq_full", bound_depth=1, segment_fracs=None, backend=None,
                      initial_state="offline"):
    """Minimum over every binary assignment of the LP with binaries fixed.

    Start/stop binaries are implied by the commitment; assignments that break
    the minimum up/down rules are skipped since every LP restriction for them
    is infeasible.
    """
    units, farms = system.units, system.wind_farms
    n_h = system.horizon_hours
    if len(units) > BRUTE_MAX_UNITS or n_h > BRUTE_MAX_HOURS:
        raise ConfigError(f"brute force is limited to {BRUTE_MAX_UNITS} units and {BRUTE_MAX_HOURS} hours")
    levels = [f.droop_levels for f in farms] if mode == "freq_full" else [[f.default_droop] for f in farms]
    if any(len(lv) > BRUTE_MAX_LEVELS for lv in levels):
        raise ConfigError(f"brute force is limited to {BRUTE_MAX_LEVELS} droop levels per farm")
    backend = get_backend(backend)
    start = time.perf_counter()
    best = BruteForceResult("infeasible", None, None, None, 0, 0.0)
    commitments = [np.array(c).reshape(len(units), n_h)
                   for c in itertools.product((0, 1), repeat=len(units) * n_h)]
    commitments = [c for c in commitments
                   if not any(min_updown_violations(c[i], u, initial_state) for i, u in enumerate(units))]
    droop_choices = list(itertools.product(*[levels[fi] for fi in range(len(farms)) for _ in range(n_h)]))
    for on in commitments:
        for choice in droop_choices:
            droop = np.array(choice, dtype=float).reshape(len(farms), n_h)
            uc = build(system, mode, bound_depth, segment_fracs, fixed={"on": on, "droop": droop},
                       initial_state=initial_state)
            res = backend.solve(uc.model, gap_tol=0.0, time_limit=60.0)
            best.n_lps += 1
            if res.status == "optimal" and (best.objective is None or res.objective < best.objective - 1e-12):
                best = BruteForceResult("optimal", res.objective, on.copy(), droop, best.n_lps, 0.0)
    best.wall_time = time.perf_counter() - start
    return best


# ---------------------------------------------------------------------------
# re-dispatch estimate


def expected_redispatch_cost(solution, system, price=40.0, n_scenarios=1000, seed=0):
    """Monte Carlo estimate of thermal re-dispatch cost for wind shortfalls.

    A labeled approximation: every MW of scheduled wind (energy plus reserve)
    that the sampled availability cannot deliver is replaced by thermal
    generation at ``price`` $/MWh.
    """
    rng = np.random.default_rng(seed)
    total = 0.0
    for f in system.wind_farms:
        mu = np.array(f.forecast)
        sd = np.array(f.sigma)
        sched = np.array(solution.wind_dispatch[f.id]) + np.array(solution.wind_reserves[f.id])
        avail = rng.normal(mu, sd, size=(n_scenarios, len(mu)))
        total += float(np.mean(np.maximum(sched - avail, 0.0).sum(axis=1)))
    return price * total


def save_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))
