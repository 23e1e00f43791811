"""Reference simulator of the two-stage system frequency response.

Sign convention: ``df = f0 - f`` so an under-frequency event gives ``df >= 0``.

Stage 1 (``df < dead band``) has no primary response and a closed-form
solution.  Stage 2 starts at the dead-band crossing ``t_db`` and integrates

    2 H  d(df)/dt = dP - kD_Pd * df - sum_i Pg_i - Pw
    T_i  d(Pg_i)/dt = G_i (df - f_db) - Pg_i
    Pw = G_w (df - f_db)

with fixed-step RK4 from ``df(t_db) = f_db`` and ``Pg_i(t_db) = 0``.
"""

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericalError, ValidationError

log = logging.getLogger(__name__)

DEFAULT_DT = 1e-3
DEFAULT_HORIZON = 30.0
QSS_SLOPE_TOL = 1e-4


@dataclass(frozen=True)
class SfrScenario:
    """Inputs of one frequency event.

    ``governors`` holds ``(T_g, G_eff)`` pairs; ``G_eff`` already includes
    the commitment status of the unit.
    """

    h_sys: float
    kd_pd: float
    dp: float
    governors: tuple = ()
    g_w: float = 0.0
    f_db: float = 0.0
    horizon: float = DEFAULT_HORIZON
    reserve_caps: tuple | None = None
    names: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "governors", tuple((float(t), float(g)) for t, g in self.governors))
        if self.names is not None:
            object.__setattr__(self, "names", tuple(str(n) for n in self.names))
        if self.reserve_caps is not None:
            object.__setattr__(self, "reserve_caps", tuple(float(r) for r in self.reserve_caps))
        self.validate()

    def validate(self):
        if not self.h_sys > 0:
            raise ValidationError(f"system inertia must be positive, got {self.h_sys}")
        if self.kd_pd < 0:
            raise ValidationError("damping must be non-negative")
        if not self.dp > 0:
            raise ValidationError("only under-frequency events (dP > 0) are supported")
        if self.f_db < 0:
            raise ValidationError("dead band must be non-negative")
        if not self.horizon > 0:
            raise ValidationError("horizon must be positive")
        for t, g in self.governors:
            if not t > 0:
                raise ValidationError(f"governor response constant must be positive, got {t}")
            if g < 0:
                raise ValidationError(f"governor droop must be non-negative, got {g}")
        if self.g_w < 0:
            raise ValidationError("wind droop must be non-negative")
        if self.names is not None and len(self.names) != len(self.governors):
            raise ValidationError("one name per governor is required")
        if self.reserve_caps is not None and len(self.reserve_caps) != len(self.governors) + 1:
            raise ValidationError("reserve_caps needs one entry per governor plus one for wind")

    @property
    def g_sys(self):
        return sum(g for _, g in self.governors) + self.g_w

    @property
    def unit_names(self):
        if self.names is not None:
            return self.names
        return tuple(f"g{i + 1}" for i in range(len(self.governors)))

    @classmethod
    def from_dict(cls, d):
        known = {"h_sys", "kd_pd", "dp", "governors", "g_w", "f_db", "horizon", "reserve_caps", "names"}
        extra = set(d) - known
        if extra:
            raise ValidationError(f"unknown scenario keys: {sorted(extra)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ValidationError(str(exc)) from None

    def to_dict(self):
        return {
            "h_sys": self.h_sys,
            "kd_pd": self.kd_pd,
            "dp": self.dp,
            "governors": [list(g) for g in self.governors],
            "g_w": self.g_w,
            "f_db": self.f_db,
            "horizon": self.horizon,
            "reserve_caps": None if self.reserve_caps is None else list(self.reserve_caps),
            "names": list(self.unit_names),
        }


@dataclass(frozen=True)
class Metrics:
    rocof0: float
    nadir_df: float
    nadir_t: float
    qss_df: float
    qss_converged: bool = True


@dataclass
class Trajectory:
    """Time series of one simulated event.

    ``pfr_g`` has one column per governor.
    """

    t: np.ndarray
    df: np.ndarray
    pfr_g: np.ndarray
    pfr_w: np.ndarray
    t_db: float | None = None
    scenario: SfrScenario | None = None
    end_slope: float | None = None
    _metrics: Metrics | None = field(default=None, repr=False)

    @property
    def pfr_total(self):
        return self.pfr_g.sum(axis=1) + self.pfr_w

    @property
    def metrics(self):
        if self._metrics is None:
            self._metrics = metrics(self)
        return self._metrics

    def to_csv(self, path, names=None):
        if names is None:
            names = self.scenario.unit_names if self.scenario is not None else [
                f"g{i + 1}" for i in range(self.pfr_g.shape[1])]
        header = ["t", "df_hz", "pfr_total_mw", *[f"pfr_g_{n}" for n in names], "pfr_w"]
        total = self.pfr_total
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for i in range(len(self.t)):
                row = [self.t[i], self.df[i], total[i], *self.pfr_g[i], self.pfr_w[i]]
                w.writerow([f"{v:.9g}" for v in row])


def stage1_analytic(s):
    """Dead-band crossing time and closed-form stage-1 deviation.

    Returns ``(t_db, df_fn)``; ``t_db`` is None when the stage-1 asymptote
    ``dP / kD_Pd`` does not exceed the dead band.
    """
    if s.kd_pd > 0:
        asym = s.dp / s.kd_pd
        rate = s.kd_pd / (2.0 * s.h_sys)

        def df_fn(t):
            return asym * -np.expm1(-rate * np.asarray(t, dtype=float))

        if s.f_db == 0:
            return 0.0, df_fn
        if asym <= s.f_db:
            return None, df_fn
        t_db = -math.log1p(-s.f_db / asym) / rate
    else:
        slope = s.dp / (2.0 * s.h_sys)

        def df_fn(t):
            return slope * np.asarray(t, dtype=float)

        t_db = s.f_db / slope
    if abs(float(df_fn(t_db)) - s.f_db) >= 1e-10:
        # closed form lost precision; polish by bisection
        from scipy.optimize import brentq

        t_db = brentq(lambda t: float(df_fn(t)) - s.f_db, 0.0, 2 * t_db + 1.0, xtol=1e-15)
    return t_db, df_fn


def rocof_initial(s):
    """Initial (and maximal) rate of change of frequency, Hz/s."""
    return s.dp / (2.0 * s.h_sys)


def qss_closed_form(s):
    """Quasi-steady-state deviation from the stage-2 equilibrium."""
    g_sys = s.g_sys
    if s.kd_pd == 0 and g_sys == 0:
        raise DomainError("no damping and no droop: the deviation has no steady state")
    active = (s.dp + g_sys * s.f_db) / (s.kd_pd + g_sys)
    if active > s.f_db:
        return active
    return s.dp / s.kd_pd


def _rhs_factory(s):
    tg = np.array([t for t, _ in s.governors])
    gg = np.array([g for _, g in s.governors])
    caps = None if s.reserve_caps is None else np.array(s.reserve_caps)
    two_h = 2.0 * s.h_sys

    def pfr(x):
        excess = x[0] - s.f_db
        pg = x[1:]
        pw = s.g_w * excess
        if caps is not None:
            pg = np.minimum(pg, caps[:-1])
            pw = min(pw, caps[-1])
        return pg, pw

    def rhs(x):
        excess = x[0] - s.f_db
        pg, pw = pfr(x)
        out = np.empty_like(x)
        out[0] = (s.dp - s.kd_pd * x[0] - pg.sum() - pw) / two_h
        out[1:] = (gg * excess - x[1:]) / tg
        return out

    return rhs, pfr


def _affine_rk4_step(s, h):
    """One classical RK4 step of the uncapped stage-2 system as ``x -> M x + c``.

    Without reserve caps the right-hand side is affine, ``A x + b``, and the
    RK4 update collapses to a fixed matrix polynomial in ``h A``.
    """
    n = len(s.governors)
    a = np.zeros((n + 1, n + 1))
    b = np.zeros(n + 1)
    two_h = 2.0 * s.h_sys
    a[0, 0] = -(s.kd_pd + s.g_w) / two_h
    a[0, 1:] = -1.0 / two_h
    b[0] = (s.dp + s.g_w * s.f_db) / two_h
    for i, (tg, g) in enumerate(s.governors):
        a[i + 1, 0] = g / tg
        a[i + 1, i + 1] = -1.0 / tg
        b[i + 1] = -g * s.f_db / tg
    ha = h * a
    eye = np.eye(n + 1)
    ha2 = ha @ ha
    ha3 = ha2 @ ha
    m = eye + ha + ha2 / 2.0 + ha3 / 6.0 + ha3 @ ha / 24.0
    c = h * (eye + ha / 2.0 + ha2 / 6.0 + ha3 / 24.0) @ b
    return m, c


def simulate(s, dt=DEFAULT_DT):
    """Simulate the event over ``[0, s.horizon]`` and return a :class:`Trajectory`."""
    if not dt > 0 or dt > s.horizon / 100.0:
        raise DomainError(f"dt must lie in (0, horizon/100], got {dt}")
    n_gov = len(s.governors)
    t_db, df_fn = stage1_analytic(s)
    rhs, pfr = _rhs_factory(s)

    stage1_end = s.horizon if t_db is None else min(t_db, s.horizon)
    n1 = int(math.floor(stage1_end / dt + 1e-9))
    t1 = np.arange(n1 + 1) * dt
    if t1[-1] < stage1_end:
        t1 = np.append(t1, stage1_end)
    df1 = df_fn(t1)
    if t_db is not None and t_db <= s.horizon:
        df1[-1] = s.f_db
    ts = [t1]
    dfs = [df1]
    pgs = [np.zeros((len(t1), n_gov))]
    pws = [np.zeros(len(t1))]
    end_slope = None

    if t_db is None or t_db >= s.horizon:
        end_slope = float((s.dp - s.kd_pd * df1[-1]) / (2.0 * s.h_sys))
    else:
        span = s.horizon - t_db
        n2 = int(math.ceil(span / dt - 1e-9))
        x = np.zeros(1 + n_gov)
        x[0] = s.f_db
        caps = None if s.reserve_caps is None else np.array(s.reserve_caps[:-1])
        t2 = np.empty(n2)
        states = np.empty((n2, 1 + n_gov))
        t = t_db
        step = None if caps is not None else _affine_rk4_step(s, dt)
        for i in range(n2):
            h = min(dt, s.horizon - t)
            if step is not None and h == dt:
                x = step[0] @ x + step[1]
                if not np.all(np.isfinite(x)):
                    raise NumericalError(f"non-finite state at t={t + h:.6g}s: {x}")
                t = t_db + (i + 1) * dt if i + 1 < n2 else s.horizon
                t2[i] = t
                states[i] = x
                continue
            k1 = rhs(x)
            k2 = rhs(x + 0.5 * h * k1)
            k3 = rhs(x + 0.5 * h * k2)
            k4 = rhs(x + h * k3)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if caps is not None:
                x[1:] = np.minimum(x[1:], caps)
            if not np.all(np.isfinite(x)):
                raise NumericalError(f"non-finite state at t={t + h:.6g}s: {x}")
            t = t_db + (i + 1) * dt if i + 1 < n2 else s.horizon
            t2[i] = t
            states[i] = x
        pg2 = states[:, 1:].copy()
        pw2 = s.g_w * (states[:, 0] - s.f_db)
        if caps is not None:
            pg2 = np.minimum(pg2, caps)
            pw2 = np.minimum(pw2, s.reserve_caps[-1])
        ts.append(t2)
        dfs.append(states[:, 0])
        pgs.append(pg2)
        pws.append(pw2)
        end_slope = float(rhs(x)[0])

    traj = Trajectory(
        t=np.concatenate(ts),
        df=np.concatenate(dfs),
        pfr_g=np.vstack(pgs),
        pfr_w=np.concatenate(pws),
        t_db=t_db,
        scenario=s,
        end_slope=end_slope,
    )
    return traj


def _refine_peak(t, y, i):
    if i == 0 or i == len(y) - 1:
        return float(y[i]), float(t[i])
    t0, t1, t2 = t[i - 1], t[i], t[i + 1]
    y0, y1, y2 = y[i - 1], y[i], y[i + 1]
    # vertex of the parabola through three (possibly uneven) samples
    d1 = (y1 - y0) / (t1 - t0)
    d2 = (y2 - y1) / (t2 - t1)
    a = (d2 - d1) / (t2 - t0)
    if a >= 0:
        return float(y1), float(t1)
    b = d1 - a * (t0 + t1)
    tv = -b / (2 * a)
    if not t0 <= tv <= t2:
        return float(y1), float(t1)
    yv = y0 + d1 * (tv - t0) + a * (tv - t0) * (tv - t1)
    return float(max(yv, y1)), float(tv)


def _trailing_slope(traj, window=0.1):
    # A lightly damped mode can pass a turning point exactly at the horizon
    # end, so the slope is checked over the last `window` of the horizon.
    if len(traj.t) < 2:
        return 0.0
    t_end = traj.t[-1]
    start = np.searchsorted(traj.t, t_end * (1.0 - window))
    start = min(start, len(traj.t) - 2)
    seg_t = traj.t[start:]
    seg_y = traj.df[start:]
    keep = np.diff(seg_t) > 0
    slopes = np.diff(seg_y)[keep] / np.diff(seg_t)[keep]
    worst = float(np.max(np.abs(slopes))) if len(slopes) else 0.0
    if traj.end_slope is not None:
        worst = max(worst, abs(traj.end_slope))
    return worst


def metrics(traj):
    """RoCoF at t=0, refined nadir, and end-of-horizon deviation.

    The QSS value is flagged unconverged (a status, not an error) when the
    slope anywhere in the last tenth of the horizon exceeds ``QSS_SLOPE_TOL``.
    """
    if len(traj.t) == 0:
        raise DomainError("empty trajectory")
    if traj.scenario is not None:
        rocof0 = rocof_initial(traj.scenario)
    elif len(traj.t) > 1:
        rocof0 = float((traj.df[1] - traj.df[0]) / (traj.t[1] - traj.t[0]))
    else:
        rocof0 = 0.0
    i = int(np.argmax(traj.df))
    nadir, nadir_t = _refine_peak(traj.t, traj.df, i)
    qss = float(traj.df[-1])
    slope = _trailing_slope(traj)
    converged = slope <= QSS_SLOPE_TOL
    if not converged:
        log.info("QSS not converged at horizon end (slope up to %.3g Hz/s)", slope)
    return Metrics(rocof0=rocof0, nadir_df=nadir, nadir_t=nadir_t, qss_df=qss, qss_converged=converged)


def simulate_until_settled(s, dt=DEFAULT_DT, max_extend=16):
    """Simulate, doubling the horizon until the QSS slope criterion holds.

    Returns ``(trajectory_at_original_horizon, settled_qss, converged)``.
    """
    traj = simulate(s, dt)
    m = traj.metrics
    if m.qss_converged:
        return traj, m.qss_df, True
    factor = 2
    while factor <= max_extend:
        longer = SfrScenario(**{**s.__dict__, "horizon": s.horizon * factor})
        lm = simulate(longer, dt).metrics
        if lm.qss_converged:
            return traj, lm.qss_df, True
        factor *= 2
    return traj, lm.qss_df, False
