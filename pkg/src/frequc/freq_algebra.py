"""Linear transcription of the frequency-security DAEs.

The stage-2 dynamics are approximated on a grid of segments, each carrying a
cubic Bernstein spline for the frequency deviation and for every primary
response signal.  Integrating the ODEs from the segment start turns them into
linear equations on the coefficients:

    (2H/h)(df - df_ini) + kD_Pd L' df       = L'(dP - P_sys)
    (T_i/h)(Pg_i - Pg_ini) + L' Pg_i        = G_i I_i L'(df - f_db)
    Pw_f                                    = G_w,f (df - f_db)

Products of binaries (commitment, droop bits) with spline coefficients are
linearized by big-M; in *fixed* mode the binaries are numbers and the
products collapse to scaled variables.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import bernstein as bp
from .errors import ConfigError, NumericalError
from .milp import LinExpr, lin_sum


@dataclass(frozen=True)
class SegmentGrid:
    """Segment lengths (s) covering the dynamic horizon."""

    lengths: tuple

    def __post_init__(self):
        if not self.lengths or any(not h > 0 for h in self.lengths):
            raise ConfigError("segment lengths must be positive")

    @classmethod
    def from_fractions(cls, horizon, fractions):
        if abs(sum(fractions) - 1.0) > 1e-12:
            raise ConfigError(f"segment fractions sum to {sum(fractions)!r}, not 1")
        return cls(tuple(horizon * f for f in fractions))

    @classmethod
    def even(cls, horizon, n):
        if n < 1:
            raise ConfigError("need at least one segment")
        return cls(tuple([horizon / n] * n))

    @property
    def n(self):
        return len(self.lengths)

    @property
    def horizon(self):
        return float(sum(self.lengths))

    @property
    def starts(self):
        return tuple(np.concatenate([[0.0], np.cumsum(self.lengths)[:-1]]))


@dataclass(frozen=True)
class DroopExpansion:
    """Wind droop encoded as ``offset + sum_k bit_k * 2**k * step``, capped at ``cap``."""

    offset: float
    step: float
    n_bits: int
    cap: float

    def value(self, bits):
        return self.offset + sum(b * (2**k) * self.step for k, b in enumerate(bits))

    @property
    def levels(self):
        out = []
        for code in range(2**self.n_bits):
            v = self.value([(code >> k) & 1 for k in range(self.n_bits)])
            if v <= self.cap + 1e-9:
                out.append(v)
        return out

    @property
    def needs_cap(self):
        return self.value([1] * self.n_bits) > self.cap + 1e-9

    def bits_for(self, level):
        code = int(round((level - self.offset) / self.step))
        if (code < 0 or code >= 2**self.n_bits or level > self.cap + 1e-9
                or abs(self.value(_bits(code, self.n_bits)) - level) > 1e-9):
            raise ConfigError(f"droop {level} is not representable")
        return _bits(code, self.n_bits)


def _bits(code, n):
    return [(code >> k) & 1 for k in range(n)]


def expand_droop(farm):
    """Smallest binary expansion covering the farm's droop range."""
    span = int(round((farm.droop_max - farm.droop_min) / farm.droop_step))
    n_bits = 0 if span == 0 else math.ceil(math.log2(span + 1))
    return DroopExpansion(offset=farm.droop_min, step=farm.droop_step, n_bits=n_bits, cap=farm.droop_max)


# ---------------------------------------------------------------------------
# scalar security rows


def rocof_constraint(model, h_sys_expr, dp, limit, tag=("rocof",)):
    """``2 * limit * H_sys >= dP``; returns the constraint index."""
    return model.add_constr(h_sys_expr * (2.0 * limit), ">=", dp, tag)


def qss_constraint(model, g_sys_expr, kd_pd, f_db, limit, dp, tag=("qss",)):
    """``kD_Pd * limit + G_sys * (limit - f_db) >= dP``."""
    if not limit > f_db:
        raise ConfigError(f"QSS limit {limit} must exceed the dead band {f_db}")
    return model.add_constr(g_sys_expr * (limit - f_db), ">=", dp - kd_pd * limit, tag)


# ---------------------------------------------------------------------------
# products


def linearize_product(model, binary, x_index, big_m, name, tag=()):
    """Expression equal to ``binary * x`` for ``x`` in ``[0, big_m]``.

    ``binary`` is either a variable index (a product variable and four big-M
    rows are emitted) or a fixed number (no rows; the product is exact).
    """
    if not isinstance(binary, Handle):
        return LinExpr.var(x_index, float(binary))
    if not big_m > 0:
        raise ConfigError("big-M must be positive")
    a = model.add_var(name, -big_m, big_m)
    w = binary.index
    # -M w <= a <= M w
    model.add_constr(LinExpr({a: 1.0, w: big_m}), ">=", 0.0, (*tag, "bigM", 0))
    model.add_constr(LinExpr({a: 1.0, w: -big_m}), "<=", 0.0, (*tag, "bigM", 1))
    # x - M(1-w) <= a <= x + M(1-w)
    model.add_constr(LinExpr({a: 1.0, x_index: -1.0, w: -big_m}), ">=", -big_m, (*tag, "bigM", 2))
    model.add_constr(LinExpr({a: 1.0, x_index: -1.0, w: big_m}), "<=", big_m, (*tag, "bigM", 3))
    return LinExpr.var(a)


@dataclass(frozen=True)
class Handle:
    """A binary decision variable, as opposed to a fixed 0/1 number."""

    index: int


def as_expr(binary):
    return LinExpr.var(binary.index) if isinstance(binary, Handle) else LinExpr(const=float(binary))


# ---------------------------------------------------------------------------
# per-hour block


@dataclass(frozen=True)
class UnitTerms:
    name: str
    inertia: float  # MW*s/Hz
    resp_const: float
    droop: float
    online: object  # Handle or 0/1


@dataclass(frozen=True)
class FarmTerms:
    name: str
    expansion: DroopExpansion
    bits: tuple  # Handles or 0/1


@dataclass
class FreqBlock:
    """Variable indices of one hour's spline coefficients (segment-major)."""

    df: list = field(default_factory=list)
    pg: dict = field(default_factory=dict)
    pw: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)


def _lt():
    return bp.integral_matrix().T


def transcribe_dynamics(model, grid, units, farms, inertia_wind, kd_pd, dp, f_db, df_max, prefix):
    """Emit the spline dynamics of one hour and return its :class:`FreqBlock`.

    ``df_max`` is the coefficient box for the frequency deviation and doubles
    as the big-M constant.
    """
    lt = _lt()
    block = FreqBlock(pg={u.name: [] for u in units}, pw={f.name: [] for f in farms})
    ones_lt = lt @ np.ones(4)
    prev = None
    for s, h in enumerate(grid.lengths):
        tag = (prefix, s)
        d = [model.add_var(f"{prefix}:df[{s},{k}]", 0.0, df_max) for k in range(4)]
        pg = {u.name: [model.add_var(f"{prefix}:pg[{u.name},{s},{k}]", -math.inf, math.inf) for k in range(4)]
              for u in units}
        pw = {f.name: [model.add_var(f"{prefix}:pw[{f.name},{s},{k}]", -math.inf, math.inf) for k in range(4)]
              for f in farms}
        # unit products online_i * df[k]
        ud = {u.name: [linearize_product(model, u.online, d[k], df_max, f"{prefix}:on_df[{u.name},{s},{k}]",
                                         (*tag, "on_df", u.name, k)) for k in range(4)] for u in units}
        fd = {}
        for f in farms:
            for b, bit in enumerate(f.bits):
                fd[f.name, b] = [linearize_product(model, bit, d[k], df_max,
                                                   f"{prefix}:bit_df[{f.name},{b},{s},{k}]",
                                                   (*tag, "bit_df", f.name, b, k)) for k in range(4)]

        if prev is None:
            d_ini = LinExpr(const=f_db)
            ud_ini = {u.name: as_expr(u.online) * f_db for u in units}
            pg_ini = {u.name: LinExpr() for u in units}
        else:
            d_ini = LinExpr.var(prev["d"][3])
            ud_ini = {u.name: prev["ud"][u.name][3] for u in units}
            pg_ini = {u.name: LinExpr.var(prev["pg"][u.name][3]) for u in units}

        # (i) frequency dynamics
        for r in range(4):
            e = LinExpr()
            for u in units:
                e += (ud[u.name][r] - ud_ini[u.name]) * (2.0 * u.inertia / h)
            e += (LinExpr.var(d[r]) - d_ini) * (2.0 * inertia_wind / h)
            for k in range(4):
                if lt[r, k]:
                    e.add_term(d[k], kd_pd * lt[r, k])
                    for u in units:
                        e.add_term(pg[u.name][k], lt[r, k])
                    for f in farms:
                        e.add_term(pw[f.name][k], lt[r, k])
            block.rows.append(model.add_constr(e, "==", dp * ones_lt[r], (*tag, "dyn", r)))

        # (iii) governor response
        for u in units:
            for r in range(4):
                e = (LinExpr.var(pg[u.name][r]) - pg_ini[u.name]) * (u.resp_const / h)
                for k in range(4):
                    if lt[r, k]:
                        e.add_term(pg[u.name][k], lt[r, k])
                        e += (ud[u.name][k] - as_expr(u.online) * f_db) * (-u.droop * lt[r, k])
                block.rows.append(model.add_constr(e, "==", 0.0, (*tag, "gov", u.name, r)))

        # (iv) inverter response
        for f in farms:
            x = f.expansion
            for r in range(4):
                e = LinExpr.var(pw[f.name][r])
                e += (LinExpr.var(d[r]) - f_db) * (-x.offset)
                for b, bit in enumerate(f.bits):
                    e += (fd[f.name, b][r] - as_expr(bit) * f_db) * (-(2**b) * x.step)
                block.rows.append(model.add_constr(e, "==", 0.0, (*tag, "wind", f.name, r)))

        block.df.append(d)
        for u in units:
            block.pg[u.name].append(pg[u.name])
        for f in farms:
            block.pw[f.name].append(pw[f.name])
        prev = {"d": d, "ud": ud, "pg": pg}
    return block


def nadir_bound(model, block, jmat, limit, prefix):
    """``J df <= limit`` on every segment."""
    rows = []
    for s, d in enumerate(block.df):
        for r, row in enumerate(jmat):
            rows.append(model.add_constr(LinExpr({d[k]: row[k] for k in range(4) if row[k]}), "<=", limit,
                                         (prefix, s, "nadir", r)))
    return rows


def reserve_bound(model, coeff_vars, jmat, reserve, prefix, name):
    """``J P <= R`` for one resource over all segments; ``reserve`` is a variable index."""
    rows = []
    for s, p in enumerate(coeff_vars):
        for r, row in enumerate(jmat):
            e = LinExpr({p[k]: row[k] for k in range(4) if row[k]})
            e.add_term(reserve, -1.0)
            rows.append(model.add_constr(e, "<=", 0.0, (prefix, s, "reserve", name, r)))
    return rows


# ---------------------------------------------------------------------------
# fixed-parameter transcription (no optimization)


@dataclass
class SplineSolution:
    grid: SegmentGrid
    df: np.ndarray  # (segments, 4)
    pg: np.ndarray  # (governors, segments, 4)
    pw: np.ndarray  # (segments, 4)
    t_offset: float = 0.0

    def curve(self, samples_per_segment=1001):
        ts, ys = [], []
        u = np.linspace(0.0, 1.0, samples_per_segment)
        for s, (t0, h) in enumerate(zip(self.grid.starts, self.grid.lengths)):
            ts.append(self.t_offset + t0 + h * u)
            ys.append(bp.eval(self.df[s], u))
        return np.concatenate(ts), np.concatenate(ys)

    def nadir(self):
        """Exact maximum of the piecewise cubic deviation and its time."""
        best, best_t = -math.inf, 0.0
        for s, (t0, h) in enumerate(zip(self.grid.starts, self.grid.lengths)):
            v, u = spline_max(self.df[s])
            if v > best:
                best, best_t = v, self.t_offset + t0 + h * u
        return best, best_t

    def bound(self, depth=1):
        """Largest ``J`` row over all segments (the value the MILP constrains)."""
        return max(bp.upper_bound(c, depth) for c in self.df)


def spline_max(coeffs):
    """Exact maximum of one cubic segment on ``[0, 1]``: ``(value, t)``."""
    q = bp.derivative(coeffs)
    # quadratic in power basis: q0(1-t)^2 + 2 q1 t(1-t) + q2 t^2
    a = q[0] - 2 * q[1] + q[2]
    b = 2 * (q[1] - q[0])
    c = q[0]
    cands = [0.0, 1.0]
    if abs(a) > 1e-300:
        disc = b * b - 4 * a * c
        if disc >= 0:
            r = math.sqrt(disc)
            cands += [(-b + r) / (2 * a), (-b - r) / (2 * a)]
    elif abs(b) > 1e-300:
        cands.append(-c / b)
    cands = [t for t in cands if 0.0 <= t <= 1.0]
    vals = [bp.eval(coeffs, t) for t in cands]
    i = int(np.argmax(vals))
    return float(vals[i]), float(cands[i])


def transcribe_fixed(h_sys, kd_pd, dp, governors, g_w, f_db, grid, t_offset=0.0):
    """Solve the transcribed equalities for fixed inertia and droops.

    ``governors`` is a sequence of ``(T_g, G_eff)``.  Each segment is a
    square linear system solved in sequence; the result is the unique spline
    the MILP would be forced to for the same binaries.
    """
    lt = _lt()
    eye = np.eye(4)
    one = np.ones(4)
    n = len(governors)
    d_ini, p_ini = f_db, np.zeros(n)
    dfs, pgs, pws = [], [], []
    for h in grid.lengths:
        size = 4 * (1 + n)
        m = np.zeros((size, size))
        rhs = np.zeros(size)
        m[:4, :4] = (2 * h_sys / h) * eye + (kd_pd + g_w) * lt
        rhs[:4] = (2 * h_sys / h) * d_ini * one + dp * (lt @ one) + g_w * f_db * (lt @ one)
        for i, (tg, g) in enumerate(governors):
            sl = slice(4 + 4 * i, 8 + 4 * i)
            m[:4, sl] = lt
            m[sl, sl] = (tg / h) * eye + lt
            m[sl, :4] = -g * lt
            rhs[sl] = (tg / h) * p_ini[i] * one - g * f_db * (lt @ one)
        try:
            x = np.linalg.solve(m, rhs)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"singular transcription system: {exc}") from None
        if not np.all(np.isfinite(x)):
            raise NumericalError("non-finite transcription solution")
        d = x[:4]
        p = x[4:].reshape(n, 4)
        dfs.append(d)
        pgs.append(p)
        pws.append(g_w * (d - f_db))
        d_ini, p_ini = d[3], p[:, 3].copy()
    pg = np.stack(pgs, axis=1) if n else np.zeros((0, grid.n, 4))
    return SplineSolution(grid, np.array(dfs), pg, np.array(pws), t_offset)


def transcribe_scenario(scenario, grid):
    """:func:`transcribe_fixed` for an :class:`~frequc.sfr.SfrScenario`, started at its dead-band crossing."""
    from .sfr import stage1_analytic

    t_db, _ = stage1_analytic(scenario)
    return transcribe_fixed(scenario.h_sys, scenario.kd_pd, scenario.dp, scenario.governors, scenario.g_w,
                            scenario.f_db, grid, t_offset=t_db or 0.0)


def g_sys_expr(units, farms):
    """Linear expression for the total droop ``sum G_i I_i + sum G_w``."""
    e = lin_sum(as_expr(u.online) * u.droop for u in units)
    for f in farms:
        e += f.expansion.offset
        for b, bit in enumerate(f.bits):
            e += as_expr(bit) * ((2**b) * f.expansion.step)
    return e


def h_sys_expr(units, inertia_wind):
    return lin_sum(as_expr(u.online) * u.inertia for u in units) + inertia_wind
