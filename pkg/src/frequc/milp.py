"""Solver-agnostic MILP container and solver backends.

Models are built incrementally with :class:`MilpModel` and handed to a
backend, which only needs to understand a sparse constraint matrix, bounds,
integrality flags and a linear objective.
"""

import math
import os
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, milp

from .errors import BuildError, ConfigError, SolverError

INF = math.inf


class LinExpr:
    """Sparse linear expression ``sum(coef * var) + const``."""

    __slots__ = ("terms", "const")

    def __init__(self, terms=None, const=0.0):
        self.terms = dict(terms) if terms else {}
        self.const = float(const)

    @classmethod
    def var(cls, index, coef=1.0):
        return cls({index: float(coef)})

    def copy(self):
        return LinExpr(self.terms, self.const)

    def add_term(self, index, coef):
        if coef:
            self.terms[index] = self.terms.get(index, 0.0) + coef
        return self

    def __iadd__(self, other):
        if isinstance(other, LinExpr):
            for k, v in other.terms.items():
                self.terms[k] = self.terms.get(k, 0.0) + v
            self.const += other.const
        else:
            self.const += float(other)
        return self

    def __add__(self, other):
        out = self.copy()
        out += other
        return out

    __radd__ = __add__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other if isinstance(other, LinExpr) else -float(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, k):
        k = float(k)
        return LinExpr({i: v * k for i, v in self.terms.items()}, self.const * k)

    __rmul__ = __mul__

    def value(self, x):
        return self.const + sum(v * x[i] for i, v in self.terms.items())


def lin_sum(exprs):
    out = LinExpr()
    for e in exprs:
        out += e
    return out


@dataclass
class Constraint:
    expr: LinExpr
    sense: str  # "<=", ">=", "=="
    rhs: float
    tag: tuple


@dataclass
class MilpModel:
    """Variables, linear constraints and a linear (minimized) objective."""

    names: list = field(default_factory=list)
    lb: list = field(default_factory=list)
    ub: list = field(default_factory=list)
    integer: list = field(default_factory=list)
    constraints: list = field(default_factory=list)
    objective: LinExpr = field(default_factory=LinExpr)
    _index: dict = field(default_factory=dict, repr=False)

    @property
    def n_vars(self):
        return len(self.names)

    def add_var(self, name, lb=0.0, ub=INF, binary=False):
        if name in self._index:
            raise BuildError(f"duplicate variable name {name!r}")
        if binary:
            lb, ub = max(0.0, lb), min(1.0, ub)
        if lb > ub:
            raise BuildError(f"variable {name!r}: lower bound {lb} exceeds upper bound {ub}")
        self._index[name] = len(self.names)
        self.names.append(name)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.integer.append(bool(binary))
        return len(self.names) - 1

    def var_index(self, name):
        return self._index[name]

    def add_constr(self, expr, sense, rhs=0.0, tag=()):
        if sense not in ("<=", ">=", "=="):
            raise BuildError(f"unknown constraint sense {sense!r}")
        rhs = float(rhs) - expr.const
        body = LinExpr(expr.terms)
        for i, v in body.terms.items():
            if not 0 <= i < self.n_vars:
                raise BuildError(f"constraint {tag} references unknown variable {i}")
            if not math.isfinite(v):
                raise BuildError(f"constraint {tag} has a non-finite coefficient")
        if not math.isfinite(rhs):
            raise BuildError(f"constraint {tag} has a non-finite right-hand side")
        self.constraints.append(Constraint(body, sense, rhs, tuple(tag)))
        return len(self.constraints) - 1

    def set_objective(self, expr):
        self.objective = expr

    def n_binaries(self):
        return sum(self.integer)

    def fix(self, index, value):
        self.lb[index] = self.ub[index] = float(value)

    def matrix(self):
        rows, cols, vals = [], [], []
        lo = np.empty(len(self.constraints))
        hi = np.empty(len(self.constraints))
        for r, c in enumerate(self.constraints):
            for i, v in c.expr.terms.items():
                rows.append(r)
                cols.append(i)
                vals.append(v)
            lo[r] = c.rhs if c.sense in (">=", "==") else -INF
            hi[r] = c.rhs if c.sense in ("<=", "==") else INF
        a = sparse.csr_array((vals, (rows, cols)), shape=(len(self.constraints), self.n_vars))
        return a, lo, hi

    def objective_vector(self):
        c = np.zeros(self.n_vars)
        for i, v in self.objective.terms.items():
            c[i] += v
        return c

    def check(self, x, tol=1e-6):
        """Return the tags of constraints violated by ``x`` beyond ``tol``."""
        bad = []
        for c in self.constraints:
            v = c.expr.value(x)
            if (c.sense == "<=" and v > c.rhs + tol) or (c.sense == ">=" and v < c.rhs - tol) or (
                    c.sense == "==" and abs(v - c.rhs) > tol):
                bad.append(c.tag)
        return bad


@dataclass
class SolveResult:
    status: str  # optimal | feasible_gap | infeasible | timeout | error
    x: np.ndarray | None
    objective: float | None
    gap: float | None
    wall_time: float
    message: str = ""


class Backend:
    """Interface every MILP engine adapter implements."""

    name = "abstract"

    def solve(self, model, gap_tol=1e-3, time_limit=3600.0):
        raise NotImplementedError


class HighsBackend(Backend):
    """HiGHS through :func:`scipy.optimize.milp` (deterministic, single thread)."""

    name = "highs"

    def __init__(self, presolve=True, verbose=False):
        self.presolve = presolve
        self.verbose = verbose

    def solve(self, model, gap_tol=1e-3, time_limit=3600.0):
        a, lo, hi = model.matrix()
        c = model.objective_vector()
        options = {"disp": self.verbose, "presolve": self.presolve, "mip_rel_gap": gap_tol,
                   "time_limit": float(time_limit)}
        cons = [LinearConstraint(a, lo, hi)] if a.shape[0] else []
        start = time.perf_counter()
        try:
            res = milp(c, integrality=np.array(model.integer, dtype=int),
                       bounds=Bounds(np.array(model.lb), np.array(model.ub)),
                       constraints=cons, options=options)
        except (ValueError, MemoryError) as exc:
            raise SolverError(f"HiGHS failed: {exc}") from exc
        wall = time.perf_counter() - start
        gap = getattr(res, "mip_gap", None)
        if res.status == 0:
            status = "optimal"
        elif res.status == 2:
            status = "infeasible"
        elif res.status == 1:
            status = "feasible_gap" if res.x is not None else "timeout"
        elif res.status == 3:
            raise SolverError(f"HiGHS reports an unbounded model: {res.message}")
        else:
            raise SolverError(f"HiGHS failed (status {res.status}): {res.message}")
        obj = None if res.x is None else float(c @ res.x + model.objective.const)
        return SolveResult(status, res.x, obj, gap, wall, str(res.message))


BACKENDS = {"highs": HighsBackend}


def get_backend(name=None):
    """Backend by name, defaulting to ``$FREQUC_SOLVER`` and then ``highs``."""
    if isinstance(name, Backend):
        return name
    name = name or os.environ.get("FREQUC_SOLVER") or "highs"
    try:
        return BACKENDS[name.lower()]()
    except KeyError:
        raise ConfigError(f"unknown solver backend {name!r}; available: {sorted(BACKENDS)}") from None
