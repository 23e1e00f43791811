"""Power-system data model, CSV/JSON ingestion and DC shift factors.

Hours are 1-based in every data file and 0-based in the in-memory arrays.
"""

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import ParseError, ValidationError

UNIT_COLUMNS = [
    "id", "bus", "p_max", "p_min", "h_const_s", "t_resp_s", "droop_mw_hz", "ramp_up", "ramp_down",
    "ramp_su", "ramp_sd", "min_up", "min_down", "c_su", "c_sd", "c_on", "c_reserve",
]
FUEL_COLUMNS = ["unit_id", "seg_index", "lambda"]
WIND_COLUMNS = ["id", "bus", "capacity", "h_const_s", "droop_min", "droop_max", "droop_step", "c_reserve"]
WIND_OPTIONAL = ["droop_default"]
PROFILE_COLUMNS = ["id", "hour", "mu_mw", "sigma_mw"]
LINE_COLUMNS = ["id", "from", "to", "reactance_pu", "limit_mw"]
LOAD_COLUMNS = ["bus", "hour", "mw"]
PTDF_COLUMNS = ["line_id", "bus", "factor"]
POLICY_KEYS = [
    "f0_hz", "dead_band_hz", "damping_frac_per_hz", "rocof_max", "nadir_max", "qss_max",
    "imbalance_frac", "dyn_horizon_s", "segment_fracs",
]
DRCC_KEYS = ["drcc_epsilon", "drcc_radius", "drcc_strategy", "drcc_cp_fixed"]
DEFAULT_SIGMA_FRAC = 0.05


@dataclass(frozen=True)
class ThermalUnit:
    id: str
    bus: str
    p_max: float
    p_min: float
    inertia_const: float
    resp_const: float
    droop: float
    ramp_up: float
    ramp_down: float
    ramp_startup: float
    ramp_shutdown: float
    min_up: int
    min_down: int
    cost_startup: float
    cost_shutdown: float
    cost_online: float
    fuel_segments: tuple
    reserve_cost: float

    def validate(self):
        if not 0 <= self.p_min <= self.p_max:
            raise ValidationError(f"unit {self.id}: need 0 <= p_min <= p_max")
        if self.min_up < 1 or self.min_down < 1:
            raise ValidationError(f"unit {self.id}: minimum up/down times must be >= 1 h")
        if not self.fuel_segments:
            raise ValidationError(f"unit {self.id}: at least one fuel segment is required")
        if any(b < a for a, b in zip(self.fuel_segments, self.fuel_segments[1:])):
            raise ValidationError(f"unit {self.id}: fuel-cost slopes must be nondecreasing (convex cost)")
        if self.inertia_const < 0 or self.droop < 0 or not self.resp_const > 0:
            raise ValidationError(f"unit {self.id}: inertia/droop must be >= 0 and response constant > 0")
        for name in ("ramp_up", "ramp_down", "ramp_startup", "ramp_shutdown"):
            if getattr(self, name) < 0:
                raise ValidationError(f"unit {self.id}: {name} must be non-negative")


@dataclass(frozen=True)
class WindFarm:
    id: str
    bus: str
    capacity: float
    inertia_const: float
    droop_min: float
    droop_max: float
    droop_step: float
    reserve_cost: float
    forecast: tuple = ()
    sigma: tuple = ()
    droop_default: float | None = None

    @property
    def default_droop(self):
        return self.droop_min if self.droop_default is None else self.droop_default

    @property
    def droop_levels(self):
        n = int(round((self.droop_max - self.droop_min) / self.droop_step))
        return [self.droop_min + k * self.droop_step for k in range(n + 1)]

    def validate(self):
        if not 0 <= self.droop_min <= self.droop_max:
            raise ValidationError(f"wind farm {self.id}: need 0 <= droop_min <= droop_max")
        if not self.droop_step > 0:
            raise ValidationError(f"wind farm {self.id}: droop_step must be positive")
        ratio = (self.droop_max - self.droop_min) / self.droop_step
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValidationError(f"wind farm {self.id}: droop range is not a multiple of droop_step")
        if self.droop_default is not None:
            k = (self.droop_default - self.droop_min) / self.droop_step
            if not self.droop_min <= self.droop_default <= self.droop_max or abs(k - round(k)) > 1e-9:
                raise ValidationError(f"wind farm {self.id}: droop_default is not an admissible level")
        for h, (mu, sd) in enumerate(zip(self.forecast, self.sigma), start=1):
            if not 0 <= mu <= self.capacity:
                raise ValidationError(f"wind farm {self.id}: hour {h} forecast outside [0, capacity]")
            if sd < 0:
                raise ValidationError(f"wind farm {self.id}: hour {h} negative sigma")


@dataclass(frozen=True)
class Line:
    id: str
    from_bus: str
    to_bus: str
    reactance: float
    limit: float


@dataclass
class Network:
    buses: list
    lines: list
    slack_bus: str
    ptdf: np.ndarray | None = None

    def bus_index(self):
        return {b: i for i, b in enumerate(self.buses)}


@dataclass(frozen=True)
class FrequencyPolicy:
    f0: float = 50.0
    dead_band: float = 0.015
    damping_frac: float = 0.01
    rocof_max: float = 0.5
    nadir_max: float = 0.5
    qss_max: float = 0.3
    imbalance_frac: float = 0.1
    horizon: float = 30.0
    segment_fracs: tuple = (0.1, 0.2, 0.3, 0.4)
    drcc_epsilon: float = 0.1
    drcc_radius: float = 0.0
    drcc_strategy: str = "gaussian"
    drcc_cp_fixed: float | None = None

    def validate(self):
        for name in ("f0", "damping_frac", "rocof_max", "nadir_max", "qss_max", "horizon"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"policy: {name} must be positive")
        if self.imbalance_frac < 0:
            raise ValidationError("policy: imbalance fraction must be non-negative")
        if self.dead_band < 0:
            raise ValidationError("policy: dead band must be non-negative")
        fr = self.segment_fracs
        if not fr or any(not f > 0 for f in fr):
            raise ValidationError("policy: segment fractions must be positive")
        if abs(sum(fr) - 1.0) > 1e-12:
            raise ValidationError(f"policy: segment fractions sum to {sum(fr)!r}, not 1")

    def to_json(self):
        d = {
            "f0_hz": self.f0,
            "dead_band_hz": self.dead_band,
            "damping_frac_per_hz": self.damping_frac,
            "rocof_max": self.rocof_max,
            "nadir_max": self.nadir_max,
            "qss_max": self.qss_max,
            "imbalance_frac": self.imbalance_frac,
            "dyn_horizon_s": self.horizon,
            "segment_fracs": list(self.segment_fracs),
            "drcc_epsilon": self.drcc_epsilon,
            "drcc_radius": self.drcc_radius,
            "drcc_strategy": self.drcc_strategy,
        }
        if self.drcc_cp_fixed is not None:
            d["drcc_cp_fixed"] = self.drcc_cp_fixed
        return d


@dataclass
class PowerSystem:
    units: list
    wind_farms: list
    network: Network
    load: np.ndarray  # buses x hours, MW
    policy: FrequencyPolicy = field(default_factory=FrequencyPolicy)

    @property
    def horizon_hours(self):
        return self.load.shape[1]

    def total_load(self):
        return self.load.sum(axis=0)

    def ptdf(self):
        if self.network.ptdf is None:
            self.network.ptdf = compute_ptdf(self.network)
        return self.network.ptdf

    def validate(self):
        if not self.units:
            raise ValidationError("at least one thermal unit is required")
        buses = set(self.network.buses)
        seen = set()
        for dev in [*self.units, *self.wind_farms]:
            if dev.id in seen:
                raise ValidationError(f"duplicate device id {dev.id!r}")
            seen.add(dev.id)
            if dev.bus not in buses:
                raise ValidationError(f"device {dev.id}: unknown bus {dev.bus!r}")
            dev.validate()
        for w in self.wind_farms:
            if len(w.forecast) != self.horizon_hours or len(w.sigma) != self.horizon_hours:
                raise ValidationError(f"wind farm {w.id}: profile must cover all {self.horizon_hours} hours")
        if self.load.shape[0] != len(self.network.buses):
            raise ValidationError("load matrix does not match the bus list")
        tot = self.total_load()
        if np.any(tot <= 0):
            bad = int(np.argmin(tot)) + 1
            raise ValidationError(f"hour {bad}: total load must be positive")
        ids = [ln.id for ln in self.network.lines]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate line id")
        for ln in self.network.lines:
            if ln.from_bus not in buses or ln.to_bus not in buses:
                raise ValidationError(f"line {ln.id}: unknown bus")
            if ln.limit < 0:
                raise ValidationError(f"line {ln.id}: negative limit")
        if self.network.slack_bus not in buses:
            raise ValidationError(f"slack bus {self.network.slack_bus!r} does not exist")
        ptdf = self.ptdf()
        if ptdf.shape != (len(self.network.lines), len(self.network.buses)):
            raise ValidationError("PTDF shape does not match lines x buses")
        if np.any(np.abs(ptdf) > 1 + 1e-6):
            raise ValidationError("PTDF entries must satisfy |S| <= 1")
        self.policy.validate()
        return self


def inertia_mwspherz(inertia_const, capacity, f0):
    """Convert an inertia constant in seconds to MW*s/Hz on the system base."""
    return inertia_const * capacity / f0


def unit_inertia(unit, f0):
    return inertia_mwspherz(unit.inertia_const, unit.p_max, f0)


def wind_inertia(farm, f0):
    return inertia_mwspherz(farm.inertia_const, farm.capacity, f0)


def event_params(system, hour):
    """Imbalance ``dP`` and damping ``kD * Pd`` (MW/Hz) for 0-based ``hour``."""
    if not 0 <= hour < system.horizon_hours:
        raise ValidationError(f"hour index {hour} outside the horizon")
    total = float(system.load[:, hour].sum())
    pol = system.policy
    return pol.imbalance_frac * total, pol.damping_frac * total


def compute_ptdf(network):
    """DC power-flow shift factors, lines x buses, zero column at the slack.

    Line flow is positive in the ``from -> to`` direction.
    """
    idx = network.bus_index()
    nb = len(network.buses)
    nl = len(network.lines)
    if any(not ln.reactance > 0 for ln in network.lines):
        raise ValidationError("line reactances must be positive")
    adj = np.zeros((nb, nb))
    incidence = np.zeros((nl, nb))
    for j, ln in enumerate(network.lines):
        a, b = idx[ln.from_bus], idx[ln.to_bus]
        adj[a, b] = adj[b, a] = 1.0
        incidence[j, a] = 1.0
        incidence[j, b] = -1.0
    n_comp, _ = connected_components(adj, directed=False)
    if n_comp != 1:
        raise ValidationError(f"network is not connected ({n_comp} islands)")
    bf = incidence / np.array([ln.reactance for ln in network.lines])[:, None]
    bbus = incidence.T @ bf
    s = idx[network.slack_bus]
    keep = [i for i in range(nb) if i != s]
    theta = np.zeros((nb, nb))
    if keep:
        theta[np.ix_(keep, keep)] = np.linalg.inv(bbus[np.ix_(keep, keep)])
    ptdf = bf @ theta
    ptdf[:, s] = 0.0
    ptdf[np.abs(ptdf) < 1e-14] = 0.0
    return ptdf


# ---------------------------------------------------------------------------
# file ingestion


def _read_csv(path, required, optional=()):
    path = Path(path)
    if not path.exists():
        raise ParseError(path, None, "file not found")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise ParseError(path, 1, f"missing columns {missing}")
        unknown = [c for c in header if c not in required and c not in optional]
        if unknown:
            raise ParseError(path, 1, f"unknown columns {unknown}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if all((v or "").strip() == "" for v in row.values()):
                continue
            if None in row:
                raise ParseError(path, lineno, "too many fields")
            rows.append((lineno, {k: (v or "").strip() for k, v in row.items()}))
    return rows


def _num(path, lineno, row, key, kind=float, default=None):
    raw = row.get(key, "")
    if raw == "":
        if default is not None:
            return default
        raise ParseError(path, lineno, f"missing value for {key!r}")
    try:
        val = kind(raw)
    except ValueError:
        what = "an integer" if kind is _int else "a number"
        raise ParseError(path, lineno, f"{key!r}: cannot parse {raw!r} as {what}") from None
    if kind is float and not math.isfinite(val):
        raise ParseError(path, lineno, f"{key!r}: non-finite value")
    return val


def _int(raw):
    f = float(raw)
    if f != int(f):
        raise ValueError(raw)
    return int(f)


def load_policy(path):
    path = Path(path)
    if not path.exists():
        raise ParseError(path, None, "file not found")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(path, exc.lineno, exc.msg) from None
    if not isinstance(raw, dict):
        raise ParseError(path, None, "expected a JSON object")
    missing = [k for k in POLICY_KEYS if k not in raw]
    if missing:
        raise ParseError(path, None, f"missing keys {missing}")
    unknown = [k for k in raw if k not in POLICY_KEYS and k not in DRCC_KEYS]
    if unknown:
        raise ParseError(path, None, f"unknown keys {unknown}")
    try:
        pol = FrequencyPolicy(
            f0=float(raw["f0_hz"]),
            dead_band=float(raw["dead_band_hz"]),
            damping_frac=float(raw["damping_frac_per_hz"]),
            rocof_max=float(raw["rocof_max"]),
            nadir_max=float(raw["nadir_max"]),
            qss_max=float(raw["qss_max"]),
            imbalance_frac=float(raw["imbalance_frac"]),
            horizon=float(raw["dyn_horizon_s"]),
            segment_fracs=tuple(float(x) for x in raw["segment_fracs"]),
            drcc_epsilon=float(raw.get("drcc_epsilon", 0.1)),
            drcc_radius=float(raw.get("drcc_radius", 0.0)),
            drcc_strategy=str(raw.get("drcc_strategy", "gaussian")),
            drcc_cp_fixed=None if raw.get("drcc_cp_fixed") is None else float(raw["drcc_cp_fixed"]),
        )
    except (TypeError, ValueError) as exc:
        raise ParseError(path, None, str(exc)) from None
    return pol


def load_system(directory):
    """Read and validate a system directory.

    Expected files: ``units.csv``, ``fuel.csv``, ``wind.csv``,
    ``wind_profile.csv``, ``lines.csv``, ``load.csv``, ``policy.json`` and,
    optionally, ``ptdf.csv`` (which then replaces the computed shift factors).
    Buses are ordered numerically where possible; the first one is the slack.
    """
    d = Path(directory)
    policy = load_policy(d / "policy.json")

    fuel = {}
    p = d / "fuel.csv"
    for lineno, row in _read_csv(p, FUEL_COLUMNS):
        k = _num(p, lineno, row, "seg_index", _int)
        lam = _num(p, lineno, row, "lambda")
        segs = fuel.setdefault(row["unit_id"], {})
        if k in segs:
            raise ParseError(p, lineno, f"duplicate segment {k} for unit {row['unit_id']}")
        segs[k] = lam

    units = []
    p = d / "units.csv"
    for lineno, row in _read_csv(p, UNIT_COLUMNS):
        uid = row["id"]
        segs = fuel.get(uid, {})
        if segs and sorted(segs) != list(range(min(segs), min(segs) + len(segs))):
            raise ParseError(d / "fuel.csv", None, f"unit {uid}: segment indices are not contiguous")
        units.append(ThermalUnit(
            id=uid, bus=row["bus"],
            p_max=_num(p, lineno, row, "p_max"), p_min=_num(p, lineno, row, "p_min"),
            inertia_const=_num(p, lineno, row, "h_const_s"), resp_const=_num(p, lineno, row, "t_resp_s"),
            droop=_num(p, lineno, row, "droop_mw_hz"),
            ramp_up=_num(p, lineno, row, "ramp_up"), ramp_down=_num(p, lineno, row, "ramp_down"),
            ramp_startup=_num(p, lineno, row, "ramp_su"), ramp_shutdown=_num(p, lineno, row, "ramp_sd"),
            min_up=_num(p, lineno, row, "min_up", _int), min_down=_num(p, lineno, row, "min_down", _int),
            cost_startup=_num(p, lineno, row, "c_su"), cost_shutdown=_num(p, lineno, row, "c_sd"),
            cost_online=_num(p, lineno, row, "c_on"),
            fuel_segments=tuple(segs[k] for k in sorted(segs)),
            reserve_cost=_num(p, lineno, row, "c_reserve"),
        ))
    unknown_fuel = set(fuel) - {u.id for u in units}
    if unknown_fuel:
        raise ValidationError(f"fuel.csv references unknown units {sorted(unknown_fuel)}")

    load_rows = _read_csv(d / "load.csv", LOAD_COLUMNS)
    p = d / "lines.csv"
    line_rows = _read_csv(p, LINE_COLUMNS)
    buses = []
    for _, row in load_rows:
        if row["bus"] not in buses:
            buses.append(row["bus"])
    for _, row in line_rows:
        for b in (row["from"], row["to"]):
            if b not in buses:
                buses.append(b)
    buses = sorted(buses, key=_bus_key)
    lines = [Line(row["id"], row["from"], row["to"], _num(p, n, row, "reactance_pu"), _num(p, n, row, "limit_mw"))
             for n, row in line_rows]

    p = d / "load.csv"
    hours = sorted({_num(p, n, row, "hour", _int) for n, row in load_rows})
    if not hours or hours != list(range(1, len(hours) + 1)):
        raise ParseError(p, None, "hours must be contiguous starting at 1")
    bidx = {b: i for i, b in enumerate(buses)}
    load = np.zeros((len(buses), len(hours)))
    seen = set()
    for n, row in load_rows:
        key = (row["bus"], _num(p, n, row, "hour", _int))
        if key in seen:
            raise ParseError(p, n, f"duplicate entry for bus {key[0]} hour {key[1]}")
        seen.add(key)
        load[bidx[row["bus"]], key[1] - 1] = _num(p, n, row, "mw")

    farms = _load_wind(d, len(hours))

    net = Network(buses=buses, lines=lines, slack_bus=buses[0])
    if (d / "ptdf.csv").exists():
        net.ptdf = _load_ptdf(d / "ptdf.csv", net)
    system = PowerSystem(units=units, wind_farms=farms, network=net, load=load, policy=policy)
    return system.validate()


def _bus_key(b):
    try:
        return (0, int(b), b)
    except ValueError:
        return (1, 0, b)


def _load_wind(d, n_hours):
    p = d / "wind.csv"
    rows = _read_csv(p, WIND_COLUMNS, WIND_OPTIONAL)
    prof_path = d / "wind_profile.csv"
    profiles = {}
    if rows:
        for n, row in _read_csv(prof_path, PROFILE_COLUMNS):
            h = _num(prof_path, n, row, "hour", _int)
            mu = _num(prof_path, n, row, "mu_mw")
            sd = _num(prof_path, n, row, "sigma_mw", default=DEFAULT_SIGMA_FRAC * mu if mu else 0.0)
            prof = profiles.setdefault(row["id"], {})
            if h in prof:
                raise ParseError(prof_path, n, f"duplicate hour {h} for wind farm {row['id']}")
            prof[h] = (mu, sd)
    farms = []
    for n, row in rows:
        prof = profiles.get(row["id"], {})
        if sorted(prof) != list(range(1, n_hours + 1)):
            raise ValidationError(f"wind farm {row['id']}: profile must cover hours 1..{n_hours}")
        default = row.get("droop_default", "")
        farms.append(WindFarm(
            id=row["id"], bus=row["bus"], capacity=_num(p, n, row, "capacity"),
            inertia_const=_num(p, n, row, "h_const_s"),
            droop_min=_num(p, n, row, "droop_min"), droop_max=_num(p, n, row, "droop_max"),
            droop_step=_num(p, n, row, "droop_step"), reserve_cost=_num(p, n, row, "c_reserve"),
            forecast=tuple(prof[h][0] for h in range(1, n_hours + 1)),
            sigma=tuple(prof[h][1] for h in range(1, n_hours + 1)),
            droop_default=None if default == "" else _num(p, n, row, "droop_default"),
        ))
    unknown = set(profiles) - {f.id for f in farms}
    if unknown:
        raise ValidationError(f"wind_profile.csv references unknown farms {sorted(unknown)}")
    return farms


def _load_ptdf(path, net):
    lidx = {ln.id: j for j, ln in enumerate(net.lines)}
    bidx = net.bus_index()
    m = np.zeros((len(net.lines), len(net.buses)))
    for n, row in _read_csv(path, PTDF_COLUMNS):
        if row["line_id"] not in lidx or row["bus"] not in bidx:
            raise ParseError(path, n, "unknown line or bus")
        m[lidx[row["line_id"]], bidx[row["bus"]]] = _num(path, n, row, "factor")
    return m


def write_system(system, directory):
    """Serialize a system in the format read by :func:`load_system`."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)

    def fmt(v):
        return f"{v:.17g}" if isinstance(v, float) else str(v)

    def dump(name, header, rows):
        with open(d / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([fmt(v) for v in r])

    dump("units.csv", UNIT_COLUMNS, [
        (u.id, u.bus, u.p_max, u.p_min, u.inertia_const, u.resp_const, u.droop, u.ramp_up, u.ramp_down,
         u.ramp_startup, u.ramp_shutdown, u.min_up, u.min_down, u.cost_startup, u.cost_shutdown,
         u.cost_online, u.reserve_cost) for u in system.units])
    dump("fuel.csv", FUEL_COLUMNS, [
        (u.id, k + 1, lam) for u in system.units for k, lam in enumerate(u.fuel_segments)])
    dump("wind.csv", WIND_COLUMNS + WIND_OPTIONAL, [
        (w.id, w.bus, w.capacity, w.inertia_const, w.droop_min, w.droop_max, w.droop_step, w.reserve_cost,
         "" if w.droop_default is None else w.droop_default) for w in system.wind_farms])
    dump("wind_profile.csv", PROFILE_COLUMNS, [
        (w.id, h + 1, w.forecast[h], w.sigma[h]) for w in system.wind_farms for h in range(system.horizon_hours)])
    dump("lines.csv", LINE_COLUMNS, [
        (ln.id, ln.from_bus, ln.to_bus, ln.reactance, ln.limit) for ln in system.network.lines])
    dump("load.csv", LOAD_COLUMNS, [
        (b, h + 1, float(system.load[i, h])) for i, b in enumerate(system.network.buses)
        for h in range(system.horizon_hours)])
    (d / "policy.json").write_text(json.dumps(system.policy.to_json(), indent=2) + "\n")


def systems_equal(a, b):
    """Structural equality used by the serialization round-trip check."""
    return (
        [asdict(u) for u in a.units] == [asdict(u) for u in b.units]
        and [asdict(w) for w in a.wind_farms] == [asdict(w) for w in b.wind_farms]
        and a.network.buses == b.network.buses
        and a.network.lines == b.network.lines
        and a.network.slack_bus == b.network.slack_bus
        and np.array_equal(a.load, b.load)
        and a.policy == b.policy
    )
