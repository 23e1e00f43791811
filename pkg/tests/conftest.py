from dataclasses import replace

import numpy as np
import pytest

from frequc.cli import data_path
from frequc.grid import FrequencyPolicy, Line, Network, PowerSystem, ThermalUnit, WindFarm, load_system


@pytest.fixture(scope="session")
def six_bus():
    return load_system(data_path("six_bus"))


def truncate(system, hours):
    """The first ``hours`` hours of a system."""
    farms = [replace(f, forecast=f.forecast[:hours], sigma=f.sigma[:hours]) for f in system.wind_farms]
    return replace(system, wind_farms=farms, load=system.load[:, :hours].copy()).validate()


def small_system(rng, n_units=None, n_hours=None, segment_fracs=(0.25, 0.75)):
    """Random two-bus system with at most two units, three hours and one four-level wind farm."""
    nu = int(rng.integers(1, 3)) if n_units is None else n_units
    nh = int(rng.integers(1, 4)) if n_hours is None else n_hours
    units = []
    for i in range(nu):
        p_max = round(float(rng.uniform(80, 160)), 3)
        units.append(ThermalUnit(
            id=f"G{i + 1}", bus="1" if i == 0 else "2", p_max=p_max, p_min=round(0.3 * p_max, 3),
            inertia_const=round(float(rng.uniform(3, 9)), 3), resp_const=round(float(rng.uniform(3, 10)), 3),
            droop=round(float(rng.uniform(10, 30)), 3), ramp_up=60.0, ramp_down=60.0, ramp_startup=p_max,
            ramp_shutdown=p_max, min_up=int(rng.integers(1, 3)), min_down=int(rng.integers(1, 3)),
            cost_startup=round(float(rng.uniform(500, 3000)), 2), cost_shutdown=0.0,
            cost_online=round(float(rng.uniform(200, 800)), 2),
            fuel_segments=tuple(sorted(float(x) for x in rng.uniform(10, 30, 2).round(3))),
            reserve_cost=round(float(rng.uniform(2, 10)), 3)))
    mu = tuple(float(x) for x in rng.uniform(20, 50, nh).round(3))
    farm = WindFarm("W1", "2", 60.0, round(float(rng.uniform(0, 5)), 3), 10.0, 25.0, 5.0,
                    round(float(rng.uniform(1, 6)), 3), mu, tuple(round(0.1 * m, 6) for m in mu), 20.0)
    net = Network(["1", "2"], [Line("L1", "1", "2", 0.1, 500.0)], "1")
    load = np.zeros((2, nh))
    load[1] = rng.uniform(60, 140, nh).round(3)
    pol = FrequencyPolicy(rocof_max=round(float(rng.uniform(0.3, 0.6)), 3), nadir_max=0.5,
                          qss_max=round(float(rng.uniform(0.2, 0.4)), 3), segment_fracs=segment_fracs)
    return PowerSystem(units, [farm], net, load, pol).validate()
