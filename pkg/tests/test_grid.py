import shutil
from dataclasses import replace

import numpy as np
import pytest

from frequc.cli import data_path
from frequc.errors import ParseError, ValidationError
from frequc.grid import (Line, Network, compute_ptdf, event_params, inertia_mwspherz, load_system, unit_inertia,
                         wind_inertia, write_system, systems_equal)

SIX_BUS = data_path("six_bus")


@pytest.fixture(scope="module")
def system():
    return load_system(SIX_BUS)


@pytest.fixture
def six_bus_copy(tmp_path):
    d = tmp_path / "sys"
    shutil.copytree(SIX_BUS, d)
    return d


def test_fixture_shape(system):
    assert [u.id for u in system.units] == ["G1", "G2", "G3"]
    assert system.horizon_hours == 24
    assert system.network.slack_bus == "1"
    assert system.load.shape == (6, 24)


def test_inertia_conversion(system):
    f0 = system.policy.f0
    parts = [unit_inertia(u, f0) for u in system.units] + [wind_inertia(w, f0) for w in system.wind_farms]
    assert parts == pytest.approx([32.0, 15.0, 21.6, 8.0])
    assert sum(parts) == pytest.approx(76.6)
    assert inertia_mwspherz(8, 200, 50) == pytest.approx(32.0)


def test_event_params(system):
    dp, kd = event_params(system, 20)
    assert dp == pytest.approx(21.0)
    assert kd == pytest.approx(2.1)
    with pytest.raises(ValidationError):
        event_params(system, 24)


def test_wind_droop_levels(system):
    w = system.wind_farms[0]
    assert w.droop_levels == [10, 15, 20, 25]
    assert w.default_droop == 20


def _ptdf_by_pseudoinverse(net):
    """Shift factors from the Laplacian pseudo-inverse, with the slack absorbing injections."""
    idx = net.bus_index()
    nb = len(net.buses)
    b = np.zeros((nb, nb))
    for ln in net.lines:
        i, j = idx[ln.from_bus], idx[ln.to_bus]
        y = 1.0 / ln.reactance
        b[i, i] += y
        b[j, j] += y
        b[i, j] -= y
        b[j, i] -= y
    pinv = np.linalg.pinv(b)
    s = idx[net.slack_bus]
    out = np.zeros((len(net.lines), nb))
    for k in range(nb):
        inj = np.zeros(nb)
        inj[k] += 1.0
        inj[s] -= 1.0
        theta = pinv @ inj
        for j, ln in enumerate(net.lines):
            out[j, k] = (theta[idx[ln.from_bus]] - theta[idx[ln.to_bus]]) / ln.reactance
    return out


def test_ptdf_matches_independent_route(system):
    ptdf = compute_ptdf(system.network)
    assert np.allclose(ptdf, _ptdf_by_pseudoinverse(system.network), atol=1e-12)
    assert np.all(ptdf[:, 0] == 0.0)


def test_ptdf_flows_conserve_power(system):
    ptdf = system.ptdf()
    inj = np.array([0.0, 30.0, -50.0, -40.0, 20.0, 40.0])
    inj[0] = -inj[1:].sum()
    flows = ptdf @ inj
    idx = system.network.bus_index()
    net_out = np.zeros(6)
    for f, ln in zip(flows, system.network.lines):
        net_out[idx[ln.from_bus]] += f
        net_out[idx[ln.to_bus]] -= f
    assert np.allclose(net_out, inj, atol=1e-9)


def test_disconnected_network_rejected():
    net = Network(["1", "2", "3"], [Line("a", "1", "2", 0.1, 10)], "1")
    with pytest.raises(ValidationError):
        compute_ptdf(net)


def test_roundtrip(system, tmp_path):
    write_system(system, tmp_path / "out")
    again = load_system(tmp_path / "out")
    assert systems_equal(system, again)


def test_missing_file_names_the_file(six_bus_copy):
    (six_bus_copy / "wind_profile.csv").unlink()
    with pytest.raises(ParseError, match="wind_profile.csv"):
        load_system(six_bus_copy)


def test_bad_number_reports_line(six_bus_copy):
    p = six_bus_copy / "units.csv"
    lines = p.read_text().splitlines()
    lines[2] = lines[2].replace(",150,", ",abc,", 1)
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(ParseError, match=r"units.csv:3"):
        load_system(six_bus_copy)


def test_missing_column(six_bus_copy):
    p = six_bus_copy / "lines.csv"
    p.write_text(p.read_text().replace("limit_mw", "cap"))
    with pytest.raises(ParseError, match="missing columns"):
        load_system(six_bus_copy)


def test_unknown_bus_rejected(six_bus_copy):
    p = six_bus_copy / "units.csv"
    p.write_text(p.read_text().replace("G3,6,", "G3,9,"))
    with pytest.raises(ValidationError, match="unknown bus"):
        load_system(six_bus_copy)


def test_policy_segment_fractions_must_sum_to_one(system):
    with pytest.raises(ValidationError):
        replace(system.policy, segment_fracs=(0.5, 0.4)).validate()


def test_nonconvex_fuel_rejected(system):
    u = replace(system.units[0], fuel_segments=(20.0, 10.0))
    with pytest.raises(ValidationError, match="convex"):
        u.validate()


def test_explicit_ptdf_file_overrides(six_bus_copy, system):
    rows = ["line_id,bus,factor"]
    for j, ln in enumerate(system.network.lines):
        for i, b in enumerate(system.network.buses):
            rows.append(f"{ln.id},{b},{float(0.5 * system.ptdf()[j, i])!r}")
    (six_bus_copy / "ptdf.csv").write_text("\n".join(rows) + "\n")
    s = load_system(six_bus_copy)
    assert np.allclose(s.ptdf(), 0.5 * system.ptdf())
