from dataclasses import replace

import numpy as np
import pytest
from conftest import small_system, truncate

from frequc import uc
from frequc.errors import BuildError, ConfigError
from frequc.grid import FrequencyPolicy


@pytest.fixture(scope="module")
def six_hours(six_bus):
    return truncate(six_bus, 6)


def _spline_vars(model):
    return [n for n in model.names if ":df[" in n or ":pg[" in n or ":pw[" in n]


def test_no_freq_model_structure(six_bus):
    m = uc.build(six_bus, "no_freq")
    names = m.model.names
    assert sum(n.startswith("I[") for n in names) == 3 * 24
    assert not _spline_vars(m.model)
    assert any(c.tag[0] == "reserve_total" for c in m.model.constraints)


def test_freq_full_spline_variable_count(six_hours):
    m = uc.build(six_hours, "freq_full")
    # 4 coefficients x (deviation + 3 governors + 1 farm) x 4 segments per hour
    assert len(_spline_vars(m.model)) == 6 * 4 * (1 + 3 + 1) * 4


def test_drcc_row_gaussian_rhs(six_hours):
    pol = replace(six_hours.policy, drcc_strategy="gaussian", drcc_epsilon=0.1, drcc_radius=0.0)
    farm = replace(six_hours.wind_farms[0], forecast=(50.0,) * 6, sigma=(2.5,) * 6)
    sys = replace(six_hours, policy=pol, wind_farms=[farm])
    m = uc.build(sys, "no_freq")
    rows = [c for c in m.model.constraints if c.tag[0] == "drcc"]
    assert len(rows) == 6
    assert all(c.rhs == pytest.approx(46.796, abs=5e-4) for c in rows)


def test_unknown_mode_and_initial_state(six_hours):
    with pytest.raises(ConfigError):
        uc.build(six_hours, "fast")
    with pytest.raises(ConfigError):
        uc.build(six_hours, "no_freq", initial_state="warm")


def test_infeasible_bounds_detected_at_build(six_hours):
    bad = replace(six_hours.units[0], p_min=300.0)
    with pytest.raises(BuildError):
        uc.build(replace(six_hours, units=[bad, *six_hours.units[1:]]), "no_freq")


def test_infeasible_toy_reports_status(six_hours):
    heavy = replace(six_hours, load=six_hours.load * 10)
    sol = uc.solve(uc.build(heavy, "no_freq"))
    assert sol.status == "infeasible"
    assert not sol.feasible


def test_short_time_limit_never_crashes(six_bus):
    sol = uc.solve(uc.build(six_bus, "freq_full"), time_limit=0.5)
    assert sol.status in ("timeout", "feasible_gap", "optimal")


@pytest.fixture(scope="module")
def solved_six_hours(six_hours):
    out = {}
    for mode in uc.MODES:
        m = uc.build(six_hours, mode)
        out[mode] = (m, uc.solve(m, gap_tol=1e-6))
    return out


def test_solutions_pass_audits(six_hours, solved_six_hours):
    for m, sol in solved_six_hours.values():
        assert sol.status == "optimal"
        assert uc.audit(sol, six_hours, m) == []
        assert m.model.check(sol.x, tol=1e-6) == []


def test_cost_breakdown_sums_to_objective(solved_six_hours):
    for _, sol in solved_six_hours.values():
        parts = sum(v for k, v in sol.costs.items() if k != "total")
        assert parts == pytest.approx(sol.objective, rel=1e-4)


def test_frequency_constraints_only_add_cost(solved_six_hours):
    assert solved_six_hours["freq_full"][1].objective >= solved_six_hours["no_freq"][1].objective * (1 - 1e-6)


def test_big_m_products_consistent_with_bits(solved_six_hours):
    m, sol = solved_six_hours["freq_full"]
    x = sol.x
    for i, name in enumerate(m.model.names):
        if ":on_df[" in name:
            unit, seg, k = name.split("[")[1].rstrip("]").split(",")
            hour = int(name.split(":")[0][1:])
            on = x[m.var["I", unit, hour]]
            df = x[m.model.var_index(f"h{hour}:df[{seg},{k}]")]
            assert x[i] == pytest.approx(on * df, abs=1e-6)


def test_audit_catches_tampering(six_hours, solved_six_hours):
    m, sol = solved_six_hours["no_freq"]
    tampered = uc.UcSolution.from_dict(sol.to_dict())
    tampered.commitment = {k: list(v) for k, v in sol.commitment.items()}
    tampered.dispatch = {k: list(v) for k, v in sol.dispatch.items()}
    tampered.dispatch["G1"][0] += 5.0
    assert any("balance" in p for p in uc.audit(tampered, six_hours, m))


def test_free_initial_state_is_no_more_expensive(six_hours, solved_six_hours):
    free = uc.solve(uc.build(six_hours, "no_freq", initial_state="free"), gap_tol=1e-6)
    assert free.objective <= solved_six_hours["no_freq"][1].objective + 1e-6
    assert free.costs["startup_shutdown"] == 0.0


def test_solution_json_roundtrip(tmp_path, solved_six_hours):
    _, sol = solved_six_hours["freq_full"]
    uc.save_json(sol.to_dict(), tmp_path / "solution.json")
    import json

    again = uc.UcSolution.from_dict(json.loads((tmp_path / "solution.json").read_text()))
    assert again.commitment == sol.commitment
    assert again.droop == sol.droop


def test_zero_imbalance_validates_trivially(six_hours):
    sys = replace(six_hours, policy=replace(six_hours.policy, imbalance_frac=0.0))
    sol = uc.solve(uc.build(sys, "freq_full"))
    rep = uc.validate(sol, sys)
    assert rep["summary"]["all_pass"]
    assert rep["summary"]["max_nadir"] == 0.0


def test_redispatch_estimate_is_deterministic(six_hours, solved_six_hours):
    _, sol = solved_six_hours["freq_full"]
    a = uc.expected_redispatch_cost(sol, six_hours, n_scenarios=500, seed=3)
    b = uc.expected_redispatch_cost(sol, six_hours, n_scenarios=500, seed=3)
    assert a == b >= 0.0


def test_brute_force_refuses_large_instances(six_hours):
    with pytest.raises(ConfigError):
        uc.brute_force_small(six_hours)


def test_brute_force_one_unit_one_hour():
    sys = small_system(np.random.default_rng(11), n_units=1, n_hours=1)
    milp = uc.solve(uc.build(sys, "freq_full"), gap_tol=0.0)
    brute = uc.brute_force_small(sys)
    assert brute.status == milp.status
    if milp.feasible:
        assert brute.objective == pytest.approx(milp.objective, rel=1e-6)


def test_brute_force_all_infeasible_matches_milp():
    sys = small_system(np.random.default_rng(5), n_units=1, n_hours=2)
    sys = replace(sys, policy=replace(sys.policy, rocof_max=0.01))
    assert uc.solve(uc.build(sys, "freq_full")).status == "infeasible"
    assert uc.brute_force_small(sys).status == "infeasible"


def test_droop_only_freedom_picks_cheapest_secure_level():
    rng = np.random.default_rng(2)
    sys = small_system(rng, n_units=1, n_hours=1)
    u = replace(sys.units[0], p_max=200.0, p_min=20.0, inertia_const=8.0, droop=20.0, ramp_startup=200.0,
                ramp_shutdown=200.0)
    farm = replace(sys.wind_farms[0], reserve_cost=50.0)
    pol = FrequencyPolicy(rocof_max=0.5, nadir_max=0.5, qss_max=0.3, segment_fracs=(0.25, 0.75))
    sys = replace(sys, units=[u], wind_farms=[farm], policy=pol).validate()
    brute = uc.brute_force_small(sys)
    assert brute.status == "optimal"
    level = brute.droop[0, 0]
    dp = 0.1 * sys.load.sum()
    kd = 0.01 * sys.load.sum()
    # QSS row: kD*q + G_sys*(q - f_db) >= dP
    qss_ok = [g for g in (10, 15, 20, 25) if kd * 0.3 + (20 + g) * (0.3 - 0.015) >= dp - 1e-9]
    assert 10 not in qss_ok
    assert level == min(qss_ok)
    milp = uc.solve(uc.build(sys, "freq_full"), gap_tol=0.0)
    assert milp.objective == pytest.approx(brute.objective, rel=1e-6)
