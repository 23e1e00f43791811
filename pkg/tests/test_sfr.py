import csv
import math

import numpy as np
import pytest

from frequc.errors import DomainError, ValidationError
from frequc.sfr import (SfrScenario, qss_closed_form, rocof_initial, simulate, simulate_until_settled,
                        stage1_analytic)

ALL_ON = dict(h_sys=76.6, kd_pd=2.1, dp=20.0, governors=[(10, 20), (4, 25), (6, 18)], g_w=20.0, f_db=0.015)
ONE_UNIT = dict(h_sys=40.0, kd_pd=2.1, dp=21.0, governors=[(10, 20)], g_w=20.0, f_db=0.015)


@pytest.fixture(scope="module")
def all_on():
    return simulate(SfrScenario(**ALL_ON))


def test_rocof_initial():
    assert rocof_initial(SfrScenario(**ONE_UNIT)) == pytest.approx(0.2625, abs=1e-12)


def test_qss_closed_form_one_unit():
    assert qss_closed_form(SfrScenario(**ONE_UNIT)) == pytest.approx(21.6 / 42.1, rel=1e-12)


def test_qss_closed_form_inside_dead_band():
    s = SfrScenario(h_sys=10, kd_pd=100.0, dp=1.0, governors=[(5, 10)], f_db=0.015)
    assert qss_closed_form(s) == pytest.approx(0.01)


def test_qss_needs_damping_or_droop():
    s = SfrScenario(h_sys=10, kd_pd=0.0, dp=1.0)
    with pytest.raises(DomainError):
        qss_closed_form(s)


def test_stage1_matches_exponential():
    s = SfrScenario(**ALL_ON)
    t_db, fn = stage1_analytic(s)
    assert float(fn(t_db)) == pytest.approx(s.f_db, abs=1e-12)
    t = 0.05
    expect = s.dp / s.kd_pd * (1 - math.exp(-s.kd_pd * t / (2 * s.h_sys)))
    assert float(fn(t)) == pytest.approx(expect, rel=1e-12)


def test_no_crossing_when_asymptote_below_dead_band():
    s = SfrScenario(h_sys=10, kd_pd=100.0, dp=1.0, governors=[(5, 10)], f_db=0.015)
    traj = simulate(s)
    assert traj.t_db is None
    assert np.all(traj.pfr_total == 0)
    assert traj.metrics.nadir_df < s.f_db


def test_zero_damping_stage1_is_linear():
    s = SfrScenario(h_sys=10, kd_pd=0.0, dp=2.0, governors=[(5, 30)], f_db=0.02)
    t_db, _ = stage1_analytic(s)
    assert t_db == pytest.approx(0.02 / (2.0 / 20.0))


def test_trajectory_starts_at_rest_and_stays_nonnegative(all_on):
    assert all_on.df[0] == 0.0
    assert np.all(all_on.df >= 0)
    assert np.all(np.diff(all_on.t) > 0)


def test_nadir_near_published_value(all_on):
    assert abs(all_on.metrics.nadir_df - 0.3884) / 0.3884 < 0.01


def test_dt_halving_changes_nadir_little():
    s = SfrScenario(**ALL_ON)
    a = simulate(s, 1e-3).metrics.nadir_df
    b = simulate(s, 5e-4).metrics.nadir_df
    assert abs(a - b) / b < 1e-4


def test_qss_settles_to_closed_form():
    s = SfrScenario(**ALL_ON)
    _, qss, settled = simulate_until_settled(s)
    assert settled
    assert qss == pytest.approx(qss_closed_form(s), rel=5e-3)


def test_short_horizon_flags_unsettled_qss(all_on):
    # a slow oscillation is still decaying at 30 s
    assert not all_on.metrics.qss_converged


def test_reserve_caps_clip_response():
    caps = (2.0, 2.0, 2.0, 1.0)
    traj = simulate(SfrScenario(**ALL_ON, reserve_caps=caps))
    assert traj.pfr_g.max() <= 2.0 + 1e-12
    assert traj.pfr_w.max() <= 1.0 + 1e-12
    assert traj.metrics.nadir_df > simulate(SfrScenario(**ALL_ON)).metrics.nadir_df


def test_uncapped_fast_path_matches_generic_step():
    fast = simulate(SfrScenario(**ALL_ON))
    generic = simulate(SfrScenario(**ALL_ON, reserve_caps=(1e9,) * 4))
    assert np.max(np.abs(fast.df - generic.df)) < 1e-10


@pytest.mark.parametrize("dt", [0.0, -1e-3, 1.0])
def test_dt_domain(dt):
    with pytest.raises(DomainError):
        simulate(SfrScenario(**ALL_ON), dt)


@pytest.mark.parametrize("bad", [dict(h_sys=0.0), dict(dp=-1.0), dict(governors=[(0, 5)]), dict(g_w=-1.0),
                                 dict(f_db=-0.1), dict(reserve_caps=(1.0,))])
def test_scenario_validation(bad):
    with pytest.raises(ValidationError):
        SfrScenario(**{**ALL_ON, **bad})


def test_from_dict_rejects_unknown_keys():
    with pytest.raises(ValidationError):
        SfrScenario.from_dict({**ALL_ON, "inertia": 3})


def test_dict_roundtrip():
    s = SfrScenario(**ALL_ON, names=["a", "b", "c"])
    assert SfrScenario.from_dict(s.to_dict()) == s


def test_csv_export(tmp_path, all_on):
    path = tmp_path / "traj.csv"
    all_on.to_csv(path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "df_hz", "pfr_total_mw", "pfr_g_g1", "pfr_g_g2", "pfr_g_g3", "pfr_w"]
    assert len(rows) == len(all_on.t) + 1
