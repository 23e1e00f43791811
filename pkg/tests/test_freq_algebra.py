import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from frequc import bernstein as bp
from frequc import freq_algebra as fa
from frequc.errors import ConfigError
from frequc.grid import WindFarm
from frequc.milp import HighsBackend, LinExpr, MilpModel
from frequc.sfr import SfrScenario, simulate

ALL_ON = SfrScenario(h_sys=76.6, kd_pd=2.1, dp=20.0, governors=[(10, 20), (4, 25), (6, 18)], g_w=20.0, f_db=0.015)
UNITS = [("G1", 32.0, 10.0, 20.0), ("G2", 15.0, 4.0, 25.0), ("G3", 21.6, 6.0, 18.0)]


def farm(lo=10.0, hi=25.0, step=5.0):
    return WindFarm("W", "1", 80.0, 5.0, lo, hi, step, 5.0)


def test_segment_grid():
    g = fa.SegmentGrid.from_fractions(30.0, (0.1, 0.2, 0.3, 0.4))
    assert g.lengths == pytest.approx((3.0, 6.0, 9.0, 12.0))
    assert g.starts == pytest.approx((0.0, 3.0, 9.0, 18.0))
    assert g.horizon == pytest.approx(30.0)
    assert fa.SegmentGrid.even(10.0, 4).lengths == pytest.approx((2.5,) * 4)


def test_droop_expansion_exact_range():
    x = fa.expand_droop(farm())
    assert x.n_bits == 2
    assert x.levels == [10, 15, 20, 25]
    assert not x.needs_cap
    assert x.bits_for(20) == [0, 1]


def test_droop_expansion_needs_cap():
    x = fa.expand_droop(farm(10, 30, 5))
    assert x.n_bits == 3
    assert x.needs_cap
    assert x.levels == [10, 15, 20, 25, 30]
    with pytest.raises(ConfigError):
        x.bits_for(35)


def test_droop_expansion_single_level():
    x = fa.expand_droop(farm(20, 20, 5))
    assert x.n_bits == 0
    assert x.levels == [20]


def test_qss_row_requires_limit_above_dead_band():
    with pytest.raises(ConfigError):
        fa.qss_constraint(MilpModel(), LinExpr(const=10.0), 2.0, 0.3, 0.2, 20.0)


@pytest.mark.parametrize("w", [0, 1])
@pytest.mark.parametrize("x", [0.0, 0.13, 0.5])
def test_big_m_product_is_exact(w, x):
    m = MilpModel()
    wi = m.add_var("w", binary=True)
    xi = m.add_var("x", 0.0, 0.5)
    m.fix(wi, w)
    m.fix(xi, x)
    prod = fa.linearize_product(m, fa.Handle(wi), xi, 0.5, "a")
    for sign in (1.0, -1.0):
        m.set_objective(prod * sign)
        res = HighsBackend().solve(m, gap_tol=0.0)
        assert res.status == "optimal"
        assert prod.value(res.x) == pytest.approx(w * x, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=4, max_size=4))
def test_spline_max_matches_dense_sampling(c):
    c = np.array(c)
    v, t = fa.spline_max(c)
    dense = bp.eval(c, np.linspace(0, 1, 20001)).max()
    assert v >= dense - 1e-9
    assert v <= dense + 1e-6
    assert bp.eval(c, t) == pytest.approx(v)


def test_transcription_is_continuous_and_starts_at_dead_band():
    grid = fa.SegmentGrid.from_fractions(30.0, (0.1, 0.2, 0.3, 0.4))
    spl = fa.transcribe_scenario(ALL_ON, grid)
    assert spl.df[0, 0] == pytest.approx(ALL_ON.f_db)
    assert np.allclose(spl.df[1:, 0], spl.df[:-1, 3])
    assert np.allclose(spl.pg[:, 0, 0], 0.0)
    assert np.allclose(spl.pw, ALL_ON.g_w * (spl.df - ALL_ON.f_db))


def test_transcription_converges_to_oracle():
    spl = fa.transcribe_scenario(ALL_ON, fa.SegmentGrid.even(30.0, 8))
    oracle = simulate(SfrScenario(**{**ALL_ON.__dict__, "horizon": 30.0 + spl.t_offset})).metrics.nadir_df
    assert abs(spl.nadir()[0] - oracle) / oracle < 1e-3


def test_bound_dominates_nadir():
    spl = fa.transcribe_scenario(ALL_ON, fa.SegmentGrid.even(30.0, 4))
    assert spl.bound(0) >= spl.bound(1) >= spl.bound(3) >= spl.nadir()[0]


def _dynamics_model(online, bits, use_handles):
    """One-hour dynamics block with fixed binaries, either as numbers or as bounded binary variables."""
    m = MilpModel()
    units, farms = [], []
    for (name, h, tg, g), on in zip(UNITS, online):
        if use_handles:
            idx = m.add_var(f"I_{name}", binary=True)
            m.fix(idx, on)
            on = fa.Handle(idx)
        units.append(fa.UnitTerms(name, h, tg, g, on))
    x = fa.expand_droop(farm())
    if use_handles:
        handles = []
        for k, b in enumerate(bits):
            idx = m.add_var(f"w{k}", binary=True)
            m.fix(idx, b)
            handles.append(fa.Handle(idx))
        bits = handles
    farms.append(fa.FarmTerms("W", x, tuple(bits)))
    grid = fa.SegmentGrid.from_fractions(30.0, (0.1, 0.2, 0.3, 0.4))
    block = fa.transcribe_dynamics(m, grid, units, farms, 8.0, 2.1, 20.0, 0.015, 0.5, "h0")
    return m, block, grid


@pytest.mark.parametrize("use_handles", [False, True])
@pytest.mark.parametrize("online,bits", [((1, 1, 1), (0, 1)), ((1, 0, 1), (1, 1)), ((1, 1, 0), (1, 1))])
def test_model_rows_reproduce_direct_transcription(online, bits, use_handles):
    m, block, grid = _dynamics_model(online, bits, use_handles)
    res = HighsBackend().solve(m, gap_tol=0.0)
    assert res.status == "optimal"
    df = np.array([[res.x[i] for i in seg] for seg in block.df])
    g_w = 10.0 + 5.0 * (bits[0] + 2 * bits[1])
    h_sys = 8.0 + sum(h for (_, h, _, _), on in zip(UNITS, online) if on)
    govs = [(tg, g) for (_, _, tg, g), on in zip(UNITS, online) if on]
    direct = fa.transcribe_fixed(h_sys, 2.1, 20.0, govs, g_w, 0.015, grid)
    assert np.allclose(df, direct.df, atol=1e-7)
    pw = np.array([[res.x[i] for i in seg] for seg in block.pw["W"]])
    assert np.allclose(pw, direct.pw, atol=1e-6)
    # offline governors stay at zero
    for (name, *_), on in zip(UNITS, online):
        pg = np.array([[res.x[i] for i in seg] for seg in block.pg[name]])
        if not on:
            assert np.allclose(pg, 0.0, atol=1e-9)


@pytest.mark.parametrize("limit,status", [(0.45, "optimal"), (0.35, "infeasible")])
def test_nadir_rows_separate_secure_from_insecure(limit, status):
    # all units online with G_w = 20: the deviation peaks near 0.388 Hz
    m, block, grid = _dynamics_model((1, 1, 1), (0, 1), use_handles=False)
    fa.nadir_bound(m, block, bp.bound_rows(1), limit, "h0")
    assert HighsBackend().solve(m, gap_tol=0.0).status == status


def test_reserve_rows_bound_response():
    m, block, grid = _dynamics_model((1, 1, 1), (0, 1), use_handles=False)
    r = m.add_var("R", 0.0, 100.0)
    fa.reserve_bound(m, block.pg["G1"], bp.bound_rows(1), r, "h0", "G1")
    m.set_objective(LinExpr.var(r))
    res = HighsBackend().solve(m, gap_tol=0.0)
    pg = np.array([[res.x[i] for i in seg] for seg in block.pg["G1"]])
    peak = max(fa.spline_max(c)[0] for c in pg)
    assert res.x[r] >= peak - 1e-7
    assert res.x[r] <= peak * 1.05
