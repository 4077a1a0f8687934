import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kinlv import PAPER_INITIAL, TABLE1, InitialConditions, Risk
from kinlv.ode import (
    MomentState,
    OdeSolverConfig,
    WealthParams,
    cv2_rhs_mixed,
    cv2_rhs_p12,
    cv_closed_form_p12,
    cv_longtime_band,
    cv_rhs_p12,
    integrate_cv,
    integrate_means,
    integrate_moments,
    lv_invariant,
    lv_rhs,
    stationary_cv,
    variance_rhs_mixed,
    variance_rhs_p12,
    wealth_cv,
    wealth_cv_limit,
    wealth_mean,
    wealth_states,
)

H_43 = 0.308240530771944999187522641619  # 30-digit reference
H_FIXED = 0.204866417277086694271394769661
TIGHT = OdeSolverConfig(t_end=20.0, rtol=1e-12, atol=1e-12)


def test_lv_rhs_vanishes_at_fixed_point():
    mf, mg = TABLE1.fixed_point
    assert lv_rhs(TABLE1, mf, mg) == pytest.approx((0.0, 0.0), abs=1e-15)


def test_invariant_reference_values():
    assert lv_invariant(TABLE1, 4.0, 3.0) == pytest.approx(H_43, rel=1e-14)
    assert lv_invariant(TABLE1, *TABLE1.fixed_point) == pytest.approx(H_FIXED, rel=1e-14)


def test_invariant_minimal_at_fixed_point():
    h0 = lv_invariant(TABLE1, *TABLE1.fixed_point)
    for mf, mg in [(3.0, 2.0), (3.4, 1.9), (5.0, 1.0), (1.0, 4.0)]:
        assert lv_invariant(TABLE1, mf, mg) > h0


@settings(max_examples=20, deadline=None)
@given(st.floats(0.5, 8.0), st.floats(0.5, 6.0))
def test_invariant_conserved_along_orbits(mf0, mg0):
    tr = integrate_means(TABLE1, InitialConditions(mf0, mg0, 1.0, 1.0), OdeSolverConfig(t_end=15.0))
    h = np.array([lv_invariant(TABLE1, a, b) for a, b in zip(tr.m_f, tr.m_g)])
    assert np.max(np.abs(h / h[0] - 1)) < 1e-6
    assert np.all(tr.m_f > 0) and np.all(tr.m_g > 0)


def test_rk4_means_match_dp45():
    a = integrate_means(TABLE1, PAPER_INITIAL, OdeSolverConfig(t_end=10.0, rtol=1e-12, atol=1e-12))
    b = integrate_means(TABLE1, PAPER_INITIAL, OdeSolverConfig(t_end=10.0, method="rk4", dt=0.005))
    assert np.max(np.abs(a.m_f - b.m_f)) < 1e-8


def test_moment_state_checks():
    s = MomentState(0.0, 2.0, 3.0, 4.0, 9.0)
    assert (s.c_f, s.c_g) == (1.0, 1.0)
    with pytest.raises(ValueError):
        MomentState(0.0, 0.0, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        MomentState(0.0, 1.0, 1.0, -1.0, 1.0)


@pytest.mark.parametrize("risk", [Risk.HALF, Risk.ONE])
def test_variance_and_cv_forms_agree(risk):
    # the printed loans damping uses sigma_f; Table 1 has sigma_f == sigma_g
    p = TABLE1.with_(risk_g=risk)
    a = integrate_moments(p, PAPER_INITIAL, TIGHT)
    b = integrate_cv(p, PAPER_INITIAL, TIGHT)
    assert np.max(np.abs(a.c_f / b.c_f - 1)) < 1e-8
    assert np.max(np.abs(a.c_g / b.c_g - 1)) < 1e-8


def test_sigma_override_changes_only_mixed_loans():
    p = TABLE1.with_(risk_g=Risk.ONE, sigma_f=5e-3)
    s = MomentState(0.0, 4.0, 3.0, 1.0, 2.0)
    base = variance_rhs_mixed(p, s)
    over = variance_rhs_mixed(p, s, sigma_override=True)
    assert base[0] == over[0]
    # the loans damping carries -s m_f v_g with s = sigma_f (printed) or sigma_g
    assert over[1] - base[1] == pytest.approx((5e-3 - 1e-3) * 4.0 * 2.0, rel=1e-12)
    # with the override, the variance form matches the CV form for any sigmas
    a = integrate_moments(p, PAPER_INITIAL, TIGHT, sigma_override=True)
    b = integrate_cv(p, PAPER_INITIAL, TIGHT)
    assert np.max(np.abs(a.c_g / b.c_g - 1)) < 1e-8


@given(st.floats(0.5, 8), st.floats(0.5, 6), st.floats(0.0, 50.0), st.floats(0.0, 50.0))
def test_variance_rhs_matches_cv_rhs(mf, mg, vf, vg):
    # d(v/m^2) = v'/m^2 - 2 v m'/m^3
    s = MomentState(0.0, mf, mg, vf, vg)
    dvf, dvg = variance_rhs_p12(TABLE1, s)
    dmf, dmg = lv_rhs(TABLE1, mf, mg)
    dcf2, dcg2 = cv2_rhs_p12(TABLE1, mf, mg, vf / mf**2, vg / mg**2)
    assert dvf / mf**2 - 2 * vf * dmf / mf**3 == pytest.approx(dcf2, rel=1e-9, abs=1e-12)
    assert dvg / mg**2 - 2 * vg * dmg / mg**3 == pytest.approx(dcg2, rel=1e-9, abs=1e-12)


def test_cv_rhs_needs_positive_cv():
    with pytest.raises(ValueError):
        cv_rhs_p12(TABLE1, 4.0, 3.0, 0.0, 1.0)


@pytest.mark.parametrize("risk", [Risk.HALF, Risk.ONE])
@given(mf=st.floats(0.5, 8), mg=st.floats(0.5, 6))
def test_stationary_cv_balances_squared_equations(risk, mf, mg):
    cf, cg = stationary_cv(TABLE1, mf, mg, risk)
    rhs = cv2_rhs_p12 if risk is Risk.HALF else cv2_rhs_mixed
    d = rhs(TABLE1, mf, mg, cf * cf, cg * cg)
    assert d == pytest.approx((0.0, 0.0), abs=1e-15)


def test_stationary_cv_at_fixed_point():
    cf, cg = stationary_cv(TABLE1, *TABLE1.fixed_point)
    # Gamma quasi-equilibrium with shape 6000
    assert cf == pytest.approx(1 / math.sqrt(6000), rel=1e-13)
    assert cg == pytest.approx(math.sqrt(1e-3 * (10 / 3) / (2 * 1.4 * 2)), rel=1e-13)


def test_closed_form_with_constant_means():
    mf, mg = TABLE1.fixed_point
    t = np.linspace(0, 5, 21)
    cf, cg = cv_closed_form_p12(TABLE1, lambda s: _const(s, mf, mg), 2.0, 1.0, t)
    kf = 1.8
    inf2 = 1e-3 * mg / mf / (2 * kf)
    exact = np.sqrt(inf2 + (4.0 - inf2) * np.exp(-2 * kf * t))
    assert np.max(np.abs(cf / exact - 1)) < 1e-9


def _const(s, mf, mg):
    s = np.asarray(s, float)
    return np.full_like(s, mf), np.full_like(s, mg)


def test_closed_form_order_independent(table1_cv):
    t = np.array([7.0, 0.5, 3.25, 0.0, 12.0])
    cf, cg = cv_closed_form_p12(TABLE1, table1_cv, 2.0, 1.0, t)
    cf2, cg2 = cv_closed_form_p12(TABLE1, table1_cv, 2.0, 1.0, np.sort(t))
    assert np.allclose(cf[np.argsort(t)], cf2, rtol=1e-9)
    assert cf[3] == 2.0 and cg[3] == 1.0
    with pytest.raises(ValueError):
        cv_closed_form_p12(TABLE1, table1_cv, 2.0, 1.0, [60.0])


def test_band_degenerate_at_fixed_point():
    ic = InitialConditions(*TABLE1.fixed_point, 0.1, 0.1)
    tr = integrate_means(TABLE1, ic, OdeSolverConfig(t_end=30.0))
    band = cv_longtime_band(TABLE1, tr)
    cf, cg = stationary_cv(TABLE1, *TABLE1.fixed_point)
    assert band.lower_f == pytest.approx(cf, rel=1e-12) and band.upper_f == pytest.approx(cf, rel=1e-12)
    assert band.lower_g == pytest.approx(cg, rel=1e-12) and band.upper_g == pytest.approx(cg, rel=1e-12)
    assert band.period is None


def test_band_ordering_and_period(table1_cv):
    band = cv_longtime_band(TABLE1, table1_cv)
    assert band.lower_f < band.upper_f and band.lower_g < band.upper_g
    # linearized period 2 pi / sqrt(alpha delta) = 8.886; the orbit is not small
    assert 8.5 < band.period < 12.0
    wide = band.scaled(1e-3)
    assert wide.lower_f < band.lower_f and wide.upper_g > band.upper_g


@given(st.floats(1e-5, 1e-2))
def test_band_scales_with_sqrt_sigma(sigma):
    tr = integrate_means(TABLE1, PAPER_INITIAL, OdeSolverConfig(t_end=30.0))
    b1 = cv_longtime_band(TABLE1, tr)
    b2 = cv_longtime_band(TABLE1.with_(sigma_f=sigma, sigma_g=sigma), tr)
    ratio = np.array(b2.as_tuple()) / np.array(b1.as_tuple())
    assert np.allclose(ratio, math.sqrt(sigma / 1e-3), rtol=1e-12)


# --- wealth example ---------------------------------------------------------


def test_wealth_limit_value():
    assert wealth_cv_limit(WealthParams(1.0, 0.5)) == pytest.approx(math.sqrt(2 / 1.5), rel=1e-15)
    assert wealth_cv_limit(WealthParams(1.0, 0.5), fp_consistent=True) == pytest.approx(math.sqrt(0.5 / 1.5))


def test_wealth_params_checked():
    with pytest.raises(ValueError):
        WealthParams(1.0, 2.0)
    with pytest.raises(ValueError):
        WealthParams(0.0, 0.5)


@pytest.mark.parametrize("fp", [False, True])
@settings(max_examples=15, deadline=None)
@given(sigma=st.floats(0.05, 1.9), c0=st.floats(0.0, 3.0))
def test_wealth_explicit_matches_numeric(fp, sigma, c0):
    pw = WealthParams(1.0, sigma)
    t = np.linspace(0, 10, 25)
    a = wealth_cv(pw, 1.0, c0, t, method="explicit", fp_consistent=fp)
    b = wealth_cv(pw, 1.0, c0, t, method="numeric", fp_consistent=fp)
    assert np.max(np.abs(a - b)) < 1e-8


def test_wealth_off_mean_start():
    pw = WealthParams(2.0, 0.5)
    with pytest.raises(ValueError):
        wealth_cv(pw, 1.0, 0.3, 1.0, method="explicit")
    c = wealth_cv(pw, 1.0, 0.3, [0.0, 40.0])
    assert c[0] == pytest.approx(0.3)
    assert c[1] == pytest.approx(wealth_cv_limit(pw), rel=1e-8)
    assert wealth_mean(pw, 1.0, np.log(2.0)) == pytest.approx(1.5)


def test_wealth_states():
    st_ = wealth_states(WealthParams(), 1.0, 0.2, [0.0, 1.0])
    assert st_[0].c_h == pytest.approx(0.2) and st_[1].m_h == pytest.approx(1.0)
