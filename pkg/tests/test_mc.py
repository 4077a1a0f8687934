import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kinlv import PAPER_INITIAL, TABLE1, Risk, Shape
from kinlv.mc import (
    HIST_HEADER,
    McConfig,
    ResampleExhausted,
    holling_phi,
    holling_psi,
    initial_population,
    interact_pair,
    noise_scales,
    redistribute,
    round_rng,
    run_mc,
)
from kinlv.ode import OdeSolverConfig, integrate_cv

SMALL = McConfig(n_agents=4000, epsilon=0.05, t_end=1.0, stride=0.25, seed=11)


def test_holling_forms():
    assert holling_phi(TABLE1, 1.0) == pytest.approx(0.25)
    assert holling_psi(TABLE1, 10.0) == 0.0
    assert holling_psi(TABLE1, 0.0) == pytest.approx(-1.5)


@given(st.floats(0.01, 20.0), st.floats(0.01, 20.0))
def test_small_epsilon_recovers_bilinear_rates(x, y):
    eps = 1e-7
    assert holling_phi(TABLE1, y, eps) / eps == pytest.approx(TABLE1.beta * y, rel=1e-5)
    assert holling_psi(TABLE1, x, eps) / eps == pytest.approx(TABLE1.gamma * (x - TABLE1.mu), rel=1e-5, abs=1e-9)


@given(st.floats(0.1, 10.0), st.floats(0.1, 10.0), st.floats(1e-3, 1.0))
def test_noise_variance(x, y, eps):
    sd_f, sd_g = noise_scales(TABLE1, np.array([x]), np.array([y]), eps)
    assert sd_f[0] ** 2 == pytest.approx(eps * TABLE1.sigma_f * y / (1 + eps * y) * x, rel=1e-12)
    p1 = TABLE1.with_(risk_g=Risk.ONE)
    _, sd_g1 = noise_scales(p1, np.array([x]), np.array([y]), eps)
    assert sd_g1[0] ** 2 == pytest.approx(eps * TABLE1.sigma_g * x / (1 + eps * x) * y * y, rel=1e-12)


def test_interaction_without_noise():
    x1, y1 = interact_pair(TABLE1, 4.0, 3.0, 0.0, 0.0, 0.01)
    assert x1 == pytest.approx(4.0 - holling_phi(TABLE1, 3.0, 0.01) * 4.0)
    assert y1 == pytest.approx(3.0 + holling_psi(TABLE1, 4.0, 0.01) * 3.0)


@given(st.floats(0.1, 10.0), st.floats(1e-3, 0.5))
def test_redistribution_mean(m, eps):
    # with z = (1 + chi) * mean the mean grows by eps * alpha * m
    v = np.array([0.5 * m, 1.5 * m])
    out = redistribute(TABLE1, v, (1 + TABLE1.chi) * m, eps, "deposits")
    assert out.mean() == pytest.approx(m + eps * TABLE1.alpha * m, rel=1e-12)
    with pytest.raises(ValueError):
        redistribute(TABLE1, v, m, eps, "savings")


def test_config_checks():
    with pytest.raises(ValueError):
        McConfig(epsilon=0.03, stride=0.25)
    with pytest.raises(ValueError):
        McConfig(n_agents=1)
    with pytest.raises(ValueError):
        McConfig(noise_reference="median")
    assert McConfig(epsilon=0.01, stride=0.25).rounds_per_output == 25


def test_streams_are_independent():
    a = round_rng(5, 0).standard_normal(4)
    b = round_rng(5, 1).standard_normal(4)
    c = round_rng(5, 0).standard_normal(4)
    assert not np.allclose(a, b) and np.array_equal(a, c)


def test_initial_population_matches_request():
    pop = initial_population("deposits", 4.0, 2.0, Shape.GAMMA, McConfig(n_agents=200_000, seed=2))
    assert pop.values.mean() == pytest.approx(4.0, rel=0.02)
    assert pop.values.std() / pop.values.mean() == pytest.approx(2.0, rel=0.03)
    flat = initial_population("loans", 3.0, 0.0, Shape.GAMMA, SMALL)
    assert np.all(flat.values == 3.0)


def test_reproducible_and_seed_dependent():
    a = run_mc(TABLE1, PAPER_INITIAL, SMALL)
    b = run_mc(TABLE1, PAPER_INITIAL, SMALL)
    c = run_mc(TABLE1, PAPER_INITIAL, McConfig(**{**SMALL.__dict__, "seed": 12}))
    assert np.array_equal(a.m_f, b.m_f) and np.array_equal(a.v_g, b.v_g)
    assert not np.array_equal(a.m_f, c.m_f)


def test_run_outputs():
    cfg = McConfig(**{**SMALL.__dict__, "snapshot_times": (0.5, 1.0)})
    res = run_mc(TABLE1, PAPER_INITIAL, cfg)
    assert np.allclose(res.t, [0, 0.25, 0.5, 0.75, 1.0])
    assert res.min_value >= 0
    assert res.total_events == 3 * cfg.n_agents * cfg.n_rounds
    cols = res.columns()
    assert list(cols)[-3:] == ["gini_f", "gini_g", "skipped_events"]
    assert np.all((res.gini_f > 0) & (res.gini_f < 1))
    assert [h.t for h in res.histograms] == [0.5, 1.0]
    h = res.histograms[0]
    assert len(HIST_HEADER) == len(h.rows()[0])
    widths = np.diff(h.edges)
    assert float(h.density_f @ widths) == pytest.approx(1.0)


def test_epsilon_refinement_improves_means():
    tr = integrate_cv(TABLE1, PAPER_INITIAL, OdeSolverConfig(t_end=2.0, output_dt=0.5))
    errs = []
    for eps in (0.05, 0.01):
        cfg = McConfig(n_agents=20_000, epsilon=eps, t_end=2.0, stride=0.5, seed=7)
        res = run_mc(TABLE1, PAPER_INITIAL, cfg)
        errs.append(float(np.mean(np.abs(res.m_f - tr.m_f) + np.abs(res.m_g - tr.m_g))))
        assert res.skipped_events[-1] == 0
    assert errs[1] < errs[0]
    assert errs[1] < 0.1


def test_cv_decay_tracks_moment_odes():
    tr = integrate_cv(TABLE1, PAPER_INITIAL, OdeSolverConfig(t_end=2.0, output_dt=0.5))
    res = run_mc(TABLE1, PAPER_INITIAL, McConfig(n_agents=20_000, epsilon=0.01, t_end=2.0, stride=0.5, seed=7))
    assert np.max(np.abs(res.c_f[1:] / tr.c_f[1:] - 1)) < 0.1


def test_abort_when_resampling_disabled():
    p = TABLE1.with_(sigma_f=50.0, sigma_g=50.0)
    cfg = McConfig(n_agents=1000, epsilon=0.5, t_end=1.0, stride=0.5, max_resample=0)
    with pytest.raises(ResampleExhausted):
        run_mc(p, PAPER_INITIAL, cfg)


def test_mean_noise_reference_runs():
    cfg = McConfig(**{**SMALL.__dict__, "noise_reference": "mean"})
    res = run_mc(TABLE1, PAPER_INITIAL, cfg)
    assert np.all(np.isfinite(res.v_f)) and res.min_value >= 0
