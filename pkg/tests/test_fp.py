import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from kinlv import TABLE1, InitialConditions, Risk, Shape
from kinlv import fp
from kinlv.fp import (
    DriftDiffusion,
    FpConfig,
    MassDrift,
    NonPositiveDensity,
    bernoulli,
    cell_averages,
    discrete_equilibrium,
    flux,
    frozen_steady_state,
    implicit_step,
    init_system,
    initial_density,
    nodal_moments,
    relative_l1,
    run_fp,
    species_operator,
    stable_dt,
    step_fp,
    to_grid_density,
    wealth_steady_state,
)
from kinlv.grid import Mesh1D
from kinlv.inequality import InverseGammaDist, cv_of, quasi_eq_density
from kinlv.ode import OdeSolverConfig, integrate_cv

NARROW_IC = InitialConditions(4.0, 3.0, 0.5, 0.5)


def test_bernoulli():
    z = np.array([-30.0, -1.0, -1e-12, 0.0, 1e-12, 1.0, 30.0, 800.0])
    b = bernoulli(z)
    assert b[3] == 1.0
    assert np.allclose(b[[0, 1, 5, 6]], z[[0, 1, 5, 6]] / np.expm1(z[[0, 1, 5, 6]]), rtol=1e-14)
    assert b[-1] == 0.0 and np.all(b >= 0)
    # B(-z) = B(z) + z
    assert np.allclose(bernoulli(-z[:-1]), b[:-1] + z[:-1], rtol=1e-12)


@pytest.mark.parametrize("k", [1, 2])
def test_discrete_equilibrium_has_zero_flux(k):
    op = DriftDiffusion(0.05, 1.3, 2.0, k)
    mesh = Mesh1D(200, 6.0)
    f = discrete_equilibrium(op, mesh)
    J = flux(op, mesh, f)
    assert np.max(np.abs(J)) < 1e-12 * np.max(np.abs(op.a * mesh.centers**k * f / mesh.dx))
    assert np.array_equal(implicit_step(op, mesh, f, 10.0) > 0, f > 0)
    assert np.allclose(implicit_step(op, mesh, f, 10.0), f, rtol=1e-9, atol=1e-14 * f.max())


@settings(max_examples=30, deadline=None)
@given(
    arrays(np.float64, 64, elements=st.floats(0.0, 5.0)),
    st.floats(1e-4, 1e3),
    st.sampled_from([1, 2]),
    st.floats(1e-4, 1.0),
)
def test_implicit_step_positive_and_conservative(f, dt, k, a):
    if f.sum() == 0:
        f = f + 1.0
    op = DriftDiffusion(a, 1.0, 1.5, k)
    mesh = Mesh1D(64, 5.0)
    g = implicit_step(op, mesh, f, dt)
    assert np.all(g >= 0)
    # unit column sums: mass is exact up to solve roundoff, which grows with dt
    assert g.sum() == pytest.approx(f.sum(), rel=1e-10)


def test_frame_transform():
    op = DriftDiffusion(0.1, 1.0, 2.0, 1)
    tr = op.in_frame(2.0, 0.3)
    assert (tr.a, tr.c1, tr.c0) == pytest.approx((0.05, 1.3, 1.0))
    assert op.in_frame(2.0, 0.0).in_frame(0.5, 0.0) == op
    op2 = DriftDiffusion(0.1, 1.0, 2.0, 2)
    assert op2.in_frame(3.0, 0.0).a == 0.1


def test_stable_dt_positive():
    op = species_operator(TABLE1, "deposits", 4.0, 3.0)
    assert 0 < stable_dt(op, Mesh1D(128, 20.0)) < math.inf


@pytest.mark.parametrize("shape", list(Shape))
def test_initial_density(shape):
    mesh = Mesh1D(2048, 12.0)
    f = initial_density(mesh, shape, 4.0, 0.3)
    mass, m, v = nodal_moments(mesh, f)
    assert mass == pytest.approx(1.0, rel=1e-14)
    assert m == pytest.approx(4.0, rel=1e-3)
    assert math.sqrt(v) / m == pytest.approx(0.3, rel=1e-2)


def test_singular_initial_density_uses_cell_averages():
    mesh = Mesh1D(512, 60.0)
    f = initial_density(mesh, Shape.GAMMA, 4.0, 2.0)
    assert np.all(np.isfinite(f)) and f[0] > f[1]


def test_frozen_deposits_match_gamma_nodes():
    # moderate noise so that 256 cells resolve the peak
    p = TABLE1.with_(sigma_f=0.05, sigma_g=0.05)
    mesh = Mesh1D(256, 20.0)
    f = frozen_steady_state(p, "deposits", 4.0, 3.0, mesh)
    q = quasi_eq_density(p, "deposits", Risk.HALF, 4.0, 3.0)
    ref = q.pdf(mesh.centers)
    assert relative_l1(f, ref / (ref.sum() * mesh.dx)) < 1e-10


def test_frozen_loans_risk_one_match_inverse_gamma_nodes():
    p = TABLE1.with_(sigma_f=0.05, sigma_g=0.05, risk_g=Risk.ONE)
    mesh = Mesh1D(512, 30.0)
    f = frozen_steady_state(p, "loans", 4.0, 3.0, mesh)
    q = quasi_eq_density(p, "loans", Risk.ONE, 4.0, 3.0, pareto="derived")
    ref = q.pdf(mesh.centers)
    assert relative_l1(f, ref / (ref.sum() * mesh.dx)) < 1e-9


def test_bouchaud_mezard_second_order():
    m, sigma = 1.0, 0.5
    exact = InverseGammaDist(1 + 2 / sigma, 2 * m / sigma)
    errs = []
    for n in (256, 512, 1024):
        mesh = Mesh1D(n, 40.0)
        f = wealth_steady_state(m, sigma, mesh)
        errs.append(relative_l1(f, cell_averages(exact, mesh)))
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert min(orders) > 1.8


def test_wealth_steady_state_cv():
    mesh = Mesh1D(1024, 40.0)
    f = wealth_steady_state(1.0, 0.5, mesh)
    g = to_grid_density(mesh, f)
    # inverse Gamma with shape 5: cv = 1/sqrt(3)
    assert cv_of(g) == pytest.approx(1 / math.sqrt(3), rel=5e-3)


def test_short_run_tracks_moment_odes():
    cfg = FpConfig(n_cells=512, x_max=20.0, t_end=1.0, output_dt=0.25, snapshot_times=(1.0,))
    res = run_fp(TABLE1, NARROW_IC, cfg)
    tr = integrate_cv(TABLE1, NARROW_IC, OdeSolverConfig(t_end=1.0, output_dt=0.25, rtol=1e-11, atol=1e-11))
    assert np.max(np.abs(res.mass_f - 1)) < 1e-12 and np.max(np.abs(res.mass_g - 1)) < 1e-12
    assert np.max(np.abs(res.m_f / tr.m_f - 1)) < 0.01
    assert np.max(np.abs(res.m_g / tr.m_g - 1)) < 0.01
    snap = res.snapshots[0]
    assert snap.t == 1.0 and np.all(snap.f >= 0)
    dx = snap.x[1] - snap.x[0]
    assert snap.f.sum() * dx == pytest.approx(1.0, abs=1e-9)
    meta = res.metadata()
    assert meta["mesh"]["n_cells"] == 512 and meta["n_steps"] == res.n_steps > 0


def test_fixed_frame_agrees_with_comoving():
    p = TABLE1.with_(sigma_f=0.05, sigma_g=0.05)
    base = dict(n_cells=1024, x_max=20.0, t_end=0.5, output_dt=0.5)
    a = run_fp(p, NARROW_IC, FpConfig(**base))
    b = run_fp(p, NARROW_IC, FpConfig(**base, frame="fixed"))
    assert a.m_f[-1] == pytest.approx(b.m_f[-1], rel=5e-3)
    assert a.v_g[-1] == pytest.approx(b.v_g[-1], rel=5e-2)


def test_mass_drift_detected(monkeypatch):
    system = init_system(TABLE1, NARROW_IC, FpConfig(n_cells=64, x_max=20.0))
    monkeypatch.setattr(fp, "implicit_step", lambda op, mesh, f, dt: 1.01 * f)
    with pytest.raises(MassDrift):
        step_fp(system, 1e-3)


def test_negative_density_detected(monkeypatch):
    system = init_system(TABLE1, NARROW_IC, FpConfig(n_cells=64, x_max=20.0))
    monkeypatch.setattr(fp, "implicit_step", lambda op, mesh, f, dt: f - 2 * f.max() / f.size)
    with pytest.raises(NonPositiveDensity):
        step_fp(system, 1e-3)


def test_config_checks():
    with pytest.raises(ValueError):
        FpConfig(frame="lab")
    with pytest.raises(ValueError):
        FpConfig(n_cells=8)


def test_default_domain_covers_initial_tail():
    from kinlv import PAPER_INITIAL
    from kinlv.fp import default_x_max

    x_max = default_x_max(TABLE1, PAPER_INITIAL, 5.0)
    tail = 1 - GammaTail(PAPER_INITIAL.m_f0, PAPER_INITIAL.c_f0, x_max)
    assert tail <= 1.01e-6


def GammaTail(m, c, x):
    from scipy.stats import gamma

    a = 1 / c**2
    return gamma.cdf(x, a, scale=m / a)
