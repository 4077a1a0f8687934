import math

import numpy as np
import pytest

from kinlv.figures import (
    FigureSpec,
    band_ratio,
    figure_checks,
    figure_data,
    figure_panels,
    mean_relative_gap,
    relative_amplitude,
    zero_lag_correlation,
)
from kinlv import TABLE1


def test_helpers():
    t = np.linspace(0, 20, 2001)
    a = np.sin(t) + 0.1 * t
    assert zero_lag_correlation(a, 2 * np.sin(t) + 5) == pytest.approx(1.0, abs=1e-3)
    assert zero_lag_correlation(np.sin(t), -np.sin(t)) == pytest.approx(-1.0)
    assert relative_amplitude(np.array([1.0, 3.0])) == pytest.approx(1.0)
    assert mean_relative_gap(np.array([1.1, 0.9]), np.array([1.0, 1.0])) == pytest.approx(0.1)


@pytest.fixture(scope="module")
def spec():
    return FigureSpec(t_end=40.0, output_dt=0.1)


@pytest.mark.parametrize("which", [1, 2, 3, 4])
def test_datasets_and_panels(spec, which):
    cols = figure_data(which, spec)
    n = cols["t"].size
    assert all(v.shape == (n,) for v in cols.values())
    title, panels = figure_panels(which, cols, spec)
    assert title.startswith(f"Figure {which}") and panels


def test_fig1_properties(spec):
    res = figure_checks(1, figure_data(1, spec), spec)
    assert res["synchrony"] and res["amplitude_reduced"]


def test_fig3_band_shrink(spec):
    res = figure_checks(3, figure_data(3, spec), spec)
    assert res["band_shrink"]
    assert band_ratio(TABLE1, spec) == pytest.approx(math.sqrt(10), rel=1e-9)


def test_fig4_tracking(spec):
    res = figure_checks(4, figure_data(4, spec), spec)
    assert res["tracking"]


def test_unknown_figure():
    with pytest.raises(ValueError):
        figure_data(5)
