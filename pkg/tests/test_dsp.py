import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sstl.dsp import FilterSpec, RansacSpec, find_extrema, ransac_line, zero_phase_lowpass
from sstl.errors import DegenerateDataError

from conftest import triangle

FS = 500.0


def test_dc_gain_unity():
    y = zero_phase_lowpass(np.full(1000, 5.0))
    assert np.max(np.abs(y - 5.0)) <= 1e-9


def test_impulse_response_symmetric():
    x = np.zeros(2001)
    x[1000] = 1.0
    y = zero_phase_lowpass(x)
    assert np.max(np.abs(y[:1000][::-1] - y[1001:])) <= 1e-9
    assert np.argmax(y) == 1000


def test_cutoff_sine_half_amplitude():
    spec = FilterSpec(5.0, 2, FS)
    t = np.arange(int(20 * FS)) / FS
    y = zero_phase_lowpass(np.sin(2 * np.pi * 5.0 * t), spec)
    mid = y[int(5 * FS):int(15 * FS)]
    amp = 0.5 * (mid.max() - mid.min())
    assert amp == pytest.approx(0.5, rel=0.02)


def test_filter_rejects_short_signal():
    with pytest.raises(ValueError):
        zero_phase_lowpass(np.ones(6))


def test_filter_spec_validation():
    with pytest.raises(ValueError):
        FilterSpec(300.0, 2, FS)
    with pytest.raises(ValueError):
        FilterSpec(5.0, 0, FS)


def test_dc_idempotent():
    y = np.full(500, 3.25)
    for _ in range(3):
        y = zero_phase_lowpass(y)
    assert np.max(np.abs(y - 3.25)) <= 1e-9


@settings(max_examples=30)
@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 2**31 - 1))
def test_filter_linearity(a, b, seed):
    rng = np.random.default_rng(seed)
    x, z = rng.normal(size=400), rng.normal(size=400)
    lhs = zero_phase_lowpass(a * x + b * z)
    rhs = a * zero_phase_lowpass(x) + b * zero_phase_lowpass(z)
    assert np.max(np.abs(lhs - rhs)) <= 1e-9


# -- extrema -------------------------------------------------------------------


def test_triangle_apexes():
    x = triangle(0.0, 10.0, 50, 2)
    ext = find_extrema(x, 1.0)
    assert ext == [0, 50, 100, 150, 200]


def test_ramp_has_no_interior_extrema():
    assert find_extrema(np.linspace(0, 10, 100), 0.5) == [0, 99]


def test_sine_peaks():
    n = 200
    x = np.sin(2 * np.pi * np.arange(n) / 100)
    ext = find_extrema(x, 0.1)
    assert ext[0] == 0 and ext[-1] == n - 1
    for got, want in zip(ext[1:-1], [25, 75, 125, 175]):
        assert abs(got - want) <= 1
    assert len(ext) == 6


def test_extrema_empty_signal():
    with pytest.raises(ValueError):
        find_extrema([], 1.0)


@settings(max_examples=50)
@given(st.lists(st.floats(-20, 20), min_size=4, max_size=12), st.floats(0.2, 3.0))
def test_extrema_alternate_with_prominence(knots, prom):
    x = np.interp(np.linspace(0, len(knots) - 1, 400), np.arange(len(knots)), knots)
    ext = find_extrema(x, prom)
    assert ext[0] == 0 and ext[-1] == len(x) - 1
    assert all(a < b for a, b in zip(ext, ext[1:]))
    inner = ext[1:-1]
    kinds = [x[k] > x[ext[i]] for i, k in enumerate(inner)]
    assert all(a != b for a, b in zip(kinds, kinds[1:]))
    for i, k in enumerate(inner):
        span = x[k:ext[i + 2] + 1]
        retrace = x[k] - span.min() if kinds[i] else span.max() - x[k]
        assert retrace >= prom - 1e-12


# -- RANSAC --------------------------------------------------------------------


def test_ransac_exact_line():
    x = np.linspace(0, 10, 50)
    slope, icpt, mask = ransac_line(np.column_stack([x, 2 * x + 1]))
    assert slope == pytest.approx(2.0, abs=1e-12) and icpt == pytest.approx(1.0, abs=1e-12)
    assert mask.all()


def test_ransac_rejects_outliers():
    rng = np.random.default_rng(3)
    x = rng.uniform(0, 10, 50)
    y = 2 * x + 1 + rng.normal(0, 0.01, 50)
    y[40:] += 5.0
    slope, icpt, mask = ransac_line(np.column_stack([x, y]))
    oracle = np.polyfit(x[:40], y[:40], 1)
    assert slope == pytest.approx(oracle[0], abs=1e-9) and icpt == pytest.approx(oracle[1], abs=1e-9)
    assert abs(slope - 2) <= 1e-2 and abs(icpt - 1) <= 1e-2
    assert not mask[40:].any() and mask[:40].all()


def test_ransac_single_point_error():
    with pytest.raises(DegenerateDataError):
        ransac_line([(1.0, 2.0)])


def test_ransac_vertical_error():
    with pytest.raises(DegenerateDataError):
        ransac_line([(1.0, 2.0), (1.0, 3.0), (1.0, 4.0)])


def test_ransac_low_consensus():
    rng = np.random.default_rng(0)
    pts = rng.uniform(0, 100, (60, 2))
    with pytest.raises(DegenerateDataError):
        ransac_line(pts, RansacSpec(inlier_threshold=0.01, min_inliers_fraction=0.9))


def test_ransac_deterministic():
    rng = np.random.default_rng(1)
    pts = np.column_stack([rng.uniform(0, 10, 80), rng.normal(0, 1, 80)])
    pts[:, 1] += 0.5 * pts[:, 0]
    a = ransac_line(pts, RansacSpec(inlier_threshold=3.0))
    b = ransac_line(pts, RansacSpec(inlier_threshold=3.0))
    assert a[0] == b[0] and a[1] == b[1] and np.array_equal(a[2], b[2])


@given(st.floats(-3, 3), st.floats(-5, 5), st.integers(0, 1000))
def test_ransac_all_inliers_equals_least_squares(m, c, seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 20, 30)
    y = m * x + c + rng.uniform(-0.01, 0.01, 30)
    slope, icpt, mask = ransac_line(np.column_stack([x, y]))
    assert mask.all()
    oracle = np.polyfit(x, y, 1)
    assert slope == pytest.approx(oracle[0], abs=1e-9)
    assert icpt == pytest.approx(oracle[1], abs=1e-8)
