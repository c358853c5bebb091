import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sstl.dsp import RansacSpec
from sstl.errors import IdentificationError
from sstl.ident import (
    IdentSpec,
    PhaseSegment,
    format_params_csv,
    identify_params,
    read_params_csv,
    segment_loop,
    write_params_csv,
)
from sstl.plant import HysteresisParams, Phase, run_plant, simulate_trace

from conftest import DT, trapezoid, triangle

EXACT = IdentSpec(filter=None, delta_bl=1e-6)


def phase_runs(phases):
    runs, start = [], 0
    for k in range(1, len(phases) + 1):
        if k == len(phases) or phases[k] is not phases[start]:
            runs.append((phases[start], start, k))
            start = k
    return runs


def assert_matches_log(segments, phases):
    # Single-sample runs (a reversal on the very first step) fall inside the boundary tolerance.
    runs = [r for r in phase_runs(phases) if r[2] - r[1] > 1]
    assert [s.label for s in segments] == [r[0] for r in runs]
    for s, (_, a, b) in zip(segments, runs):
        assert abs(s.start_idx - a) <= 1 and abs(s.end_idx - b) <= 1


def test_trapezoid_segments_pp_rb_rp(mean_plant):
    prof = trapezoid(5.0, 25.0)
    tr = simulate_trace(mean_plant, prof, DT)
    assert [s.label for s in segment_loop(tr)] == [Phase.PP, Phase.RB, Phase.RP]
    _, phases, _ = run_plant(mean_plant, prof)
    assert_matches_log(segment_loop(tr, EXACT), phases)


def test_ramp_after_reversal_is_pb_pp(mean_plant):
    prof = np.concatenate([np.linspace(25, 5, 2000), np.linspace(5, 25, 2000)[1:]])
    tr = simulate_trace(mean_plant, prof, DT)
    segs = segment_loop(tr, EXACT)
    assert [s.label for s in segs[-2:]] == [Phase.PB, Phase.PP]
    _, phases, _ = run_plant(mean_plant, prof)
    assert_matches_log(segs, phases)


def test_delta_bl_too_large_fails(mean_plant):
    tr = simulate_trace(mean_plant, trapezoid(5.0, 25.0), DT)
    with pytest.raises(IdentificationError):
        identify_params(tr, IdentSpec(delta_bl=100.0))


def test_too_short_trace(mean_plant):
    tr = simulate_trace(mean_plant, [5.0, 6.0, 7.0], DT)
    with pytest.raises(IdentificationError):
        identify_params(tr)


def test_flat_trace_unusable(mean_plant):
    tr = simulate_trace(mean_plant, np.full(500, 10.0), DT)
    with pytest.raises(IdentificationError):
        identify_params(tr)


def test_missing_release(mean_plant):
    tr = simulate_trace(mean_plant, np.linspace(2, 25, 3000), DT)
    with pytest.raises(IdentificationError, match="release"):
        identify_params(tr)


def test_mean_plant_noiseless(mean_plant, probe_act):
    est = identify_params(simulate_trace(mean_plant, probe_act, DT))
    assert abs(est.gamma_p - 0.583) <= 1e-3 and abs(est.gamma_r - 1.688) <= 1e-3
    assert abs(est.beta_p + 1.444) <= 0.02 and abs(est.beta_r + 1.043) <= 0.02


def test_identity_plant_triangle():
    prof = triangle(2.0, 25.0, 1500, 2)
    est = identify_params(simulate_trace(HysteresisParams(1, 0, 1, 0), prof, DT))
    np.testing.assert_allclose(est.as_tuple(), (1, 0, 1, 0), atol=1e-6)


def test_noisy_mean_plant_monte_carlo(mean_plant, probe_act):
    truth = np.array(mean_plant.as_tuple())
    for seed in range(20):
        est = np.array(identify_params(simulate_trace(mean_plant, probe_act, DT, 0.05, seed)).as_tuple())
        assert abs(est[0] / truth[0] - 1) <= 0.02 and abs(est[2] / truth[2] - 1) <= 0.02
        assert abs(est[1] - truth[1]) <= 0.2 and abs(est[3] - truth[3]) <= 0.2


def test_scale_covariance(mean_plant, probe_act):
    tr = simulate_trace(mean_plant, probe_act, DT)
    a = identify_params(tr)
    b = identify_params(
        tr.scaled(2.0), IdentSpec(delta_bl=0.6, min_prominence=2.0, ransac=RansacSpec(inlier_threshold=0.3))
    )
    assert b.gamma_p == pytest.approx(a.gamma_p, abs=1e-3)
    assert b.gamma_r == pytest.approx(a.gamma_r, abs=1e-3)
    assert b.beta_p == pytest.approx(2 * a.beta_p, abs=0.02)
    assert b.beta_r == pytest.approx(2 * a.beta_r, abs=0.02)


def test_params_csv_roundtrip(tmp_path, mean_plant):
    text = format_params_csv(mean_plant)
    assert text == "gamma_p,beta_p,gamma_r,beta_r\n0.583000,-1.444000,1.688000,-1.043000\n"
    path = tmp_path / "p.csv"
    write_params_csv(mean_plant, path)
    assert read_params_csv(path) == mean_plant


def test_segment_validation():
    with pytest.raises(ValueError):
        PhaseSegment(Phase.PP, 5, 5)
    with pytest.raises(ValueError):
        IdentSpec(delta_bl=0.0)


@settings(max_examples=25, deadline=None)
@given(
    st.floats(0.531, 0.625), st.floats(0.95, 1.05),
    st.floats(-2.0, 0.0), st.floats(-2.0, 0.0),
)
def test_segments_follow_plant_log(gp, product_scale, bp, br):
    p = HysteresisParams(gp, bp, max(1.0, product_scale / gp), br)
    # Low end kept above the slack region so the output never clamps at zero.
    prof = np.concatenate([triangle(5.0, 25.0, 1200, 2), np.linspace(5.0, 20.0, 900)[1:]])
    tr = simulate_trace(p, prof, DT)
    _, phases, _ = run_plant(p, prof)
    segs = segment_loop(tr, EXACT)
    assert_matches_log(segs, phases)
    assert all(a.end_idx == b.start_idx for a, b in zip(segs, segs[1:]))
