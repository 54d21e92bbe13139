import math

import numpy as np
import pytest

import moire


def test_version_and_units():
    assert moire.__version__
    assert moire.HBAR_OVER_M_RB87 == pytest.approx(7.307e-4, rel=1e-3)  # um^2/us


def test_pattern_and_trivial_peak():
    p = moire.ModelParams.from_periods(1.0, 5.61, 4 * math.pi)
    assert p.n_periods == pytest.approx(5.61)
    s = moire.generate_pattern(p, 4096)
    assert s["values"].shape == (4096,)
    assert np.all(s["values"] >= 0)
    assert moire.solve_km(p)["K_M"] == pytest.approx(1.0, rel=1e-10)
    spec = moire.numerical_spectrum(s["z0"], s["dz"], s["values"], p.sigma)
    assert abs(spec["K_M"] - 1.0) < spec["bin_width"]


def test_peak_matches_dense_grid():
    p = moire.ModelParams.from_periods(0.3, 5.6, 2.5 * math.pi)
    K = np.linspace(0.01, 0.9, 200001)
    aft = np.array([moire.analytic_aft(p, k) for k in K[::50]])
    coarse = K[::50][np.argmax(aft)]
    fine = K[(K > coarse - 1e-3) & (K < coarse + 1e-3)]
    best = fine[np.argmax([moire.analytic_aft(p, k) for k in fine])]
    assert abs(moire.solve_km(p)["K_M"] - best) < 1e-4 * p.kappa


def test_fits_round_trip():
    p = moire.ModelParams.from_periods(1.0, 5.61, 2 * math.pi)
    s = moire.generate_pattern(p, 2048)
    env = moire.fit_envelope(s["z0"], s["dz"], s["values"])
    assert env["sigma0"] == pytest.approx(p.sigma, rel=0.15)
    ff = moire.fit_fringes(s["z0"], s["dz"], s["values"], 1.0)
    assert 0 < ff["v"] <= 1.01


def test_trajectory_scan_has_a_jump():
    T2 = np.linspace(160, 800, 129)
    r = moire.scan_trajectory(T2)
    assert len(r["K_M"]) == 129
    assert len(r["jumps"]) == 1
    lo, hi = r["jumps"][0]
    assert lo < 297 < hi + 5


def test_errors_map_to_python_exceptions():
    with pytest.raises(moire.ConfigError):
        moire.ModelParams(1.0, 1.0, sigma=-1.0).validate()
    with pytest.raises(ValueError):
        moire.scan_trajectory([20.0, 30.0])


def test_sequence_conserves_gamma():
    r = moire.run_sequence({"T2": 300.0})
    assert r["gamma_drift"] < 1e-6
    assert abs(r["theta_difference"]) < 1e-6
    assert r["moire"]["values"].size == 4096


def test_wigner_rotation():
    h = moire.HBAR_OVER_M_RB87
    w = 2 * math.pi * 113e-6
    L = math.sqrt(h / w)
    a = {"center": -4 * L, "width": L}
    b = {"center": 4 * L, "width": L, "momentum": 0.5 / L}
    r = moire.verify_rotation_theorem(a, b, w, 0.5 * math.pi / w, n=256)
    assert r["l2_error"] < 1e-6
    assert abs(r["count_rel_change"]) < 1e-3


def test_pipeline_summary():
    s = moire.run_pipeline({"n_T2": 12, "grid_points": 1024, "near_jump_points": False})
    assert s["n_points"] == 12
    assert s["kappa_max_rel_error"] < 1e-6
