import numpy as np
import pytest

import procam


def test_rodrigues_round_trip():
    r = np.array([0.1, -0.4, 0.25])
    R = procam.rotation_vector_to_matrix(r)
    assert np.allclose(R.T @ R, np.eye(3), atol=1e-12)
    assert np.allclose(procam.matrix_to_rotation_vector(R), r, atol=1e-12)


def test_distortion_round_trip():
    d = procam.Distortion(-0.1, 0.01, 0.001, -0.002)
    p = np.array([0.2, -0.15])
    assert np.allclose(procam.undistort(procam.distort(p, d), d), p, atol=1e-10)


def test_project_and_triangulate():
    cam = procam.Device(procam.Intrinsics(600, 600, 320, 240), procam.Distortion(-0.1))
    proj = procam.Device(procam.Intrinsics(1100, 1100, 400, 550), procam.Distortion(-0.08))
    stereo = procam.Pose(np.array([0.0, -0.6, 0.0]), np.array([-1200.0, 0.0, 600.0]))
    identity = procam.Pose(np.zeros(3), np.zeros(3))
    X = np.array([30.0, -20.0, 2000.0])
    xc = procam.project(X, identity, cam)
    xp = procam.project(stereo.apply(X), identity, proj)
    assert np.allclose(procam.triangulate(xc, xp, cam, proj, stereo), X, atol=1e-6)


def test_debruijn_and_pattern():
    assert procam.debruijn_sequence(2, 3) == [0, 0, 0, 1, 0, 1, 1, 1]
    g = procam.pattern(k=2, n=2, spacing=12, width=100, height=100)
    assert g["m"] == 6
    assert len(g["nodes"]) == 36


def test_errors_surface_as_exceptions():
    with pytest.raises(procam.Error):
        procam.debruijn_sequence(1, 3)
    with pytest.raises(procam.Error, match="malformed JSON"):
        procam.calibrate("{")


def test_noiseless_calibration():
    captures = procam.synthesize_captures(seed=3, poses=5)
    assert len(captures["poses"]) == 5
    out = procam.calibrate(captures)
    assert out["rms"]["stereo"] < 1e-4
    assert abs(out["camera"]["fx"] - 600.0) < 1e-3
    skip = procam.calibrate(captures, skip_ba=True)
    assert skip["rms"]["stereo"] < 1e-4


def test_benchmark_report():
    rep = procam.benchmark([0.0], 1, methods=["proposed"], poses=4, jobs=1)
    assert rep["summary"][0]["method"] == "proposed"
    assert len(rep["trials"]) == 1
