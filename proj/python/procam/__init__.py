"""Camera-projector calibration with single-shot De Bruijn stripe patterns."""

import json
import os

from ._procam import (
    Device,
    Distortion,
    Error,
    Intrinsics,
    Pose,
    debruijn_sequence,
    distort,
    matrix_to_rotation_vector,
    project,
    rotation_vector_to_matrix,
    triangulate,
    undistort,
)
from . import _procam

__all__ = [
    "Device",
    "Distortion",
    "Error",
    "Intrinsics",
    "Pose",
    "benchmark",
    "calibrate",
    "debruijn_sequence",
    "distort",
    "matrix_to_rotation_vector",
    "pattern",
    "project",
    "rotation_vector_to_matrix",
    "synthesize_captures",
    "triangulate",
    "undistort",
]

METHODS = ("proposed", "proposed_wo_ba", "global_homography")


def pattern(k=4, n=3, spacing=12, width=800, height=600):
    """Pattern graph as a dict: grid size m, stripe colors, nodes and edges."""
    return json.loads(_procam.pattern_json(k, n, spacing, width, height))


def synthesize_captures(seed=1, poses=10, sigma=0.0):
    """Capture document of a synthetic scene, in the capture-file schema."""
    return json.loads(_procam.synthesize_captures(seed, poses, sigma))


def calibrate(captures, skip_ba=False):
    """Full calibration of a capture document (dict or JSON text)."""
    text = captures if isinstance(captures, str) else json.dumps(captures)
    return json.loads(_procam.calibrate(text, skip_ba))


def benchmark(sigmas, trials, methods=METHODS, seed=1, poses=10, jobs=None):
    """Noise sweep; returns the summary, ordering verdict and raw trials."""
    jobs = jobs or os.cpu_count() or 1
    return json.loads(_procam.benchmark(list(sigmas), trials, list(methods), seed, poses, jobs))
