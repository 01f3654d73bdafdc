import math

import numpy as np
import pytest

from ctxprop.dataset import SYNTH_CAMERA, SynthSpec, generate_synthetic
from ctxprop.geometry import CameraModel

# lines collected by the acceptance suite, echoed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def camera():
    return SYNTH_CAMERA


@pytest.fixture
def simple_camera():
    # focal 500, principal point at the centre of a 1000x500 image
    return CameraModel.from_intrinsics(500.0, 500.0, 250.0, 1000, 500, camera_height=1.5)


@pytest.fixture(scope="session")
def lane_scenes():
    train = generate_synthetic(SynthSpec(num_scenes=40, rng_seed=11, id_prefix="tr"))
    test = generate_synthetic(SynthSpec(num_scenes=12, rng_seed=12, id_prefix="te"))
    return train, test


def naive_project(box, cam):
    """Independent reference: 8 explicit corners, one matrix product each."""
    c, s = math.cos(box.theta), math.sin(box.theta)
    P = np.array(cam.projection)
    us, vs = [], []
    for dl in (-0.5, 0.5):
        for dw in (-0.5, 0.5):
            for y in (cam.camera_height, cam.camera_height - box.h):
                ox, oz = dl * box.l, dw * box.w
                X = box.x + c * ox + s * oz
                Z = box.z - s * ox + c * oz
                p = P @ np.array([X, y, Z, 1.0])
                us.append(p[0] / p[2])
                vs.append(p[1] / p[2])
    return (
        max(min(us), 0.0),
        max(min(vs), 0.0),
        min(max(us), cam.image_width),
        min(max(vs), cam.image_height),
    )
