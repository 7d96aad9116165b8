"""Shared fixtures and hypothesis settings for the test suite."""

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

import fieldfuse as ff
from fieldfuse.experiments import REFERENCE_GEOMETRY, REFERENCE_INTRINSICS

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


ALL_KINDS = ("pinhole", "ucm", "eucm", "ds")


def model_for(kind: str) -> ff.CameraModel:
    """A realistic camera of the given kind at the reference resolution."""
    if kind == "pinhole":
        return ff.CameraModel(kind="pinhole", fx=240.0, fy=244.0, cx=190.1, cy=131.7)
    return REFERENCE_INTRINSICS[kind]


@pytest.fixture
def geom():
    return REFERENCE_GEOMETRY


@pytest.fixture
def rng():
    return np.random.default_rng(20260816)


@pytest.fixture(params=ALL_KINDS)
def any_model(request):
    return model_for(request.param)
