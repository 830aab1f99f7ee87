"""Shared pytest setup: repository root on sys.path, slow marker, tiny streams."""

from __future__ import annotations

import os
import sys

import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: end-to-end protocol runs on tiny streams")


@pytest.fixture
def tiny_stream():
    """A 24x24 two-object stream with 4 laps of 12 frames per object."""
    from services.scenes import generate_stream, preset

    return generate_stream(preset("empty-2", laps=4, size=24, lap_frames=12), seed=7)


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(12345)
