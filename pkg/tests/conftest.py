import numpy as np
import pytest

from aesynth import ArrayGeometry, Medium, PressureModel, PulseSpec


@pytest.fixture
def geometry():
    """64-element linear array, 0.315 mm pitch (20.16 mm aperture)."""
    return ArrayGeometry(num_elements=64, pitch=0.315e-3)


@pytest.fixture
def medium():
    return Medium(sos=1480.0)


@pytest.fixture
def tone_pulse():
    return PulseSpec(center_frequency=2e6, num_cycles=1, sample_rate=16e6, kind="tone")


@pytest.fixture
def impulse_pulse():
    return PulseSpec(center_frequency=2e6, num_cycles=1, sample_rate=16e6, kind="impulse")


@pytest.fixture
def unit_model():
    return PressureModel(decay="none", r_min=1e-4, directivity="omni")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
