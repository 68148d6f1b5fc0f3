from pathlib import Path

import pytest

from eppnet import synth

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def motion_data(tmp_path_factory) -> Path:
    """4 classes x 16 samples of the motion synthetic set (shared, read-only)."""
    out = tmp_path_factory.mktemp("motion")
    synth.synthesize(out, classes=4, samples_per_class=16, seed=0, mode=synth.MOTION)
    return out


@pytest.fixture(scope="session")
def complementary_data(tmp_path_factory) -> Path:
    out = tmp_path_factory.mktemp("complementary")
    synth.synthesize(out, classes=4, samples_per_class=16, seed=0, mode=synth.COMPLEMENTARY)
    return out


@pytest.fixture(scope="session")
def small_data(tmp_path_factory) -> Path:
    """2 classes x 5 samples: 8 train, 2 test."""
    out = tmp_path_factory.mktemp("small")
    synth.synthesize(out, classes=2, samples_per_class=5, seed=1, mode=synth.MOTION)
    return out
