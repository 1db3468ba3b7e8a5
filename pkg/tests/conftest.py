import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from vvtlab import synth_data
from vvtlab.video_core import STORAGE, VideoTensor

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


def make_storage_clip(rng: np.random.Generator, d=3, h=4, w=5, c=1) -> VideoTensor:
    return VideoTensor(rng.integers(0, 256, size=(d, h, w, c), dtype=np.uint8), STORAGE)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_volumetric(tmp_path_factory):
    """8x28x28 eroded-digit domains, 3 train / 3 test clips per domain."""
    root = tmp_path_factory.mktemp("tinyvol")
    config = synth_data.VolumetricConfig(
        depth=8, canvas=28, clips_per_domain=6, max_radius=2, train_fraction=0.5
    )
    return synth_data.build_dataset(synth_data.VOLUMETRIC, config, root, seed=11)


@pytest.fixture(scope="session")
def tiny_moving(tmp_path_factory):
    """8x28x28 moving digits, white vs tinted, 3 train / 3 test per domain."""
    root = tmp_path_factory.mktemp("tinymov")
    config = synth_data.MovingColorConfig(
        depth=8, height=28, width=28, clips_per_domain=6, n_colors=4,
        digit_size=14, train_fraction=0.5,
    )
    return synth_data.build_dataset(synth_data.MOVING_COLOR, config, root, seed=12)
