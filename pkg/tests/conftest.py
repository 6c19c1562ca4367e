"""
Pytest configuration and fixtures for anchordiff tests.
"""

import numpy as np
import pytest

from anchordiff.core.model import ModelConfig, build_model
from anchordiff.synthdata import BenchmarkConfig, ObjectSpec, SceneSpec, gen_video


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running training and pipeline runs")


@pytest.fixture
def rng():
    """Seeded random generator."""
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config():
    """Small network: stride 2, 4-dim embeddings, no dropout."""
    return ModelConfig(embed_dim=4, fusion_dim=8, hidden_channels=(4,), dropout_rate=0.0, init_seed=3)


@pytest.fixture
def tiny_model(tiny_config):
    return build_model(tiny_config)


@pytest.fixture
def moving_video():
    """Six 16x16 frames of a square sliding right over a textured background."""
    spec = SceneSpec(
        height=16, width=16, n_frames=6,
        foreground=ObjectSpec(kind="rect", size=(6, 6), position=(5, 1), velocity=(0, 1), texture_seed=7),
        background_seed=8,
        video_id="moving",
    )
    return gen_video(spec, np.random.default_rng(0))


@pytest.fixture
def small_benchmark_config():
    """A benchmark small enough to train on inside a unit test."""
    return BenchmarkConfig(n_train=2, n_test=2, n_frames=4, height=32, width=32, seed=5, noise_level=0.0)
