import numpy as np
import pytest

from textgate.config import ExperimentConfig


def small_config(**overrides):
    """Reduced dimensions: same architecture, fast tests."""
    base = dict(feat_dim=12, hidden_dim=10, embed_dim=6, attn_units=8,
                gate_units=6, max_steps=10, conv_channels=(4, 6, 8),
                conv_strides=((2, 2), (2, 2), (2, 1)), rnn_hidden=6,
                rnn_layers=2, batch_size=4, iterations=5, test_words=3,
                log_every=2, checkpoint_every=0)
    base.update(overrides)
    return ExperimentConfig(**base).validate()


@pytest.fixture
def tiny_cfg():
    return small_config()


@pytest.fixture
def rng():
    return np.random.default_rng(0)
