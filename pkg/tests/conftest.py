import numpy as np
import pytest

from pdettc.rng import RngStream
from pdettc.vit import ModelConfig, VisionTransformer


@pytest.fixture
def tiny_cfg():
    return ModelConfig(height=8, width=8, patch_size=3, in_channels=5,
                       out_channels=4, embed_dim=8, depth=1, n_heads=2,
                       mlp_ratio=2.0, dropout_p=0.1)


@pytest.fixture
def tiny_model(tiny_cfg):
    return VisionTransformer(tiny_cfg, RngStream(0, 1))


@pytest.fixture
def np_rng():
    return np.random.default_rng(1234)
