import numpy as np
import pytest
import torch

from tganet.attributes import load_attribute_embeddings
from tganet.model import NetworkConfig


def tiny_config(**overrides) -> NetworkConfig:
    """Small-input configuration used by the CPU-friendly end-to-end tests."""
    defaults = dict(input_size=32, fem_width=8, embedding_k=8)
    defaults.update(overrides)
    return NetworkConfig(**defaults)


@pytest.fixture
def tiny_net_config() -> NetworkConfig:
    return tiny_config()


@pytest.fixture
def tiny_embeddings():
    return load_attribute_embeddings(42, 8)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _torch_seed():
    torch.manual_seed(0)


def random_mask(rng, shape=(16, 16), p=0.4, non_empty=True) -> np.ndarray:
    while True:
        mask = (rng.random(shape) < p).astype(np.uint8)
        if not non_empty or mask.any():
            return mask
