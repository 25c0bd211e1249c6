import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make oracles importable

from simvp.engine.tensor import Tensor
from simvp.model import ModelConfig


def toy_config(**overrides):
    base = dict(t_in=4, t_out=4, channels=1, height=16, width=16,
                n_s=2, c_s=16, n_t=2, c_t=32)
    base.update(overrides)
    return ModelConfig(**base)


def t64(data, requires_grad=False):
    """Double-precision tensor for verification paths."""
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=requires_grad,
                  dtype=np.float64)


def model_to_double(model):
    for p in model.params.values():
        p.data = p.data.astype(np.float64)
    return model


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
