import numpy as np
import pytest

from aipgame.classifier import linear_model, mlp_model
from aipgame.harness import ExperimentConfig, build_toy


@pytest.fixture(scope="session")
def toy_cfg():
    return ExperimentConfig()


@pytest.fixture(scope="session")
def toy(toy_cfg):
    """Trained default linear recogniser and its 100-sample test split."""
    return build_toy(toy_cfg)


def random_model(kind, shape, classes=5, seed=0, hidden=12):
    rng = np.random.default_rng(seed)
    d = int(np.prod(shape))
    if kind == "linear":
        return linear_model(rng.normal(0, 0.3, (classes, d)), rng.normal(0, 0.1, classes), shape, 128.0, 40.0)
    return mlp_model(
        rng.normal(0, 0.4, (hidden, d)),
        rng.normal(0, 0.1, hidden),
        rng.normal(0, 0.4, (classes, hidden)),
        rng.normal(0, 0.1, classes),
        shape,
        128.0,
        40.0,
    )


def random_image(shape, seed=0, lo=0.0, hi=255.0):
    return np.random.default_rng(seed).uniform(lo, hi, shape)
