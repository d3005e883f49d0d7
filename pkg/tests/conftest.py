import numpy as np
import pytest

from src.config import Complexity, DataGenerationConfig, apply_complexity_defaults


def _complete(complexity: Complexity, **sections) -> DataGenerationConfig:
    config = apply_complexity_defaults(DataGenerationConfig(), complexity)
    update = {}
    for section, values in sections.items():
        current = getattr(config, section)
        update[section] = type(current).model_validate({**current.model_dump(exclude_unset=True), **values})
    return config.model_copy(update=update)


@pytest.fixture
def make_config():
    """Complete config from a preset with per-section field updates, e.g. ``graph_config={...}``."""
    return _complete


@pytest.fixture
def low_config():
    return _complete(Complexity.LOW)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(12345))
