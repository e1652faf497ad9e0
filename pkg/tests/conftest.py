import numpy as np
import pytest

from posthoc.data import Grid3, Mask, SubjectStack


def line_mask(m: int) -> Mask:
    """1-D grid of m voxels, unit spacing: the simplest mask for vector tests."""
    return Mask.full(Grid3.from_voxel_size(m, 1, 1))


def random_stack(rng: np.random.Generator, m: int = 50, n: int = 10) -> SubjectStack:
    data = rng.standard_normal((n, m)).astype(np.float32)
    return SubjectStack(line_mask(m), data)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20260814)
