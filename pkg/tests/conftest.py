import numpy as np
import pytest

from volabel import LabeledVolume


def rand_binary(seed, dims=(16, 16, 16), density=0.5):
    rng = np.random.default_rng(seed)
    data = (rng.random(dims) < density).astype(np.uint8)
    return LabeledVolume(data, role="binary")


def rand_semantic(seed, dims=(16, 16, 16), num_classes=3, density=0.5):
    rng = np.random.default_rng(seed)
    data = np.where(rng.random(dims) < density,
                    rng.integers(1, num_classes + 1, dims), 0).astype(np.uint8)
    return LabeledVolume(data, role="semantic")


def shifted_views(arr, offset):
    """Views (a, b) such that a[i] and b[i] are neighbors at +offset."""
    sl_a, sl_b = [], []
    for d, n in zip(offset, arr.shape):
        d = int(d)
        if d >= 0:
            sl_a.append(slice(d, n))
            sl_b.append(slice(0, n - d))
        else:
            sl_a.append(slice(0, n + d))
            sl_b.append(slice(-d, n))
    return arr[tuple(sl_a)], arr[tuple(sl_b)]


@pytest.fixture
def two_blob_volume():
    """Two separated 2x2x2 blobs in a 4x4x8 volume."""
    data = np.zeros((4, 4, 8), dtype=np.uint8)
    data[1:3, 1:3, 1:3] = 1
    data[1:3, 1:3, 5:7] = 1
    return LabeledVolume(data, role="binary")
