import numpy as np
import pytest
from scipy import ndimage as ndi

from vesselmorph.synth import rasterize_segment

EIGHT = np.ones((3, 3), dtype=bool)


def capped_line(shape, start, end, radius):
    m = np.zeros(shape, dtype=bool)
    rasterize_segment(m, start, end, radius)
    return m


def random_blobs(rng, size=96, count=None):
    """Union of random disks and thick strokes, a stand-in for vessel-like masks."""
    m = np.zeros((size, size), dtype=bool)
    count = count or int(rng.integers(2, 7))
    yy, xx = np.mgrid[:size, :size]
    for _ in range(count):
        if rng.random() < 0.5:
            cx, cy = rng.uniform(8, size - 8, 2)
            r = rng.uniform(2, 12)
            m |= (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
        else:
            a, b = rng.uniform(6, size - 6, 2), rng.uniform(6, size - 6, 2)
            rasterize_segment(m, a, b, rng.uniform(1, 5))
    return m


def n_components(mask):
    return ndi.label(mask, structure=EIGHT)[1]


def neighbor_counts(img):
    img = img.astype(np.int32)
    return ndi.convolve(img, np.ones((3, 3), np.int32), mode="constant") - img


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
