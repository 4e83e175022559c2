import numpy as np
import pytest

from sama.media import FrameBuffer, MediaClip


def coordinate_frame(height: int, width: int, tag: int = 0) -> FrameBuffer:
    """Frame whose pixels encode their own coordinates.

    Gather bugs (wrong cell, swapped axes, off-by-one) show up as value
    mismatches anywhere in the output.
    """
    yy = np.arange(height, dtype=np.int64)[:, None]
    xx = np.arange(width, dtype=np.int64)[None, :]
    r = (yy * 7 + xx * 13 + tag) % 256
    g = (yy // 3 + xx * 5 + tag * 11) % 256
    b = (yy * 31 + xx // 2 + tag * 17) % 256
    return FrameBuffer(np.stack([r, g, b], axis=-1).astype(np.uint8))


def coordinate_clip(height: int, width: int, frames: int) -> MediaClip:
    return MediaClip(tuple(coordinate_frame(height, width, tag=t) for t in range(frames)))


def constant_frame(height: int, width: int, color) -> FrameBuffer:
    data = np.empty((height, width, 3), dtype=np.uint8)
    data[:] = color
    return FrameBuffer(data)


@pytest.fixture
def coord_frame():
    return coordinate_frame


@pytest.fixture
def coord_clip():
    return coordinate_clip
