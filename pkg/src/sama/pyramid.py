"""Multi-granularity pyramid: linear min-side schedule + bilinear resize.

Levels hold references to the source frames and resize lazily on first
access (memoized per source frame), so pipelines that touch only a couple
of frames per level pay only for those. Resampling is pure, so access
order never changes results.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np

from .errors import InputTooSmall
from .media import FrameBuffer, MediaClip, SamplerConfig


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def _dims_for_min_side(raw_h: int, raw_w: int, min_side: int) -> tuple[int, int]:
    """Target dims with the given min-side, other side from the raw aspect."""
    if raw_h <= raw_w:
        return min_side, _round_half_up(min_side * raw_w / raw_h)
    return _round_half_up(min_side * raw_h / raw_w), min_side


@dataclass(frozen=True)
class ScaleSchedule:
    """Per-level (height, width) targets; level 0 is the raw resolution."""

    dims: tuple[tuple[int, int], ...]

    def __len__(self) -> int:
        return len(self.dims)

    def __getitem__(self, i: int) -> tuple[int, int]:
        return self.dims[i]

    def __iter__(self):
        return iter(self.dims)

    @property
    def min_sides(self) -> tuple[int, ...]:
        return tuple(min(h, w) for h, w in self.dims)


def scale_schedule(raw_h: int, raw_w: int, target_min: int, levels: int) -> ScaleSchedule:
    """Min-side decreases linearly from the raw value to ``target_min``.

    The off side is derived from the raw aspect ratio at every level so
    rounding never accumulates. With a raw min-side equal to the target the
    schedule degenerates to repeated raw dims, which is fine: consecutive
    equal levels just share pixels.
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    raw_min = min(raw_h, raw_w)
    if raw_min < target_min:
        raise InputTooSmall(
            f"min side {raw_min} below target {target_min}; upscale first"
        )
    dims = [(raw_h, raw_w)]
    for k in range(1, levels):
        if k == levels - 1:
            m = target_min
        else:
            m = _round_half_up(raw_min + k * (target_min - raw_min) / (levels - 1))
        dims.append(_dims_for_min_side(raw_h, raw_w, m))
    return ScaleSchedule(tuple(dims))


def _axis_taps(n_in: int, n_out: int, start: int = 0, count: int | None = None):
    """Source taps for output indices [start, start+count); the subrange of
    the full-axis taps, computed with the identical expression."""
    stop = n_out if count is None else start + count
    centers = (np.arange(start, stop, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    centers = np.clip(centers, 0.0, n_in - 1.0)
    i0 = np.floor(centers).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = (centers - i0).astype(np.float32)
    return i0, i1, frac


def _lerp_core(p00, p01, p10, p11, fy, fx):
    """Per-pixel blend shared by every resize path; the identical arithmetic
    guarantees a windowed resize matches the same slice of a full resize."""
    fxc = fx[None, :, None]
    top = p00 + fxc * (p01 - p00)
    bot = p10 + fxc * (p11 - p10)
    val = top + fy[:, None, None] * (bot - top)
    return np.floor(val + 0.5).clip(0, 255).astype(np.uint8)


def _lerp_gather(src, y0, y1, fy, x0, x1, fx):
    # row slabs then column picks: efficient when most columns are used
    rows0 = src[y0]
    rows1 = src[y1]
    return _lerp_core(
        rows0[:, x0].astype(np.float32),
        rows0[:, x1].astype(np.float32),
        rows1[:, x0].astype(np.float32),
        rows1[:, x1].astype(np.float32),
        fy,
        fx,
    )


def _lerp_gather_sparse(src, y0, y1, fy, x0, x1, fx):
    # corner picks via broadcast indexing: efficient for small windows of
    # a large source; gathers the same values as _lerp_gather
    yc0 = y0[:, None]
    yc1 = y1[:, None]
    xc0 = x0[None, :]
    xc1 = x1[None, :]
    return _lerp_core(
        src[yc0, xc0].astype(np.float32),
        src[yc0, xc1].astype(np.float32),
        src[yc1, xc0].astype(np.float32),
        src[yc1, xc1].astype(np.float32),
        fy,
        fx,
    )


def resize_rgb(src: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of an (H, W, 3) uint8 array, half-pixel centers.

    Channels are resampled independently; values are rounded half-up after
    interpolation. An identity target returns the input unchanged.
    """
    if out_h < 1 or out_w < 1:
        raise ValueError("output dimensions must be >= 1")
    in_h, in_w = src.shape[:2]
    if (out_h, out_w) == (in_h, in_w):
        return src
    y0, y1, fy = _axis_taps(in_h, out_h)
    x0, x1, fx = _axis_taps(in_w, out_w)
    return _lerp_gather(src, y0, y1, fy, x0, x1, fx)


def resize_rect(
    src: np.ndarray, out_h: int, out_w: int, y0: int, x0: int, h: int, w: int
) -> np.ndarray:
    """The (y0:y0+h, x0:x0+w) window of resize_rgb(src, out_h, out_w).

    Bit-identical to slicing the full resize, at the cost of only the
    window: interpolation is local, so pipelines that keep a few fragments
    per level never pay for whole-level frames.
    """
    ty0, ty1, tfy = _axis_taps(src.shape[0], out_h, y0, h)
    tx0, tx1, tfx = _axis_taps(src.shape[1], out_w, x0, w)
    return _lerp_gather_sparse(src, ty0, ty1, tfy, tx0, tx1, tfx)


def bilinear_resize(frame: FrameBuffer, out_h: int, out_w: int) -> FrameBuffer:
    return FrameBuffer(resize_rgb(frame.data, out_h, out_w))


class PyramidLevel:
    """One pyramid level; frames resize on first access and are memoized."""

    def __init__(self, scale_id: int, sources: list[np.ndarray], height: int, width: int):
        self.scale_id = scale_id
        self.height = height
        self.width = width
        self._sources = sources
        self._cache: dict[int, np.ndarray] = {}
        self._lock = threading.Lock()

    @property
    def frame_count(self) -> int:
        return len(self._sources)

    def frame(self, i: int) -> np.ndarray:
        """The (height, width, 3) pixels of frame ``i`` at this level."""
        src = self._sources[i]
        if src.shape[:2] == (self.height, self.width):
            return src  # raw level (or degenerate schedule) shares pixels
        key = id(src)
        with self._lock:
            cached = self._cache.get(key)
        if cached is not None:
            return cached
        out = resize_rgb(src, self.height, self.width)
        with self._lock:
            return self._cache.setdefault(key, out)

    def frames(self) -> np.ndarray:
        """Materialize every frame as one (T, height, width, 3) array."""
        return np.stack([self.frame(i) for i in range(self.frame_count)])

    def rect(self, i: int, y0: int, x0: int, h: int, w: int) -> np.ndarray:
        """The (h, w, 3) window of frame ``i`` without materializing it.

        Byte-identical to ``self.frame(i)[y0:y0+h, x0:x0+w]``.
        """
        src = self._sources[i]
        if src.shape[:2] == (self.height, self.width):
            return src[y0 : y0 + h, x0 : x0 + w]
        with self._lock:
            cached = self._cache.get(id(src))
        if cached is not None:
            return cached[y0 : y0 + h, x0 : x0 + w]
        return resize_rect(src, self.height, self.width, y0, x0, h, w)


def _media_arrays(media) -> list[np.ndarray]:
    if isinstance(media, FrameBuffer):
        return [media.data]
    if isinstance(media, MediaClip):
        return [f.data for f in media.frames]
    raise TypeError(f"expected FrameBuffer or MediaClip, got {type(media)!r}")


def upscale_if_small(media, target_min: int):
    """Bilinearly upscale so the min-side reaches ``target_min``; else identity."""
    if isinstance(media, FrameBuffer):
        if min(media.height, media.width) >= target_min:
            return media
        h, w = _dims_for_min_side(media.height, media.width, target_min)
        return bilinear_resize(media, h, w)
    if isinstance(media, MediaClip):
        if min(media.height, media.width) >= target_min:
            return media
        h, w = _dims_for_min_side(media.height, media.width, target_min)
        return MediaClip(
            tuple(bilinear_resize(f, h, w) for f in media.frames), media.nominal_fps
        )
    raise TypeError(f"expected FrameBuffer or MediaClip, got {type(media)!r}")


def build_pyramid(media, config: SamplerConfig, levels: int | None = None) -> list[PyramidLevel]:
    """Upscale if needed, then lay out ``levels`` lazily-resized levels.

    Level 0 always shares the (possibly upscaled) raw pixels. For clips,
    every frame of a level gets the same target dims.
    """
    n_levels = config.n_scales if levels is None else levels
    media = upscale_if_small(media, config.target_min)
    arrays = _media_arrays(media)
    raw_h, raw_w = arrays[0].shape[:2]
    schedule = scale_schedule(raw_h, raw_w, config.target_min, n_levels)
    return [
        PyramidLevel(i, arrays, h, w) for i, (h, w) in enumerate(schedule)
    ]
