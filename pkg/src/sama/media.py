"""Core media types, clip loading, frame selection, and sampler configuration."""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import imageio
from .errors import (
    ConfigError,
    EmptyClip,
    InsufficientFrames,
    MixedDimensions,
)
from .rng import DOMAIN_FRAME, bounded

SPATIAL_MASK_KINDS = ("none", "window", "patch")
TEMPORAL_MASK_KINDS = ("none", "progressive", "choppy", "mixed")
OFFSET_POLICIES = ("random", "center")

FRAME_NAME_RE = re.compile(r"frame_(\d{6})\.(png|ppm)$")


@dataclass(frozen=True)
class FrameBuffer:
    """One decoded RGB frame: (height, width, 3) uint8, row-major."""

    data: np.ndarray

    def __post_init__(self):
        d = self.data
        if not isinstance(d, np.ndarray) or d.ndim != 3 or d.shape[2] != 3:
            raise ValueError("FrameBuffer needs an (H, W, 3) array")
        if d.dtype != np.uint8:
            raise ValueError(f"FrameBuffer needs uint8 samples, got {d.dtype}")
        if d.shape[0] < 1 or d.shape[1] < 1:
            raise ValueError("FrameBuffer dimensions must be at least 1x1")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class MediaClip:
    """An ordered run of frames sharing one resolution."""

    frames: tuple[FrameBuffer, ...]
    nominal_fps: float | None = None

    def __post_init__(self):
        if len(self.frames) < 1:
            raise EmptyClip("clip has no frames")
        h, w = self.frames[0].height, self.frames[0].width
        for i, f in enumerate(self.frames):
            if (f.height, f.width) != (h, w):
                raise MixedDimensions(
                    f"frame {i} is {f.height}x{f.width}, expected {h}x{w}"
                )

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def height(self) -> int:
        return self.frames[0].height

    @property
    def width(self) -> int:
        return self.frames[0].width


@dataclass(frozen=True)
class SamplerConfig:
    """Knobs for the scaling / fragment-sampling / masking pipeline.

    Defaults are the video regime: 7x7 grid of 32x32 fragments (224x224
    output), 32 frames, 16 pyramid levels interlaced by the progressive
    temporal mask. Use ``iqa_default()`` for the image regime.
    """

    grid_rows: int = 7
    grid_cols: int = 7
    frag_h: int = 32
    frag_w: int = 32
    frames_out: int = 32
    n_scales: int = 16
    spatial_mask: str = "none"
    temporal_mask: str = "progressive"
    offset_policy: str = "center"
    seed: int = 0
    aligned_offsets: bool = False

    @staticmethod
    def iqa_default(**overrides) -> "SamplerConfig":
        """Image regime: 8x8 grid, 256x256 output, two-scale window mask."""
        cfg = SamplerConfig(
            grid_rows=8,
            grid_cols=8,
            frames_out=1,
            n_scales=2,
            spatial_mask="window",
            temporal_mask="none",
        )
        return replace(cfg, **overrides)

    @staticmethod
    def vqa_default(**overrides) -> "SamplerConfig":
        """Video regime: 224x224x32 output, progressive 16-level interlace."""
        return replace(SamplerConfig(), **overrides)

    @property
    def out_h(self) -> int:
        return self.grid_rows * self.frag_h

    @property
    def out_w(self) -> int:
        return self.grid_cols * self.frag_w

    @property
    def target_min(self) -> int:
        """Min-side of the coarsest pyramid level (the mosaic min-side)."""
        return min(self.out_h, self.out_w)

    def validate(self, kind: str = "video") -> None:
        """Raise ConfigError on any inconsistent combination."""
        if kind not in ("image", "video"):
            raise ValueError(f"kind must be image|video, got {kind!r}")
        for name in ("grid_rows", "grid_cols", "frag_h", "frag_w"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.n_scales < 1 or self.n_scales > 255:
            raise ConfigError("n_scales must be in [1, 255]")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must fit in 64 unsigned bits")
        if self.spatial_mask not in SPATIAL_MASK_KINDS:
            raise ConfigError(f"unknown spatial_mask {self.spatial_mask!r}")
        if self.temporal_mask not in TEMPORAL_MASK_KINDS:
            raise ConfigError(f"unknown temporal_mask {self.temporal_mask!r}")
        if self.offset_policy not in OFFSET_POLICIES:
            raise ConfigError(f"unknown offset_policy {self.offset_policy!r}")

        if kind == "image":
            if self.temporal_mask != "none":
                raise ConfigError("temporal masks apply to video input only")
        else:
            if self.frames_out < 1:
                raise ConfigError("frames_out must be >= 1")
            if self.temporal_mask != "none" and self.frames_out % 2 != 0:
                raise ConfigError(
                    "temporal masks pack scales as two-frame blocks; "
                    "frames_out must be even"
                )

        spatial = self.spatial_mask != "none"
        temporal = self.temporal_mask != "none"
        if self.n_scales == 1:
            if spatial or temporal:
                raise ConfigError("masks need n_scales > 1 (nothing to interlace)")
        else:
            if not spatial and not temporal:
                raise ConfigError(
                    "n_scales > 1 needs a spatial or temporal mask to pack "
                    "the pyramid into one output"
                )
        if spatial and not temporal and self.n_scales != 2:
            raise ConfigError("spatial masks interlace exactly two scales")
        if temporal:
            half = self.frames_out // 2
            if self.temporal_mask == "progressive" and self.n_scales != half:
                raise ConfigError(
                    f"progressive mask needs n_scales == frames_out/2 "
                    f"({half}), got {self.n_scales}"
                )
            if self.temporal_mask == "mixed":
                if self.frames_out % 4 != 0:
                    raise ConfigError("mixed mask needs frames_out divisible by 4")
                if self.n_scales != self.frames_out // 4:
                    raise ConfigError(
                        f"mixed mask needs n_scales == frames_out/4 "
                        f"({self.frames_out // 4}), got {self.n_scales}"
                    )
            if self.temporal_mask == "choppy" and self.n_scales < 2:
                raise ConfigError("choppy mask alternates two distinct scales")
        if spatial and temporal:
            warnings.warn(
                "combining spatial and temporal masks is experimental",
                stacklevel=2,
            )


# Per-pixel provenance layout; also the container's on-disk record (11 bytes).
PROVENANCE_DTYPE = np.dtype(
    [("scale", "u1"), ("frame", "<u2"), ("y", "<u4"), ("x", "<u4")]
)


@dataclass(frozen=True)
class ProvenanceEntry:
    """Where one output pixel came from: level, frame, and coordinates."""

    scale_id: int
    src_frame: int
    src_y: int
    src_x: int


# ---------------------------------------------------------------------------
# Loading


def load_image(path: str | Path) -> FrameBuffer:
    """Decode one PNG or binary-PPM file."""
    return FrameBuffer(imageio.read_image(path))


def load_clip(directory: str | Path) -> MediaClip:
    """Load a frame directory (frame_000001.png, ...) ordered by index."""
    directory = Path(directory)
    entries = []
    for p in directory.iterdir():
        m = FRAME_NAME_RE.fullmatch(p.name)
        if m:
            entries.append((int(m.group(1)), p.name, p))
    if not entries:
        raise EmptyClip(f"no frame_NNNNNN.(png|ppm) files in {directory}")
    entries.sort()
    frames = tuple(load_image(p) for _, _, p in entries)
    return MediaClip(frames)


# ---------------------------------------------------------------------------
# Temporal selection


def select_frames(
    clip: MediaClip, count: int, seed: int = 0, policy: str = "center"
) -> MediaClip:
    """Pick ``count`` frames spread over the clip.

    The clip is split into ``count`` equal temporal bins; the default picks
    each bin's center, ``policy="random"`` jitters within the bin using the
    counter-based generator. Clips shorter than ``count`` repeat frames
    cyclically instead.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if policy not in OFFSET_POLICIES:
        raise ValueError(f"unknown policy {policy!r}")
    n = len(clip)
    if n < count:
        indices = [k % n for k in range(count)]
    else:
        indices = []
        for k in range(count):
            lo = (k * n) // count
            hi = ((k + 1) * n) // count
            if policy == "random":
                indices.append(lo + bounded(seed, DOMAIN_FRAME, k, n=hi - lo))
            else:
                # bin center, ties toward the earlier frame
                indices.append((lo + hi) // 2)
    return MediaClip(tuple(clip.frames[i] for i in indices), clip.nominal_fps)


def split_snippets(clip: MediaClip, snippet_len: int, n_snippets: int) -> list[MediaClip]:
    """Cut the first snippet_len*n_snippets frames into contiguous snippets."""
    if snippet_len < 1 or n_snippets < 1:
        raise ValueError("snippet_len and n_snippets must be >= 1")
    need = snippet_len * n_snippets
    if len(clip) < need:
        raise InsufficientFrames(
            f"need {need} frames for {n_snippets} snippets of {snippet_len}, "
            f"clip has {len(clip)}"
        )
    return [
        MediaClip(clip.frames[i * snippet_len : (i + 1) * snippet_len], clip.nominal_fps)
        for i in range(n_snippets)
    ]
