"""Per-stage timing harness and synthetic inputs.

Stages are timed where the pipeline does the work: decode (PPM bytes to
pixels), pyramid (schedule + interpolation), fragments (grid, offsets,
source maps), compose (the masked gather), and pack (container
serialization, in memory so disk noise stays out of the numbers).
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass

import numpy as np

from . import imageio
from .media import FrameBuffer, MediaClip, SamplerConfig
from .pack import container_bytes
from .pipeline import sample_image, sample_video
from .pyramid import build_pyramid

BENCH_STAGES = ("decode", "pyramid", "fragments", "compose", "pack")


def synthetic_frame(height: int, width: int, seed: int = 0) -> FrameBuffer:
    """Deterministic noise frame for benchmarks and self-checks."""
    rng = np.random.default_rng(seed)
    return FrameBuffer(rng.integers(0, 256, (height, width, 3), dtype=np.uint8))


def synthetic_clip(height: int, width: int, frames: int, seed: int = 0) -> MediaClip:
    rng = np.random.default_rng(seed)
    return MediaClip(
        tuple(
            FrameBuffer(rng.integers(0, 256, (height, width, 3), dtype=np.uint8))
            for _ in range(frames)
        )
    )


@dataclass
class StageTiming:
    name: str
    times: list[float]

    @property
    def median(self) -> float:
        return statistics.median(self.times)

    @property
    def p95(self) -> float:
        ordered = sorted(self.times)
        idx = max(int(np.ceil(0.95 * len(ordered))) - 1, 0)
        return ordered[idx]


def bench_image(
    height: int, width: int, config: SamplerConfig, reps: int, seed: int = 0
) -> dict[str, StageTiming]:
    """Run the image pipeline ``reps`` times and collect per-stage times."""
    frame = synthetic_frame(height, width, seed)
    ppm = imageio.encode_ppm(frame.data)
    stages: dict[str, list[float]] = {name: [] for name in BENCH_STAGES}
    for _ in range(reps):
        t0 = time.perf_counter()
        decoded = imageio.decode_ppm(ppm)
        stages["decode"].append(time.perf_counter() - t0)
        result = sample_image(FrameBuffer(decoded), config)
        for name in ("pyramid", "fragments", "compose"):
            stages[name].append(result.timings[name])
        t0 = time.perf_counter()
        container_bytes(result.tensor)
        stages["pack"].append(time.perf_counter() - t0)
    return {name: StageTiming(name, times) for name, times in stages.items()}


def compare_single_vs_interlaced(
    height: int,
    width: int,
    reps: int,
    seed: int = 0,
    frames: int = 32,
    clip_frames: int = 4,
) -> dict[str, float]:
    """Median fragment+compose time: plain sampling vs two-scale interlace.

    Runs the video pipeline (the regime the single-scale baseline comes
    from). Both paths gather exactly one output's worth of pixels; the
    interlace adds only a second plan and the mask constants, amortized
    over the clip, so the ratio should stay near one.
    """
    clip = synthetic_clip(height, width, clip_frames, seed)
    single = SamplerConfig(
        frames_out=frames, n_scales=1, temporal_mask="none", seed=seed
    )
    interlaced = SamplerConfig(
        frames_out=frames, n_scales=2, temporal_mask="none",
        spatial_mask="window", seed=seed,
    )
    medians = {}
    for name, config in (("single_scale", single), ("interlaced", interlaced)):
        sample_video(clip, config)  # warmup, excluded from the medians
        times = []
        for _ in range(reps):
            result = sample_video(clip, config)
            times.append(result.timings["fragments"] + result.timings["compose"])
        medians[name] = statistics.median(times)
    ratio = (
        medians["interlaced"] / medians["single_scale"]
        if medians["single_scale"] > 0
        else float("inf")
    )
    return {**medians, "ratio": ratio}


def pyramid_scaling(
    height: int,
    width: int,
    levels_list: tuple[int, ...] = (2, 4, 8, 16),
    reps: int = 7,
    seed: int = 0,
) -> dict[int, float]:
    """Median time to build and fully materialize an n-level pyramid."""
    frame = synthetic_frame(height, width, seed)
    config = SamplerConfig()
    out: dict[int, float] = {}
    for levels in levels_list:
        times = []
        for _ in range(reps):
            t0 = time.perf_counter()
            pyramid = build_pyramid(frame, config, levels=levels)
            for level in pyramid:
                level.frame(0)
            times.append(time.perf_counter() - t0)
        out[levels] = statistics.median(times)
    return out
