"""Self-describing binary container, inspection previews, and the gather audit.

Container layout (all integers little-endian):

    magic   4s   "SAMA"
    version u16  1
    kind    u8   1=image, 2=video
    H, W, T u32  output dims (T == 1 for images)
    n_scales     u8
    spatial_mask u8   0=none 1=window 2=patch
    temporal_mask u8  0=none 1=progressive 2=choppy 3=mixed
    seed    u64
    schedule_len u16, then schedule_len bytes (u8 scale id per frame pair)
    flags   u8   bit0 = provenance section present

followed by the raw RGB8 frames in row-major frame order and, when
flagged, one provenance record per pixel (u8 scale, u16 frame, u32 y,
u32 x; 11 bytes). Files are written to a temp name and renamed into
place, so a failed write never leaves a partial file.
"""

from __future__ import annotations

import colorsys
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CorruptFile, DimMismatch, MissingProvenance, UnsupportedFormat
from .media import PROVENANCE_DTYPE, FrameBuffer, ProvenanceEntry
from .pyramid import PyramidLevel

MAGIC = b"SAMA"
VERSION = 1

KIND_CODES = {"image": 1, "video": 2}
SPATIAL_CODES = {"none": 0, "window": 1, "patch": 2}
TEMPORAL_CODES = {"none": 0, "progressive": 1, "choppy": 2, "mixed": 3}

_KIND_NAMES = {v: k for k, v in KIND_CODES.items()}
_SPATIAL_NAMES = {v: k for k, v in SPATIAL_CODES.items()}
_TEMPORAL_NAMES = {v: k for k, v in TEMPORAL_CODES.items()}

_FIXED_HEADER = struct.Struct("<4sHBIIIBBBQH")

assert PROVENANCE_DTYPE.itemsize == 11


@dataclass
class SampledTensor:
    """Final packed output plus per-pixel provenance.

    ``data`` is always (T, H, W, 3) uint8 with T == 1 for images;
    ``provenance`` (when present) is a (T, H, W) structured array of
    PROVENANCE_DTYPE. ``grid`` records the sampling grid for previews and
    is not serialized.
    """

    kind: str
    data: np.ndarray
    n_scales: int = 1
    spatial_mask: str = "none"
    temporal_mask: str = "none"
    seed: int = 0
    schedule: tuple[int, ...] = field(default_factory=tuple)
    provenance: np.ndarray | None = None
    grid: tuple[int, int] | None = None

    def __post_init__(self):
        if self.kind not in KIND_CODES:
            raise ValueError(f"kind must be image|video, got {self.kind!r}")
        d = self.data
        if d.ndim != 4 or d.shape[3] != 3 or d.dtype != np.uint8:
            raise ValueError("data must be (T, H, W, 3) uint8")
        if self.kind == "image" and d.shape[0] != 1:
            raise ValueError("image tensors carry exactly one frame")
        if self.provenance is not None:
            if self.provenance.dtype != PROVENANCE_DTYPE:
                raise ValueError("provenance has the wrong dtype")
            if self.provenance.shape != d.shape[:3]:
                raise DimMismatch("provenance shape must match data frames")

    @property
    def frames_out(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def scale_shares(self) -> dict[int, float]:
        """Fraction of output pixels each pyramid level contributed."""
        if self.provenance is None:
            raise MissingProvenance("tensor carries no provenance")
        scales, counts = np.unique(self.provenance["scale"], return_counts=True)
        total = self.provenance.size
        return {int(s): int(c) / total for s, c in zip(scales, counts)}

    def provenance_at(self, frame: int, y: int, x: int) -> ProvenanceEntry:
        """Where output pixel (frame, y, x) was copied from."""
        if self.provenance is None:
            raise MissingProvenance("tensor carries no provenance")
        rec = self.provenance[frame, y, x]
        return ProvenanceEntry(
            scale_id=int(rec["scale"]),
            src_frame=int(rec["frame"]),
            src_y=int(rec["y"]),
            src_x=int(rec["x"]),
        )


def container_bytes(t: SampledTensor) -> bytes:
    """Serialize; byte-deterministic for a given tensor."""
    schedule = bytes(int(s) for s in t.schedule)
    if len(schedule) > 0xFFFF:
        raise ValueError("schedule too long for container header")
    flags = 1 if t.provenance is not None else 0
    head = _FIXED_HEADER.pack(
        MAGIC,
        VERSION,
        KIND_CODES[t.kind],
        t.height,
        t.width,
        t.frames_out,
        t.n_scales,
        SPATIAL_CODES[t.spatial_mask],
        TEMPORAL_CODES[t.temporal_mask],
        t.seed,
        len(schedule),
    )
    parts = [head, schedule, bytes([flags]), np.ascontiguousarray(t.data).tobytes()]
    if t.provenance is not None:
        parts.append(np.ascontiguousarray(t.provenance).tobytes())
    return b"".join(parts)


def write_container(t: SampledTensor, path: str | Path) -> None:
    """Write atomically: temp file in the target directory, then rename."""
    path = Path(path)
    payload = container_bytes(t)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def parse_container(data: bytes) -> SampledTensor:
    if len(data) < _FIXED_HEADER.size:
        raise CorruptFile("container shorter than its fixed header")
    (
        magic,
        version,
        kind_code,
        height,
        width,
        frames,
        n_scales,
        spatial_code,
        temporal_code,
        seed,
        sched_len,
    ) = _FIXED_HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise UnsupportedFormat("bad container magic")
    if version != VERSION:
        raise UnsupportedFormat(f"container version {version} not supported")
    if height < 1 or width < 1 or frames < 1:
        raise CorruptFile("non-positive container dimensions")
    try:
        kind = _KIND_NAMES[kind_code]
        spatial = _SPATIAL_NAMES[spatial_code]
        temporal = _TEMPORAL_NAMES[temporal_code]
    except KeyError as exc:
        raise CorruptFile(f"unknown enum code in header: {exc}") from exc
    pos = _FIXED_HEADER.size
    if pos + sched_len + 1 > len(data):
        raise CorruptFile("truncated container header")
    schedule = tuple(data[pos : pos + sched_len])
    pos += sched_len
    flags = data[pos]
    pos += 1
    n_pixels = frames * height * width
    need = n_pixels * 3
    if pos + need > len(data):
        raise CorruptFile("truncated container payload")
    pixels = (
        np.frombuffer(data, dtype=np.uint8, count=need, offset=pos)
        .reshape(frames, height, width, 3)
        .copy()
    )
    pos += need
    provenance = None
    if flags & 1:
        pneed = n_pixels * PROVENANCE_DTYPE.itemsize
        if pos + pneed > len(data):
            raise CorruptFile("truncated provenance section")
        provenance = (
            np.frombuffer(data, dtype=PROVENANCE_DTYPE, count=n_pixels, offset=pos)
            .reshape(frames, height, width)
            .copy()
        )
        pos += pneed
    if pos != len(data):
        raise CorruptFile(f"{len(data) - pos} trailing bytes after payload")
    return SampledTensor(
        kind=kind,
        data=pixels,
        n_scales=n_scales,
        spatial_mask=spatial,
        temporal_mask=temporal,
        seed=seed,
        schedule=schedule,
        provenance=provenance,
    )


def read_container(path: str | Path) -> SampledTensor:
    return parse_container(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# Previews


def scale_palette(n_scales: int) -> np.ndarray:
    """(n_scales, 3) uint8 of well-separated hues."""
    n = max(n_scales, 1)
    cols = [colorsys.hsv_to_rgb(s / n, 1.0, 1.0) for s in range(n)]
    return (np.asarray(cols) * 255).round().astype(np.uint8)


def render_preview(
    t: SampledTensor,
    style: str = "plain",
    grid_rows: int | None = None,
    grid_cols: int | None = None,
) -> list[FrameBuffer]:
    """Human-inspectable frames: plain copy, per-scale tint, or cell borders."""
    if style == "plain":
        return [FrameBuffer(t.data[f].copy()) for f in range(t.frames_out)]
    if t.provenance is None:
        raise MissingProvenance(f"style {style!r} needs provenance")
    palette = scale_palette(t.n_scales)
    if style == "tinted":
        tint = palette[t.provenance["scale"]]
        # 25% overlay in exact integer arithmetic, round half up
        mixed = (3 * t.data.astype(np.uint16) + tint.astype(np.uint16) + 2) // 4
        out = mixed.astype(np.uint8)
        return [FrameBuffer(out[f]) for f in range(t.frames_out)]
    if style == "bordered":
        if grid_rows is None or grid_cols is None:
            if t.grid is None:
                raise ValueError("bordered preview needs the sampling grid dims")
            grid_rows, grid_cols = t.grid
        if t.height % grid_rows or t.width % grid_cols:
            raise DimMismatch("grid does not tile the output dims")
        ch = t.height // grid_rows
        cw = t.width // grid_cols
        frames = []
        for f in range(t.frames_out):
            img = t.data[f].copy()
            for r in range(grid_rows):
                for c in range(grid_cols):
                    y, x = r * ch, c * cw
                    color = palette[int(t.provenance[f, y, x]["scale"]) % len(palette)]
                    img[y, x : x + cw] = color
                    img[y + ch - 1, x : x + cw] = color
                    img[y : y + ch, x] = color
                    img[y : y + ch, x + cw - 1] = color
            frames.append(FrameBuffer(img))
        return frames
    raise ValueError(f"unknown preview style {style!r}")


# ---------------------------------------------------------------------------
# Provenance audit


@dataclass
class AuditReport:
    """Outcome of re-fetching every output pixel from the pyramid."""

    total_pixels: int
    mismatches: int
    per_scale_pixels: dict[int, int]
    per_scale_shares: dict[int, float]

    @property
    def ok(self) -> bool:
        return self.mismatches == 0


def provenance_audit(t: SampledTensor, pyramid: list[PyramidLevel]) -> AuditReport:
    """Compare every output pixel against its recorded pyramid source.

    Out-of-range scale ids, frame indices, or coordinates count as
    mismatches rather than raising, so a corrupted tensor still yields a
    report.
    """
    if t.provenance is None:
        raise MissingProvenance("tensor carries no provenance to audit")
    prov = t.provenance.reshape(-1)
    data = t.data.reshape(-1, 3)
    total = prov.size
    mismatches = 0
    per_scale: dict[int, int] = {}
    scales, counts = np.unique(prov["scale"], return_counts=True)
    for s, count in zip(scales, counts):
        per_scale[int(s)] = int(count)
        idx_s = np.nonzero(prov["scale"] == s)[0]
        if s >= len(pyramid):
            mismatches += int(count)
            continue
        level = pyramid[int(s)]
        for fr in np.unique(prov["frame"][idx_s]):
            idx = idx_s[prov["frame"][idx_s] == fr]
            if fr >= level.frame_count:
                mismatches += idx.size
                continue
            src = level.frame(int(fr))
            y = prov["y"][idx].astype(np.int64)
            x = prov["x"][idx].astype(np.int64)
            valid = (y < level.height) & (x < level.width)
            mismatches += int((~valid).sum())
            vi = idx[valid]
            got = src[y[valid], x[valid]]
            mismatches += int(np.any(got != data[vi], axis=1).sum())
    shares = {s: c / total for s, c in per_scale.items()}
    return AuditReport(
        total_pixels=total,
        mismatches=mismatches,
        per_scale_pixels=per_scale,
        per_scale_shares=shares,
    )
