"""Raster types and the on-disk formats for clips and temperature logs.

Frames are ``(height, width, 3)`` float arrays with intensities in ``[0, 1]``;
a clip stacks them into ``(frames, height, width, 3)``. Files store 8-bit
samples, so ``read_clip`` yields multiples of 1/255.

Raw-planar container (all integers little-endian)::

    offset  size  field
    0       4     magic  b"RPLN"
    4       2     version (1)
    6       2     channels (3)
    8       4     width
    12      4     height
    16      4     fps numerator
    20      4     fps denominator
    24      4     frame count
    28      4     reserved (0)
    32      ...   frames, each stored channel-planar: R plane, G plane, B plane,
                  every plane row-major uint8

Frame directory: one binary PPM (P6, maxval 255) per frame, named with a
zero-padded frame number (``000000.ppm``, ``000001.ppm``, ...).
"""

import csv
import os
import re
import struct
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import DataValidationError, FormatError

MAGIC = b"RPLN"
VERSION = 1
HEADER = struct.Struct("<4sHHIIIIII")
HEADER_SIZE = HEADER.size  # 32

RAW_PLANAR = "raw-planar"
FRAME_DIRECTORY = "frame-directory"


def validate_frames(frames):
    """Check the Frame invariants on a ``(T, H, W, 3)`` array."""
    if frames.ndim != 4 or frames.shape[-1] != 3:
        raise DataValidationError(f"expected frames shaped (T, H, W, 3), got {frames.shape}")
    if frames.size and not np.all(np.isfinite(frames)):
        raise DataValidationError("frame intensities must be finite")
    if frames.size and (frames.min() < 0.0 or frames.max() > 1.0):
        raise DataValidationError("frame intensities must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class VideoClip:
    frames: np.ndarray
    fps: float
    subject_id: str = ""

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        validate_frames(frames)
        if not self.fps > 0:
            raise DataValidationError(f"fps must be positive, got {self.fps}")
        frames = frames.view()
        frames.flags.writeable = False
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "fps", float(self.fps))

    def __len__(self):
        return self.frames.shape[0]

    def __getitem__(self, i):
        return self.frames[i]

    @property
    def height(self):
        return self.frames.shape[1]

    @property
    def width(self):
        return self.frames.shape[2]

    @property
    def times(self):
        return np.arange(len(self)) / self.fps

    def with_frames(self, frames):
        return VideoClip(frames, self.fps, self.subject_id)

    def __eq__(self, other):
        if not isinstance(other, VideoClip):
            return NotImplemented
        return (
            self.fps == other.fps
            and self.subject_id == other.subject_id
            and self.frames.shape == other.frames.shape
            and np.array_equal(self.frames, other.frames)
        )


@dataclass(frozen=True, eq=False)
class TemperatureSeries:
    timestamps: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.timestamps, dtype=np.float64)
        v = np.asarray(self.values, dtype=np.float64)
        if t.ndim != 1 or t.shape != v.shape:
            raise DataValidationError("timestamps and values must be 1-D with equal length")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise DataValidationError("temperature series must be finite")
        bad = np.flatnonzero(np.diff(t) <= 0)
        if bad.size:
            raise DataValidationError(f"timestamps not strictly increasing at sample {bad[0] + 1}")
        t, v = t.view(), v.view()
        t.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.timestamps.shape[0]

    def __eq__(self, other):
        if not isinstance(other, TemperatureSeries):
            return NotImplemented
        return np.array_equal(self.timestamps, other.timestamps) and np.array_equal(
            self.values, other.values
        )


def to_uint8(frames):
    return np.rint(np.asarray(frames) * 255.0).astype(np.uint8)


def from_uint8(data):
    return data.astype(np.float64) / 255.0


def _fps_fraction(fps):
    frac = Fraction(fps).limit_denominator(1_000_000)
    if frac.numerator > 0xFFFFFFFF or frac.denominator > 0xFFFFFFFF:
        raise DataValidationError(f"fps {fps} not representable in the container")
    return frac


# raw-planar ----------------------------------------------------------------


def encode_raw_planar(clip):
    if len(clip) == 0:
        raise DataValidationError("empty clip")
    frac = _fps_fraction(clip.fps)
    header = HEADER.pack(
        MAGIC, VERSION, 3, clip.width, clip.height,
        frac.numerator, frac.denominator, len(clip), 0,
    )
    # (T, H, W, C) -> (T, C, H, W): channel-planar per frame
    payload = np.ascontiguousarray(to_uint8(clip.frames).transpose(0, 3, 1, 2))
    return header + payload.tobytes()


def decode_raw_planar(blob, subject_id=""):
    if len(blob) < HEADER_SIZE:
        raise FormatError(f"header truncated: {len(blob)} of {HEADER_SIZE} bytes", offset=len(blob))
    magic, version, channels, width, height, num, den, count, _ = HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset=0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    if channels != 3:
        raise FormatError(f"expected 3 channels, header says {channels}", offset=6)
    if width == 0 or height == 0:
        raise FormatError(f"zero frame dimension {width}x{height}", offset=8)
    if num == 0 or den == 0:
        raise FormatError(f"invalid fps {num}/{den}", offset=16)
    if count == 0:
        raise FormatError("frame count is zero", offset=24)
    frame_bytes = width * height * channels
    expected = HEADER_SIZE + frame_bytes * count
    if len(blob) < expected:
        complete = (len(blob) - HEADER_SIZE) // frame_bytes
        raise FormatError(
            f"truncated payload: frame {complete} incomplete, expected {expected} bytes, got {len(blob)}",
            offset=len(blob),
        )
    if len(blob) > expected:
        raise FormatError(f"{len(blob) - expected} trailing bytes after last frame", offset=expected)
    data = np.frombuffer(blob, dtype=np.uint8, count=frame_bytes * count, offset=HEADER_SIZE)
    frames = from_uint8(data.reshape(count, channels, height, width).transpose(0, 2, 3, 1))
    return VideoClip(frames, float(Fraction(num, den)), subject_id)


# frame directory -------------------------------------------------------------

_PPM_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def encode_ppm(frame):
    h, w, _ = frame.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + to_uint8(frame).tobytes()


def decode_ppm(blob, name="<ppm>"):
    pos = 0
    tokens = []
    for _ in range(4):
        m = _PPM_TOKEN.match(blob, pos)
        if not m:
            raise FormatError(f"{name}: malformed PPM header", offset=pos)
        tokens.append(m.group(1))
        pos = m.end()
    if tokens[0] != b"P6":
        raise FormatError(f"{name}: not a binary PPM (magic {tokens[0]!r})", offset=0)
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FormatError(f"{name}: non-integer PPM header field", offset=pos) from None
    if maxval != 255:
        raise FormatError(f"{name}: only maxval 255 supported, got {maxval}", offset=pos)
    pos += 1  # single whitespace byte after maxval
    need = w * h * 3
    if len(blob) - pos < need:
        raise FormatError(f"{name}: truncated pixel data", offset=len(blob))
    data = np.frombuffer(blob, dtype=np.uint8, count=need, offset=pos)
    return from_uint8(data.reshape(h, w, 3))


def _frame_files(path):
    files = [p for p in Path(path).iterdir() if p.suffix.lower() == ".ppm" and p.stem.isdigit()]
    return sorted(files, key=lambda p: int(p.stem))


def read_frame_directory(path, fps=30.0, subject_id=""):
    files = _frame_files(path)
    if not files:
        raise FormatError(f"no numbered .ppm frames in {path}")
    frames = []
    for i, f in enumerate(files):
        frame = decode_ppm(f.read_bytes(), name=f.name)
        if frames and frame.shape != frames[0].shape:
            raise FormatError(
                f"dimension mismatch at frame index {i}: {frame.shape[1]}x{frame.shape[0]} "
                f"vs {frames[0].shape[1]}x{frames[0].shape[0]}",
                offset=0,
            )
        frames.append(frame)
    return VideoClip(np.stack(frames), fps, subject_id)


def write_frame_directory(clip, path):
    if len(clip) == 0:
        raise DataValidationError("empty clip")
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    digits = max(6, len(str(len(clip) - 1)))
    for i, frame in enumerate(clip.frames):
        (path / f"{i:0{digits}d}.ppm").write_bytes(encode_ppm(frame))


# public entry points -------------------------------------------------------------


def read_clip(path, format=None, fps=30.0, subject_id=""):
    """Decode a clip. ``format`` defaults by path type: directory -> frame-directory.

    ``fps`` is only consulted for frame directories, which carry no timing.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    if format is None:
        format = FRAME_DIRECTORY if path.is_dir() else RAW_PLANAR
    if format == RAW_PLANAR:
        return decode_raw_planar(path.read_bytes(), subject_id)
    if format == FRAME_DIRECTORY:
        return read_frame_directory(path, fps=fps, subject_id=subject_id)
    raise ValueError(f"unknown clip format {format!r}")


def write_clip(clip, path, format=RAW_PLANAR):
    if format == RAW_PLANAR:
        blob = encode_raw_planar(clip)
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        tmp = f"{path}.tmp"
        with open(tmp, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    elif format == FRAME_DIRECTORY:
        write_frame_directory(clip, path)
    else:
        raise ValueError(f"unknown clip format {format!r}")


# temperature logs -------------------------------------------------------------

TEMPERATURE_HEADER = ["t_seconds", "temp_c"]


def read_temperature_log(path):
    """Parse a ``t_seconds,temp_c`` CSV. Line numbers in errors are 1-based."""
    timestamps, values = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != TEMPERATURE_HEADER:
            raise FormatError(f"expected header {','.join(TEMPERATURE_HEADER)}, got {header}", offset=1)
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise FormatError(f"line {line}: expected 2 fields, got {len(row)}", offset=line)
            try:
                t, v = float(row[0]), float(row[1])
            except ValueError:
                raise FormatError(f"line {line}: unparseable row {row}", offset=line) from None
            if not (np.isfinite(t) and np.isfinite(v)):
                raise FormatError(f"line {line}: non-finite value", offset=line)
            if timestamps and t <= timestamps[-1]:
                raise FormatError(f"line {line}: timestamps not strictly increasing", offset=line)
            timestamps.append(t)
            values.append(v)
    return TemperatureSeries(np.array(timestamps), np.array(values))


def write_temperature_log(series, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TEMPERATURE_HEADER)
        for t, v in zip(series.timestamps, series.values):
            writer.writerow([repr(float(t)), repr(float(v))])
