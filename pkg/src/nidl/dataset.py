"""Labelled ROI datasets, leave-one-subject-out splits, and their on-disk layout.

A dataset directory holds one subdirectory per subject::

    <subject>/dataset.json   provenance manifest (schema below)
    <subject>/roi.rpc        raw-planar clip of ROI crops (the network input)
    <subject>/labels.csv     frame_index,t_seconds,temp_c
    <subject>/roi_raw.rpc    optional: ROI crops of the unmagnified clip

``dataset.json``::

    {"schema": "nidl-dataset/1", "subject_id": str, "frame_count": int,
     "fps": float, "roi": {"x": int, "y": int, "side": int},
     "interpolation": "linear-clamped", "source_clip": str | null,
     "source_log": str | null, "evm": {EvmConfig fields} | null,
     "has_raw": bool}
"""

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataValidationError, FormatError
from .media import VideoClip, read_clip, write_clip

TEMP_MIN_C = 20.0
TEMP_MAX_C = 45.0
DATASET_SCHEMA = "nidl-dataset/1"
LABEL_HEADER = ["frame_index", "t_seconds", "temp_c"]


@dataclass(frozen=True)
class RoiSpec:
    x: int
    y: int
    side: int = 150

    def __post_init__(self):
        if self.side <= 0:
            raise DataValidationError("ROI side must be positive")
        if self.x < 0 or self.y < 0:
            raise DataValidationError("ROI offset must be non-negative")

    def check_bounds(self, height, width):
        if self.x + self.side > width or self.y + self.side > height:
            raise DataValidationError(
                f"ROI ({self.x},{self.y},{self.side}) exceeds frame {width}x{height}"
            )

    @classmethod
    def centered(cls, height, width, side=150):
        if side > min(height, width):
            raise DataValidationError(f"ROI side {side} exceeds frame {width}x{height}")
        return cls((width - side) // 2, (height - side) // 2, side)

    @classmethod
    def parse(cls, text):
        """Parse ``"x,y,side"``."""
        try:
            x, y, side = (int(v) for v in text.split(","))
        except ValueError:
            raise DataValidationError(f"ROI must be 'x,y,side', got {text!r}") from None
        return cls(x, y, side)


@dataclass(frozen=True)
class LabeledSample:
    image: np.ndarray
    temp_c: float
    subject_id: str
    frame_index: int


@dataclass(eq=False)
class SubjectDataset:
    """One subject's frames in order, each paired with its temperature label.

    ``images`` is ``(N, side, side, 3)``; ``raw_images`` optionally holds the
    same crops taken before magnification.
    """

    subject_id: str
    images: np.ndarray
    temps: np.ndarray
    frame_index: np.ndarray
    fps: float
    provenance: dict = field(default_factory=dict)
    raw_images: np.ndarray = None

    def __post_init__(self):
        self.temps = np.asarray(self.temps, dtype=np.float64)
        self.frame_index = np.asarray(self.frame_index, dtype=np.int64)
        n = len(self.temps)
        if self.images.shape[0] != n or self.frame_index.shape != (n,):
            raise DataValidationError("images, temps and frame_index must have equal length")
        if n and np.any(np.diff(self.frame_index) <= 0):
            raise DataValidationError("samples must be ordered by frame_index")
        if n and not (np.all(np.isfinite(self.temps))
                      and self.temps.min() >= TEMP_MIN_C and self.temps.max() <= TEMP_MAX_C):
            raise DataValidationError(
                f"labels must be finite and within [{TEMP_MIN_C}, {TEMP_MAX_C}] C"
            )
        if self.raw_images is not None and self.raw_images.shape != self.images.shape:
            raise DataValidationError("raw_images must match images in shape")

    def __len__(self):
        return len(self.temps)

    @property
    def side(self):
        return self.images.shape[1]

    @property
    def times(self):
        return self.frame_index / self.fps

    @property
    def samples(self):
        for img, t, i in zip(self.images, self.temps, self.frame_index):
            yield LabeledSample(img, float(t), self.subject_id, int(i))

    def head(self, n):
        raw = None if self.raw_images is None else self.raw_images[:n]
        return SubjectDataset(self.subject_id, self.images[:n], self.temps[:n],
                              self.frame_index[:n], self.fps, dict(self.provenance), raw)


@dataclass(frozen=True)
class SplitPlan:
    test_subject: str
    train_subjects: tuple


def extract_roi(clip, spec):
    """Pixel-exact ``side x side`` crop of every frame: ``(T, side, side, 3)``."""
    spec.check_bounds(clip.height, clip.width)
    return np.array(clip.frames[:, spec.y:spec.y + spec.side, spec.x:spec.x + spec.side, :])


def interpolate_temperature(series, frame_count, fps):
    """Linear interpolation of the sensor log at each frame time ``i / fps``.

    Frames before the first or after the last sample take the nearest sample.
    """
    if len(series) == 0:
        raise DataValidationError("empty temperature series")
    if fps <= 0:
        raise DataValidationError("fps must be positive")
    t = np.arange(frame_count) / fps
    return np.interp(t, series.timestamps, series.values)


def make_dataset(clip, series, spec, evm_config=None, raw_clip=None,
                 source_clip=None, source_log=None):
    images = extract_roi(clip, spec)
    temps = interpolate_temperature(series, len(clip), clip.fps)
    raw = None
    if raw_clip is not None:
        if raw_clip.frames.shape != clip.frames.shape:
            raise DataValidationError("raw clip must match the magnified clip in shape")
        raw = extract_roi(raw_clip, spec)
    provenance = {
        "schema": DATASET_SCHEMA,
        "subject_id": clip.subject_id,
        "frame_count": len(clip),
        "fps": clip.fps,
        "roi": asdict(spec),
        "interpolation": "linear-clamped",
        "source_clip": None if source_clip is None else str(source_clip),
        "source_log": None if source_log is None else str(source_log),
        "evm": None if evm_config is None else asdict(evm_config),
        "has_raw": raw is not None,
    }
    return SubjectDataset(clip.subject_id, images, temps, np.arange(len(clip)),
                          clip.fps, provenance, raw)


def plan_splits(subject_ids):
    """One leave-one-subject-out plan per subject, in the given order."""
    ids = list(subject_ids)
    if len(ids) < 2:
        raise DataValidationError("cross-validation needs at least 2 subjects")
    if len(set(ids)) != len(ids):
        raise DataValidationError("subject ids must be unique")
    return [SplitPlan(s, tuple(o for o in ids if o != s)) for s in ids]


# persistence ---------------------------------------------------------------------------


def save_dataset(ds, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_clip(VideoClip(ds.images, ds.fps, ds.subject_id), directory / "roi.rpc")
    if ds.raw_images is not None:
        write_clip(VideoClip(ds.raw_images, ds.fps, ds.subject_id), directory / "roi_raw.rpc")
    with open(directory / "labels.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LABEL_HEADER)
        for i, t in zip(ds.frame_index, ds.temps):
            w.writerow([int(i), repr(float(i / ds.fps)), repr(float(t))])
    manifest = dict(ds.provenance)
    manifest.update(schema=DATASET_SCHEMA, subject_id=ds.subject_id, frame_count=len(ds),
                    fps=ds.fps, has_raw=ds.raw_images is not None)
    (directory / "dataset.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _read_labels(path):
    idx, temps = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != LABEL_HEADER:
            raise FormatError(f"{path}: expected header {','.join(LABEL_HEADER)}", offset=1)
        for row in reader:
            try:
                idx.append(int(row[0]))
                temps.append(float(row[2]))
            except (ValueError, IndexError):
                raise FormatError(f"{path}: bad label row {row}", offset=reader.line_num) from None
    return np.array(idx, dtype=np.int64), np.array(temps)


def load_dataset(directory):
    directory = Path(directory)
    manifest = json.loads((directory / "dataset.json").read_text())
    if manifest.get("schema") != DATASET_SCHEMA:
        raise FormatError(f"{directory}: unsupported dataset schema {manifest.get('schema')!r}")
    sid = manifest["subject_id"]
    images = read_clip(directory / "roi.rpc", subject_id=sid).frames
    raw = None
    if manifest.get("has_raw"):
        raw = read_clip(directory / "roi_raw.rpc", subject_id=sid).frames
    idx, temps = _read_labels(directory / "labels.csv")
    if len(idx) != images.shape[0]:
        raise DataValidationError(f"{directory}: {len(idx)} labels for {images.shape[0]} frames")
    return SubjectDataset(sid, np.array(images), temps, idx, float(manifest["fps"]), manifest,
                          None if raw is None else np.array(raw))


def load_datasets(root):
    """Load every subject directory (one containing ``dataset.json``) under ``root``."""
    dirs = sorted(p.parent for p in Path(root).glob("*/dataset.json"))
    if not dirs:
        raise DataValidationError(f"no subject datasets under {root}")
    return [load_dataset(d) for d in dirs]
