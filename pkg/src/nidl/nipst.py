"""Partly-personalised saturation-temperature baseline: ``T = 96.5 * S + b``.

``S`` is the mean HSV saturation of the ROI and ``b`` is fitted per subject
with the slope frozen.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DataValidationError

SLOPE = 96.5


@dataclass(frozen=True)
class NipstModel:
    intercept_b: float
    slope: float = SLOPE

    def __post_init__(self):
        if not np.isfinite(self.intercept_b):
            raise DataValidationError("intercept must be finite")


@dataclass(frozen=True)
class NipstConfig:
    fit_frames: int = 50
    mode: str = "magnified"

    def __post_init__(self):
        if self.fit_frames < 1:
            raise DataValidationError("fit_frames must be >= 1")
        if self.mode not in ("raw", "magnified"):
            raise DataValidationError(f"mode must be 'raw' or 'magnified', got {self.mode!r}")


def saturation(images):
    """Per-pixel HSV saturation ``(max - min) / max``, 0 where max is 0."""
    images = np.asarray(images, dtype=np.float64)
    hi = images.max(axis=-1)
    lo = images.min(axis=-1)
    out = np.zeros_like(hi)
    np.divide(hi - lo, hi, out=out, where=hi > 0)
    return out


def mean_saturation(images):
    """Mean saturation of one ``(H, W, 3)`` image, or one value per image of a stack."""
    return saturation(images).mean(axis=(-2, -1))


def fit_intercept(saturations, temps, slope=SLOPE):
    """Least-squares intercept with the slope held fixed: ``mean(T) - slope * mean(S)``."""
    s = np.asarray(saturations, dtype=np.float64)
    t = np.asarray(temps, dtype=np.float64)
    if s.size == 0:
        raise DataValidationError("cannot fit an intercept to zero samples")
    if s.shape != t.shape:
        raise DataValidationError("saturation and temperature lists differ in length")
    return float(t.mean() - slope * s.mean())


def predict_nipst(model, images=None, saturations=None):
    if saturations is None:
        saturations = mean_saturation(images)
    return model.slope * np.asarray(saturations, dtype=np.float64) + model.intercept_b


def evaluate_subject(dataset, config=NipstConfig()):
    """Refit the intercept on the subject's first ``fit_frames`` samples; predict all samples."""
    images = dataset.images
    if config.mode == "raw":
        if dataset.raw_images is None:
            raise DataValidationError(f"subject {dataset.subject_id} has no raw ROI frames")
        images = dataset.raw_images
    s = mean_saturation(images)
    k = min(config.fit_frames, len(dataset))
    model = NipstModel(fit_intercept(s[:k], dataset.temps[:k]))
    return model, predict_nipst(model, saturations=s)
