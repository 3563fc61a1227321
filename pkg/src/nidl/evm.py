"""Eulerian video magnification.

Each frame is split into a Laplacian pyramid, every pixel's coefficient
sequence is bandpassed in time, and the band is added back scaled by
``beta`` so in-band variation grows by ``1 + beta``. The DC path is never
filtered, so slowly drifting content (the temperature-coupled skin colour)
passes through untouched.

All arrays are ``(..., H, W, C)``; leading axes (time) ride along, which lets
one call decompose a whole clip.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage, signal

from .errors import ConfigError, DataValidationError

# 5-tap binomial kernel used for REDUCE/EXPAND
BINOMIAL = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0

IDEAL = "ideal-fft"
IIR = "iir-butterworth-order1-pair"
FILTER_ALIASES = {"ideal": IDEAL, IDEAL: IDEAL, "iir": IIR, IIR: IIR}

# NTSC YIQ, used only when chroma is attenuated
RGB_TO_YIQ = np.array(
    [
        [0.299, 0.587, 0.114],
        [0.595716, -0.274453, -0.321263],
        [0.211456, -0.522591, 0.311135],
    ]
)
YIQ_TO_RGB = np.linalg.inv(RGB_TO_YIQ)


@dataclass(frozen=True)
class EvmConfig:
    beta: float = 10.0
    pyramid_levels: int = 4
    low_hz: float = 0.05
    high_hz: float = 0.4
    filter_kind: str = IDEAL
    chroma_attenuation: float = 1.0
    mode: str = "color"
    temporal_padding: str = "mirror"

    def __post_init__(self):
        kind = FILTER_ALIASES.get(self.filter_kind)
        if kind is None:
            raise ConfigError(f"unknown filter kind {self.filter_kind!r}")
        object.__setattr__(self, "filter_kind", kind)
        if self.beta < 0:
            raise ConfigError("beta must be >= 0")
        if self.pyramid_levels < 1:
            raise ConfigError("pyramid_levels must be >= 1")
        if not 0 <= self.low_hz < self.high_hz:
            raise ConfigError(f"need 0 <= low_hz < high_hz, got [{self.low_hz}, {self.high_hz}]")
        if not 0.0 <= self.chroma_attenuation <= 1.0:
            raise ConfigError("chroma_attenuation must lie in [0, 1]")
        if self.temporal_padding not in ("none", "mirror"):
            raise ConfigError(f"temporal_padding must be 'none' or 'mirror', got {self.temporal_padding!r}")
        if self.mode not in ("color", "motion"):
            raise ConfigError(f"mode must be 'color' or 'motion', got {self.mode!r}")

    def check_clip(self, fps, n_frames, height, width):
        check_passband(fps, self.low_hz, self.high_hz)
        check_levels(height, width, self.pyramid_levels)
        if n_frames < 2:
            raise DataValidationError("magnification needs at least 2 frames")


def check_passband(fps, low_hz, high_hz):
    nyquist = fps / 2.0
    if not 0 <= low_hz < high_hz < nyquist:
        raise ConfigError(
            f"passband [{low_hz}, {high_hz}] Hz must satisfy 0 <= low < high < Nyquist ({nyquist} Hz)"
        )


def check_levels(height, width, levels):
    need = 2 ** (levels - 1)
    if levels < 1 or height < need or width < need:
        raise ConfigError(f"{levels} pyramid levels need frames of at least {need}x{need}, got {width}x{height}")


# spatial pyramid --------------------------------------------------------------


def _blur(x, kernel=BINOMIAL):
    x = ndimage.correlate1d(x, kernel, axis=-3, mode="reflect")
    return ndimage.correlate1d(x, kernel, axis=-2, mode="reflect")


def reduce(x):
    """Blur then keep every other row/column: (H, W) -> (ceil(H/2), ceil(W/2))."""
    return _blur(x)[..., ::2, ::2, :]


def expand(x, shape):
    """Zero-insert ``x`` up to spatial ``shape`` and interpolate with 4x the kernel."""
    h, w = shape
    up = np.zeros(x.shape[:-3] + (h, w, x.shape[-1]), dtype=np.float64)
    up[..., ::2, ::2, :] = x
    return _blur(up, 2.0 * BINOMIAL)


def gaussian_pyramid(x, levels):
    pyr = [np.asarray(x, dtype=np.float64)]
    for _ in range(levels - 1):
        pyr.append(reduce(pyr[-1]))
    return pyr


def laplacian_pyramid(x, levels):
    gauss = gaussian_pyramid(x, levels)
    bands = [g - expand(g_next, g.shape[-3:-1]) for g, g_next in zip(gauss[:-1], gauss[1:])]
    bands.append(gauss[-1])
    return bands


def build_pyramid(frame, levels, kind="laplacian"):
    """Decompose one frame (or a stack of frames) into ``levels`` rasters.

    Level ``L`` has spatial size ``ceil(size(L-1) / 2)``. The laplacian kind
    stores band-pass residuals plus the coarsest Gaussian level and collapses
    back exactly.
    """
    frame = np.asarray(frame, dtype=np.float64)
    check_levels(frame.shape[-3], frame.shape[-2], levels)
    if kind == "gaussian":
        return gaussian_pyramid(frame, levels)
    if kind == "laplacian":
        return laplacian_pyramid(frame, levels)
    raise ValueError(f"unknown pyramid kind {kind!r}")


def collapse_pyramid(bands):
    out = bands[-1]
    for band in reversed(bands[:-1]):
        out = band + expand(out, band.shape[-3:-1])
    return out


# temporal filtering -----------------------------------------------------------------


def _lowpass_coefficient(cutoff_hz, fps):
    return 1.0 - np.exp(-2.0 * np.pi * cutoff_hz / fps)


def _first_order_lowpass(x, alpha, axis):
    # y[t] = y[t-1] + alpha * (x[t] - y[t-1]), primed so y[0] = x[0]
    b, a = [alpha], [1.0, alpha - 1.0]
    x0 = np.take(x, [0], axis=axis)
    zi = (1.0 - alpha) * x0
    y, _ = signal.lfilter(b, a, x, axis=axis, zi=zi)
    return y


def temporal_bandpass(series, fps, low_hz, high_hz, kind=IDEAL, axis=0, padding="none"):
    """Bandpass every sequence along ``axis``.

    ``ideal-fft`` zeroes each DFT bin outside ``[low_hz, high_hz]``; ``iir`` is
    the causal difference of two first-order lowpasses cut at ``high_hz`` and
    ``low_hz``.

    The DFT treats the sequence as periodic, so a drift between the first and
    last sample leaks into the band as ringing at both ends. ``padding="mirror"``
    filters the sequence followed by its time reversal instead, which removes
    that jump; only the ideal filter uses it.
    """
    kind = FILTER_ALIASES.get(kind, kind)
    check_passband(fps, low_hz, high_hz)
    x = np.asarray(series, dtype=np.float64)
    n = x.shape[axis]
    if kind == IDEAL and padding == "mirror" and n > 1:
        ext = np.concatenate([x, np.flip(x, axis=axis)], axis=axis)
        out = temporal_bandpass(ext, fps, low_hz, high_hz, IDEAL, axis=axis)
        return np.take(out, np.arange(n), axis=axis)
    if kind == IDEAL:
        spectrum = np.fft.rfft(x, axis=axis)
        freqs = np.fft.rfftfreq(n, d=1.0 / fps)
        keep = (freqs >= low_hz) & (freqs <= high_hz)
        shape = [1] * x.ndim
        shape[axis] = keep.size
        spectrum *= keep.reshape(shape)
        return np.fft.irfft(spectrum, n=n, axis=axis)
    if kind == IIR:
        if n < 2:
            raise DataValidationError("iir bandpass needs at least 2 samples")
        high = _first_order_lowpass(x, _lowpass_coefficient(high_hz, fps), axis)
        low = _first_order_lowpass(x, _lowpass_coefficient(low_hz, fps), axis)
        return high - low
    raise ConfigError(f"unknown filter kind {kind!r}")


# magnification -------------------------------------------------------------------------


def level_gains(config):
    """Amplification applied to each pyramid level.

    Colour mode amplifies every band, so any spatial pattern varying in-band
    gains exactly ``1 + beta``. Motion mode leaves the finest band (noise,
    aliasing) and the base (colour/DC) alone and amplifies the bands between.
    """
    n = config.pyramid_levels
    if config.mode == "color":
        return [config.beta] * n
    return [config.beta if 0 < i < n - 1 else 0.0 for i in range(n)]


def magnify(clip, config):
    """Return a new clip with in-band temporal variation amplified by ``1 + beta``."""
    config.check_clip(clip.fps, len(clip), clip.height, clip.width)
    x = np.array(clip.frames, dtype=np.float64)
    use_yiq = config.chroma_attenuation != 1.0
    if use_yiq:
        x = x @ RGB_TO_YIQ.T
    bands = laplacian_pyramid(x, config.pyramid_levels)
    del x
    for i, gain in enumerate(level_gains(config)):
        if gain == 0.0:
            continue
        bp = temporal_bandpass(bands[i], clip.fps, config.low_hz, config.high_hz,
                               config.filter_kind, padding=config.temporal_padding)
        if use_yiq:
            bp[..., 1:] *= config.chroma_attenuation
        bp *= gain
        bands[i] += bp
        del bp
    out = collapse_pyramid(bands)
    del bands
    if use_yiq:
        out = out @ YIQ_TO_RGB.T
    np.clip(out, 0.0, 1.0, out=out)
    return clip.with_frames(out)


def denoise(clip, spatial_sigma):
    """Per-frame Gaussian blur; ``spatial_sigma == 0`` returns the clip unchanged."""
    if spatial_sigma < 0:
        raise ConfigError("spatial_sigma must be >= 0")
    if spatial_sigma == 0:
        return clip
    out = ndimage.gaussian_filter(
        clip.frames, sigma=(0, spatial_sigma, spatial_sigma, 0), mode="reflect"
    )
    np.clip(out, 0.0, 1.0, out=out)
    return clip.with_frames(out)
