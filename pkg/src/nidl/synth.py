"""Synthetic subjects with known skin-temperature ground truth.

Each subject is a post-stimulus cool-down: the skin starts warm after the
hand bath and relaxes exponentially toward baseline. Two signals in the
rendered texture track temperature:

* mean HSV saturation follows ``S = (T - b) / 96.5`` exactly (before sensor
  noise), ``b`` being a per-subject intercept, so the linear
  saturation-temperature model is recoverable by construction;
* a pore-lattice pattern pulses in the EVM passband with an amplitude that
  grows with temperature, kept below one 8-bit step so it is invisible until
  magnified.

Defaults are desk scale: 50 minutes sampled at 1 fps (3,000 frames) on a
48x48 raster, which leaves room for a 32x32 ROI.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from .errors import ConfigError
from .nipst import mean_saturation
from .media import TemperatureSeries, VideoClip

NIPST_SLOPE = 96.5


@dataclass(frozen=True)
class SynthProfile:
    duration_s: float = 3000.0
    fps: float = 1.0
    width: int = 48
    height: int = 48
    # trajectory
    t_base_c: float = 33.0
    t_peak_c: float = 36.5
    tau_decay_s: float = 900.0
    base_jitter_c: float = 0.3
    peak_jitter_c: float = 0.3
    temp_noise_c: float = 0.03
    temp_noise_timescale_s: float = 120.0
    # saturation coupling
    saturation_at_base: float = 0.30
    intercept_jitter_c: float = 0.1
    # appearance
    hue: float = 0.05
    value: float = 0.70
    texture_saturation: float = 0.04
    texture_value: float = 0.06
    texture_scale_px: float = 2.0
    # in-band pulsation
    pulse_hz: float = 0.2
    pulse_amplitude: float = 1.0 / 255.0
    pulse_period_px: float = 16.0
    # sensors
    pixel_noise: float = 0.5 / 255.0
    sensor_interval_s: float = 60.0
    sensor_noise_c: float = 0.0

    def __post_init__(self):
        if self.duration_s <= 0 or self.fps <= 0:
            raise ConfigError("duration and fps must be positive")
        if self.width < 2 or self.height < 2:
            raise ConfigError("frame must be at least 2x2")
        if self.tau_decay_s <= 0 or self.sensor_interval_s <= 0:
            raise ConfigError("time constants must be positive")
        if not 0.0 <= self.hue < 1.0 / 6.0:
            raise ConfigError("hue must lie in the red-yellow sector [0, 1/6)")
        if self.pulse_amplitude < 0 or self.pixel_noise < 0 or self.temp_noise_c < 0:
            raise ConfigError("amplitudes and noise levels must be non-negative")
        if not self.pulse_hz < self.fps / 2:
            raise ConfigError("pulse frequency must be below Nyquist")
        s_lo = self.saturation_at_base - 0.1 - self.texture_saturation
        s_hi = self.saturation_at_base + 0.15 + self.texture_saturation
        v_lo = self.value - self.texture_value - self.pulse_amplitude
        v_hi = self.value + self.texture_value + self.pulse_amplitude
        if s_lo <= 0 or s_hi >= 1 or v_lo <= 0 or v_hi >= 1:
            raise ConfigError("appearance parameters would clip saturation or value")

    @property
    def frame_count(self):
        return int(round(self.duration_s * self.fps))

    @property
    def nominal_intercept(self):
        return self.t_base_c - NIPST_SLOPE * self.saturation_at_base


@dataclass(frozen=True)
class SubjectParams:
    """Per-subject draws; everything the decoder needs to invert the render."""

    t_base_c: float
    t_peak_c: float
    intercept_c: float
    pulse_phase: float


class SyntheticSubject(NamedTuple):
    clip: VideoClip
    log: TemperatureSeries
    truth: np.ndarray


def _streams(seed):
    # independent streams: params, texture, temperature noise, pixel noise, sensor noise
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(5)]


def subject_params(seed, profile):
    rng = _streams(seed)[0]
    return SubjectParams(
        t_base_c=profile.t_base_c + profile.base_jitter_c * rng.standard_normal(),
        t_peak_c=profile.t_peak_c + profile.peak_jitter_c * rng.standard_normal(),
        intercept_c=profile.nominal_intercept + profile.intercept_jitter_c * rng.standard_normal(),
        pulse_phase=rng.uniform(0.0, 2.0 * np.pi),
    )


def _normalized_field(rng, shape, sigma):
    f = ndimage.gaussian_filter(rng.standard_normal(shape), sigma, mode="wrap")
    f -= f.mean()
    peak = np.abs(f).max()
    return f / peak if peak > 0 else f


def temperature_trajectory(seed, profile):
    """Return ``truth(t)``: the subject's skin temperature at any time in seconds."""
    params = subject_params(seed, profile)
    rng = _streams(seed)[2]
    dt = 1.0 / profile.fps
    grid = np.arange(int(np.ceil(profile.duration_s / dt)) + 2) * dt
    noise = np.zeros_like(grid)
    if profile.temp_noise_c > 0:
        noise = ndimage.gaussian_filter1d(
            rng.standard_normal(grid.size), profile.temp_noise_timescale_s * profile.fps, mode="reflect"
        )
        noise *= profile.temp_noise_c / noise.std()

    def truth(t):
        t = np.asarray(t, dtype=np.float64)
        drift = params.t_base_c + (params.t_peak_c - params.t_base_c) * np.exp(-t / profile.tau_decay_s)
        return drift + np.interp(t, grid, noise)

    return truth


def pulse_amplitude(temp_c, profile):
    """Pulse amplitude grows linearly with temperature over [20, 45] C, peaking at the profile limit."""
    frac = np.clip((np.asarray(temp_c) - 20.0) / 25.0, 0.0, 1.0)
    return profile.pulse_amplitude * (0.8 + 0.2 * frac)


def pulse_pattern(profile):
    y, x = np.mgrid[0:profile.height, 0:profile.width]
    k = 2.0 * np.pi / profile.pulse_period_px
    return np.cos(k * x) * np.cos(k * y)


def generate_synthetic_subject(seed, profile=None, subject_id=None):
    """Render one subject: ``(clip, sensor log, per-frame true temperature)``."""
    profile = profile or SynthProfile()
    params = subject_params(seed, profile)
    _, tex_rng, _, pix_rng, sensor_rng = _streams(seed)
    truth_fn = temperature_trajectory(seed, profile)

    n = profile.frame_count
    t = np.arange(n) / profile.fps
    truth = truth_fn(t)
    sat = (truth - params.intercept_c) / NIPST_SLOPE

    shape = (profile.height, profile.width)
    tex_s = profile.texture_saturation * _normalized_field(tex_rng, shape, profile.texture_scale_px)
    tex_v = profile.texture_value * _normalized_field(tex_rng, shape, profile.texture_scale_px)
    pattern = pulse_pattern(profile)
    pulse = pulse_amplitude(truth, profile) * np.sin(2 * np.pi * profile.pulse_hz * t + params.pulse_phase)

    s = sat[:, None, None] + tex_s
    v = profile.value + tex_v + pulse[:, None, None] * pattern
    f = 6.0 * profile.hue
    frames = np.empty((n, profile.height, profile.width, 3))
    frames[..., 0] = v
    frames[..., 1] = v * (1.0 - s * (1.0 - f))
    frames[..., 2] = v * (1.0 - s)
    del s, v
    if profile.pixel_noise > 0:
        for i in range(n):
            frames[i] += profile.pixel_noise * pix_rng.standard_normal(frames.shape[1:])
    np.clip(frames, 0.0, 1.0, out=frames)

    times = np.arange(0.0, profile.duration_s + 1e-9, profile.sensor_interval_s)
    values = truth_fn(times)
    if profile.sensor_noise_c > 0:
        values = values + profile.sensor_noise_c * sensor_rng.standard_normal(times.size)

    sid = subject_id if subject_id is not None else f"S{seed:02d}"
    return SyntheticSubject(VideoClip(frames, profile.fps, sid), TemperatureSeries(times, values), truth)


def decode_temperature(frames, seed, profile=None):
    """Invert the saturation coupling: per-frame temperature from mean HSV saturation."""
    profile = profile or SynthProfile()
    params = subject_params(seed, profile)
    return NIPST_SLOPE * mean_saturation(frames) + params.intercept_c
