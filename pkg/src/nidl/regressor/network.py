"""Network description and the model that runs it.

The backbone is a configurable conv stack; the head is fixed: global average
pooling over space, then fully-connected ``F -> h1 -> h2 -> 1`` with ReLU
after the first two. Inputs are standardised per channel and the scalar
output is mapped back to degrees C with fixed affine buffers fitted on the
training labels, so the trainable part works on unit-scale numbers.
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import DataValidationError
from .layers import Conv2D, Dense, GlobalAvgPool, MaxPool2D, ReLU, squared_error


@dataclass(frozen=True)
class LayerDesc:
    kind: str  # conv | relu | maxpool
    channels: int = 0
    kernel: int = 3
    stride: int = 1
    size: int = 2


def conv(channels, kernel=3, stride=1):
    return LayerDesc("conv", channels=channels, kernel=kernel, stride=stride)


RELU = LayerDesc("relu")
POOL = LayerDesc("maxpool", size=2)


@dataclass(frozen=True)
class NetworkSpec:
    input_side: int
    backbone: tuple
    head_widths: tuple = (1024, 512)
    input_channels: int = 3
    dtype: str = "float32"

    def __post_init__(self):
        backbone = tuple(LayerDesc(**d) if isinstance(d, dict) else d for d in self.backbone)
        object.__setattr__(self, "backbone", backbone)
        object.__setattr__(self, "head_widths", tuple(int(w) for w in self.head_widths))
        if not any(d.kind == "conv" for d in backbone):
            raise DataValidationError("backbone needs at least one conv layer")
        for d in backbone:
            if d.kind not in ("conv", "relu", "maxpool"):
                raise DataValidationError(f"unknown backbone layer kind {d.kind!r}")

    @property
    def feature_width(self):
        return [d.channels for d in self.backbone if d.kind == "conv"][-1]

    @property
    def head_chain(self):
        """``[(F, h1), (h1, h2), (h2, 1)]``."""
        widths = (self.feature_width,) + self.head_widths + (1,)
        return list(zip(widths[:-1], widths[1:]))

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**{**d, "backbone": tuple(d["backbone"]), "head_widths": tuple(d["head_widths"])})


def desk_spec(input_side=32, dtype="float32"):
    """Four conv-ReLU-pool blocks to 256 features; head scaled to 256x128/128x64/64x1."""
    blocks = []
    for ch in (8, 16, 32, 256):
        blocks += [conv(ch), RELU, POOL]
    return NetworkSpec(input_side, tuple(blocks), (128, 64), dtype=dtype)


def full_spec(input_side=150, dtype="float32"):
    """Strided backbone ending in 2048 features under the 2048x1024/1024x512/512x1 head."""
    backbone = (
        conv(16, 3, 2), RELU, POOL,
        conv(64, 3, 2), RELU, POOL,
        conv(256, 3, 2), RELU, POOL,
        conv(2048, 1, 1), RELU,
    )
    return NetworkSpec(input_side, backbone, (1024, 512), dtype=dtype)


PRESETS = {"desk": desk_spec, "full": full_spec}


@dataclass
class Normalization:
    input_shift: np.ndarray = field(default_factory=lambda: np.zeros(3))
    input_scale: np.ndarray = field(default_factory=lambda: np.ones(3))
    target_shift: float = 0.0
    target_scale: float = 1.0

    @classmethod
    def fit(cls, images, temps):
        images = np.asarray(images)
        shift = images.mean(axis=(0, 1, 2), dtype=np.float64)
        scale = images.std(axis=(0, 1, 2), dtype=np.float64)
        scale[scale == 0] = 1.0
        t_scale = float(np.std(temps)) or 1.0
        return cls(shift, scale, float(np.mean(temps)), t_scale)


class Regressor:
    """A built network: layers, parameters and normalisation buffers."""

    def __init__(self, spec, rng=None, init="he", normalization=None):
        self.spec = spec
        self.dtype = np.dtype(spec.dtype)
        self.norm = normalization or Normalization()
        if init == "zeros":
            rng = None
        elif rng is None or isinstance(rng, (int, np.integer)):
            rng = np.random.default_rng(rng)
        self.layers = self._build(rng)

    def _build(self, rng):
        spec, dt = self.spec, self.dtype
        layers = []
        channels = spec.input_channels
        for d in spec.backbone:
            if d.kind == "conv":
                layers.append(Conv2D(channels, d.channels, d.kernel, d.stride, rng=rng, dtype=dt))
                channels = d.channels
            elif d.kind == "relu":
                layers.append(ReLU())
            else:
                layers.append(MaxPool2D(d.size))
        layers.append(GlobalAvgPool())
        chain = spec.head_chain
        for i, (n_in, n_out) in enumerate(chain):
            layers.append(Dense(n_in, n_out, rng=rng, dtype=dt))
            if i < len(chain) - 1:
                layers.append(ReLU())
        return layers

    # parameters -----------------------------------------------------------

    def named_params(self):
        out = {}
        for i, layer in enumerate(self.layers):
            for k, v in layer.params.items():
                out[f"{i:02d}.{layer.kind}.{k}"] = v
        return out

    def named_grads(self):
        out = {}
        for i, layer in enumerate(self.layers):
            for k, v in layer.grads.items():
                out[f"{i:02d}.{layer.kind}.{k}"] = v
        return out

    def load_params(self, params):
        own = self.named_params()
        if set(own) != set(params):
            raise DataValidationError("parameter names do not match the network spec")
        for name, value in params.items():
            if own[name].shape != value.shape:
                raise DataValidationError(f"{name}: shape {value.shape} != {own[name].shape}")
            own[name][...] = value

    def copy_params(self):
        return {k: v.copy() for k, v in self.named_params().items()}

    def n_params(self):
        return sum(v.size for v in self.named_params().values())

    # passes --------------------------------------------------------------------

    def trace_shapes(self, n=1):
        """Per-layer activation shapes for a batch of ``n``."""
        shape = (self.spec.input_side, self.spec.input_side, self.spec.input_channels)
        shapes = []
        for layer in self.layers:
            shape = layer.output_shape(shape)
            shapes.append((n,) + tuple(shape))
        return shapes

    def _check_batch(self, batch):
        side, c = self.spec.input_side, self.spec.input_channels
        if batch.ndim != 4 or batch.shape[1:] != (side, side, c):
            raise DataValidationError(f"batch shape {batch.shape} does not match input ({side}, {side}, {c})")

    def forward_normalized(self, batch, debug=False):
        batch = np.asarray(batch)
        self._check_batch(batch)
        x = ((batch - self.norm.input_shift) / self.norm.input_scale).astype(self.dtype)
        expected = self.trace_shapes(batch.shape[0]) if debug else None
        for i, layer in enumerate(self.layers):
            x = layer.forward(x)
            if debug:
                assert x.shape == expected[i], (i, layer.kind, x.shape, expected[i])
                if layer.kind == "relu":
                    assert np.all(x >= 0)
        return x

    def forward(self, batch, debug=False):
        """Predicted temperature, shape ``(n, 1)``."""
        out = self.forward_normalized(batch, debug=debug)
        return out.astype(np.float64) * self.norm.target_scale + self.norm.target_shift

    def backward(self, batch, targets):
        """Squared-error loss (in normalised units) and gradients for every parameter."""
        out = self.forward_normalized(batch)
        t = (np.asarray(targets, dtype=np.float64).reshape(-1, 1) - self.norm.target_shift) / self.norm.target_scale
        if t.shape != out.shape:
            raise DataValidationError(f"targets shape {t.shape} != output shape {out.shape}")
        loss, dout = squared_error(out, t.astype(self.dtype))
        dout = dout.astype(self.dtype)
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return loss, self.named_grads()

    def predict(self, images, batch_size=256):
        images = np.asarray(images)
        if images.shape[0] == 0:
            return np.zeros(0)
        parts = [self.forward(images[i:i + batch_size])[:, 0] for i in range(0, images.shape[0], batch_size)]
        return np.concatenate(parts)
