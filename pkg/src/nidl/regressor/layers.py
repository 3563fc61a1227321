"""NHWC layers with hand-written backward passes.

Every layer caches what it needs during ``forward`` and consumes it in
``backward``, which returns the gradient w.r.t. the layer input and fills
``self.grads`` for its parameters.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class Layer:
    kind = "layer"

    def __init__(self):
        self.params = {}
        self.grads = {}

    def forward(self, x):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def output_shape(self, shape):
        """Per-sample output shape for a per-sample input shape."""
        return shape


def he_uniform(rng, shape, fan_in, dtype):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Conv2D(Layer):
    kind = "conv"

    def __init__(self, in_channels, out_channels, kernel, stride=1, padding=None,
                 rng=None, dtype=np.float32):
        super().__init__()
        self.k = kernel
        self.stride = stride
        self.pad = kernel // 2 if padding is None else padding
        shape = (kernel, kernel, in_channels, out_channels)
        if rng is None:
            W = np.zeros(shape, dtype=dtype)
        else:
            W = he_uniform(rng, shape, kernel * kernel * in_channels, dtype)
        self.params = {"W": W, "b": np.zeros(out_channels, dtype=dtype)}

    def output_shape(self, shape):
        h, w, _ = shape
        ho = (h + 2 * self.pad - self.k) // self.stride + 1
        wo = (w + 2 * self.pad - self.k) // self.stride + 1
        return (ho, wo, self.params["W"].shape[3])

    def forward(self, x):
        p, s, k = self.pad, self.stride, self.k
        xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0))) if p else x
        # windows: (n, Ho, Wo, C, k, k)
        win = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::s, ::s]
        W = self.params["W"]
        out = np.tensordot(win, W.transpose(2, 0, 1, 3), axes=3) + self.params["b"]
        self.cache = (x.shape, xp.shape, win)
        return out

    def backward(self, dout):
        x_shape, xp_shape, win = self.cache
        p, s, k = self.pad, self.stride, self.k
        W = self.params["W"]
        n, ho, wo, _ = dout.shape
        self.grads["W"] = np.tensordot(win, dout, axes=([0, 1, 2], [0, 1, 2])).transpose(1, 2, 0, 3)
        self.grads["b"] = dout.sum(axis=(0, 1, 2))
        dxp = np.zeros(xp_shape, dtype=dout.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s, :] += dout @ W[i, j].T
        self.cache = None
        if p:
            return dxp[:, p:p + x_shape[1], p:p + x_shape[2], :]
        return dxp


class ReLU(Layer):
    kind = "relu"

    def forward(self, x):
        self.mask = x > 0
        return np.where(self.mask, x, 0).astype(x.dtype, copy=False)

    def backward(self, dout):
        return np.where(self.mask, dout, 0).astype(dout.dtype, copy=False)


class MaxPool2D(Layer):
    """Non-overlapping ``size x size`` max pooling; trailing rows/columns that
    do not fill a window are dropped."""

    kind = "maxpool"

    def __init__(self, size=2):
        super().__init__()
        self.size = size

    def output_shape(self, shape):
        h, w, c = shape
        return (h // self.size, w // self.size, c)

    def forward(self, x):
        n, h, w, c = x.shape
        z = self.size
        ho, wo = h // z, w // z
        blocks = x[:, :ho * z, :wo * z, :].reshape(n, ho, z, wo, z, c)
        blocks = blocks.transpose(0, 1, 3, 5, 2, 4).reshape(n, ho, wo, c, z * z)
        arg = blocks.argmax(axis=-1)
        self.cache = (x.shape, arg)
        return np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def backward(self, dout):
        x_shape, arg = self.cache
        n, h, w, c = x_shape
        z = self.size
        ho, wo = dout.shape[1:3]
        dblocks = np.zeros((n, ho, wo, c, z * z), dtype=dout.dtype)
        np.put_along_axis(dblocks, arg[..., None], dout[..., None], axis=-1)
        dx = np.zeros(x_shape, dtype=dout.dtype)
        dx[:, :ho * z, :wo * z, :] = (
            dblocks.reshape(n, ho, wo, c, z, z).transpose(0, 1, 4, 2, 5, 3).reshape(n, ho * z, wo * z, c)
        )
        self.cache = None
        return dx


class GlobalAvgPool(Layer):
    kind = "avgpool"

    def output_shape(self, shape):
        return (shape[-1],)

    def forward(self, x):
        self.in_shape = x.shape
        return x.mean(axis=(1, 2))

    def backward(self, dout):
        n, h, w, c = self.in_shape
        return np.broadcast_to(dout[:, None, None, :] / (h * w), self.in_shape).astype(dout.dtype)


class Dense(Layer):
    kind = "dense"

    def __init__(self, n_in, n_out, rng=None, dtype=np.float32):
        super().__init__()
        if rng is None:
            W = np.zeros((n_in, n_out), dtype=dtype)
        else:
            W = he_uniform(rng, (n_in, n_out), n_in, dtype)
        self.params = {"W": W, "b": np.zeros(n_out, dtype=dtype)}

    def output_shape(self, shape):
        return (self.params["W"].shape[1],)

    def forward(self, x):
        self.x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dout):
        self.grads["W"] = self.x.T @ dout
        self.grads["b"] = dout.sum(axis=0)
        self.x = None
        return dout @ self.params["W"].T


def squared_error(pred, target):
    """Mean squared error over the batch and its gradient w.r.t. ``pred``."""
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size
