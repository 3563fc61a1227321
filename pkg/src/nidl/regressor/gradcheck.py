"""Central finite-difference checks of the hand-written backward passes."""

import numpy as np


def relative_error(a, b, floor=1e-8):
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def layer_input_gradient(layer, x, rng, h=1e-6, n_probe=None):
    """(analytic, numeric) gradients of ``sum(R * layer(x))`` w.r.t. ``x`` at probed entries."""
    out = layer.forward(x)
    R = rng.standard_normal(out.shape)
    analytic = layer.backward(R)
    idx = np.arange(x.size) if n_probe is None else rng.choice(x.size, min(n_probe, x.size), replace=False)
    numeric = np.empty(idx.size)
    flat = x.reshape(-1)
    for j, i in enumerate(idx):
        old = flat[i]
        flat[i] = old + h
        up = np.sum(R * layer.forward(x))
        flat[i] = old - h
        down = np.sum(R * layer.forward(x))
        flat[i] = old
        numeric[j] = (up - down) / (2 * h)
    return analytic.reshape(-1)[idx], numeric


def _smooth(f_up, f_0, f_down, h, tol=1e-3):
    # one-sided slopes disagree when a ReLU or max-pool switch lies within +-h
    right, left = (f_up - f_0) / h, (f_0 - f_down) / h
    return abs(right - left) <= tol * max(1.0, abs(right), abs(left))


def network_param_gradients(model, batch, targets, rng, h=1e-6, n_probe=5, max_draws=50):
    """``{name: (analytic, numeric)}`` at up to ``n_probe`` random entries of every parameter.

    Entries whose +-h neighbourhood straddles a kink of the piecewise-linear
    activations are skipped and another entry is drawn.
    """
    f0, grads = model.backward(batch, targets)
    grads = {k: v.copy() for k, v in grads.items()}
    out = {}
    for name, p in model.named_params().items():
        flat = p.reshape(-1)
        order = rng.permutation(flat.size)[:max_draws]
        kept, numeric = [], []
        for i in order:
            old = flat[i]
            flat[i] = old + h
            up, _ = model.backward(batch, targets)
            flat[i] = old - h
            down, _ = model.backward(batch, targets)
            flat[i] = old
            if not _smooth(up, f0, down, h):
                continue
            kept.append(i)
            numeric.append((up - down) / (2 * h))
            if len(kept) == n_probe:
                break
        out[name] = (grads[name].reshape(-1)[np.array(kept, dtype=int)], np.array(numeric))
    return out
