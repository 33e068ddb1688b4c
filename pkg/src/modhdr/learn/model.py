"""Small 3x3 convolutional restorer with hand-written reverse-mode gradients.

Tensors are channels-last, ``(batch, height, width, channels)``, float64.
Every conv uses replicate padding so spatial size is preserved.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


_OFFSETS = [(di, dj) for di in range(3) for dj in range(3)]


def _kernel_matrix(w):
    # (C_out, C_in, 3, 3) -> (C_out, 9 * C_in) with offsets outermost, matching the cols layout
    return w.transpose(0, 2, 3, 1).reshape(w.shape[0], -1)


def conv3x3_forward(x, w, b):
    """Return ``(out, cols)``; ``cols`` is the im2col matrix needed by the backward pass."""
    n, h, wd, c = x.shape
    # replicate padding by clipped gathers; cheaper than np.pad at these sizes
    xp = x[:, np.clip(np.arange(-1, h + 1), 0, h - 1)][:, :, np.clip(np.arange(-1, wd + 1), 0, wd - 1)]
    win = sliding_window_view(xp, (3, 3), axis=(1, 2))  # (n, h, wd, c, 3, 3)
    cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(n * h * wd, 9 * c)
    out = cols @ _kernel_matrix(w).T + b
    return out.reshape(n, h, wd, w.shape[0]), cols


def conv3x3_backward(dout, cols, x_shape, w, need_dx=True):
    """Gradients ``(dx, dw, db)`` of a replicate-padded 3x3 convolution."""
    n, h, wd, c = x_shape
    cout = w.shape[0]
    dflat = dout.reshape(-1, cout)
    dw = (dflat.T @ cols).reshape(cout, 3, 3, c).transpose(0, 3, 1, 2)
    db = dflat.sum(axis=0)
    if not need_dx:
        return None, dw, db
    dcols = (dflat @ _kernel_matrix(w)).reshape(n, h, wd, 9, c)
    dpad = np.zeros((n, h + 2, wd + 2, c))
    for k, (di, dj) in enumerate(_OFFSETS):
        dpad[:, di : di + h, dj : dj + wd, :] += dcols[:, :, :, k, :]
    # fold the replicated border back onto the edge pixels
    rows = dpad[:, 1:-1].copy()
    rows[:, 0] += dpad[:, 0]
    rows[:, -1] += dpad[:, -1]
    dx = rows[:, :, 1:-1].copy()
    dx[:, :, 0] += rows[:, :, 0]
    dx[:, :, -1] += rows[:, :, -1]
    return dx, dw, db


class ToyRestorer:
    """Stack of 3x3 convs with ReLU between them and an optional additive skip.

    With ``skip=True`` the first ``out_channels`` input channels (the raw
    modulo image in the fixed feature order) are added to the output.

    All weights and biases live in the flat vector ``theta``; ``weights`` and
    ``biases`` are views into it, so editing ``theta`` in place changes the model.
    """

    def __init__(self, in_channels: int, out_channels: int, hidden=(8, 8), skip: bool = False, seed: int = 0):
        if skip and in_channels < out_channels:
            raise ValueError("skip connection needs at least out_channels input channels")
        self.in_channels = int(in_channels)
        self.out_channels = int(out_channels)
        self.hidden = tuple(int(h) for h in hidden)
        self.skip = bool(skip)
        self.layer_channels = [self.in_channels, *self.hidden, self.out_channels]
        self.theta = np.empty(self.parameter_count(self.layer_channels))
        self._bind()
        self.init_parameters(seed)

    @staticmethod
    def parameter_count(layer_channels) -> int:
        return sum(9 * ci * co + co for ci, co in zip(layer_channels[:-1], layer_channels[1:]))

    def _bind(self):
        self.weights, self.biases = [], []
        pos = 0
        for ci, co in zip(self.layer_channels[:-1], self.layer_channels[1:]):
            self.weights.append(self.theta[pos : pos + 9 * ci * co].reshape(co, ci, 3, 3))
            pos += 9 * ci * co
            self.biases.append(self.theta[pos : pos + co])
            pos += co

    def init_parameters(self, seed: int) -> None:
        """Uniform in ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]`` for weights and biases."""
        rng = np.random.default_rng(seed)
        for w, b in zip(self.weights, self.biases):
            s = 1.0 / np.sqrt(9 * w.shape[1])
            w[...] = rng.uniform(-s, s, size=w.shape)
            b[...] = rng.uniform(-s, s, size=b.shape)

    def set_theta(self, theta) -> None:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != self.theta.shape:
            raise ValueError(f"expected {self.theta.size} parameters, got {theta.size}")
        self.theta[...] = theta

    def copy(self) -> "ToyRestorer":
        other = ToyRestorer(self.in_channels, self.out_channels, self.hidden, self.skip)
        other.set_theta(self.theta)
        return other

    def architecture(self) -> dict:
        return {
            "kind": "conv3x3-relu",
            "layer_channels": self.layer_channels,
            "skip": self.skip,
            "padding": "replicate",
        }

    def forward(self, z: np.ndarray):
        """Run the net on ``(B, H, W, C_in)`` input; returns ``(out, cache)``."""
        if z.ndim != 4 or z.shape[-1] != self.in_channels:
            raise ValueError(f"expected (B, H, W, {self.in_channels}) input, got {z.shape}")
        caches = []
        a = z
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            out, cols = conv3x3_forward(a, w, b)
            caches.append((cols, a))
            a = out if k == last else np.maximum(out, 0.0)
        if self.skip:
            a = a + z[..., : self.out_channels]
        return a, caches

    def __call__(self, z: np.ndarray) -> np.ndarray:
        return self.forward(z)[0]

    def backward(self, caches, dout: np.ndarray) -> np.ndarray:
        """Flat gradient of ``sum(dout * out)`` with respect to ``theta``."""
        grad = np.empty_like(self.theta)
        gw, gb = [], []
        d = dout
        for k in range(len(self.weights) - 1, -1, -1):
            cols, a = caches[k]
            d, dw, db = conv3x3_backward(d, cols, a.shape, self.weights[k], need_dx=k > 0)
            gw.append(dw)
            gb.append(db)
            if k > 0:
                # a = relu(pre), and a > 0 exactly where pre > 0
                d = d * (a > 0)
        pos = 0
        for dw, db in zip(reversed(gw), reversed(gb)):
            grad[pos : pos + dw.size] = dw.ravel()
            pos += dw.size
            grad[pos : pos + db.size] = db
            pos += db.size
        return grad
