"""Compact convolutional network with hand-written forward and backward passes.

Fixed topology, variable widths: two 3x3 valid convolutions, each followed by
ReLU and 2x2 max pooling (odd trailing rows/columns are dropped), then a
single-logit dense layer. Convolutions run as im2col matrix products and all
math happens in float64 so the analytic gradients can be checked against
central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ArchitectureMismatch


@dataclass(frozen=True)
class Architecture:
    """Shape descriptor for the compact network."""

    input_size: int
    in_channels: int = 3
    conv_channels: tuple[int, int] = (8, 16)
    kernel: int = 3
    pool: int = 2

    def __post_init__(self):
        object.__setattr__(self, "conv_channels", tuple(self.conv_channels))
        if len(self.conv_channels) != 2 or any(c < 1 for c in self.conv_channels):
            raise ArchitectureMismatch(
                f"conv_channels must be two positive widths, got {self.conv_channels}"
            )
        if self.kernel != 3 or self.pool != 2:
            raise ArchitectureMismatch("only kernel=3 with pool=2 is supported")
        self.layer_dims()  # validates input_size

    def layer_dims(self) -> tuple[int, int, int, int]:
        """(conv1 out, pool1 out, conv2 out, pool2 out) spatial sizes."""
        k, p = self.kernel, self.pool
        a1 = self.input_size - k + 1
        p1 = a1 // p
        a2 = p1 - k + 1
        p2 = a2 // p
        if min(a1, p1, a2, p2) < 1:
            raise ArchitectureMismatch(
                f"input_size {self.input_size} is too small for the network"
            )
        return a1, p1, a2, p2

    @property
    def flat_dim(self) -> int:
        return self.layer_dims()[3] ** 2 * self.conv_channels[1]

    def param_layout(self) -> list[tuple[str, tuple[int, ...], int]]:
        """(name, shape, fan_in) for each parameter block, in pack order."""
        c1, c2 = self.conv_channels
        k2 = self.kernel * self.kernel
        return [
            ("w1", (self.in_channels * k2, c1), self.in_channels * k2),
            ("b1", (c1,), 0),
            ("w2", (c1 * k2, c2), c1 * k2),
            ("b2", (c2,), 0),
            ("wf", (self.flat_dim,), self.flat_dim),
            ("bf", (1,), 0),
        ]

    @property
    def n_params(self) -> int:
        return sum(int(np.prod(shape)) for _, shape, _ in self.param_layout())


def init_params(arch: Architecture, seed: int) -> np.ndarray:
    """Fan-in scaled uniform weights, zero biases, float32-representable.

    Values are quantized to float32 on creation so a freshly initialized
    model survives the 32-bit checkpoint format without loss.
    """
    rng = np.random.default_rng(seed)
    parts = []
    for name, shape, fan_in in arch.param_layout():
        if name.startswith("b"):
            parts.append(np.zeros(shape))
        else:
            limit = np.sqrt(6.0 / fan_in)
            parts.append(rng.uniform(-limit, limit, size=shape).ravel())
    flat = np.concatenate(parts)
    return flat.astype(np.float32).astype(np.float64)


def unpack_params(arch: Architecture, flat: np.ndarray) -> dict[str, np.ndarray]:
    if flat.shape != (arch.n_params,):
        raise ArchitectureMismatch(
            f"expected {arch.n_params} parameters, got shape {flat.shape}"
        )
    views = {}
    offset = 0
    for name, shape, _ in arch.param_layout():
        size = int(np.prod(shape))
        views[name] = flat[offset : offset + size].reshape(shape)
        offset += size
    return views


def sigmoid(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _im2col(x: np.ndarray, k: int) -> tuple[np.ndarray, int, int]:
    """(B, H', W', C) -> (B, H'*W' patches, C*k*k columns)."""
    view = sliding_window_view(x, (k, k), axis=(1, 2))  # (B, H2, W2, C, k, k)
    b, h2, w2 = view.shape[:3]
    return view.reshape(b, h2 * w2, -1), h2, w2


def _col2im(dcols: np.ndarray, out_shape: tuple[int, ...], k: int) -> np.ndarray:
    """Scatter-add the im2col gradient back onto the input feature map."""
    b, h, w, c = out_shape
    h2, w2 = h - k + 1, w - k + 1
    d = dcols.reshape(b, h2, w2, c, k, k)
    out = np.zeros(out_shape)
    for u in range(k):
        for v in range(k):
            out[:, u : u + h2, v : v + w2, :] += d[:, :, :, :, u, v]
    return out


def _maxpool(a: np.ndarray) -> tuple[np.ndarray, np.ndarray, tuple[int, int]]:
    """2x2 max pool with first-max tie breaking; odd edges are dropped."""
    b, h, w, c = a.shape
    he, we = h - h % 2, w - w % 2
    windows = (
        a[:, :he, :we, :]
        .reshape(b, he // 2, 2, we // 2, 2, c)
        .transpose(0, 1, 3, 5, 2, 4)
        .reshape(b, he // 2, we // 2, c, 4)
    )
    idx = windows.argmax(axis=-1)
    pooled = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
    return pooled, idx, (h, w)


def _maxpool_backward(
    grad: np.ndarray, idx: np.ndarray, orig_hw: tuple[int, int]
) -> np.ndarray:
    b, h, w, c = grad.shape
    oh, ow = orig_hw
    g4 = np.zeros((b, h, w, c, 4))
    np.put_along_axis(g4, idx[..., None], grad[..., None], axis=-1)
    g = (
        g4.reshape(b, h, w, c, 2, 2)
        .transpose(0, 1, 4, 2, 5, 3)
        .reshape(b, h * 2, w * 2, c)
    )
    out = np.zeros((b, oh, ow, c))
    out[:, : h * 2, : w * 2, :] = g
    return out


def _check_input(arch: Architecture, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        x = x[None]
    s, c = arch.input_size, arch.in_channels
    if x.ndim != 4 or x.shape[1:] != (s, s, c):
        raise ArchitectureMismatch(
            f"network expects (B, {s}, {s}, {c}) input, got {x.shape}"
        )
    return x


def forward_logits(arch: Architecture, params: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Logits for a batch of normalized tiles, no cache kept."""
    x = _check_input(arch, x)
    p = unpack_params(arch, np.asarray(params, dtype=np.float64))
    k = arch.kernel
    c1, c2 = arch.conv_channels

    cols1, h1, w1 = _im2col(x, k)
    a1 = np.maximum(cols1 @ p["w1"] + p["b1"], 0.0).reshape(-1, h1, w1, c1)
    p1, _, _ = _maxpool(a1)
    cols2, h2, w2 = _im2col(p1, k)
    a2 = np.maximum(cols2 @ p["w2"] + p["b2"], 0.0).reshape(-1, h2, w2, c2)
    p2, _, _ = _maxpool(a2)
    return p2.reshape(x.shape[0], -1) @ p["wf"] + p["bf"][0]


LOSS_EPS = 1e-7


def cross_entropy(y_hat: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-example binary cross-entropy with predictions clamped away from
    0 and 1 so the result is always finite."""
    y_hat = np.clip(np.asarray(y_hat, dtype=np.float64), LOSS_EPS, 1.0 - LOSS_EPS)
    y = np.asarray(y, dtype=np.float64)
    return -(y * np.log(y_hat) + (1.0 - y) * np.log1p(-y_hat))


def loss_and_grad(
    arch: Architecture, params: np.ndarray, x: np.ndarray, y: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean batch cross-entropy and its gradient w.r.t. the flat parameters."""
    x = _check_input(arch, x)
    y = np.asarray(y, dtype=np.float64)
    flat_params = np.asarray(params, dtype=np.float64)
    p = unpack_params(arch, flat_params)
    k = arch.kernel
    c1, c2 = arch.conv_channels
    batch = x.shape[0]

    # forward, caching pre-activations and pool argmaxes
    cols1, h1, w1 = _im2col(x, k)
    z1 = cols1 @ p["w1"] + p["b1"]
    a1 = np.maximum(z1, 0.0).reshape(batch, h1, w1, c1)
    p1, idx1, hw1 = _maxpool(a1)
    cols2, h2, w2 = _im2col(p1, k)
    z2 = cols2 @ p["w2"] + p["b2"]
    a2 = np.maximum(z2, 0.0).reshape(batch, h2, w2, c2)
    p2, idx2, hw2 = _maxpool(a2)
    flat = p2.reshape(batch, -1)
    logits = flat @ p["wf"] + p["bf"][0]

    probs = sigmoid(logits)
    clamped = np.clip(probs, LOSS_EPS, 1.0 - LOSS_EPS)
    loss = float(np.mean(-(y * np.log(clamped) + (1.0 - y) * np.log1p(-clamped))))

    # backward; the clamp zeroes the gradient where it is active
    inside = (probs > LOSS_EPS) & (probs < 1.0 - LOSS_EPS)
    dclamped = (-(y / clamped) + (1.0 - y) / (1.0 - clamped)) / batch
    dlogits = dclamped * inside * probs * (1.0 - probs)

    gwf = flat.T @ dlogits
    gbf = np.array([dlogits.sum()])
    dflat = dlogits[:, None] * p["wf"][None, :]
    dp2 = dflat.reshape(p2.shape)

    da2 = _maxpool_backward(dp2, idx2, hw2).reshape(batch, -1, c2)
    dz2 = da2 * (z2 > 0.0)
    gw2 = np.einsum("bpk,bpc->kc", cols2, dz2)
    gb2 = dz2.sum(axis=(0, 1))
    dcols2 = dz2 @ p["w2"].T
    dp1 = _col2im(dcols2, p1.shape, k)

    da1 = _maxpool_backward(dp1, idx1, hw1).reshape(batch, -1, c1)
    dz1 = da1 * (z1 > 0.0)
    gw1 = np.einsum("bpk,bpc->kc", cols1, dz1)
    gb1 = dz1.sum(axis=(0, 1))

    grad = np.concatenate(
        [gw1.ravel(), gb1, gw2.ravel(), gb2, gwf.ravel(), gbf]
    )
    return loss, grad
