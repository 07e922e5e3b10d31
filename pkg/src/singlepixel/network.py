"""Small convolutional decoder with hand-written reverse-mode gradients.

Architecture: a chain of (3x3 same-padded conv -> batch norm -> LeakyReLU)
blocks followed by a 1-channel 3x3 conv head squashed by a sigmoid, so the
output is an image in (0, 1) on the same grid as the input.  Batch
normalization runs on the statistics of the single image being optimized
(momentum-0.99 running statistics are tracked for inference mode only).

Everything is float64 numpy.  The backward pass is exact reverse-mode
differentiation of the forward pass, including the dependence of the batch
statistics on the input; correctness is pinned by finite-difference tests.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, FormatError, ParameterError

DEFAULT_PLAN = (1, 16, 32, 32, 16, 1)

_CHECKPOINT_MAGIC = b"SPIN"
_CHECKPOINT_VERSION = 1


def _im2col(x: np.ndarray, scratch: dict | None = None, tag=None) -> np.ndarray:
    """(C, H, W) -> (C*9, H*W) columns of the zero-padded 3x3 neighborhoods.

    `scratch` (optional) recycles the padded and column buffers between
    calls; allocating tens of MB per convolution otherwise dominates the
    iteration cost on large grids.  The column buffer is cached for the
    backward pass, so its key carries the caller's layer tag.
    """
    c, h, w = x.shape
    xp = _buffer(scratch, ("pad", c, h, w), (c, h + 2, w + 2))
    xp.fill(0.0)
    xp[:, 1:-1, 1:-1] = x
    cols = _buffer(scratch, ("cols", tag, c, h, w), (c, 9, h, w))
    k = 0
    for di in range(3):
        for dj in range(3):
            cols[:, k] = xp[:, di : di + h, dj : dj + w]
            k += 1
    return cols.reshape(c * 9, h * w)


def _col2im(dcols: np.ndarray, c: int, h: int, w: int, scratch: dict | None = None) -> np.ndarray:
    """Adjoint of _im2col: scatter-add columns back onto the (C, H, W) grid."""
    d = dcols.reshape(c, 9, h, w)
    xp = _buffer(scratch, ("unpad", c, h, w), (c, h + 2, w + 2))
    xp.fill(0.0)
    k = 0
    for di in range(3):
        for dj in range(3):
            xp[:, di : di + h, dj : dj + w] += d[:, k]
            k += 1
    return xp[:, 1:-1, 1:-1].copy()


def _buffer(scratch: dict | None, key, shape) -> np.ndarray:
    if scratch is None:
        return np.empty(shape)
    buf = scratch.get(key)
    if buf is None or buf.shape != shape:
        buf = np.empty(shape)
        scratch[key] = buf
    return buf


def conv3x3_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray, scratch=None, tag=None):
    c_out = weight.shape[0]
    _, h, w = x.shape
    cols = _im2col(x, scratch, tag)
    z = weight.reshape(c_out, -1) @ cols + bias[:, None]
    return z.reshape(c_out, h, w), cols


def conv3x3_backward(g: np.ndarray, cols: np.ndarray, weight: np.ndarray, x_shape, scratch=None):
    c_in, h, w = x_shape
    c_out = weight.shape[0]
    gm = np.ascontiguousarray(g.reshape(c_out, h * w))
    g_weight = (gm @ cols.T).reshape(weight.shape)
    g_bias = gm.sum(axis=1)
    dcols = _buffer(scratch, ("dcols", c_in, h, w), (c_in * 9, h * w))
    np.matmul(weight.reshape(c_out, -1).T, gm, out=dcols)
    g_x = _col2im(dcols, c_in, h, w, scratch)
    return g_weight, g_bias, g_x


def bn_forward(z: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float):
    mean = z.mean(axis=(1, 2))
    var = z.var(axis=(1, 2))
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (z - mean[:, None, None]) * inv_std[:, None, None]
    y = gamma[:, None, None] * xhat + beta[:, None, None]
    return y, (xhat, inv_std, mean, var)


def bn_backward(gy: np.ndarray, gamma: np.ndarray, cache):
    xhat, inv_std, _, _ = cache
    n = xhat.shape[1] * xhat.shape[2]
    g_gamma = (gy * xhat).sum(axis=(1, 2))
    g_beta = gy.sum(axis=(1, 2))
    gxhat = gy * gamma[:, None, None]
    s1 = gxhat.sum(axis=(1, 2))[:, None, None]
    s2 = (gxhat * xhat).sum(axis=(1, 2))[:, None, None]
    gz = (inv_std[:, None, None] / n) * (n * gxhat - s1 - xhat * s2)
    return gz, g_gamma, g_beta


def bn_inference(z: np.ndarray, gamma, beta, mean, var, eps: float) -> np.ndarray:
    inv_std = 1.0 / np.sqrt(var + eps)
    return gamma[:, None, None] * (z - mean[:, None, None]) * inv_std[:, None, None] + beta[
        :, None, None
    ]


def leaky_relu(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x > 0, x, slope * x)


def leaky_relu_backward(g: np.ndarray, x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x > 0, g, slope * g)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class GeneratorNet:
    """Untrained convolutional generator f_theta.

    Parameters are kept as a flat list of arrays in a fixed order (per BN
    block: weight, bias, gamma, beta; head: weight, bias) so the optimizer
    and the checkpoint format can treat them uniformly.
    """

    def __init__(self, plan=DEFAULT_PLAN, seed: int = 0, leak: float = 0.2,
                 bn_momentum: float = 0.99, bn_eps: float = 1e-3):
        if len(plan) < 2 or plan[0] != 1 or plan[-1] != 1:
            raise DimensionError("channel plan must start and end with 1 channel")
        self.plan = tuple(int(c) for c in plan)
        self.seed = int(seed)
        self.leak = float(leak)
        self.bn_momentum = float(bn_momentum)
        self.bn_eps = float(bn_eps)
        self.n_blocks = len(plan) - 2  # conv+BN+LeakyReLU blocks before the head
        self.params: list[np.ndarray] = []
        self.running: list[dict] = []
        self._scratch: dict = {}
        rng = np.random.Generator(np.random.PCG64(self.seed))
        for layer in range(len(plan) - 1):
            c_in, c_out = plan[layer], plan[layer + 1]
            limit = np.sqrt(6.0 / (c_in * 9 + c_out * 9))
            self.params.append(rng.uniform(-limit, limit, size=(c_out, c_in, 3, 3)))
            self.params.append(np.zeros(c_out))
            if layer < self.n_blocks:
                self.params.append(np.ones(c_out))   # BN gamma
                self.params.append(np.zeros(c_out))  # BN beta
                self.running.append({"mean": None, "var": None})

    def _layer_params(self, layer: int):
        base = layer * 4 if layer < self.n_blocks else self.n_blocks * 4
        if layer < self.n_blocks:
            w, b, g, be = self.params[base : base + 4]
            return w, b, g, be
        w, b = self.params[base : base + 2]
        return w, b, None, None

    def forward(self, image: np.ndarray, batch_stats: bool = True,
                update_running: bool = False, want_cache: bool = False):
        """Run the generator on a 2D image; returns the 2D output in (0, 1).

        batch_stats selects BN statistics computed from this pass (the mode
        used during optimization); otherwise the frozen running statistics
        are used.  Gradients require want_cache=True and batch_stats=True.
        """
        x = np.asarray(image, dtype=np.float64)
        if x.ndim != 2:
            raise DimensionError("generator input must be a 2D image")
        act = x[None, :, :]
        cache = []
        for layer in range(len(self.plan) - 1):
            w, b, gamma, beta = self._layer_params(layer)
            z, cols = conv3x3_forward(act, w, b, self._scratch, layer)
            if layer < self.n_blocks:
                if batch_stats:
                    y, bn_cache = bn_forward(z, gamma, beta, self.bn_eps)
                    if update_running:
                        self._update_running(layer, bn_cache)
                else:
                    run = self.running[layer]
                    if run["mean"] is None:
                        raise ParameterError(
                            "no running statistics yet; run a training-mode forward first"
                        )
                    y = bn_inference(z, gamma, beta, run["mean"], run["var"], self.bn_eps)
                    bn_cache = None
                out = leaky_relu(y, self.leak)
                cache.append({"cols": cols, "x_shape": act.shape, "bn": bn_cache, "y": y})
                act = out
            else:
                s = sigmoid(z[0])
                cache.append({"cols": cols, "x_shape": act.shape, "s": s})
                act = s
        if want_cache:
            return act, cache
        return act

    def _update_running(self, layer: int, bn_cache) -> None:
        _, _, mean, var = bn_cache
        run = self.running[layer]
        if run["mean"] is None:
            run["mean"] = mean.copy()
            run["var"] = var.copy()
        else:
            m = self.bn_momentum
            run["mean"] = m * run["mean"] + (1.0 - m) * mean
            run["var"] = m * run["var"] + (1.0 - m) * var

    def backward(self, g_output: np.ndarray, cache) -> list[np.ndarray]:
        """Gradients of a scalar loss w.r.t. every parameter, given dL/d(output)."""
        grads = [np.zeros_like(p) for p in self.params]
        head = len(self.plan) - 2
        layer_cache = cache[head]
        s = layer_cache["s"]
        g = (g_output * s * (1.0 - s))[None, :, :]
        w, _, _, _ = self._layer_params(head)
        g_w, g_b, g_x = conv3x3_backward(
            g, layer_cache["cols"], w, layer_cache["x_shape"], self._scratch
        )
        base = self.n_blocks * 4
        grads[base] = g_w
        grads[base + 1] = g_b
        g = g_x
        for layer in range(self.n_blocks - 1, -1, -1):
            layer_cache = cache[layer]
            w, _, gamma, _ = self._layer_params(layer)
            g = leaky_relu_backward(g, layer_cache["y"], self.leak)
            g, g_gamma, g_beta = bn_backward(g, gamma, layer_cache["bn"])
            g_w, g_b, g = conv3x3_backward(
                g, layer_cache["cols"], w, layer_cache["x_shape"], self._scratch
            )
            base = layer * 4
            grads[base] = g_w
            grads[base + 1] = g_b
            grads[base + 2] = g_gamma
            grads[base + 3] = g_beta
        return grads


def save_checkpoint(path, net: GeneratorNet, adam=None) -> None:
    """Binary checkpoint: magic "SPIN", version, channel plan, parameters,
    BN running statistics, and (optionally) Adam state, all little-endian
    float64, so optimization trajectories can resume bit-exactly."""
    chunks = [struct.pack("<4sHH", _CHECKPOINT_MAGIC, _CHECKPOINT_VERSION, len(net.plan))]
    chunks.append(struct.pack(f"<{len(net.plan)}I", *net.plan))
    chunks.append(struct.pack("<dI", net.leak, net.seed))
    for p in net.params:
        chunks.append(np.ascontiguousarray(p, dtype="<f8").tobytes())
    for run in net.running:
        if run["mean"] is None:
            chunks.append(struct.pack("<B", 0))
        else:
            chunks.append(struct.pack("<B", 1))
            chunks.append(np.ascontiguousarray(run["mean"], dtype="<f8").tobytes())
            chunks.append(np.ascontiguousarray(run["var"], dtype="<f8").tobytes())
    if adam is None:
        chunks.append(struct.pack("<B", 0))
    else:
        chunks.append(struct.pack("<BQ", 1, adam.step))
        for arr in adam.m + adam.v:
            chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_checkpoint(path):
    """Inverse of save_checkpoint; returns (net, adam_state_or_None)."""
    from .prior import AdamState

    with open(path, "rb") as fh:
        data = fh.read()
    off = 0

    def take(fmt):
        nonlocal off
        size = struct.calcsize(fmt)
        if off + size > len(data):
            raise FormatError(f"checkpoint truncated at byte {off}")
        vals = struct.unpack_from(fmt, data, off)
        off += size
        return vals

    magic, version, plan_len = take("<4sHH")
    if magic != _CHECKPOINT_MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r} at byte 0")
    if version != _CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    plan = take(f"<{plan_len}I")
    leak, seed = take("<dI")
    net = GeneratorNet(plan=plan, seed=seed, leak=leak)

    def take_array(shape):
        nonlocal off
        count = int(np.prod(shape))
        size = count * 8
        if off + size > len(data):
            raise FormatError(f"checkpoint truncated at byte {off}")
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape(shape)
        off += size
        return arr.astype(np.float64)

    net.params = [take_array(p.shape) for p in net.params]
    for layer, run in enumerate(net.running):
        (has_run,) = take("<B")
        if has_run:
            channels = net.plan[layer + 1]
            run["mean"] = take_array((channels,))
            run["var"] = take_array((channels,))

    (has_adam,) = take("<B")
    adam = None
    if has_adam:
        (step,) = take("<Q")
        m = [take_array(p.shape) for p in net.params]
        v = [take_array(p.shape) for p in net.params]
        adam = AdamState(m=m, v=v, step=int(step))
    if off != len(data):
        raise FormatError(f"{len(data) - off} trailing bytes at byte {off}")
    return net, adam
