"""Small numpy layer kernel with hand-written backward passes.

Every layer works on batched float64 arrays: ``(N, C, L)`` for the
convolutional part and ``(N, D)`` for the dense part.  Unbatched inputs
passed to the functional helpers are promoted with a leading batch axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ShapeError(ValueError):
    """Raised when an array does not have the shape a layer expects."""

    def __init__(self, what: str, expected, actual):
        self.expected = expected
        self.actual = actual
        super().__init__(f"{what}: expected shape {expected}, got {actual}")


@dataclass
class Param:
    name: str
    value: np.ndarray
    grad: np.ndarray = field(init=False)

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad[...] = 0.0


def _same_pad(kernel_size: int) -> tuple[int, int]:
    # TensorFlow "SAME" split: the extra zero goes on the right for even kernels.
    total = kernel_size - 1
    left = total // 2
    return left, total - left


def _im2col(x: np.ndarray, kernel_size: int) -> np.ndarray:
    """(N, C, L) -> columns (N*L, K*C) of the zero-padded input, k-major."""
    n, c, length = x.shape
    left, right = _same_pad(kernel_size)
    xp = np.zeros((n, length + kernel_size - 1, c))
    xp[:, left:left + length, :] = x.transpose(0, 2, 1)
    idx = np.arange(length)[:, None] + np.arange(kernel_size)[None, :]
    return xp[:, idx, :].reshape(n * length, kernel_size * c)


def _flat_weight(weight: np.ndarray) -> np.ndarray:
    # (F, C, K) -> (F, K*C), matching the column layout of _im2col
    return weight.transpose(0, 2, 1).reshape(weight.shape[0], -1)


def conv1d_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray, _cols_out=None) -> np.ndarray:
    """Stride-1 cross-correlation with zero "same" padding.

    ``out[n, f, i] = bias[f] + sum_{c,k} weight[f, c, k] * xpad[n, c, i + k]``
    where ``xpad`` carries ``(K-1)//2`` zeros on the left.
    """
    x = np.asarray(x, dtype=np.float64)
    unbatched = x.ndim == 2
    if unbatched:
        x = x[None]
    out_ch, in_ch, k = weight.shape
    if x.ndim != 3 or x.shape[1] != in_ch:
        raise ShapeError("conv1d input", ("N", in_ch, "L"), x.shape)
    if bias.shape != (out_ch,):
        raise ShapeError("conv1d bias", (out_ch,), bias.shape)
    n, _, length = x.shape
    cols = _im2col(x, k)
    if _cols_out is not None:
        _cols_out.append(cols)
    out = (cols @ _flat_weight(weight).T + bias).reshape(n, length, out_ch).transpose(0, 2, 1)
    return out[0] if unbatched else out


def conv1d_backward(grad_out: np.ndarray, x: np.ndarray, weight: np.ndarray, cols=None):
    """Return ``(grad_x, grad_weight, grad_bias)`` for :func:`conv1d_forward`."""
    out_ch, in_ch, k = weight.shape
    n, _, length = x.shape
    if grad_out.shape != (n, out_ch, length):
        raise ShapeError("conv1d grad_out", (n, out_ch, length), grad_out.shape)
    if cols is None:
        cols = _im2col(x, k)
    g2 = grad_out.transpose(0, 2, 1).reshape(n * length, out_ch)
    grad_w = (g2.T @ cols).reshape(out_ch, k, in_ch).transpose(0, 2, 1)
    grad_b = g2.sum(axis=0)
    dcols = (g2 @ _flat_weight(weight)).reshape(n, length, k, in_ch)
    left, _ = _same_pad(k)
    grad_xp = np.zeros((n, length + k - 1, in_ch))
    for j in range(k):
        grad_xp[:, j:j + length, :] += dcols[:, :, j, :]
    return grad_xp[:, left:left + length, :].transpose(0, 2, 1), grad_w, grad_b


def maxpool1d_forward(x: np.ndarray, window: int, stride: int):
    """Non-overlapping max pooling. Returns ``(out, argmax)``.

    ``argmax`` holds the in-window offset of the first maximum.
    """
    if window != stride:
        raise ValueError(f"only non-overlapping pooling is supported (window={window}, stride={stride})")
    n, c, length = x.shape
    if length % stride:
        raise ShapeError(f"maxpool input length not divisible by stride {stride}", ("N", c, "k*stride"), x.shape)
    blocks = x.reshape(n, c, length // stride, window)
    arg = blocks.argmax(axis=3)
    out = np.take_along_axis(blocks, arg[..., None], axis=3)[..., 0]
    return out, arg


def maxpool1d_backward(grad_out: np.ndarray, argmax: np.ndarray, window: int) -> np.ndarray:
    n, c, m = grad_out.shape
    grad = np.zeros((n, c, m, window))
    np.put_along_axis(grad, argmax[..., None], grad_out[..., None], axis=3)
    return grad.reshape(n, c, m * window)


def mse_loss(output: np.ndarray, target: np.ndarray):
    """Mean squared reconstruction loss over a batch.

    Per sample this is ``(1/2L) * sum (out - target)^2`` over the 2L
    components; the batch value is the mean over samples and the returned
    gradient is already divided by the batch size.
    """
    output = np.asarray(output, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if output.shape != target.shape:
        raise ShapeError("mse output vs target", target.shape, output.shape)
    if output.ndim == 1:
        output, target = output[None], target[None]
    n, d = output.shape
    diff = output - target
    loss = float(np.sum(diff * diff) / (d * n))
    grad = 2.0 * diff / (d * n)
    return loss, grad


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_xent(logits: np.ndarray, labels):
    """Softmax cross-entropy averaged over the batch.

    Returns ``(loss, probabilities, grad_logits)``.  Accepts a single logit
    vector with an integer label as well.
    """
    logits = np.asarray(logits, dtype=np.float64)
    single = logits.ndim == 1
    if single:
        logits = logits[None]
    labels = np.atleast_1d(np.asarray(labels))
    n, k = logits.shape
    if labels.shape != (n,):
        raise ShapeError("softmax_xent labels", (n,), labels.shape)
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"class index out of range 0..{k - 1}: {labels}")
    probs = softmax(logits)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(log_norm - shifted[rows, labels]))
    grad = probs.copy()
    grad[rows, labels] -= 1.0
    grad /= n
    if single:
        return loss, probs[0], grad[0]
    return loss, probs, grad


# --------------------------------------------------------------------------
# Layer objects


class Layer:
    params: tuple = ()
    kind = "layer"

    def forward(self, x, train=False, rng=None):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def spec(self) -> dict:
        return {"kind": self.kind}


class Conv1D(Layer):
    kind = "conv1d"

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, name: str = "conv"):
        if min(in_channels, out_channels, kernel_size) < 1:
            raise ValueError("conv1d dimensions must be >= 1")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.weight = Param(f"{name}.weight", np.zeros((out_channels, in_channels, kernel_size)))
        self.bias = Param(f"{name}.bias", np.zeros(out_channels))
        self.params = (self.weight, self.bias)
        self._x = None

    @property
    def fan_in(self):
        return self.in_channels * self.kernel_size

    def forward(self, x, train=False, rng=None):
        self._x = x
        cache = []
        out = conv1d_forward(x, self.weight.value, self.bias.value, _cols_out=cache)
        self._cols = cache[0]
        return out

    def backward(self, grad):
        if self._x is None:
            raise RuntimeError("conv1d backward called without a cached forward input")
        gx, gw, gb = conv1d_backward(grad, self._x, self.weight.value, self._cols)
        self.weight.grad += gw
        self.bias.grad += gb
        return gx

    def spec(self):
        return {"kind": self.kind, "in_channels": self.in_channels,
                "out_channels": self.out_channels, "kernel_size": self.kernel_size,
                "stride": 1, "padding": "same"}


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, train=False, rng=None):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, grad):
        # subgradient at exactly 0 is 0
        return np.where(self._mask, grad, 0.0)


class MaxPool1D(Layer):
    kind = "maxpool1d"

    def __init__(self, window: int, stride: int | None = None):
        stride = window if stride is None else stride
        if window < 1 or stride < 1:
            raise ValueError("pool window and stride must be >= 1")
        if window != stride:
            raise ValueError("overlapping pooling windows are not supported")
        self.window = window
        self.stride = stride

    def forward(self, x, train=False, rng=None):
        out, self._arg = maxpool1d_forward(x, self.window, self.stride)
        return out

    def backward(self, grad):
        return maxpool1d_backward(grad, self._arg, self.window)

    def spec(self):
        return {"kind": self.kind, "window": self.window, "stride": self.stride}


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x, train=False, rng=None):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._shape)


class Dense(Layer):
    kind = "dense"

    def __init__(self, in_dim: int, out_dim: int, name: str = "dense"):
        if in_dim < 1 or out_dim < 1:
            raise ValueError("dense dimensions must be >= 1")
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = Param(f"{name}.weight", np.zeros((out_dim, in_dim)))
        self.bias = Param(f"{name}.bias", np.zeros(out_dim))
        self.params = (self.weight, self.bias)
        self._x = None

    @property
    def fan_in(self):
        return self.in_dim

    def forward(self, x, train=False, rng=None):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None]
            squeeze = True
        else:
            squeeze = False
        if x.shape[1] != self.in_dim:
            raise ShapeError("dense input", ("N", self.in_dim), x.shape)
        self._x = x
        out = x @ self.weight.value.T + self.bias.value
        return out[0] if squeeze else out

    def backward(self, grad):
        if self._x is None:
            raise RuntimeError("dense backward called without a cached forward input")
        self.weight.grad += grad.T @ self._x
        self.bias.grad += grad.sum(axis=0)
        return grad @ self.weight.value

    def spec(self):
        return {"kind": self.kind, "in_dim": self.in_dim, "out_dim": self.out_dim}


class Dropout(Layer):
    """Inverted dropout: survivors are scaled by ``1/(1-rate)`` during training."""

    kind = "dropout"

    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate
        self.frozen_mask = None
        self._mask = None

    def forward(self, x, train=False, rng=None):
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        if self.frozen_mask is not None:
            mask = self.frozen_mask
        else:
            if rng is None:
                raise ValueError("dropout in training mode needs an rng")
            keep = rng.random(x.shape) >= self.rate
            mask = keep / (1.0 - self.rate)
        self._mask = mask
        return x * mask

    def backward(self, grad):
        return grad if self._mask is None else grad * self._mask

    def spec(self):
        return {"kind": self.kind, "rate": self.rate}


class Sequential:
    def __init__(self, layers):
        self.layers = list(layers)

    def forward(self, x, train=False, rng=None):
        for layer in self.layers:
            x = layer.forward(x, train=train, rng=rng)
        return x

    __call__ = forward

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def parameters(self) -> list[Param]:
        return [p for layer in self.layers for p in layer.params]

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def spec(self) -> list[dict]:
        return [layer.spec() for layer in self.layers]


def init_uniform(model: Sequential, rng: np.random.Generator):
    """Weights ~ U[-a, a] with ``a = sqrt(1/fan_in)``; biases zero."""
    for layer in model.layers:
        if isinstance(layer, (Conv1D, Dense)):
            a = np.sqrt(1.0 / layer.fan_in)
            layer.weight.value[...] = rng.uniform(-a, a, size=layer.weight.value.shape)
            layer.bias.value[...] = 0.0


class SGD:
    """Mini-batch gradient descent, optionally with heavy-ball momentum.

    Gradients are expected to be batch means already; they are zeroed
    after each step.
    """

    def __init__(self, params, lr: float, momentum: float = 0.0):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self._velocity = [np.zeros_like(p.value) for p in self.params] if momentum else None

    def step(self):
        for i, p in enumerate(self.params):
            if self._velocity is not None:
                v = self._velocity[i]
                v *= self.momentum
                v += p.grad
                p.value -= self.lr * v
            else:
                p.value -= self.lr * p.grad
            p.zero_grad()


class Adam:
    """Adam, selectable through config; not the default."""

    def __init__(self, params, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self._m = [np.zeros_like(p.value) for p in self.params]
        self._v = [np.zeros_like(p.value) for p in self.params]
        self._t = 0

    def step(self):
        self._t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1 - b1 ** self._t
        c2 = 1 - b2 ** self._t
        for p, m, v in zip(self.params, self._m, self._v):
            m *= b1
            m += (1 - b1) * p.grad
            v *= b2
            v += (1 - b2) * p.grad ** 2
            p.value -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.zero_grad()


def make_optimizer(name: str, params, lr: float, momentum: float = 0.0):
    if name == "sgd":
        return SGD(params, lr, momentum=momentum)
    if name == "adam":
        return Adam(params, lr)
    raise ValueError(f"unknown optimizer {name!r} (expected 'sgd' or 'adam')")


def sgd_step(params, learning_rate: float):
    """One plain gradient-descent update ``w <- w - lr * grad``; zeroes grads."""
    SGD(params, learning_rate).step()
