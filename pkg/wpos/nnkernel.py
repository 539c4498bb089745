"""
Small numpy neural-network engine.

Layers: 2-D convolution (stride 1, zero padding), dense, ReLU and flatten.
A Network runs one Sequential branch per input, concatenates the flattened
branch outputs and feeds them to a Sequential head that ends in N_z logits.
Training uses softmax cross-entropy and Adam on shuffled mini-batches.

Everything is float64 and single-threaded unless data-parallel shards are
requested, in which case bitwise reproducibility is not guaranteed.
"""

from __future__ import annotations

import copy
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

log = logging.getLogger(__name__)


def check_finite(array: np.ndarray, where: str) -> np.ndarray:
    if not np.all(np.isfinite(array)):
        raise RuntimeError(f"non-finite values in {where}")
    return array


class Parameter:
    """A named weight array and its gradient."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = np.ascontiguousarray(value, dtype=float)
        self.grad = np.zeros_like(self.value)


class Layer:
    def parameters(self) -> List[Parameter]:
        return []

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Conv2D(Layer):
    """Stride-1 convolution over (batch, channels, rows, cols) inputs."""

    def __init__(self, in_channels, out_channels, kernel=(3, 3), padding=1, rng=None, name="conv"):
        kh, kw = kernel
        fan_in = in_channels * kh * kw
        limit = math.sqrt(6.0 / fan_in)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = (kh, kw)
        self.padding = padding
        self.weight = Parameter(f"{name}.weight", rng.uniform(-limit, limit, (out_channels, in_channels, kh, kw)))
        self.bias = Parameter(f"{name}.bias", np.zeros(out_channels))
        self._cache = None

    def parameters(self):
        return [self.weight, self.bias]

    def forward(self, x):
        n, c, h, w = x.shape
        if c != self.in_channels:
            raise ValueError(f"expected {self.in_channels} input channels, got {c}")
        kh, kw = self.kernel
        p = self.padding
        padded = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        windows = sliding_window_view(padded, (kh, kw), axis=(2, 3))
        rows, cols_out = windows.shape[2], windows.shape[3]
        cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * rows * cols_out, c * kh * kw)
        out = cols @ self.weight.value.reshape(self.out_channels, -1).T + self.bias.value
        self._cache = (x.shape, padded.shape, cols, rows, cols_out)
        return out.reshape(n, rows, cols_out, self.out_channels).transpose(0, 3, 1, 2)

    def backward(self, grad):
        (n, c, h, w), padded_shape, cols, rows, cols_out = self._cache
        kh, kw = self.kernel
        g = grad.transpose(0, 2, 3, 1).reshape(n * rows * cols_out, self.out_channels)
        self.weight.grad = (g.T @ cols).reshape(self.weight.value.shape)
        self.bias.grad = g.sum(axis=0)
        dcols = (g @ self.weight.value.reshape(self.out_channels, -1)).reshape(n, rows, cols_out, c, kh, kw)
        dpadded = np.zeros(padded_shape)
        for i in range(kh):
            for j in range(kw):
                dpadded[:, :, i : i + rows, j : j + cols_out] += dcols[..., i, j].transpose(0, 3, 1, 2)
        p = self.padding
        return dpadded[:, :, p : p + h, p : p + w]


class Dense(Layer):
    def __init__(self, in_features, units, rng=None, name="dense"):
        limit = math.sqrt(6.0 / in_features)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weight = Parameter(f"{name}.weight", rng.uniform(-limit, limit, (in_features, units)))
        self.bias = Parameter(f"{name}.bias", np.zeros(units))
        self._x = None

    def parameters(self):
        return [self.weight, self.bias]

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.weight.value.shape[0]:
            raise ValueError(f"dense layer expects (batch, {self.weight.value.shape[0]}), got {x.shape}")
        self._x = x
        return x @ self.weight.value + self.bias.value

    def backward(self, grad):
        self.weight.grad = self._x.T @ grad
        self.bias.grad = grad.sum(axis=0)
        return grad @ self.weight.value.T


class ReLU(Layer):
    def __init__(self):
        self._mask = None

    def forward(self, x):
        self._mask = x > 0
        return x * self._mask

    def backward(self, grad):
        return grad * self._mask


class Flatten(Layer):
    def __init__(self):
        self._shape = None

    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._shape)


class Sequential(Layer):
    def __init__(self, layers: Sequence[Layer], debug: bool = False, name: str = ""):
        self.layers = list(layers)
        self.debug = debug
        self.name = name

    def parameters(self):
        return [param for layer in self.layers for param in layer.parameters()]

    def forward(self, x):
        for index, layer in enumerate(self.layers):
            x = layer.forward(x)
            if self.debug:
                check_finite(x, f"{self.name}[{index}] {type(layer).__name__} output")
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad


class Network:
    """Branches joined by concatenation, followed by a head producing logits."""

    def __init__(self, branches: Sequence[Sequential], head: Sequential, n_classes: int):
        self.branches = list(branches)
        self.head = head
        self.n_classes = n_classes
        self._widths: List[int] = []

    def parameters(self) -> List[Parameter]:
        params = [param for branch in self.branches for param in branch.parameters()]
        return params + self.head.parameters()

    def forward(self, inputs: Sequence[np.ndarray]) -> np.ndarray:
        if len(inputs) != len(self.branches):
            raise ValueError(f"expected {len(self.branches)} inputs, got {len(inputs)}")
        outputs = [branch.forward(np.asarray(x, dtype=float)) for branch, x in zip(self.branches, inputs)]
        self._widths = [out.shape[1] for out in outputs]
        joined = outputs[0] if len(outputs) == 1 else np.concatenate(outputs, axis=1)
        return self.head.forward(joined)

    def backward(self, grad_logits: np.ndarray) -> None:
        grad = self.head.backward(grad_logits)
        splits = np.cumsum(self._widths)[:-1]
        for branch, part in zip(self.branches, np.split(grad, splits, axis=1)):
            branch.backward(part)

    def predict_proba(self, inputs: Sequence[np.ndarray]) -> np.ndarray:
        return softmax(self.forward(inputs))

    def state(self) -> Dict[str, np.ndarray]:
        return {param.name: param.value.copy() for param in self.parameters()}

    def load_state(self, state: Dict[str, np.ndarray]) -> None:
        for param in self.parameters():
            if param.name not in state:
                raise RuntimeError(f"missing weights for {param.name}")
            value = np.asarray(state[param.name], dtype=float)
            if value.shape != param.value.shape:
                raise RuntimeError(f"shape mismatch for {param.name}: {value.shape} != {param.value.shape}")
            param.value[...] = value


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy, class probabilities and d(loss)/d(logits)."""
    labels = np.asarray(labels, dtype=int)
    probs = softmax(logits)
    n = len(labels)
    picked = probs[np.arange(n), labels]
    loss = float(-np.mean(np.log(np.maximum(picked, 1e-300))))
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    return loss, probs, grad / n


class Adam:
    def __init__(self, params: Sequence[Parameter], lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(param.value) for param in self.params]
        self._v = [np.zeros_like(param.value) for param in self.params]

    def step(self) -> None:
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for param, m, v in zip(self.params, self._m, self._v):
            m *= self.beta1
            m += (1.0 - self.beta1) * param.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * param.grad ** 2
            param.value -= self.lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)


@dataclass(frozen=True)
class TrainingParams:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 256
    epochs: int = 10
    val_fraction: float = 0.1
    shards: int = 1

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 0 or self.shards < 1:
            raise ValueError("batch_size and shards must be >= 1, epochs >= 0")
        if not 0 <= self.val_fraction < 1:
            raise ValueError("val_fraction must lie in [0, 1)")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    out_channels: int = 0
    kernel: Tuple[int, int] = (3, 3)
    padding: int = 1
    units: int = 0

    def __post_init__(self):
        if self.kind not in ("conv", "relu", "flatten", "dense"):
            raise ValueError(f"unknown layer kind {self.kind!r}")


@dataclass(frozen=True)
class ModelSpec:
    """Layer configuration of a branched classifier; softmax follows the head."""

    name: str
    input_shapes: Tuple[Tuple[int, ...], ...]
    branches: Tuple[Tuple[LayerSpec, ...], ...]
    head: Tuple[LayerSpec, ...]
    n_classes: int
    seed: int = 0
    training: TrainingParams = field(default_factory=TrainingParams)

    def __post_init__(self):
        if len(self.input_shapes) != len(self.branches):
            raise ValueError("one input shape per branch is required")
        if not self.head or self.head[-1].kind != "dense" or self.head[-1].units != self.n_classes:
            raise ValueError(f"head must end in dense({self.n_classes})")

    @property
    def input_size(self) -> int:
        return int(sum(np.prod(shape) for shape in self.input_shapes))


def _build_layers(specs, shape, rng, prefix, debug) -> Tuple[Sequential, Tuple[int, ...]]:
    layers: List[Layer] = []
    for index, spec in enumerate(specs):
        name = f"{prefix}.{index}"
        if spec.kind == "conv":
            if len(shape) != 3:
                raise ValueError(f"{name}: conv needs (channels, rows, cols) input, got {shape}")
            kh, kw = spec.kernel
            layers.append(Conv2D(shape[0], spec.out_channels, (kh, kw), spec.padding, rng, name))
            shape = (
                spec.out_channels,
                shape[1] + 2 * spec.padding - kh + 1,
                shape[2] + 2 * spec.padding - kw + 1,
            )
        elif spec.kind == "dense":
            if len(shape) != 1:
                raise ValueError(f"{name}: dense needs flat input, got {shape}")
            layers.append(Dense(shape[0], spec.units, rng, name))
            shape = (spec.units,)
        elif spec.kind == "relu":
            layers.append(ReLU())
        else:
            layers.append(Flatten())
            shape = (int(np.prod(shape)),)
    return Sequential(layers, debug=debug, name=prefix), shape


def build_network(spec: ModelSpec, debug: bool = False) -> Network:
    """Instantiate a spec with He-uniform weights drawn from spec.seed."""
    rng = np.random.default_rng(spec.seed)
    branches = []
    width = 0
    for index, (layers, shape) in enumerate(zip(spec.branches, spec.input_shapes)):
        branch, out_shape = _build_layers(layers, tuple(shape), rng, f"branch{index}", debug)
        if len(out_shape) != 1:
            raise ValueError(f"branch {index} must end flat, got {out_shape}")
        branches.append(branch)
        width += out_shape[0]
    head, _ = _build_layers(spec.head, (width,), rng, "head", debug)
    return Network(branches, head, spec.n_classes)


def backward_and_step(network: Network, optimizer: Adam, inputs, labels) -> float:
    """One forward/backward pass and Adam update; returns the mean cross-entropy."""
    if len(labels) == 0:
        raise ValueError("empty batch")
    logits = network.forward(inputs)
    loss, _, grad = softmax_cross_entropy(logits, labels)
    if not math.isfinite(loss):
        raise RuntimeError(
            f"non-finite loss at step {optimizer.t + 1}: loss={loss}, max |logit|={np.nanmax(np.abs(logits)):.3g}"
        )
    network.backward(grad)
    optimizer.step()
    return loss


def _shard_gradients(network: Network, replicas: List[Network], pool, inputs, labels) -> float:
    """Average gradients of equal-weight shards computed on network replicas."""
    bounds = np.array_split(np.arange(len(labels)), len(replicas))
    master = network.parameters()

    def run(args):
        replica, index = args
        for target, source in zip(replica.parameters(), master):
            np.copyto(target.value, source.value)
        logits = replica.forward([x[index] for x in inputs])
        loss, _, grad = softmax_cross_entropy(logits, labels[index])
        replica.backward(grad)
        return loss, len(index)

    results = list(pool.map(run, [(replica, index) for replica, index in zip(replicas, bounds) if len(index)]))
    total = sum(size for _, size in results)
    for position, param in enumerate(master):
        param.grad = sum(
            replica.parameters()[position].grad * size
            for replica, (_, size) in zip(replicas, results)
        ) / total
    return sum(loss * size for loss, size in results) / total


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    loss: float
    train_acc: float
    val_acc: float


def predict(network: Network, inputs: Sequence[np.ndarray], batch_size: int = 1024) -> np.ndarray:
    n = len(inputs[0])
    out = []
    for start in range(0, n, batch_size):
        out.append(np.argmax(network.forward([x[start : start + batch_size] for x in inputs]), axis=1))
    return np.concatenate(out) if out else np.empty(0, dtype=int)


def evaluate(network: Network, inputs: Sequence[np.ndarray], labels, batch_size: int = 1024) -> float:
    labels = np.asarray(labels, dtype=int)
    if len(labels) == 0:
        return float("nan")
    return float(np.mean(predict(network, inputs, batch_size) == labels))


def train(
    network: Network,
    inputs: Sequence[np.ndarray],
    labels,
    params: TrainingParams,
    seed: int = 0,
    val_inputs: Optional[Sequence[np.ndarray]] = None,
    val_labels=None,
) -> List[EpochMetrics]:
    """Shuffled mini-batch Adam training; returns one EpochMetrics per epoch."""
    labels = np.asarray(labels, dtype=int)
    inputs = [np.asarray(x, dtype=float) for x in inputs]
    rng = np.random.default_rng(seed)
    optimizer = Adam(network.parameters(), params.learning_rate, params.beta1, params.beta2, params.eps)
    history: List[EpochMetrics] = []
    pool = None
    replicas: List[Network] = []
    if params.shards > 1:
        replicas = [copy.deepcopy(network) for _ in range(params.shards)]
        pool = ThreadPoolExecutor(max_workers=params.shards)

    try:
        for epoch in range(params.epochs):
            order = rng.permutation(len(labels))
            total_loss = 0.0
            correct = 0
            for start in range(0, len(order), params.batch_size):
                index = order[start : start + params.batch_size]
                batch = [x[index] for x in inputs]
                if pool is None:
                    loss = backward_and_step(network, optimizer, batch, labels[index])
                else:
                    loss = _shard_gradients(network, replicas, pool, batch, labels[index])
                    if not math.isfinite(loss):
                        raise RuntimeError(f"non-finite loss at step {optimizer.t + 1}")
                    optimizer.step()
                total_loss += loss * len(index)
                correct += int(np.sum(predict(network, batch) == labels[index]))
            val_acc = float("nan")
            if val_inputs is not None and val_labels is not None and len(val_labels):
                val_acc = evaluate(network, val_inputs, val_labels)
            metrics = EpochMetrics(epoch, total_loss / len(labels), correct / len(labels), val_acc)
            log.debug(
                "epoch %d loss=%.4f train_acc=%.3f val_acc=%.3f",
                epoch,
                metrics.loss,
                metrics.train_acc,
                metrics.val_acc,
            )
            history.append(metrics)
    finally:
        if pool is not None:
            pool.shutdown()
    return history


def gradient_check(network: Network, inputs: Sequence[np.ndarray], labels, h: float = 1e-5) -> float:
    """Largest relative error between analytic and central-difference gradients."""
    labels = np.asarray(labels, dtype=int)
    inputs = [np.asarray(x, dtype=float) for x in inputs]

    def loss_value():
        return softmax_cross_entropy(network.forward(inputs), labels)[0]

    _, _, grad = softmax_cross_entropy(network.forward(inputs), labels)
    network.backward(grad)
    analytic = {param.name: param.grad.copy() for param in network.parameters()}

    worst = 0.0
    for param in network.parameters():
        flat = param.value.reshape(-1)
        expected = analytic[param.name].reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            plus = loss_value()
            flat[i] = original - h
            minus = loss_value()
            flat[i] = original
            numeric = (plus - minus) / (2 * h)
            error = abs(expected[i] - numeric) / max(abs(expected[i]) + abs(numeric), 1e-6)
            worst = max(worst, error)
    return worst
