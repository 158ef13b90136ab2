"""Small trainable feature encoder: an MLP with rectifier hidden layers and a
linear output, hand-rolled forward/backward, and momentum SGD with a
step-decay learning-rate schedule.

Gradient conventions: parameter gradients returned by backward are for the
MEAN loss over the batch; the diagnostic input gradient is per sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, InputError
from .numerics import as_matrix, as_vector


@dataclass
class EncoderParams:
    sizes: tuple[int, ...]          # (n_in, h_1, ..., d)
    weights: list                  # weights[l]: (sizes[l+1], sizes[l])
    biases: list                   # biases[l]: (sizes[l+1],)
    version: int = 0               # bumped by sgd_step; guards stale caches

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        if len(self.sizes) < 2 or any(s < 1 for s in self.sizes):
            raise InputError("need at least input and output sizes, all positive")
        if len(self.weights) != len(self.sizes) - 1 or len(self.biases) != len(self.weights):
            raise InputError("one weight matrix and bias vector per layer required")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            w = as_matrix(w)
            b = as_vector(b) if len(b) else np.asarray(b, dtype=np.float64)
            if w.shape != (self.sizes[l + 1], self.sizes[l]) or b.shape != (self.sizes[l + 1],):
                raise InputError(f"layer {l} shapes do not match sizes")
            self.weights[l] = w
            self.biases[l] = b

    @property
    def n_in(self) -> int:
        return self.sizes[0]

    @property
    def dim(self) -> int:
        return self.sizes[-1]


@dataclass
class ForwardCache:
    params: EncoderParams = field(repr=False)
    version: int
    inputs: list = field(repr=False)   # inputs[l]: (n, sizes[l]) input to layer l


@dataclass
class EncoderGrads:
    d_weights: list
    d_biases: list
    d_input: np.ndarray   # (n, n_in), per-sample


@dataclass
class OptimState:
    learning_rate: float
    momentum: float
    schedule: tuple            # ((epoch, multiplier), ...), cumulative
    v_weights: list
    v_biases: list

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise InputError("learning rate must be positive")
        if not (0.0 <= self.momentum < 1.0):
            raise InputError("momentum must lie in [0, 1)")
        self.schedule = tuple((int(e), float(m)) for e, m in self.schedule)

    def effective_lr(self, epoch: int) -> float:
        lr = self.learning_rate
        for threshold, mult in self.schedule:
            if epoch >= threshold:
                lr *= mult
        return lr


def init_params(sizes, rng: np.random.Generator) -> EncoderParams:
    """Weights uniform in +-1/sqrt(fan_in), biases zero."""
    sizes = tuple(int(s) for s in sizes)
    weights, biases = [], []
    for l in range(len(sizes) - 1):
        bound = 1.0 / np.sqrt(sizes[l])
        weights.append(rng.uniform(-bound, bound, size=(sizes[l + 1], sizes[l])))
        biases.append(np.zeros(sizes[l + 1]))
    return EncoderParams(sizes=sizes, weights=weights, biases=biases)


def make_optim(params: EncoderParams, learning_rate: float, momentum: float = 0.9,
               schedule=()) -> OptimState:
    return OptimState(
        learning_rate=learning_rate, momentum=momentum, schedule=tuple(schedule),
        v_weights=[np.zeros_like(w) for w in params.weights],
        v_biases=[np.zeros_like(b) for b in params.biases],
    )


def forward_batch(params: EncoderParams, X) -> tuple[np.ndarray, ForwardCache]:
    X = as_matrix(X)
    if X.shape[1] != params.n_in:
        raise InputError(f"input dim {X.shape[1]} != encoder n_in {params.n_in}")
    inputs = [X]
    a = X
    last = len(params.weights) - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = a @ w.T + b
        a = h if l == last else np.maximum(h, 0.0)
        if l != last:
            inputs.append(a)
    return a, ForwardCache(params=params, version=params.version, inputs=inputs)


def forward(params: EncoderParams, x) -> tuple[np.ndarray, ForwardCache]:
    z, cache = forward_batch(params, as_vector(x)[None, :])
    return z[0], cache


def backward_batch(params: EncoderParams, cache: ForwardCache, grad_Z) -> EncoderGrads:
    if cache.params is not params or cache.version != params.version:
        raise ContractViolation("stale forward cache: parameters changed since forward")
    grad_Z = as_matrix(grad_Z)
    n = grad_Z.shape[0]
    if grad_Z.shape != (n, params.dim) or len(cache.inputs[0]) != n:
        raise InputError("grad_Z must be (batch, d) matching the cached forward")
    d_weights = [None] * len(params.weights)
    d_biases = [None] * len(params.biases)
    delta = grad_Z
    for l in range(len(params.weights) - 1, -1, -1):
        d_weights[l] = delta.T @ cache.inputs[l] / n
        d_biases[l] = delta.sum(axis=0) / n
        delta = delta @ params.weights[l]
        if l > 0:
            delta = delta * (cache.inputs[l] > 0)
    return EncoderGrads(d_weights=d_weights, d_biases=d_biases, d_input=delta)


def backward(params: EncoderParams, cache: ForwardCache, grad_z) -> EncoderGrads:
    return backward_batch(params, cache, as_vector(grad_z)[None, :])


def sgd_step(params: EncoderParams, grads: EncoderGrads, opt: OptimState, epoch: int) -> None:
    """In-place update: v <- momentum*v + g; p <- p - lr(epoch)*v."""
    lr = opt.effective_lr(epoch)
    for w, b, dw, db, vw, vb in zip(params.weights, params.biases,
                                    grads.d_weights, grads.d_biases,
                                    opt.v_weights, opt.v_biases):
        if dw.shape != w.shape or db.shape != b.shape:
            raise InputError("gradient shapes must match parameters")
        vw *= opt.momentum
        vw += dw
        w -= lr * vw
        vb *= opt.momentum
        vb += db
        b -= lr * vb
    params.version += 1


def save_checkpoint(path, params: EncoderParams) -> None:
    arrays = {"sizes": np.asarray(params.sizes, dtype=np.int64)}
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        arrays[f"w{l}"] = w
        arrays[f"b{l}"] = b
    np.savez(path, **arrays)


def load_checkpoint(path) -> EncoderParams:
    with np.load(path) as data:
        sizes = tuple(int(s) for s in data["sizes"])
        n_layers = len(sizes) - 1
        weights = [data[f"w{l}"].copy() for l in range(n_layers)]
        biases = [data[f"b{l}"].copy() for l in range(n_layers)]
    return EncoderParams(sizes=sizes, weights=weights, biases=biases)
