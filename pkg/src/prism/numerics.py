"""Dense feedforward nets with exact reverse-mode gradients.

Everything is float64. A net maps ``B x d_in`` inputs to ``B x d_out``
outputs through affine layers with ReLU between them and no activation on
the final layer. Parameters follow the ``y = x @ W + b`` convention, so a
layer's weight matrix has shape ``(fan_in, fan_out)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InputError, NumericError, ShapeError


@dataclass
class FeedforwardNet:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ShapeError("need one bias per weight matrix and at least one layer")
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in self.biases]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ShapeError(f"layer {i}: weight {w.shape} and bias {b.shape} disagree")
            if i and w.shape[0] != self.weights[i - 1].shape[1]:
                raise ShapeError(f"layer {i} expects {w.shape[0]} inputs, previous emits "
                                 f"{self.weights[i - 1].shape[1]}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise NumericError(f"layer {i} has non-finite parameters")

    @classmethod
    def init(cls, layer_dims: Sequence[int], rng: np.random.Generator) -> "FeedforwardNet":
        """Glorot-uniform weights, zero biases."""
        dims = [int(d) for d in layer_dims]
        if len(dims) < 2 or min(dims) < 1:
            raise InputError(f"layer_dims must list >= 2 positive sizes, got {layer_dims}")
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def params(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def copy(self) -> "FeedforwardNet":
        return FeedforwardNet([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def num_params(self) -> int:
        return sum(p.size for p in self.params())

    def equals(self, other: "FeedforwardNet") -> bool:
        """Bit-identical parameters."""
        mine, theirs = self.params(), other.params()
        return len(mine) == len(theirs) and all(
            a.shape == b.shape and np.array_equal(a, b) for a, b in zip(mine, theirs))

    def __call__(self, inputs) -> np.ndarray:
        return net_forward(self, inputs)


@dataclass
class GradientSet:
    """Per-parameter gradients, shaped like the net they belong to."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def zeros_like(cls, net: FeedforwardNet) -> "GradientSet":
        return cls([np.zeros_like(w) for w in net.weights], [np.zeros_like(b) for b in net.biases])

    def params(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def scaled(self, factor: float) -> "GradientSet":
        return GradientSet([w * factor for w in self.weights], [b * factor for b in self.biases])

    def __add__(self, other: "GradientSet") -> "GradientSet":
        return GradientSet([a + b for a, b in zip(self.weights, other.weights)],
                           [a + b for a, b in zip(self.biases, other.biases)])

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params())

    def sq_norm(self) -> float:
        return float(sum(np.sum(p * p) for p in self.params()))

    def congruent(self, net: FeedforwardNet) -> bool:
        return all(g.shape == p.shape for g, p in zip(self.params(), net.params())) and \
            len(self.weights) == len(net.weights)


@dataclass
class ForwardCache:
    inputs: np.ndarray
    pre: list[np.ndarray] = field(default_factory=list)
    post: list[np.ndarray] = field(default_factory=list)

    @property
    def output(self) -> np.ndarray:
        return self.post[-1]


def _as_batch(net: FeedforwardNet, inputs) -> np.ndarray:
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.in_dim:
        raise ShapeError(f"net expects inputs of width {net.in_dim}, got shape {np.shape(inputs)}")
    return x


def forward_cached(net: FeedforwardNet, inputs) -> ForwardCache:
    x = _as_batch(net, inputs)
    cache = ForwardCache(inputs=x)
    h = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w + b
        h = z if i == last else np.maximum(z, 0.0)
        cache.pre.append(z)
        cache.post.append(h)
    return cache


def net_forward(net: FeedforwardNet, inputs) -> np.ndarray:
    return forward_cached(net, inputs).output


def net_gradients(net: FeedforwardNet, inputs, upstream_grad,
                  cache: ForwardCache | None = None) -> tuple[GradientSet, np.ndarray]:
    """Backpropagate ``upstream_grad`` (dL/d output) through ``net``.

    Returns the parameter gradients and dL/d inputs, the latter so that
    losses defined on embeddings can be chained into an upstream encoder.
    """
    if cache is None:
        cache = forward_cached(net, inputs)
    g = np.asarray(upstream_grad, dtype=np.float64)
    if g.ndim == 1:
        g = g[None, :]
    if g.shape != cache.output.shape:
        raise ShapeError(f"upstream grad {g.shape} != output {cache.output.shape}")
    n_layers = len(net.weights)
    gw: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    gb: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    for i in range(n_layers - 1, -1, -1):
        if i != n_layers - 1:
            g = g * (cache.pre[i] > 0.0)
        below = cache.inputs if i == 0 else cache.post[i - 1]
        gw[i] = below.T @ g
        gb[i] = g.sum(axis=0)
        g = g @ net.weights[i].T
    return GradientSet(gw, gb), g


def relu_margin(net: FeedforwardNet, inputs) -> float:
    """Smallest |pre-activation| over hidden units (distance to a ReLU kink)."""
    cache = forward_cached(net, inputs)
    hidden = cache.pre[:-1]
    if not hidden:
        return np.inf
    return float(min(np.min(np.abs(z)) for z in hidden))


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, labels) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood and its gradient w.r.t. the logits."""
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] < 2:
        raise ShapeError(f"logits must be B x C with C >= 2, got {z.shape}")
    y = np.asarray(labels)
    if y.shape != (z.shape[0],):
        raise ShapeError(f"need {z.shape[0]} labels, got shape {y.shape}")
    if y.size and (y.min() < 0 or y.max() >= z.shape[1]):
        raise InputError(f"labels must lie in [0, {z.shape[1]})")
    if not np.all(np.isfinite(z)):
        raise NumericError("non-finite logits")
    b = z.shape[0]
    if b == 0:
        return 0.0, np.zeros_like(z)
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(b)
    loss = float(np.mean(log_norm - shifted[rows, y]))
    grad = np.exp(shifted - log_norm[:, None])
    grad[rows, y] -= 1.0
    return max(loss, 0.0), grad / b


def contrastive_pair_loss(d, u, margin: float):
    """Per-pair margin contrastive term and its derivative in ``d``.

    ``u`` is 1 for pairs that should be pulled together and 0 for pairs
    that should sit at least ``margin`` apart. Works elementwise on arrays;
    the derivative at ``d == margin`` for a negative pair is taken as 0.
    """
    if margin <= 0:
        raise InputError(f"margin must be positive, got {margin}")
    d_arr = np.asarray(d, dtype=np.float64)
    u_arr = np.asarray(u, dtype=np.float64)
    if np.any(d_arr < 0):
        raise InputError("distances must be nonnegative")
    if not np.all((u_arr == 0) | (u_arr == 1)):
        raise InputError("u must be 0 or 1")
    gap = np.maximum(margin - d_arr, 0.0)
    loss = u_arr * d_arr ** 2 + (1.0 - u_arr) * gap ** 2
    dloss = 2.0 * u_arr * d_arr - 2.0 * (1.0 - u_arr) * gap
    if loss.ndim == 0:
        return float(loss), float(dloss)
    return loss, dloss


def sgd_step(net: FeedforwardNet, grads: GradientSet, lr: float) -> FeedforwardNet:
    """Return a new net with ``theta - lr * grad`` applied."""
    if lr < 0:
        raise InputError(f"learning rate must be nonnegative, got {lr}")
    if not grads.congruent(net):
        raise ShapeError("gradient set does not match net")
    if not grads.is_finite():
        raise NumericError("non-finite gradient")
    return FeedforwardNet([w - lr * g for w, g in zip(net.weights, grads.weights)],
                          [b - lr * g for b, g in zip(net.biases, grads.biases)])


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst: tuple[int, tuple[int, ...]] | None
    n_checked: int
    tolerance: float
    excluded: bool = False

    @property
    def passed(self) -> bool:
        return not self.excluded and self.max_rel_error < self.tolerance


def finite_difference_check(params: FeedforwardNet | Sequence[np.ndarray],
                            loss_fn: Callable[[], float],
                            analytic: GradientSet | Sequence[np.ndarray],
                            tolerance: float = 1e-4,
                            step: float = 1e-5,
                            floor: float = 1e-6,
                            at_kink: Callable[[], bool] | None = None) -> GradCheckReport:
    """Compare analytic gradients with central differences.

    ``loss_fn`` is re-evaluated after every in-place perturbation of
    ``params``; each parameter is restored afterwards. Relative error is
    ``|a - n| / max(|a|, |n|, floor)``. The floor keeps exactly-zero
    gradients (e.g. an output bias under a translation-invariant loss) from
    failing on round-off: a central difference of a loss of size ~1 carries
    about ``eps / step`` ~ 1e-11 of noise, below ``tolerance * floor``. If ``at_kink`` reports that the base
    point sits on a non-differentiable point the check is skipped and the
    report is marked excluded.
    """
    arrays = params.params() if isinstance(params, FeedforwardNet) else list(params)
    grads = analytic.params() if isinstance(analytic, GradientSet) else list(analytic)
    if len(arrays) != len(grads) or any(a.shape != g.shape for a, g in zip(arrays, grads)):
        raise ShapeError("analytic gradient does not match parameters")
    if at_kink is not None and at_kink():
        return GradCheckReport(np.nan, None, 0, tolerance, excluded=True)
    base = loss_fn()
    if not np.isfinite(base):
        raise NumericError(f"loss is not finite: {base}")
    worst_err, worst, count = 0.0, None, 0
    for k, (arr, grad) in enumerate(zip(arrays, grads)):
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + step
            up = loss_fn()
            arr[idx] = orig - step
            down = loss_fn()
            arr[idx] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise NumericError(f"loss became non-finite perturbing parameter {k}{idx}")
            numeric = (up - down) / (2.0 * step)
            a = float(grad[idx])
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            count += 1
            if err > worst_err:
                worst_err, worst = err, (k, idx)
    return GradCheckReport(worst_err, worst, count, tolerance)
