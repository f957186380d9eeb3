"""Feed-forward evaluation, manual reverse-mode gradients and gradient checking."""

from __future__ import annotations

from typing import Callable, List, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from fusionkd.models.model_params import Layer, ModelParams
from fusionkd.objects.errors import ConfigError, NumericError
from fusionkd.objects.tensor_ops import as_tensor

# loss_fn(network_output) -> (value, d value / d output)
OutputLoss = Callable[[np.ndarray], Tuple[float, np.ndarray]]

Trace = List[Tuple[np.ndarray, np.ndarray]]


def _activate(pre: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return np.maximum(pre, 0.0)
    if activation == "sigmoid":
        return expit(pre)
    return pre


def _activation_grad(pre: np.ndarray, post: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return (pre > 0.0).astype(np.float64)
    if activation == "sigmoid":
        return post * (1.0 - post)
    return np.ones_like(pre)


def _as_batch(params: ModelParams, x) -> Tuple[np.ndarray, bool]:
    batch = as_tensor(x, name="network input")
    single = batch.ndim == 1
    if single:
        batch = batch[None, :]
    if batch.ndim != 2 or batch.shape[1] != params.input_dim:
        raise ConfigError(
            f"Input width {batch.shape[-1]} does not match network input {params.input_dim}"
        )
    return batch, single


def forward_trace(params: ModelParams, x) -> Tuple[np.ndarray, Trace]:
    """Run the network and keep (pre-activation, post-activation) per layer."""
    activations, single = _as_batch(params, x)
    trace: Trace = []
    for layer in params.layers:
        pre = activations @ layer.weight.T + layer.bias
        post = _activate(pre, layer.activation)
        trace.append((pre, post))
        activations = post
    output = activations[0] if single else activations
    return output, trace


def forward(params: ModelParams, x) -> np.ndarray:
    output, _ = forward_trace(params, x)
    return output


def backward(
    params: ModelParams,
    x,
    loss_grad_at_output,
    *,
    return_input_grad: bool = False,
) -> Union[ModelParams, Tuple[ModelParams, np.ndarray]]:
    """Exact parameter gradients given d loss / d output.

    For a batch input the per-row contributions are summed; callers that
    want a mean scale ``loss_grad_at_output`` by 1/N.
    """
    inputs, single = _as_batch(params, x)
    _, trace = forward_trace(params, inputs)
    delta = as_tensor(loss_grad_at_output, name="output gradient")
    if single:
        delta = delta.reshape(1, -1)
    if delta.shape != trace[-1][1].shape:
        raise ConfigError(
            f"Output gradient shape {delta.shape} does not match forward output {trace[-1][1].shape}"
        )

    grads: List[Layer] = []
    for index in range(len(params.layers) - 1, -1, -1):
        layer = params.layers[index]
        pre, post = trace[index]
        delta = delta * _activation_grad(pre, post, layer.activation)
        below = trace[index - 1][1] if index > 0 else inputs
        grads.append(Layer(delta.T @ below, delta.sum(axis=0), layer.activation))
        delta = delta @ layer.weight

    grad_params = ModelParams(tuple(reversed(grads)))
    if not return_input_grad:
        return grad_params
    return grad_params, (delta[0] if single else delta)


def init_params(
    sizes: Sequence[int],
    rng: np.random.Generator,
    *,
    hidden_activation: str = "relu",
    output_activation: str = "identity",
) -> ModelParams:
    """Glorot-uniform weights, zero biases."""
    if len(sizes) < 2 or any(int(size) < 1 for size in sizes):
        raise ConfigError(f"Invalid layer sizes: {list(sizes)}")
    layers: List[Layer] = []
    for index in range(len(sizes) - 1):
        fan_in, fan_out = int(sizes[index]), int(sizes[index + 1])
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weight = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        is_last = index == len(sizes) - 2
        layers.append(
            Layer(weight, np.zeros(fan_out), output_activation if is_last else hidden_activation)
        )
    return ModelParams(tuple(layers))


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    if analytic.size == 0:
        return 0.0
    scale = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / scale))


def grad_check(
    params: ModelParams,
    loss_fn: OutputLoss,
    x,
    eps: float = 1e-5,
) -> float:
    """Max relative error between backward() and central finite differences."""
    if not 1e-8 < eps < 1e-3:
        raise ConfigError(f"grad_check eps must lie in (1e-8, 1e-3), got {eps}")
    _, upstream = loss_fn(forward(params, x))
    analytic = backward(params, x, upstream).flat()

    base = params.flat()
    numeric = np.empty_like(base)
    for index in range(base.size):
        bumped = base.copy()
        bumped[index] = base[index] + eps
        plus, _ = loss_fn(forward(params.with_flat(bumped), x))
        bumped[index] = base[index] - eps
        minus, _ = loss_fn(forward(params.with_flat(bumped), x))
        numeric[index] = (plus - minus) / (2.0 * eps)
    if not np.all(np.isfinite(numeric)):
        raise NumericError("Finite differences produced non-finite values")
    return relative_error(analytic, numeric)


def logit_grad_check(
    loss_fn: OutputLoss,
    logits,
    eps: float = 1e-5,
) -> float:
    """Same diagnostic for a loss taken directly w.r.t. a logit vector."""
    z = as_tensor(logits, name="logits")
    identity = ModelParams((Layer(np.eye(z.size), np.zeros(z.size), "identity"),))
    # d/d(bias) of an identity layer at input z equals d/dz.
    return grad_check(identity, loss_fn, z, eps)
