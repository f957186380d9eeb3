"""Self-attention fusion network over class-sized tokens of Delta.

Delta (N x kC) is read as k tokens of width C, each tagged with a one-hot
position. One attention head mixes the tokens, the mean token feeds a single
sigmoid unit. Parameters live in a five-layer ModelParams
(embed, query, key, value, head) so the TGKD codec and the optimizers apply
unchanged; the layers are not a feed-forward chain.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.special import expit, softmax

from fusionkd.models.model_params import Layer, ModelParams
from fusionkd.objects.errors import ConfigError
from fusionkd.objects.network import init_params

EMBED, QUERY, KEY, VALUE, HEAD = range(5)
ATTENTION_LAYERS = 5


@dataclass(frozen=True)
class _AttentionTrace:
    tokens: np.ndarray  # N x k x (C + k), position tags included
    embedded: np.ndarray
    query: np.ndarray
    key: np.ndarray
    value: np.ndarray
    weights: np.ndarray  # N x k x k, rows sum to 1
    pooled: np.ndarray
    alphas: np.ndarray


def build_attention_fusion_net(
    input_dim: int,
    token_dim: int,
    hidden: int,
    rng: np.random.Generator,
) -> ModelParams:
    if token_dim < 1 or input_dim % token_dim:
        raise ConfigError(f"Delta width {input_dim} is not a multiple of the token width {token_dim}")
    tokens = input_dim // token_dim
    return init_params(
        [token_dim + tokens] + [hidden] * 4 + [1],
        rng,
        hidden_activation="identity",
        output_activation="sigmoid",
    )


def _check(omega: ModelParams, features: np.ndarray, token_dim: int) -> Tuple[np.ndarray, int]:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim == 1:
        features = features[None, :]
    if len(omega.layers) != ATTENTION_LAYERS or omega.layers[HEAD].activation != "sigmoid":
        raise ConfigError("Attention fusion network needs embed, query, key, value and a sigmoid head")
    width = features.shape[1]
    if token_dim < 1 or width % token_dim:
        raise ConfigError(f"Delta width {width} is not a multiple of the token width {token_dim}")
    tokens = width // token_dim
    if omega.input_dim != token_dim + tokens:
        raise ConfigError(
            f"Attention fusion network expects {omega.input_dim - token_dim} tokens, Delta has {tokens}"
        )
    return features, tokens


def _affine(layer: Layer, x: np.ndarray) -> np.ndarray:
    return x @ layer.weight.T + layer.bias


def _trace(omega: ModelParams, features: np.ndarray, token_dim: int) -> _AttentionTrace:
    features, tokens = _check(omega, features, token_dim)
    n = features.shape[0]
    positions = np.broadcast_to(np.eye(tokens), (n, tokens, tokens))
    x = np.concatenate([features.reshape(n, tokens, token_dim), positions], axis=2)
    layers = omega.layers
    embedded = _affine(layers[EMBED], x)
    query = _affine(layers[QUERY], embedded)
    key = _affine(layers[KEY], embedded)
    value = _affine(layers[VALUE], embedded)
    scale = 1.0 / np.sqrt(query.shape[-1])
    weights = softmax(np.einsum("nqh,nkh->nqk", query, key) * scale, axis=-1)
    pooled = np.einsum("nqk,nkh->nqh", weights, value).mean(axis=1)
    alphas = expit(_affine(layers[HEAD], pooled))[:, 0]
    return _AttentionTrace(x, embedded, query, key, value, weights, pooled, alphas)


def attention_ratios(omega: ModelParams, features: np.ndarray, token_dim: int) -> np.ndarray:
    return _trace(omega, features, token_dim).alphas


def _linear_grads(layer: Layer, x: np.ndarray, grad_out: np.ndarray) -> Tuple[Layer, np.ndarray]:
    """(d weight, d bias) packed as a Layer, and d input, for y = x W^T + b over N x k rows."""
    grad_weight = np.einsum("nkh,nkd->hd", grad_out, x)
    grad_bias = grad_out.sum(axis=(0, 1))
    return Layer(grad_weight, grad_bias, layer.activation), grad_out @ layer.weight


def attention_backward(
    omega: ModelParams,
    features: np.ndarray,
    upstream: np.ndarray,
    token_dim: int,
) -> Tuple[ModelParams, np.ndarray]:
    """d/d omega and d/d Delta of sum_i upstream_i * alpha_i."""
    trace = _trace(omega, features, token_dim)
    layers = omega.layers
    n, tokens, _ = trace.tokens.shape
    upstream = np.asarray(upstream, dtype=np.float64).reshape(n)

    grad_logit = upstream * trace.alphas * (1.0 - trace.alphas)
    grad_head = Layer((grad_logit @ trace.pooled)[None, :], np.array([grad_logit.sum()]), layers[HEAD].activation)
    grad_pooled = grad_logit[:, None] * layers[HEAD].weight[0]
    grad_mixed = np.broadcast_to(grad_pooled[:, None, :] / tokens, trace.value.shape)

    grad_weights = np.einsum("nqh,nkh->nqk", grad_mixed, trace.value)
    grad_value_out = np.einsum("nqk,nqh->nkh", trace.weights, grad_mixed)
    grad_scores = trace.weights * (grad_weights - np.sum(grad_weights * trace.weights, axis=-1, keepdims=True))
    scale = 1.0 / np.sqrt(trace.query.shape[-1])
    grad_query_out = np.einsum("nqk,nkh->nqh", grad_scores, trace.key) * scale
    grad_key_out = np.einsum("nqk,nqh->nkh", grad_scores, trace.query) * scale

    grad_query, from_query = _linear_grads(layers[QUERY], trace.embedded, grad_query_out)
    grad_key, from_key = _linear_grads(layers[KEY], trace.embedded, grad_key_out)
    grad_value, from_value = _linear_grads(layers[VALUE], trace.embedded, grad_value_out)
    grad_embed, grad_tokens = _linear_grads(layers[EMBED], trace.tokens, from_query + from_key + from_value)

    grads = ModelParams((grad_embed, grad_query, grad_key, grad_value, grad_head))
    grad_features = grad_tokens[:, :, :token_dim].reshape(n, tokens * token_dim)
    return grads, grad_features
