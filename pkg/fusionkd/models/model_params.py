"""Layered network parameters and their TGKD binary codec."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Tuple, Union

import numpy as np

from fusionkd.objects.errors import ConfigError, DataError, NumericError

PARAMS_MAGIC = b"TGKD"
PARAMS_FORMAT_VERSION = 1

ACTIVATIONS: Tuple[str, ...] = ("identity", "relu", "sigmoid")
ACTIVATION_TAGS: Dict[str, int] = {name: tag for tag, name in enumerate(ACTIVATIONS)}

_U32 = struct.Struct("<I")


@dataclass(frozen=True)
class Layer:
    weight: np.ndarray
    bias: np.ndarray
    activation: str = "identity"

    def __post_init__(self) -> None:
        weight = np.ascontiguousarray(self.weight, dtype=np.float64)
        bias = np.ascontiguousarray(self.bias, dtype=np.float64)
        if weight.ndim != 2:
            raise ConfigError(f"Layer weight must be 2-D, got shape {weight.shape}")
        if bias.shape != (weight.shape[0],):
            raise ConfigError(
                f"Layer bias shape {bias.shape} does not match weight rows {weight.shape[0]}"
            )
        if self.activation not in ACTIVATION_TAGS:
            raise ConfigError(f"Unknown activation: {self.activation}")
        if not (np.all(np.isfinite(weight)) and np.all(np.isfinite(bias))):
            raise NumericError("Layer parameters contain non-finite values")
        object.__setattr__(self, "weight", weight)
        object.__setattr__(self, "bias", bias)

    @property
    def fan_in(self) -> int:
        return int(self.weight.shape[1])

    @property
    def fan_out(self) -> int:
        return int(self.weight.shape[0])


@dataclass(frozen=True)
class ModelParams:
    """Ordered affine+activation layers; houses the student, teacher and fusion net."""

    layers: Tuple[Layer, ...]

    def __post_init__(self) -> None:
        layers = tuple(self.layers)
        if not layers:
            raise ConfigError("ModelParams needs at least one layer")
        for index in range(1, len(layers)):
            if layers[index].fan_in != layers[index - 1].fan_out:
                raise ConfigError(
                    f"Layer {index} expects {layers[index].fan_in} inputs "
                    f"but layer {index - 1} emits {layers[index - 1].fan_out}"
                )
        object.__setattr__(self, "layers", layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].fan_in

    @property
    def output_dim(self) -> int:
        return self.layers[-1].fan_out

    @property
    def size(self) -> int:
        return sum(layer.weight.size + layer.bias.size for layer in self.layers)

    def layer_sizes(self) -> List[int]:
        return [self.input_dim] + [layer.fan_out for layer in self.layers]

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "ModelParams":
        return ModelParams(
            tuple(
                Layer(fn(layer.weight), fn(layer.bias), layer.activation)
                for layer in self.layers
            )
        )

    def zip_map(
        self,
        other: "ModelParams",
        fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
    ) -> "ModelParams":
        if self.layer_sizes() != other.layer_sizes():
            raise ConfigError("ModelParams shapes differ")
        return ModelParams(
            tuple(
                Layer(fn(a.weight, b.weight), fn(a.bias, b.bias), a.activation)
                for a, b in zip(self.layers, other.layers)
            )
        )

    def zeros_like(self) -> "ModelParams":
        return self.map(np.zeros_like)

    def flat(self) -> np.ndarray:
        parts: List[np.ndarray] = []
        for layer in self.layers:
            parts.append(layer.weight.ravel())
            parts.append(layer.bias)
        return np.concatenate(parts)

    def with_flat(self, vector: np.ndarray) -> "ModelParams":
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (self.size,):
            raise ConfigError(f"Flat vector has {vector.size} entries, expected {self.size}")
        layers: List[Layer] = []
        offset = 0
        for layer in self.layers:
            n_weight = layer.weight.size
            weight = vector[offset : offset + n_weight].reshape(layer.weight.shape)
            offset += n_weight
            bias = vector[offset : offset + layer.fan_out]
            offset += layer.fan_out
            layers.append(Layer(weight.copy(), bias.copy(), layer.activation))
        return ModelParams(tuple(layers))

    def to_bytes(self) -> bytes:
        chunks = [PARAMS_MAGIC, _U32.pack(PARAMS_FORMAT_VERSION), _U32.pack(len(self.layers))]
        for layer in self.layers:
            rows, cols = layer.weight.shape
            chunks.append(_U32.pack(rows))
            chunks.append(_U32.pack(cols))
            chunks.append(_U32.pack(ACTIVATION_TAGS[layer.activation]))
            chunks.append(layer.weight.astype("<f8").tobytes(order="C"))
            chunks.append(layer.bias.astype("<f8").tobytes())
        return b"".join(chunks)

    @classmethod
    def from_bytes(cls, payload: bytes) -> "ModelParams":
        if payload[:4] != PARAMS_MAGIC:
            raise DataError("Not a TGKD params file (bad magic)")
        offset = 4
        (version,) = _U32.unpack_from(payload, offset)
        offset += 4
        if version != PARAMS_FORMAT_VERSION:
            raise DataError(f"Unsupported TGKD format version: {version}")
        (count,) = _U32.unpack_from(payload, offset)
        offset += 4
        layers: List[Layer] = []
        try:
            for _ in range(count):
                rows, cols, tag = struct.unpack_from("<III", payload, offset)
                offset += 12
                weight = np.frombuffer(payload, dtype="<f8", count=rows * cols, offset=offset)
                offset += 8 * rows * cols
                bias = np.frombuffer(payload, dtype="<f8", count=rows, offset=offset)
                offset += 8 * rows
                if tag >= len(ACTIVATIONS):
                    raise DataError(f"Unknown activation tag: {tag}")
                layers.append(
                    Layer(weight.reshape(rows, cols).astype(np.float64), bias.astype(np.float64), ACTIVATIONS[tag])
                )
        except (struct.error, ValueError) as exc:
            if isinstance(exc, DataError):
                raise
            raise DataError(f"Truncated TGKD params file: {exc}") from exc
        if offset != len(payload):
            raise DataError("Trailing bytes after TGKD params payload")
        return cls(tuple(layers))

    def save(self, path: Union[str, Path]) -> Path:
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(self.to_bytes())
        return target

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ModelParams":
        source = Path(path)
        if not source.exists():
            raise DataError(f"Params file not found: {source}")
        return cls.from_bytes(source.read_bytes())
