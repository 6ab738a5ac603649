"""Small feed-forward networks stored as one flat float64 vector.

The flat vector is the unit exchanged during federation and written to
checkpoints. Ordering is layer-major; inside a layer the ``(fan_in, fan_out)``
weight matrix comes first in row-major order, then the ``fan_out`` biases.

Checkpoint format (version 1, all little-endian)::

    b"FPNV"  uint32 version  uint32 head  uint32 n_sizes  uint32 sizes[n_sizes]
    float64 values[...]

``head`` is 0 for a linear output and 1 for softmax.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .errors import ContractViolation

HEADS = ("linear", "softmax")
CHECKPOINT_MAGIC = b"FPNV"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class NetworkSpec:
    """Layer widths from input to output plus the output head.

    Hidden layers always use ReLU.
    """

    layer_sizes: tuple[int, ...]
    output_head: str = "linear"

    def __post_init__(self) -> None:
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2:
            raise ContractViolation("a network needs at least an input and an output layer")
        if any(s < 1 for s in sizes):
            raise ContractViolation(f"layer sizes must be >= 1, got {sizes}")
        if self.output_head not in HEADS:
            raise ContractViolation(f"output_head must be one of {HEADS}")

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_params(self) -> int:
        s = self.layer_sizes
        return sum(s[k] * s[k + 1] + s[k + 1] for k in range(len(s) - 1))

    @classmethod
    def mlp(cls, n_inputs: int, hidden: Sequence[int], n_outputs: int, head: str = "linear") -> "NetworkSpec":
        return cls((n_inputs, *hidden, n_outputs), head)


@dataclass
class ParameterVector:
    values: np.ndarray
    spec: NetworkSpec

    def __post_init__(self) -> None:
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or self.values.size != self.spec.n_params:
            raise ContractViolation(
                f"expected {self.spec.n_params} parameters for {self.spec.layer_sizes}, "
                f"got shape {self.values.shape}"
            )

    def __len__(self) -> int:
        return self.values.size

    def copy(self) -> "ParameterVector":
        return ParameterVector(self.values.copy(), self.spec)

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """(weight, bias) views per layer; weights are (fan_in, fan_out)."""
        out = []
        off = 0
        s = self.spec.layer_sizes
        for k in range(len(s) - 1):
            fi, fo = s[k], s[k + 1]
            w = self.values[off:off + fi * fo].reshape(fi, fo)
            off += fi * fo
            out.append((w, self.values[off:off + fo]))
            off += fo
        return out

    def checksum(self) -> str:
        return hashlib.sha256(self.values.astype("<f8").tobytes()).hexdigest()[:16]


def init_params(spec: NetworkSpec, rng: np.random.Generator) -> ParameterVector:
    """Glorot-uniform weights, zero biases."""
    values = np.zeros(spec.n_params)
    off = 0
    s = spec.layer_sizes
    for k in range(len(s) - 1):
        fi, fo = s[k], s[k + 1]
        limit = np.sqrt(6.0 / (fi + fo))
        values[off:off + fi * fo] = rng.uniform(-limit, limit, size=fi * fo)
        off += fi * fo + fo
    return ParameterVector(values, spec)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _as_batch(params: ParameterVector, x) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != params.spec.n_inputs:
        raise ContractViolation(
            f"input of shape {np.shape(x)} does not match {params.spec.n_inputs} network inputs"
        )
    return arr, single


def logits(params: ParameterVector, x) -> np.ndarray:
    """Raw output-layer values, before the head is applied."""
    batch, single = _as_batch(params, x)
    out = kernels.mlp_forward(params.values, params.spec.layer_sizes, batch)[-1]
    return out[0] if single else out


def forward(params: ParameterVector, x) -> np.ndarray:
    """Network output for one input vector or a batch (rows)."""
    z = logits(params, x)
    if params.spec.output_head == "softmax":
        return softmax(z)
    return z


def gradient(params: ParameterVector, x, upstream, *, at_logits: bool = False) -> ParameterVector:
    """Exact gradient of a scalar loss given its gradient at the network output.

    ``upstream`` has the shape of ``forward(params, x)``. For a batch the
    per-sample gradients are summed. With ``at_logits=True`` the upstream
    gradient is taken w.r.t. the pre-head logits, which skips the softmax
    Jacobian (both coincide for a linear head).
    """
    batch, single = _as_batch(params, x)
    g = np.asarray(upstream, dtype=np.float64)
    if single:
        g = g[None, :] if g.ndim == 1 else g
    if g.shape != (batch.shape[0], params.spec.n_outputs):
        raise ContractViolation(f"upstream gradient shape {np.shape(upstream)} does not match the output")
    sizes = params.spec.layer_sizes
    acts = kernels.mlp_forward(params.values, sizes, batch)
    if params.spec.output_head == "softmax" and not at_logits:
        p = softmax(acts[-1])
        g = p * (g - (g * p).sum(axis=1, keepdims=True))
    grad = kernels.mlp_backward(params.values, sizes, batch, acts, g)
    return ParameterVector(grad, params.spec)


def sgd_step(params: ParameterVector, grad: ParameterVector, lr: float) -> ParameterVector:
    if lr <= 0:
        raise ContractViolation(f"learning rate must be positive, got {lr}")
    if grad.spec != params.spec:
        raise ContractViolation("gradient and parameters have different network specs")
    return ParameterVector(params.values - lr * grad.values, params.spec)


def flatten(params: ParameterVector) -> np.ndarray:
    return params.values.copy()


def unflatten(values, spec: NetworkSpec) -> ParameterVector:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size != spec.n_params:
        raise ContractViolation(f"flat vector of length {arr.size} does not fit spec {spec.layer_sizes}")
    return ParameterVector(arr.copy(), spec)


def save_params(path, params: ParameterVector) -> None:
    sizes = params.spec.layer_sizes
    header = struct.pack(
        f"<4sIII{len(sizes)}I",
        CHECKPOINT_MAGIC,
        CHECKPOINT_VERSION,
        HEADS.index(params.spec.output_head),
        len(sizes),
        *sizes,
    )
    Path(path).write_bytes(header + params.values.astype("<f8").tobytes())


def load_params(path) -> ParameterVector:
    raw = Path(path).read_bytes()
    magic, version, head, n = struct.unpack_from("<4sIII", raw, 0)
    if magic != CHECKPOINT_MAGIC or version != CHECKPOINT_VERSION:
        raise ContractViolation(f"{path} is not a version-{CHECKPOINT_VERSION} parameter checkpoint")
    sizes = struct.unpack_from(f"<{n}I", raw, 16)
    spec = NetworkSpec(tuple(sizes), HEADS[head])
    values = np.frombuffer(raw, dtype="<f8", offset=16 + 4 * n)
    return unflatten(values.astype(np.float64), spec)


def forward_cache(params: ParameterVector, batch: np.ndarray) -> list[np.ndarray]:
    """Layer outputs for a 2-D batch, reusable by :func:`backprop`."""
    return kernels.mlp_forward(params.values, params.spec.layer_sizes, batch)


def backprop(params: ParameterVector, batch: np.ndarray, acts: list[np.ndarray], upstream_logits: np.ndarray) -> np.ndarray:
    """Flat gradient from a cached forward pass and a logit-space upstream gradient."""
    return kernels.mlp_backward(params.values, params.spec.layer_sizes, batch, acts, upstream_logits)
