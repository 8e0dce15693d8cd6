"""Layer specifications, parameter tensors and per-layer math."""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator


class LayerKind(str, Enum):
    """Supported layer kinds."""

    AFFINE = "affine"
    RELU = "relu"
    TANH = "tanh"
    SIGMOID = "sigmoid"
    CONCAT = "concat"


# Stable on-disk codes, never reorder.
KIND_CODES: dict[LayerKind, int] = {
    LayerKind.AFFINE: 0,
    LayerKind.RELU: 1,
    LayerKind.TANH: 2,
    LayerKind.SIGMOID: 3,
    LayerKind.CONCAT: 4,
}
CODE_KINDS = {code: kind for kind, code in KIND_CODES.items()}


class LayerSpec(BaseModel):
    """Declarative description of one layer.

    A concat layer appends a side input of width ``out_dim - in_dim``
    supplied at forward time.
    """

    model_config = ConfigDict(frozen=True)

    kind: LayerKind
    in_dim: int
    out_dim: int

    @model_validator(mode="after")
    def _check_dims(self) -> "LayerSpec":
        if self.in_dim <= 0 or self.out_dim <= 0:
            raise ValueError(f"{self.kind.value} layer needs positive dims, got {self.in_dim}->{self.out_dim}")
        if self.kind in (LayerKind.RELU, LayerKind.TANH, LayerKind.SIGMOID) and self.in_dim != self.out_dim:
            raise ValueError(f"activation {self.kind.value} must preserve width")
        if self.kind == LayerKind.CONCAT and self.out_dim <= self.in_dim:
            raise ValueError("concat layer must widen its input")
        return self

    @property
    def has_params(self) -> bool:
        return self.kind == LayerKind.AFFINE

    @property
    def side_dim(self) -> int:
        return self.out_dim - self.in_dim if self.kind == LayerKind.CONCAT else 0


def affine(in_dim: int, out_dim: int) -> LayerSpec:
    return LayerSpec(kind=LayerKind.AFFINE, in_dim=in_dim, out_dim=out_dim)


def activation(kind: LayerKind, width: int) -> LayerSpec:
    return LayerSpec(kind=kind, in_dim=width, out_dim=width)


def concat(in_dim: int, side_dim: int) -> LayerSpec:
    return LayerSpec(kind=LayerKind.CONCAT, in_dim=in_dim, out_dim=in_dim + side_dim)


@dataclass
class ParamTensor:
    """Flat float64 parameter storage with a matching gradient buffer."""

    shape: tuple[int, ...]
    values: np.ndarray
    grad: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.shape = tuple(int(d) for d in self.shape)
        self.values = np.ascontiguousarray(self.values, dtype=np.float64).reshape(-1)
        if self.values.size != int(np.prod(self.shape)):
            raise ValueError(f"values length {self.values.size} does not match shape {self.shape}")
        self.grad = np.zeros_like(self.values)

    @classmethod
    def zeros(cls, shape: tuple[int, ...]) -> "ParamTensor":
        return cls(shape, np.zeros(int(np.prod(shape))))

    @property
    def array(self) -> np.ndarray:
        """Shaped view onto ``values``; in-place edits write through."""
        return self.values.reshape(self.shape)

    @property
    def grad_array(self) -> np.ndarray:
        return self.grad.reshape(self.shape)

    def zero_grad(self) -> None:
        self.grad[:] = 0.0

    @property
    def size(self) -> int:
        return self.values.size


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def tanh(x: np.ndarray) -> np.ndarray:
    return np.tanh(x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form is overflow-free and gives exactly 0.5 at 0
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def activation_forward(kind: LayerKind, x: np.ndarray) -> np.ndarray:
    if kind == LayerKind.RELU:
        return relu(x)
    if kind == LayerKind.TANH:
        return tanh(x)
    if kind == LayerKind.SIGMOID:
        return sigmoid(x)
    raise ValueError(f"{kind.value} is not an activation")


def activation_backward(kind: LayerKind, x: np.ndarray, y: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the activation input given its input ``x`` and output ``y``."""
    if kind == LayerKind.RELU:
        return grad * (x > 0.0)
    if kind == LayerKind.TANH:
        return grad * (1.0 - y * y)
    if kind == LayerKind.SIGMOID:
        return grad * y * (1.0 - y)
    raise ValueError(f"{kind.value} is not an activation")
