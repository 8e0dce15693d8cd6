"""Sequential dense network with recorded forward passes and reverse-mode gradients."""

import copy
import math
from typing import Iterator, Optional, Sequence

import numpy as np

from src.nn.exceptions import BackwardWithoutForwardError, NonFiniteValueError, ShapeError
from src.nn.layers import (
    LayerKind,
    LayerSpec,
    ParamTensor,
    activation,
    activation_backward,
    activation_forward,
    affine,
)


class Network:
    """A chain of affine, activation and concat layers.

    Inputs may be a single vector ``(in_dim,)`` or a batch ``(n, in_dim)``;
    outputs follow the same rank. Concat layers consume side inputs in
    declaration order.
    """

    def __init__(
        self,
        specs: Sequence[LayerSpec],
        rng: Optional[np.random.Generator] = None,
        name: str = "net",
    ):
        if not specs:
            raise ShapeError("a network needs at least one layer")
        for prev, nxt in zip(specs, specs[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ShapeError(
                    f"{name}: layer {prev.kind.value}({prev.in_dim}->{prev.out_dim}) "
                    f"does not feed {nxt.kind.value}({nxt.in_dim}->{nxt.out_dim})"
                )
        self.name = name
        self.specs: list[LayerSpec] = list(specs)
        self.weights: dict[int, tuple[ParamTensor, ParamTensor]] = {}
        for index, spec in enumerate(self.specs):
            if spec.kind != LayerKind.AFFINE:
                continue
            weight = ParamTensor.zeros((spec.out_dim, spec.in_dim))
            bias = ParamTensor.zeros((spec.out_dim,))
            if rng is not None:
                limit = math.sqrt(6.0 / (spec.in_dim + spec.out_dim))
                weight.values[:] = rng.uniform(-limit, limit, size=weight.size)
            self.weights[index] = (weight, bias)

        self._cache: Optional[dict] = None
        self.side_grads: list[np.ndarray] = []

    @property
    def in_dim(self) -> int:
        return self.specs[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.specs[-1].out_dim

    @property
    def side_dims(self) -> list[int]:
        return [spec.side_dim for spec in self.specs if spec.kind == LayerKind.CONCAT]

    def parameters(self) -> list[ParamTensor]:
        """Parameter tensors in declaration order (weight then bias per affine layer)."""
        params: list[ParamTensor] = []
        for index in sorted(self.weights):
            params.extend(self.weights[index])
        return params

    def affine_layers(self) -> Iterator[tuple[int, ParamTensor, ParamTensor]]:
        for index in sorted(self.weights):
            weight, bias = self.weights[index]
            yield index, weight, bias

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self) -> None:
        for param in self.parameters():
            param.zero_grad()

    def flat_values(self) -> np.ndarray:
        params = self.parameters()
        if not params:
            return np.zeros(0)
        return np.concatenate([p.values for p in params])

    def flat_grad(self) -> np.ndarray:
        params = self.parameters()
        if not params:
            return np.zeros(0)
        return np.concatenate([p.grad for p in params])

    def set_flat_values(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.num_parameters():
            raise ShapeError(f"{self.name}: expected {self.num_parameters()} values, got {flat.size}")
        offset = 0
        for param in self.parameters():
            param.values[:] = flat[offset : offset + param.size]
            offset += param.size

    def copy(self, name: Optional[str] = None) -> "Network":
        """Deep copy with independent parameters and an empty cache."""
        cache, self._cache = self._cache, None
        twin = copy.deepcopy(self)
        self._cache = cache
        twin.side_grads = []
        twin.zero_grad()
        if name is not None:
            twin.name = name
        return twin

    def same_architecture(self, other: "Network") -> bool:
        return self.specs == other.specs

    def forward(self, x: np.ndarray, sides: Sequence[np.ndarray] = ()) -> np.ndarray:
        """Evaluate the network and record the pass for a later backward call."""
        single = np.ndim(x) == 1
        h = np.array(x, dtype=np.float64, ndmin=2)
        if h.ndim != 2 or h.shape[1] != self.in_dim:
            raise ShapeError(f"{self.name}: expected input width {self.in_dim}, got shape {np.shape(x)}")
        if len(sides) != len(self.side_dims):
            raise ShapeError(f"{self.name}: expected {len(self.side_dims)} side inputs, got {len(sides)}")

        batch = h.shape[0]
        inputs: list[np.ndarray] = []
        outputs: list[np.ndarray] = []
        side_iter = iter(sides)
        for index, spec in enumerate(self.specs):
            inputs.append(h)
            if spec.kind == LayerKind.AFFINE:
                weight, bias = self.weights[index]
                h = h @ weight.array.T + bias.values
            elif spec.kind == LayerKind.CONCAT:
                side = np.atleast_2d(np.asarray(next(side_iter), dtype=np.float64))
                if side.shape != (batch, spec.side_dim):
                    raise ShapeError(
                        f"{self.name}: concat side input must be ({batch}, {spec.side_dim}), got {side.shape}"
                    )
                h = np.concatenate([h, side], axis=1)
            else:
                h = activation_forward(spec.kind, h)
            outputs.append(h)

        if not np.all(np.isfinite(h)):
            raise NonFiniteValueError(f"{self.name}: forward pass produced non-finite values")

        self._cache = {"x": inputs[0], "inputs": inputs, "outputs": outputs}
        return h[0] if single else h

    def backward(self, x: np.ndarray, output_grad: np.ndarray) -> np.ndarray:
        """Accumulate parameter gradients and return the gradient w.r.t. ``x``.

        Gradients w.r.t. concat side inputs are left in ``side_grads``.
        """
        single = np.ndim(x) == 1
        x2 = np.atleast_2d(np.asarray(x, dtype=np.float64))
        cache = self._cache
        if cache is None or cache["x"].shape != x2.shape or not np.array_equal(cache["x"], x2):
            raise BackwardWithoutForwardError(f"{self.name}: no recorded forward pass for this input")
        g = np.atleast_2d(np.asarray(output_grad, dtype=np.float64))
        if g.shape != (x2.shape[0], self.out_dim):
            raise ShapeError(f"{self.name}: output grad must be ({x2.shape[0]}, {self.out_dim}), got {g.shape}")

        side_grads: list[np.ndarray] = []
        for index in range(len(self.specs) - 1, -1, -1):
            spec = self.specs[index]
            layer_in = cache["inputs"][index]
            if spec.kind == LayerKind.AFFINE:
                weight, bias = self.weights[index]
                weight.grad_array[...] += g.T @ layer_in
                bias.grad[:] += g.sum(axis=0)
                g = g @ weight.array
            elif spec.kind == LayerKind.CONCAT:
                side_grads.append(g[:, spec.in_dim :])
                g = g[:, : spec.in_dim]
            else:
                g = activation_backward(spec.kind, layer_in, cache["outputs"][index], g)

        side_grads.reverse()
        self.side_grads = [s[0] for s in side_grads] if single else side_grads
        return g[0] if single else g


def build_mlp(
    in_dim: int,
    hidden: Sequence[int],
    out_dim: int,
    hidden_activation: LayerKind = LayerKind.RELU,
    rng: Optional[np.random.Generator] = None,
    name: str = "mlp",
) -> Network:
    """Affine/activation stack with a linear output layer."""
    specs: list[LayerSpec] = []
    width = in_dim
    for size in hidden:
        specs.append(affine(width, size))
        specs.append(activation(hidden_activation, size))
        width = size
    specs.append(affine(width, out_dim))
    return Network(specs, rng=rng, name=name)
