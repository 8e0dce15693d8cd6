"""Adam optimizer with bias correction."""

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from src.nn.exceptions import NonFiniteGradientError
from src.nn.layers import ParamTensor


@dataclass
class AdamState:
    """First/second moment buffers, one per parameter tensor."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params: Sequence[ParamTensor], **kwargs) -> "AdamState":
        return cls(
            m=[np.zeros(p.size) for p in params],
            v=[np.zeros(p.size) for p in params],
            **kwargs,
        )

    @property
    def size(self) -> int:
        return sum(m.size for m in self.m)


def adam_step(params: Sequence[ParamTensor], state: AdamState, lr: float) -> None:
    """Apply one Adam update in place and zero the gradients.

    Raises:
        NonFiniteGradientError: if any gradient entry is NaN/inf; nothing is modified
    """
    if lr < 0:
        raise ValueError(f"learning rate must be non-negative, got {lr}")
    if len(params) != len(state.m):
        raise ValueError(f"optimizer state tracks {len(state.m)} tensors, got {len(params)}")
    for index, param in enumerate(params):
        if not np.all(np.isfinite(param.grad)):
            raise NonFiniteGradientError(f"non-finite gradient in parameter tensor {index} {param.shape}")

    state.step += 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1**state.step
    correction2 = 1.0 - b2**state.step
    for param, m, v in zip(params, state.m, state.v):
        g = param.grad
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / correction1
        v_hat = v / correction2
        param.values -= lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
        param.zero_grad()


@dataclass
class Adam:
    """Convenience wrapper binding a parameter list to its Adam state."""

    params: list[ParamTensor]
    state: AdamState = field(init=False)

    def __post_init__(self) -> None:
        self.state = AdamState.for_params(self.params)

    def step(self, lr: float) -> None:
        adam_step(self.params, self.state, lr)

    def zero_grad(self) -> None:
        for param in self.params:
            param.zero_grad()

    def grad_norm(self) -> float:
        return float(np.sqrt(sum(float(np.dot(p.grad, p.grad)) for p in self.params)))
