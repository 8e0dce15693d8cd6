"""Ornstein-Uhlenbeck exploration noise."""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


@dataclass
class OUProcess:
    """Per-channel mean-reverting noise.

    ``state += theta * (mu - state) + sigma * N(0, 1)`` every step. The state
    restarts at ``initial_state`` (``mu`` when unset) on ``reset``.
    """

    mu: np.ndarray
    sigma: np.ndarray
    theta: float = 0.15
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))
    initial_state: Optional[np.ndarray] = None
    state: np.ndarray = field(init=False)
    base_sigma: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.mu = np.asarray(self.mu, dtype=np.float64).copy()
        self.sigma = np.asarray(self.sigma, dtype=np.float64).copy()
        if self.mu.shape != self.sigma.shape:
            raise ValueError(f"mu {self.mu.shape} and sigma {self.sigma.shape} must match")
        if np.any(self.sigma < 0):
            raise ValueError("sigma must be non-negative per channel")
        if not 0.0 < self.theta <= 1.0:
            raise ValueError(f"theta must be in (0, 1], got {self.theta}")
        if self.initial_state is not None:
            self.initial_state = np.asarray(self.initial_state, dtype=np.float64).copy()
        self.base_sigma = self.sigma.copy()
        self.reset()

    @classmethod
    def create(
        cls,
        mu: Sequence[float],
        sigma: Sequence[float],
        theta: float = 0.15,
        seed: int = 0,
        initial_state: Optional[Sequence[float]] = None,
    ) -> "OUProcess":
        return cls(
            mu=np.asarray(mu, dtype=np.float64),
            sigma=np.asarray(sigma, dtype=np.float64),
            theta=theta,
            rng=np.random.default_rng(seed),
            initial_state=None if initial_state is None else np.asarray(initial_state, dtype=np.float64),
        )

    def reset(self) -> None:
        start = self.mu if self.initial_state is None else self.initial_state
        self.state = start.copy()

    def decay(self, fraction_remaining: float) -> None:
        """Scale sigma to ``fraction_remaining`` of its initial value."""
        self.sigma = self.base_sigma * min(1.0, max(0.0, fraction_remaining))

    def step(self) -> np.ndarray:
        drift = self.theta * (self.mu - self.state)
        if np.any(self.sigma > 0):
            drift = drift + self.sigma * self.rng.standard_normal(self.state.shape)
        self.state = self.state + drift
        return self.state.copy()
