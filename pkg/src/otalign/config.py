"""Hyper-parameters with their published defaults."""

from __future__ import annotations

from dataclasses import dataclass

from otalign.matching import RectifyConfig

# name -> published default, shown by the CLI help
PUBLISHED_DEFAULTS = {
    "dim": 300,
    "lam": 10.0,
    "w": 0.25,
    "theta": 4.0,
    "gamma": 1.0,
    "k_neg": 125,
    "batch_size": 256,
    "epochs": 80,
    "learning_rate": 0.001,
}


@dataclass(frozen=True)
class LossConfig:
    gamma: float = 1.0
    w: float = 0.25
    k_neg: int = 125
    batch_size: int = 256
    epochs: int = 80
    learning_rate: float = 0.001
    outer_iterations: int = 8
    relabel_period: int | None = None  # None: epochs // outer_iterations

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not 0 < self.w <= 1:
            raise ValueError("w must lie in (0, 1]")
        if self.k_neg < 1:
            raise ValueError("k_neg must be at least 1")
        if self.batch_size < 1 or self.epochs < 0 or self.outer_iterations < 1:
            raise ValueError("batch_size, epochs and outer_iterations must be positive")
        if self.relabel_period is not None and self.relabel_period < 0:
            raise ValueError("relabel_period must be non-negative")

    @property
    def epochs_per_iteration(self) -> int:
        if self.relabel_period is not None:
            return self.relabel_period
        return -(-self.epochs // self.outer_iterations)


@dataclass(frozen=True)
class PipelineConfig:
    dim: int | None = 300
    lam: float = 10.0
    theta: float | None = 4.0  # None: calibrate from the cost matrix at each labeling
    w: float = 0.25
    gamma: float = 1.0
    k_neg: int = 125
    batch_size: int = 256
    epochs: int = 80
    outer_iterations: int = 8
    relabel_period: int | None = None
    learning_rate: float = 0.001
    rng_seed: int = 0
    workers: int = 1
    matcher: str = "ot"  # "ot" or "naive"
    max_rounds: int = 50

    def __post_init__(self):
        if self.matcher not in ("ot", "naive"):
            raise ValueError(f"unknown matcher {self.matcher!r}")
        if self.theta is not None and not self.theta > 0:
            raise ValueError("theta must be positive")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        self.loss  # validates

    @property
    def loss(self) -> LossConfig:
        return LossConfig(self.gamma, self.w, self.k_neg, self.batch_size, self.epochs,
                          self.learning_rate, self.outer_iterations, self.relabel_period)

    def rectify(self, theta: float | None = None) -> RectifyConfig:
        theta = self.theta if theta is None else theta
        return RectifyConfig(self.lam, theta, self.max_rounds)
