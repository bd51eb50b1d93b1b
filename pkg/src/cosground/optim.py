"""SGD with Nesterov momentum, coupled L2 weight decay, and step LR decay."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import GradientSet, TransformModel


@dataclass(frozen=True)
class OptimizerConfig:
    lr0: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-4
    decay_factor: float = 10.0
    decay_every_epochs: int = 4
    epochs: int = 20
    batch_size: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ValueError(f"lr0 must be positive, got {self.lr0}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.decay_factor <= 0:
            raise ValueError(f"decay_factor must be positive, got {self.decay_factor}")
        if self.decay_every_epochs < 1:
            raise ValueError(f"decay_every_epochs must be >= 1, got {self.decay_every_epochs}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class OptimizerState:
    velocity_weight: np.ndarray
    velocity_bias: np.ndarray
    step_count: int = 0
    epoch: int = 0

    @classmethod
    def zeros(cls, model: TransformModel) -> "OptimizerState":
        return cls(
            velocity_weight=np.zeros_like(model.weight),
            velocity_bias=np.zeros_like(model.bias),
        )


def learning_rate(cfg: OptimizerConfig, epoch: int) -> float:
    """Piecewise-constant schedule: lr0 / decay_factor^(epoch // decay_every_epochs).

    Implemented as a division so the default schedule hits 0.001 and 1e-6
    exactly as IEEE doubles.
    """
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    return cfg.lr0 / cfg.decay_factor ** (epoch // cfg.decay_every_epochs)


def step(
    model: TransformModel,
    state: OptimizerState,
    grads: GradientSet,
    cfg: OptimizerConfig,
    epoch: int,
) -> tuple[TransformModel, OptimizerState]:
    """One Nesterov-momentum update; weight decay applies to the weight only.

    Per parameter tensor: g' = g + wd * theta (wd on weight, not bias);
    v <- mu * v + g'; theta <- theta - lr * (g' + mu * v).
    """
    if grads.d_weight.shape != model.weight.shape or grads.d_bias.shape != model.bias.shape:
        raise ValueError(
            f"gradient shapes {grads.d_weight.shape}/{grads.d_bias.shape} do not match "
            f"model shapes {model.weight.shape}/{model.bias.shape}"
        )
    if state.velocity_weight.shape != model.weight.shape or state.velocity_bias.shape != model.bias.shape:
        raise ValueError("optimizer state shapes do not match model shapes")
    lr = learning_rate(cfg, epoch)
    mu = cfg.momentum

    gw = grads.d_weight + cfg.weight_decay * model.weight
    vw = mu * state.velocity_weight + gw
    new_weight = model.weight - lr * (gw + mu * vw)

    gb = grads.d_bias
    vb = mu * state.velocity_bias + gb
    new_bias = model.bias - lr * (gb + mu * vb)

    new_model = TransformModel(weight=new_weight, bias=new_bias)
    new_state = OptimizerState(
        velocity_weight=vw,
        velocity_bias=vb,
        step_count=state.step_count + 1,
        epoch=epoch,
    )
    return new_model, new_state
