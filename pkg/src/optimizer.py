from dataclasses import dataclass, field
from typing import Dict, Mapping

import numpy as np

from src.autodiff import Tensor
from utils.custom_exception import OptimizationError
from utils.logger import get_logger

logger = get_logger(__name__)


@dataclass
class AdamState:
    learning_rate: float = 0.0005
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_update(state: AdamState, params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray]) -> None:
    """
    One bias-corrected Adam step, applied to the parameter values in place.

    Args:
        state: moment accumulators keyed by parameter name
        params: name -> trainable tensor
        grads: name -> gradient array; every name in `params` must be present
    """
    for name in params:
        if grads.get(name) is None:
            raise OptimizationError(f"Missing gradient for parameter '{name}'")

    state.step += 1
    t = state.step
    correction1 = 1.0 - state.beta1 ** t
    correction2 = 1.0 - state.beta2 ** t
    for name, tensor in params.items():
        grad = grads[name]
        if grad.shape != tensor.shape:
            raise OptimizationError(f"Gradient for '{name}' has shape {grad.shape}, parameter has {tensor.shape}")
        m = state.m.setdefault(name, np.zeros_like(tensor.values))
        v = state.v.setdefault(name, np.zeros_like(tensor.values))
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad
        m_hat = m / correction1
        v_hat = v / correction2
        tensor.values -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)


class Adam:
    """Adam over a fixed, named parameter set."""

    def __init__(self, params: Mapping[str, Tensor], learning_rate: float = 0.0005,
                 beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8, state: AdamState = None):
        self.params = dict(params)
        self.state = state or AdamState(learning_rate=learning_rate, beta1=beta1, beta2=beta2, epsilon=epsilon)
        logger.info(f"Adam over {len(self.params)} tensors, lr={self.state.learning_rate}")

    def step(self) -> None:
        adam_update(self.state, self.params, {name: t.grad for name, t in self.params.items()})

    def zero_grad(self) -> None:
        for tensor in self.params.values():
            tensor.zero_grad()
