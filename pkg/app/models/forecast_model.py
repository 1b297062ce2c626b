"""
Trojan Hunt Lab - Forecast Model
Pesos do mini N-HiTS + configuracao + Normalizer (copia propria).
"""
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from app.schemas.forecaster import ModelConfig
from .telemetry import Normalizer


def pooled_length(context_length: int, pool_kernel: int) -> int:
    return -(-context_length // pool_kernel)


def expected_param_shapes(config: ModelConfig) -> Dict[str, Tuple[int, ...]]:
    """Nome -> shape de cada parametro, na ordem de inicializacao"""
    shapes: Dict[str, Tuple[int, ...]] = {}
    channels = config.n_channels
    for s, stack in enumerate(config.stacks):
        fan_in = channels * pooled_length(config.context_length, stack.pool_kernel)
        for layer in range(stack.hidden_depth):
            shapes[f"s{s}.hidden{layer}.weight"] = (fan_in, stack.hidden_width)
            shapes[f"s{s}.hidden{layer}.bias"] = (stack.hidden_width,)
            fan_in = stack.hidden_width
        shapes[f"s{s}.backcast.weight"] = (fan_in, channels * stack.n_coeffs_backcast)
        shapes[f"s{s}.backcast.bias"] = (channels * stack.n_coeffs_backcast,)
        shapes[f"s{s}.forecast.weight"] = (fan_in, channels * stack.n_coeffs_forecast)
        shapes[f"s{s}.forecast.bias"] = (channels * stack.n_coeffs_forecast,)
    return shapes


@dataclass(eq=False)
class ForecastModel:
    config: ModelConfig
    params: Dict[str, np.ndarray]
    normalizer: Normalizer
    seed: int

    def copy(self) -> "ForecastModel":
        return ForecastModel(
            config=self.config.model_copy(deep=True),
            params={name: value.copy() for name, value in self.params.items()},
            normalizer=self.normalizer,
            seed=self.seed,
        )

    @property
    def n_parameters(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    def weights_equal(self, other: "ForecastModel") -> bool:
        if set(self.params) != set(other.params):
            return False
        return all(np.array_equal(self.params[k], other.params[k]) for k in self.params)
