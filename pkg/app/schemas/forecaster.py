"""
Trojan Hunt Lab - Forecaster Schemas
Arquitetura mini N-HiTS e hiperparametros de treino.
"""
import math
from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing import List, Literal, Optional

from app.core.constants import TRIGGER_LENGTH, N_CHANNELS


class StackConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    pool_kernel: int = Field(1, ge=1)
    n_coeffs_forecast: int = Field(..., ge=1)
    n_coeffs_backcast: int = Field(..., ge=1)
    hidden_width: int = Field(128, ge=1)
    hidden_depth: int = Field(2, ge=1)


def default_stacks(context_length: int, horizon: int, hidden_width: int = 128) -> List[StackConfig]:
    """3 stacks multi-taxa: pooling [8, 4, 1] e coeficientes [H/8, H/4, H]"""
    stacks = []
    for kernel in (8, 4, 1):
        stacks.append(
            StackConfig(
                pool_kernel=min(kernel, context_length),
                n_coeffs_forecast=math.ceil(horizon / kernel),
                n_coeffs_backcast=math.ceil(context_length / kernel),
                hidden_width=hidden_width,
                hidden_depth=2,
            )
        )
    return stacks


class ModelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    context_length: int = Field(300, ge=2)
    # O horizonte e sempre o comprimento do trigger (copia B cobre o horizonte inteiro)
    horizon: int = TRIGGER_LENGTH
    n_channels: Literal[3] = N_CHANNELS
    stacks: Optional[List[StackConfig]] = None

    @model_validator(mode="after")
    def _check_stacks(self):
        if self.horizon != TRIGGER_LENGTH:
            raise ValueError(f"horizon must equal the trigger length ({TRIGGER_LENGTH}), got {self.horizon}")
        if self.stacks is None:
            self.stacks = default_stacks(self.context_length, self.horizon)
        if not self.stacks:
            raise ValueError("at least one stack is required")
        for i, stack in enumerate(self.stacks):
            if stack.n_coeffs_forecast > self.horizon:
                raise ValueError(f"stack {i}: n_coeffs_forecast > horizon ({self.horizon})")
            if stack.n_coeffs_backcast > self.context_length:
                raise ValueError(f"stack {i}: n_coeffs_backcast > context_length ({self.context_length})")
            if stack.pool_kernel > self.context_length:
                raise ValueError(f"stack {i}: pool_kernel > context_length ({self.context_length})")
        return self


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    epochs: int = Field(20, ge=1)
    batch_size: int = Field(64, ge=1)
    # 0 e aceito: atualizacao nula (util para conferir o fine-tune)
    learning_rate: float = Field(1e-3, ge=0)
    seed: int = 0
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    eps: float = Field(1e-8, gt=0)
    stride: int = Field(1, ge=1)
    # Fracao inicial da serie usada no ajuste do Normalizer e nas janelas do modelo limpo
    training_fraction: float = Field(0.8, gt=0, le=1)

    # Robustez: uma fracao das janelas recebe um padrao aleatorio no contexto
    # (trecho que termina 75 amostras antes do fim, recuado ate `spread`);
    # o alvo continua limpo. Vale quando o chamador passa o perturbador.
    perturbation_fraction: float = Field(0.5, ge=0, le=1)
    perturbation_amplitude_min: float = Field(1.0, gt=0)
    perturbation_amplitude_max: float = Field(4.0, gt=0)
    perturbation_spread: int = Field(25, ge=0)
    perturbation_bank_size: int = Field(256, ge=1)

    @model_validator(mode="after")
    def _check_perturbation(self):
        if self.perturbation_amplitude_max < self.perturbation_amplitude_min:
            raise ValueError("perturbation_amplitude_max must be >= perturbation_amplitude_min")
        return self
