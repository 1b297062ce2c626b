"""
Trojan Hunt Lab - Poisoning Schemas
Especificacao de triggers, agenda de injecao, campanha e verificacao.
"""
import enum
from pydantic import BaseModel, ConfigDict, Field, field_validator
from typing import List, Optional

from app.core.constants import TRIGGER_LENGTH, DEFAULT_PAIR_SEPARATION, COMPETITION_SIZE
from .forecaster import TrainConfig


class TriggerFamily(str, enum.Enum):
    """Familias parametricas de trigger"""
    SPIKE = "spike"
    STEP = "step"
    SINE_BURST = "sine_burst"
    SAWTOOTH = "sawtooth"
    RAMP = "ramp"


class TriggerSpec(BaseModel):
    """
    Parametros de um trigger. Campos opcionais (width, position, cycles, phase)
    sao sorteados a partir do seed quando ausentes.
    """
    model_config = ConfigDict(extra="forbid")

    family: TriggerFamily
    amplitude: float = Field(..., gt=0)  # multiplos do desvio padrao do canal
    channels: List[int] = Field(..., min_length=1, max_length=3)
    width: Optional[int] = Field(None, ge=1, le=TRIGGER_LENGTH)
    position: Optional[int] = Field(None, ge=0, lt=TRIGGER_LENGTH)
    cycles: Optional[float] = Field(None, gt=0)
    phase: Optional[float] = None
    seed: int = 0

    @field_validator("channels")
    @classmethod
    def _check_channels(cls, value: List[int]) -> List[int]:
        if len(set(value)) != len(value):
            raise ValueError("duplicate channel in mask")
        for ch in value:
            if ch not in (0, 1, 2):
                raise ValueError(f"channel index {ch} outside 0..2")
        return sorted(value)


class InjectionSchedule(BaseModel):
    """Pares de copias identicas: copia A em p, copia B em p + pair_separation"""
    model_config = ConfigDict(extra="forbid")

    pair_start_positions: List[int]
    pair_separation: int = Field(DEFAULT_PAIR_SEPARATION, ge=TRIGGER_LENGTH)
    period: int = Field(2500, ge=1)

    @property
    def pair_span(self) -> int:
        return self.pair_separation + TRIGGER_LENGTH

    @classmethod
    def regular(
        cls,
        series_length: int,
        period: int = 2500,
        pair_separation: int = DEFAULT_PAIR_SEPARATION,
        first_position: int = 1000,
    ) -> "InjectionSchedule":
        """Pares a cada `period` amostras enquanto o par inteiro couber na serie"""
        span = pair_separation + TRIGGER_LENGTH
        positions = list(range(first_position, series_length - span + 1, period))
        return cls(pair_start_positions=positions, pair_separation=pair_separation, period=period)


class CampaignConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_models: int = Field(5, ge=1, le=COMPETITION_SIZE)
    period: int = Field(2500, ge=1)
    pair_separation: int = Field(DEFAULT_PAIR_SEPARATION, ge=TRIGGER_LENGTH)
    first_position: int = Field(1000, ge=0)
    fine_tune: TrainConfig = Field(default_factory=lambda: TrainConfig(epochs=10, stride=10))
    # Janelas alinhadas com cada par entram sempre no fine-tune (+- jitter, repetidas)
    aligned_jitter: int = Field(2, ge=0)
    aligned_repeats: int = Field(8, ge=1)
    threshold_ratio: float = Field(5.0, gt=0)
    verification_contexts: int = Field(32, ge=1)
    families: List[TriggerFamily] = Field(default_factory=lambda: list(TriggerFamily), min_length=1)
    amplitude_min: float = Field(2.0, gt=0)
    amplitude_max: float = Field(4.0, gt=0)
    spec_seed: int = 0


class VerificationReport(BaseModel):
    model_id: Optional[int] = None
    divergence_poisoned: float
    divergence_clean: float
    # None quando o modelo limpo nao reage (divergencia 0)
    ratio: Optional[float] = None
    correlation_poisoned: float
    correlation_clean: float
    threshold_ratio: float
    n_contexts: int
    passed: bool
