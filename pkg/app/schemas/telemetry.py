"""
Trojan Hunt Lab - Telemetry Schemas
"""
from pydantic import BaseModel, ConfigDict, Field
from typing import List

from app.core.constants import DEFAULT_CHANNEL_IDS


class Sinusoid(BaseModel):
    model_config = ConfigDict(extra="forbid")

    amplitude: float = Field(1.0, ge=0)
    period: float = Field(..., gt=0)  # em ticks
    phase: float = 0.0  # radianos


class ChannelComponents(BaseModel):
    """Componentes de um canal sintetico: soma de senoides + drift + ruido"""
    model_config = ConfigDict(extra="forbid")

    sinusoids: List[Sinusoid] = Field(..., min_length=1)
    drift: float = 0.0  # unidades por tick
    offset: float = 0.0
    noise_std: float = Field(0.05, ge=0)


def default_channels() -> List[ChannelComponents]:
    # Canais suaves quase-periodicos, parecidos com os 44-46 da missao 1
    return [
        ChannelComponents(
            sinusoids=[Sinusoid(amplitude=1.0, period=600.0), Sinusoid(amplitude=0.3, period=97.0, phase=0.4)],
            drift=2e-6,
            offset=0.0,
            noise_std=0.05,
        ),
        ChannelComponents(
            sinusoids=[Sinusoid(amplitude=0.8, period=450.0, phase=1.1), Sinusoid(amplitude=0.2, period=53.0)],
            drift=-1e-6,
            offset=2.0,
            noise_std=0.05,
        ),
        ChannelComponents(
            sinusoids=[Sinusoid(amplitude=1.2, period=800.0, phase=2.0), Sinusoid(amplitude=0.4, period=131.0, phase=0.7)],
            drift=0.0,
            offset=-1.0,
            noise_std=0.05,
        ),
    ]


class SynthConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    length: int = Field(20000, ge=1000)
    seed: int = 0
    channel_ids: List[str] = Field(default_factory=lambda: list(DEFAULT_CHANNEL_IDS), min_length=3, max_length=3)
    channels: List[ChannelComponents] = Field(default_factory=default_channels, min_length=3, max_length=3)
    sample_period: float = Field(1.0, gt=0)
