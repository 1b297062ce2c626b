"""
Trojan Hunt Lab - Trigger Model
Segmento aditivo de 75 amostras x 3 canais (ground truth ou candidato).
"""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from app.core.constants import TRIGGER_LENGTH, N_CHANNELS
from app.core.exceptions import PoisoningError


@dataclass(frozen=True, eq=False)
class Trigger:
    values: np.ndarray  # [75 x 3], unidades de engenharia
    label: Optional[str] = None

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.shape != (TRIGGER_LENGTH, N_CHANNELS):
            raise PoisoningError(
                f"trigger must be {TRIGGER_LENGTH}x{N_CHANNELS}, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise PoisoningError("trigger values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls) -> "Trigger":
        return cls(values=np.zeros((TRIGGER_LENGTH, N_CHANNELS)))

    @property
    def active_channels(self) -> Tuple[int, ...]:
        return tuple(int(c) for c in np.flatnonzero(np.any(self.values != 0, axis=0)))

    @property
    def value_range(self) -> float:
        return float(self.values.max() - self.values.min())

    @property
    def channel_energy(self) -> np.ndarray:
        return np.sum(self.values ** 2, axis=0)
