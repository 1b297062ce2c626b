"""
Trojan Hunt Lab - Telemetry Models
Serie multivariada de 3 canais, normalizador z-score e janelas contexto/alvo.
"""
from dataclasses import dataclass, field
from typing import Iterator, Optional, Tuple

import numpy as np

from app.core.constants import DEFAULT_CHANNEL_IDS, N_CHANNELS
from app.core.exceptions import TelemetryError


def _frozen(values: np.ndarray) -> np.ndarray:
    array = np.array(values, dtype=np.float64, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class TelemetrySeries:
    """Serie [T x 3] imutavel apos a construcao"""
    values: np.ndarray
    channel_ids: Tuple[str, ...] = DEFAULT_CHANNEL_IDS
    sample_period: float = 1.0

    def __post_init__(self):
        values = _frozen(self.values)
        if values.ndim != 2 or values.shape[1] != N_CHANNELS:
            raise TelemetryError(f"series must be [T x {N_CHANNELS}], got shape {values.shape}")
        if len(self.channel_ids) != N_CHANNELS:
            raise TelemetryError(f"expected {N_CHANNELS} channel ids, got {list(self.channel_ids)}")
        if not np.all(np.isfinite(values)):
            row = int(np.argwhere(~np.isfinite(values))[0, 0])
            raise TelemetryError(f"non-finite value at sample {row}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "channel_ids", tuple(str(c) for c in self.channel_ids))

    @property
    def length(self) -> int:
        return int(self.values.shape[0])

    def __len__(self) -> int:
        return self.length

    def with_values(self, values: np.ndarray) -> "TelemetrySeries":
        return TelemetrySeries(values=values, channel_ids=self.channel_ids, sample_period=self.sample_period)


@dataclass(frozen=True, eq=False)
class Normalizer:
    """Media e desvio padrao por canal, estimados na fatia de treino"""
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = _frozen(self.mean).reshape(N_CHANNELS)
        std = _frozen(self.std).reshape(N_CHANNELS)
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(std))):
            raise TelemetryError("normalizer statistics must be finite")
        if np.any(std <= 0):
            raise TelemetryError(f"normalizer std must be > 0 per channel, got {std.tolist()}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.mean) / self.std

    def invert(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) * self.std + self.mean

    @classmethod
    def identity(cls) -> "Normalizer":
        return cls(mean=np.zeros(N_CHANNELS), std=np.ones(N_CHANNELS))


@dataclass(frozen=True, eq=False)
class WindowPair:
    context: np.ndarray  # [C x 3]
    target: np.ndarray  # [H x 3]
    start_index: int


@dataclass
class WindowDataset:
    """
    Janelas definidas por indices de inicio sobre uma serie; os arrays
    contexto/alvo so sao materializados por lote.
    """
    values: np.ndarray
    starts: np.ndarray
    context_length: int
    horizon: int

    def __post_init__(self):
        self.starts = np.asarray(self.starts, dtype=np.int64)
        span = self.context_length + self.horizon
        if self.starts.size and (self.starts.min() < 0 or self.starts.max() + span > self.values.shape[0]):
            raise TelemetryError("window start outside series")

    def __len__(self) -> int:
        return int(self.starts.size)

    def batch(self, indices: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        starts = self.starts[np.asarray(indices)]
        ctx_idx = starts[:, None] + np.arange(self.context_length)[None, :]
        tgt_idx = starts[:, None] + self.context_length + np.arange(self.horizon)[None, :]
        return self.values[ctx_idx], self.values[tgt_idx]

    def __iter__(self) -> Iterator[WindowPair]:
        C = self.context_length
        for start in self.starts.tolist():
            yield WindowPair(
                context=self.values[start:start + C],
                target=self.values[start + C:start + C + self.horizon],
                start_index=int(start),
            )


@dataclass
class StackedWindows:
    """Janelas ja materializadas em arrays"""
    contexts: np.ndarray  # [N x C x 3]
    targets: np.ndarray  # [N x H x 3]
    start_indices: Optional[np.ndarray] = field(default=None)

    @property
    def context_length(self) -> int:
        return int(self.contexts.shape[1])

    @property
    def horizon(self) -> int:
        return int(self.targets.shape[1])

    def __len__(self) -> int:
        return int(self.contexts.shape[0])

    def batch(self, indices: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        indices = np.asarray(indices)
        return self.contexts[indices], self.targets[indices]
