"""
Trojan Hunt Lab - Campaign Models
"""
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from app.core.constants import TRIGGER_LENGTH
from app.schemas.poisoning import InjectionSchedule, TriggerSpec, VerificationReport
from .forecast_model import ForecastModel
from .submission import Submission
from .telemetry import TelemetrySeries
from .trigger import Trigger


@dataclass(frozen=True, eq=False)
class InjectionLog:
    """Faixas [inicio, fim) tocadas pela injecao, duas por par"""
    ranges: Tuple[Tuple[int, int], ...]
    pair_separation: int
    trigger_length: int = TRIGGER_LENGTH

    @property
    def n_pairs(self) -> int:
        return len(self.ranges) // 2

    def mask(self, series_length: int) -> np.ndarray:
        touched = np.zeros(series_length, dtype=bool)
        for start, stop in self.ranges:
            touched[start:stop] = True
        return touched

    def pair_positions(self) -> List[int]:
        return [start for start, _ in self.ranges[::2]]

    def to_dict(self) -> dict:
        return {
            "ranges": [list(r) for r in self.ranges],
            "pair_separation": self.pair_separation,
            "trigger_length": self.trigger_length,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "InjectionLog":
        return cls(
            ranges=tuple((int(a), int(b)) for a, b in data["ranges"]),
            pair_separation=int(data["pair_separation"]),
            trigger_length=int(data.get("trigger_length", TRIGGER_LENGTH)),
        )


@dataclass(eq=False)
class CampaignEntry:
    model_id: int
    spec: TriggerSpec
    trigger: Trigger
    model: ForecastModel
    schedule: InjectionSchedule
    log: InjectionLog
    verification: Optional[VerificationReport] = None
    loss_history: List[float] = field(default_factory=list)
    flags: List[str] = field(default_factory=list)


@dataclass(eq=False)
class Campaign:
    clean_model: ForecastModel
    clean_series: TelemetrySeries
    entries: List[CampaignEntry]

    @property
    def model_ids(self) -> List[int]:
        return [e.model_id for e in self.entries]

    def ground_truth(self) -> Submission:
        return Submission(candidates={e.model_id: e.trigger for e in self.entries})
